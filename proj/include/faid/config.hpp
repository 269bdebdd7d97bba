#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include "faid/campaign.hpp"
#include "faid/geometry.hpp"
#include "faid/litho.hpp"
#include "faid/pipeline.hpp"

namespace faid {

enum class LithoKind { Identity, Gaussian, External };

/// Parsed run configuration. The file is line oriented, `section.key = value`
/// with `#` comments; unknown or repeated keys are errors. Feature-scale
/// lengths are in nm and domain-scale lengths in um, as the key suffix says.
struct RunConfig {
  DeviceKind device_kind = DeviceKind::Straight;
  DeviceOptions device;
  double dx = 0.02;  // um
  PmlOptions pml;
  Materials materials;
  std::vector<double> wavelengths;  // um

  LithoKind litho_kind = LithoKind::Identity;
  GaussianThresholdParams gaussian;
  ExternalPredictorConfig external;

  RunOptions run;
  double p0_jitter = 0.0;  // fraction of each bound range, seeded
  std::filesystem::path output_dir = "out";
  std::uint64_t seed = 0;
  int threads = 1;

  double gradcheck_threshold = 0.01;
  double gradcheck_h = 1e-3;  // um

  /// Canonical key = value pairs after defaults and overrides.
  std::map<std::string, std::string> entries;

  /// Hash of every entry that can change results (not output.dir or
  /// run.threads).
  std::uint64_t fingerprint() const;
};

/// Throws ConfigError naming the key at fault.
RunConfig parse_config(std::string_view text);
RunConfig load_config(const std::filesystem::path &path);

/// Re-parses after replacing or adding `key = value`.
RunConfig with_override(const RunConfig &cfg, const std::string &key, const std::string &value);

std::shared_ptr<const LithoModel> make_litho(const RunConfig &cfg);
Pipeline make_pipeline(const RunConfig &cfg);
/// Mid-bounds start, optionally jittered inside the box with run.seed.
DesignParams initial_params(const RunConfig &cfg, const DeviceSpec &device);

/// Every accepted key, for error messages and docs.
const std::vector<std::string> &config_keys();

}  // namespace faid
