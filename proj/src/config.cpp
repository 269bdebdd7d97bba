#include "faid/config.hpp"

#include <charconv>
#include <cmath>
#include <functional>
#include <random>

#include <fmt/format.h>

#include "faid/errors.hpp"
#include "faid/grid_io.hpp"

namespace faid {

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r'))
    s.remove_suffix(1);
  return s;
}

double to_double(const std::string &key, std::string_view v) {
  double out = 0.0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size() || !std::isfinite(out))
    throw ConfigError(key, fmt::format("expected a number, got '{}'", v));
  return out;
}

long long to_int(const std::string &key, std::string_view v) {
  long long out = 0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size())
    throw ConfigError(key, fmt::format("expected an integer, got '{}'", v));
  return out;
}

int to_count(const std::string &key, std::string_view v, long long min) {
  const long long n = to_int(key, v);
  if (n < min || n > 1'000'000) throw ConfigError(key, fmt::format("must be >= {}", min));
  return static_cast<int>(n);
}

double positive(const std::string &key, double v) {
  if (!(v > 0.0)) throw ConfigError(key, "must be > 0");
  return v;
}

std::vector<double> to_list(const std::string &key, std::string_view v) {
  std::vector<double> out;
  while (!v.empty()) {
    const auto comma = v.find(',');
    out.push_back(to_double(key, trim(v.substr(0, comma))));
    if (comma == std::string_view::npos) break;
    v.remove_prefix(comma + 1);
  }
  if (out.empty()) throw ConfigError(key, "empty list");
  return out;
}

using Setter = std::function<void(RunConfig &, const std::string &, std::string_view)>;

Setter nm(double DeviceOptions::*field) {
  return [field](RunConfig &c, const std::string &k, std::string_view v) {
    c.device.*field = to_double(k, v) * 1e-3;
  };
}
Setter um(double DeviceOptions::*field) {
  return [field](RunConfig &c, const std::string &k, std::string_view v) {
    c.device.*field = positive(k, to_double(k, v));
  };
}
Setter count(int DeviceOptions::*field, long long min) {
  return [field, min](RunConfig &c, const std::string &k, std::string_view v) {
    c.device.*field = to_count(k, v, min);
  };
}

struct Sweep {
  double start = 0, stop = 0, step = 0;
  int set = 0;
};

// Keys applied in this order; presets come before the values they seed.
const std::vector<std::pair<std::string, Setter>> &setters() {
  static const std::vector<std::pair<std::string, Setter>> table = {
    { "device.kind",
      [](RunConfig &c, const std::string &, std::string_view v) {
        c.device_kind = device_kind_from_string(std::string(v));
      } },
    { "device.min_feature_nm", nm(&DeviceOptions::min_feature) },
    { "device.lead_length_um", um(&DeviceOptions::lead_length) },
    { "device.clearance_um", um(&DeviceOptions::clearance) },
    { "device.strip_width_um", um(&DeviceOptions::strip_width) },
    { "device.ybranch_controls", count(&DeviceOptions::ybranch_controls, 2) },
    { "device.taper_length_um", um(&DeviceOptions::taper_length) },
    { "device.junction_width_um", um(&DeviceOptions::junction_width) },
    { "device.arm_gap_um", um(&DeviceOptions::arm_gap) },
    { "device.sbend_length_um", um(&DeviceOptions::sbend_length) },
    { "device.arm_pitch_um", um(&DeviceOptions::arm_pitch) },
    { "device.boundary_bound_nm", nm(&DeviceOptions::boundary_bound) },
    { "device.swg_teeth", count(&DeviceOptions::swg_teeth, 1) },
    { "device.swg_bridge_controls", count(&DeviceOptions::swg_bridge_controls, 3) },
    { "device.swg_period_nm", nm(&DeviceOptions::swg_period) },
    { "device.tooth_width_min_nm", nm(&DeviceOptions::tooth_width_min) },
    { "device.tooth_width_max_nm", nm(&DeviceOptions::tooth_width_max) },
    { "device.tooth_length_min_nm", nm(&DeviceOptions::tooth_length_min) },
    { "device.tooth_length_max_nm", nm(&DeviceOptions::tooth_length_max) },
    { "device.bridge_center_half_width_nm", nm(&DeviceOptions::bridge_center_half_width) },
    { "device.bridge_bound_nm", nm(&DeviceOptions::bridge_bound) },
    { "device.straight_section_um", um(&DeviceOptions::straight_section) },
    { "device.straight_bound_nm", nm(&DeviceOptions::straight_bound) },

    { "grid.dx_nm",
      [](RunConfig &c, const std::string &k, std::string_view v) {
        c.dx = positive(k, to_double(k, v)) * 1e-3;
      } },
    { "grid.pml_cells",
      [](RunConfig &c, const std::string &k, std::string_view v) {
        c.pml.cells = to_count(k, v, 8);
      } },
    { "grid.pml_strength",
      [](RunConfig &c, const std::string &k, std::string_view v) {
        c.pml.strength = positive(k, to_double(k, v));
      } },

    { "materials.n_core",
      [](RunConfig &c, const std::string &k, std::string_view v) {
        c.materials.n_core = positive(k, to_double(k, v));
      } },
    { "materials.n_clad",
      [](RunConfig &c, const std::string &k, std::string_view v) {
        c.materials.n_clad = positive(k, to_double(k, v));
      } },

    { "wavelengths.list_um",
      [](RunConfig &c, const std::string &k, std::string_view v) {
        c.wavelengths = to_list(k, v);
        for (double w : c.wavelengths) positive(k, w);
      } },
    // The three sweep keys are collected by parse_config.
    { "wavelengths.sweep_start_um", nullptr },
    { "wavelengths.sweep_stop_um", nullptr },
    { "wavelengths.sweep_step_nm", nullptr },

    { "litho.model",
      [](RunConfig &c, const std::string &k, std::string_view v) {
        if (v == "identity")
          c.litho_kind = LithoKind::Identity;
        else if (v == "gaussian")
          c.litho_kind = LithoKind::Gaussian;
        else if (v == "external")
          c.litho_kind = LithoKind::External;
        else
          throw ConfigError(k, fmt::format("unknown model '{}' (identity, gaussian, external)", v));
      } },
    { "litho.preset",
      [](RunConfig &c, const std::string &k, std::string_view v) {
        if (v == "duv")
          c.gaussian = GaussianThresholdParams::duv_like();
        else if (v == "ebl")
          c.gaussian = GaussianThresholdParams::ebl_like();
        else
          throw ConfigError(k, fmt::format("unknown preset '{}' (duv, ebl)", v));
      } },
    { "litho.sigma_nm",
      [](RunConfig &c, const std::string &k, std::string_view v) {
        c.gaussian.sigma = to_double(k, v) * 1e-3;
      } },
    { "litho.eta",
      [](RunConfig &c, const std::string &k, std::string_view v) {
        c.gaussian.eta = to_double(k, v);
      } },
    { "litho.beta",
      [](RunConfig &c, const std::string &k, std::string_view v) {
        c.gaussian.beta = to_double(k, v);
      } },
    { "litho.eta_shift",
      [](RunConfig &c, const std::string &k, std::string_view v) {
        c.gaussian.eta_shift = to_double(k, v);
      } },
    { "litho.command",
      [](RunConfig &c, const std::string &, std::string_view v) {
        c.external.command = std::string(v);
      } },
    { "litho.timeout_s",
      [](RunConfig &c, const std::string &k, std::string_view v) {
        c.external.timeout = std::chrono::milliseconds(
            static_cast<long long>(std::llround(positive(k, to_double(k, v)) * 1000.0)));
      } },
    { "litho.exchange_dir",
      [](RunConfig &c, const std::string &, std::string_view v) {
        c.external.exchange_dir = std::string(v);
      } },

    { "optimizer.max_iterations",
      [](RunConfig &c, const std::string &k, std::string_view v) {
        c.run.optimizer.max_iterations = to_count(k, v, 1);
      } },
    { "optimizer.history",
      [](RunConfig &c, const std::string &k, std::string_view v) {
        c.run.optimizer.history = to_count(k, v, 1);
      } },
    { "optimizer.grad_tol",
      [](RunConfig &c, const std::string &k, std::string_view v) {
        c.run.optimizer.grad_tol = to_double(k, v);
      } },
    { "optimizer.initial_step_nm",
      [](RunConfig &c, const std::string &k, std::string_view v) {
        c.run.optimizer.initial_step = positive(k, to_double(k, v)) * 1e-3;
      } },
    { "optimizer.c1",
      [](RunConfig &c, const std::string &k, std::string_view v) {
        c.run.optimizer.c1 = to_double(k, v);
      } },
    { "optimizer.max_line_search",
      [](RunConfig &c, const std::string &k, std::string_view v) {
        c.run.optimizer.max_line_search = to_count(k, v, 1);
      } },
    { "optimizer.fd_step_nm",
      [](RunConfig &c, const std::string &k, std::string_view v) {
        c.run.fd_step = positive(k, to_double(k, v)) * 1e-3;
      } },
    { "optimizer.p0_jitter",
      [](RunConfig &c, const std::string &k, std::string_view v) {
        c.p0_jitter = to_double(k, v);
        if (!(c.p0_jitter >= 0.0 && c.p0_jitter <= 0.5)) throw ConfigError(k, "must lie in [0, 0.5]");
      } },

    { "output.dir",
      [](RunConfig &c, const std::string &, std::string_view v) {
        c.output_dir = std::string(v);
      } },
    { "run.seed",
      [](RunConfig &c, const std::string &k, std::string_view v) {
        const long long s = to_int(k, v);
        if (s < 0) throw ConfigError(k, "must be >= 0");
        c.seed = static_cast<std::uint64_t>(s);
      } },
    { "run.threads",
      [](RunConfig &c, const std::string &k, std::string_view v) {
        c.threads = to_count(k, v, 1);
      } },

    { "gradcheck.threshold",
      [](RunConfig &c, const std::string &k, std::string_view v) {
        c.gradcheck_threshold = positive(k, to_double(k, v));
      } },
    { "gradcheck.h_nm",
      [](RunConfig &c, const std::string &k, std::string_view v) {
        c.gradcheck_h = positive(k, to_double(k, v)) * 1e-3;
      } },
  };
  return table;
}

const char *kRequired[] = { "device.kind", "grid.dx_nm", "litho.model" };

std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

}  // namespace

const std::vector<std::string> &config_keys() {
  static const std::vector<std::string> keys = [] {
    std::vector<std::string> k;
    for (const auto &[name, _] : setters()) k.push_back(name);
    return k;
  }();
  return keys;
}

std::uint64_t RunConfig::fingerprint() const {
  std::string canon;
  for (const auto &[k, v] : entries) {
    if (k == "output.dir" || k == "run.threads") continue;
    canon += k;
    canon += '=';
    canon += v;
    canon += '\n';
  }
  return fnv1a(canon);
}

RunConfig parse_config(std::string_view text) {
  std::map<std::string, std::string> raw;
  std::size_t line_no = 0;
  while (!text.empty()) {
    const auto nl = text.find('\n');
    std::string_view line = text.substr(0, nl);
    text.remove_prefix(nl == std::string_view::npos ? text.size() : nl + 1);
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string_view::npos)
      line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos)
      throw ConfigError("", fmt::format("line {}: expected 'section.key = value'", line_no));
    const std::string key(trim(line.substr(0, eq)));
    const std::string value(trim(line.substr(eq + 1)));
    if (key.find('.') == std::string::npos)
      throw ConfigError(key, fmt::format("line {}: keys have the form section.key", line_no));
    const auto &keys = config_keys();
    if (std::find(keys.begin(), keys.end(), key) == keys.end())
      throw ConfigError(key, fmt::format("line {}: unknown key", line_no));
    if (value.empty()) throw ConfigError(key, fmt::format("line {}: empty value", line_no));
    if (!raw.emplace(key, value).second)
      throw ConfigError(key, fmt::format("line {}: key given twice", line_no));
  }
  for (const char *k : kRequired)
    if (!raw.count(k)) throw ConfigError(k, "required key is missing");

  RunConfig cfg;
  cfg.entries = raw;
  for (const auto &[key, set] : setters()) {
    const auto it = raw.find(key);
    if (it != raw.end() && set) set(cfg, key, it->second);
  }

  Sweep sweep;
  for (const char *k : { "wavelengths.sweep_start_um", "wavelengths.sweep_stop_um",
                         "wavelengths.sweep_step_nm" })
    if (raw.count(k)) ++sweep.set;
  if (sweep.set != 0 && sweep.set != 3)
    throw ConfigError("wavelengths.sweep_start_um",
                      "a sweep needs sweep_start_um, sweep_stop_um and sweep_step_nm");
  if (sweep.set == 3) {
    if (raw.count("wavelengths.list_um"))
      throw ConfigError("wavelengths.list_um", "give either a list or a sweep, not both");
    sweep.start = positive("wavelengths.sweep_start_um",
                           to_double("wavelengths.sweep_start_um", raw["wavelengths.sweep_start_um"]));
    sweep.stop = to_double("wavelengths.sweep_stop_um", raw["wavelengths.sweep_stop_um"]);
    sweep.step = positive("wavelengths.sweep_step_nm",
                          to_double("wavelengths.sweep_step_nm", raw["wavelengths.sweep_step_nm"]))
                 * 1e-3;
    if (sweep.stop < sweep.start)
      throw ConfigError("wavelengths.sweep_stop_um", "must not be below sweep_start_um");
    const auto n = static_cast<int>(std::floor((sweep.stop - sweep.start) / sweep.step + 1e-9)) + 1;
    if (n > 10'000) throw ConfigError("wavelengths.sweep_step_nm", "sweep has too many samples");
    for (int i = 0; i < n; ++i)
      cfg.wavelengths.push_back(std::round((sweep.start + i * sweep.step) * 1e9) / 1e9);
  }
  if (cfg.wavelengths.empty())
    throw ConfigError("wavelengths.list_um", "required key is missing (or give a sweep)");

  cfg.gaussian.validate();
  cfg.run.optimizer.validate();
  if (cfg.litho_kind == LithoKind::External && cfg.external.command.empty())
    throw ConfigError("litho.command", "required when litho.model = external");
  if (cfg.materials.n_core <= cfg.materials.n_clad)
    throw ConfigError("materials.n_core", "must exceed materials.n_clad");
  return cfg;
}

RunConfig load_config(const std::filesystem::path &path) {
  std::string text;
  try {
    text = read_file(path);
  } catch (const Error &e) {
    throw ConfigError("", fmt::format("cannot read config '{}': {}", path.string(), e.what()));
  }
  return parse_config(text);
}

RunConfig with_override(const RunConfig &cfg, const std::string &key, const std::string &value) {
  auto entries = cfg.entries;
  entries[key] = value;
  std::string text;
  for (const auto &[k, v] : entries) text += k + " = " + v + "\n";
  return parse_config(text);
}

std::shared_ptr<const LithoModel> make_litho(const RunConfig &cfg) {
  switch (cfg.litho_kind) {
    case LithoKind::Identity: return std::make_shared<IdentityLitho>();
    case LithoKind::Gaussian: return std::make_shared<GaussianThresholdLitho>(cfg.gaussian);
    case LithoKind::External: return std::make_shared<ExternalLitho>(cfg.external);
  }
  throw ConfigError("litho.model", "unknown model");
}

Pipeline make_pipeline(const RunConfig &cfg) {
  Pipeline p;
  p.device = make_device(cfg.device_kind, cfg.device, cfg.dx, cfg.pml.cells);
  p.litho = make_litho(cfg);
  p.materials = cfg.materials;
  p.wavelengths = cfg.wavelengths;
  p.pml = cfg.pml;
  p.threads = cfg.threads;
  p.validate();
  return p;
}

DesignParams initial_params(const RunConfig &cfg, const DeviceSpec &device) {
  DesignParams p = device.initial;
  if (cfg.p0_jitter > 0.0) {
    std::mt19937_64 rng(cfg.seed);
    for (std::size_t i = 0; i < p.size(); ++i) {
      // Uniform in [-1, 1) from the raw engine output, so the sequence does
      // not depend on the standard library's distribution implementation.
      const double u = static_cast<double>(rng() >> 11) * 0x1.0p-53 * 2.0 - 1.0;
      p.values[i] += u * cfg.p0_jitter * (p.upper[i] - p.lower[i]);
      p.values[i] = std::clamp(p.values[i], p.lower[i], p.upper[i]);
    }
  }
  return p;
}

}  // namespace faid
