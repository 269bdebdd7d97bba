#pragma once

#include <chrono>
#include <filesystem>
#include <memory>
#include <mutex>
#include <string>

#include "faid/grid.hpp"

namespace faid {

/// Lithography prediction g: drawn mask -> predicted geometry.
class LithoModel {
 public:
  virtual ~LithoModel() = default;

  virtual DensityGrid predict(const DensityGrid &mask) const = 0;
  virtual bool differentiable() const = 0;
  /// Transpose of the Jacobian of predict at `mask` applied to `cotangent`.
  /// Throws NonDifferentiableModel unless differentiable().
  virtual ScalarField vjp(const DensityGrid &mask, const ScalarField &cotangent) const;
  virtual std::string name() const = 0;
};

struct GaussianThresholdParams {
  double sigma = 0.080;  // um
  double eta = 0.5;
  double beta = 10.0;
  double eta_shift = 0.0;  // optional uniform threshold bias; off by default

  double threshold() const { return eta + eta_shift; }
  void validate() const;

  static GaussianThresholdParams duv_like() { return { 0.080, 0.5, 10.0, 0.0 }; }
  static GaussianThresholdParams ebl_like() { return { 0.030, 0.5, 10.0, 0.0 }; }
};

/// Separable Gaussian blur (truncated at 4 sigma, renormalised, edge
/// replication) followed by the tanh projection
///   [tanh(b e) + tanh(b (r - e))] / [tanh(b e) + tanh(b (1 - e))].
DensityGrid predict_gaussian_threshold(const DensityGrid &mask,
                                       const GaussianThresholdParams &params);
ScalarField vjp_gaussian_threshold(const DensityGrid &mask, const ScalarField &cotangent,
                                   const GaussianThresholdParams &params);
/// Just the blur, exposed for tests and contour checks.
Eigen::ArrayXd gaussian_blur(const GridSpec &grid, const Eigen::ArrayXd &values,
                             double sigma);

DensityGrid predict_identity(const DensityGrid &mask);

struct ExternalPredictorConfig {
  /// Shell command; "{input}" and "{output}" are replaced with file paths.
  std::string command;
  std::filesystem::path exchange_dir;
  std::chrono::milliseconds timeout{ 60'000 };
};

/// Runs the external command on a mask written in the density grid format
/// and reads back its prediction. Distinct errors for a failing command,
/// a timeout and a malformed or mismatched result.
DensityGrid predict_external(const DensityGrid &mask, const ExternalPredictorConfig &config);

class IdentityLitho final : public LithoModel {
 public:
  DensityGrid predict(const DensityGrid &mask) const override;
  bool differentiable() const override { return true; }
  ScalarField vjp(const DensityGrid &mask, const ScalarField &cotangent) const override;
  std::string name() const override { return "identity"; }
};

class GaussianThresholdLitho final : public LithoModel {
 public:
  explicit GaussianThresholdLitho(GaussianThresholdParams params);

  DensityGrid predict(const DensityGrid &mask) const override;
  bool differentiable() const override { return true; }
  ScalarField vjp(const DensityGrid &mask, const ScalarField &cotangent) const override;
  std::string name() const override;
  const GaussianThresholdParams &params() const { return params_; }

 private:
  GaussianThresholdParams params_;
};

/// Non-differentiable model backed by an out-of-process predictor. Calls on
/// one instance are serialised.
class ExternalLitho final : public LithoModel {
 public:
  explicit ExternalLitho(ExternalPredictorConfig config);

  DensityGrid predict(const DensityGrid &mask) const override;
  bool differentiable() const override { return false; }
  std::string name() const override { return "external"; }

 private:
  ExternalPredictorConfig config_;
  mutable std::mutex mutex_;
};

/// second(first(mask)); differentiable iff both are.
class ComposedLitho final : public LithoModel {
 public:
  ComposedLitho(std::shared_ptr<const LithoModel> first,
                std::shared_ptr<const LithoModel> second);

  DensityGrid predict(const DensityGrid &mask) const override;
  bool differentiable() const override;
  ScalarField vjp(const DensityGrid &mask, const ScalarField &cotangent) const override;
  std::string name() const override;

 private:
  std::shared_ptr<const LithoModel> first_, second_;
};

}  // namespace faid
