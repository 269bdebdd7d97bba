#include "faid/litho.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include <fmt/format.h>

#include "faid/errors.hpp"

namespace faid {

namespace {

std::vector<double> gaussian_kernel(double sigma, double dx) {
  if (sigma <= 0.0) return { 1.0 };
  const int radius = static_cast<int>(std::ceil(4.0 * sigma / dx - 1e-12));
  std::vector<double> w(2 * radius + 1);
  double sum = 0.0;
  for (int k = -radius; k <= radius; ++k) {
    const double t = k * dx / sigma;
    w[k + radius] = std::exp(-0.5 * t * t);
    sum += w[k + radius];
  }
  for (double &v : w) v /= sum;
  return w;
}

// One pass along a line of n samples at stride `stride`, edge-replicated.
// The adjoint scatters into the clamped source index instead.
template <bool Adjoint>
void convolve_lines(const double *in, double *out, int n, int lines, Eigen::Index stride,
                    Eigen::Index line_stride, const std::vector<double> &w) {
  const int radius = static_cast<int>(w.size() / 2);
  for (int l = 0; l < lines; ++l) {
    const double *src = in + l * line_stride;
    double *dst = out + l * line_stride;
    for (int i = 0; i < n; ++i) dst[i * stride] = 0.0;
    for (int i = 0; i < n; ++i) {
      for (int k = -radius; k <= radius; ++k) {
        const int s = std::clamp(i + k, 0, n - 1);
        if constexpr (Adjoint)
          dst[s * stride] += w[k + radius] * src[i * stride];
        else
          dst[i * stride] += w[k + radius] * src[s * stride];
      }
    }
  }
}

template <bool Adjoint>
Eigen::ArrayXd blur_impl(const GridSpec &grid, const Eigen::ArrayXd &values, double sigma) {
  const auto w = gaussian_kernel(sigma, grid.dx);
  if (w.size() == 1) return values;
  Eigen::ArrayXd tmp(values.size());
  Eigen::ArrayXd out(values.size());
  // The separable operator is Y*X; its adjoint is X^T*Y^T.
  if constexpr (!Adjoint) {
    convolve_lines<false>(values.data(), tmp.data(), grid.nx, grid.ny, 1, grid.nx, w);
    convolve_lines<false>(tmp.data(), out.data(), grid.ny, grid.nx, grid.nx, 1, w);
  } else {
    convolve_lines<true>(values.data(), tmp.data(), grid.ny, grid.nx, grid.nx, 1, w);
    convolve_lines<true>(tmp.data(), out.data(), grid.nx, grid.ny, 1, grid.nx, w);
  }
  return out;
}

void check_sigma(const GridSpec &grid, double sigma) {
  const double half_extent = 0.5 * std::min(grid.nx, grid.ny) * grid.dx;
  if (sigma > half_extent)
    throw ConfigError("litho.sigma_nm",
                      fmt::format("blur sigma {} nm exceeds half the grid extent ({} nm)",
                                  sigma * 1e3, half_extent * 1e3));
}

double projection_norm(const GaussianThresholdParams &p) {
  const double eta = p.threshold();
  return std::tanh(p.beta * eta) + std::tanh(p.beta * (1.0 - eta));
}

}  // namespace

void GaussianThresholdParams::validate() const {
  if (!(sigma >= 0.0) || !std::isfinite(sigma))
    throw ConfigError("litho.sigma_nm", "must be >= 0");
  if (!(eta > 0.0 && eta < 1.0)) throw ConfigError("litho.eta", "must lie in (0, 1)");
  if (!(beta > 0.0) || !std::isfinite(beta)) throw ConfigError("litho.beta", "must be > 0");
  const double t = threshold();
  if (!(t > 0.0 && t < 1.0))
    throw ConfigError("litho.eta_shift", "shifted threshold must stay in (0, 1)");
}

Eigen::ArrayXd gaussian_blur(const GridSpec &grid, const Eigen::ArrayXd &values,
                             double sigma) {
  check_sigma(grid, sigma);
  return blur_impl<false>(grid, values, sigma);
}

DensityGrid predict_gaussian_threshold(const DensityGrid &mask,
                                       const GaussianThresholdParams &params) {
  params.validate();
  check_sigma(mask.grid, params.sigma);
  const Eigen::ArrayXd blurred = blur_impl<false>(mask.grid, mask.values, params.sigma);
  const double eta = params.threshold();
  const double b = params.beta;
  const double norm = projection_norm(params);
  DensityGrid out{ mask.grid, Eigen::ArrayXd(blurred.size()) };
  for (Eigen::Index k = 0; k < blurred.size(); ++k) {
    const double v = (std::tanh(b * eta) + std::tanh(b * (blurred[k] - eta))) / norm;
    out.values[k] = std::clamp(v, 0.0, 1.0);
  }
  return out;
}

ScalarField vjp_gaussian_threshold(const DensityGrid &mask, const ScalarField &cotangent,
                                   const GaussianThresholdParams &params) {
  params.validate();
  check_sigma(mask.grid, params.sigma);
  if (!(cotangent.grid == mask.grid))
    throw ValidationError("cotangent grid does not match mask grid");
  const Eigen::ArrayXd blurred = blur_impl<false>(mask.grid, mask.values, params.sigma);
  const double eta = params.threshold();
  const double b = params.beta;
  const double norm = projection_norm(params);
  Eigen::ArrayXd scaled(blurred.size());
  for (Eigen::Index k = 0; k < blurred.size(); ++k) {
    const double c = std::cosh(b * (blurred[k] - eta));
    scaled[k] = cotangent.values[k] * b / (c * c) / norm;
  }
  return { mask.grid, blur_impl<true>(mask.grid, scaled, params.sigma) };
}

DensityGrid predict_identity(const DensityGrid &mask) { return mask; }

ScalarField LithoModel::vjp(const DensityGrid &, const ScalarField &) const {
  throw NonDifferentiableModel(fmt::format("litho model '{}' has no vjp", name()));
}

DensityGrid IdentityLitho::predict(const DensityGrid &mask) const {
  return predict_identity(mask);
}

ScalarField IdentityLitho::vjp(const DensityGrid &mask, const ScalarField &cotangent) const {
  if (!(cotangent.grid == mask.grid))
    throw ValidationError("cotangent grid does not match mask grid");
  return cotangent;
}

GaussianThresholdLitho::GaussianThresholdLitho(GaussianThresholdParams params)
    : params_(params) {
  params_.validate();
}

DensityGrid GaussianThresholdLitho::predict(const DensityGrid &mask) const {
  return predict_gaussian_threshold(mask, params_);
}

ScalarField GaussianThresholdLitho::vjp(const DensityGrid &mask,
                                        const ScalarField &cotangent) const {
  return vjp_gaussian_threshold(mask, cotangent, params_);
}

std::string GaussianThresholdLitho::name() const {
  return fmt::format("gaussian(sigma={}nm,eta={},beta={})", params_.sigma * 1e3,
                     params_.threshold(), params_.beta);
}

ExternalLitho::ExternalLitho(ExternalPredictorConfig config) : config_(std::move(config)) {
  if (config_.command.empty()) throw ConfigError("litho.command", "external command is empty");
}

DensityGrid ExternalLitho::predict(const DensityGrid &mask) const {
  std::lock_guard lock(mutex_);
  return predict_external(mask, config_);
}

ComposedLitho::ComposedLitho(std::shared_ptr<const LithoModel> first,
                             std::shared_ptr<const LithoModel> second)
    : first_(std::move(first)), second_(std::move(second)) {
  if (!first_ || !second_) throw ConfigError("litho.model", "composed model needs two stages");
}

DensityGrid ComposedLitho::predict(const DensityGrid &mask) const {
  return second_->predict(first_->predict(mask));
}

bool ComposedLitho::differentiable() const {
  return first_->differentiable() && second_->differentiable();
}

ScalarField ComposedLitho::vjp(const DensityGrid &mask, const ScalarField &cotangent) const {
  if (!differentiable())
    throw NonDifferentiableModel(fmt::format("litho model '{}' has no vjp", name()));
  const DensityGrid mid = first_->predict(mask);
  return first_->vjp(mask, second_->vjp(mid, cotangent));
}

std::string ComposedLitho::name() const {
  return first_->name() + "+" + second_->name();
}

}  // namespace faid
