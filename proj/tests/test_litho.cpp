#include <doctest.h>

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

#include "faid/errors.hpp"
#include "faid/geometry.hpp"
#include "faid/grid_io.hpp"
#include "faid/litho.hpp"

using namespace faid;
namespace fs = std::filesystem;

namespace {

const std::string kScripts = FAID_TEST_SCRIPTS;

GridSpec square_grid(int n, double dx = 0.02) { return { n, n, dx, 0.0, 0.0 }; }

DensityGrid random_mask(const GridSpec &g, unsigned seed) {
  std::mt19937 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  DensityGrid d = DensityGrid::zeros(g);
  for (auto &v : d.values) v = u(rng);
  return d;
}

DensityGrid ybranch_mask() {
  const DeviceSpec s = make_device(DeviceKind::YBranch, {}, 0.02, 10);
  return rasterize(device_polygons(s, s.initial), s.grid);
}

// Strictly inside (0, 1) so finite-difference probes stay in the domain.
DensityGrid interior_mask() {
  DensityGrid m = ybranch_mask();
  m.values = 0.1 + 0.8 * m.values;
  return m;
}

double dot(const Eigen::ArrayXd &a, const Eigen::ArrayXd &b) { return (a * b).sum(); }

// Exact forward linearization: projection slope at the blurred mask times the
// blurred perturbation. Valid while the blurred mask stays inside [0, 1].
Eigen::ArrayXd jvp(const DensityGrid &m, const Eigen::ArrayXd &v, const GaussianThresholdParams &p) {
  const Eigen::ArrayXd r = gaussian_blur(m.grid, m.values, p.sigma);
  const double norm = std::tanh(p.beta * p.eta) + std::tanh(p.beta * (1.0 - p.eta));
  const Eigen::ArrayXd c = (p.beta * (r - p.eta)).cosh();
  return p.beta / (c * c) / norm * gaussian_blur(m.grid, v, p.sigma);
}

double phi_inv(double p) {
  double lo = -10.0, hi = 10.0;
  for (int i = 0; i < 200; ++i) {
    const double m = 0.5 * (lo + hi);
    (0.5 * std::erfc(-m / std::sqrt(2.0)) < p ? lo : hi) = m;
  }
  return 0.5 * (lo + hi);
}

fs::path scratch_dir(const std::string &name) {
  const fs::path p = fs::temp_directory_path() / ("faid_litho_" + name + "_" + std::to_string(::getpid()));
  fs::create_directories(p);
  return p;
}

}  // namespace

TEST_CASE("uniform mask is a fixed point") {
  const GaussianThresholdParams duv = GaussianThresholdParams::duv_like();
  const DensityGrid one = DensityGrid::filled(square_grid(40), 1.0);
  CHECK((predict_gaussian_threshold(one, duv).values - 1.0).abs().maxCoeff() < 1e-15);
  const DensityGrid zero = DensityGrid::zeros(square_grid(40));
  CHECK(predict_gaussian_threshold(zero, duv).values.abs().maxCoeff() < 1e-15);
}

TEST_CASE("isolated minimum-size feature is erased") {
  DensityGrid m = DensityGrid::zeros(square_grid(41));
  m.at(20, 20) = 1.0;
  const GaussianThresholdParams duv = GaussianThresholdParams::duv_like();
  const Eigen::ArrayXd blurred = gaussian_blur(m.grid, m.values, duv.sigma);
  const double mass = 0.02 * 0.02 / (2.0 * M_PI * duv.sigma * duv.sigma);
  CHECK(blurred.maxCoeff() == doctest::Approx(mass).epsilon(0.02));
  CHECK(predict_gaussian_threshold(m, duv).values.maxCoeff() < 0.01);
}

TEST_CASE("large square keeps its interior and rounds its corners") {
  const GaussianThresholdParams duv = GaussianThresholdParams::duv_like();
  const GridSpec g = square_grid(140);
  DensityGrid m = DensityGrid::zeros(g);
  const int lo = 30, hi = 110;  // cells [30, 110) are inside
  for (int j = lo; j < hi; ++j)
    for (int i = lo; i < hi; ++i) m.at(i, j) = 1.0;
  const DensityGrid p = predict_gaussian_threshold(m, duv);
  CHECK(std::abs(p.at(70, 70) - 1.0) < 1e-3);
  CHECK(std::abs(p.at(lo + 20, 70) - 1.0) < 1e-3);

  // 0.5 crossing along the diagonal from the corner at (lo, lo)
  double d = -1.0;
  for (int k = 0; k < 30; ++k) {
    const double a = p.at(lo + k, lo + k), b = p.at(lo + k + 1, lo + k + 1);
    if (a < 0.5 && b >= 0.5) {
      d = (k + 0.5 + (0.5 - a) / (b - a)) * g.dx;  // per-axis distance from the corner
      break;
    }
  }
  // quarter-plane blur: Phi(d/sigma)^2 = 1/2
  const double oracle = phi_inv(std::sqrt(0.5)) * duv.sigma;
  CHECK(d == doctest::Approx(oracle).epsilon(0.05));
  CHECK(d / duv.sigma > 0.3);
  CHECK(d / duv.sigma < 0.7);

  // straight edges stay put
  double edge = -1.0;
  for (int i = 0; i < 60; ++i)
    if (p.at(i, 70) < 0.5 && p.at(i + 1, 70) >= 0.5)
      edge = (i + 0.5 + (0.5 - p.at(i, 70)) / (p.at(i + 1, 70) - p.at(i, 70))) * g.dx;
  CHECK(edge == doctest::Approx(lo * g.dx).epsilon(1e-3));
}

TEST_CASE("vjp matches finite differences of predict") {
  const GaussianThresholdParams duv = GaussianThresholdParams::duv_like();
  const DensityGrid m = interior_mask();
  std::mt19937 rng(5);
  std::normal_distribution<double> n;
  ScalarField cot = ScalarField::zeros(m.grid);
  for (auto &v : cot.values) v = n(rng);
  const ScalarField g = vjp_gaussian_threshold(m, cot, duv);
  const double scale = g.values.abs().maxCoeff();

  std::uniform_int_distribution<int> pick_i(20, m.grid.nx - 21), pick_j(20, m.grid.ny - 21);
  for (int t = 0; t < 20; ++t) {
    const auto k = m.grid.index(pick_i(rng), pick_j(rng));
    const double h = 1e-6;
    DensityGrid a = m, b = m;
    a.values[k] += h;
    b.values[k] -= h;
    const double fd = dot(cot.values, predict_gaussian_threshold(a, duv).values
                                          - predict_gaussian_threshold(b, duv).values)
                      / (2.0 * h);
    CHECK(std::abs(fd - g.values[k]) <= 1e-5 * std::max(std::abs(g.values[k]), 1e-2 * scale));
  }
  CHECK(vjp_gaussian_threshold(m, ScalarField::zeros(m.grid), duv).values.isZero(0.0));
}

TEST_CASE("vjp is the adjoint of the forward linearization") {
  for (const auto &params : { GaussianThresholdParams::duv_like(), GaussianThresholdParams::ebl_like() }) {
    const DensityGrid m = interior_mask();
    std::mt19937 rng(11);
    std::normal_distribution<double> n;
    for (int trial = 0; trial < 3; ++trial) {
      Eigen::ArrayXd v(m.values.size()), cot(m.values.size());
      for (auto &x : v) x = n(rng);
      for (auto &x : cot) x = n(rng);
      const Eigen::ArrayXd jv = jvp(m, v, params);
      // the linearization itself, against central differences
      const double h = 1e-5;
      DensityGrid a = m, b = m;
      a.values += h * v;
      b.values -= h * v;
      const Eigen::ArrayXd fd = (predict_gaussian_threshold(a, params).values
                                 - predict_gaussian_threshold(b, params).values)
                                / (2.0 * h);
      CHECK((fd - jv).matrix().norm() <= 1e-6 * jv.matrix().norm());
      const double lhs = dot(cot, jv);
      const double rhs = dot(vjp_gaussian_threshold(m, { m.grid, cot }, params).values, v);
      CHECK(std::abs(lhs - rhs) <= 1e-8 * std::abs(rhs));
    }
  }
}

TEST_CASE("small beta reduces the vjp to a scaled blur adjoint") {
  GaussianThresholdParams p = GaussianThresholdParams::duv_like();
  p.beta = 1e-4;
  const DensityGrid m = random_mask(square_grid(50), 3);
  std::mt19937 rng(7);
  std::normal_distribution<double> n;
  Eigen::ArrayXd v(m.values.size()), cot(m.values.size());
  for (auto &x : v) x = n(rng);
  for (auto &x : cot) x = n(rng);
  // projection derivative -> beta / (2 tanh(beta/2)) -> 1
  const double slope = p.beta / (2.0 * std::tanh(0.5 * p.beta));
  const double lhs = dot(vjp_gaussian_threshold(m, { m.grid, cot }, p).values, v);
  const double rhs = slope * dot(cot, gaussian_blur(m.grid, v, p.sigma));
  CHECK(std::abs(lhs - rhs) <= 1e-6 * std::abs(rhs));
}

TEST_CASE("predict stays in range and is monotone") {
  const GaussianThresholdParams duv = GaussianThresholdParams::duv_like();
  for (unsigned seed = 0; seed < 5; ++seed) {
    const DensityGrid a = random_mask(square_grid(48), seed);
    DensityGrid b = a;
    std::mt19937 rng(seed + 100);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (auto &v : b.values) v = std::min(1.0, v + 0.3 * u(rng));
    const DensityGrid pa = predict_gaussian_threshold(a, duv), pb = predict_gaussian_threshold(b, duv);
    CHECK(pa.values.minCoeff() >= 0.0);
    CHECK(pa.values.maxCoeff() <= 1.0);
    CHECK((pb.values - pa.values).minCoeff() >= -1e-14);
  }
}

TEST_CASE("interior translation equivariance") {
  const GaussianThresholdParams duv = GaussianThresholdParams::duv_like();
  const GridSpec g = square_grid(80);
  DensityGrid a = DensityGrid::zeros(g), b = DensityGrid::zeros(g);
  std::mt19937 rng(2);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const int k = 3;
  for (int j = 25; j < 50; ++j)
    for (int i = 25; i < 50; ++i) a.at(i, j) = b.at(i + k, j + k) = u(rng);
  const DensityGrid pa = predict_gaussian_threshold(a, duv), pb = predict_gaussian_threshold(b, duv);
  double worst = 0.0;
  for (int j = 17; j < 60; ++j)
    for (int i = 17; i < 60; ++i) worst = std::max(worst, std::abs(pa.at(i, j) - pb.at(i + k, j + k)));
  CHECK(worst < 1e-9);
}

TEST_CASE("zero blur is a pointwise projection") {
  GaussianThresholdParams p = GaussianThresholdParams::duv_like();
  p.sigma = 0.0;
  const DensityGrid m = random_mask(square_grid(20), 9);
  const DensityGrid out = predict_gaussian_threshold(m, p);
  const double norm = std::tanh(p.beta * p.eta) + std::tanh(p.beta * (1.0 - p.eta));
  for (Eigen::Index k = 0; k < m.values.size(); ++k)
    CHECK(out.values[k] == doctest::Approx((std::tanh(p.beta * p.eta)
                                            + std::tanh(p.beta * (m.values[k] - p.eta))) / norm)
                               .epsilon(1e-14));
  DensityGrid binary = DensityGrid::zeros(square_grid(20));
  for (Eigen::Index k = 0; k < binary.values.size(); k += 3) binary.values[k] = 1.0;
  CHECK((predict_gaussian_threshold(binary, p).values == binary.values).all());
}

TEST_CASE("parameter validation") {
  const DensityGrid m = DensityGrid::zeros(square_grid(20));
  auto key_of = [&](GaussianThresholdParams p) {
    try {
      predict_gaussian_threshold(m, p);
    } catch (const ConfigError &e) {
      return e.key();
    }
    return std::string();
  };
  GaussianThresholdParams p = GaussianThresholdParams::duv_like();
  p.sigma = 0.3;  // grid is 0.4 um wide
  CHECK(key_of(p) == "litho.sigma_nm");
  p = GaussianThresholdParams::duv_like();
  p.eta = 1.0;
  CHECK(key_of(p) == "litho.eta");
  p = GaussianThresholdParams::duv_like();
  p.beta = 0.0;
  CHECK(key_of(p) == "litho.beta");
  p = GaussianThresholdParams::duv_like();
  p.sigma = -0.01;
  CHECK(key_of(p) == "litho.sigma_nm");
}

TEST_CASE("identity model and composition") {
  const DensityGrid m = ybranch_mask();
  const IdentityLitho id;
  CHECK((id.predict(m).values == m.values).all());
  ScalarField cot = ScalarField::zeros(m.grid);
  std::mt19937 rng(1);
  std::normal_distribution<double> n;
  for (auto &v : cot.values) v = n(rng);
  CHECK((id.vjp(m, cot).values == cot.values).all());

  auto gauss = std::make_shared<GaussianThresholdLitho>(GaussianThresholdParams::duv_like());
  const ComposedLitho composed(std::make_shared<IdentityLitho>(), gauss);
  CHECK(composed.differentiable());
  CHECK((composed.predict(m).values == gauss->predict(m).values).all());
  CHECK((composed.vjp(m, cot).values == gauss->vjp(m, cot).values).all());
  CHECK_FALSE((gauss->predict(m).values == m.values).all());
}

TEST_CASE("external predictor: echo, failures and cross-implementation") {
  const fs::path dir = scratch_dir("ext");
  const DensityGrid m = ybranch_mask();
  auto cfg = [&](std::string cmd, int ms = 20'000) {
    return ExternalPredictorConfig{ std::move(cmd), dir, std::chrono::milliseconds(ms) };
  };

  const ExternalLitho echo(cfg(kScripts + "/echo_predictor.sh {input} {output}"));
  CHECK_FALSE(echo.differentiable());
  CHECK((echo.predict(m).values == m.values).all());
  CHECK_THROWS_AS(echo.vjp(m, ScalarField::zeros(m.grid)), NonDifferentiableModel);
  const ComposedLitho chained(std::make_shared<ExternalLitho>(cfg("cp {input} {output}")),
                              std::make_shared<IdentityLitho>());
  CHECK_FALSE(chained.differentiable());

  try {
    predict_external(m, cfg("exit 1"));
    FAIL("expected ExternalPredictorFailed");
  } catch (const ExternalPredictorFailed &e) {
    CHECK(e.status() == 1);
  }

  const auto start = std::chrono::steady_clock::now();
  CHECK_THROWS_AS(predict_external(m, cfg("sleep 30", 300)), ExternalPredictorTimeout);
  CHECK(std::chrono::steady_clock::now() - start < std::chrono::seconds(5));

  CHECK_THROWS_AS(predict_external(m, cfg("true")), ExternalPredictorBadOutput);
  CHECK_THROWS_AS(predict_external(m, cfg("echo garbage > {output}")), ExternalPredictorBadOutput);
  CHECK_THROWS_AS(predict_external(m, cfg("printf '1 1 0.02 0 0\\n0.5\\n' > {output}")),
                  ExternalPredictorBadOutput);

  const GaussianThresholdParams duv = GaussianThresholdParams::duv_like();
  const DensityGrid scripted = predict_external(
      m, cfg("python3 " + kScripts + "/gauss_threshold.py {input} {output} 0.08 0.5 10"));
  const DensityGrid builtin = predict_gaussian_threshold(m, duv);
  CHECK((scripted.values - builtin.values).abs().maxCoeff() < 1e-6);

  // exchange files are cleaned up
  CHECK(fs::is_empty(dir));
  fs::remove_all(dir);
}
