#include "faid/em_solver.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include <Eigen/SparseLU>
#include <fmt/format.h>

#include "faid/errors.hpp"

namespace faid {
namespace {

// Imaginary stretch at position u (in cells from the low edge) along an axis
// of n cells with `pml` absorbing cells on each side.
Complex stretch(double u, int n, int pml, double strength) {
  if (pml <= 0)
    return { 1.0, 0.0 };
  const double depth = std::max({ 0.0, pml - u, u - (n - pml) }) / pml;
  return { 1.0, strength * depth * depth * depth };
}

}  // namespace

void PermittivityGrid::validate() const {
  grid.validate();
  if (static_cast<std::size_t>(eps.size()) != grid.size())
    throw ValidationError("permittivity grid size mismatch");
  for (Eigen::Index k = 0; k < eps.size(); ++k)
    if (!(eps[k] >= 1.0) || !std::isfinite(eps[k]))
      throw ValidationError(fmt::format("permittivity {} at cell {} must be >= 1", eps[k], k));
}

PermittivityGrid density_to_eps(const DensityGrid &rho, double eps_clad,
                                double eps_core) {
  if (!(eps_core > eps_clad && eps_clad >= 1.0))
    throw ConfigError("materials", "need eps_core > eps_clad >= 1");
  return { rho.grid, eps_clad + rho.values * (eps_core - eps_clad) };
}

double SystemMatrix::k0() const { return 2.0 * std::numbers::pi / wavelength; }

SystemMatrix assemble(const PermittivityGrid &eps, double wavelength,
                      const PmlOptions &pml) {
  const GridSpec &g = eps.grid;
  eps.validate();
  if (!(wavelength > 0.0))
    throw ConfigError("wavelengths.list_um", "wavelength must be positive");
  if (pml.cells != 0 && pml.cells < 8)
    throw ConfigError("grid.pml_cells", fmt::format("need >= 8 PML cells, got {}", pml.cells));
  if (2 * pml.cells >= std::min(g.nx, g.ny))
    throw ConfigError("grid.pml_cells", "PML leaves no interior");
  const double eps_max = eps.eps.maxCoeff();
  const double limit = wavelength / (15.0 * std::sqrt(eps_max));
  if (g.dx > limit * (1.0 + 1e-12))
    throw ConfigError("grid.dx_nm",
                      fmt::format("cell size {} um exceeds wavelength/(15 n_max) = {} um",
                                  g.dx, limit));

  SystemMatrix sys;
  sys.grid = g;
  sys.wavelength = wavelength;
  sys.pml_cells = pml.cells;
  const double k0 = sys.k0();
  const double inv_h2 = 1.0 / (g.dx * g.dx);

  std::vector<Complex> sx_c(g.nx), sx_h(g.nx + 1), sy_c(g.ny), sy_h(g.ny + 1);
  for (int i = 0; i < g.nx; ++i)
    sx_c[i] = stretch(i + 0.5, g.nx, pml.cells, pml.strength);
  for (int i = 0; i <= g.nx; ++i)
    sx_h[i] = stretch(i, g.nx, pml.cells, pml.strength);
  for (int j = 0; j < g.ny; ++j)
    sy_c[j] = stretch(j + 0.5, g.ny, pml.cells, pml.strength);
  for (int j = 0; j <= g.ny; ++j)
    sy_h[j] = stretch(j, g.ny, pml.cells, pml.strength);

  const auto n = static_cast<Eigen::Index>(g.size());
  sys.eps_derivative.resize(n);
  sys.absorbing.assign(g.size(), false);
  std::vector<Eigen::Triplet<Complex>> trip;
  trip.reserve(5 * g.size());
  for (int j = 0; j < g.ny; ++j) {
    for (int i = 0; i < g.nx; ++i) {
      const auto row = g.index(i, j);
      // coupling through the face between i and i+1 uses sx at the face
      const Complex cw = sy_c[j] / sx_h[i] * inv_h2;
      const Complex ce = sy_c[j] / sx_h[i + 1] * inv_h2;
      const Complex cs = sx_c[i] / sy_h[j] * inv_h2;
      const Complex cn = sx_c[i] / sy_h[j + 1] * inv_h2;
      const Complex scale = sx_c[i] * sy_c[j];
      sys.eps_derivative[row] = k0 * k0 * scale;
      sys.absorbing[static_cast<std::size_t>(row)] =
          i < pml.cells || i >= g.nx - pml.cells || j < pml.cells || j >= g.ny - pml.cells;

      trip.emplace_back(row, row, -(cw + ce + cs + cn) + k0 * k0 * eps.eps[row] * scale);
      if (i > 0)
        trip.emplace_back(row, g.index(i - 1, j), cw);
      if (i + 1 < g.nx)
        trip.emplace_back(row, g.index(i + 1, j), ce);
      if (j > 0)
        trip.emplace_back(row, g.index(i, j - 1), cs);
      if (j + 1 < g.ny)
        trip.emplace_back(row, g.index(i, j + 1), cn);
    }
  }
  sys.matrix.resize(n, n);
  sys.matrix.setFromTriplets(trip.begin(), trip.end());
  sys.matrix.makeCompressed();
  return sys;
}

struct Factorization::Impl {
  Eigen::SparseLU<ComplexSparse, Eigen::COLAMDOrdering<int>> lu;
};

Factorization::Factorization(const SystemMatrix &system)
    : system_(std::make_shared<const SystemMatrix>(system)),
      impl_(std::make_unique<Impl>()) {
  impl_->lu.analyzePattern(system_->matrix);
  impl_->lu.factorize(system_->matrix);
  if (impl_->lu.info() != Eigen::Success)
    throw SolverError("sparse LU factorisation failed: " + impl_->lu.lastErrorMessage());
}

Factorization::~Factorization() = default;
Factorization::Factorization(Factorization &&) noexcept = default;
Factorization &Factorization::operator=(Factorization &&) noexcept = default;

Eigen::VectorXcd Factorization::solve(const Eigen::VectorXcd &rhs) const {
  Eigen::VectorXcd x = impl_->lu.solve(rhs);
  if (impl_->lu.info() != Eigen::Success)
    throw SolverError("sparse LU solve failed");
  const double bn = rhs.norm();
  if (bn > 0.0) {
    const double res = (system_->matrix * x - rhs).norm() / bn;
    if (!(res < 1e-8)) {
      // |log det| is cheap to get from the factors and flags near-singularity
      throw SolverError(fmt::format(
          "relative residual {:.3e} exceeds 1e-8 (log|det A| = {:.6g}); "
          "system is ill-conditioned at this wavelength",
          res, std::real(impl_->lu.logAbsDeterminant())));
    }
  }
  return x;
}

FieldSolution solve_forward(const Factorization &lu, const Eigen::VectorXcd &source) {
  const auto &sys = lu.system();
  if (source.size() != static_cast<Eigen::Index>(sys.grid.size()))
    throw SolverError("source size does not match the grid");
  if (source.isZero(0.0))
    throw SolverError("source is identically zero");
  return { sys.grid, lu.solve(source), sys.wavelength, FieldKind::Forward };
}

FieldSolution solve_adjoint(const Factorization &lu, const Eigen::VectorXcd &dF_dx) {
  const auto &sys = lu.system();
  if (dF_dx.size() != static_cast<Eigen::Index>(sys.grid.size()))
    throw SolverError("adjoint source size does not match the grid");
  FieldSolution out{ sys.grid, Eigen::VectorXcd::Zero(dF_dx.size()), sys.wavelength,
                     FieldKind::Adjoint };
  if (!dF_dx.isZero(0.0))
    out.values = lu.solve(-dF_dx);
  return out;
}

ScalarField sensitivity_field(const FieldSolution &forward,
                              const FieldSolution &adjoint,
                              const SystemMatrix &system) {
  if (!(forward.grid == adjoint.grid) || !(forward.grid == system.grid))
    throw SolverError("sensitivity field: grid mismatch");
  if (forward.wavelength != adjoint.wavelength  // NOLINT(clang-diagnostic-float-equal)
      || forward.wavelength != system.wavelength)
    throw SolverError("sensitivity field: wavelength mismatch");
  ScalarField s = ScalarField::zeros(system.grid);
  for (Eigen::Index k = 0; k < s.values.size(); ++k) {
    if (system.absorbing[static_cast<std::size_t>(k)])
      continue;
    s.values[k] =
        (adjoint.values[k] * system.eps_derivative[k] * forward.values[k]).real();
  }
  return s;
}

}  // namespace faid
