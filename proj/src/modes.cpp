#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include <Eigen/Eigenvalues>
#include <fmt/format.h>

#include "faid/em_solver.hpp"
#include "faid/errors.hpp"

namespace faid {

std::vector<ModeProfile> solve_modes(std::span<const double> eps_slice,
                                     double wavelength, double dx) {
  const auto n = static_cast<Eigen::Index>(eps_slice.size());
  if (n < 3)
    throw NoGuidedModeError("mode slice needs at least 3 cells");
  const double k0 = 2.0 * std::numbers::pi / wavelength;
  const double edge = std::max(eps_slice.front(), eps_slice.back());
  const double peak = *std::max_element(eps_slice.begin(), eps_slice.end());
  if (!(peak > edge))
    throw NoGuidedModeError("no guided mode: slice has no core above the cladding");

  Eigen::VectorXd diag(n), sub(n - 1);
  for (Eigen::Index j = 0; j < n; ++j)
    diag[j] = -2.0 / (dx * dx) + k0 * k0 * eps_slice[static_cast<std::size_t>(j)];
  sub.setConstant(1.0 / (dx * dx));

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es;
  es.computeFromTridiagonal(diag, sub, Eigen::ComputeEigenvectors);
  if (es.info() != Eigen::Success)
    throw NoGuidedModeError("tridiagonal eigen solve failed");

  std::vector<ModeProfile> modes;
  // eigenvalues ascend; walk from the top
  for (Eigen::Index e = n - 1; e >= 0; --e) {
    const double beta2 = es.eigenvalues()[e];
    const double neff2 = beta2 / (k0 * k0);
    if (!(neff2 > edge && neff2 < peak))
      break;
    ModeProfile m;
    m.wavelength = wavelength;
    m.dx = dx;
    m.n_eff = std::sqrt(neff2);
    m.order = static_cast<int>(modes.size());
    const double c = 1.0 - 0.5 * beta2 * dx * dx;
    if (!(c > -1.0 && c < 1.0))
      throw NoGuidedModeError("mode is not resolved by the grid (beta dx too large)");
    m.phase_step = std::acos(c);
    m.profile = es.eigenvectors().col(e);
    m.profile /= std::sqrt(m.profile.squaredNorm() * dx);
    // deterministic sign: first significant sample positive
    const double tol = 1e-3 * m.profile.cwiseAbs().maxCoeff();
    for (Eigen::Index j = 0; j < n; ++j) {
      if (std::abs(m.profile[j]) > tol) {
        if (m.profile[j] < 0.0)
          m.profile = -m.profile;
        break;
      }
    }
    modes.push_back(std::move(m));
  }
  if (modes.empty())
    throw NoGuidedModeError(fmt::format(
        "no guided mode at wavelength {} um (cladding eps {}, core eps {})",
        wavelength, edge, peak));
  return modes;
}

PortSlice resolve_port(const GridSpec &grid, const Port &port) {
  PortSlice s;
  s.name = port.name;
  s.column = grid.column_at(port.x);
  s.row0 = grid.row_at(port.y_center - port.half_extent + 0.5 * grid.dx);
  const int row1 = grid.row_at(port.y_center + port.half_extent - 0.5 * grid.dx);
  s.rows = row1 - s.row0 + 1;
  s.inward = port.inward >= 0 ? +1 : -1;
  if (s.column + 1 >= grid.nx || s.rows < 3)
    throw ValidationError("port '" + port.name + "' does not fit on the grid");
  return s;
}

std::vector<double> eps_slice(const PermittivityGrid &eps, const PortSlice &slice) {
  std::vector<double> out(static_cast<std::size_t>(slice.rows));
  for (int r = 0; r < slice.rows; ++r)
    out[static_cast<std::size_t>(r)] = eps.eps[eps.grid.index(slice.column, slice.row0 + r)];
  return out;
}

ModeProfile port_mode(const PermittivityGrid &eps, const PortSlice &slice,
                      double wavelength) {
  auto modes = solve_modes(eps_slice(eps, slice), wavelength, eps.grid.dx);
  ModeProfile m = std::move(modes.front());
  m.port = slice.name;
  m.row0 = slice.row0;
  return m;
}

Eigen::VectorXcd mode_source(const GridSpec &grid, const PortSlice &slice,
                             const ModeProfile &mode) {
  Eigen::VectorXcd b = Eigen::VectorXcd::Zero(static_cast<Eigen::Index>(grid.size()));
  const double q = 1.0 / (grid.dx * grid.dx);
  const Complex back = -std::polar(1.0, -mode.phase_step);
  for (Eigen::Index r = 0; r < mode.profile.size(); ++r) {
    const int j = mode.row0 + static_cast<int>(r);
    b[grid.index(slice.outer_column(), j)] = q * mode.profile[r];
    b[grid.index(slice.inner_column(), j)] = q * back * mode.profile[r];
  }
  return b;
}

Eigen::VectorXcd outgoing_functional(const GridSpec &grid, const PortSlice &slice,
                                     const ModeProfile &mode) {
  Eigen::VectorXcd c = Eigen::VectorXcd::Zero(static_cast<Eigen::Index>(grid.size()));
  const Complex denom{ 0.0, 2.0 * std::sin(mode.phase_step) };
  const Complex w_outer = std::polar(1.0, mode.phase_step) * grid.dx / denom;
  const Complex w_inner = -grid.dx / denom;
  for (Eigen::Index r = 0; r < mode.profile.size(); ++r) {
    const int j = mode.row0 + static_cast<int>(r);
    c[grid.index(slice.outer_column(), j)] = w_outer * mode.profile[r];
    c[grid.index(slice.inner_column(), j)] = w_inner * mode.profile[r];
  }
  return c;
}

double injected_power(const ModeProfile &source, const ModeProfile &probe) {
  return std::sin(source.phase_step) / std::sin(probe.phase_step);
}

FomValue FomValue::from_transmission(double t) {
  return { t, t > 0.0 ? -10.0 * std::log10(t) : std::numeric_limits<double>::infinity() };
}

OverlapResult mode_overlap_fom(const FieldSolution &x, const ModeProfile &mode,
                               const PortSlice &slice, double p_in) {
  const GridSpec &g = x.grid;
  if (slice.column < 0 || slice.column + 1 >= g.nx || slice.row0 < 0
      || slice.row0 + slice.rows > g.ny)
    throw ValidationError("port slice '" + slice.name + "' lies outside the grid");
  if (mode.profile.size() != slice.rows)
    throw ValidationError("mode profile does not match port slice '" + slice.name + "'");
  if (!(p_in > 0.0))
    throw ValidationError("injected power must be positive");

  const Eigen::VectorXcd c = outgoing_functional(g, slice, mode);
  OverlapResult out;
  out.amplitude = c.cwiseProduct(x.values).sum();
  out.fom = FomValue::from_transmission(std::norm(out.amplitude) / p_in);
  out.dF_dx = (2.0 / p_in) * std::conj(out.amplitude) * c;
  return out;
}

}  // namespace faid
