#pragma once

#include <complex>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <Eigen/SparseCore>

#include "faid/geometry.hpp"
#include "faid/grid.hpp"

namespace faid {

using Complex = std::complex<double>;
using ComplexSparse = Eigen::SparseMatrix<Complex>;

struct Materials {
  double n_clad = 1.444;
  double n_core = 2.98;

  double eps_clad() const { return n_clad * n_clad; }
  double eps_core() const { return n_core * n_core; }
};

/// Relative permittivity per cell.
struct PermittivityGrid {
  GridSpec grid;
  Eigen::ArrayXd eps;

  void validate() const;
};

/// eps = eps_clad + rho * (eps_core - eps_clad). d eps / d rho is the
/// constant eps_core - eps_clad.
PermittivityGrid density_to_eps(const DensityGrid &rho, double eps_clad,
                                double eps_core);

struct PmlOptions {
  int cells = 20;  // per side; 0 disables the absorber (test harnesses only)
  /// Peak imaginary stretch; s = 1 + i * strength * depth^3.
  double strength = 60.0;
};

/// Complex-symmetric 5-point discretisation of
///   d/dx (sy/sx d/dx) + d/dy (sx/sy d/dy) + k0^2 eps sx sy
/// with Dirichlet walls behind the PML. Time convention exp(-i w t).
struct SystemMatrix {
  GridSpec grid;
  double wavelength = 0.0;
  int pml_cells = 0;
  ComplexSparse matrix;
  /// dA/d eps on the diagonal (k0^2 sx sy).
  Eigen::VectorXcd eps_derivative;
  /// true for cells inside the absorbing layer.
  std::vector<bool> absorbing;

  double k0() const;
  Eigen::VectorXcd apply(const Eigen::VectorXcd &x) const { return matrix * x; }
};

/// Throws ConfigError when dx > wavelength / (15 sqrt(max eps)) or the PML is
/// thinner than 8 cells.
SystemMatrix assemble(const PermittivityGrid &eps, double wavelength,
                      const PmlOptions &pml);

/// Sparse LU of a SystemMatrix. Solves are const and may be issued from
/// several threads.
class Factorization {
 public:
  explicit Factorization(const SystemMatrix &system);
  ~Factorization();
  Factorization(Factorization &&) noexcept;
  Factorization &operator=(Factorization &&) noexcept;

  Eigen::VectorXcd solve(const Eigen::VectorXcd &rhs) const;
  const SystemMatrix &system() const { return *system_; }

 private:
  struct Impl;
  std::shared_ptr<const SystemMatrix> system_;
  std::unique_ptr<Impl> impl_;
};

enum class FieldKind { Forward, Adjoint };

struct FieldSolution {
  GridSpec grid;
  Eigen::VectorXcd values;
  double wavelength = 0.0;
  FieldKind kind = FieldKind::Forward;
};

/// A x = source; throws SolverError if the relative residual exceeds 1e-8.
FieldSolution solve_forward(const Factorization &lu, const Eigen::VectorXcd &source);
/// A^T lambda = -dF_dx. A is symmetric, so the forward factorisation is
/// reused. dF_dx follows the convention dF = Re(sum dF_dx * dx).
FieldSolution solve_adjoint(const Factorization &lu, const Eigen::VectorXcd &dF_dx);

// --- modes and ports --------------------------------------------------------

struct ModeProfile {
  std::string port;
  int row0 = 0;               // first grid row of the slice
  Eigen::VectorXd profile;    // unit norm: sum(profile^2) * dx = 1
  double n_eff = 0.0;
  double wavelength = 0.0;
  double dx = 0.0;
  /// kx * dx from the discrete dispersion 2 (1 - cos(phase)) / dx^2 = beta^2.
  double phase_step = 0.0;
  int order = 0;
};

/// Guided modes of d^2/dy^2 + k0^2 eps on a slice with zero walls, discretised
/// with the same stencil as the 2D operator. Sorted by descending n_eff.
/// Throws NoGuidedModeError when none exist.
std::vector<ModeProfile> solve_modes(std::span<const double> eps_slice,
                                     double wavelength, double dx);

/// A port resolved onto the grid: columns `column` and `column + 1`, rows
/// [row0, row0 + rows).
struct PortSlice {
  std::string name;
  int column = 0;
  int row0 = 0;
  int rows = 0;
  int inward = +1;

  int outer_column() const { return inward > 0 ? column : column + 1; }
  int inner_column() const { return inward > 0 ? column + 1 : column; }
};

PortSlice resolve_port(const GridSpec &grid, const Port &port);
std::vector<double> eps_slice(const PermittivityGrid &eps, const PortSlice &slice);
/// Fundamental mode of the port's slice.
ModeProfile port_mode(const PermittivityGrid &eps, const PortSlice &slice,
                      double wavelength);

/// Two-column source launching unit amplitude of `mode` into the device and
/// nothing back toward the PML.
Eigen::VectorXcd mode_source(const GridSpec &grid, const PortSlice &slice,
                             const ModeProfile &mode);

/// Linear functional c with amplitude = c . x for the wave leaving the
/// device through the port; nonzero only on the two port columns.
Eigen::VectorXcd outgoing_functional(const GridSpec &grid, const PortSlice &slice,
                                     const ModeProfile &mode);

/// Unit injected amplitude in `source`, expressed in squared amplitude units
/// of `probe`: sin(phase_in) / sin(phase_out).
double injected_power(const ModeProfile &source, const ModeProfile &probe);

struct FomValue {
  double transmission = 0.0;
  double insertion_loss_db = 0.0;

  static FomValue from_transmission(double t);
};

struct OverlapResult {
  FomValue fom;
  Complex amplitude;
  Eigen::VectorXcd dF_dx;  // same convention as solve_adjoint
};

/// T = |outgoing amplitude|^2 / p_in and its analytic field derivative.
OverlapResult mode_overlap_fom(const FieldSolution &x, const ModeProfile &mode,
                               const PortSlice &slice, double p_in);

/// dF/d eps per cell: Re(lambda * k0^2 * x), zero inside the PML.
ScalarField sensitivity_field(const FieldSolution &forward,
                              const FieldSolution &adjoint,
                              const SystemMatrix &system);

}  // namespace faid
