#pragma once

#include <atomic>
#include <cstddef>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "faid/em_solver.hpp"
#include "faid/geometry.hpp"
#include "faid/litho.hpp"

namespace faid {

/// Everything needed to go from a parameter vector to a figure of merit:
/// p -> mask -> litho prediction -> eps -> per-wavelength solves -> mean T.
struct Pipeline {
  DeviceSpec device;
  std::shared_ptr<const LithoModel> litho;  // null means identity
  Materials materials;
  std::vector<double> wavelengths;  // um
  PmlOptions pml;
  int threads = 1;
  /// Mask step (um) for the geometric Jacobian used by the chain rule.
  double mask_step = 1e-6;

  /// Counts every forward and adjoint linear solve issued through this
  /// pipeline and its copies.
  std::shared_ptr<std::atomic<long>> em_solves = std::make_shared<std::atomic<long>>(0);

  void validate() const;
  const LithoModel &model() const;
  long solve_count() const { return em_solves->load(); }
};

/// Same pipeline with the identity model; used for "ideal geometry" numbers.
Pipeline with_identity_litho(const Pipeline &pipeline);

enum class GradientMethod { ChainRule, NumericPerturbation, BruteForce };

std::string to_string(GradientMethod method);
GradientMethod gradient_method_from_string(const std::string &name);

struct Evaluation {
  FomValue fom;  // mean transmission over wavelengths
  std::vector<FomValue> per_wavelength;
};

/// Gradient of the mean transmission with respect to p.
struct GradientResult {
  FomValue fom;
  std::vector<FomValue> per_wavelength;
  std::vector<double> grad;
  GradientMethod method = GradientMethod::ChainRule;
  long em_solves = 0;  // solves issued by this call
};

Evaluation evaluate(const Pipeline &pipeline, const DesignParams &p);
FomValue eval_fom(const Pipeline &pipeline, const DesignParams &p);
/// Evaluation of an already-predicted density (skips geometry and litho).
Evaluation evaluate_density(const Pipeline &pipeline, const DensityGrid &predicted);

/// Forward field of the first wavelength, for dumps.
FieldSolution forward_field(const Pipeline &pipeline, const DensityGrid &predicted,
                            double wavelength);

/// dT/d eps per cell on the predicted geometry, averaged over wavelengths,
/// together with the matching evaluation.
struct SensitivityResult {
  Evaluation eval;
  ScalarField d_eps;
};
SensitivityResult sensitivity(const Pipeline &pipeline, const DensityGrid &predicted);

/// Adjoint gradient pulled back through litho.vjp and the mask Jacobian.
/// Throws NonDifferentiableModel when the model has no vjp.
GradientResult grad_chain_rule(const Pipeline &pipeline, const DesignParams &p);
/// Adjoint sensitivity dotted with central differences of litho predictions
/// (one-sided where p +- h leaves the box); no EM solves beyond the single
/// forward/adjoint pair per wavelength.
GradientResult grad_numeric_perturbation(const Pipeline &pipeline, const DesignParams &p,
                                         double h);
/// Central differences of eval_fom (one-sided where p +- h leaves the box).
/// Uses (2 n + 1) full evaluations including the base point.
GradientResult grad_brute_force(const Pipeline &pipeline, const DesignParams &p, double h);

GradientResult compute_gradient(GradientMethod method, const Pipeline &pipeline,
                                const DesignParams &p, double h);

/// Parameter count above which brute force logs a warning.
inline constexpr std::size_t kBruteForceWarnLimit = 60;

/// Runs fn(0..n-1) on up to `threads` workers. Each index must write only its
/// own output slot; the first exception (lowest index) is rethrown.
void parallel_for(std::size_t n, int threads, const std::function<void(std::size_t)> &fn);

}  // namespace faid
