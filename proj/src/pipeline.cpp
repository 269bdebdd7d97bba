#include "faid/pipeline.hpp"

#include <exception>
#include <mutex>
#include <thread>

#include <fmt/format.h>

#include "faid/errors.hpp"

namespace faid {

namespace {

const IdentityLitho kIdentity;

struct WavelengthResult {
  FomValue fom;
  ScalarField d_eps;  // filled only when the adjoint was requested
};

WavelengthResult solve_wavelength(const Pipeline &pl, const PermittivityGrid &eps,
                                  double wavelength, bool adjoint) {
  const SystemMatrix system = assemble(eps, wavelength, pl.pml);
  const Factorization lu(system);
  const auto &ports = pl.device.ports;
  const PortSlice in = resolve_port(eps.grid, ports.front());
  const ModeProfile in_mode = port_mode(eps, in, wavelength);

  const FieldSolution x = solve_forward(lu, mode_source(eps.grid, in, in_mode));
  ++*pl.em_solves;

  double t = 0.0;
  Eigen::VectorXcd dF_dx = Eigen::VectorXcd::Zero(static_cast<Eigen::Index>(eps.grid.size()));
  for (std::size_t k = 1; k < ports.size(); ++k) {
    const PortSlice out = resolve_port(eps.grid, ports[k]);
    const ModeProfile out_mode = port_mode(eps, out, wavelength);
    const OverlapResult r = mode_overlap_fom(x, out_mode, out, injected_power(in_mode, out_mode));
    t += r.fom.transmission;
    if (adjoint) dF_dx += r.dF_dx;
  }

  WavelengthResult res{ FomValue::from_transmission(t), {} };
  if (adjoint) {
    const FieldSolution lambda = solve_adjoint(lu, dF_dx);
    ++*pl.em_solves;
    res.d_eps = sensitivity_field(x, lambda, system);
  }
  return res;
}

SensitivityResult run_density(const Pipeline &pl, const DensityGrid &predicted, bool adjoint) {
  if (!(predicted.grid == pl.device.grid))
    throw ValidationError("predicted density grid does not match the device grid");
  const PermittivityGrid eps =
      density_to_eps(predicted, pl.materials.eps_clad(), pl.materials.eps_core());

  SensitivityResult out;
  out.d_eps = ScalarField::zeros(predicted.grid);
  double sum = 0.0;
  for (double wl : pl.wavelengths) {
    WavelengthResult r = solve_wavelength(pl, eps, wl, adjoint);
    sum += r.fom.transmission;
    out.eval.per_wavelength.push_back(r.fom);
    if (adjoint) out.d_eps.values += r.d_eps.values;
  }
  const double n = static_cast<double>(pl.wavelengths.size());
  out.eval.fom = FomValue::from_transmission(sum / n);
  if (adjoint) out.d_eps.values /= n;
  return out;
}

DensityGrid mask_of(const Pipeline &pl, const DesignParams &p) {
  return rasterize(device_polygons(pl.device, p), pl.device.grid);
}

/// Rethrows a per-parameter failure with its index in the message. Geometry
/// validation keeps its type so callers can still tell input errors apart.
[[noreturn]] void rethrow_for_parameter(std::size_t i) {
  try {
    throw;
  } catch (const ValidationError &e) {
    throw ValidationError(fmt::format("parameter {}: {}", i, e.what()));
  } catch (const Error &e) {
    throw Error(fmt::format("parameter {}: {}", i, e.what()));
  }
}

}  // namespace

void parallel_for(std::size_t n, int threads, const std::function<void(std::size_t)> &fn) {
  const std::size_t workers =
      std::min<std::size_t>(n, static_cast<std::size_t>(std::max(1, threads)));
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{ 0 };
  std::mutex mutex;
  std::size_t failed_index = n;
  std::exception_ptr failure;
  auto worker = [&] {
    for (std::size_t i = next++; i < n; i = next++) {
      try {
        fn(i);
      } catch (...) {
        std::lock_guard lock(mutex);
        if (i < failed_index) {
          failed_index = i;
          failure = std::current_exception();
        }
      }
    }
  };
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(worker);
  for (auto &t : pool) t.join();
  if (failure) std::rethrow_exception(failure);
}

void Pipeline::validate() const {
  device.validate();
  if (wavelengths.empty()) throw ConfigError("wavelengths.list_um", "at least one wavelength is required");
  for (double wl : wavelengths)
    if (!(wl > 0.0)) throw ConfigError("wavelengths.list_um", "wavelengths must be positive");
  if (threads < 1) throw ConfigError("run.threads", "must be >= 1");
  if (!(mask_step > 0.0)) throw ConfigError("", "mask Jacobian step must be positive");
}

const LithoModel &Pipeline::model() const { return litho ? *litho : kIdentity; }

Pipeline with_identity_litho(const Pipeline &pipeline) {
  Pipeline out = pipeline;
  out.litho = std::make_shared<IdentityLitho>();
  return out;
}

std::string to_string(GradientMethod method) {
  switch (method) {
    case GradientMethod::ChainRule: return "chain";
    case GradientMethod::NumericPerturbation: return "numeric";
    case GradientMethod::BruteForce: return "brute";
  }
  return "unknown";
}

GradientMethod gradient_method_from_string(const std::string &name) {
  if (name == "chain") return GradientMethod::ChainRule;
  if (name == "numeric") return GradientMethod::NumericPerturbation;
  if (name == "brute") return GradientMethod::BruteForce;
  throw ConfigError("method", "unknown gradient method '" + name + "' (chain, numeric, brute)");
}

Evaluation evaluate_density(const Pipeline &pipeline, const DensityGrid &predicted) {
  return run_density(pipeline, predicted, false).eval;
}

Evaluation evaluate(const Pipeline &pipeline, const DesignParams &p) {
  const DensityGrid mask = mask_of(pipeline, p);
  return evaluate_density(pipeline, pipeline.model().predict(mask));
}

FomValue eval_fom(const Pipeline &pipeline, const DesignParams &p) {
  return evaluate(pipeline, p).fom;
}

FieldSolution forward_field(const Pipeline &pl, const DensityGrid &predicted, double wavelength) {
  const PermittivityGrid eps =
      density_to_eps(predicted, pl.materials.eps_clad(), pl.materials.eps_core());
  const SystemMatrix system = assemble(eps, wavelength, pl.pml);
  const Factorization lu(system);
  const PortSlice in = resolve_port(eps.grid, pl.device.ports.front());
  const ModeProfile mode = port_mode(eps, in, wavelength);
  FieldSolution x = solve_forward(lu, mode_source(eps.grid, in, mode));
  ++*pl.em_solves;
  return x;
}

SensitivityResult sensitivity(const Pipeline &pipeline, const DensityGrid &predicted) {
  return run_density(pipeline, predicted, true);
}

GradientResult grad_chain_rule(const Pipeline &pl, const DesignParams &p) {
  const LithoModel &model = pl.model();
  if (!model.differentiable())
    throw NonDifferentiableModel(
        fmt::format("litho model '{}' is not differentiable; use the numeric method", model.name()));
  const long solves0 = pl.solve_count();

  const DensityGrid mask = mask_of(pl, p);
  const SensitivityResult s = sensitivity(pl, model.predict(mask));
  ScalarField cot = s.d_eps;
  cot.values *= pl.materials.eps_core() - pl.materials.eps_clad();
  const ScalarField pulled = model.vjp(mask, cot);

  GradientResult out;
  out.fom = s.eval.fom;
  out.per_wavelength = s.eval.per_wavelength;
  out.method = GradientMethod::ChainRule;
  out.grad.assign(p.size(), 0.0);
  parallel_for(p.size(), pl.threads, [&](std::size_t i) {
    try {
      const SparseColumn col = to_sparse(mask_jacobian_column(pl.device, p, i, pl.mask_step));
      double g = 0.0;
      for (std::size_t k = 0; k < col.cells.size(); ++k)
        g += pulled.values[col.cells[k]] * col.values[k];
      out.grad[i] = g;
    } catch (const Error &) {
      rethrow_for_parameter(i);
    }
  });
  out.em_solves = pl.solve_count() - solves0;
  return out;
}

GradientResult grad_numeric_perturbation(const Pipeline &pl, const DesignParams &p, double h) {
  if (!(h > 0.0)) throw ConfigError("gradcheck.h_nm", "finite-difference step must be positive");
  const LithoModel &model = pl.model();
  const long solves0 = pl.solve_count();

  const DensityGrid base_pred = model.predict(mask_of(pl, p));
  const SensitivityResult s = sensitivity(pl, base_pred);
  const double deps = pl.materials.eps_core() - pl.materials.eps_clad();

  GradientResult out;
  out.fom = s.eval.fom;
  out.per_wavelength = s.eval.per_wavelength;
  out.method = GradientMethod::NumericPerturbation;
  out.grad.assign(p.size(), 0.0);
  parallel_for(p.size(), pl.threads, [&](std::size_t i) {
    try {
      const bool up = p.upper.empty() || p.values[i] + h <= p.upper[i];
      const bool down = p.lower.empty() || p.values[i] - h >= p.lower[i];
      auto predicted_at = [&](double delta) {
        auto v = p.values;
        v[i] += delta;
        return model.predict(mask_of(pl, p.with_values(std::move(v)))).values;
      };
      Eigen::ArrayXd diff;
      if (up && down)
        diff = (predicted_at(h) - predicted_at(-h)) / (2.0 * h);
      else if (up)
        diff = (predicted_at(h) - base_pred.values) / h;
      else
        diff = (base_pred.values - predicted_at(-h)) / h;
      out.grad[i] = deps * (s.d_eps.values * diff).sum();
    } catch (const Error &) {
      rethrow_for_parameter(i);
    }
  });
  out.em_solves = pl.solve_count() - solves0;
  return out;
}

GradientResult grad_brute_force(const Pipeline &pl, const DesignParams &p, double h) {
  if (!(h > 0.0)) throw ConfigError("gradcheck.h_nm", "finite-difference step must be positive");
  if (p.size() > kBruteForceWarnLimit)
    fmt::print(stderr, "warning: brute-force gradient over {} parameters needs {} evaluations\n",
               p.size(), 2 * p.size() + 1);
  const long solves0 = pl.solve_count();

  const Evaluation base = evaluate(pl, p);
  GradientResult out;
  out.fom = base.fom;
  out.per_wavelength = base.per_wavelength;
  out.method = GradientMethod::BruteForce;
  out.grad.assign(p.size(), 0.0);
  parallel_for(p.size(), pl.threads, [&](std::size_t i) {
    try {
      const bool up = p.upper.empty() || p.values[i] + h <= p.upper[i];
      const bool down = p.lower.empty() || p.values[i] - h >= p.lower[i];
      auto at = [&](double delta) {
        auto v = p.values;
        v[i] += delta;
        return eval_fom(pl, p.with_values(std::move(v))).transmission;
      };
      if (up && down)
        out.grad[i] = (at(h) - at(-h)) / (2.0 * h);
      else if (up)
        out.grad[i] = (at(h) - base.fom.transmission) / h;
      else
        out.grad[i] = (base.fom.transmission - at(-h)) / h;
    } catch (const Error &) {
      rethrow_for_parameter(i);
    }
  });
  out.em_solves = pl.solve_count() - solves0;
  return out;
}

GradientResult compute_gradient(GradientMethod method, const Pipeline &pipeline,
                                const DesignParams &p, double h) {
  switch (method) {
    case GradientMethod::ChainRule: return grad_chain_rule(pipeline, p);
    case GradientMethod::NumericPerturbation: return grad_numeric_perturbation(pipeline, p, h);
    case GradientMethod::BruteForce: return grad_brute_force(pipeline, p, h);
  }
  throw Error("unknown gradient method");
}

}  // namespace faid
