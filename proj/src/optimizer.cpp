#include "faid/optimizer.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <exception>

#include <fmt/format.h>

#include "faid/errors.hpp"

namespace faid {

namespace {

using Vec = std::vector<double>;

double dot(const Vec &a, const Vec &b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

double max_abs(const Vec &a) {
  double m = 0.0;
  for (double v : a) m = std::max(m, std::abs(v));
  return m;
}

struct Pair {
  Vec s, y;
  double rho;
};

class Problem {
 public:
  Problem(const Vec &lower, const Vec &upper) : lo_(lower), hi_(upper) {}

  void project(Vec &x) const {
    for (std::size_t i = 0; i < x.size(); ++i) x[i] = std::clamp(x[i], lo_[i], hi_[i]);
  }

  // Variables pinned at a bound with the gradient pushing outward.
  bool active(const Vec &x, const Vec &g, std::size_t i) const {
    return (x[i] <= lo_[i] && g[i] > 0.0) || (x[i] >= hi_[i] && g[i] < 0.0);
  }

  Vec projected_gradient(const Vec &x, const Vec &g) const {
    Vec pg = g;
    for (std::size_t i = 0; i < x.size(); ++i)
      if (active(x, g, i)) pg[i] = 0.0;
    return pg;
  }

 private:
  const Vec &lo_, &hi_;
};

// Two-loop recursion on the free subspace.
Vec lbfgs_direction(const Vec &pg, const std::deque<Pair> &pairs) {
  Vec q = pg;
  std::vector<double> alpha(pairs.size());
  for (std::size_t k = pairs.size(); k-- > 0;) {
    alpha[k] = pairs[k].rho * dot(pairs[k].s, q);
    for (std::size_t i = 0; i < q.size(); ++i) q[i] -= alpha[k] * pairs[k].y[i];
  }
  if (!pairs.empty()) {
    const Pair &last = pairs.back();
    const double gamma = dot(last.s, last.y) / dot(last.y, last.y);
    for (double &v : q) v *= gamma;
  }
  for (std::size_t k = 0; k < pairs.size(); ++k) {
    const double beta = pairs[k].rho * dot(pairs[k].y, q);
    for (std::size_t i = 0; i < q.size(); ++i) q[i] += pairs[k].s[i] * (alpha[k] - beta);
  }
  for (double &v : q) v = -v;
  return q;
}

}  // namespace

void OptConfig::validate() const {
  if (max_iterations < 1) throw ConfigError("optimizer.max_iterations", "must be >= 1");
  if (history < 1) throw ConfigError("optimizer.history", "must be >= 1");
  if (!(grad_tol >= 0.0)) throw ConfigError("optimizer.grad_tol", "must be >= 0");
  if (!(initial_step > 0.0)) throw ConfigError("optimizer.initial_step_nm", "must be > 0");
  if (!(c1 > 0.0 && c1 < 1.0)) throw ConfigError("optimizer.c1", "must lie in (0, 1)");
  if (max_line_search < 1) throw ConfigError("optimizer.max_line_search", "must be >= 1");
}

std::string to_string(StopReason reason) {
  switch (reason) {
    case StopReason::GradientTolerance: return "gradient_tolerance";
    case StopReason::MaxIterations: return "max_iterations";
    case StopReason::LineSearchFailed: return "line_search_failed";
    case StopReason::EvaluationFailed: return "evaluation_failed";
  }
  return "unknown";
}

OptResult minimize(const Objective &objective, Vec x0, const Vec &lower, const Vec &upper,
                   const OptConfig &cfg,
                   const std::function<void(const OptIteration &)> &on_iteration) {
  cfg.validate();
  const std::size_t n = x0.size();
  if (lower.size() != n || upper.size() != n)
    throw ValidationError("bounds and starting point differ in length");
  for (std::size_t i = 0; i < n; ++i)
    if (!(lower[i] <= upper[i])) throw ValidationError("lower bound exceeds upper bound");
  for (std::size_t i = 0; i < n; ++i)
    if (!(x0[i] >= lower[i] && x0[i] <= upper[i]))
      throw ValidationError(fmt::format("starting point component {} = {} outside [{}, {}]", i,
                                        x0[i], lower[i], upper[i]));

  const Problem box(lower, upper);
  OptResult res;
  Vec x = std::move(x0);

  auto evaluate = [&](const Vec &at, ObjectiveValue &out) {
    try {
      out = objective(at);
      if (out.grad.size() != n) throw Error("objective returned a gradient of the wrong length");
      if (!std::isfinite(out.value)) throw Error("objective returned a non-finite value");
      return true;
    } catch (const std::exception &e) {
      res.stop = StopReason::EvaluationFailed;
      res.message = e.what();
      return false;
    }
  };
  auto record = [&](int k, const ObjectiveValue &v, double step) {
    OptIteration it{ k, x, v.value, std::sqrt(dot(box.projected_gradient(x, v.grad),
                                                  box.projected_gradient(x, v.grad))),
                     step };
    res.trace.push_back(it);
    res.x = x;
    res.value = v.value;
    if (on_iteration) on_iteration(res.trace.back());
  };

  ObjectiveValue cur;
  if (!evaluate(x, cur)) return res;
  record(0, cur, 0.0);

  std::deque<Pair> pairs;
  for (int k = 1;; ++k) {
    const Vec pg = box.projected_gradient(x, cur.grad);
    if (std::sqrt(dot(pg, pg)) <= cfg.grad_tol) {
      res.stop = StopReason::GradientTolerance;
      return res;
    }
    if (k > cfg.max_iterations) {
      res.stop = StopReason::MaxIterations;
      return res;
    }

    Vec d = lbfgs_direction(pg, pairs);
    for (std::size_t i = 0; i < n; ++i)
      if (pg[i] == 0.0 && cur.grad[i] != 0.0) d[i] = 0.0;
    if (!(dot(d, pg) < 0.0)) {
      pairs.clear();
      d = pg;
      for (double &v : d) v = -v;
    }
    double alpha = pairs.empty() ? cfg.initial_step / max_abs(d) : 1.0;

    bool accepted = false;
    Vec xt;
    ObjectiveValue trial;
    for (int t = 0; t < cfg.max_line_search; ++t, alpha *= 0.5) {
      xt = x;
      for (std::size_t i = 0; i < n; ++i) xt[i] += alpha * d[i];
      box.project(xt);
      Vec s(n);
      for (std::size_t i = 0; i < n; ++i) s[i] = xt[i] - x[i];
      const double slope = dot(cur.grad, s);
      if (!(slope < 0.0)) continue;
      if (!evaluate(xt, trial)) return res;
      if (trial.value <= cur.value + cfg.c1 * slope) {
        accepted = true;
        break;
      }
    }
    if (!accepted) {
      res.stop = StopReason::LineSearchFailed;
      return res;
    }

    Pair pr{ Vec(n), Vec(n), 0.0 };
    for (std::size_t i = 0; i < n; ++i) {
      pr.s[i] = xt[i] - x[i];
      pr.y[i] = trial.grad[i] - cur.grad[i];
    }
    const double step = max_abs(pr.s);
    const double sy = dot(pr.s, pr.y);
    if (sy > 1e-12) {
      pr.rho = 1.0 / sy;
      pairs.push_back(std::move(pr));
      if (pairs.size() > static_cast<std::size_t>(cfg.history)) pairs.pop_front();
    }
    x = std::move(xt);
    cur = std::move(trial);
    record(k, cur, step);
  }
}

}  // namespace faid
