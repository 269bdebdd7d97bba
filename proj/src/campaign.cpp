#include "faid/campaign.hpp"

#include <charconv>
#include <sstream>

#include <fmt/format.h>

#include "faid/errors.hpp"

namespace faid {

namespace {

Pipeline fresh_counter(Pipeline p) {
  p.em_solves = std::make_shared<std::atomic<long>>(0);
  return p;
}

std::string header(std::uint64_t fingerprint) {
  return "# config_fingerprint=" + fingerprint_hex(fingerprint) + "\n";
}

}  // namespace

std::string to_string(DesignMode mode) {
  return mode == DesignMode::Ideal ? "id" : "faid";
}

DesignMode design_mode_from_string(const std::string &name) {
  if (name == "id") return DesignMode::Ideal;
  if (name == "faid") return DesignMode::FabricationAware;
  throw ConfigError("mode", "unknown mode '" + name + "' (id, faid)");
}

RunResult run_design(const Pipeline &pipeline, DesignMode mode, const DesignParams &p0,
                     const RunOptions &options) {
  p0.validate();
  // Both pipelines share one counter so the trace reports all solves.
  Pipeline model = fresh_counter(pipeline);
  Pipeline ideal = with_identity_litho(model);
  const Pipeline &driving = mode == DesignMode::Ideal ? ideal : model;
  const Pipeline &cross = mode == DesignMode::Ideal ? model : ideal;

  RunResult run;
  run.mode = mode;
  run.method = driving.model().differentiable() ? GradientMethod::ChainRule
                                                : GradientMethod::NumericPerturbation;
  run.final_params = p0;

  FomValue last_fom;
  const Objective objective = [&](const std::vector<double> &x) {
    const DesignParams p = p0.with_values(x);
    p.validate();
    const GradientResult g = compute_gradient(run.method, driving, p, options.fd_step);
    last_fom = g.fom;
    ObjectiveValue v{ 1.0 - g.fom.transmission, g.grad };
    for (double &d : v.grad) d = -d;
    return v;
  };
  // Accepted iterates are always the last point the objective saw.
  const auto on_iteration = [&](const OptIteration &it) {
    IterationRecord rec;
    rec.iteration = it.iteration;
    rec.p = it.x;
    const FomValue other = eval_fom(cross, p0.with_values(it.x));
    rec.ideal = mode == DesignMode::Ideal ? last_fom : other;
    rec.predicted = mode == DesignMode::Ideal ? other : last_fom;
    rec.grad_norm = it.grad_norm;
    rec.step = it.step;
    rec.em_solves = model.solve_count();
    run.trace.push_back(std::move(rec));
  };

  const OptResult opt =
      minimize(objective, p0.values, p0.lower, p0.upper, options.optimizer, on_iteration);
  run.stop = opt.stop;
  run.message = opt.message;
  if (!opt.trace.empty()) run.final_params = p0.with_values(opt.x);
  return run;
}

CrossEvaluation cross_evaluate(const Pipeline &pipeline, const DesignParams &p) {
  return { eval_fom(with_identity_litho(pipeline), p), eval_fom(pipeline, p) };
}

CampaignResult run_campaign(const Pipeline &pipeline, const DesignParams &p0,
                            const RunOptions &options, std::uint64_t fingerprint) {
  CampaignResult out;
  out.fingerprint = fingerprint;
  out.id_run = run_design(pipeline, DesignMode::Ideal, p0, options);
  out.faid_run = run_design(pipeline, DesignMode::FabricationAware, p0, options);
  out.id_final = cross_evaluate(pipeline, out.id_run.final_params);
  out.faid_final = cross_evaluate(pipeline, out.faid_run.final_params);
  return out;
}

std::string fingerprint_hex(std::uint64_t fingerprint) {
  return fmt::format("{:016x}", fingerprint);
}

std::string trace_csv(const RunResult &run, std::uint64_t fingerprint) {
  std::string out = header(fingerprint);
  out += "iter,ideal_loss_db,predicted_loss_db,grad_norm,step,em_solves\n";
  for (const auto &r : run.trace)
    out += fmt::format("{},{},{},{},{},{}\n", r.iteration, r.ideal.insertion_loss_db,
                       r.predicted.insertion_loss_db, r.grad_norm, r.step, r.em_solves);
  return out;
}

std::string params_csv(const std::vector<double> &values, std::uint64_t fingerprint) {
  std::string out = header(fingerprint);
  out += "index,value\n";
  for (std::size_t i = 0; i < values.size(); ++i) out += fmt::format("{},{}\n", i, values[i]);
  return out;
}

std::vector<double> parse_params_csv(const std::string &text) {
  std::vector<double> values;
  std::istringstream in(text);
  std::string line;
  std::size_t offset = 0;
  bool seen_header = false;
  while (std::getline(in, line)) {
    const std::size_t here = offset;
    offset += line.size() + 1;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    if (!seen_header) {
      seen_header = true;
      if (line == "index,value") continue;
    }
    const auto comma = line.find(',');
    if (comma == std::string::npos) throw FormatError(here, "expected 'index,value'");
    std::size_t index = 0;
    double value = 0.0;
    const char *b = line.data();
    auto r1 = std::from_chars(b, b + comma, index);
    auto r2 = std::from_chars(b + comma + 1, b + line.size(), value);
    if (r1.ec != std::errc() || r1.ptr != b + comma || r2.ec != std::errc()
        || r2.ptr != b + line.size())
      throw FormatError(here, "malformed parameter row '" + line + "'");
    if (index != values.size())
      throw FormatError(here, fmt::format("expected index {}, found {}", values.size(), index));
    values.push_back(value);
  }
  if (values.empty()) throw FormatError(0, "no parameter rows");
  return values;
}

std::string report_csv(const CampaignResult &r) {
  std::string out = header(r.fingerprint);
  out += "id_ideal_db,id_predicted_db,faid_predicted_db,faid_ideal_db\n";
  out += fmt::format("{},{},{},{}\n", r.id_final.ideal.insertion_loss_db,
                     r.id_final.predicted.insertion_loss_db,
                     r.faid_final.predicted.insertion_loss_db,
                     r.faid_final.ideal.insertion_loss_db);
  return out;
}

}  // namespace faid
