#include "faid/cli.hpp"

#include <cmath>
#include <filesystem>
#include <optional>
#include <ostream>

#include <CLI11.hpp>
#include <fmt/format.h>

#include "faid/errors.hpp"
#include "faid/grid_io.hpp"

namespace faid {

namespace fs = std::filesystem;

namespace {

struct Globals {
  std::string config;
  std::string out_dir;
  std::optional<long long> seed;
  std::optional<int> threads;
};

struct Context {
  RunConfig cfg;
  Pipeline pipeline;
  fs::path out;
  std::uint64_t fingerprint = 0;
};

std::string comment(std::uint64_t fp) {
  return "# config_fingerprint=" + fingerprint_hex(fp) + "\n";
}

Context load(const Globals &g, const CliHooks &hooks) {
  Context c;
  c.cfg = load_config(g.config);
  if (g.seed) c.cfg = with_override(c.cfg, "run.seed", std::to_string(*g.seed));
  if (g.threads) c.cfg = with_override(c.cfg, "run.threads", std::to_string(*g.threads));
  if (!g.out_dir.empty()) c.cfg.output_dir = g.out_dir;
  c.pipeline = make_pipeline(c.cfg);
  if (hooks.make_litho) c.pipeline.litho = hooks.make_litho(c.cfg);
  c.out = c.cfg.output_dir;
  std::error_code ec;
  fs::create_directories(c.out, ec);
  if (ec)
    throw ConfigError("output.dir", fmt::format("cannot create '{}': {}", c.out.string(), ec.message()));
  c.fingerprint = c.cfg.fingerprint();
  return c;
}

DesignParams read_params(const Context &c, const std::string &file) {
  const DesignParams base = initial_params(c.cfg, c.pipeline.device);
  if (file.empty()) return base;
  const auto values = parse_params_csv(read_file(file));
  if (values.size() != base.size())
    throw ValidationError(fmt::format("params file has {} values, device '{}' expects {}",
                                      values.size(), to_string(c.cfg.device_kind), base.size()));
  DesignParams p = base.with_values(values);
  p.validate();
  return p;
}

void write_design(const Context &c, const std::string &prefix, const DesignParams &p) {
  const PolygonSet poly = device_polygons(c.pipeline.device, p);
  write_file_atomic(c.out / (prefix + "_polygons.txt"),
                    encode_polygons(poly, "config_fingerprint=" + fingerprint_hex(c.fingerprint)
                                              + " params_hash=" + fmt::format("{:016x}", parameter_hash(p.values))));
  write_file_atomic(c.out / (prefix + "_params.csv"), params_csv(p.values, c.fingerprint));
  write_file_atomic(c.out / (prefix + "_mask.txt"),
                    encode_density_grid(rasterize(poly, c.pipeline.device.grid)));
}

void log_iteration(std::ostream &err, DesignMode mode, const IterationRecord &r) {
  err << fmt::format("[{}] iter {:3d}  ideal {:.6f} dB  predicted {:.6f} dB  |g| {:.3e}\n",
                     to_string(mode), r.iteration, r.ideal.insertion_loss_db,
                     r.predicted.insertion_loss_db, r.grad_norm);
}

int finish_run(const Context &c, const RunResult &run, std::ostream &out, std::ostream &err) {
  const std::string prefix = to_string(run.mode);
  write_file_atomic(c.out / (prefix + "_trace.csv"), trace_csv(run, c.fingerprint));
  for (const auto &r : run.trace) log_iteration(err, run.mode, r);
  if (run.stop == StopReason::EvaluationFailed) {
    err << fmt::format("error: {} run aborted: {}\n", prefix, run.message);
    return kExitRuntimeError;
  }
  write_design(c, prefix, run.final_params);
  const CrossEvaluation fin = cross_evaluate(c.pipeline, run.final_params);
  std::string summary = comment(c.fingerprint);
  summary += "mode,ideal_loss_db,predicted_loss_db,stop_reason,iterations\n";
  summary += fmt::format("{},{},{},{},{}\n", prefix, fin.ideal.insertion_loss_db,
                         fin.predicted.insertion_loss_db, to_string(run.stop),
                         run.trace.empty() ? 0 : run.trace.back().iteration);
  write_file_atomic(c.out / (prefix + "_summary.csv"), summary);
  out << fmt::format("{}: ideal {:.6f} dB, predicted {:.6f} dB ({})\n", prefix,
                     fin.ideal.insertion_loss_db, fin.predicted.insertion_loss_db,
                     to_string(run.stop));
  return kExitOk;
}

int cmd_optimize(const Context &c, const std::string &mode, std::ostream &out, std::ostream &err) {
  const DesignMode m = design_mode_from_string(mode);
  const RunResult run = run_design(c.pipeline, m, initial_params(c.cfg, c.pipeline.device), c.cfg.run);
  return finish_run(c, run, out, err);
}

int cmd_compare(const Context &c, std::ostream &out, std::ostream &err) {
  const DesignParams p0 = initial_params(c.cfg, c.pipeline.device);
  const CampaignResult r = run_campaign(c.pipeline, p0, c.cfg.run, c.fingerprint);
  for (const RunResult *run : { &r.id_run, &r.faid_run }) {
    write_file_atomic(c.out / (to_string(run->mode) + "_trace.csv"), trace_csv(*run, c.fingerprint));
    for (const auto &rec : run->trace) log_iteration(err, run->mode, rec);
    if (run->stop == StopReason::EvaluationFailed) {
      err << fmt::format("error: {} run aborted: {}\n", to_string(run->mode), run->message);
      return kExitRuntimeError;
    }
    write_design(c, to_string(run->mode), run->final_params);
  }
  write_file_atomic(c.out / "report.csv", report_csv(r));
  out << fmt::format("ID ideal {:.6f} dB | ID predicted {:.6f} dB | FAID predicted {:.6f} dB | "
                     "FAID ideal {:.6f} dB\n",
                     r.id_final.ideal.insertion_loss_db, r.id_final.predicted.insertion_loss_db,
                     r.faid_final.predicted.insertion_loss_db, r.faid_final.ideal.insertion_loss_db);
  return kExitOk;
}

struct EvaluateArgs {
  std::string params, litho = "model", density;
  bool dump_fields = false;
};

int cmd_evaluate(const Context &c, const EvaluateArgs &a, std::ostream &out) {
  if (a.litho != "ideal" && a.litho != "model")
    throw ConfigError("litho", "--litho must be 'ideal' or 'model'");
  const Pipeline pl = a.litho == "ideal" ? with_identity_litho(c.pipeline) : c.pipeline;
  DensityGrid predicted;
  if (!a.density.empty()) {
    if (!a.params.empty()) throw ConfigError("density", "--density and --params are exclusive");
    predicted = load_density_grid(a.density);
    if (!(predicted.grid == pl.device.grid))
      throw ValidationError(fmt::format(
          "density grid {}x{} (dx {}) does not match the device grid {}x{} (dx {})",
          predicted.grid.nx, predicted.grid.ny, predicted.grid.dx, pl.device.grid.nx,
          pl.device.grid.ny, pl.device.grid.dx));
  } else {
    const DesignParams p = read_params(c, a.params);
    predicted = pl.model().predict(rasterize(device_polygons(pl.device, p), pl.device.grid));
  }
  const Evaluation e = evaluate_density(pl, predicted);

  std::string csv = comment(c.fingerprint);
  csv += "wavelength_um,transmission,loss_db\n";
  for (std::size_t k = 0; k < pl.wavelengths.size(); ++k) {
    const auto &f = e.per_wavelength[k];
    csv += fmt::format("{},{},{}\n", pl.wavelengths[k], f.transmission, f.insertion_loss_db);
    out << fmt::format("{:.4f} um  T = {:.8f}  loss = {:.6f} dB\n", pl.wavelengths[k],
                       f.transmission, f.insertion_loss_db);
  }
  write_file_atomic(c.out / "evaluate.csv", csv);
  std::string summary = comment(c.fingerprint);
  summary += "litho,mean_transmission,loss_db\n";
  summary += fmt::format("{},{},{}\n", a.litho, e.fom.transmission, e.fom.insertion_loss_db);
  write_file_atomic(c.out / "evaluate_summary.csv", summary);
  out << fmt::format("mean T = {:.10f}  loss = {:.9f} dB\n", e.fom.transmission,
                     e.fom.insertion_loss_db);

  if (a.dump_fields)
    for (double wl : pl.wavelengths) {
      const FieldSolution x = forward_field(pl, predicted, wl);
      write_file_atomic(c.out / fmt::format("field_{:.4f}um.txt", wl),
                        encode_complex_grid(x.grid, x.values));
    }
  return kExitOk;
}

struct PredictArgs {
  std::string mask, output, contour;
};

int cmd_predict(const Context &c, const PredictArgs &a, std::ostream &out) {
  const DensityGrid mask = load_density_grid(a.mask);
  const DensityGrid pred = c.pipeline.model().predict(mask);
  const fs::path target = a.output.empty() ? c.out / "predicted.txt" : fs::path(a.output);
  save_density_grid(target, pred);
  if (!a.contour.empty())
    write_file_atomic(a.contour,
                      encode_polygons(contour_polygons(pred, 0.5),
                                      "config_fingerprint=" + fingerprint_hex(c.fingerprint)
                                          + " contour=0.5"));
  out << fmt::format("predicted {}x{} grid with '{}' -> {}\n", pred.grid.nx, pred.grid.ny,
                     c.pipeline.model().name(), target.string());
  return kExitOk;
}

struct GradcheckArgs {
  std::string method = "chain", against = "brute", params;
};

int cmd_gradcheck(const Context &c, const GradcheckArgs &a, std::ostream &out) {
  const GradientMethod m = gradient_method_from_string(a.method);
  const GradientMethod ref = gradient_method_from_string(a.against);
  const DesignParams p = read_params(c, a.params);
  if ((m == GradientMethod::BruteForce || ref == GradientMethod::BruteForce)
      && p.size() > kBruteForceWarnLimit)
    throw ConfigError("device.kind", fmt::format("brute-force comparisons need <= {} parameters, "
                                                 "device has {}", kBruteForceWarnLimit, p.size()));
  const double h = c.cfg.gradcheck_h;
  const GradientResult g = compute_gradient(m, c.pipeline, p, h);
  const GradientResult r = compute_gradient(ref, c.pipeline, p, h);

  double scale = 0.0;
  for (double v : r.grad) scale = std::max(scale, std::abs(v));
  double worst = 0.0;
  std::size_t worst_index = 0;
  bool small_ok = true;
  std::string csv = comment(c.fingerprint);
  csv += fmt::format("index,{},{},rel_error\n", a.method, a.against);
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double diff = std::abs(g.grad[i] - r.grad[i]);
    const bool significant = std::abs(r.grad[i]) >= 1e-4 * scale && scale > 0.0;
    const double rel = significant ? diff / std::abs(r.grad[i]) : 0.0;
    if (significant && rel > worst) {
      worst = rel;
      worst_index = i;
    }
    if (!significant && diff >= 1e-6) small_ok = false;
    csv += fmt::format("{},{},{},{}\n", i, g.grad[i], r.grad[i], rel);
  }
  write_file_atomic(c.out / "gradcheck.csv", csv);
  const bool pass = worst < c.cfg.gradcheck_threshold && small_ok;
  out << fmt::format("{} vs {}: max relative error {:.3e} (parameter {}), threshold {:.3e}; "
                     "em solves {} / {} -> {}\n",
                     a.method, a.against, worst, worst_index, c.cfg.gradcheck_threshold,
                     g.em_solves, r.em_solves, pass ? "PASS" : "FAIL");
  if (!small_ok) out << "small components differ by more than 1e-6\n";
  return pass ? kExitOk : kExitCheckFailed;
}

}  // namespace

int run_cli(const std::vector<std::string> &args, std::ostream &out, std::ostream &err,
            const CliHooks &hooks) {
  CLI::App app{ "Fabrication-aware inverse design toolkit", "faid" };
  app.require_subcommand(1);
  app.fallthrough();

  Globals g;
  app.add_option("--config", g.config, "Run configuration file")->required();
  app.add_option("--out-dir", g.out_dir, "Output directory (overrides output.dir)");
  app.add_option("--seed", g.seed, "Seed (overrides run.seed)");
  app.add_option("--threads", g.threads, "Worker threads (overrides run.threads)");

  std::string mode = "faid";
  auto *opt = app.add_subcommand("optimize", "Optimise one design");
  opt->add_option("--mode", mode, "id or faid")->check(CLI::IsMember({ "id", "faid" }));

  auto *cmp = app.add_subcommand("compare", "ID vs FAID campaign and report");

  EvaluateArgs ev;
  auto *eva = app.add_subcommand("evaluate", "Insertion loss of a design");
  eva->add_option("--params", ev.params, "Parameter CSV (default: starting point)");
  eva->add_option("--litho", ev.litho, "ideal or model")->check(CLI::IsMember({ "ideal", "model" }));
  eva->add_option("--density", ev.density, "Evaluate a predicted density grid directly");
  eva->add_flag("--dump-fields", ev.dump_fields, "Write forward fields");

  PredictArgs pr;
  auto *pre = app.add_subcommand("predict", "Run the litho model on a mask");
  pre->add_option("--mask", pr.mask, "Mask density grid")->required();
  pre->add_option("--output", pr.output, "Predicted grid path");
  pre->add_option("--contour", pr.contour, "Write 0.5-level contour polygons here");

  GradcheckArgs gc;
  auto *grc = app.add_subcommand("gradcheck", "Compare two gradient methods");
  grc->add_option("--method", gc.method, "chain, numeric or brute")
      ->check(CLI::IsMember({ "chain", "numeric", "brute" }));
  grc->add_option("--against", gc.against, "chain, numeric or brute")
      ->check(CLI::IsMember({ "chain", "numeric", "brute" }));
  grc->add_option("--params", gc.params, "Parameter CSV (default: starting point)");

  std::vector<std::string> rev(args.rbegin(), args.rend() - (args.empty() ? 0 : 1));
  try {
    app.parse(rev);
  } catch (const CLI::CallForHelp &) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp &) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError &e) {
    err << "error: " << e.what() << "\n";
    return kExitInputError;
  }

  try {
    const Context c = load(g, hooks);
    if (opt->parsed()) return cmd_optimize(c, mode, out, err);
    if (cmp->parsed()) return cmd_compare(c, out, err);
    if (eva->parsed()) return cmd_evaluate(c, ev, out);
    if (pre->parsed()) return cmd_predict(c, pr, out);
    if (grc->parsed()) return cmd_gradcheck(c, gc, out);
    return kExitInputError;
  } catch (const ConfigError &e) {
    err << "config error: " << e.what() << "\n";
    return kExitInputError;
  } catch (const FormatError &e) {
    err << "input error: " << e.what() << "\n";
    return kExitInputError;
  } catch (const ValidationError &e) {
    err << "input error: " << e.what() << "\n";
    return kExitInputError;
  } catch (const std::exception &e) {
    err << "error: " << e.what() << "\n";
    return kExitRuntimeError;
  }
}

}  // namespace faid
