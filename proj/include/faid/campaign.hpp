#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "faid/optimizer.hpp"
#include "faid/pipeline.hpp"

namespace faid {

enum class DesignMode { Ideal, FabricationAware };

std::string to_string(DesignMode mode);
DesignMode design_mode_from_string(const std::string &name);

struct IterationRecord {
  int iteration = 0;
  std::vector<double> p;
  FomValue ideal;      // identity litho
  FomValue predicted;  // campaign litho model
  double grad_norm = 0.0;
  double step = 0.0;
  long em_solves = 0;  // cumulative for this run, cross-evaluations included
};

struct RunResult {
  DesignMode mode = DesignMode::Ideal;
  GradientMethod method = GradientMethod::ChainRule;
  std::vector<IterationRecord> trace;
  DesignParams final_params;
  StopReason stop = StopReason::MaxIterations;
  std::string message;
};

struct CrossEvaluation {
  FomValue ideal;
  FomValue predicted;
};

struct CampaignResult {
  RunResult id_run;
  RunResult faid_run;
  CrossEvaluation id_final;
  CrossEvaluation faid_final;
  std::uint64_t fingerprint = 0;
};

struct RunOptions {
  OptConfig optimizer;
  double fd_step = 1e-3;  // um, numeric gradient step
};

/// One optimisation. The objective is 1 - mean T through the identity model
/// (Ideal) or through pipeline.litho (FabricationAware); the other FOM is
/// cross-evaluated at every accepted iterate. The FAID gradient uses the chain
/// rule when the model is differentiable and the numeric path otherwise.
RunResult run_design(const Pipeline &pipeline, DesignMode mode, const DesignParams &p0,
                     const RunOptions &options);

/// ID and FAID runs from the same p0, then both final designs evaluated under
/// both models.
CampaignResult run_campaign(const Pipeline &pipeline, const DesignParams &p0,
                            const RunOptions &options, std::uint64_t fingerprint);

CrossEvaluation cross_evaluate(const Pipeline &pipeline, const DesignParams &p);

std::string fingerprint_hex(std::uint64_t fingerprint);
/// "# config_fingerprint=..." then
/// iter,ideal_loss_db,predicted_loss_db,grad_norm,step,em_solves.
std::string trace_csv(const RunResult &run, std::uint64_t fingerprint);
/// index,value
std::string params_csv(const std::vector<double> &values, std::uint64_t fingerprint);
std::vector<double> parse_params_csv(const std::string &text);
/// id_ideal_db,id_predicted_db,faid_predicted_db,faid_ideal_db
std::string report_csv(const CampaignResult &result);

}  // namespace faid
