#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "moe/estimation.hpp"
#include "moe/model.hpp"
#include "moe/rng.hpp"
#include "moe/voronoi.hpp"

namespace moe {

enum class Scenario { kFig1aRelu, kFig1bLinear, kFig2aSparse, kFig2bDense, kCustom };
enum class Regime { kSparse, kDense };
// Which Voronoi loss a curve tracks against the truth.
enum class LossSelector { kSparse, kDense };

struct SlopeEstimate {
  double slope = 0.0;
  double intercept = 0.0;
  double stderr_slope = 0.0;
  int n_points = 0;
};

// One plotted curve: the generating model's gating, the fitted model's
// gating, and the expert family.  Data always comes from the curve's own
// generating model, so each fit is well specified.
struct CurveSpec {
  std::string label;
  GatingKind truth_gating = GatingKind::kSigmoidElementwise;
  GatingKind fit_gating = GatingKind::kSigmoidElementwise;
  ExpertSpec expert;
  LossSelector loss = LossSelector::kDense;
};

struct ExperimentConfig {
  Scenario scenario = Scenario::kCustom;
  std::string name = "custom";
  int input_dim = 8;
  int n_truth_experts = 8;
  ScoreKind score = ScoreKind::kFullyQuadratic;
  Regime regime = Regime::kDense;
  double noise_var = 0.01;
  std::vector<int> n_grid = {100, 316, 1000, 3162, 10000, 31623, 100000};
  int trials = 20;
  std::uint64_t seed = 1;
  FitConfig fit;  // n_fit_experts == 0 resolves to N*+1 (sparse) or N* (dense)
  std::vector<CurveSpec> curves;
};

// Built-in scenario presets reproducing the reference experiments.
ExperimentConfig scenario_config(Scenario s, std::uint64_t seed = 1);
Scenario scenario_from_name(const std::string& name);

struct SweepRecord {
  std::string curve;   // "<scenario>/<curve label>"
  GatingKind gating;   // gating of the fitted model
  int n = 0;
  int trial = 0;
  std::string loss_kind;
  double loss = 0.0;       // NaN marks a failed fit
  double objective = 0.0;
  double seconds = 0.0;
};

struct CurveSummary {
  std::string curve;
  std::vector<int> n;
  std::vector<double> mean_loss;
  std::vector<double> std_loss;
  SlopeEstimate slope;
  bool slope_defined = false;
};

struct SweepResult {
  ExperimentConfig config;
  std::vector<SweepRecord> records;
  std::vector<CurveSummary> curves;
};

// Ground truth of one curve: N* atoms with gating and expert entries drawn
// N(0, 1/d); the A block is drawn symmetric (the score only reads sym(A)).
// The sparse regime zeroes the gating parameters of the last two atoms.
MixingMeasure make_ground_truth(int input_dim, int n_experts, ScoreKind score,
                                Regime regime, const ExpertSpec& expert,
                                GatingKind gating, CounterRng& rng);
// Convenience overload over the config's first curve.
MixingMeasure make_ground_truth(const ExperimentConfig& cfg, CounterRng& rng);

SweepResult run_sweep(const ExperimentConfig& cfg, int jobs = 1);

// OLS of log(mean loss) on log(n).  Non-positive losses are skipped with a
// warning; fewer than two surviving points is an error.
SlopeEstimate fit_slope(const std::vector<std::pair<double, double>>& points);

std::vector<CurveSummary> summarize_records(
    const std::vector<SweepRecord>& records);

// Writes records.csv, summary.json and plot.svg into out_dir.
void emit_outputs(const SweepResult& result, const std::string& out_dir);

std::vector<SweepRecord> read_records_csv(const std::string& path);
void write_plot_svg(const std::vector<CurveSummary>& curves,
                    const std::string& path);

struct SlopeBand {
  std::string curve_suffix;
  double lo = 0.0;
  double hi = 0.0;
};
// Expected slope windows per built-in scenario (used by `sweep --check`).
std::vector<SlopeBand> acceptance_bands(Scenario s);

const char* to_string(Scenario s);

}  // namespace moe
