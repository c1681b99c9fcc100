#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "moe/model.hpp"
#include "moe/rng.hpp"

namespace moe {

// Synthetic regression data: X_i ~ Uniform([-1,1]^d) i.i.d.,
// Y_i = f_{G*}(X_i) + eps_i with eps_i ~ N(0, noise_var).
struct SynthesisConfig {
  int input_dim = 0;
  int sample_count = 0;
  double noise_var = 0.0;
  MixingMeasure ground_truth;
  std::uint64_t seed = 0;
};

struct Dataset {
  Eigen::MatrixXd x;  // n x d
  Eigen::VectorXd y;  // n
  SynthesisConfig config;
  int size() const { return static_cast<int>(x.rows()); }
};

struct FitConfig {
  int n_fit_experts = 0;      // N; over-specification N > N* is the default use
  int restarts = 5;
  int max_iters = 600;
  double step_size = 0.01;    // Adam base step; decays geometrically to
                              // step_size * step_decay_total by max_iters
  double step_decay_total = 1e-3;
  double grad_tol = 1e-7;     // on the n-normalized gradient norm
  double init_perturb_scale = 0.05;
  ParamBounds bounds;
  std::uint64_t seed = 0;
  // Gating of the fitted model; defaults to the ground truth's gating.
  std::optional<GatingKind> fit_gating;
  // Truth atoms eligible for duplication by over-specified initialization;
  // empty means any atom.  Sparse-regime sweeps restrict this to the
  // zero-gating atoms, matching how the regime is defined.
  std::vector<int> duplicate_pool;
};

struct RestartRecord {
  double initial_objective = 0.0;
  double final_objective = 0.0;
  double grad_norm = 0.0;
  int iterations = 0;
  bool failed = false;
};

struct FitResult {
  MixingMeasure estimate;
  double final_objective = 0.0;
  double grad_norm = 0.0;  // n-normalized gradient norm at termination
  int iterations = 0;
  int restart_index = 0;
  std::vector<RestartRecord> restarts;
};

Dataset synthesize_dataset(const SynthesisConfig& cfg);

// Sum (not mean) of squared residuals, mirroring the least-squares
// objective the estimator minimizes.
double lse_objective(const MixingMeasure& g, const Dataset& data);

// Flat analytic gradient of lse_objective, ordered atom by atom as
// (vec(A) column-major, b, c, eta); b is absent under the partially
// quadratic score.
Eigen::VectorXd lse_gradient(const MixingMeasure& g, const Dataset& data);

// Packing helpers shared by the optimizer and the gradient tests.
Eigen::VectorXd pack_measure(const MixingMeasure& g);
MixingMeasure unpack_measure(const Eigen::VectorXd& theta,
                             const MixingMeasure& layout);

// First n_star atoms are the truth atoms plus i.i.d. N(0, scale^2)
// perturbations (the A-block noise is drawn symmetric, since the score
// reads only the symmetric part of A); the remaining n_experts - n_star
// atoms duplicate randomly chosen truth atoms with independent noise.
// Everything is clamped to the box.
MixingMeasure init_perturbed(const MixingMeasure& truth, int n_experts,
                             double scale, CounterRng& rng,
                             const ParamBounds& bounds = {},
                             const std::vector<int>& duplicate_pool = {});

// Full-batch Adam over `restarts` perturbed initializations; returns the
// restart with the lowest best-seen objective.  Deterministic given
// cfg.seed.  Restarts that hit a non-finite objective are recorded and
// skipped; if every restart fails, throws std::runtime_error.
FitResult fit(const Dataset& data, const FitConfig& cfg);

// (1/n) sum_i (f_a(X_i) - f_b(X_i))^2.
double regression_mean_squared_gap(const MixingMeasure& a,
                                   const MixingMeasure& b,
                                   const Eigen::MatrixXd& x);

}  // namespace moe
