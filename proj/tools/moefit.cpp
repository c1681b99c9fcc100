#include <CLI11.hpp>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "moe/attention.hpp"
#include "moe/estimation.hpp"
#include "moe/experiment.hpp"
#include "moe/identifiability.hpp"
#include "moe/serialization.hpp"
#include "moe/voronoi.hpp"

namespace {

using namespace moe;

// Random attention instance with shapes up to the given caps.
double attn_check_residual(int trials, int max_n, int max_d, std::uint64_t seed) {
  CounterRng rng(seed, RngStream::kProbe);
  double worst = 0.0;
  for (int t = 0; t < trials; ++t) {
    const int n = 1 + static_cast<int>(rng.next_u64() % max_n);
    const int d = 1 + static_cast<int>(rng.next_u64() % max_d);
    const int dk = 1 + static_cast<int>(rng.next_u64() % max_d);
    const int dv = 1 + static_cast<int>(rng.next_u64() % max_d);
    TokenSequence seq;
    seq.x.resize(n, d);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < d; ++j) seq.x(i, j) = rng.next_gaussian();
    AttentionWeights w;
    w.w_q.resize(d, dk);
    w.w_k.resize(d, dk);
    w.w_v.resize(d, dv);
    for (auto* m : {&w.w_q, &w.w_k, &w.w_v})
      for (int i = 0; i < m->rows(); ++i)
        for (int j = 0; j < m->cols(); ++j) (*m)(i, j) = rng.next_gaussian();
    const Eigen::MatrixXd sig = sigmoid_attn(seq, w);
    const Eigen::MatrixXd soft = softmax_attn(seq, w);
    for (int i = 0; i < n; ++i) {
      const Eigen::RowVectorXd ms =
          attn_row_as_moe(seq, w, i, GatingKind::kSigmoidElementwise);
      const Eigen::RowVectorXd mo =
          attn_row_as_moe(seq, w, i, GatingKind::kSoftmaxOverExperts);
      worst = std::max(worst, (ms - sig.row(i)).cwiseAbs().maxCoeff());
      worst = std::max(worst, (mo - soft.row(i)).cwiseAbs().maxCoeff());
    }
  }
  return worst;
}

Json load_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  return Json::parse(in);
}

MixingMeasure load_measure(const std::string& path) {
  const Json j = load_json(path);
  // Accept either a bare measure or a fit result holding one.
  if (j.contains("estimate")) return measure_from_json(j.at("estimate"));
  return measure_from_json(j);
}

ExperimentConfig config_from_json(const Json& j, Scenario scenario,
                                  std::uint64_t seed) {
  ExperimentConfig cfg = scenario_config(scenario, seed);
  if (j.contains("d")) cfg.input_dim = j.at("d").get<int>();
  if (j.contains("n_truth_experts"))
    cfg.n_truth_experts = j.at("n_truth_experts").get<int>();
  if (j.contains("score")) cfg.score = score_from_name(j.at("score"));
  if (j.contains("regime"))
    cfg.regime = j.at("regime") == "sparse" ? Regime::kSparse : Regime::kDense;
  if (j.contains("noise_var")) cfg.noise_var = j.at("noise_var").get<double>();
  if (j.contains("n_grid")) cfg.n_grid = j.at("n_grid").get<std::vector<int>>();
  if (j.contains("trials")) cfg.trials = j.at("trials").get<int>();
  if (j.contains("seed")) cfg.seed = j.at("seed").get<std::uint64_t>();
  if (j.contains("fit")) {
    const Json& f = j.at("fit");
    if (f.contains("n_fit_experts"))
      cfg.fit.n_fit_experts = f.at("n_fit_experts").get<int>();
    if (f.contains("restarts")) cfg.fit.restarts = f.at("restarts").get<int>();
    if (f.contains("max_iters")) cfg.fit.max_iters = f.at("max_iters").get<int>();
    if (f.contains("step_size")) cfg.fit.step_size = f.at("step_size").get<double>();
    if (f.contains("grad_tol")) cfg.fit.grad_tol = f.at("grad_tol").get<double>();
    if (f.contains("init_perturb_scale"))
      cfg.fit.init_perturb_scale = f.at("init_perturb_scale").get<double>();
    if (f.contains("box_radius"))
      cfg.fit.bounds.box_radius = f.at("box_radius").get<double>();
  }
  if (j.contains("curves")) {
    cfg.curves.clear();
    for (const Json& c : j.at("curves")) {
      CurveSpec spec;
      spec.label = c.at("label").get<std::string>();
      spec.truth_gating = gating_from_name(c.at("truth_gating"));
      spec.fit_gating = gating_from_name(c.at("fit_gating"));
      spec.expert = expert_from_name(c.at("expert"), cfg.input_dim);
      spec.loss = c.value("loss", "dense") == std::string("sparse")
                      ? LossSelector::kSparse
                      : LossSelector::kDense;
      cfg.curves.push_back(std::move(spec));
    }
  } else {
    for (CurveSpec& c : cfg.curves) c.expert.input_dim = cfg.input_dim;
  }
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Sigmoid/softmax quadratic-gating MoE estimation harness"};
  app.require_subcommand(1);

  // attn-check
  auto* attn = app.add_subcommand(
      "attn-check", "verify the attention-row/MoE equivalence on random instances");
  int trials = 200, max_n = 5, max_d = 4;
  std::uint64_t seed = 1;
  attn->add_option("--trials", trials);
  attn->add_option("--max-n", max_n);
  attn->add_option("--max-d", max_d);
  attn->add_option("--seed", seed);

  // synth
  auto* synth = app.add_subcommand("synth", "synthesize a regression dataset");
  std::string synth_config, synth_out = "data";
  synth->add_option("--config", synth_config)->required();
  synth->add_option("--out", synth_out);

  // fit
  auto* fitc = app.add_subcommand("fit", "least-squares fit of a dataset");
  std::string fit_data, fit_config, fit_out = "fit.json";
  fitc->add_option("--data", fit_data)->required();
  fitc->add_option("--config", fit_config)->required();
  fitc->add_option("--out", fit_out);

  // loss
  auto* lossc = app.add_subcommand("loss", "Voronoi loss between two measures");
  std::string loss_fitted, loss_truth, loss_kind = "l1";
  double loss_r = 1.0;
  lossc->add_option("--fitted", loss_fitted)->required();
  lossc->add_option("--truth", loss_truth)->required();
  lossc->add_option("--kind", loss_kind)
      ->check(CLI::IsMember({"l1", "l2r", "l3", "l4", "l5"}));
  lossc->add_option("--r", loss_r);

  // ident-probe
  auto* probec = app.add_subcommand("ident-probe",
                                    "numeric identifiability probe");
  std::string probe_mode = "strong", probe_expert = "relu", probe_score = "full";
  int probe_atoms = 2, probe_dim = 2;
  std::uint64_t probe_seed = 1;
  probec->add_option("--mode", probe_mode)
      ->check(CLI::IsMember({"strong", "weak", "partial-strong", "partial-weak"}));
  probec->add_option("--expert", probe_expert);
  probec->add_option("--score", probe_score)->check(CLI::IsMember({"full", "partial"}));
  probec->add_option("--atoms", probe_atoms);
  probec->add_option("--dim", probe_dim);
  probec->add_option("--seed", probe_seed);

  // sweep
  auto* sweepc = app.add_subcommand("sweep", "sample-size sweep");
  std::string sweep_scenario = "fig1a", sweep_config, sweep_out = "out";
  int jobs = 1;
  bool check = false;
  std::uint64_t sweep_seed = 1;
  sweepc->add_option("--scenario", sweep_scenario);
  sweepc->add_option("--config", sweep_config);
  sweepc->add_option("--out", sweep_out);
  sweepc->add_option("--jobs", jobs);
  sweepc->add_option("--seed", sweep_seed);
  sweepc->add_flag("--check", check, "exit 2 when slopes leave acceptance bands");

  // plot
  auto* plotc = app.add_subcommand("plot", "regenerate plot from records");
  std::string plot_records, plot_out = "plot.svg";
  plotc->add_option("--records", plot_records)->required();
  plotc->add_option("--out", plot_out);

  CLI11_PARSE(app, argc, argv);

  try {
    if (*attn) {
      const double worst = attn_check_residual(trials, max_n, max_d, seed);
      const bool pass = worst <= 1e-10;
      std::printf("max equivalence residual over %d instances: %.3e\n%s\n",
                  trials, worst, pass ? "PASS" : "FAIL");
      return pass ? 0 : 1;
    }
    if (*synth) {
      const Json j = load_json(synth_config);
      SynthesisConfig sc;
      sc.input_dim = j.at("d").get<int>();
      sc.sample_count = j.at("n").get<int>();
      sc.noise_var = j.value("noise_var", 0.0);
      sc.seed = j.value("seed", 1);
      if (j.contains("ground_truth")) {
        sc.ground_truth = measure_from_json(j.at("ground_truth"));
      } else {
        const Json& gen = j.at("generate");
        CounterRng rng(j.value("truth_seed", sc.seed), RngStream::kTruth);
        sc.ground_truth = make_ground_truth(
            sc.input_dim, gen.value("n_experts", 8),
            score_from_name(gen.value("score", "full")),
            gen.value("regime", "dense") == std::string("sparse")
                ? Regime::kSparse
                : Regime::kDense,
            expert_from_name(gen.value("expert", "relu"), sc.input_dim),
            gating_from_name(gen.value("gating", "sigmoid")), rng);
      }
      const Dataset data = synthesize_dataset(sc);
      write_dataset(data, synth_out + ".csv", synth_out + ".json");
      std::printf("wrote %s.csv and %s.json (n=%d, d=%d)\n", synth_out.c_str(),
                  synth_out.c_str(), data.size(), sc.input_dim);
      return 0;
    }
    if (*fitc) {
      std::string base = fit_data;
      if (base.size() > 4 && base.substr(base.size() - 4) == ".csv")
        base = base.substr(0, base.size() - 4);
      const Dataset data = read_dataset(base + ".csv", base + ".json");
      const Json j = load_json(fit_config);
      FitConfig fc;
      fc.n_fit_experts =
          j.value("n_fit_experts", data.config.ground_truth.size() + 1);
      fc.restarts = j.value("restarts", 5);
      fc.max_iters = j.value("max_iters", 600);
      fc.step_size = j.value("step_size", 0.01);
      fc.grad_tol = j.value("grad_tol", 1e-7);
      fc.init_perturb_scale = j.value("init_perturb_scale", 0.05);
      fc.bounds.box_radius = j.value("box_radius", 10.0);
      fc.seed = j.value("seed", 1);
      if (j.contains("fit_gating"))
        fc.fit_gating = gating_from_name(j.at("fit_gating"));
      const FitResult result = fit(data, fc);
      std::ofstream out(fit_out);
      out << to_json(result).dump(2) << '\n';
      std::printf("objective %.6e after %d iterations (restart %d)\n",
                  result.final_objective, result.iterations,
                  result.restart_index);
      return 0;
    }
    if (*lossc) {
      const MixingMeasure fitted = load_measure(loss_fitted);
      const MixingMeasure truth = load_measure(loss_truth);
      const VoronoiAssignment assign = assign_cells(fitted, truth);
      LossReport rep;
      if (loss_kind == "l1" || loss_kind == "l4") {
        rep = loss_sparse(fitted, truth, assign);
      } else if (loss_kind == "l3" || loss_kind == "l5") {
        rep = loss_dense(fitted, truth, assign);
      } else {
        rep = loss_minimax_r(fitted, truth, assign, loss_r);
      }
      const bool fully = fitted.score == ScoreKind::kFullyQuadratic;
      if ((loss_kind == "l1" || loss_kind == "l2r" || loss_kind == "l3") && !fully)
        throw std::invalid_argument(loss_kind + " requires the fully quadratic score");
      if ((loss_kind == "l4" || loss_kind == "l5") && fully)
        throw std::invalid_argument(loss_kind + " requires the partially quadratic score");
      std::cout << to_json(rep, loss_kind).dump(2) << '\n';
      return 0;
    }
    if (*probec) {
      CounterRng rng(probe_seed, RngStream::kProbe);
      const ProbeReport rep =
          probe(probe_mode_from_name(probe_mode),
                expert_from_name(probe_expert, probe_dim),
                score_from_name(probe_score), probe_atoms, rng);
      std::cout << to_json(rep).dump(2) << '\n';
      return 0;
    }
    if (*sweepc) {
      ExperimentConfig cfg;
      const Scenario sc = scenario_from_name(sweep_scenario);
      if (!sweep_config.empty())
        cfg = config_from_json(load_json(sweep_config), sc, sweep_seed);
      else
        cfg = scenario_config(sc, sweep_seed);
      const SweepResult result = run_sweep(cfg, jobs);
      emit_outputs(result, sweep_out);
      bool ok = true;
      for (const CurveSummary& c : result.curves) {
        std::printf("%-24s slope %s\n", c.curve.c_str(),
                    c.slope_defined
                        ? (std::to_string(c.slope.slope) + " +- " +
                           std::to_string(c.slope.stderr_slope))
                              .c_str()
                        : "(undefined)");
      }
      if (check) {
        for (const SlopeBand& band : acceptance_bands(sc)) {
          for (const CurveSummary& c : result.curves) {
            if (c.curve.size() < band.curve_suffix.size() ||
                c.curve.compare(c.curve.size() - band.curve_suffix.size(),
                                band.curve_suffix.size(),
                                band.curve_suffix) != 0)
              continue;
            if (!c.slope_defined || c.slope.slope < band.lo ||
                c.slope.slope > band.hi) {
              std::printf("CHECK FAIL: %s slope outside [%g, %g]\n",
                          c.curve.c_str(), band.lo, band.hi);
              ok = false;
            }
          }
        }
      }
      return ok ? 0 : 2;
    }
    if (*plotc) {
      const auto records = read_records_csv(plot_records);
      const auto curves = summarize_records(records);
      write_plot_svg(curves, plot_out);
      std::printf("wrote %s\n", plot_out.c_str());
      return 0;
    }
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
