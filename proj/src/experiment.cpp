#include "moe/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <thread>

#include "moe/serialization.hpp"

namespace moe {

namespace {

ExpertSpec make_expert(ExpertFamily family, int d, int degree = 1) {
  ExpertSpec e;
  e.family = family;
  e.input_dim = d;
  e.degree = degree;
  return e;
}

std::string loss_name(LossSelector sel, ScoreKind score) {
  const bool fully = score == ScoreKind::kFullyQuadratic;
  if (sel == LossSelector::kSparse) return fully ? "L1" : "L4";
  return fully ? "L3" : "L5";
}

std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

const char* to_string(Scenario s) {
  switch (s) {
    case Scenario::kFig1aRelu:
      return "fig1a";
    case Scenario::kFig1bLinear:
      return "fig1b";
    case Scenario::kFig2aSparse:
      return "fig2a";
    case Scenario::kFig2bDense:
      return "fig2b";
    case Scenario::kCustom:
      return "custom";
  }
  return "?";
}

Scenario scenario_from_name(const std::string& name) {
  if (name == "fig1a") return Scenario::kFig1aRelu;
  if (name == "fig1b") return Scenario::kFig1bLinear;
  if (name == "fig2a") return Scenario::kFig2aSparse;
  if (name == "fig2b") return Scenario::kFig2bDense;
  if (name == "custom") return Scenario::kCustom;
  throw std::invalid_argument("unknown scenario: " + name);
}

ExperimentConfig scenario_config(Scenario s, std::uint64_t seed) {
  ExperimentConfig cfg;
  cfg.scenario = s;
  cfg.name = to_string(s);
  cfg.seed = seed;
  // Warm-started fits share one basin, so one optimizer run per trial keeps
  // the sweeps tractable; restarts stay available through the config.
  cfg.fit.restarts = 1;
  cfg.fit.max_iters = 400;
  cfg.fit.grad_tol = 2e-8;
  const int d = cfg.input_dim;
  const auto relu = make_expert(ExpertFamily::kTwoLayerRelu, d);
  const auto linear = make_expert(ExpertFamily::kLinear, d);
  const auto sig = GatingKind::kSigmoidElementwise;
  const auto soft = GatingKind::kSoftmaxOverExperts;
  switch (s) {
    case Scenario::kFig1aRelu:
      cfg.regime = Regime::kDense;
      cfg.curves = {{"sigmoid", sig, sig, relu, LossSelector::kDense},
                    {"softmax", soft, soft, relu, LossSelector::kDense}};
      break;
    case Scenario::kFig1bLinear:
      cfg.regime = Regime::kDense;
      cfg.curves = {{"sigmoid", sig, sig, linear, LossSelector::kDense},
                    {"softmax", soft, soft, linear, LossSelector::kDense}};
      break;
    case Scenario::kFig2aSparse:
      cfg.regime = Regime::kSparse;
      cfg.curves = {{"relu", sig, sig, relu, LossSelector::kSparse},
                    {"linear", sig, sig, linear, LossSelector::kSparse}};
      break;
    case Scenario::kFig2bDense:
      cfg.regime = Regime::kDense;
      cfg.curves = {{"relu", sig, sig, relu, LossSelector::kDense},
                    {"linear", sig, sig, linear, LossSelector::kDense}};
      break;
    case Scenario::kCustom:
      cfg.curves = {{"sigmoid", sig, sig, relu, LossSelector::kDense}};
      break;
  }
  return cfg;
}

MixingMeasure make_ground_truth(int input_dim, int n_experts, ScoreKind score,
                                Regime regime, const ExpertSpec& expert,
                                GatingKind gating, CounterRng& rng) {
  if (n_experts < 1 || input_dim < 1)
    throw std::invalid_argument("make_ground_truth: bad sizes");
  const int d = input_dim;
  const double sd = 1.0 / std::sqrt(static_cast<double>(d));
  MixingMeasure g;
  g.expert = expert;
  g.score = score;
  g.gating = gating;
  const int q = expert.param_dim();
  for (int j = 0; j < n_experts; ++j) {
    Atom a;
    a.A.resize(d, d);
    for (int u = 0; u < d; ++u)
      for (int v = u; v < d; ++v) {
        a.A(u, v) = rng.next_gaussian(0.0, sd);
        a.A(v, u) = a.A(u, v);
      }
    a.b.resize(score == ScoreKind::kFullyQuadratic ? d : 0);
    for (int u = 0; u < a.b.size(); ++u) a.b[u] = rng.next_gaussian(0.0, sd);
    a.c = rng.next_gaussian(0.0, sd);
    a.eta.resize(q);
    for (int k = 0; k < q; ++k) a.eta[k] = rng.next_gaussian(0.0, sd);
    g.atoms.push_back(std::move(a));
  }
  if (regime == Regime::kSparse) {
    for (int j = n_experts - 2; j < n_experts; ++j) {
      if (j < 0) continue;
      g.atoms[j].A.setZero();
      g.atoms[j].b.setZero();
      g.atoms[j].c = 0.0;
    }
  }
  return g;
}

MixingMeasure make_ground_truth(const ExperimentConfig& cfg, CounterRng& rng) {
  if (cfg.curves.empty())
    throw std::invalid_argument("make_ground_truth: config has no curves");
  return make_ground_truth(cfg.input_dim, cfg.n_truth_experts, cfg.score,
                           cfg.regime, cfg.curves[0].expert,
                           cfg.curves[0].truth_gating, rng);
}

SlopeEstimate fit_slope(const std::vector<std::pair<double, double>>& points) {
  std::vector<std::pair<double, double>> logs;
  for (const auto& [n, loss] : points) {
    if (!(loss > 0.0) || !std::isfinite(loss)) {
      std::cerr << "fit_slope: skipping non-positive loss at n=" << n << "\n";
      continue;
    }
    logs.emplace_back(std::log(n), std::log(loss));
  }
  if (logs.size() < 2)
    throw std::invalid_argument("fit_slope: need at least two positive points");
  const int k = static_cast<int>(logs.size());
  double sx = 0, sy = 0;
  for (const auto& [x, y] : logs) {
    sx += x;
    sy += y;
  }
  const double mx = sx / k, my = sy / k;
  double sxx = 0, sxy = 0;
  for (const auto& [x, y] : logs) {
    sxx += (x - mx) * (x - mx);
    sxy += (x - mx) * (y - my);
  }
  SlopeEstimate est;
  est.n_points = k;
  est.slope = sxy / sxx;
  est.intercept = my - est.slope * mx;
  if (k > 2) {
    double ssr = 0;
    for (const auto& [x, y] : logs) {
      const double r = y - (est.intercept + est.slope * x);
      ssr += r * r;
    }
    est.stderr_slope = std::sqrt(ssr / (k - 2) / sxx);
  }
  return est;
}

std::vector<CurveSummary> summarize_records(
    const std::vector<SweepRecord>& records) {
  std::vector<std::string> order;
  std::map<std::string, std::map<int, std::vector<double>>> grouped;
  for (const SweepRecord& r : records) {
    if (grouped.find(r.curve) == grouped.end()) order.push_back(r.curve);
    grouped[r.curve][r.n].push_back(r.loss);
  }
  std::vector<CurveSummary> out;
  for (const std::string& label : order) {
    CurveSummary cs;
    cs.curve = label;
    for (const auto& [n, losses] : grouped[label]) {
      double sum = 0;
      int k = 0;
      for (double v : losses)
        if (std::isfinite(v)) {
          sum += v;
          ++k;
        }
      if (k == 0) continue;
      const double mean = sum / k;
      double var = 0;
      for (double v : losses)
        if (std::isfinite(v)) var += (v - mean) * (v - mean);
      cs.n.push_back(n);
      cs.mean_loss.push_back(mean);
      cs.std_loss.push_back(k > 1 ? std::sqrt(var / (k - 1)) : 0.0);
    }
    std::vector<std::pair<double, double>> pts;
    for (size_t i = 0; i < cs.n.size(); ++i)
      if (cs.mean_loss[i] > 0.0)
        pts.emplace_back(static_cast<double>(cs.n[i]), cs.mean_loss[i]);
    if (pts.size() >= 2) {
      cs.slope = fit_slope(pts);
      cs.slope_defined = true;
    }
    out.push_back(std::move(cs));
  }
  return out;
}

SweepResult run_sweep(const ExperimentConfig& cfg, int jobs) {
  if (cfg.curves.empty()) throw std::invalid_argument("run_sweep: no curves");
  if (cfg.trials < 1 || cfg.n_grid.empty())
    throw std::invalid_argument("run_sweep: bad grid/trials");

  const int n_curves = static_cast<int>(cfg.curves.size());
  std::vector<MixingMeasure> truths;
  std::vector<std::vector<int>> pools;
  for (int c = 0; c < n_curves; ++c) {
    CounterRng rng(cfg.seed, RngStream::kTruth);
    truths.push_back(make_ground_truth(cfg.input_dim, cfg.n_truth_experts,
                                       cfg.score, cfg.regime,
                                       cfg.curves[c].expert,
                                       cfg.curves[c].truth_gating, rng));
    std::vector<int> pool;
    if (cfg.regime == Regime::kSparse) {
      // Over-specification belongs to the zero-gating atoms; that is what
      // defines the sparse regime.
      for (int j = std::max(0, cfg.n_truth_experts - 2);
           j < cfg.n_truth_experts; ++j)
        pool.push_back(j);
    }
    pools.push_back(pool);
  }

  struct Task {
    int curve, n_idx, trial;
  };
  std::vector<Task> tasks;
  for (int c = 0; c < n_curves; ++c)
    for (size_t ni = 0; ni < cfg.n_grid.size(); ++ni)
      for (int t = 0; t < cfg.trials; ++t)
        tasks.push_back({c, static_cast<int>(ni), t});

  SweepResult result;
  result.config = cfg;
  result.records.resize(tasks.size());

  std::atomic<size_t> next{0};
  auto worker = [&]() {
    for (;;) {
      const size_t idx = next.fetch_add(1);
      if (idx >= tasks.size()) return;
      const Task& task = tasks[idx];
      const CurveSpec& curve = cfg.curves[task.curve];
      const int n = cfg.n_grid[task.n_idx];

      SynthesisConfig sc;
      sc.input_dim = cfg.input_dim;
      sc.sample_count = n;
      sc.noise_var = cfg.noise_var;
      sc.ground_truth = truths[task.curve];
      sc.seed = derive_seed(cfg.seed, task.curve, task.n_idx, task.trial);

      FitConfig fc = cfg.fit;
      if (fc.n_fit_experts == 0)
        fc.n_fit_experts = cfg.n_truth_experts +
                           (cfg.regime == Regime::kSparse ? 1 : 0);
      fc.fit_gating = curve.fit_gating;
      fc.duplicate_pool = pools[task.curve];
      fc.seed = derive_seed(cfg.seed ^ 0x5bf03635ULL, task.curve, task.n_idx,
                            task.trial);

      SweepRecord rec;
      rec.curve = cfg.name + "/" + curve.label;
      rec.gating = curve.fit_gating;
      rec.n = n;
      rec.trial = task.trial;
      rec.loss_kind = loss_name(curve.loss, cfg.score);
      const auto t0 = std::chrono::steady_clock::now();
      try {
        const Dataset data = synthesize_dataset(sc);
        const FitResult fr = fit(data, fc);
        const VoronoiAssignment assign =
            assign_cells(fr.estimate, truths[task.curve]);
        const LossReport loss =
            curve.loss == LossSelector::kSparse
                ? loss_sparse(fr.estimate, truths[task.curve], assign)
                : loss_dense(fr.estimate, truths[task.curve], assign);
        rec.loss = loss.value;
        rec.objective = fr.final_objective;
      } catch (const std::exception& e) {
        rec.loss = std::numeric_limits<double>::quiet_NaN();
        rec.objective = std::numeric_limits<double>::quiet_NaN();
      }
      rec.seconds =
          std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
              .count();
      result.records[idx] = std::move(rec);
    }
  };
  const int n_threads = std::max(1, jobs);
  if (n_threads == 1) {
    worker();
  } else {
    std::vector<std::thread> threads;
    for (int t = 0; t < n_threads; ++t) threads.emplace_back(worker);
    for (auto& th : threads) th.join();
  }

  // Failure accounting per (curve, n).
  std::map<std::pair<int, int>, std::pair<int, int>> counts;  // fail, total
  for (size_t i = 0; i < tasks.size(); ++i) {
    auto& [fails, total] = counts[{tasks[i].curve, tasks[i].n_idx}];
    ++total;
    if (!std::isfinite(result.records[i].loss)) ++fails;
  }
  for (const auto& [key, ft] : counts) {
    if (ft.first * 5 > ft.second)
      throw std::runtime_error(
          "run_sweep: over 20% failed fits for curve " +
          cfg.curves[key.first].label + " at n=" +
          std::to_string(cfg.n_grid[key.second]));
  }

  result.curves = summarize_records(result.records);
  return result;
}

void emit_outputs(const SweepResult& result, const std::string& out_dir) {
  if (result.records.empty())
    throw std::invalid_argument("emit_outputs: no records");
  namespace fs = std::filesystem;
  fs::create_directories(out_dir);

  {
    std::ofstream csv(fs::path(out_dir) / "records.csv");
    if (!csv) throw std::runtime_error("emit_outputs: cannot write records.csv");
    csv << "scenario,gating,n,trial,loss_kind,loss,objective,seconds\n";
    for (const SweepRecord& r : result.records)
      csv << r.curve << ',' << to_string(r.gating) << ',' << r.n << ','
          << r.trial << ',' << r.loss_kind << ',' << fmt_double(r.loss) << ','
          << fmt_double(r.objective) << ',' << fmt_double(r.seconds) << '\n';
  }
  {
    std::ofstream js(fs::path(out_dir) / "summary.json");
    if (!js) throw std::runtime_error("emit_outputs: cannot write summary.json");
    js << summary_json(result).dump(2) << '\n';
  }
  write_plot_svg(result.curves, (fs::path(out_dir) / "plot.svg").string());
}

std::vector<SweepRecord> read_records_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::string line;
  if (!std::getline(in, line))
    throw std::runtime_error("empty records file " + path);
  std::vector<SweepRecord> out;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string field;
    SweepRecord r;
    std::getline(ss, r.curve, ',');
    std::getline(ss, field, ',');
    r.gating = field == "softmax" ? GatingKind::kSoftmaxOverExperts
                                  : GatingKind::kSigmoidElementwise;
    std::getline(ss, field, ',');
    r.n = std::stoi(field);
    std::getline(ss, field, ',');
    r.trial = std::stoi(field);
    std::getline(ss, r.loss_kind, ',');
    std::getline(ss, field, ',');
    r.loss = std::stod(field);
    std::getline(ss, field, ',');
    r.objective = std::stod(field);
    std::getline(ss, field, ',');
    r.seconds = std::stod(field);
    out.push_back(std::move(r));
  }
  return out;
}

void write_plot_svg(const std::vector<CurveSummary>& curves,
                    const std::string& path) {
  if (curves.empty()) throw std::invalid_argument("write_plot_svg: no curves");
  const double width = 860, height = 560;
  const double ml = 80, mr = 200, mt = 40, mb = 60;
  double xmin = 1e300, xmax = -1e300, ymin = 1e300, ymax = -1e300;
  for (const CurveSummary& c : curves)
    for (size_t i = 0; i < c.n.size(); ++i) {
      if (!(c.mean_loss[i] > 0.0)) continue;
      xmin = std::min(xmin, std::log10(static_cast<double>(c.n[i])));
      xmax = std::max(xmax, std::log10(static_cast<double>(c.n[i])));
      const double lo =
          std::max(c.mean_loss[i] - 3.0 * c.std_loss[i], c.mean_loss[i] / 50.0);
      const double hi = c.mean_loss[i] + 3.0 * c.std_loss[i];
      ymin = std::min(ymin, std::log10(lo));
      ymax = std::max(ymax, std::log10(hi));
    }
  if (!(xmax > -1e300))
    throw std::invalid_argument("write_plot_svg: no positive losses");
  if (xmax - xmin < 1e-9) xmax = xmin + 1.0;
  if (ymax - ymin < 1e-9) ymax = ymin + 1.0;
  ymin -= 0.08 * (ymax - ymin);
  ymax += 0.08 * (ymax - ymin);

  auto px = [&](double lx) { return ml + (lx - xmin) / (xmax - xmin) * (width - ml - mr); };
  auto py = [&](double ly) { return height - mb - (ly - ymin) / (ymax - ymin) * (height - mt - mb); };
  const char* palette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd",
                           "#ff7f0e", "#8c564b"};

  std::ofstream svg(path);
  if (!svg) throw std::runtime_error("cannot write " + path);
  svg << "<svg xmlns='http://www.w3.org/2000/svg' width='" << width
      << "' height='" << height << "' viewBox='0 0 " << width << " " << height
      << "'>\n<rect width='100%' height='100%' fill='white'/>\n";
  svg << "<line x1='" << ml << "' y1='" << height - mb << "' x2='"
      << width - mr << "' y2='" << height - mb
      << "' stroke='black' stroke-width='1'/>\n";
  svg << "<line x1='" << ml << "' y1='" << mt << "' x2='" << ml << "' y2='"
      << height - mb << "' stroke='black' stroke-width='1'/>\n";
  for (int e = static_cast<int>(std::ceil(xmin)); e <= std::floor(xmax); ++e) {
    svg << "<line x1='" << px(e) << "' y1='" << mt << "' x2='" << px(e)
        << "' y2='" << height - mb
        << "' stroke='#dddddd' stroke-width='0.5'/>\n";
    svg << "<text x='" << px(e) << "' y='" << height - mb + 20
        << "' font-size='12' text-anchor='middle'>1e" << e << "</text>\n";
  }
  for (int e = static_cast<int>(std::ceil(ymin)); e <= std::floor(ymax); ++e) {
    svg << "<line x1='" << ml << "' y1='" << py(e) << "' x2='" << width - mr
        << "' y2='" << py(e) << "' stroke='#dddddd' stroke-width='0.5'/>\n";
    svg << "<text x='" << ml - 8 << "' y='" << py(e) + 4
        << "' font-size='12' text-anchor='end'>1e" << e << "</text>\n";
  }
  svg << "<text x='" << (ml + width - mr) / 2 << "' y='" << height - 16
      << "' font-size='13' text-anchor='middle'>sample size n</text>\n";
  svg << "<text x='20' y='" << (mt + height - mb) / 2
      << "' font-size='13' text-anchor='middle' transform='rotate(-90 20 "
      << (mt + height - mb) / 2 << ")'>mean Voronoi loss</text>\n";

  int ci = 0;
  for (const CurveSummary& c : curves) {
    const char* color = palette[ci % 6];
    std::ostringstream pts;
    for (size_t i = 0; i < c.n.size(); ++i) {
      if (!(c.mean_loss[i] > 0.0)) continue;
      const double x = px(std::log10(static_cast<double>(c.n[i])));
      const double y = py(std::log10(c.mean_loss[i]));
      pts << x << ',' << y << ' ';
      const double lo =
          std::max(c.mean_loss[i] - 3.0 * c.std_loss[i], c.mean_loss[i] / 50.0);
      const double hi = c.mean_loss[i] + 3.0 * c.std_loss[i];
      svg << "<line class='errbar' x1='" << x << "' y1='" << py(std::log10(lo))
          << "' x2='" << x << "' y2='" << py(std::log10(hi)) << "' stroke='"
          << color << "' stroke-width='1'/>\n";
      svg << "<circle cx='" << x << "' cy='" << y << "' r='3' fill='" << color
          << "'/>\n";
    }
    svg << "<polyline points='" << pts.str() << "' fill='none' stroke='"
        << color << "' stroke-width='1.5'/>\n";
    if (c.slope_defined) {
      const double lx0 = std::log10(static_cast<double>(c.n.front()));
      const double lx1 = std::log10(static_cast<double>(c.n.back()));
      // trend in natural logs: ln y = intercept + slope * ln n
      auto trend = [&](double lx) {
        return (c.slope.intercept + c.slope.slope * lx * std::log(10.0)) /
               std::log(10.0);
      };
      svg << "<line class='trend' x1='" << px(lx0) << "' y1='"
          << py(trend(lx0)) << "' x2='" << px(lx1) << "' y2='"
          << py(trend(lx1)) << "' stroke='" << color
          << "' stroke-width='1.2' stroke-dasharray='6,4'/>\n";
    }
    const double ly = mt + 18 + 20 * ci;
    svg << "<line x1='" << width - mr + 10 << "' y1='" << ly << "' x2='"
        << width - mr + 34 << "' y2='" << ly << "' stroke='" << color
        << "' stroke-width='2'/>\n";
    char label[160];
    if (c.slope_defined)
      std::snprintf(label, sizeof(label), "%s (slope %.3f)", c.curve.c_str(),
                    c.slope.slope);
    else
      std::snprintf(label, sizeof(label), "%s", c.curve.c_str());
    svg << "<text x='" << width - mr + 40 << "' y='" << ly + 4
        << "' font-size='12'>" << label << "</text>\n";
    ++ci;
  }
  svg << "</svg>\n";
}

std::vector<SlopeBand> acceptance_bands(Scenario s) {
  switch (s) {
    case Scenario::kFig1aRelu:
      return {{"sigmoid", -0.66, -0.36}, {"softmax", -0.39, -0.09}};
    case Scenario::kFig1bLinear:
      return {{"sigmoid", -0.61, -0.31}, {"softmax", -0.22, 0.08}};
    case Scenario::kFig2aSparse:
      return {{"relu", -0.69, -0.39}, {"linear", -0.22, 0.08}};
    case Scenario::kFig2bDense:
      return {{"relu", -0.68, -0.38}, {"linear", -0.59, -0.29}};
    case Scenario::kCustom:
      return {};
  }
  return {};
}

}  // namespace moe
