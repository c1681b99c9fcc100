#include "moe/serialization.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace moe {

namespace {

Json vector_json(const Eigen::VectorXd& v) {
  Json a = Json::array();
  for (int i = 0; i < v.size(); ++i) a.push_back(v[i]);
  return a;
}

Eigen::VectorXd vector_from_json(const Json& j) {
  Eigen::VectorXd v(j.size());
  for (size_t i = 0; i < j.size(); ++i) v[static_cast<int>(i)] = j[i].get<double>();
  return v;
}

Json matrix_json(const Eigen::MatrixXd& m) {
  Json rows = Json::array();
  for (int r = 0; r < m.rows(); ++r) {
    Json row = Json::array();
    for (int c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    rows.push_back(std::move(row));
  }
  return rows;
}

Eigen::MatrixXd matrix_from_json(const Json& j) {
  const int rows = static_cast<int>(j.size());
  const int cols = rows > 0 ? static_cast<int>(j[0].size()) : 0;
  Eigen::MatrixXd m(rows, cols);
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) m(r, c) = j[r][c].get<double>();
  return m;
}

}  // namespace

Json to_json(const ExpertSpec& spec) {
  return Json{{"family", to_string(spec)},
              {"input_dim", spec.input_dim},
              {"degree", spec.degree}};
}

ExpertSpec expert_spec_from_json(const Json& j) {
  ExpertSpec spec = expert_from_name(j.at("family").get<std::string>(),
                                     j.at("input_dim").get<int>());
  if (j.contains("degree") && spec.family == ExpertFamily::kPolynomial)
    spec.degree = j.at("degree").get<int>();
  return spec;
}

Json to_json(const MixingMeasure& g) {
  Json atoms = Json::array();
  for (const Atom& a : g.atoms)
    atoms.push_back(Json{{"A", matrix_json(a.A)},
                         {"b", vector_json(a.b)},
                         {"c", a.c},
                         {"eta", vector_json(a.eta)}});
  return Json{{"expert", to_json(g.expert)},
              {"score", to_string(g.score)},
              {"gating", to_string(g.gating)},
              {"atoms", std::move(atoms)}};
}

MixingMeasure measure_from_json(const Json& j) {
  MixingMeasure g;
  g.expert = expert_spec_from_json(j.at("expert"));
  g.score = score_from_name(j.at("score").get<std::string>());
  g.gating = gating_from_name(j.at("gating").get<std::string>());
  for (const Json& a : j.at("atoms")) {
    Atom atom;
    atom.A = matrix_from_json(a.at("A"));
    atom.b = vector_from_json(a.at("b"));
    atom.c = a.at("c").get<double>();
    atom.eta = vector_from_json(a.at("eta"));
    g.atoms.push_back(std::move(atom));
  }
  g.validate();
  return g;
}

Json to_json(const FitResult& r) {
  Json restarts = Json::array();
  for (const RestartRecord& rec : r.restarts)
    restarts.push_back(Json{{"initial_objective", rec.initial_objective},
                            {"final_objective", rec.final_objective},
                            {"grad_norm", rec.grad_norm},
                            {"iterations", rec.iterations},
                            {"failed", rec.failed}});
  return Json{{"estimate", to_json(r.estimate)},
              {"objective", r.final_objective},
              {"grad_norm", r.grad_norm},
              {"iterations", r.iterations},
              {"restart_index", r.restart_index},
              {"restarts", std::move(restarts)}};
}

Json to_json(const LossReport& r, const std::string& kind) {
  return Json{{"kind", kind},
              {"value", r.value},
              {"r", r.r},
              {"per_cell_terms", r.per_cell_terms}};
}

Json to_json(const ProbeReport& r) {
  Json fams = Json::array();
  for (const FamilyProbe& f : r.families)
    fams.push_back(Json{{"columns", f.columns},
                        {"benign_rank", f.benign_rank},
                        {"min_singular", f.min_singular}});
  return Json{{"family_size", r.family_size},
              {"min_singular_value", r.min_singular_value},
              {"verdict", to_string(r.verdict)},
              {"threshold", r.threshold},
              {"families", std::move(fams)}};
}

Json summary_json(const SweepResult& result) {
  Json curves = Json::array();
  for (const CurveSummary& c : result.curves) {
    Json per_n = Json::array();
    for (size_t i = 0; i < c.n.size(); ++i)
      per_n.push_back(Json{{"n", c.n[i]},
                           {"mean", c.mean_loss[i]},
                           {"std", c.std_loss[i]}});
    Json jc{{"curve", c.curve}, {"points", std::move(per_n)}};
    if (c.slope_defined) {
      jc["slope"] = c.slope.slope;
      jc["intercept"] = c.slope.intercept;
      jc["slope_stderr"] = c.slope.stderr_slope;
      jc["slope_points"] = c.slope.n_points;
    }
    curves.push_back(std::move(jc));
  }
  return Json{{"scenario", result.config.name},
              {"d", result.config.input_dim},
              {"n_truth_experts", result.config.n_truth_experts},
              {"noise_var", result.config.noise_var},
              {"trials", result.config.trials},
              {"seed", result.config.seed},
              {"curves", std::move(curves)}};
}

void write_dataset(const Dataset& data, const std::string& csv_path,
                   const std::string& json_path) {
  std::ofstream csv(csv_path);
  if (!csv) throw std::runtime_error("cannot write " + csv_path);
  const int d = static_cast<int>(data.x.cols());
  for (int j = 0; j < d; ++j) csv << "x_" << (j + 1) << ',';
  csv << "y\n";
  char buf[40];
  for (int i = 0; i < data.size(); ++i) {
    for (int j = 0; j < d; ++j) {
      std::snprintf(buf, sizeof(buf), "%.17g", data.x(i, j));
      csv << buf << ',';
    }
    std::snprintf(buf, sizeof(buf), "%.17g", data.y[i]);
    csv << buf << '\n';
  }
  Json j{{"input_dim", data.config.input_dim},
         {"sample_count", data.config.sample_count},
         {"noise_var", data.config.noise_var},
         {"seed", data.config.seed},
         {"ground_truth", to_json(data.config.ground_truth)}};
  std::ofstream js(json_path);
  if (!js) throw std::runtime_error("cannot write " + json_path);
  js << j.dump(2) << '\n';
}

Dataset read_dataset(const std::string& csv_path,
                     const std::string& json_path) {
  std::ifstream js(json_path);
  if (!js) throw std::runtime_error("cannot open " + json_path);
  Json j = Json::parse(js);
  Dataset data;
  data.config.input_dim = j.at("input_dim").get<int>();
  data.config.sample_count = j.at("sample_count").get<int>();
  data.config.noise_var = j.at("noise_var").get<double>();
  data.config.seed = j.at("seed").get<std::uint64_t>();
  data.config.ground_truth = measure_from_json(j.at("ground_truth"));

  std::ifstream csv(csv_path);
  if (!csv) throw std::runtime_error("cannot open " + csv_path);
  std::string line;
  if (!std::getline(csv, line)) throw std::runtime_error("empty " + csv_path);
  const int d = data.config.input_dim;
  std::vector<std::vector<double>> rows;
  while (std::getline(csv, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string field;
    std::vector<double> row;
    while (std::getline(ss, field, ',')) row.push_back(std::stod(field));
    if (static_cast<int>(row.size()) != d + 1)
      throw std::runtime_error("bad row width in " + csv_path);
    rows.push_back(std::move(row));
  }
  data.x.resize(static_cast<int>(rows.size()), d);
  data.y.resize(static_cast<int>(rows.size()));
  for (size_t i = 0; i < rows.size(); ++i) {
    for (int jcol = 0; jcol < d; ++jcol)
      data.x(static_cast<int>(i), jcol) = rows[i][jcol];
    data.y[static_cast<int>(i)] = rows[i][d];
  }
  return data;
}

GatingKind gating_from_name(const std::string& name) {
  if (name == "sigmoid") return GatingKind::kSigmoidElementwise;
  if (name == "softmax") return GatingKind::kSoftmaxOverExperts;
  throw std::invalid_argument("unknown gating: " + name);
}

ScoreKind score_from_name(const std::string& name) {
  if (name == "full") return ScoreKind::kFullyQuadratic;
  if (name == "partial") return ScoreKind::kPartiallyQuadratic;
  throw std::invalid_argument("unknown score kind: " + name);
}

ExpertSpec expert_from_name(const std::string& name, int input_dim) {
  ExpertSpec spec;
  spec.input_dim = input_dim;
  if (name == "linear") {
    spec.family = ExpertFamily::kLinear;
  } else if (name.rfind("poly", 0) == 0) {
    spec.family = ExpertFamily::kPolynomial;
    spec.degree = name.size() > 4 ? std::stoi(name.substr(4)) : 2;
  } else if (name == "relu") {
    spec.family = ExpertFamily::kTwoLayerRelu;
  } else if (name == "gelu") {
    spec.family = ExpertFamily::kTwoLayerGelu;
  } else {
    throw std::invalid_argument("unknown expert family: " + name);
  }
  return spec;
}

ProbeMode probe_mode_from_name(const std::string& name) {
  if (name == "strong") return ProbeMode::kStrong;
  if (name == "weak") return ProbeMode::kWeak;
  if (name == "partial-strong") return ProbeMode::kPartialStrong;
  if (name == "partial-weak") return ProbeMode::kPartialWeak;
  throw std::invalid_argument("unknown probe mode: " + name);
}

}  // namespace moe
