#include "moe/estimation.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace moe {

namespace {

// Gating parameters of one atom as a flat block: (vec(A), b, c) under the
// fully quadratic score, (vec(A), c) under the partially quadratic one.
int gating_block_size(int d, ScoreKind score) {
  return score == ScoreKind::kFullyQuadratic ? d * d + d + 1 : d * d + 1;
}

// Row-wise gating feature map matching the block layout above:
// phi(x) = (x (x) x, x, 1) resp. (x (x) x, 1), so that s = phi(x) . w.
Eigen::MatrixXd gating_features(const Eigen::MatrixXd& x, ScoreKind score) {
  const int n = static_cast<int>(x.rows());
  const int d = static_cast<int>(x.cols());
  Eigen::MatrixXd phi(n, gating_block_size(d, score));
  for (int v = 0; v < d; ++v)
    for (int u = 0; u < d; ++u)
      phi.col(v * d + u) = x.col(u).cwiseProduct(x.col(v));
  int at = d * d;
  if (score == ScoreKind::kFullyQuadratic) {
    phi.middleCols(at, d) = x;
    at += d;
  }
  phi.col(at).setOnes();
  return phi;
}

// Dense evaluator over one dataset: parameters as (W, Eta) column blocks,
// scores and gradients via a couple of GEMMs per iteration.
class LseEvaluator {
 public:
  LseEvaluator(const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
               const MixingMeasure& layout)
      : x_(x),
        y_(y),
        layout_(layout),
        phi_(gating_features(x, layout.score)),
        d_(layout.expert.input_dim),
        q_(layout.expert.param_dim()),
        fg_(gating_block_size(d_, layout.score)) {}

  int param_count(int n_experts) const { return n_experts * (fg_ + q_); }

  // Objective and (optionally) the flat gradient at theta.
  double eval(const Eigen::VectorXd& theta, int n_experts,
              Eigen::VectorXd* grad) const {
    const int n = static_cast<int>(x_.rows());
    const int stride = fg_ + q_;
    Eigen::MatrixXd w(fg_, n_experts), eta(q_, n_experts);
    for (int j = 0; j < n_experts; ++j) {
      w.col(j) = theta.segment(j * stride, fg_);
      eta.col(j) = theta.segment(j * stride + fg_, q_);
    }

    const Eigen::MatrixXd scores = phi_ * w;  // n x N
    Eigen::MatrixXd gate(n, n_experts);
    if (layout_.gating == GatingKind::kSigmoidElementwise) {
      gate = scores.unaryExpr([](double z) { return sigmoid(z); });
    } else {
      const Eigen::VectorXd row_max = scores.rowwise().maxCoeff();
      gate = (scores.colwise() - row_max).array().exp();
      gate.array().colwise() /= gate.rowwise().sum().array();
    }

    // Expert pre-activations and outputs.
    const Eigen::MatrixXd z =
        (x_ * eta.topRows(d_)).rowwise() + eta.row(d_);  // n x N
    Eigen::MatrixXd e(n, n_experts);
    switch (layout_.expert.family) {
      case ExpertFamily::kLinear:
        e = z;
        break;
      case ExpertFamily::kPolynomial:
        e = z.array().pow(layout_.expert.degree);
        break;
      case ExpertFamily::kTwoLayerRelu:
        e = z.cwiseMax(0.0);
        e.array().rowwise() *= eta.row(d_ + 1).array();
        break;
      case ExpertFamily::kTwoLayerGelu:
        e = z.unaryExpr([](double v) { return gelu(v); });
        e.array().rowwise() *= eta.row(d_ + 1).array();
        break;
    }

    const Eigen::VectorXd f = (gate.cwiseProduct(e)).rowwise().sum();
    const Eigen::VectorXd resid = f - y_;
    const double obj = resid.squaredNorm();
    if (grad == nullptr) return obj;

    // d obj / d score_j and d obj / d expert_j, per point.
    Eigen::MatrixXd dscore(n, n_experts);
    if (layout_.gating == GatingKind::kSigmoidElementwise) {
      dscore = gate.cwiseProduct((Eigen::MatrixXd::Ones(n, n_experts) - gate))
                   .cwiseProduct(e);
    } else {
      dscore = gate.cwiseProduct(e.colwise() - f);
    }
    dscore.array().colwise() *= 2.0 * resid.array();
    Eigen::MatrixXd dexpert = gate;  // d f / d E_j = gate_j
    dexpert.array().colwise() *= 2.0 * resid.array();

    const Eigen::MatrixXd grad_w = phi_.transpose() * dscore;  // fg x N

    // Chain through the expert family.
    Eigen::MatrixXd dz = dexpert;  // will become d obj / d z_j
    Eigen::RowVectorXd dlambda;
    switch (layout_.expert.family) {
      case ExpertFamily::kLinear:
        break;
      case ExpertFamily::kPolynomial: {
        const int p = layout_.expert.degree;
        dz = dz.cwiseProduct(p * z.array().pow(p - 1).matrix());
        break;
      }
      case ExpertFamily::kTwoLayerRelu: {
        dlambda = dexpert.cwiseProduct(z.cwiseMax(0.0)).colwise().sum();
        Eigen::MatrixXd mask =
            (z.array() > 0.0).cast<double>().matrix();
        dz = dz.cwiseProduct(mask);
        dz.array().rowwise() *= eta.row(d_ + 1).array();
        break;
      }
      case ExpertFamily::kTwoLayerGelu: {
        dlambda = dexpert
                      .cwiseProduct(z.unaryExpr([](double v) { return gelu(v); }))
                      .colwise()
                      .sum();
        Eigen::MatrixXd dphi = z.unaryExpr([](double v) { return gelu_prime(v); });
        dz = dz.cwiseProduct(dphi);
        dz.array().rowwise() *= eta.row(d_ + 1).array();
        break;
      }
    }
    const Eigen::MatrixXd grad_alpha = x_.transpose() * dz;  // d x N
    const Eigen::RowVectorXd grad_beta = dz.colwise().sum();

    grad->resize(param_count(n_experts));
    for (int j = 0; j < n_experts; ++j) {
      grad->segment(j * stride, fg_) = grad_w.col(j);
      grad->segment(j * stride + fg_, d_) = grad_alpha.col(j);
      (*grad)[j * stride + fg_ + d_] = grad_beta[j];
      if (q_ == d_ + 2) (*grad)[j * stride + fg_ + d_ + 1] = dlambda[j];
    }
    return obj;
  }

  Eigen::VectorXd predict(const Eigen::VectorXd& theta, int n_experts) const {
    // Forward pass only; reuse eval's machinery cheaply.
    const int stride = fg_ + q_;
    Eigen::MatrixXd w(fg_, n_experts), eta(q_, n_experts);
    for (int j = 0; j < n_experts; ++j) {
      w.col(j) = theta.segment(j * stride, fg_);
      eta.col(j) = theta.segment(j * stride + fg_, q_);
    }
    const int n = static_cast<int>(x_.rows());
    const Eigen::MatrixXd scores = phi_ * w;
    Eigen::MatrixXd gate(n, n_experts);
    if (layout_.gating == GatingKind::kSigmoidElementwise) {
      gate = scores.unaryExpr([](double z) { return sigmoid(z); });
    } else {
      const Eigen::VectorXd row_max = scores.rowwise().maxCoeff();
      gate = (scores.colwise() - row_max).array().exp();
      gate.array().colwise() /= gate.rowwise().sum().array();
    }
    const Eigen::MatrixXd z =
        (x_ * eta.topRows(d_)).rowwise() + eta.row(d_);
    Eigen::MatrixXd e(n, n_experts);
    switch (layout_.expert.family) {
      case ExpertFamily::kLinear:
        e = z;
        break;
      case ExpertFamily::kPolynomial:
        e = z.array().pow(layout_.expert.degree);
        break;
      case ExpertFamily::kTwoLayerRelu:
        e = z.cwiseMax(0.0);
        e.array().rowwise() *= eta.row(d_ + 1).array();
        break;
      case ExpertFamily::kTwoLayerGelu:
        e = z.unaryExpr([](double v) { return gelu(v); });
        e.array().rowwise() *= eta.row(d_ + 1).array();
        break;
    }
    return (gate.cwiseProduct(e)).rowwise().sum();
  }

 private:
  const Eigen::MatrixXd& x_;
  const Eigen::VectorXd& y_;
  MixingMeasure layout_;
  Eigen::MatrixXd phi_;
  int d_, q_, fg_;
};

Atom perturbed_copy(const Atom& src, double scale, CounterRng& rng,
                    ScoreKind score, double box) {
  Atom a = src;
  const int d = static_cast<int>(src.A.rows());
  // Symmetric A-noise: the score sees only sym(A), so asymmetric noise
  // would leave a frozen antisymmetric gap no amount of data removes.
  for (int u = 0; u < d; ++u)
    for (int v = u; v < d; ++v) {
      const double e = rng.next_gaussian(0.0, scale);
      a.A(u, v) += e;
      if (v != u) a.A(v, u) += e;
    }
  if (score == ScoreKind::kFullyQuadratic)
    for (int u = 0; u < d; ++u) a.b[u] += rng.next_gaussian(0.0, scale);
  a.c += rng.next_gaussian(0.0, scale);
  for (int k = 0; k < a.eta.size(); ++k)
    a.eta[k] += rng.next_gaussian(0.0, scale);

  a.A = a.A.cwiseMax(-box).cwiseMin(box);
  a.b = a.b.cwiseMax(-box).cwiseMin(box);
  a.c = std::clamp(a.c, -box, box);
  a.eta = a.eta.cwiseMax(-box).cwiseMin(box);
  return a;
}

}  // namespace

Dataset synthesize_dataset(const SynthesisConfig& cfg) {
  if (cfg.input_dim <= 0 || cfg.sample_count <= 0)
    throw std::invalid_argument("synthesize_dataset: bad dimensions");
  if (cfg.noise_var < 0.0)
    throw std::invalid_argument("synthesize_dataset: negative noise variance");
  cfg.ground_truth.validate();
  if (cfg.ground_truth.dim() != cfg.input_dim)
    throw std::invalid_argument("synthesize_dataset: truth dimension mismatch");

  CounterRng rng(cfg.seed, RngStream::kData);
  Dataset data;
  data.config = cfg;
  data.x.resize(cfg.sample_count, cfg.input_dim);
  for (int i = 0; i < cfg.sample_count; ++i)
    for (int j = 0; j < cfg.input_dim; ++j)
      data.x(i, j) = rng.next_uniform(-1.0, 1.0);

  LseEvaluator ev(data.x, Eigen::VectorXd::Zero(cfg.sample_count),
                  cfg.ground_truth);
  data.y = ev.predict(pack_measure(cfg.ground_truth),
                      cfg.ground_truth.size());
  if (cfg.noise_var > 0.0) {
    const double sd = std::sqrt(cfg.noise_var);
    for (int i = 0; i < cfg.sample_count; ++i)
      data.y[i] += rng.next_gaussian(0.0, sd);
  }
  return data;
}

Eigen::VectorXd pack_measure(const MixingMeasure& g) {
  const int d = g.dim();
  const int q = g.expert.param_dim();
  const int fg = gating_block_size(d, g.score);
  Eigen::VectorXd theta(g.size() * (fg + q));
  for (int j = 0; j < g.size(); ++j) {
    const Atom& a = g.atoms[j];
    int at = j * (fg + q);
    theta.segment(at, d * d) =
        Eigen::Map<const Eigen::VectorXd>(a.A.data(), d * d);
    at += d * d;
    if (g.score == ScoreKind::kFullyQuadratic) {
      theta.segment(at, d) = a.b;
      at += d;
    }
    theta[at++] = a.c;
    theta.segment(at, q) = a.eta;
  }
  return theta;
}

MixingMeasure unpack_measure(const Eigen::VectorXd& theta,
                             const MixingMeasure& layout) {
  const int d = layout.dim();
  const int q = layout.expert.param_dim();
  const int fg = gating_block_size(d, layout.score);
  if (theta.size() % (fg + q) != 0)
    throw std::invalid_argument("unpack_measure: bad flat vector length");
  MixingMeasure g = layout;
  g.atoms.assign(theta.size() / (fg + q), Atom{});
  for (size_t j = 0; j < g.atoms.size(); ++j) {
    Atom& a = g.atoms[j];
    int at = static_cast<int>(j) * (fg + q);
    a.A = Eigen::Map<const Eigen::MatrixXd>(theta.data() + at, d, d);
    at += d * d;
    if (g.score == ScoreKind::kFullyQuadratic) {
      a.b = theta.segment(at, d);
      at += d;
    } else {
      a.b.resize(0);
    }
    a.c = theta[at++];
    a.eta = theta.segment(at, q);
  }
  return g;
}

double lse_objective(const MixingMeasure& g, const Dataset& data) {
  g.validate();
  LseEvaluator ev(data.x, data.y, g);
  return ev.eval(pack_measure(g), g.size(), nullptr);
}

Eigen::VectorXd lse_gradient(const MixingMeasure& g, const Dataset& data) {
  g.validate();
  LseEvaluator ev(data.x, data.y, g);
  Eigen::VectorXd grad;
  ev.eval(pack_measure(g), g.size(), &grad);
  return grad;
}

MixingMeasure init_perturbed(const MixingMeasure& truth, int n_experts,
                             double scale, CounterRng& rng,
                             const ParamBounds& bounds,
                             const std::vector<int>& duplicate_pool) {
  truth.validate();
  const int n_star = truth.size();
  if (n_experts < n_star)
    throw std::invalid_argument("init_perturbed: N must be >= truth atom count");
  MixingMeasure g = truth;
  g.atoms.clear();
  g.atoms.reserve(n_experts);
  for (int j = 0; j < n_star; ++j)
    g.atoms.push_back(
        perturbed_copy(truth.atoms[j], scale, rng, truth.score,
                       bounds.box_radius));
  for (int j = n_star; j < n_experts; ++j) {
    int src;
    if (duplicate_pool.empty()) {
      src = static_cast<int>(rng.next_u64() % n_star);
    } else {
      src = duplicate_pool[rng.next_u64() % duplicate_pool.size()];
      if (src < 0 || src >= n_star)
        throw std::invalid_argument("init_perturbed: duplicate_pool index");
    }
    g.atoms.push_back(
        perturbed_copy(truth.atoms[src], scale, rng, truth.score,
                       bounds.box_radius));
  }
  return g;
}

FitResult fit(const Dataset& data, const FitConfig& cfg) {
  const MixingMeasure& truth = data.config.ground_truth;
  truth.validate();
  if (cfg.n_fit_experts < truth.size())
    throw std::invalid_argument("fit: n_fit_experts must be >= truth atoms");
  if (cfg.restarts < 1 || cfg.max_iters < 0 || cfg.step_size <= 0.0 ||
      cfg.grad_tol <= 0.0 || cfg.init_perturb_scale < 0.0)
    throw std::invalid_argument("fit: bad optimizer configuration");

  MixingMeasure layout = truth;
  layout.gating = cfg.fit_gating.value_or(truth.gating);

  LseEvaluator ev(data.x, data.y, layout);
  const int n = data.size();
  const double box = cfg.bounds.box_radius;
  const double decay =
      cfg.max_iters > 0
          ? std::pow(cfg.step_decay_total, 1.0 / cfg.max_iters)
          : 1.0;

  FitResult result;
  result.final_objective = std::numeric_limits<double>::infinity();
  bool any_ok = false;

  for (int r = 0; r < cfg.restarts; ++r) {
    CounterRng init_rng(cfg.seed, RngStream::kInit, static_cast<uint64_t>(r));
    MixingMeasure start = init_perturbed(truth, cfg.n_fit_experts,
                                         cfg.init_perturb_scale, init_rng,
                                         cfg.bounds, cfg.duplicate_pool);
    start.gating = layout.gating;
    Eigen::VectorXd theta = pack_measure(start);

    RestartRecord rec;
    Eigen::VectorXd m = Eigen::VectorXd::Zero(theta.size());
    Eigen::VectorXd v = Eigen::VectorXd::Zero(theta.size());
    Eigen::VectorXd grad(theta.size());
    Eigen::VectorXd best_theta = theta;
    double best_obj = std::numeric_limits<double>::infinity();
    double step = cfg.step_size;
    int iter = 0;
    bool failed = false;

    for (;; ++iter) {
      const double obj = ev.eval(theta, cfg.n_fit_experts, &grad);
      if (!std::isfinite(obj)) {
        failed = true;
        break;
      }
      if (iter == 0) rec.initial_objective = obj;
      if (obj < best_obj) {
        best_obj = obj;
        best_theta = theta;
      }
      grad /= n;
      rec.grad_norm = grad.norm();
      if (rec.grad_norm <= cfg.grad_tol || iter >= cfg.max_iters) break;

      const double b1t = 1.0 - std::pow(0.9, iter + 1);
      const double b2t = 1.0 - std::pow(0.999, iter + 1);
      m = 0.9 * m + 0.1 * grad;
      v = 0.999 * v + 0.001 * grad.cwiseProduct(grad);
      theta -= (step * (m / b1t).array() /
                ((v / b2t).array().sqrt() + 1e-8))
                   .matrix();
      theta = theta.cwiseMax(-box).cwiseMin(box);
      step *= decay;
    }

    rec.final_objective = best_obj;
    rec.iterations = iter;
    rec.failed = failed;
    result.restarts.push_back(rec);
    if (failed) continue;
    any_ok = true;
    if (best_obj < result.final_objective) {
      result.final_objective = best_obj;
      result.estimate = unpack_measure(best_theta, layout);
      result.grad_norm = rec.grad_norm;
      result.iterations = iter;
      result.restart_index = r;
    }
  }
  if (!any_ok)
    throw std::runtime_error("fit: every restart hit a non-finite objective");
  return result;
}

double regression_mean_squared_gap(const MixingMeasure& a,
                                   const MixingMeasure& b,
                                   const Eigen::MatrixXd& x) {
  const Eigen::VectorXd zero = Eigen::VectorXd::Zero(x.rows());
  LseEvaluator ev_a(x, zero, a);
  LseEvaluator ev_b(x, zero, b);
  const Eigen::VectorXd fa = ev_a.predict(pack_measure(a), a.size());
  const Eigen::VectorXd fb = ev_b.predict(pack_measure(b), b.size());
  return (fa - fb).squaredNorm() / static_cast<double>(x.rows());
}

}  // namespace moe
