#include "moe/model.hpp"

#include <cmath>
#include <stdexcept>

namespace moe {

namespace {

void require(bool ok, const std::string& what) {
  if (!ok) throw std::invalid_argument(what);
}

double clamped_exp(double z) {
  if (z > 500.0) z = 500.0;
  if (z < -500.0) z = -500.0;
  return std::exp(z);
}

}  // namespace

double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + clamped_exp(-z));
  const double e = clamped_exp(z);
  return e / (1.0 + e);
}

double sigmoid_prime(double z) {
  const double s = sigmoid(z);
  return s * (1.0 - s);
}

double sigmoid_second(double z) {
  const double s = sigmoid(z);
  return s * (1.0 - s) * (1.0 - 2.0 * s);
}

double relu(double z) { return z > 0.0 ? z : 0.0; }

double std_normal_pdf(double z) {
  return std::exp(-0.5 * z * z) / std::sqrt(2.0 * M_PI);
}

double std_normal_cdf(double z) { return 0.5 * std::erfc(-z * M_SQRT1_2); }

double gelu(double z) { return z * std_normal_cdf(z); }

double gelu_prime(double z) { return std_normal_cdf(z) + z * std_normal_pdf(z); }

double gelu_second(double z) { return std_normal_pdf(z) * (2.0 - z * z); }

int ExpertSpec::param_dim() const {
  switch (family) {
    case ExpertFamily::kLinear:
    case ExpertFamily::kPolynomial:
      return input_dim + 1;
    case ExpertFamily::kTwoLayerRelu:
    case ExpertFamily::kTwoLayerGelu:
      return input_dim + 2;
  }
  return 0;
}

void MixingMeasure::validate() const {
  require(!atoms.empty(), "mixing measure must hold at least one atom");
  require(expert.input_dim > 0, "expert input_dim must be positive");
  const int d = expert.input_dim;
  const int q = expert.param_dim();
  const int expect_b = score == ScoreKind::kFullyQuadratic ? d : 0;
  for (size_t i = 0; i < atoms.size(); ++i) {
    const Atom& a = atoms[i];
    const std::string tag = "atom " + std::to_string(i);
    require(a.A.rows() == d && a.A.cols() == d, tag + ": A must be d x d");
    require(a.b.size() == expect_b, tag + ": b length inconsistent with score kind");
    require(a.eta.size() == q, tag + ": eta length must equal param_dim");
    require(a.A.allFinite() && a.b.allFinite() && a.eta.allFinite() &&
                std::isfinite(a.c),
            tag + ": non-finite entry");
  }
}

double affinity_score(const Eigen::VectorXd& x, const Atom& atom,
                      ScoreKind score) {
  require(atom.A.rows() == x.size() && atom.A.cols() == x.size(),
          "affinity_score: A and x dimensions disagree");
  double s = x.dot(atom.A * x) + atom.c;
  if (score == ScoreKind::kFullyQuadratic) {
    require(atom.b.size() == x.size(),
            "affinity_score: b and x dimensions disagree");
    s += atom.b.dot(x);
  }
  return s;
}

Eigen::VectorXd gate_weights(const Eigen::VectorXd& x, const MixingMeasure& g) {
  const int n = g.size();
  Eigen::VectorXd scores(n);
  for (int j = 0; j < n; ++j) {
    scores[j] = affinity_score(x, g.atoms[j], g.score);
    if (!std::isfinite(scores[j]))
      throw std::domain_error("gate_weights: non-finite score at atom " +
                              std::to_string(j));
  }
  Eigen::VectorXd w(n);
  if (g.gating == GatingKind::kSigmoidElementwise) {
    for (int j = 0; j < n; ++j) w[j] = sigmoid(scores[j]);
  } else {
    const double m = scores.maxCoeff();
    for (int j = 0; j < n; ++j) w[j] = std::exp(scores[j] - m);
    w /= w.sum();
  }
  return w;
}

double expert_eval(const Eigen::VectorXd& x, const Eigen::VectorXd& eta,
                   const ExpertSpec& spec) {
  const int d = spec.input_dim;
  require(x.size() == d, "expert_eval: x dimension mismatch");
  require(eta.size() == spec.param_dim(), "expert_eval: eta length mismatch");
  const double z = eta.head(d).dot(x) + eta[d];
  switch (spec.family) {
    case ExpertFamily::kLinear:
      return z;
    case ExpertFamily::kPolynomial:
      return std::pow(z, spec.degree);
    case ExpertFamily::kTwoLayerRelu:
      return eta[d + 1] * relu(z);
    case ExpertFamily::kTwoLayerGelu:
      return eta[d + 1] * gelu(z);
  }
  return 0.0;
}

Eigen::VectorXd expert_grad(const Eigen::VectorXd& x,
                            const Eigen::VectorXd& eta,
                            const ExpertSpec& spec) {
  const int d = spec.input_dim;
  require(x.size() == d, "expert_grad: x dimension mismatch");
  require(eta.size() == spec.param_dim(), "expert_grad: eta length mismatch");
  const double z = eta.head(d).dot(x) + eta[d];
  Eigen::VectorXd grad = Eigen::VectorXd::Zero(eta.size());
  switch (spec.family) {
    case ExpertFamily::kLinear: {
      grad.head(d) = x;
      grad[d] = 1.0;
      break;
    }
    case ExpertFamily::kPolynomial: {
      const int p = spec.degree;
      const double f = p * std::pow(z, p - 1);
      grad.head(d) = f * x;
      grad[d] = f;
      break;
    }
    case ExpertFamily::kTwoLayerRelu: {
      const double lambda = eta[d + 1];
      const double dphi = z > 0.0 ? 1.0 : 0.0;  // subgradient 0 at the kink
      grad.head(d) = lambda * dphi * x;
      grad[d] = lambda * dphi;
      grad[d + 1] = relu(z);
      break;
    }
    case ExpertFamily::kTwoLayerGelu: {
      const double lambda = eta[d + 1];
      const double dphi = gelu_prime(z);
      grad.head(d) = lambda * dphi * x;
      grad[d] = lambda * dphi;
      grad[d + 1] = gelu(z);
      break;
    }
  }
  return grad;
}

Eigen::MatrixXd expert_hessian(const Eigen::VectorXd& x,
                               const Eigen::VectorXd& eta,
                               const ExpertSpec& spec, double fd_step) {
  const int d = spec.input_dim;
  const int q = spec.param_dim();
  Eigen::MatrixXd h = Eigen::MatrixXd::Zero(q, q);
  switch (spec.family) {
    case ExpertFamily::kLinear:
      return h;
    case ExpertFamily::kPolynomial: {
      const int p = spec.degree;
      if (p < 2) return h;
      const double z = eta.head(d).dot(x) + eta[d];
      const double f = p * (p - 1) * std::pow(z, p - 2);
      Eigen::VectorXd u(q);
      u.head(d) = x;
      u[d] = 1.0;
      h = f * u * u.transpose();
      return h;
    }
    case ExpertFamily::kTwoLayerRelu:
    case ExpertFamily::kTwoLayerGelu: {
      Eigen::VectorXd e = eta;
      for (int k = 0; k < q; ++k) {
        e[k] = eta[k] + fd_step;
        const Eigen::VectorXd gp = expert_grad(x, e, spec);
        e[k] = eta[k] - fd_step;
        const Eigen::VectorXd gm = expert_grad(x, e, spec);
        e[k] = eta[k];
        h.col(k) = (gp - gm) / (2.0 * fd_step);
      }
      // Symmetrize away finite-difference asymmetry.
      h = 0.5 * (h + h.transpose()).eval();
      return h;
    }
  }
  return h;
}

double regression_eval(const MixingMeasure& g, const Eigen::VectorXd& x) {
  const Eigen::VectorXd w = gate_weights(x, g);
  double y = 0.0;
  for (int j = 0; j < g.size(); ++j)
    y += w[j] * expert_eval(x, g.atoms[j].eta, g.expert);
  return y;
}

const char* to_string(ScoreKind k) {
  return k == ScoreKind::kFullyQuadratic ? "full" : "partial";
}

const char* to_string(GatingKind k) {
  return k == GatingKind::kSigmoidElementwise ? "sigmoid" : "softmax";
}

std::string to_string(const ExpertSpec& spec) {
  switch (spec.family) {
    case ExpertFamily::kLinear:
      return "linear";
    case ExpertFamily::kPolynomial:
      return "poly" + std::to_string(spec.degree);
    case ExpertFamily::kTwoLayerRelu:
      return "relu";
    case ExpertFamily::kTwoLayerGelu:
      return "gelu";
  }
  return "?";
}

}  // namespace moe
