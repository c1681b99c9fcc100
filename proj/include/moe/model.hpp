#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

namespace moe {

enum class ScoreKind { kFullyQuadratic, kPartiallyQuadratic };
enum class GatingKind { kSigmoidElementwise, kSoftmaxOverExperts };
enum class ExpertFamily { kLinear, kPolynomial, kTwoLayerRelu, kTwoLayerGelu };

// Scalar math used by gating and experts.  exp() is clamped at |z| = 500
// before exponentiation; sigmoid itself never overflows with the split form.
double sigmoid(double z);
double sigmoid_prime(double z);   // sigma(z)(1-sigma(z))
double sigmoid_second(double z);  // sigma'(z)(1-2 sigma(z))
double relu(double z);
double gelu(double z);        // exact Phi-based form z*Phi(z)
double gelu_prime(double z);  // Phi(z) + z*phi(z)
double gelu_second(double z); // phi(z)*(2 - z^2)
double std_normal_pdf(double z);
double std_normal_cdf(double z);

// Expert family descriptor.  Parameter layout of eta:
//   Linear / Polynomial(p): eta = (alpha[0..d-1], beta),        q = d+1
//   TwoLayer(phi):          eta = (alpha[0..d-1], beta, lambda), q = d+2
struct ExpertSpec {
  ExpertFamily family = ExpertFamily::kLinear;
  int input_dim = 0;  // d
  int degree = 1;     // p, used by kPolynomial only

  int param_dim() const;
  bool is_two_layer() const {
    return family == ExpertFamily::kTwoLayerRelu ||
           family == ExpertFamily::kTwoLayerGelu;
  }
  bool operator==(const ExpertSpec&) const = default;
};

// One expert's full parameter tuple.  Under the partially quadratic score
// b has length zero so that no loss or gradient can touch it by accident.
struct Atom {
  Eigen::MatrixXd A;   // d x d gating quadratic term
  Eigen::VectorXd b;   // length d, or 0 under kPartiallyQuadratic
  double c = 0.0;      // gating bias
  Eigen::VectorXd eta; // expert parameters, length q
};

// Finite list of atoms plus the structure they parameterize.
struct MixingMeasure {
  std::vector<Atom> atoms;
  ExpertSpec expert;
  ScoreKind score = ScoreKind::kFullyQuadratic;
  GatingKind gating = GatingKind::kSigmoidElementwise;

  int dim() const { return expert.input_dim; }
  int size() const { return static_cast<int>(atoms.size()); }
  // Throws std::invalid_argument if any atom is inconsistent with
  // (dim, param_dim, score kind) or holds non-finite entries.
  void validate() const;
};

// Compact parameter space realized as the coordinate box [-B, B].
struct ParamBounds {
  double box_radius = 10.0;
};

double affinity_score(const Eigen::VectorXd& x, const Atom& atom,
                      ScoreKind score);

// Gate weights of all atoms at x.  Sigmoid gating is element-wise; softmax
// uses max-subtraction.  A non-finite score reports the offending atom.
Eigen::VectorXd gate_weights(const Eigen::VectorXd& x, const MixingMeasure& g);

double expert_eval(const Eigen::VectorXd& x, const Eigen::VectorXd& eta,
                   const ExpertSpec& spec);

// Analytic d expert / d eta.  ReLU uses subgradient 0 at the kink.
Eigen::VectorXd expert_grad(const Eigen::VectorXd& x,
                            const Eigen::VectorXd& eta,
                            const ExpertSpec& spec);

// Analytic d^2 expert / d eta^2.  Closed forms for Linear/Polynomial; for
// TwoLayer experts a central difference of expert_grad with step fd_step.
Eigen::MatrixXd expert_hessian(const Eigen::VectorXd& x,
                               const Eigen::VectorXd& eta,
                               const ExpertSpec& spec,
                               double fd_step = 1e-4);

double regression_eval(const MixingMeasure& g, const Eigen::VectorXd& x);

const char* to_string(ScoreKind k);
const char* to_string(GatingKind k);
std::string to_string(const ExpertSpec& spec);

}  // namespace moe
