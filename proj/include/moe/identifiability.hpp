#pragma once

#include <array>
#include <vector>

#include "moe/model.hpp"
#include "moe/rng.hpp"

namespace moe {

enum class ProbeMode { kStrong, kWeak, kPartialStrong, kPartialWeak };
enum class Verdict { kIndependent, kDegenerate };

// Inputs of one derivative-family evaluation.  Strong/PartialStrong build
// the order-<=2 family of F at (A,b) = (0,0) concatenated with the order-1
// family at the full atoms; Weak/PartialWeak build the order-1 family only.
struct DerivativeFamilySpec {
  ProbeMode mode = ProbeMode::kWeak;
  ExpertSpec expert;
  ScoreKind score = ScoreKind::kFullyQuadratic;
  std::vector<Atom> params;       // ell distinct atoms
  Eigen::MatrixXd sample_points;  // m x d
  double fd_step = 1e-4;          // expert-side second differences
};

// Literal derivative columns of F(x) = sigma(s(x)) * E(x, eta), one column
// per multi-index, evaluated at the sample points.  A-directions range over
// the upper triangle (the score reads only sym(A), so (u,v) and (v,u)
// derivatives are the same function).
Eigen::MatrixXd eval_F_derivatives(const DerivativeFamilySpec& spec);

// Smallest singular value after scaling every column to unit norm.
// A column that is identically zero is exact degeneracy and yields 0.
double min_singular(const Eigen::MatrixXd& m);

// Max-entry residuals of the three second-derivative identities of F for
// linear experts under the fully quadratic score:
//   d2F/dA_uv dc  - d2F/db_u db_v
//   d2F/dA_uv dbeta - d2F/db_u dalpha_v
//   d2F/db_u dbeta  - d2F/dc dalpha_u
std::array<double, 3> check_pde_identities(const Eigen::VectorXd& x,
                                           const Atom& atom,
                                           const ExpertSpec& expert);

struct FamilyProbe {
  int columns = 0;        // columns tested after canonicalization
  int benign_rank = 0;    // structural null directions projected out
  double min_singular = 0.0;
};

struct ProbeReport {
  int family_size = 0;
  double min_singular_value = 0.0;
  Verdict verdict = Verdict::kDegenerate;
  double threshold = 1e-6;
  std::vector<FamilyProbe> families;  // per tested family, in order
};

// Numeric identifiability surrogate.  Samples ell distinct random atoms
// (two-layer: alpha and lambda bounded away from 0; linear/polynomial:
// beta bounded away from 0) and m = 8 x family-size points from
// Uniform([-1,1]^d), builds the mode's derivative families in canonical
// form (duplicate derivative directions collapsed, identically-zero
// derivatives dropped, structural reparameterization relations projected
// out) and reports the smallest remaining singular value.
ProbeReport probe(ProbeMode mode, const ExpertSpec& expert, ScoreKind score,
                  int ell, CounterRng& rng, double threshold = 1e-6);

const char* to_string(ProbeMode m);
const char* to_string(Verdict v);

}  // namespace moe
