#include "moe/identifiability.hpp"

#include <Eigen/QR>
#include <Eigen/SVD>
#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <set>
#include <stdexcept>

namespace moe {

namespace {

bool full_score(ScoreKind s) { return s == ScoreKind::kFullyQuadratic; }

// ---------------------------------------------------------------------------
// Ridge profile of the experts: E(x, eta) = lambda^a * g(z), z = alpha.x+beta.
// profile(t, z) is the t-th derivative of g; identically-zero profiles are
// reported so the corresponding derivative directions can be dropped.

double profile_value(const ExpertSpec& spec, int t, double z) {
  switch (spec.family) {
    case ExpertFamily::kLinear:
      return t == 0 ? z : (t == 1 ? 1.0 : 0.0);
    case ExpertFamily::kPolynomial: {
      const int p = spec.degree;
      if (t > p) return 0.0;
      double coef = 1.0;
      for (int i = 0; i < t; ++i) coef *= (p - i);
      return coef * std::pow(z, p - t);
    }
    case ExpertFamily::kTwoLayerRelu:
      return t == 0 ? relu(z) : (t == 1 ? (z > 0.0 ? 1.0 : 0.0) : 0.0);
    case ExpertFamily::kTwoLayerGelu:
      return t == 0 ? gelu(z) : (t == 1 ? gelu_prime(z) : gelu_second(z));
  }
  return 0.0;
}

bool profile_is_zero(const ExpertSpec& spec, int t) {
  switch (spec.family) {
    case ExpertFamily::kLinear:
      return t >= 2;
    case ExpertFamily::kPolynomial:
      return t > spec.degree;
    case ExpertFamily::kTwoLayerRelu:
      return t >= 2;
    case ExpertFamily::kTwoLayerGelu:
      return false;
  }
  return true;
}

// ---------------------------------------------------------------------------
// Literal derivative columns.

struct AtomPanel {
  Eigen::VectorXd s;       // affinity score per sample
  Eigen::VectorXd e;       // expert value per sample
  Eigen::MatrixXd grad;    // m x q expert gradient
  std::vector<Eigen::MatrixXd> hess;  // per sample q x q (order-2 modes only)
};

AtomPanel make_panel(const Atom& atom, const ExpertSpec& expert,
                     ScoreKind score, const Eigen::MatrixXd& pts,
                     bool with_hessian, double fd_step) {
  const int m = static_cast<int>(pts.rows());
  AtomPanel p;
  p.s.resize(m);
  p.e.resize(m);
  p.grad.resize(m, expert.param_dim());
  if (with_hessian) p.hess.reserve(m);
  for (int s = 0; s < m; ++s) {
    const Eigen::VectorXd x = pts.row(s);
    p.s[s] = affinity_score(x, atom, score);
    p.e[s] = expert_eval(x, atom.eta, expert);
    p.grad.row(s) = expert_grad(x, atom.eta, expert);
    if (with_hessian) p.hess.push_back(expert_hessian(x, atom.eta, expert, fd_step));
  }
  return p;
}

struct GatingDir {
  int u, v;   // monomial x_u * x_v for A, x_u (v < 0) for b
  double monomial(const Eigen::VectorXd& x) const {
    return v < 0 ? x[u] : x[u] * x[v];
  }
};

std::vector<GatingDir> gating_dirs(int d, ScoreKind score) {
  std::vector<GatingDir> dirs;
  for (int u = 0; u < d; ++u)
    for (int v = u; v < d; ++v) dirs.push_back({u, v});
  if (full_score(score))
    for (int u = 0; u < d; ++u) dirs.push_back({u, -1});
  return dirs;
}

// Order-1 family at the full atoms (the weak-identifiability family).
void append_weak_columns(const DerivativeFamilySpec& spec,
                         const std::vector<AtomPanel>& panels,
                         std::vector<Eigen::VectorXd>* cols) {
  const int m = static_cast<int>(spec.sample_points.rows());
  const auto dirs = gating_dirs(spec.expert.input_dim, spec.score);
  for (size_t i = 0; i < spec.params.size(); ++i) {
    const AtomPanel& p = panels[i];
    Eigen::VectorXd sp(m), sv(m);
    for (int s = 0; s < m; ++s) {
      sp[s] = sigmoid_prime(p.s[s]);
      sv[s] = sigmoid(p.s[s]);
    }
    for (const GatingDir& g : dirs) {
      Eigen::VectorXd col(m);
      for (int s = 0; s < m; ++s)
        col[s] = sp[s] * g.monomial(spec.sample_points.row(s)) * p.e[s];
      cols->push_back(col);
    }
    cols->push_back(sp.cwiseProduct(p.e));  // d/dc
    for (int k = 0; k < spec.expert.param_dim(); ++k)
      cols->push_back(sv.cwiseProduct(p.grad.col(k)));
  }
}

// Order-<=2 family at (A,b) = (0,0); sigma factors are then constants in x.
void append_strong_columns(const DerivativeFamilySpec& spec,
                           const std::vector<AtomPanel>& panels,
                           std::vector<Eigen::VectorXd>* cols) {
  const int m = static_cast<int>(spec.sample_points.rows());
  const int q = spec.expert.param_dim();
  const auto dirs = gating_dirs(spec.expert.input_dim, spec.score);
  for (size_t i = 0; i < spec.params.size(); ++i) {
    const AtomPanel& p = panels[i];
    const double s0 = sigmoid(spec.params[i].c);
    const double s1 = sigmoid_prime(spec.params[i].c);
    const double s2 = sigmoid_second(spec.params[i].c);
    std::vector<Eigen::VectorXd> mono(dirs.size());
    for (size_t a = 0; a < dirs.size(); ++a) {
      mono[a].resize(m);
      for (int s = 0; s < m; ++s)
        mono[a][s] = dirs[a].monomial(spec.sample_points.row(s));
    }
    // Order 1.
    for (size_t a = 0; a < dirs.size(); ++a)
      cols->push_back(s1 * mono[a].cwiseProduct(p.e));
    for (int k = 0; k < q; ++k) cols->push_back(s0 * p.grad.col(k));
    // Order 2: gating x gating, gating x eta, eta x eta.
    for (size_t a = 0; a < dirs.size(); ++a)
      for (size_t b = a; b < dirs.size(); ++b)
        cols->push_back(s2 * mono[a].cwiseProduct(mono[b]).cwiseProduct(p.e));
    for (size_t a = 0; a < dirs.size(); ++a)
      for (int k = 0; k < q; ++k)
        cols->push_back(s1 * mono[a].cwiseProduct(p.grad.col(k)));
    for (int k = 0; k < q; ++k)
      for (int l = k; l < q; ++l) {
        Eigen::VectorXd col(m);
        for (int s = 0; s < m; ++s) col[s] = s0 * p.hess[s](k, l);
        cols->push_back(col);
      }
  }
}

void check_distinct(const std::vector<Atom>& atoms) {
  for (size_t i = 0; i < atoms.size(); ++i)
    for (size_t j = i + 1; j < atoms.size(); ++j) {
      const Atom &a = atoms[i], &b = atoms[j];
      double gap = (a.A - b.A).norm() + (a.eta - b.eta).norm() +
                   std::abs(a.c - b.c);
      if (a.b.size() > 0) gap += (a.b - b.b).norm();
      if (gap == 0.0)
        throw std::invalid_argument("derivative family: duplicate atoms");
    }
}

// ---------------------------------------------------------------------------
// Canonical family used by the probe.
//
// Every literal derivative of F is, up to a nonzero constant, of the form
// x^rho * g^(t)(z_i): the gating side contributes the monomial, the expert
// side a profile derivative (chain-rule monomials folded into rho).  The
// probe therefore tests the distinct (rho, t) keys per atom, drops keys
// whose profile vanishes identically, and projects out the structural
// relations x^rho g^(t) = kappa (sum_k alpha_k x^(rho+e_k) + beta x^rho)
// g^(t+1) that merely restate g^(t)(z) = kappa z g^(t+1)(z).  Such a
// relation carries no gating-expert interaction when the next profile is
// non-polynomial (or when the score has no odd gating monomials, i.e. the
// partially quadratic modes); otherwise it is exactly the kind of
// polynomial collapse that breaks identifiability and is kept in the test.

using Mono = std::vector<int>;
using Key = std::pair<Mono, int>;

struct CanonicalFamily {
  // column index -> (atom, key); plus per-atom key lookup
  std::vector<std::pair<int, Key>> index;
  std::vector<std::map<Key, int>> lookup;  // per atom
  Eigen::MatrixXd matrix;                  // m x K
  std::vector<Eigen::VectorXd> benign;     // structural null directions
};

Mono mono_add(const Mono& a, const Mono& b) {
  Mono r = a;
  for (size_t i = 0; i < r.size(); ++i) r[i] += b[i];
  return r;
}

struct EtaDirCanonical {
  Mono chain;
  int dt;
  int dlambda;
};

CanonicalFamily build_canonical_order2(const DerivativeFamilySpec& spec) {
  const int d = spec.expert.input_dim;
  const int q = spec.expert.param_dim();
  const int ell = static_cast<int>(spec.params.size());
  const int m = static_cast<int>(spec.sample_points.rows());

  std::vector<Mono> gating;
  for (int u = 0; u < d; ++u)
    for (int v = u; v < d; ++v) {
      Mono mo(d, 0);
      mo[u]++;
      mo[v]++;
      gating.push_back(mo);
    }
  if (full_score(spec.score))
    for (int u = 0; u < d; ++u) {
      Mono mo(d, 0);
      mo[u]++;
      gating.push_back(mo);
    }
  std::vector<EtaDirCanonical> eta;
  for (int k = 0; k < d; ++k) {
    Mono mo(d, 0);
    mo[k]++;
    eta.push_back({mo, 1, 0});
  }
  eta.push_back({Mono(d, 0), 1, 0});                       // beta
  if (q == d + 2) eta.push_back({Mono(d, 0), 0, 1});       // lambda

  CanonicalFamily fam;
  fam.lookup.assign(ell, {});
  for (int i = 0; i < ell; ++i) {
    std::set<Key> keys;
    auto add = [&](const Mono& mo, int t, int lam) {
      if (lam >= 2) return;  // E is linear in lambda
      if (profile_is_zero(spec.expert, t)) return;
      keys.insert({mo, t});
    };
    for (const Mono& g : gating) add(g, 0, 0);
    for (const auto& e : eta) add(e.chain, e.dt, e.dlambda);
    for (size_t a = 0; a < gating.size(); ++a)
      for (size_t b = a; b < gating.size(); ++b)
        add(mono_add(gating[a], gating[b]), 0, 0);
    for (const Mono& g : gating)
      for (const auto& e : eta) add(mono_add(g, e.chain), e.dt, e.dlambda);
    for (size_t a = 0; a < eta.size(); ++a)
      for (size_t b = a; b < eta.size(); ++b)
        add(mono_add(eta[a].chain, eta[b].chain), eta[a].dt + eta[b].dt,
            eta[a].dlambda + eta[b].dlambda);
    for (const Key& k : keys) {
      fam.lookup[i][k] = static_cast<int>(fam.index.size());
      fam.index.emplace_back(i, k);
    }
  }

  fam.matrix.resize(m, static_cast<int>(fam.index.size()));
  std::vector<Eigen::VectorXd> z(ell);
  for (int i = 0; i < ell; ++i) {
    z[i].resize(m);
    for (int s = 0; s < m; ++s)
      z[i][s] = spec.params[i].eta.head(d).dot(spec.sample_points.row(s)) +
                spec.params[i].eta[d];
  }
  for (size_t c = 0; c < fam.index.size(); ++c) {
    const int i = fam.index[c].first;
    const Mono& mo = fam.index[c].second.first;
    const int t = fam.index[c].second.second;
    for (int s = 0; s < m; ++s) {
      double v = profile_value(spec.expert, t, z[i][s]);
      for (int u = 0; u < d; ++u)
        for (int rep = 0; rep < mo[u]; ++rep) v *= spec.sample_points(s, u);
      fam.matrix(s, static_cast<int>(c)) = v;
    }
  }

  // Structural relations.
  const bool partial_mode = !full_score(spec.score);
  for (int i = 0; i < ell; ++i) {
    const Eigen::VectorXd& zi = z[i];
    for (int t = 0; t <= 1; ++t) {
      if (profile_is_zero(spec.expert, t) || profile_is_zero(spec.expert, t + 1))
        continue;
      Eigen::VectorXd gt(m), gt1(m);
      for (int s = 0; s < m; ++s) {
        gt[s] = profile_value(spec.expert, t, zi[s]);
        gt1[s] = profile_value(spec.expert, t + 1, zi[s]);
      }
      const Eigen::VectorXd zg = zi.cwiseProduct(gt1);
      const double denom = zg.squaredNorm();
      if (denom <= 0.0) continue;
      const double kappa = gt.dot(zg) / denom;
      if ((gt - kappa * zg).norm() > 1e-8 * std::max(1.0, gt.norm()))
        continue;  // no z-factorization at this order
      // Polynomial next-profile keeps the relation in the tested family
      // under the fully quadratic score.
      if (!partial_mode) {
        const int deg = std::max(6, spec.expert.degree);
        Eigen::MatrixXd vand(m, deg + 1);
        for (int s = 0; s < m; ++s) {
          double zp = 1.0;
          for (int kdeg = 0; kdeg <= deg; ++kdeg) {
            vand(s, kdeg) = zp;
            zp *= zi[s];
          }
        }
        const Eigen::VectorXd fitres =
            vand * vand.colPivHouseholderQr().solve(gt1) - gt1;
        const bool poly_profile = fitres.norm() <= 1e-8 * std::max(1.0, gt1.norm());
        if (poly_profile) continue;
      }
      const Eigen::VectorXd alpha = spec.params[i].eta.head(d);
      const double beta = spec.params[i].eta[d];
      for (const auto& [key, col] : fam.lookup[i]) {
        if (key.second != t) continue;
        bool ok = true;
        std::vector<std::pair<int, double>> partners;
        for (int k = 0; k < d; ++k) {
          Mono mo = key.first;
          mo[k]++;
          auto it = fam.lookup[i].find({mo, t + 1});
          if (it == fam.lookup[i].end()) {
            ok = false;
            break;
          }
          partners.emplace_back(it->second, -kappa * alpha[k]);
        }
        auto itb = fam.lookup[i].find({key.first, t + 1});
        if (!ok || itb == fam.lookup[i].end()) continue;
        partners.emplace_back(itb->second, -kappa * beta);
        Eigen::VectorXd rel =
            Eigen::VectorXd::Zero(static_cast<int>(fam.index.size()));
        rel[col] = 1.0;
        for (const auto& [pc, w] : partners) rel[pc] += w;
        fam.benign.push_back(rel);
      }
    }
  }
  return fam;
}

// Weak family with the per-atom expert-reparameterization null space
// (exact E-preserving directions, e.g. the two-layer scale symmetry)
// reported as structural.
struct WeakFamily {
  Eigen::MatrixXd matrix;
  std::vector<Eigen::VectorXd> benign;
};

WeakFamily build_weak_family(const DerivativeFamilySpec& spec,
                             const std::vector<AtomPanel>& panels) {
  WeakFamily fam;
  std::vector<Eigen::VectorXd> cols;
  append_weak_columns(spec, panels, &cols);
  const int m = static_cast<int>(spec.sample_points.rows());
  fam.matrix.resize(m, static_cast<int>(cols.size()));
  for (size_t c = 0; c < cols.size(); ++c) fam.matrix.col(c) = cols[c];

  const int d = spec.expert.input_dim;
  const int q = spec.expert.param_dim();
  const int per_atom =
      d * (d + 1) / 2 + (full_score(spec.score) ? d : 0) + 1 + q;
  for (size_t i = 0; i < spec.params.size(); ++i) {
    const Eigen::MatrixXd& j = panels[i].grad;  // m x q
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(j, Eigen::ComputeThinV);
    const double top = svd.singularValues()[0];
    for (int k = 0; k < q; ++k) {
      if (svd.singularValues()[k] > 1e-10 * std::max(top, 1.0)) continue;
      Eigen::VectorXd rel = Eigen::VectorXd::Zero(fam.matrix.cols());
      const int base = static_cast<int>(i) * per_atom + per_atom - q;
      rel.segment(base, q) = svd.matrixV().col(k);
      fam.benign.push_back(rel);
    }
  }
  return fam;
}

FamilyProbe assess(const Eigen::MatrixXd& matrix,
                   const std::vector<Eigen::VectorXd>& benign) {
  FamilyProbe out;
  out.columns = static_cast<int>(matrix.cols());
  Eigen::MatrixXd norm = matrix;
  Eigen::VectorXd scales(matrix.cols());
  for (int c = 0; c < matrix.cols(); ++c) {
    scales[c] = norm.col(c).norm();
    if (scales[c] == 0.0) {
      out.min_singular = 0.0;
      return out;
    }
    norm.col(c) /= scales[c];
  }
  if (benign.empty()) {
    Eigen::BDCSVD<Eigen::MatrixXd> svd(norm);
    out.min_singular = svd.singularValues().minCoeff();
    return out;
  }
  // Relations were written for raw columns; rescale to the normalized basis.
  Eigen::MatrixXd b(matrix.cols(), static_cast<int>(benign.size()));
  for (size_t k = 0; k < benign.size(); ++k)
    b.col(static_cast<int>(k)) = benign[k].cwiseProduct(scales);
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(b);
  const int rank = static_cast<int>(qr.rank());
  out.benign_rank = rank;
  Eigen::MatrixXd qfull =
      qr.householderQ() * Eigen::MatrixXd::Identity(b.rows(), b.rows());
  const Eigen::MatrixXd q_perp = qfull.rightCols(b.rows() - rank);
  Eigen::BDCSVD<Eigen::MatrixXd> svd(norm * q_perp);
  out.min_singular = svd.singularValues().minCoeff();
  return out;
}

}  // namespace

Eigen::MatrixXd eval_F_derivatives(const DerivativeFamilySpec& spec) {
  if (spec.params.empty())
    throw std::invalid_argument("derivative family: no atoms");
  if (!spec.sample_points.allFinite())
    throw std::invalid_argument("derivative family: non-finite sample points");
  check_distinct(spec.params);
  const bool order2 = spec.mode == ProbeMode::kStrong ||
                      spec.mode == ProbeMode::kPartialStrong;
  std::vector<AtomPanel> panels;
  panels.reserve(spec.params.size());
  for (const Atom& a : spec.params)
    panels.push_back(make_panel(a, spec.expert, spec.score, spec.sample_points,
                                order2, spec.fd_step));
  std::vector<Eigen::VectorXd> cols;
  if (order2) {
    // Order-<=2 family is evaluated at (A,b) = (0,0); reuse the panels with
    // zeroed gating so the sigma factors become constants.
    std::vector<AtomPanel> centered = panels;
    for (size_t i = 0; i < centered.size(); ++i)
      centered[i].s.setConstant(spec.params[i].c);
    append_strong_columns(spec, centered, &cols);
  }
  append_weak_columns(spec, panels, &cols);
  Eigen::MatrixXd out(spec.sample_points.rows(),
                      static_cast<int>(cols.size()));
  for (size_t c = 0; c < cols.size(); ++c) out.col(static_cast<int>(c)) = cols[c];
  return out;
}

double min_singular(const Eigen::MatrixXd& m) {
  if (m.rows() < m.cols())
    throw std::invalid_argument("min_singular: need at least as many rows as columns");
  Eigen::MatrixXd norm = m;
  for (int c = 0; c < m.cols(); ++c) {
    const double s = norm.col(c).norm();
    if (s == 0.0) return 0.0;
    norm.col(c) /= s;
  }
  Eigen::BDCSVD<Eigen::MatrixXd> svd(norm);
  return svd.singularValues().minCoeff();
}

std::array<double, 3> check_pde_identities(const Eigen::VectorXd& x,
                                           const Atom& atom,
                                           const ExpertSpec& expert) {
  if (expert.family != ExpertFamily::kLinear &&
      !(expert.family == ExpertFamily::kPolynomial && expert.degree == 1))
    throw std::invalid_argument("check_pde_identities: linear experts only");
  if (atom.b.size() != x.size())
    throw std::invalid_argument("check_pde_identities: fully quadratic score required");
  const int d = static_cast<int>(x.size());
  const double s = affinity_score(x, atom, ScoreKind::kFullyQuadratic);
  const double s1 = sigmoid_prime(s);
  const double s2 = sigmoid_second(s);
  const double e = expert_eval(x, atom.eta, expert);
  const Eigen::VectorXd de = expert_grad(x, atom.eta, expert);

  std::array<double, 3> res{0.0, 0.0, 0.0};
  for (int u = 0; u < d; ++u) {
    for (int v = 0; v < d; ++v) {
      // d2F/dA_uv dc vs d2F/db_u db_v
      const double lhs1 = s2 * (x[u] * x[v]) * e;
      const double rhs1 = (s2 * x[u]) * (x[v] * e);
      res[0] = std::max(res[0], std::abs(lhs1 - rhs1));
      // d2F/dA_uv dbeta vs d2F/db_u dalpha_v
      const double lhs2 = s1 * (x[u] * x[v]) * de[d];
      const double rhs2 = (s1 * x[u]) * de[v];
      res[1] = std::max(res[1], std::abs(lhs2 - rhs2));
    }
    // d2F/db_u dbeta vs d2F/dc dalpha_u
    const double lhs3 = s1 * x[u] * de[d];
    const double rhs3 = s1 * de[u];
    res[2] = std::max(res[2], std::abs(lhs3 - rhs3));
  }
  return res;
}

ProbeReport probe(ProbeMode mode, const ExpertSpec& expert, ScoreKind score,
                  int ell, CounterRng& rng, double threshold) {
  if (ell < 1) throw std::invalid_argument("probe: ell must be >= 1");
  if ((mode == ProbeMode::kPartialStrong || mode == ProbeMode::kPartialWeak) &&
      full_score(score))
    score = ScoreKind::kPartiallyQuadratic;

  const int d = expert.input_dim;
  const int q = expert.param_dim();
  DerivativeFamilySpec spec;
  spec.mode = mode;
  spec.expert = expert;
  spec.score = score;

  // Distinct random atoms; two-layer experts need alpha and lambda away
  // from zero, linear/polynomial ones beta away from zero.
  for (int i = 0; i < ell; ++i) {
    for (int attempt = 0; attempt < 1000; ++attempt) {
      Atom a;
      a.A.resize(d, d);
      for (int u = 0; u < d; ++u)
        for (int v = u; v < d; ++v) {
          a.A(u, v) = rng.next_gaussian();
          a.A(v, u) = a.A(u, v);
        }
      a.b.resize(full_score(score) ? d : 0);
      for (int u = 0; u < a.b.size(); ++u) a.b[u] = rng.next_gaussian();
      a.c = rng.next_gaussian();
      a.eta.resize(q);
      for (int k = 0; k < q; ++k) a.eta[k] = rng.next_gaussian();
      if (a.eta.head(d).norm() < 0.5) continue;
      if (expert.is_two_layer() && std::abs(a.eta[d + 1]) < 0.5) continue;
      if (!expert.is_two_layer() && std::abs(a.eta[d]) < 0.3) continue;
      bool distinct = true;
      for (const Atom& prev : spec.params) {
        double gap = (a.A - prev.A).norm() + (a.eta - prev.eta).norm() +
                     std::abs(a.c - prev.c);
        if (a.b.size() > 0) gap += (a.b - prev.b).norm();
        if (gap < 0.1) distinct = false;
      }
      if (!distinct) continue;
      spec.params.push_back(std::move(a));
      break;
    }
  }
  if (static_cast<int>(spec.params.size()) != ell)
    throw std::runtime_error("probe: atom sampling failed");

  const bool order2 =
      mode == ProbeMode::kStrong || mode == ProbeMode::kPartialStrong;

  // Column count determines the sampling budget (m = 8 x family size).
  CanonicalFamily canon;
  int n_canon = 0;
  if (order2) {
    DerivativeFamilySpec probe_spec = spec;
    probe_spec.sample_points.resize(1, d);
    probe_spec.sample_points.setZero();
    canon = build_canonical_order2(probe_spec);
    n_canon = static_cast<int>(canon.index.size());
  }
  const int n_weak = ell * (d * (d + 1) / 2 + (full_score(score) ? d : 0) + 1 + q);
  const int total = n_canon + n_weak;
  const int m = 8 * total;

  spec.sample_points.resize(m, d);
  const bool relu = expert.family == ExpertFamily::kTwoLayerRelu;
  for (int s = 0; s < m; ++s) {
    for (int attempt = 0; attempt < 1000; ++attempt) {
      Eigen::VectorXd x(d);
      for (int j = 0; j < d; ++j) x[j] = rng.next_uniform(-1.0, 1.0);
      if (relu) {
        bool near_kink = false;
        for (const Atom& a : spec.params)
          if (std::abs(a.eta.head(d).dot(x) + a.eta[d]) <= 1e-3)
            near_kink = true;
        if (near_kink) continue;
      }
      spec.sample_points.row(s) = x;
      break;
    }
  }

  ProbeReport report;
  report.threshold = threshold;
  std::vector<AtomPanel> panels;
  panels.reserve(spec.params.size());
  for (const Atom& a : spec.params)
    panels.push_back(
        make_panel(a, expert, score, spec.sample_points, false, spec.fd_step));

  if (order2) {
    canon = build_canonical_order2(spec);
    report.families.push_back(assess(canon.matrix, canon.benign));
  }
  WeakFamily weak = build_weak_family(spec, panels);
  report.families.push_back(assess(weak.matrix, weak.benign));

  report.family_size = 0;
  report.min_singular_value = std::numeric_limits<double>::infinity();
  for (const FamilyProbe& f : report.families) {
    report.family_size += f.columns;
    report.min_singular_value = std::min(report.min_singular_value, f.min_singular);
  }
  report.verdict = report.min_singular_value > threshold ? Verdict::kIndependent
                                                         : Verdict::kDegenerate;
  return report;
}

const char* to_string(ProbeMode m) {
  switch (m) {
    case ProbeMode::kStrong:
      return "strong";
    case ProbeMode::kWeak:
      return "weak";
    case ProbeMode::kPartialStrong:
      return "partial-strong";
    case ProbeMode::kPartialWeak:
      return "partial-weak";
  }
  return "?";
}

const char* to_string(Verdict v) {
  return v == Verdict::kIndependent ? "independent" : "degenerate";
}

}  // namespace moe
