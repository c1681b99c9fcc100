#include "moe/voronoi.hpp"

#include <cmath>
#include <stdexcept>

namespace moe {

namespace {

void check_pair(const MixingMeasure& fitted, const MixingMeasure& reference) {
  if (fitted.atoms.empty())
    throw std::invalid_argument("voronoi: empty fitted measure");
  if (reference.atoms.empty())
    throw std::invalid_argument("voronoi: empty reference measure");
  if (fitted.score != reference.score)
    throw std::invalid_argument("voronoi: score kinds disagree");
  if (fitted.expert != reference.expert)
    throw std::invalid_argument("voronoi: expert specs disagree");
}

// Squared theta-distance, theta = (A, b, eta); c excluded.
double theta_dist2(const Atom& a, const Atom& r) {
  double s = (a.A - r.A).squaredNorm() + (a.eta - r.eta).squaredNorm();
  if (a.b.size() > 0) s += (a.b - r.b).squaredNorm();
  return s;
}

void check_assignment(const VoronoiAssignment& assignment,
                      const MixingMeasure& fitted,
                      const MixingMeasure& reference) {
  if (static_cast<int>(assignment.cell_of.size()) != fitted.size() ||
      static_cast<int>(assignment.cells.size()) != reference.size())
    throw std::invalid_argument("voronoi: assignment does not match the pair");
}

}  // namespace

VoronoiAssignment assign_cells(const MixingMeasure& fitted,
                               const MixingMeasure& reference) {
  check_pair(fitted, reference);
  VoronoiAssignment out;
  out.cell_of.resize(fitted.size());
  out.cells.assign(reference.size(), {});
  for (int i = 0; i < fitted.size(); ++i) {
    int best = 0;
    double best_d = theta_dist2(fitted.atoms[i], reference.atoms[0]);
    for (int j = 1; j < reference.size(); ++j) {
      const double dj = theta_dist2(fitted.atoms[i], reference.atoms[j]);
      if (dj < best_d) {
        best_d = dj;
        best = j;
      }
    }
    out.cell_of[i] = best;
    out.cells[best].push_back(i);
  }
  out.classification.resize(reference.size());
  for (int j = 0; j < reference.size(); ++j) {
    const size_t k = out.cells[j].size();
    out.classification[j] = k == 0 ? CellKind::kEmpty
                           : k == 1 ? CellKind::kExact
                                    : CellKind::kOverSpecified;
  }
  return out;
}

LossReport loss_sparse(const MixingMeasure& fitted,
                       const MixingMeasure& reference,
                       const VoronoiAssignment& assignment) {
  check_pair(fitted, reference);
  check_assignment(assignment, fitted, reference);
  LossReport rep;
  rep.per_cell_terms.assign(reference.size(), 0.0);
  for (int j = 0; j < reference.size(); ++j) {
    const Atom& ref = reference.atoms[j];
    const auto& cell = assignment.cells[j];
    double term = 0.0;
    if (assignment.classification[j] == CellKind::kOverSpecified) {
      double weight_sum = 0.0;
      for (int i : cell) {
        const Atom& fit = fitted.atoms[i];
        weight_sum += sigmoid(fit.c);
        term += (fit.A - ref.A).squaredNorm() + (fit.eta - ref.eta).squaredNorm();
        if (fit.b.size() > 0) term += (fit.b - ref.b).squaredNorm();
      }
      term += std::abs(weight_sum - sigmoid(ref.c));
    } else if (assignment.classification[j] == CellKind::kExact) {
      for (int i : cell) {
        const Atom& fit = fitted.atoms[i];
        term += (fit.A - ref.A).norm() + std::abs(fit.c - ref.c) +
                (fit.eta - ref.eta).norm();
        if (fit.b.size() > 0) term += (fit.b - ref.b).norm();
      }
    }
    rep.per_cell_terms[j] = term;
    rep.value += term;
  }
  return rep;
}

LossReport loss_minimax_r(const MixingMeasure& fitted,
                          const MixingMeasure& reference,
                          const VoronoiAssignment& assignment, double r) {
  check_pair(fitted, reference);
  check_assignment(assignment, fitted, reference);
  if (r < 1.0) throw std::invalid_argument("loss_minimax_r: r must be >= 1");
  if (fitted.expert.is_two_layer())
    throw std::invalid_argument(
        "loss_minimax_r: defined for Linear/Polynomial experts only");
  const int d = fitted.dim();
  LossReport rep;
  rep.r = r;
  rep.per_cell_terms.assign(reference.size(), 0.0);
  for (int j = 0; j < reference.size(); ++j) {
    const Atom& ref = reference.atoms[j];
    const auto& cell = assignment.cells[j];
    double term = 0.0;
    const bool over = assignment.classification[j] == CellKind::kOverSpecified;
    if (assignment.classification[j] == CellKind::kEmpty) continue;
    double weight_sum = 0.0;
    for (int i : cell) {
      const Atom& fit = fitted.atoms[i];
      weight_sum += sigmoid(fit.c);
      term += std::pow((fit.A - ref.A).norm(), r) +
              std::pow((fit.eta.head(d) - ref.eta.head(d)).norm(), r) +
              std::pow(std::abs(fit.eta[d] - ref.eta[d]), r);
      if (fit.b.size() > 0) term += std::pow((fit.b - ref.b).norm(), r);
      if (!over) term += std::pow(std::abs(fit.c - ref.c), r);
    }
    if (over) term += std::abs(weight_sum - sigmoid(ref.c));
    rep.per_cell_terms[j] = term;
    rep.value += term;
  }
  return rep;
}

LossReport loss_dense(const MixingMeasure& fitted,
                      const MixingMeasure& reference,
                      const VoronoiAssignment& assignment) {
  check_pair(fitted, reference);
  check_assignment(assignment, fitted, reference);
  LossReport rep;
  rep.per_cell_terms.assign(reference.size(), 0.0);
  for (int j = 0; j < reference.size(); ++j) {
    const Atom& ref = reference.atoms[j];
    double term = 0.0;
    for (int i : assignment.cells[j]) {
      const Atom& fit = fitted.atoms[i];
      term += (fit.A - ref.A).norm() + std::abs(fit.c - ref.c) +
              (fit.eta - ref.eta).norm();
      if (fit.b.size() > 0) term += (fit.b - ref.b).norm();
    }
    rep.per_cell_terms[j] = term;
    rep.value += term;
  }
  return rep;
}

}  // namespace moe
