#pragma once

#include <vector>

#include "moe/model.hpp"

namespace moe {

enum class CellKind { kEmpty, kExact, kOverSpecified };

// Partition of the fitted atoms over the reference atoms' Voronoi cells.
// The assignment metric is the Euclidean norm of the concatenated
// (A, b, eta) difference -- c is excluded, b only under the fully
// quadratic score.  Ties break toward the lowest reference index.
struct VoronoiAssignment {
  std::vector<int> cell_of;               // fitted index -> reference index
  std::vector<std::vector<int>> cells;    // reference index -> member list
  std::vector<CellKind> classification;   // per reference atom
};

struct LossReport {
  double value = 0.0;
  std::vector<double> per_cell_terms;  // one entry per reference atom
  double r = 1.0;                      // power used (loss_minimax_r only)
};

VoronoiAssignment assign_cells(const MixingMeasure& fitted,
                               const MixingMeasure& reference);

// Sparse-regime loss: over-specified cells contribute the aggregate sigmoid
// gap |sum_i sigma(c_i) - sigma(c*_j)| plus squared parameter gaps; exact
// cells contribute first-power gaps including |dc|.  Computes L1 under the
// fully quadratic score and L4 (no b terms) under the partially quadratic.
LossReport loss_sparse(const MixingMeasure& fitted,
                       const MixingMeasure& reference,
                       const VoronoiAssignment& assignment);

// L_{2,r}: only defined for Linear/Polynomial experts, where eta = (alpha,
// beta).  Norm gaps are raised to the power r in both cell blocks; the
// aggregate sigmoid gap stays at first power.
LossReport loss_minimax_r(const MixingMeasure& fitted,
                          const MixingMeasure& reference,
                          const VoronoiAssignment& assignment, double r);

// Dense-regime loss: first-power parameter gaps including |dc| over every
// cell.  Computes L3 (fully quadratic) or L5 (partially quadratic, no b).
LossReport loss_dense(const MixingMeasure& fitted,
                      const MixingMeasure& reference,
                      const VoronoiAssignment& assignment);

}  // namespace moe
