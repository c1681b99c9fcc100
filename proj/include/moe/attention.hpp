#pragma once

#include <Eigen/Dense>
#include <vector>

#include "moe/model.hpp"

namespace moe {

struct AttentionWeights {
  Eigen::MatrixXd w_q;  // d x d_k
  Eigen::MatrixXd w_k;  // d x d_k
  Eigen::MatrixXd w_v;  // d x d_v
  void validate(int d) const;
};

struct TokenSequence {
  Eigen::MatrixXd x;  // N x d, one token per row
  int count() const { return static_cast<int>(x.rows()); }
  int dim() const { return static_cast<int>(x.cols()); }
};

// Materialized per-row MoE view of one attention head: selectors E_i with
// X E_i = x_i for the concatenated row vector X, score matrices
// M_ij = E_i W_Q W_K^T E_j^T / sqrt(d_k) and value maps P_j = E_j W_V.
// Built only for verification; the evaluation path uses index arithmetic.
struct MoeDecomposition {
  std::vector<Eigen::MatrixXd> selectors;       // N of Nd x d
  std::vector<std::vector<Eigen::MatrixXd>> score_matrices;  // N x N of Nd x Nd
  std::vector<Eigen::MatrixXd> value_maps;      // N of Nd x d_v
  Eigen::RowVectorXd concat;                    // 1 x Nd, [x_1 ... x_N]
};

Eigen::MatrixXd softmax_attn(const TokenSequence& seq,
                             const AttentionWeights& w);
Eigen::MatrixXd sigmoid_attn(const TokenSequence& seq,
                             const AttentionWeights& w);

MoeDecomposition build_decomposition(const TokenSequence& seq,
                                     const AttentionWeights& w);

// Row i of the attention output written as a mixture of experts: expert j
// is x_j W_V and its affinity score is x_i B x_j^T with B = W_Q W_K^T/sqrt(d_k).
// Must agree with the corresponding row of softmax_attn / sigmoid_attn.
Eigen::RowVectorXd attn_row_as_moe(const TokenSequence& seq,
                                   const AttentionWeights& w, int row,
                                   GatingKind gating);

}  // namespace moe
