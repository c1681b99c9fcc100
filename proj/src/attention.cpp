#include "moe/attention.hpp"

#include <cmath>
#include <stdexcept>

namespace moe {

namespace {

void check_shapes(const TokenSequence& seq, const AttentionWeights& w) {
  if (seq.count() < 1) throw std::invalid_argument("attention: empty sequence");
  if (!seq.x.allFinite())
    throw std::invalid_argument("attention: non-finite token entries");
  w.validate(seq.dim());
}

Eigen::MatrixXd scaled_scores(const TokenSequence& seq,
                              const AttentionWeights& w) {
  const Eigen::MatrixXd q = seq.x * w.w_q;
  const Eigen::MatrixXd k = seq.x * w.w_k;
  return q * k.transpose() / std::sqrt(static_cast<double>(w.w_q.cols()));
}

}  // namespace

void AttentionWeights::validate(int d) const {
  if (w_q.rows() != d || w_k.rows() != d || w_v.rows() != d)
    throw std::invalid_argument("attention weights: row count must equal d");
  if (w_q.cols() != w_k.cols())
    throw std::invalid_argument("attention weights: W_Q and W_K disagree on d_k");
  if (w_q.cols() < 1) throw std::invalid_argument("attention weights: d_k == 0");
  if (w_v.cols() < 1) throw std::invalid_argument("attention weights: d_v == 0");
  if (!w_q.allFinite() || !w_k.allFinite() || !w_v.allFinite())
    throw std::invalid_argument("attention weights: non-finite entries");
}

Eigen::MatrixXd softmax_attn(const TokenSequence& seq,
                             const AttentionWeights& w) {
  check_shapes(seq, w);
  Eigen::MatrixXd s = scaled_scores(seq, w);
  for (int i = 0; i < s.rows(); ++i) {
    const double m = s.row(i).maxCoeff();
    s.row(i) = (s.row(i).array() - m).exp();
    s.row(i) /= s.row(i).sum();
  }
  return s * (seq.x * w.w_v);
}

Eigen::MatrixXd sigmoid_attn(const TokenSequence& seq,
                             const AttentionWeights& w) {
  check_shapes(seq, w);
  Eigen::MatrixXd s = scaled_scores(seq, w);
  s = s.unaryExpr([](double z) { return sigmoid(z); });
  return s * (seq.x * w.w_v);
}

MoeDecomposition build_decomposition(const TokenSequence& seq,
                                     const AttentionWeights& w) {
  check_shapes(seq, w);
  const int n = seq.count();
  const int d = seq.dim();
  const double scale = std::sqrt(static_cast<double>(w.w_q.cols()));
  const Eigen::MatrixXd b = w.w_q * w.w_k.transpose() / scale;

  MoeDecomposition dec;
  dec.concat.resize(n * d);
  for (int i = 0; i < n; ++i) dec.concat.segment(i * d, d) = seq.x.row(i);

  dec.selectors.reserve(n);
  for (int i = 0; i < n; ++i) {
    Eigen::MatrixXd e = Eigen::MatrixXd::Zero(n * d, d);
    e.block(i * d, 0, d, d).setIdentity();
    dec.selectors.push_back(std::move(e));
  }
  dec.value_maps.reserve(n);
  for (int j = 0; j < n; ++j) dec.value_maps.push_back(dec.selectors[j] * w.w_v);
  dec.score_matrices.assign(n, std::vector<Eigen::MatrixXd>());
  for (int i = 0; i < n; ++i) {
    dec.score_matrices[i].reserve(n);
    for (int j = 0; j < n; ++j)
      dec.score_matrices[i].push_back(dec.selectors[i] * b *
                                      dec.selectors[j].transpose());
  }
  return dec;
}

Eigen::RowVectorXd attn_row_as_moe(const TokenSequence& seq,
                                   const AttentionWeights& w, int row,
                                   GatingKind gating) {
  check_shapes(seq, w);
  const int n = seq.count();
  if (row < 0 || row >= n)
    throw std::out_of_range("attn_row_as_moe: row index out of range");
  const double scale = std::sqrt(static_cast<double>(w.w_q.cols()));
  const Eigen::MatrixXd b = w.w_q * w.w_k.transpose() / scale;

  // Index-arithmetic form of X M_ij X^T: the quadratic form reduces to
  // x_i B x_j^T, one affinity score per expert j.
  Eigen::VectorXd scores(n);
  const Eigen::RowVectorXd xi_b = seq.x.row(row) * b;
  for (int j = 0; j < n; ++j) scores[j] = xi_b.dot(seq.x.row(j));

  Eigen::VectorXd g(n);
  if (gating == GatingKind::kSigmoidElementwise) {
    for (int j = 0; j < n; ++j) g[j] = sigmoid(scores[j]);
  } else {
    const double m = scores.maxCoeff();
    for (int j = 0; j < n; ++j) g[j] = std::exp(scores[j] - m);
    g /= g.sum();
  }

  Eigen::RowVectorXd out = Eigen::RowVectorXd::Zero(w.w_v.cols());
  for (int j = 0; j < n; ++j) out += g[j] * (seq.x.row(j) * w.w_v);
  return out;
}

}  // namespace moe
