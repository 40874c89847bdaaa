#pragma once

#include <cstdint>
#include <string_view>
#include <vector>

#include "mgpms/rng.hpp"
#include "mgpms/tensor/tensor.hpp"

namespace mgpms::ops {

// Elementwise. Binary ops take equal shapes, or one operand with a single
// element which is broadcast.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);  // DomainError on a zero divisor
Tensor add_scalar(const Tensor& a, double c);
Tensor mul_scalar(const Tensor& a, double c);
Tensor neg(const Tensor& a);
Tensor exp(const Tensor& a);
Tensor log(const Tensor& a);  // DomainError on non-positive input
Tensor sigmoid(const Tensor& a);
Tensor relu(const Tensor& a);
Tensor square(const Tensor& a);

Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);

Tensor reshape(const Tensor& a, Shape shape);
Tensor transpose(const Tensor& a);
/// out.flat[i] = a.flat[index[i]]; gradients scatter-add back.
Tensor gather(const Tensor& a, std::vector<std::uint32_t> index, Shape shape);
/// [a | b] for matrices with equal row counts.
Tensor concat_cols(const Tensor& a, const Tensor& b);

Tensor matmul(const Tensor& a, const Tensor& b);     // a b
Tensor matmul_nt(const Tensor& a, const Tensor& b);  // a b^T
Tensor matmul_tn(const Tensor& a, const Tensor& b);  // a^T b

/// Adds `bias` (length cols) to every row of `a`.
Tensor add_row_vector(const Tensor& a, const Tensor& bias);
/// diag(scale) * a, one factor per row.
Tensor scale_rows(const Tensor& a, const Tensor& scale);
/// a + diag(v) for square a.
Tensor add_diag(const Tensor& a, const Tensor& v);

Tensor softmax_lastdim(const Tensor& a);
/// Row-wise normalization to zero mean / unit variance, then scale and shift.
Tensor layer_norm(const Tensor& x, const Tensor& scale, const Tensor& shift,
                  double eps = 1e-5);

/// Multi-head causal attention over a stack of independent sequences.
/// q, k, v are (segments*segment_len) x E; rows [s*L, (s+1)*L) form sequence s.
/// Position j of a sequence attends to positions k <= j only.
Tensor causal_attention(const Tensor& q, const Tensor& k, const Tensor& v,
                        std::size_t heads, std::size_t segment_len);

/// Inverted dropout: zeroes entries with probability `rate` and rescales the
/// rest by 1/(1-rate). Identity when !training or rate == 0.
Tensor dropout(const Tensor& a, double rate, bool training, Rng& rng);

/// Cumulative block readout over stacked sequences of length L = blocks.rows():
/// out[s*L + j] = sum_{k<=j} dot(v[s*L + k], blocks[k]).
Tensor block_readout(const Tensor& v, const Tensor& blocks);

/// mean over entries of softplus(s) - target*s, i.e. binary cross-entropy of
/// sigmoid(s) against `target`, evaluated stably. `pos_weight` scales the
/// positive-label term.
Tensor bce_with_logits_mean(const Tensor& logits, double target, double pos_weight = 1.0);

/// Lower factor with strictly-lower entries from `raw` and exp(raw) on the diagonal.
Tensor lower_exp_diag(const Tensor& raw);

/// Entrywise product of two selections:
///   out[p][q] = a[rows.a[p]][cols.a[q]] * b[rows.b[p]][cols.b[q]].
/// With rows/cols enumerating all (i, t) pairs this is the Kronecker product
/// a (x) b; subsets give the corresponding submatrix.
struct KronIndex {
  std::vector<std::uint32_t> a;
  std::vector<std::uint32_t> b;
  std::size_t size() const { return a.size(); }
};
Tensor kron_select(const Tensor& a, const Tensor& b, const KronIndex& rows,
                   const KronIndex& cols);

/// Squared-exponential kernel exp(-(x_p - y_q)^2 / (2 l^2)) with l = exp(log_l).
Tensor se_kernel(std::span<const double> x, std::span<const double> y,
                 const Tensor& log_length_scale);

/// Cholesky factor of sym(a) + jitter I, sym(a) = (a + a^T)/2.
/// On failure the jitter is escalated tenfold up to `escalations` times; a zero
/// starting jitter escalates from 1e-6 * mean |diag|. Throws
/// FactorizationError naming `label` when every attempt fails.
struct CholeskyResult {
  Tensor factor;
  double jitter = 0.0;
};
CholeskyResult cholesky_jittered(const Tensor& a, double jitter, std::string_view label = "matrix",
                                 int escalations = 3);
Tensor cholesky(const Tensor& a, double jitter, std::string_view label = "matrix");

/// 1e-6 * mean diagonal, the customary starting jitter.
double default_jitter(const Tensor& a);

/// l^{-1} b, or l^{-T} b when transpose. l is read as lower triangular.
Tensor tri_solve(const Tensor& l, const Tensor& b, bool transpose = false);

}  // namespace mgpms::ops
