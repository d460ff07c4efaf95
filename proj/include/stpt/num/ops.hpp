#pragma once

#include <span>

#include "stpt/num/tensor.hpp"

namespace stpt {

// Elementwise and structural primitives. All kernels are pure; gradient
// formulas are exercised against central finite differences in the tests.

Tensor add(const Tensor& a, const Tensor& b);          // same shape
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);          // same shape, Hadamard
Tensor scale(const Tensor& x, double c);
Tensor add_scalar(const Tensor& x, double c);
Tensor add_rowwise(const Tensor& x, const Tensor& row);  // [L,d] + [d]
Tensor div(const Tensor& a, const Tensor& b_scalar);     // b has one element
Tensor sqrt(const Tensor& x);
Tensor gelu(const Tensor& x);  // tanh approximation, c0=sqrt(2/pi), c1=0.044715

Tensor matmul(const Tensor& a, const Tensor& b);  // [m,k]x[k,n]
Tensor transpose(const Tensor& x);                // rank-2
Tensor reshape(const Tensor& x, Shape shape);

Tensor softmax(const Tensor& x, int axis = -1);      // rank 1 or 2
Tensor log_softmax(const Tensor& x);                 // last axis
Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps = 1e-8);

Tensor sum(const Tensor& x);   // scalar
Tensor mean(const Tensor& x);  // scalar

// p must be a distribution (non-negative, sums to 1 within 1e-6); log_q a
// log-distribution. Uses the 0*log(0) = 0 convention; log arguments are
// clamped below at 1e-12.
Tensor kl_divergence(const Tensor& p, const Tensor& log_q);
// Row-wise sum of KL(p_r || q_r) over matching [M,I] matrices.
Tensor kl_divergence_rows_sum(const Tensor& p, const Tensor& log_q);

Tensor cross_entropy(const Tensor& logits, std::int64_t target);  // -log softmax(x)[t]
enum class Reduction { Sum, Mean };
Tensor cross_entropy_rows(const Tensor& logits, std::span<const int> targets,
                          Reduction reduction = Reduction::Mean);

Tensor embedding(const Tensor& table, std::span<const int> ids);   // [n,d] rows of [V,d]
Tensor gather_rows(const Tensor& x, std::span<const std::int64_t> rows);
Tensor concat(const std::vector<Tensor>& parts, int axis = 0);     // rank 1/2, axis 0
Tensor concat_cols(const std::vector<Tensor>& parts);              // rank-2
Tensor slice_rows(const Tensor& x, std::int64_t begin, std::int64_t end);
Tensor slice_cols(const Tensor& x, std::int64_t begin, std::int64_t end);
Tensor select_row(const Tensor& x, std::int64_t row);              // [d]

// Sliding-window row gather for strided temporal convolution:
// [T,f] -> [T', k*f] with row t' = rows [t'*s, t'*s + k) flattened.
Tensor unfold_rows(const Tensor& x, int kernel, int stride);

// Rows listed in `rows` (sorted, unique) are replaced by `fill`; the rest
// pass through bit-identically. Gradient reaches both x and fill.
Tensor mask_rows(const Tensor& x, const std::vector<std::int64_t>& rows, const Tensor& fill);

// y_k = cos(u, v_k) for each row v_k of v; gradient defined for both inputs.
Tensor cosine_rows(const Tensor& u, const Tensor& v);

double cosine_similarity(std::span<const double> u, std::span<const double> v);

}  // namespace stpt
