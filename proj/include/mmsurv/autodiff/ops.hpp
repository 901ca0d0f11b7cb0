#pragma once

#include <cstddef>
#include <vector>

#include "mmsurv/autodiff/graph.hpp"

// Differentiable operations on graph nodes. Unless stated otherwise, operands
// are rank-2 and shapes are checked eagerly with ShapeError.
namespace mmsurv::ad {

Var matmul(Var a, Var b);
Var transpose(Var a);

Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
// a (m x n) plus a row vector (1 x n) broadcast over rows.
Var add_row(Var a, Var row);
Var scale(Var a, double c);
Var add_scalar(Var a, double c);

Var exp(Var a);
// log(max(a, floor)); the clamp has zero gradient below the floor.
Var log(Var a, double floor = 0.0);
Var abs(Var a);
Var square(Var a);
// Gaussian-error linear unit, exact erf form.
Var gelu(Var a);

// Any rank; `axis` indexes the shape.
Var softmax(Var a, std::size_t axis);
Var log_softmax_rows(Var a);
// Row-wise normalization over the last axis followed by gain/bias (1 x n).
Var layer_norm(Var x, Var gain, Var bias, double eps);
Var l2_normalize_rows(Var a, double eps = 1e-12);

Var sum(Var a);
Var mean(Var a);
Var reshape(Var a, Shape shape);
// Picks flat (row-major) elements; result is 1 x indices.size().
Var gather(Var a, std::vector<std::size_t> indices);

// Rows [a; b] stacked.
Var concat_rows(Var a, Var b);
// Per-batch sequence concatenation: a holds `batch` blocks of na rows, b holds
// `batch` blocks of nb rows; result holds blocks [a_i; b_i].
Var concat_seq(Var a, Var b, std::size_t batch);
// Repeats the whole of `a` vertically `times` times.
Var tile_rows(Var a, std::size_t times);
// Mean over each of `batch` contiguous row blocks; result batch x cols.
Var segment_mean(Var a, std::size_t batch);

// Multi-head scaled dot-product attention, batched over contiguous blocks.
// q: (batch*nq) x d, k and v: (batch*nk) x d, d divisible by heads. Within
// each block and head: softmax(Q K^T / sqrt(d/heads)) V.
Var attention(Var q, Var k, Var v, std::size_t batch, std::size_t heads);

// Value-level attention probabilities for inspection, laid out
// [batch][head][nq][nk].
std::vector<double> attention_weights(const Tensor& q, const Tensor& k, std::size_t batch,
                                      std::size_t heads);

}  // namespace mmsurv::ad
