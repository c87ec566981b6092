#pragma once

// Differentiable primitives. All matrix ops take rank-2 operands.

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "mora/tensor.hpp"

namespace mora {

using TokenId = std::int32_t;

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double s);
// a * s where s is a one-element tensor (e.g. a learnable scalar).
Tensor scale_by(const Tensor& a, const Tensor& s);
// Adds a 1×n row to every row of an m×n matrix.
Tensor add_row(const Tensor& a, const Tensor& row);
Tensor transpose(const Tensor& a);
Tensor reshape(const Tensor& a, Shape shape);

// Row-wise normalization with per-column gain and bias (both 1×n).
Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps = 1e-5);
// tanh approximation
Tensor gelu(const Tensor& x);
Tensor relu(const Tensor& x);

// Row gather: out[t] = table[ids[t]].
Tensor embedding(const Tensor& table, std::span<const TokenId> ids);

Tensor concat_cols(const std::vector<Tensor>& parts);
Tensor concat_rows(const std::vector<Tensor>& parts);
Tensor slice_cols(const Tensor& a, std::size_t start, std::size_t count);
Tensor slice_rows(const Tensor& a, std::size_t start, std::size_t count);

Tensor softmax_rows(const Tensor& x);
// Row i is normalized over columns 0..i (+ offset); later columns are zero.
Tensor causal_softmax_rows(const Tensor& x);

// Mean over non-ignored positions of -log softmax(logits[t])[targets[t]].
Tensor cross_entropy(const Tensor& logits, std::span<const TokenId> targets, TokenId ignore_index);

Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);

// out[v] = sum of h[u] for u in neighbors[v]. Each column is accumulated in
// ascending value order, so the result is independent of how the neighbor
// list is ordered or labeled.
Tensor neighbor_sum(const Tensor& h, const std::vector<std::vector<std::size_t>>& neighbors);

}  // namespace mora
