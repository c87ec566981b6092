#pragma once

#include <cstddef>

#include "mora/tensor.hpp"

namespace mora {

// x · w (+ bias row when given).
Tensor linear(const Tensor& x, const Tensor& w, const Tensor& bias = {});

// Scaled dot-product attention split over `heads` column groups.
// q: Tq×d, k and v: Tk×d; returns Tq×d (before any output projection).
// When causal, query row i sees key rows 0..i + (Tk - Tq).
Tensor multi_head_attention(const Tensor& q, const Tensor& k, const Tensor& v, std::size_t heads, bool causal);

// Xavier-style N(0, 1/fan_in) init for a fan_in × fan_out matrix.
Tensor init_weight(std::size_t fan_in, std::size_t fan_out, std::mt19937_64& rng, double gain = 1.0);

}  // namespace mora
