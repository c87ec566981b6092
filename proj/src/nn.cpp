#include "mora/nn.hpp"

#include <cmath>
#include <vector>

#include "mora/errors.hpp"
#include "mora/ops.hpp"

namespace mora {

Tensor linear(const Tensor& x, const Tensor& w, const Tensor& bias) {
  Tensor y = matmul(x, w);
  return bias.defined() ? add_row(y, bias) : y;
}

Tensor multi_head_attention(const Tensor& q, const Tensor& k, const Tensor& v, std::size_t heads, bool causal) {
  const std::size_t d = q.cols();
  if (k.cols() != d || v.cols() != d || k.rows() != v.rows()) {
    throw DimensionError("attention: q " + shape_str(q.shape()) + ", k " + shape_str(k.shape()) + ", v " +
                         shape_str(v.shape()) + " do not fit");
  }
  if (heads == 0 || d % heads != 0) {
    throw DimensionError("attention: width " + std::to_string(d) + " not divisible by " + std::to_string(heads) +
                         " heads");
  }
  const std::size_t dh = d / heads;
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));
  std::vector<Tensor> outs;
  outs.reserve(heads);
  for (std::size_t h = 0; h < heads; ++h) {
    Tensor qh = heads == 1 ? q : slice_cols(q, h * dh, dh);
    Tensor kh = heads == 1 ? k : slice_cols(k, h * dh, dh);
    Tensor vh = heads == 1 ? v : slice_cols(v, h * dh, dh);
    Tensor scores = scale(matmul(qh, transpose(kh)), inv_sqrt);
    Tensor probs = causal ? causal_softmax_rows(scores) : softmax_rows(scores);
    outs.push_back(matmul(probs, vh));
  }
  return heads == 1 ? outs[0] : concat_cols(outs);
}

Tensor init_weight(std::size_t fan_in, std::size_t fan_out, std::mt19937_64& rng, double gain) {
  return Tensor::randn({fan_in, fan_out}, rng, gain / std::sqrt(static_cast<double>(fan_in)));
}

}  // namespace mora
