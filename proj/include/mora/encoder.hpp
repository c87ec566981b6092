#pragma once

// Sum-aggregation message passing over molecular graphs.

#include <cstddef>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "mora/molecule.hpp"
#include "mora/tensor.hpp"

namespace mora {

struct NodeEmbeddings {
  Tensor values;  // atoms × d_model

  std::size_t count() const { return values.rows(); }
};

struct EncoderConfig {
  std::size_t layers = 3;
  std::size_t d_model = 32;
  bool trainable = false;
};

struct EncoderLayer {
  Tensor eps;      // 1×1, self weight is 1 + eps
  Tensor w1, b1;   // d × d, 1 × d
  Tensor w2, b2;
};

struct EncoderParams {
  EncoderConfig cfg;
  Tensor w_in, b_in;  // kAtomFeatureDim × d, 1 × d
  std::vector<EncoderLayer> layers;

  static EncoderParams init(const EncoderConfig& cfg, std::mt19937_64& rng);
  std::vector<std::pair<std::string, Tensor>> named() const;
  void set_trainable(bool on);
};

// h'_v = MLP((1 + eps)·h_v + Σ_{u ∈ N(v)} h_u), MLP = Linear, ReLU, Linear.
Tensor message_step(const Tensor& h, const MolecularGraph& g, const EncoderLayer& layer);

NodeEmbeddings encode_graph(const MolecularGraph& g, const EncoderParams& params);

}  // namespace mora
