#include "mora/encoder.hpp"

#include "mora/errors.hpp"
#include "mora/nn.hpp"
#include "mora/ops.hpp"

namespace mora {

EncoderParams EncoderParams::init(const EncoderConfig& cfg, std::mt19937_64& rng) {
  if (cfg.d_model == 0) throw ConfigError("encoder.d_model must be positive");
  const std::size_t d = cfg.d_model;
  EncoderParams p;
  p.cfg = cfg;
  p.w_in = init_weight(kAtomFeatureDim, d, rng);
  p.b_in = Tensor::randn({1, d}, rng, 0.1);
  for (std::size_t l = 0; l < cfg.layers; ++l) {
    EncoderLayer L;
    L.eps = Tensor::zeros({1, 1});
    L.w1 = init_weight(d, d, rng, 1.4);
    L.b1 = Tensor::randn({1, d}, rng, 0.1);
    L.w2 = init_weight(d, d, rng);
    L.b2 = Tensor::randn({1, d}, rng, 0.1);
    p.layers.push_back(std::move(L));
  }
  p.set_trainable(cfg.trainable);
  return p;
}

std::vector<std::pair<std::string, Tensor>> EncoderParams::named() const {
  std::vector<std::pair<std::string, Tensor>> out;
  out.emplace_back("encoder.w_in", w_in);
  out.emplace_back("encoder.b_in", b_in);
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const std::string p = "encoder.layer" + std::to_string(l) + ".";
    out.emplace_back(p + "eps", layers[l].eps);
    out.emplace_back(p + "w1", layers[l].w1);
    out.emplace_back(p + "b1", layers[l].b1);
    out.emplace_back(p + "w2", layers[l].w2);
    out.emplace_back(p + "b2", layers[l].b2);
  }
  return out;
}

void EncoderParams::set_trainable(bool on) {
  cfg.trainable = on;
  for (auto& [name, t] : named()) t.set_requires_grad(on);
}

Tensor message_step(const Tensor& h, const MolecularGraph& g, const EncoderLayer& layer) {
  if (h.rank() != 2 || h.rows() != g.atom_count()) {
    throw ContractError("message_step: embeddings " + shape_str(h.shape()) + " for a graph of " +
                        std::to_string(g.atom_count()) + " atoms");
  }
  Tensor self = add(h, scale_by(h, layer.eps));
  Tensor pre = add(self, neighbor_sum(h, g.adjacency()));
  return linear(relu(linear(pre, layer.w1, layer.b1)), layer.w2, layer.b2);
}

NodeEmbeddings encode_graph(const MolecularGraph& g, const EncoderParams& params) {
  Tensor h = linear(atom_features(g), params.w_in, params.b_in);
  for (const auto& layer : params.layers) h = message_step(h, g, layer);
  return NodeEmbeddings{h};
}

}  // namespace mora
