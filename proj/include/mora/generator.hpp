#pragma once

// Molecule-aware weight generator: node embeddings -> per-instance AdapterSet.

#include <cstddef>
#include <cstdint>
#include <map>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "mora/adapter.hpp"
#include "mora/encoder.hpp"
#include "mora/tensor.hpp"

namespace mora {

enum class QueryAssignment : std::uint8_t { shared_across_layers, per_layer };

QueryAssignment parse_assignment(std::string_view s);
std::string assignment_name(QueryAssignment a);

struct GeneratorConfig {
  std::size_t blocks = 2;
  std::size_t queries = 5;
  std::size_t rank = 4;
  double alpha = 4.0;
  std::vector<Component> targets = {Component::q, Component::k, Component::v, Component::o, Component::f};
  QueryAssignment assignment = QueryAssignment::shared_across_layers;
  std::size_t d_model = 32;
  std::size_t heads = 4;
  // Learned null key/value slot in cross-attention.
  bool null_slot = true;
  FfnMaps ffn_maps = FfnMaps::both;
  // Empty means every backbone layer.
  std::vector<std::size_t> layers;
};

// Shapes the generator must produce updates for.
struct TargetDims {
  std::size_t llm_layers = 0;
  std::size_t d_llm = 0;
  std::size_t d_ff = 0;
  std::size_t memory_dim = 0;  // encoder width
};

std::vector<std::size_t> adapted_layers(const GeneratorConfig& cfg, const TargetDims& dims);
// Number of queries the assignment policy needs.
std::size_t required_queries(const GeneratorConfig& cfg, const TargetDims& dims);
// Throws ConfigError on any inconsistency, including a query count that does
// not match the assignment policy.
void validate(const GeneratorConfig& cfg, const TargetDims& dims);

struct AttentionParams {
  Tensor wq, wk, wv, wo;
  Tensor null_k, null_v;  // 1 × d_model, cross-attention only
};

struct DecoderBlock {
  Tensor ln_self_g, ln_self_b;
  AttentionParams self_attn;
  Tensor ln_cross_g, ln_cross_b;
  AttentionParams cross_attn;
  Tensor ln_ffn_g, ln_ffn_b;
  Tensor ffn_w1, ffn_b1, ffn_w2, ffn_b2;
};

struct GeneratorParams {
  GeneratorConfig cfg;
  TargetDims dims;
  Tensor queries;  // k × d_model
  Tensor mem_ln_g, mem_ln_b;
  std::vector<DecoderBlock> blocks;
  Tensor out_ln_g, out_ln_b;
  // One zero-initialized head per adapted linear site: d_model × (d_in·r).
  std::map<LinearSite, Tensor> heads;
  Tensor proj;     // r × d_llm, shared
  Tensor proj_up;  // r × d_ff, FFN up map only

  static GeneratorParams init(const GeneratorConfig& cfg, const TargetDims& dims, std::mt19937_64& rng);
  std::vector<std::pair<std::string, Tensor>> named() const;
  double scale() const { return cfg.alpha / static_cast<double>(cfg.rank); }
  std::size_t site_d_in(LinearSite s) const;
  const Tensor& site_proj(LinearSite s) const;
};

// Q_out: k × d_model. Throws ContractError on an empty embedding set.
Tensor distill_queries(const NodeEmbeddings& h, const GeneratorParams& params);

// ΔA = reshape(q·W_FC, d_in × r) row-major, ΔB = proj, scale = α/r.
LowRankUpdate generate_update(const Tensor& q, const Tensor& head, const Tensor& proj, std::size_t d_in,
                              std::size_t rank, double scale);

AdapterSet generate_adapter_set(const NodeEmbeddings& h, const GeneratorParams& params, std::uint64_t provenance);

// Instance-independent low-rank adapter over the same target sites: ΔA
// zero-initialized, ΔB random, both trainable.
struct StaticAdapterParams {
  GeneratorConfig cfg;
  TargetDims dims;
  struct Site {
    std::size_t layer;
    Component component;
    LinearSite site;
    Tensor a, b;
  };
  std::vector<Site> sites;

  static StaticAdapterParams init(const GeneratorConfig& cfg, const TargetDims& dims, std::mt19937_64& rng);
  std::vector<std::pair<std::string, Tensor>> named() const;
  AdapterSet build() const;
};

}  // namespace mora
