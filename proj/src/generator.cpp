#include "mora/generator.hpp"

#include <algorithm>
#include <set>

#include "mora/errors.hpp"
#include "mora/nn.hpp"
#include "mora/ops.hpp"

namespace mora {

QueryAssignment parse_assignment(std::string_view s) {
  if (s == "shared_across_layers") return QueryAssignment::shared_across_layers;
  if (s == "per_layer") return QueryAssignment::per_layer;
  throw ConfigError("mawgen.assignment must be shared_across_layers or per_layer, got \"" + std::string(s) + "\"");
}

std::string assignment_name(QueryAssignment a) {
  return a == QueryAssignment::per_layer ? "per_layer" : "shared_across_layers";
}

std::vector<std::size_t> adapted_layers(const GeneratorConfig& cfg, const TargetDims& dims) {
  if (!cfg.layers.empty()) return cfg.layers;
  std::vector<std::size_t> all(dims.llm_layers);
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
  return all;
}

std::size_t required_queries(const GeneratorConfig& cfg, const TargetDims& dims) {
  const std::size_t per = cfg.targets.size();
  return cfg.assignment == QueryAssignment::per_layer ? per * adapted_layers(cfg, dims).size() : per;
}

void validate(const GeneratorConfig& cfg, const TargetDims& dims) {
  if (cfg.blocks == 0) throw ConfigError("mawgen.blocks must be at least 1");
  if (cfg.rank == 0) throw ConfigError("mawgen.rank must be at least 1");
  if (cfg.rank > dims.d_llm) {
    throw ConfigError("mawgen.rank " + std::to_string(cfg.rank) + " exceeds backbone width " +
                      std::to_string(dims.d_llm));
  }
  if (cfg.d_model == 0 || cfg.heads == 0 || cfg.d_model % cfg.heads != 0) {
    throw ConfigError("mawgen.d_model " + std::to_string(cfg.d_model) + " must be a positive multiple of mawgen.heads " +
                      std::to_string(cfg.heads));
  }
  if (cfg.targets.empty()) throw ConfigError("mawgen.targets is empty");
  std::set<std::size_t> seen;
  for (std::size_t l : cfg.layers) {
    if (l >= dims.llm_layers) {
      throw ConfigError("mawgen.layers names layer " + std::to_string(l) + " but the backbone has " +
                        std::to_string(dims.llm_layers));
    }
    if (!seen.insert(l).second) throw ConfigError("mawgen.layers lists layer " + std::to_string(l) + " twice");
  }
  const std::size_t need = required_queries(cfg, dims);
  if (cfg.queries != need) {
    throw ConfigError("mawgen.queries = " + std::to_string(cfg.queries) + " but assignment " +
                      assignment_name(cfg.assignment) + " with targets \"" + targets_string(cfg.targets) + "\" over " +
                      std::to_string(adapted_layers(cfg, dims).size()) + " layers needs " + std::to_string(need));
  }
}

namespace {

Tensor trainable(Tensor t) {
  t.set_requires_grad(true);
  return t;
}

Tensor ones(std::size_t d) { return trainable(Tensor::filled({1, d}, 1.0)); }
Tensor zeros_row(std::size_t d) { return trainable(Tensor::zeros({1, d})); }

AttentionParams init_attention(std::size_t d_kv_in, std::size_t d, bool null_slot, std::mt19937_64& rng) {
  AttentionParams a;
  a.wq = trainable(init_weight(d, d, rng));
  a.wk = trainable(init_weight(d_kv_in, d, rng));
  a.wv = trainable(init_weight(d_kv_in, d, rng));
  a.wo = trainable(init_weight(d, d, rng));
  if (null_slot) {
    a.null_k = trainable(Tensor::randn({1, d}, rng, 1.0));
    a.null_v = trainable(Tensor::zeros({1, d}));
  }
  return a;
}

std::vector<LinearSite> all_sites(const GeneratorConfig& cfg) {
  std::vector<LinearSite> out;
  for (Component c : cfg.targets)
    for (LinearSite s : sites_for(c, cfg.ffn_maps)) out.push_back(s);
  return out;
}

void add_attention(std::vector<std::pair<std::string, Tensor>>& out, const std::string& p, const AttentionParams& a) {
  out.emplace_back(p + "wq", a.wq);
  out.emplace_back(p + "wk", a.wk);
  out.emplace_back(p + "wv", a.wv);
  out.emplace_back(p + "wo", a.wo);
  if (a.null_k.defined()) {
    out.emplace_back(p + "null_k", a.null_k);
    out.emplace_back(p + "null_v", a.null_v);
  }
}

}  // namespace

GeneratorParams GeneratorParams::init(const GeneratorConfig& cfg, const TargetDims& dims, std::mt19937_64& rng) {
  validate(cfg, dims);
  const std::size_t d = cfg.d_model;
  GeneratorParams p;
  p.cfg = cfg;
  p.dims = dims;
  p.queries = trainable(Tensor::randn({cfg.queries, d}, rng, 1.0));
  p.mem_ln_g = ones(dims.memory_dim);
  p.mem_ln_b = zeros_row(dims.memory_dim);
  for (std::size_t b = 0; b < cfg.blocks; ++b) {
    DecoderBlock B;
    B.ln_self_g = ones(d);
    B.ln_self_b = zeros_row(d);
    B.self_attn = init_attention(d, d, false, rng);
    B.ln_cross_g = ones(d);
    B.ln_cross_b = zeros_row(d);
    B.cross_attn = init_attention(dims.memory_dim, d, cfg.null_slot, rng);
    B.ln_ffn_g = ones(d);
    B.ln_ffn_b = zeros_row(d);
    B.ffn_w1 = trainable(init_weight(d, 4 * d, rng));
    B.ffn_b1 = zeros_row(4 * d);
    B.ffn_w2 = trainable(init_weight(4 * d, d, rng));
    B.ffn_b2 = zeros_row(d);
    p.blocks.push_back(std::move(B));
  }
  p.out_ln_g = ones(d);
  p.out_ln_b = zeros_row(d);
  p.proj = trainable(init_weight(cfg.rank, dims.d_llm, rng));
  bool need_up = false;
  for (LinearSite s : all_sites(cfg)) {
    p.heads[s] = trainable(Tensor::zeros({d, p.site_d_in(s) * cfg.rank}));
    need_up = need_up || s == LinearSite::ffn_up;
  }
  if (need_up) p.proj_up = trainable(init_weight(cfg.rank, dims.d_ff, rng));
  return p;
}

std::size_t GeneratorParams::site_d_in(LinearSite s) const {
  return s == LinearSite::ffn_down ? dims.d_ff : dims.d_llm;
}

const Tensor& GeneratorParams::site_proj(LinearSite s) const {
  return s == LinearSite::ffn_up ? proj_up : proj;
}

std::vector<std::pair<std::string, Tensor>> GeneratorParams::named() const {
  std::vector<std::pair<std::string, Tensor>> out;
  out.emplace_back("mawgen.queries", queries);
  out.emplace_back("mawgen.mem_ln_g", mem_ln_g);
  out.emplace_back("mawgen.mem_ln_b", mem_ln_b);
  for (std::size_t b = 0; b < blocks.size(); ++b) {
    const auto& B = blocks[b];
    const std::string p = "mawgen.block" + std::to_string(b) + ".";
    out.emplace_back(p + "ln_self_g", B.ln_self_g);
    out.emplace_back(p + "ln_self_b", B.ln_self_b);
    add_attention(out, p + "self.", B.self_attn);
    out.emplace_back(p + "ln_cross_g", B.ln_cross_g);
    out.emplace_back(p + "ln_cross_b", B.ln_cross_b);
    add_attention(out, p + "cross.", B.cross_attn);
    out.emplace_back(p + "ln_ffn_g", B.ln_ffn_g);
    out.emplace_back(p + "ln_ffn_b", B.ln_ffn_b);
    out.emplace_back(p + "ffn_w1", B.ffn_w1);
    out.emplace_back(p + "ffn_b1", B.ffn_b1);
    out.emplace_back(p + "ffn_w2", B.ffn_w2);
    out.emplace_back(p + "ffn_b2", B.ffn_b2);
  }
  out.emplace_back("mawgen.out_ln_g", out_ln_g);
  out.emplace_back("mawgen.out_ln_b", out_ln_b);
  for (const auto& [site, head] : heads) out.emplace_back("mawgen.head." + site_name(site), head);
  out.emplace_back("mawgen.proj", proj);
  if (proj_up.defined()) out.emplace_back("mawgen.proj_up", proj_up);
  return out;
}

Tensor distill_queries(const NodeEmbeddings& h, const GeneratorParams& params) {
  if (!h.values.defined() || h.count() == 0) {
    throw ContractError("distill_queries needs at least one node embedding; text-only inputs skip the generator");
  }
  if (h.values.cols() != params.dims.memory_dim) {
    throw DimensionError("node embeddings of width " + std::to_string(h.values.cols()) + ", generator expects " +
                         std::to_string(params.dims.memory_dim));
  }
  const std::size_t heads = params.cfg.heads;
  Tensor mem = layer_norm(h.values, params.mem_ln_g, params.mem_ln_b);
  Tensor x = params.queries;
  for (const auto& B : params.blocks) {
    Tensor s = layer_norm(x, B.ln_self_g, B.ln_self_b);
    const auto& sa = B.self_attn;
    Tensor sa_out = multi_head_attention(matmul(s, sa.wq), matmul(s, sa.wk), matmul(s, sa.wv), heads, false);
    x = add(x, matmul(sa_out, sa.wo));

    Tensor c = layer_norm(x, B.ln_cross_g, B.ln_cross_b);
    const auto& ca = B.cross_attn;
    Tensor keys = matmul(mem, ca.wk);
    Tensor values = matmul(mem, ca.wv);
    if (ca.null_k.defined()) {
      keys = concat_rows({ca.null_k, keys});
      values = concat_rows({ca.null_v, values});
    }
    Tensor ca_out = multi_head_attention(matmul(c, ca.wq), keys, values, heads, false);
    x = add(x, matmul(ca_out, ca.wo));

    Tensor f = layer_norm(x, B.ln_ffn_g, B.ln_ffn_b);
    x = add(x, linear(gelu(linear(f, B.ffn_w1, B.ffn_b1)), B.ffn_w2, B.ffn_b2));
  }
  return layer_norm(x, params.out_ln_g, params.out_ln_b);
}

LowRankUpdate generate_update(const Tensor& q, const Tensor& head, const Tensor& proj, std::size_t d_in,
                              std::size_t rank, double scale) {
  if (q.rows() != 1 || q.cols() != head.rows() || head.cols() != d_in * rank || proj.rows() != rank) {
    throw DimensionError("generate_update: query " + shape_str(q.shape()) + ", head " + shape_str(head.shape()) +
                         ", proj " + shape_str(proj.shape()) + " for d_in " + std::to_string(d_in) + ", rank " +
                         std::to_string(rank));
  }
  return LowRankUpdate{reshape(matmul(q, head), {d_in, rank}), proj, scale};
}

AdapterSet generate_adapter_set(const NodeEmbeddings& h, const GeneratorParams& params, std::uint64_t provenance) {
  const Tensor q_out = distill_queries(h, params);
  const auto& cfg = params.cfg;
  const auto layers = adapted_layers(cfg, params.dims);
  const std::size_t per = cfg.targets.size();
  const bool shared = cfg.assignment == QueryAssignment::shared_across_layers;

  // Shared mode reuses one update per component at every layer.
  std::vector<ComponentUpdate> shared_updates;
  auto make = [&](std::size_t row, Component c) {
    ComponentUpdate cu;
    Tensor q = slice_rows(q_out, row, 1);
    for (LinearSite s : sites_for(c, cfg.ffn_maps)) {
      cu.maps.emplace_back(s, generate_update(q, params.heads.at(s), params.site_proj(s), params.site_d_in(s),
                                              cfg.rank, params.scale()));
    }
    return cu;
  };
  if (shared) {
    for (std::size_t ci = 0; ci < per; ++ci) shared_updates.push_back(make(ci, cfg.targets[ci]));
  }

  std::map<AdapterKey, ComponentUpdate> entries;
  for (std::size_t li = 0; li < layers.size(); ++li) {
    for (std::size_t ci = 0; ci < per; ++ci) {
      entries[AdapterKey{layers[li], cfg.targets[ci]}] =
          shared ? shared_updates[ci] : make(li * per + ci, cfg.targets[ci]);
    }
  }
  return AdapterSet(std::move(entries), provenance);
}

StaticAdapterParams StaticAdapterParams::init(const GeneratorConfig& cfg, const TargetDims& dims,
                                              std::mt19937_64& rng) {
  if (cfg.rank == 0 || cfg.rank > dims.d_llm) throw ConfigError("static adapter rank out of range");
  StaticAdapterParams p;
  p.cfg = cfg;
  p.dims = dims;
  for (std::size_t layer : adapted_layers(cfg, dims)) {
    for (Component c : cfg.targets) {
      for (LinearSite s : sites_for(c, cfg.ffn_maps)) {
        const std::size_t d_in = s == LinearSite::ffn_down ? dims.d_ff : dims.d_llm;
        const std::size_t d_out = s == LinearSite::ffn_up ? dims.d_ff : dims.d_llm;
        p.sites.push_back(Site{layer, c, s, trainable(Tensor::zeros({d_in, cfg.rank})),
                               trainable(init_weight(cfg.rank, d_out, rng))});
      }
    }
  }
  return p;
}

std::vector<std::pair<std::string, Tensor>> StaticAdapterParams::named() const {
  std::vector<std::pair<std::string, Tensor>> out;
  for (const auto& s : sites) {
    const std::string p = "static.layer" + std::to_string(s.layer) + "." + site_name(s.site) + ".";
    out.emplace_back(p + "a", s.a);
    out.emplace_back(p + "b", s.b);
  }
  return out;
}

AdapterSet StaticAdapterParams::build() const {
  std::map<AdapterKey, ComponentUpdate> entries;
  const double scale = cfg.alpha / static_cast<double>(cfg.rank);
  for (const auto& s : sites) entries[AdapterKey{s.layer, s.component}].maps.emplace_back(s.site, LowRankUpdate{s.a, s.b, scale});
  return AdapterSet(std::move(entries), 0);
}

}  // namespace mora
