#include "mora/backbone.hpp"

#include <cstdio>
#include <cmath>
#include <numeric>

#include "mora/errors.hpp"
#include "mora/injection.hpp"
#include "mora/nn.hpp"

namespace mora {

TokenId Vocabulary::id(char c) const {
  if (!contains(c)) {
    const auto u = static_cast<unsigned char>(c);
    std::string shown = (u >= 32 && u < 127) ? std::string(1, c) : "";
    char hex[8];
    std::snprintf(hex, sizeof hex, "0x%02x", u);
    throw TokenizationError("character " + (shown.empty() ? std::string(hex) : "'" + shown + "' (" + hex + ")") +
                            " is not in the vocabulary");
  }
  return kFirstChar + static_cast<TokenId>(c - 32);
}

std::optional<char> Vocabulary::symbol(TokenId id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= size()) {
    throw TokenizationError("token id " + std::to_string(id) + " outside vocabulary of " + std::to_string(size()));
  }
  if (id < kFirstChar) return std::nullopt;
  return static_cast<char>(32 + (id - kFirstChar));
}

TokenSequence Vocabulary::tokenize(std::string_view text) const {
  TokenSequence out;
  out.reserve(text.size());
  for (char c : text) out.push_back(id(c));
  return out;
}

std::string Vocabulary::detokenize(std::span<const TokenId> tokens) const {
  std::string out;
  for (TokenId t : tokens)
    if (auto c = symbol(t)) out.push_back(*c);
  return out;
}

void validate(const BackboneConfig& cfg) {
  if (cfg.layers == 0 || cfg.d_model == 0 || cfg.d_ff == 0 || cfg.context == 0 || cfg.heads == 0) {
    throw ConfigError("backbone dimensions must be positive");
  }
  if (cfg.d_model % cfg.heads != 0) {
    throw ConfigError("backbone.d_model " + std::to_string(cfg.d_model) + " not divisible by backbone.heads " +
                      std::to_string(cfg.heads));
  }
}

namespace {

// Output head gain. Large enough that a small adapter can drive the
// answer-token loss close to zero.
constexpr double kHeadGain = 2.0;

Tensor frozen(Tensor t) {
  t.set_requires_grad(false);
  return t;
}

}  // namespace

BackboneParams BackboneParams::init(const BackboneConfig& cfg, std::size_t vocab, std::mt19937_64& rng) {
  validate(cfg);
  BackboneParams p;
  p.cfg = cfg;
  p.vocab = vocab;
  const std::size_t d = cfg.d_model;
  p.tok_emb = frozen(Tensor::randn({vocab, d}, rng, 1.0));
  p.pos_emb = frozen(Tensor::randn({cfg.context, d}, rng, 0.1));
  for (std::size_t l = 0; l < cfg.layers; ++l) {
    BackboneLayer L;
    L.ln1_g = Tensor::filled({1, d}, 1.0);
    L.ln1_b = Tensor::zeros({1, d});
    L.wq = frozen(init_weight(d, d, rng));
    L.wk = frozen(init_weight(d, d, rng));
    L.wv = frozen(init_weight(d, d, rng));
    L.wo = frozen(init_weight(d, d, rng));
    L.ln2_g = Tensor::filled({1, d}, 1.0);
    L.ln2_b = Tensor::zeros({1, d});
    L.w_up = frozen(init_weight(d, cfg.d_ff, rng));
    L.w_down = frozen(init_weight(cfg.d_ff, d, rng));
    p.layers.push_back(std::move(L));
  }
  p.lnf_g = Tensor::filled({1, d}, 1.0);
  p.lnf_b = Tensor::zeros({1, d});
  p.head = frozen(init_weight(d, vocab, rng, kHeadGain));
  return p;
}

std::vector<std::pair<std::string, Tensor>> BackboneParams::named() const {
  std::vector<std::pair<std::string, Tensor>> out;
  out.emplace_back("backbone.tok_emb", tok_emb);
  out.emplace_back("backbone.pos_emb", pos_emb);
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const auto& L = layers[l];
    const std::string p = "backbone.layer" + std::to_string(l) + ".";
    out.emplace_back(p + "ln1_g", L.ln1_g);
    out.emplace_back(p + "ln1_b", L.ln1_b);
    out.emplace_back(p + "wq", L.wq);
    out.emplace_back(p + "wk", L.wk);
    out.emplace_back(p + "wv", L.wv);
    out.emplace_back(p + "wo", L.wo);
    out.emplace_back(p + "ln2_g", L.ln2_g);
    out.emplace_back(p + "ln2_b", L.ln2_b);
    out.emplace_back(p + "w_up", L.w_up);
    out.emplace_back(p + "w_down", L.w_down);
  }
  out.emplace_back("backbone.lnf_g", lnf_g);
  out.emplace_back("backbone.lnf_b", lnf_b);
  out.emplace_back("backbone.head", head);
  return out;
}

const Tensor& BackboneParams::weight(std::size_t layer, LinearSite site) const {
  if (layer >= layers.size()) {
    throw TopologyError("layer " + std::to_string(layer) + " out of range for a " + std::to_string(layers.size()) +
                        "-layer backbone");
  }
  const auto& L = layers[layer];
  switch (site) {
    case LinearSite::q: return L.wq;
    case LinearSite::k: return L.wk;
    case LinearSite::v: return L.wv;
    case LinearSite::o: return L.wo;
    case LinearSite::ffn_up: return L.w_up;
    case LinearSite::ffn_down: return L.w_down;
  }
  throw TopologyError("unknown linear site");
}

Tensor forward_lm(const BackboneParams& params, std::span<const TokenId> tokens, const AdapterSet* adapters) {
  const std::size_t T = tokens.size();
  if (T == 0) throw ContractError("forward_lm needs at least one token");
  if (T > params.cfg.context) {
    throw ContextLengthError("sequence of " + std::to_string(T) + " tokens exceeds context " +
                             std::to_string(params.cfg.context));
  }
  for (TokenId t : tokens) {
    if (t < 0 || static_cast<std::size_t>(t) >= params.vocab) {
      throw ContractError("token id " + std::to_string(t) + " outside vocabulary of " + std::to_string(params.vocab));
    }
  }
  std::vector<TokenId> positions(T);
  std::iota(positions.begin(), positions.end(), 0);

  auto site = [&](std::size_t l, LinearSite s) {
    return EffectiveLinear{&params.weight(l, s), adapters ? adapters->find(l, s) : nullptr};
  };

  Tensor x = add(embedding(params.tok_emb, tokens), embedding(params.pos_emb, positions));
  for (std::size_t l = 0; l < params.layers.size(); ++l) {
    const auto& L = params.layers[l];
    Tensor h = layer_norm(x, L.ln1_g, L.ln1_b);
    Tensor q = effective_apply(h, site(l, LinearSite::q));
    Tensor k = effective_apply(h, site(l, LinearSite::k));
    Tensor v = effective_apply(h, site(l, LinearSite::v));
    Tensor a = multi_head_attention(q, k, v, params.cfg.heads, true);
    x = add(x, effective_apply(a, site(l, LinearSite::o)));
    Tensor h2 = layer_norm(x, L.ln2_g, L.ln2_b);
    Tensor u = gelu(effective_apply(h2, site(l, LinearSite::ffn_up)));
    x = add(x, effective_apply(u, site(l, LinearSite::ffn_down)));
  }
  return matmul(layer_norm(x, params.lnf_g, params.lnf_b), params.head);
}

TokenSequence greedy_decode(const BackboneParams& params, std::span<const TokenId> prompt,
                            const AdapterSet* adapters, std::size_t max_new) {
  if (prompt.size() + max_new > params.cfg.context) {
    throw ContextLengthError("prompt of " + std::to_string(prompt.size()) + " tokens plus " +
                             std::to_string(max_new) + " new exceeds context " + std::to_string(params.cfg.context));
  }
  NoGradGuard no_grad;
  TokenSequence seq(prompt.begin(), prompt.end());
  for (std::size_t step = 0; step < max_new; ++step) {
    Tensor logits = forward_lm(params, seq, adapters);
    const std::size_t last = logits.rows() - 1;
    TokenId best = 0;
    double best_v = logits.at(last, 0);
    for (std::size_t c = 1; c < logits.cols(); ++c) {
      const double v = logits.at(last, c);
      if (v > best_v) {
        best_v = v;
        best = static_cast<TokenId>(c);
      }
    }
    seq.push_back(best);
    if (best == Vocabulary::kEos) break;
  }
  return seq;
}

TokenSequence build_prompt(const Vocabulary& vocab, std::string_view instruction) {
  TokenSequence s{Vocabulary::kBos};
  for (TokenId t : vocab.tokenize(instruction)) s.push_back(t);
  s.push_back(Vocabulary::kSep);
  return s;
}

ExampleTokens build_example_tokens(const Vocabulary& vocab, std::string_view instruction, std::string_view answer) {
  TokenSequence full = build_prompt(vocab, instruction);
  const std::size_t prompt_len = full.size();
  for (TokenId t : vocab.tokenize(answer)) full.push_back(t);
  full.push_back(Vocabulary::kEos);

  ExampleTokens ex;
  ex.prompt_length = prompt_len;
  ex.input.assign(full.begin(), full.end() - 1);
  ex.targets.resize(ex.input.size(), Vocabulary::kPad);
  for (std::size_t t = prompt_len - 1; t < ex.input.size(); ++t) ex.targets[t] = full[t + 1];
  return ex;
}

}  // namespace mora
