#pragma once

// Character-level decoder-only LM used as the frozen backbone.

#include <array>
#include <cstddef>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "mora/adapter.hpp"
#include "mora/ops.hpp"
#include "mora/tensor.hpp"

namespace mora {

using TokenSequence = std::vector<TokenId>;

// PAD, BOS, EOS, SEP, then printable ASCII 32..126.
class Vocabulary {
 public:
  static constexpr TokenId kPad = 0;
  static constexpr TokenId kBos = 1;
  static constexpr TokenId kEos = 2;
  static constexpr TokenId kSep = 3;
  static constexpr TokenId kFirstChar = 4;

  std::size_t size() const { return kFirstChar + 95; }
  bool contains(char c) const { return c >= 32 && c <= 126; }
  TokenId id(char c) const;
  // Special tokens detokenize to nothing.
  std::optional<char> symbol(TokenId id) const;

  TokenSequence tokenize(std::string_view text) const;
  std::string detokenize(std::span<const TokenId> tokens) const;
};

struct BackboneConfig {
  std::size_t layers = 4;
  std::size_t d_model = 64;
  std::size_t heads = 4;
  std::size_t d_ff = 256;
  std::size_t context = 256;
};

struct BackboneLayer {
  Tensor ln1_g, ln1_b;
  Tensor wq, wk, wv, wo;  // d × d
  Tensor ln2_g, ln2_b;
  Tensor w_up;    // d × d_ff
  Tensor w_down;  // d_ff × d
};

struct BackboneParams {
  BackboneConfig cfg;
  std::size_t vocab = 0;
  Tensor tok_emb;  // V × d
  Tensor pos_emb;  // context × d
  std::vector<BackboneLayer> layers;
  Tensor lnf_g, lnf_b;
  Tensor head;  // d × V

  // Random init; every tensor is a frozen leaf.
  static BackboneParams init(const BackboneConfig& cfg, std::size_t vocab, std::mt19937_64& rng);

  std::vector<std::pair<std::string, Tensor>> named() const;
  const Tensor& weight(std::size_t layer, LinearSite site) const;
};

// Logits T×V. A null adapter set is the plain frozen computation.
Tensor forward_lm(const BackboneParams& params, std::span<const TokenId> tokens,
                  const AdapterSet* adapters = nullptr);

// Appends argmax tokens (lowest id wins ties) until EOS or max_new.
TokenSequence greedy_decode(const BackboneParams& params, std::span<const TokenId> prompt,
                            const AdapterSet* adapters, std::size_t max_new);

// BOS instruction SEP answer EOS, and the shifted targets with everything up
// to and including SEP masked to PAD (the ignore index).
struct ExampleTokens {
  TokenSequence input;
  TokenSequence targets;
  std::size_t prompt_length = 0;  // BOS instruction SEP
};
ExampleTokens build_example_tokens(const Vocabulary& vocab, std::string_view instruction, std::string_view answer);
TokenSequence build_prompt(const Vocabulary& vocab, std::string_view instruction);

void validate(const BackboneConfig& cfg);

}  // namespace mora
