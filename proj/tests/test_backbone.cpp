#include <doctest.h>

#include "mora/backbone.hpp"
#include "mora/errors.hpp"
#include "support.hpp"

using namespace mora;

namespace {

BackboneParams tiny(std::uint64_t seed, std::size_t context = 32) {
  std::mt19937_64 rng(seed);
  return BackboneParams::init(BackboneConfig{2, 16, 2, 32, context}, Vocabulary{}.size(), rng);
}

}  // namespace

TEST_CASE("vocabulary layout") {
  const Vocabulary v;
  CHECK(v.size() == 99);
  CHECK(v.id(' ') == 4);
  CHECK(v.id('~') == 98);
  CHECK_FALSE(v.symbol(Vocabulary::kEos).has_value());
  CHECK(v.symbol(4 + ('A' - 32)) == 'A');
}

TEST_CASE("tokenize then detokenize is the identity on printable text") {
  const Vocabulary v;
  std::mt19937_64 rng(13);
  std::string s(1000, ' ');
  for (char& c : s) c = static_cast<char>(32 + rng() % 95);
  CHECK(v.detokenize(v.tokenize(s)) == s);
  CHECK(v.detokenize(v.tokenize("How many bonds? C1CC1")) == "How many bonds? C1CC1");
}

TEST_CASE("unknown characters raise a tokenization error naming the byte") {
  const Vocabulary v;
  CHECK_THROWS_AS(v.tokenize("tab\there"), TokenizationError);
  try {
    v.tokenize("caf\xc3\xa9");
    FAIL("no error");
  } catch (const TokenizationError& e) {
    CHECK(std::string(e.what()).find("0xc3") != std::string::npos);
  }
  CHECK_THROWS_AS(v.symbol(99), TokenizationError);
}

TEST_CASE("single-token forward yields one row of logits") {
  const BackboneParams p = tiny(1);
  const TokenSequence t = {Vocabulary::kBos};
  const Tensor logits = forward_lm(p, t);
  CHECK(logits.rows() == 1);
  CHECK(logits.cols() == 99);
}

TEST_CASE("logits at position t ignore tokens after t") {
  const BackboneParams p = tiny(2);
  std::mt19937_64 rng(3);
  TokenSequence base(8);
  for (auto& t : base) t = static_cast<TokenId>(rng() % 99);
  const Tensor ref = forward_lm(p, base);
  for (std::size_t t = 0; t < base.size(); ++t) {
    TokenSequence changed = base;
    for (std::size_t u = t + 1; u < changed.size(); ++u) changed[u] = static_cast<TokenId>((changed[u] + 17) % 99);
    const Tensor out = forward_lm(p, changed);
    for (std::size_t r = 0; r <= t; ++r)
      for (std::size_t c = 0; c < 99; ++c) CHECK(out.at(r, c) == ref.at(r, c));
  }
}

TEST_CASE("forward rejects empty, overlong and out-of-range input") {
  const BackboneParams p = tiny(4, 8);
  CHECK_THROWS_AS(forward_lm(p, TokenSequence{}), ContractError);
  CHECK_THROWS_AS(forward_lm(p, TokenSequence(9, 5)), ContextLengthError);
  CHECK_NOTHROW(forward_lm(p, TokenSequence(8, 5)));
  CHECK_THROWS_AS(forward_lm(p, TokenSequence{1, 99}), ContractError);
  CHECK_THROWS_AS(greedy_decode(p, TokenSequence(6, 5), nullptr, 3), ContextLengthError);
}

TEST_CASE("greedy decode with max_new zero returns the prompt") {
  const BackboneParams p = tiny(5);
  const TokenSequence prompt = {1, 40, 41, 3};
  CHECK(greedy_decode(p, prompt, nullptr, 0) == prompt);
}

TEST_CASE("greedy decode stops at EOS") {
  BackboneParams p = tiny(6);
  // Final norm output becomes all ones, so logits equal the head column sums.
  for (double& x : p.lnf_g.mutable_data()) x = 0.0;
  for (double& x : p.lnf_b.mutable_data()) x = 1.0;
  auto head = p.head.mutable_data();
  for (double& x : head) x = 0.0;
  for (std::size_t r = 0; r < p.cfg.d_model; ++r) head[r * 99 + Vocabulary::kEos] = 1.0;
  const TokenSequence prompt = {1, 40, 3};
  const TokenSequence out = greedy_decode(p, prompt, nullptr, 10);
  CHECK(out.size() == prompt.size() + 1);
  CHECK(out.back() == Vocabulary::kEos);
}

TEST_CASE("greedy decode breaks ties toward the lowest id") {
  BackboneParams p = tiny(7);
  for (double& x : p.head.mutable_data()) x = 0.0;
  const TokenSequence out = greedy_decode(p, TokenSequence{1, 3}, nullptr, 3);
  CHECK(out == TokenSequence{1, 3, 0, 0, 0});
}

TEST_CASE("forward and decode are deterministic for a fixed seed") {
  const BackboneParams a = tiny(8), b = tiny(8);
  const TokenSequence t = {1, 50, 60, 70, 3};
  CHECK(mora::testing::max_abs_diff(forward_lm(a, t), forward_lm(b, t)) == 0.0);
  CHECK(greedy_decode(a, t, nullptr, 6) == greedy_decode(b, t, nullptr, 6));
}

TEST_CASE("example tokens shift targets and mask the prompt") {
  const Vocabulary v;
  const ExampleTokens ex = build_example_tokens(v, "ab", "7");
  // BOS a b SEP 7 EOS
  CHECK(ex.prompt_length == 4);
  CHECK(ex.input == TokenSequence{1, v.id('a'), v.id('b'), 3, v.id('7')});
  CHECK(ex.targets == TokenSequence{0, 0, 0, v.id('7'), 2});
  CHECK(build_prompt(v, "ab") == TokenSequence{1, v.id('a'), v.id('b'), 3});
}

TEST_CASE("backbone config validation") {
  CHECK_THROWS_AS(validate(BackboneConfig{2, 10, 3, 8, 8}), ConfigError);
  CHECK_THROWS_AS(validate(BackboneConfig{0, 8, 2, 8, 8}), ConfigError);
  CHECK_NOTHROW(validate(BackboneConfig{}));
}

TEST_CASE("backbone parameters are frozen leaves") {
  const BackboneParams p = tiny(9);
  for (const auto& [name, t] : p.named()) {
    CAPTURE(name);
    CHECK_FALSE(t.requires_grad());
  }
}
