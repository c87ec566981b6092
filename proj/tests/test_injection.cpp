#include <doctest.h>

#include <cstring>

#include "mora/backbone.hpp"
#include "mora/errors.hpp"
#include "mora/injection.hpp"
#include "support.hpp"

using namespace mora;
using mora::testing::max_abs_diff;

namespace {

const BackboneConfig kCfg{2, 16, 2, 32, 32};

BackboneParams make_backbone(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  return BackboneParams::init(kCfg, Vocabulary{}.size(), rng);
}

enum class Fill { zero, random };

AdapterSet random_adapters(const BackboneParams& b, const std::vector<Component>& targets, Fill fill,
                           std::mt19937_64& rng, std::size_t rank = 3) {
  std::map<AdapterKey, ComponentUpdate> entries;
  for (std::size_t l = 0; l < b.layers.size(); ++l)
    for (Component c : targets) {
      ComponentUpdate cu;
      for (LinearSite s : sites_for(c, FfnMaps::both)) {
        const Tensor& w = b.weight(l, s);
        LowRankUpdate u;
        u.delta_a = fill == Fill::zero ? Tensor::zeros({w.rows(), rank}) : Tensor::randn({w.rows(), rank}, rng, 0.3);
        u.delta_b = Tensor::randn({rank, w.cols()}, rng, 0.3);
        u.scale = 0.5 + static_cast<double>(rng() % 4);
        cu.maps.emplace_back(s, std::move(u));
      }
      entries.emplace(AdapterKey{l, c}, std::move(cu));
    }
  return AdapterSet(std::move(entries), rng());
}

// Backbone whose weights are W + materialize(update), built with plain loops.
BackboneParams materialized(std::uint64_t seed, const AdapterSet& set) {
  BackboneParams dense = make_backbone(seed);
  for (std::size_t l = 0; l < dense.layers.size(); ++l)
    for (LinearSite s : {LinearSite::q, LinearSite::k, LinearSite::v, LinearSite::o, LinearSite::ffn_up,
                         LinearSite::ffn_down}) {
      const LowRankUpdate* u = set.find(l, s);
      if (u == nullptr) continue;
      auto w = const_cast<Tensor&>(dense.weight(l, s)).mutable_data();
      const std::size_t n = u->d_out(), r = u->rank();
      for (std::size_t i = 0; i < u->d_in(); ++i)
        for (std::size_t j = 0; j < n; ++j) {
          double acc = 0;
          for (std::size_t k = 0; k < r; ++k) acc += u->delta_a.at(i, k) * u->delta_b.at(k, j);
          w[i * n + j] += u->scale * acc;
        }
    }
  return dense;
}

std::uint64_t checksum(const BackboneParams& b) {
  std::uint64_t h = 1469598103934665603ull;
  for (const auto& [name, t] : b.named())
    for (double x : t.data()) {
      std::uint64_t bits;
      std::memcpy(&bits, &x, sizeof bits);
      h = (h ^ bits) * 1099511628211ull;
    }
  return h;
}

const TokenSequence kTokens = {1, 40, 55, 70, 3, 20, 21, 2};

}  // namespace

TEST_CASE("no adapters and zero updates leave logits bit-identical") {
  const BackboneParams b = make_backbone(1);
  std::mt19937_64 rng(2);
  const Tensor plain = forward_lm(b, kTokens);
  const AdapterSet zero = random_adapters(b, parse_targets("qkvof"), Fill::zero, rng);
  CHECK(max_abs_diff(forward_lm(b, kTokens, &zero), plain) == 0.0);
  CHECK(max_abs_diff(overlay(b, AdapterSet{}).forward(kTokens), plain) == 0.0);
}

TEST_CASE("factored update matches the materialized dense weight") {
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    CAPTURE(seed);
    const BackboneParams b = make_backbone(100 + seed);
    std::mt19937_64 rng(seed);
    const AdapterSet set = random_adapters(b, parse_targets("qkvof"), Fill::random, rng);
    const Tensor factored = overlay(b, set).forward(kTokens);
    const Tensor dense = forward_lm(materialized(100 + seed, set), kTokens);
    CHECK(max_abs_diff(factored, dense) < 1e-10);
  }
}

TEST_CASE("effective_apply matches x(W + s A B)") {
  std::mt19937_64 rng(3);
  const Tensor x = Tensor::randn({4, 6}, rng, 1.0), w = Tensor::randn({6, 5}, rng, 1.0);
  LowRankUpdate u{Tensor::randn({6, 2}, rng, 1.0), Tensor::randn({2, 5}, rng, 1.0), 0.75};
  const Tensor got = effective_apply(x, EffectiveLinear{&w, &u});
  const Tensor want = matmul(x, add(w, u.materialize()));
  CHECK(max_abs_diff(got, want) < 1e-12);
  LowRankUpdate bad{Tensor::zeros({5, 2}), Tensor::zeros({2, 5}), 1.0};
  CHECK_THROWS_AS(effective_apply(x, EffectiveLinear{&w, &bad}), ContractError);
}

TEST_CASE("overlay never mutates the backbone") {
  const BackboneParams b = make_backbone(4);
  const std::uint64_t before = checksum(b);
  std::mt19937_64 rng(5);
  for (int i = 0; i < 5; ++i) {
    const AdaptedBackbone view = overlay(b, random_adapters(b, parse_targets("qkvof"), Fill::random, rng));
    backward(sum(view.forward(kTokens)));
  }
  CHECK(checksum(b) == before);
}

TEST_CASE("interleaved overlays do not interfere") {
  const BackboneParams b = make_backbone(6);
  std::mt19937_64 rng(7);
  const AdaptedBackbone first = overlay(b, random_adapters(b, parse_targets("qv"), Fill::random, rng));
  const AdaptedBackbone second = overlay(b, random_adapters(b, parse_targets("kof"), Fill::random, rng));
  const Tensor a1 = first.forward(kTokens);
  const Tensor b1 = second.forward(kTokens);
  const Tensor a2 = first.forward(kTokens);
  const Tensor plain = forward_lm(b, kTokens);
  const Tensor b2 = second.forward(kTokens);
  CHECK(max_abs_diff(a1, a2) == 0.0);
  CHECK(max_abs_diff(b1, b2) == 0.0);
  CHECK(max_abs_diff(plain, forward_lm(b, kTokens)) == 0.0);
  CHECK(max_abs_diff(a1, b1) > 0.0);
}

TEST_CASE("a qv adapter leaves k, o and FFN maps at their base weights") {
  const BackboneParams b = make_backbone(8);
  std::mt19937_64 rng(9);
  const AdapterSet set = random_adapters(b, parse_targets("qv"), Fill::random, rng);
  for (std::size_t l = 0; l < b.layers.size(); ++l) {
    CHECK(set.find(l, LinearSite::q) != nullptr);
    CHECK(set.find(l, LinearSite::v) != nullptr);
    for (LinearSite s : {LinearSite::k, LinearSite::o, LinearSite::ffn_up, LinearSite::ffn_down})
      CHECK(set.find(l, s) == nullptr);
  }
  const BackboneParams dense = materialized(8, set);
  for (std::size_t l = 0; l < b.layers.size(); ++l)
    for (LinearSite s : {LinearSite::k, LinearSite::o, LinearSite::ffn_up, LinearSite::ffn_down})
      CHECK(max_abs_diff(dense.weight(l, s), b.weight(l, s)) == 0.0);
  CHECK(max_abs_diff(overlay(b, set).forward(kTokens), forward_lm(dense, kTokens)) < 1e-10);
}

TEST_CASE("overlay rejects adapters that do not fit the backbone") {
  const BackboneParams b = make_backbone(10);
  std::mt19937_64 rng(11);
  std::map<AdapterKey, ComponentUpdate> past_end;
  past_end[{2, Component::q}].maps.emplace_back(
      LinearSite::q, LowRankUpdate{Tensor::zeros({16, 2}), Tensor::zeros({2, 16}), 1.0});
  CHECK_THROWS_AS(overlay(b, AdapterSet(past_end, 0)), TopologyError);

  std::map<AdapterKey, ComponentUpdate> wrong_shape;
  wrong_shape[{0, Component::f}].maps.emplace_back(
      LinearSite::ffn_up, LowRankUpdate{Tensor::zeros({16, 2}), Tensor::zeros({2, 16}), 1.0});
  CHECK_THROWS_AS(overlay(b, AdapterSet(wrong_shape, 0)), TopologyError);
}
