#include <doctest.h>

#include <numeric>

#include "mora/errors.hpp"
#include "mora/ops.hpp"
#include "support.hpp"

using namespace mora;
using mora::testing::gradient_rel_error;
using mora::testing::leaf;

namespace {

struct Case {
  const char* name;
  std::function<void(std::mt19937_64&)> run;
};

constexpr double kTol = 1e-6;

void check_grad(const std::function<Tensor()>& f, std::initializer_list<Tensor> leaves) {
  for (const Tensor& l : leaves) CHECK(gradient_rel_error(f, l) < kTol);
}

}  // namespace

TEST_CASE("matmul agrees with the triple-loop oracle") {
  std::mt19937_64 rng(11);
  for (int s = 0; s < 20; ++s) {
    const std::size_t m = 1 + rng() % 7, k = 1 + rng() % 7, n = 1 + rng() % 7;
    Tensor a = Tensor::randn({m, k}, rng, 1.0), b = Tensor::randn({k, n}, rng, 1.0);
    const auto ref = mora::testing::naive_matmul(mora::testing::to_vec(a), mora::testing::to_vec(b), m, k, n);
    CHECK(mora::testing::max_abs_diff(matmul(a, b).data(), ref) < 1e-12);
  }
}

TEST_CASE("matmul is exactly row-permutation equivariant") {
  std::mt19937_64 rng(3);
  Tensor a = Tensor::randn({9, 13}, rng, 1.0), b = Tensor::randn({13, 5}, rng, 1.0);
  std::vector<std::size_t> perm(9);
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), rng);
  std::vector<double> pa(a.size());
  for (std::size_t i = 0; i < 9; ++i)
    for (std::size_t j = 0; j < 13; ++j) pa[perm[i] * 13 + j] = a.at(i, j);
  Tensor c = matmul(a, b), pc = matmul(Tensor::from_data({9, 13}, pa), b);
  for (std::size_t i = 0; i < 9; ++i)
    for (std::size_t j = 0; j < 5; ++j) CHECK(pc.at(perm[i], j) == c.at(i, j));
}

TEST_CASE("op gradients match central differences over 20 seeds") {
  std::vector<Case> cases = {
      {"matmul",
       [](std::mt19937_64& rng) {
         Tensor a = leaf(Tensor::randn({3, 4}, rng, 1.0)), b = leaf(Tensor::randn({4, 5}, rng, 1.0));
         std::mt19937_64 r2(rng());
         Tensor dir = Tensor::randn({3, 5}, r2, 1.0);
         check_grad([&] { return sum(mul(matmul(a, b), dir)); }, {a, b});
       }},
      {"add sub mul",
       [](std::mt19937_64& rng) {
         Tensor a = leaf(Tensor::randn({3, 4}, rng, 1.0)), b = leaf(Tensor::randn({3, 4}, rng, 1.0));
         Tensor dir = Tensor::randn({3, 4}, rng, 1.0);
         check_grad([&] { return sum(mul(mul(sub(add(a, b), mul(a, a)), b), dir)); }, {a, b});
       }},
      {"scale scale_by add_row",
       [](std::mt19937_64& rng) {
         Tensor a = leaf(Tensor::randn({3, 4}, rng, 1.0)), s = leaf(Tensor::randn({1, 1}, rng, 1.0));
         Tensor row = leaf(Tensor::randn({1, 4}, rng, 1.0));
         Tensor dir = Tensor::randn({3, 4}, rng, 1.0);
         check_grad([&] { return sum(mul(add_row(scale_by(scale(a, 0.7), s), row), dir)); }, {a, s, row});
       }},
      {"transpose reshape",
       [](std::mt19937_64& rng) {
         Tensor a = leaf(Tensor::randn({3, 4}, rng, 1.0));
         Tensor dir = Tensor::randn({2, 6}, rng, 1.0);
         check_grad([&] { return sum(mul(reshape(transpose(a), {2, 6}), dir)); }, {a});
       }},
      {"layer_norm",
       [](std::mt19937_64& rng) {
         Tensor x = leaf(Tensor::randn({3, 5}, rng, 1.0));
         Tensor g = leaf(Tensor::randn({1, 5}, rng, 1.0)), b = leaf(Tensor::randn({1, 5}, rng, 1.0));
         Tensor dir = Tensor::randn({3, 5}, rng, 1.0);
         check_grad([&] { return sum(mul(layer_norm(x, g, b), dir)); }, {x, g, b});
       }},
      {"gelu relu",
       [](std::mt19937_64& rng) {
         Tensor x = leaf(Tensor::randn({4, 4}, rng, 1.0));
         Tensor dir = Tensor::randn({4, 4}, rng, 1.0);
         check_grad([&] { return sum(mul(add(gelu(x), relu(x)), dir)); }, {x});
       }},
      {"embedding",
       [](std::mt19937_64& rng) {
         Tensor table = leaf(Tensor::randn({6, 3}, rng, 1.0));
         const std::vector<TokenId> ids = {0, 5, 2, 5, 1};
         Tensor dir = Tensor::randn({5, 3}, rng, 1.0);
         check_grad([&] { return sum(mul(embedding(table, ids), dir)); }, {table});
       }},
      {"concat slice",
       [](std::mt19937_64& rng) {
         Tensor a = leaf(Tensor::randn({3, 2}, rng, 1.0)), b = leaf(Tensor::randn({3, 4}, rng, 1.0));
         Tensor c = leaf(Tensor::randn({2, 6}, rng, 1.0));
         Tensor dir = Tensor::randn({3, 3}, rng, 1.0);
         check_grad(
             [&] {
               Tensor cat = concat_rows({concat_cols({a, b}), c});
               return sum(mul(slice_rows(slice_cols(cat, 2, 3), 1, 3), dir));
             },
             {a, b, c});
       }},
      {"softmax",
       [](std::mt19937_64& rng) {
         Tensor x = leaf(Tensor::randn({3, 5}, rng, 1.0));
         Tensor dir = Tensor::randn({3, 5}, rng, 1.0);
         check_grad([&] { return sum(mul(add(softmax_rows(x), causal_softmax_rows(x)), dir)); }, {x});
       }},
      {"cross_entropy",
       [](std::mt19937_64& rng) {
         Tensor x = leaf(Tensor::randn({4, 6}, rng, 2.0));
         const std::vector<TokenId> t = {1, 0, 5, 3};
         check_grad([&] { return cross_entropy(x, t, 0); }, {x});
       }},
      {"mean neighbor_sum",
       [](std::mt19937_64& rng) {
         Tensor h = leaf(Tensor::randn({4, 3}, rng, 1.0));
         const std::vector<std::vector<std::size_t>> nb = {{1, 2}, {0}, {0, 3}, {2}};
         Tensor dir = Tensor::randn({4, 3}, rng, 1.0);
         check_grad([&] { return mean(mul(neighbor_sum(h, nb), dir)); }, {h});
       }},
  };
  for (const auto& c : cases) {
    CAPTURE(c.name);
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
      std::mt19937_64 rng(1000 + seed);
      c.run(rng);
    }
  }
}

TEST_CASE("layer_norm rows have zero mean and unit variance with unit gain") {
  std::mt19937_64 rng(5);
  Tensor x = Tensor::randn({4, 16}, rng, 3.0);
  Tensor y = layer_norm(x, Tensor::filled({1, 16}, 1.0), Tensor::zeros({1, 16}), 0.0);
  for (std::size_t i = 0; i < 4; ++i) {
    double mu = 0, var = 0;
    for (std::size_t j = 0; j < 16; ++j) mu += y.at(i, j);
    mu /= 16;
    for (std::size_t j = 0; j < 16; ++j) var += (y.at(i, j) - mu) * (y.at(i, j) - mu);
    CHECK(std::abs(mu) < 1e-12);
    CHECK(std::abs(var / 16 - 1.0) < 1e-10);
  }
}

TEST_CASE("causal softmax zeroes the future and normalizes the past") {
  Tensor x = Tensor::from_data({3, 3}, {1, 2, 3, 4, 5, 6, 7, 8, 9});
  Tensor p = causal_softmax_rows(x);
  CHECK(p.at(0, 0) == 1.0);
  CHECK(p.at(0, 1) == 0.0);
  CHECK(p.at(1, 2) == 0.0);
  CHECK(std::abs(p.at(1, 0) + p.at(1, 1) - 1.0) < 1e-15);
  CHECK(std::abs(p.at(1, 1) / p.at(1, 0) - std::exp(1.0)) < 1e-12);
}

TEST_CASE("cross_entropy ignores masked positions and rejects degenerate batches") {
  Tensor x = Tensor::from_data({2, 3}, {0, 0, 0, 1, 2, 3});
  const std::vector<TokenId> only_first = {1, 0};
  CHECK(cross_entropy(x, only_first, 0).item() == doctest::Approx(std::log(3.0)).epsilon(1e-14));
  const std::vector<TokenId> none = {0, 0};
  CHECK_THROWS_AS(cross_entropy(x, none, 0), ContractError);
  const std::vector<TokenId> bad = {7, 1};
  CHECK_THROWS_AS(cross_entropy(x, bad, 0), ContractError);
}

TEST_CASE("softmax rejects NaN input") {
  Tensor x = Tensor::from_data({1, 2}, {0.0, std::nan("")});
  CHECK_THROWS_AS(softmax_rows(x), NumericError);
}

TEST_CASE("shape mismatches raise dimension errors") {
  CHECK_THROWS_AS(matmul(Tensor::zeros({2, 3}), Tensor::zeros({2, 3})), DimensionError);
  CHECK_THROWS_AS(add(Tensor::zeros({2, 3}), Tensor::zeros({3, 2})), DimensionError);
  CHECK_THROWS_AS(Tensor::from_data({2, 2}, {1, 2, 3}), DimensionError);
}

TEST_CASE("backward requires a scalar root") {
  Tensor a = leaf(Tensor::filled({2, 2}, 1.0));
  CHECK_THROWS_AS(backward(scale(a, 2.0)), ContractError);
}

TEST_CASE("frozen leaves never receive gradients") {
  std::mt19937_64 rng(2);
  Tensor frozen = Tensor::randn({3, 3}, rng, 1.0);
  Tensor live = leaf(Tensor::randn({3, 3}, rng, 1.0));
  backward(sum(matmul(frozen, live)));
  CHECK_FALSE(frozen.has_grad());
  CHECK(live.has_grad());
}

TEST_CASE("gradients accumulate across backward calls until zeroed") {
  Tensor a = leaf(Tensor::filled({1, 2}, 1.0));
  backward(sum(scale(a, 3.0)));
  backward(sum(scale(a, 3.0)));
  CHECK(a.grad()[0] == 6.0);
  a.zero_grad();
  CHECK_FALSE(a.has_grad());
}

TEST_CASE("NoGradGuard disables graph recording") {
  Tensor a = leaf(Tensor::filled({1, 2}, 1.0));
  Tensor y;
  {
    NoGradGuard ng;
    CHECK_FALSE(grad_enabled());
    y = sum(scale(a, 2.0));
  }
  CHECK(grad_enabled());
  CHECK_FALSE(y.requires_grad());
}

TEST_CASE("neighbor_sum does not depend on neighbor order") {
  std::mt19937_64 rng(9);
  Tensor h = Tensor::randn({5, 4}, rng, 1e3);
  const std::vector<std::vector<std::size_t>> a = {{1, 2, 3, 4}, {0}, {0}, {0}, {0}};
  const std::vector<std::vector<std::size_t>> b = {{4, 2, 1, 3}, {0}, {0}, {0}, {0}};
  CHECK(mora::testing::max_abs_diff(neighbor_sum(h, a), neighbor_sum(h, b)) == 0.0);
}
