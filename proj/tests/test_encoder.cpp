#include <doctest.h>

#include <numeric>

#include "mora/dataset.hpp"
#include "mora/encoder.hpp"
#include "mora/errors.hpp"
#include "mora/nn.hpp"
#include "mora/ops.hpp"
#include "support.hpp"

using namespace mora;
using mora::testing::max_abs_diff;

namespace {

EncoderLayer identity_layer(std::size_t d) {
  return EncoderLayer{Tensor::zeros({1, 1}), Tensor::eye(d), Tensor::zeros({1, d}), Tensor::eye(d),
                      Tensor::zeros({1, d})};
}

Tensor one_hot_rows(std::size_t n) { return Tensor::eye(n); }

// Straight-line forward of encode_graph using plain loops.
std::vector<double> unrolled_encode(const MolecularGraph& g, const EncoderParams& p) {
  const std::size_t n = g.atom_count(), d = p.cfg.d_model;
  const Tensor f = atom_features(g);
  auto lin = [](const std::vector<double>& x, std::size_t rows, std::size_t in, const Tensor& w, const Tensor& b) {
    const std::size_t out = w.cols();
    std::vector<double> y(rows * out);
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t j = 0; j < out; ++j) {
        double s = b.data()[j];
        for (std::size_t k = 0; k < in; ++k) s += x[r * in + k] * w.at(k, j);
        y[r * out + j] = s;
      }
    return y;
  };
  std::vector<double> h = lin(mora::testing::to_vec(f), n, kAtomFeatureDim, p.w_in, p.b_in);
  const auto adj = g.adjacency();
  for (const auto& L : p.layers) {
    std::vector<double> pre(n * d);
    const double eps = L.eps.item();
    for (std::size_t v = 0; v < n; ++v)
      for (std::size_t j = 0; j < d; ++j) {
        double m = 0;
        for (std::size_t u : adj[v]) m += h[u * d + j];
        pre[v * d + j] = (1 + eps) * h[v * d + j] + m;
      }
    std::vector<double> hid = lin(pre, n, d, L.w1, L.b1);
    for (double& x : hid) x = x > 0 ? x : 0;
    h = lin(hid, n, d, L.w2, L.b2);
  }
  return h;
}

}  // namespace

TEST_CASE("message_step on a triangle with identity MLP") {
  const MolecularGraph g = parse_smiles("C1CC1");
  const Tensor out = message_step(one_hot_rows(3), g, identity_layer(3));
  for (std::size_t r = 0; r < 3; ++r)
    for (std::size_t c = 0; c < 3; ++c) CHECK(out.at(r, c) == 1.0);
}

TEST_CASE("message_step on a single node applies the MLP alone") {
  std::mt19937_64 rng(4);
  EncoderLayer L{Tensor::from_data({1, 1}, {0.3}), init_weight(4, 4, rng), Tensor::randn({1, 4}, rng, 1.0),
                 init_weight(4, 4, rng), Tensor::randn({1, 4}, rng, 1.0)};
  const Tensor h = Tensor::randn({1, 4}, rng, 1.0);
  const Tensor got = message_step(h, parse_smiles("C"), L);
  const Tensor want = linear(relu(linear(scale(h, 1.3), L.w1, L.b1)), L.w2, L.b2);
  CHECK(max_abs_diff(got, want) < 1e-15);
}

TEST_CASE("message_step on a path graph") {
  const MolecularGraph g = parse_smiles("CCC");
  const Tensor h = Tensor::from_data({3, 2}, {1, 2, 3, 5, 7, 11});
  const Tensor out = message_step(h, g, identity_layer(2));
  CHECK(out.at(0, 0) == 4.0);
  CHECK(out.at(0, 1) == 7.0);
  CHECK(out.at(1, 0) == 11.0);
  CHECK(out.at(1, 1) == 18.0);
}

TEST_CASE("message_step rejects mismatched embeddings") {
  CHECK_THROWS_AS(message_step(Tensor::zeros({2, 3}), parse_smiles("CCC"), identity_layer(3)), ContractError);
}

TEST_CASE("encode_graph with no layers is the input projection") {
  std::mt19937_64 rng(1);
  const EncoderParams p = EncoderParams::init(EncoderConfig{0, 8, false}, rng);
  const MolecularGraph g = parse_smiles("CC(=O)N");
  const Tensor want = linear(atom_features(g), p.w_in, p.b_in);
  CHECK(max_abs_diff(encode_graph(g, p).values, want) == 0.0);
}

TEST_CASE("encode_graph matches the unrolled loop oracle") {
  std::mt19937_64 rng(2);
  EncoderParams p = EncoderParams::init(EncoderConfig{2, 8, false}, rng);
  p.layers[0].eps.mutable_data()[0] = 0.25;
  p.layers[1].eps.mutable_data()[0] = -0.1;
  for (const char* s : {"CCO", "C1CC1N", "c1ccccc1O"}) {
    const MolecularGraph g = parse_smiles(s);
    CHECK(mora::testing::max_abs_diff(encode_graph(g, p).values.data(), unrolled_encode(g, p)) < 1e-12);
  }
}

TEST_CASE("encode_graph is exactly permutation equivariant") {
  std::mt19937_64 rng(3);
  const EncoderParams p = EncoderParams::init(EncoderConfig{}, rng);
  for (int i = 0; i < 30; ++i) {
    const MolecularGraph g = random_molecule(1 + rng() % 9, rng);
    std::vector<std::size_t> perm(g.atom_count());
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    const Tensor a = encode_graph(g, p).values;
    const Tensor b = encode_graph(permute_graph(g, perm), p).values;
    for (std::size_t v = 0; v < g.atom_count(); ++v)
      for (std::size_t j = 0; j < a.cols(); ++j) CHECK(b.at(perm[v], j) == a.at(v, j));
  }
}

TEST_CASE("node embeddings are local to the L-hop neighborhood") {
  std::mt19937_64 rng(5);
  const EncoderParams p = EncoderParams::init(EncoderConfig{2, 8, false}, rng);
  // Atom 0 sees atoms 0..2 after two layers; changing atom 5 leaves it alone,
  // changing atom 2 does not.
  const Tensor base = encode_graph(parse_smiles("CCCCCC"), p).values;
  const Tensor far = encode_graph(parse_smiles("CCCCCN"), p).values;
  const Tensor near = encode_graph(parse_smiles("CCNCCC"), p).values;
  bool far_same = true, near_same = true;
  for (std::size_t j = 0; j < 8; ++j) {
    far_same = far_same && far.at(0, j) == base.at(0, j);
    near_same = near_same && near.at(0, j) == base.at(0, j);
  }
  CHECK(far_same);
  CHECK_FALSE(near_same);
}

TEST_CASE("encode_graph rejects empty graphs") {
  std::mt19937_64 rng(6);
  const EncoderParams p = EncoderParams::init(EncoderConfig{}, rng);
  CHECK_THROWS_AS(encode_graph(MolecularGraph{}, p), EmptyGraphError);
}

TEST_CASE("encoder parameters are frozen unless configured trainable") {
  std::mt19937_64 rng(7);
  EncoderParams p = EncoderParams::init(EncoderConfig{}, rng);
  for (const auto& [name, t] : p.named()) CHECK_FALSE(t.requires_grad());
  p.set_trainable(true);
  for (const auto& [name, t] : p.named()) CHECK(t.requires_grad());
}
