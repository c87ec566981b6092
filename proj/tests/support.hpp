#pragma once

// Independent oracles shared by the unit and acceptance tests.

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include <Eigen/SVD>

#include "mora/config.hpp"
#include "mora/tensor.hpp"

namespace mora::testing {

inline double max_abs_diff(std::span<const double> a, std::span<const double> b) {
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) worst = std::max(worst, std::abs(a[i] - b[i]));
  return worst;
}

inline double max_abs_diff(const Tensor& a, const Tensor& b) { return max_abs_diff(a.data(), b.data()); }

// Straight triple loop, independent of the library kernels.
inline std::vector<double> naive_matmul(const std::vector<double>& a, const std::vector<double>& b, std::size_t m,
                                        std::size_t k, std::size_t n) {
  std::vector<double> c(m * n, 0.0);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      long double s = 0;
      for (std::size_t p = 0; p < k; ++p) s += static_cast<long double>(a[i * k + p]) * b[p * n + j];
      c[i * n + j] = static_cast<double>(s);
    }
  return c;
}

inline std::vector<double> to_vec(const Tensor& t) { return {t.data().begin(), t.data().end()}; }

// Central differences of a scalar function over every entry of `leaf`,
// compared with the analytic gradient by ||g - g_fd|| / max(||g||, ||g_fd||).
// A pair of all-zero gradients counts as agreement.
inline double gradient_rel_error(const std::function<Tensor()>& loss, Tensor leaf, double h = 1e-5) {
  leaf.zero_grad();
  Tensor l = loss();
  backward(l);
  std::vector<double> analytic = leaf.has_grad() ? std::vector<double>(leaf.grad().begin(), leaf.grad().end())
                                                 : std::vector<double>(leaf.size(), 0.0);
  std::vector<double> numeric(leaf.size());
  {
    NoGradGuard ng;
    auto w = leaf.mutable_data();
    for (std::size_t i = 0; i < w.size(); ++i) {
      const double orig = w[i];
      w[i] = orig + h;
      const double up = loss().item();
      w[i] = orig - h;
      const double down = loss().item();
      w[i] = orig;
      numeric[i] = (up - down) / (2 * h);
    }
  }
  double diff = 0, na = 0, nn = 0;
  for (std::size_t i = 0; i < analytic.size(); ++i) {
    diff += (analytic[i] - numeric[i]) * (analytic[i] - numeric[i]);
    na += analytic[i] * analytic[i];
    nn += numeric[i] * numeric[i];
  }
  const double denom = std::max(std::sqrt(na), std::sqrt(nn));
  if (denom == 0.0) return 0.0;
  return std::sqrt(diff) / denom;
}

// Descending singular values via Eigen's Jacobi SVD.
inline std::vector<double> singular_values(const Tensor& m) {
  Eigen::MatrixXd e(m.rows(), m.cols());
  for (std::size_t i = 0; i < m.rows(); ++i)
    for (std::size_t j = 0; j < m.cols(); ++j) e(i, j) = m.at(i, j);
  const Eigen::VectorXd s = Eigen::JacobiSVD<Eigen::MatrixXd>(e).singularValues();
  return {s.data(), s.data() + s.size()};
}

inline Tensor leaf(Tensor t) {
  t.set_requires_grad(true);
  return t;
}

// Replaces the zero-initialized W_FC heads with small random values so
// every generator parameter influences the loss.
template <class Params>
void randomize_heads(Params& g, std::mt19937_64& rng, double stddev = 0.1) {
  for (auto& [site, head] : g.heads) {
    auto w = head.mutable_data();
    std::normal_distribution<double> n(0.0, stddev);
    for (double& x : w) x = n(rng);
  }
}

// Tiny configuration used for end-to-end gradient checks.
inline RunConfig miniature_config() {
  RunConfig c;
  c.set("backbone.layers", "1");
  c.set("backbone.d_model", "8");
  c.set("backbone.heads", "2");
  c.set("backbone.d_ff", "16");
  c.set("backbone.context", "32");
  c.set("encoder.layers", "2");
  c.set("encoder.d_model", "8");
  c.set("mawgen.blocks", "1");
  c.set("mawgen.rank", "2");
  c.set("mawgen.alpha", "2");
  c.set("mawgen.d_model", "8");
  c.set("mawgen.heads", "2");
  return c;
}

// Small but complete configuration for fast pipeline tests.
inline RunConfig small_config() {
  RunConfig c;
  c.set("backbone.layers", "2");
  c.set("backbone.d_model", "16");
  c.set("backbone.heads", "2");
  c.set("backbone.d_ff", "32");
  c.set("backbone.context", "64");
  c.set("encoder.layers", "2");
  c.set("encoder.d_model", "8");
  c.set("mawgen.blocks", "1");
  c.set("mawgen.rank", "2");
  c.set("mawgen.alpha", "2");
  c.set("mawgen.d_model", "8");
  c.set("mawgen.heads", "2");
  return c;
}

}  // namespace mora::testing
