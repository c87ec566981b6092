#include "mora/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "mora/errors.hpp"

namespace mora {

namespace {

using detail::Node;

std::vector<double>& grad_buf(Node& n) {
  if (n.grad.empty()) n.grad.assign(n.value.size(), 0.0);
  return n.grad;
}

Tensor finish(Shape shape, std::vector<double> value, const char* op, const std::vector<Tensor>& parents,
              std::function<void(Node&)> fn) {
  Tensor out = Tensor::from_data(std::move(shape), std::move(value));
  Node* n = out.node();
  n->op = op;
  if (!grad_enabled()) return out;
  bool need = false;
  for (const Tensor& p : parents) need = need || p.requires_grad();
  if (!need) return out;
  n->requires_grad = true;
  for (const Tensor& p : parents) n->parents.push_back(p.node_ptr());
  n->backward_fn = std::move(fn);
  return out;
}

void require_matrix(const Tensor& t, const char* op) {
  if (t.rank() != 2) {
    throw DimensionError(std::string(op) + ": expected a matrix, got shape " + shape_str(t.shape()));
  }
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shapes differ: " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
  }
}

// C[m×n] += A[m×k] · B[k×n]. Each C entry accumulates over k in ascending
// order regardless of its row, so row-permuted inputs give row-permuted
// outputs bit for bit.
void gemm_nn(const double* __restrict a, const double* __restrict b, double* __restrict c, std::size_t m,
             std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    double* ci = c + i * n;
    const double* ai = a + i * k;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = ai[p];
      const double* bp = b + p * n;
      for (std::size_t j = 0; j < n; ++j) ci[j] += av * bp[j];
    }
  }
}

// C[k×n] += Aᵀ · G with A[m×k], G[m×n].
void gemm_tn(const double* __restrict a, const double* __restrict g, double* __restrict c, std::size_t m,
             std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    const double* ai = a + i * k;
    const double* gi = g + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = ai[p];
      double* cp = c + p * n;
      for (std::size_t j = 0; j < n; ++j) cp[j] += av * gi[j];
    }
  }
}

std::vector<double> transposed(const std::vector<double>& v, std::size_t r, std::size_t c) {
  std::vector<double> t(v.size());
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) t[j * r + i] = v[i * c + j];
  return t;
}

void check_finite(std::span<const double> v, const char* op) {
  for (double x : v) {
    if (std::isnan(x)) throw NumericError(std::string(op) + ": NaN input");
  }
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_matrix(a, "matmul");
  require_matrix(b, "matmul");
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  if (b.rows() != k) {
    throw DimensionError("matmul: inner dimensions differ: " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
  }
  std::vector<double> out(m * n, 0.0);
  gemm_nn(a.data().data(), b.data().data(), out.data(), m, k, n);
  return finish({m, n}, std::move(out), "matmul", {a, b}, [m, k, n](Node& self) {
    Node& pa = *self.parents[0];
    Node& pb = *self.parents[1];
    if (pa.requires_grad) {
      std::vector<double> bt = transposed(pb.value, k, n);
      gemm_nn(self.grad.data(), bt.data(), grad_buf(pa).data(), m, n, k);
    }
    if (pb.requires_grad) gemm_tn(pa.value.data(), self.grad.data(), grad_buf(pb).data(), m, k, n);
  });
}

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  std::vector<double> out(a.size());
  auto x = a.data(), y = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] + y[i];
  return finish(a.shape(), std::move(out), "add", {a, b}, [](Node& self) {
    for (auto& p : self.parents) {
      if (!p->requires_grad) continue;
      auto& g = grad_buf(*p);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    }
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "sub");
  std::vector<double> out(a.size());
  auto x = a.data(), y = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] - y[i];
  return finish(a.shape(), std::move(out), "sub", {a, b}, [](Node& self) {
    if (self.parents[0]->requires_grad) {
      auto& g = grad_buf(*self.parents[0]);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    }
    if (self.parents[1]->requires_grad) {
      auto& g = grad_buf(*self.parents[1]);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] -= self.grad[i];
    }
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul");
  std::vector<double> out(a.size());
  auto x = a.data(), y = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] * y[i];
  return finish(a.shape(), std::move(out), "mul", {a, b}, [](Node& self) {
    Node& pa = *self.parents[0];
    Node& pb = *self.parents[1];
    if (pa.requires_grad) {
      auto& g = grad_buf(pa);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * pb.value[i];
    }
    if (pb.requires_grad) {
      auto& g = grad_buf(pb);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * pa.value[i];
    }
  });
}

Tensor scale(const Tensor& a, double s) {
  std::vector<double> out(a.data().begin(), a.data().end());
  for (double& v : out) v *= s;
  return finish(a.shape(), std::move(out), "scale", {a}, [s](Node& self) {
    auto& g = grad_buf(*self.parents[0]);
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * s;
  });
}

Tensor scale_by(const Tensor& a, const Tensor& s) {
  if (s.size() != 1) throw DimensionError("scale_by: factor must have one element, got " + shape_str(s.shape()));
  const double f = s.item();
  std::vector<double> out(a.data().begin(), a.data().end());
  for (double& v : out) v *= f;
  return finish(a.shape(), std::move(out), "scale_by", {a, s}, [](Node& self) {
    Node& pa = *self.parents[0];
    Node& ps = *self.parents[1];
    const double f = ps.value[0];
    if (pa.requires_grad) {
      auto& g = grad_buf(pa);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * f;
    }
    if (ps.requires_grad) {
      double acc = 0.0;
      for (std::size_t i = 0; i < self.grad.size(); ++i) acc += self.grad[i] * pa.value[i];
      grad_buf(ps)[0] += acc;
    }
  });
}

Tensor add_row(const Tensor& a, const Tensor& row) {
  require_matrix(a, "add_row");
  const std::size_t m = a.rows(), n = a.cols();
  if (row.size() != n) {
    throw DimensionError("add_row: row " + shape_str(row.shape()) + " does not fit " + shape_str(a.shape()));
  }
  std::vector<double> out(a.data().begin(), a.data().end());
  auto r = row.data();
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] += r[j];
  return finish(a.shape(), std::move(out), "add_row", {a, row}, [m, n](Node& self) {
    if (self.parents[0]->requires_grad) {
      auto& g = grad_buf(*self.parents[0]);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    }
    if (self.parents[1]->requires_grad) {
      auto& g = grad_buf(*self.parents[1]);
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) g[j] += self.grad[i * n + j];
    }
  });
}

Tensor transpose(const Tensor& a) {
  require_matrix(a, "transpose");
  const std::size_t m = a.rows(), n = a.cols();
  std::vector<double> src(a.data().begin(), a.data().end());
  return finish({n, m}, transposed(src, m, n), "transpose", {a}, [m, n](Node& self) {
    auto& g = grad_buf(*self.parents[0]);
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) g[i * n + j] += self.grad[j * m + i];
  });
}

Tensor reshape(const Tensor& a, Shape shape) {
  if (numel(shape) != a.size()) {
    throw DimensionError("reshape: cannot view " + shape_str(a.shape()) + " as " + shape_str(shape));
  }
  std::vector<double> out(a.data().begin(), a.data().end());
  return finish(std::move(shape), std::move(out), "reshape", {a}, [](Node& self) {
    auto& g = grad_buf(*self.parents[0]);
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
  });
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps) {
  require_matrix(x, "layer_norm");
  const std::size_t m = x.rows(), n = x.cols();
  if (gain.size() != n || bias.size() != n) {
    throw DimensionError("layer_norm: gain/bias " + shape_str(gain.shape()) + "/" + shape_str(bias.shape()) +
                         " do not fit " + shape_str(x.shape()));
  }
  auto xv = x.data();
  auto gv = gain.data();
  auto bv = bias.data();
  std::vector<double> xhat(m * n), rstd(m), out(m * n);
  for (std::size_t i = 0; i < m; ++i) {
    double mu = 0.0;
    for (std::size_t j = 0; j < n; ++j) mu += xv[i * n + j];
    mu /= static_cast<double>(n);
    double var = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      const double d = xv[i * n + j] - mu;
      var += d * d;
    }
    var /= static_cast<double>(n);
    rstd[i] = 1.0 / std::sqrt(var + eps);
    for (std::size_t j = 0; j < n; ++j) {
      const double h = (xv[i * n + j] - mu) * rstd[i];
      xhat[i * n + j] = h;
      out[i * n + j] = h * gv[j] + bv[j];
    }
  }
  return finish(x.shape(), std::move(out), "layer_norm", {x, gain, bias},
                [m, n, xhat = std::move(xhat), rstd = std::move(rstd)](Node& self) {
                  Node& px = *self.parents[0];
                  Node& pg = *self.parents[1];
                  Node& pb = *self.parents[2];
                  const std::vector<double>& g = self.grad;
                  if (pg.requires_grad) {
                    auto& dg = grad_buf(pg);
                    for (std::size_t i = 0; i < m; ++i)
                      for (std::size_t j = 0; j < n; ++j) dg[j] += g[i * n + j] * xhat[i * n + j];
                  }
                  if (pb.requires_grad) {
                    auto& db = grad_buf(pb);
                    for (std::size_t i = 0; i < m; ++i)
                      for (std::size_t j = 0; j < n; ++j) db[j] += g[i * n + j];
                  }
                  if (px.requires_grad) {
                    auto& dx = grad_buf(px);
                    const double inv_n = 1.0 / static_cast<double>(n);
                    for (std::size_t i = 0; i < m; ++i) {
                      double mean_d = 0.0, mean_dx = 0.0;
                      for (std::size_t j = 0; j < n; ++j) {
                        const double d = g[i * n + j] * pg.value[j];
                        mean_d += d;
                        mean_dx += d * xhat[i * n + j];
                      }
                      mean_d *= inv_n;
                      mean_dx *= inv_n;
                      for (std::size_t j = 0; j < n; ++j) {
                        const double d = g[i * n + j] * pg.value[j];
                        dx[i * n + j] += rstd[i] * (d - mean_d - xhat[i * n + j] * mean_dx);
                      }
                    }
                  }
                });
}

namespace {
constexpr double kGeluC = 0.7978845608028654;  // sqrt(2/pi)
constexpr double kGeluA = 0.044715;
}  // namespace

Tensor gelu(const Tensor& x) {
  std::vector<double> out(x.size());
  auto xv = x.data();
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double v = xv[i];
    out[i] = 0.5 * v * (1.0 + std::tanh(kGeluC * (v + kGeluA * v * v * v)));
  }
  return finish(x.shape(), std::move(out), "gelu", {x}, [](Node& self) {
    Node& px = *self.parents[0];
    auto& g = grad_buf(px);
    for (std::size_t i = 0; i < g.size(); ++i) {
      const double v = px.value[i];
      const double t = std::tanh(kGeluC * (v + kGeluA * v * v * v));
      const double dt = (1.0 - t * t) * kGeluC * (1.0 + 3.0 * kGeluA * v * v);
      g[i] += self.grad[i] * (0.5 * (1.0 + t) + 0.5 * v * dt);
    }
  });
}

Tensor relu(const Tensor& x) {
  std::vector<double> out(x.data().begin(), x.data().end());
  for (double& v : out) v = v > 0.0 ? v : 0.0;
  return finish(x.shape(), std::move(out), "relu", {x}, [](Node& self) {
    Node& px = *self.parents[0];
    auto& g = grad_buf(px);
    for (std::size_t i = 0; i < g.size(); ++i)
      if (px.value[i] > 0.0) g[i] += self.grad[i];
  });
}

Tensor embedding(const Tensor& table, std::span<const TokenId> ids) {
  require_matrix(table, "embedding");
  const std::size_t v = table.rows(), d = table.cols();
  if (ids.empty()) throw DimensionError("embedding: empty id sequence");
  std::vector<TokenId> idx(ids.begin(), ids.end());
  std::vector<double> out(idx.size() * d);
  auto tv = table.data();
  for (std::size_t t = 0; t < idx.size(); ++t) {
    if (idx[t] < 0 || static_cast<std::size_t>(idx[t]) >= v) {
      throw DimensionError("embedding: id " + std::to_string(idx[t]) + " outside table of " + std::to_string(v));
    }
    std::copy_n(tv.begin() + static_cast<std::ptrdiff_t>(idx[t] * d), d, out.begin() + static_cast<std::ptrdiff_t>(t * d));
  }
  const std::size_t rows = idx.size();
  return finish({rows, d}, std::move(out), "embedding", {table}, [d, idx = std::move(idx)](Node& self) {
    auto& g = grad_buf(*self.parents[0]);
    for (std::size_t t = 0; t < idx.size(); ++t)
      for (std::size_t j = 0; j < d; ++j) g[idx[t] * d + j] += self.grad[t * d + j];
  });
}

Tensor concat_cols(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw DimensionError("concat_cols: no operands");
  const std::size_t m = parts[0].rows();
  std::vector<std::size_t> widths;
  std::size_t total = 0;
  for (const Tensor& p : parts) {
    require_matrix(p, "concat_cols");
    if (p.rows() != m) {
      throw DimensionError("concat_cols: row counts differ: " + shape_str(parts[0].shape()) + " vs " +
                           shape_str(p.shape()));
    }
    widths.push_back(p.cols());
    total += p.cols();
  }
  std::vector<double> out(m * total);
  std::size_t off = 0;
  for (std::size_t k = 0; k < parts.size(); ++k) {
    auto pv = parts[k].data();
    for (std::size_t i = 0; i < m; ++i)
      std::copy_n(pv.begin() + static_cast<std::ptrdiff_t>(i * widths[k]), widths[k],
                  out.begin() + static_cast<std::ptrdiff_t>(i * total + off));
    off += widths[k];
  }
  return finish({m, total}, std::move(out), "concat_cols", parts, [m, total, widths](Node& self) {
    std::size_t off = 0;
    for (std::size_t k = 0; k < widths.size(); ++k) {
      Node& p = *self.parents[k];
      if (p.requires_grad) {
        auto& g = grad_buf(p);
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t j = 0; j < widths[k]; ++j) g[i * widths[k] + j] += self.grad[i * total + off + j];
      }
      off += widths[k];
    }
  });
}

Tensor concat_rows(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw DimensionError("concat_rows: no operands");
  const std::size_t n = parts[0].cols();
  std::vector<std::size_t> heights;
  std::size_t total = 0;
  for (const Tensor& p : parts) {
    if (p.rank() > 2) throw DimensionError("concat_rows: expected matrices, got " + shape_str(p.shape()));
    if (p.cols() != n) {
      throw DimensionError("concat_rows: column counts differ: " + shape_str(parts[0].shape()) + " vs " +
                           shape_str(p.shape()));
    }
    heights.push_back(p.rows());
    total += p.rows();
  }
  std::vector<double> out;
  out.reserve(total * n);
  for (const Tensor& p : parts) out.insert(out.end(), p.data().begin(), p.data().end());
  return finish({total, n}, std::move(out), "concat_rows", parts, [](Node& self) {
    std::size_t off = 0;
    for (auto& p : self.parents) {
      if (p->requires_grad) {
        auto& g = grad_buf(*p);
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[off + i];
      }
      off += p->value.size();
    }
  });
}

Tensor slice_cols(const Tensor& a, std::size_t start, std::size_t count) {
  require_matrix(a, "slice_cols");
  const std::size_t m = a.rows(), n = a.cols();
  if (count == 0 || start + count > n) {
    throw DimensionError("slice_cols: [" + std::to_string(start) + ", " + std::to_string(start + count) +
                         ") out of range for " + shape_str(a.shape()));
  }
  std::vector<double> out(m * count);
  auto av = a.data();
  for (std::size_t i = 0; i < m; ++i)
    std::copy_n(av.begin() + static_cast<std::ptrdiff_t>(i * n + start), count,
                out.begin() + static_cast<std::ptrdiff_t>(i * count));
  return finish({m, count}, std::move(out), "slice_cols", {a}, [m, n, start, count](Node& self) {
    auto& g = grad_buf(*self.parents[0]);
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < count; ++j) g[i * n + start + j] += self.grad[i * count + j];
  });
}

Tensor slice_rows(const Tensor& a, std::size_t start, std::size_t count) {
  const std::size_t m = a.rows(), n = a.cols();
  if (count == 0 || start + count > m) {
    throw DimensionError("slice_rows: [" + std::to_string(start) + ", " + std::to_string(start + count) +
                         ") out of range for " + shape_str(a.shape()));
  }
  auto av = a.data();
  std::vector<double> out(av.begin() + static_cast<std::ptrdiff_t>(start * n),
                          av.begin() + static_cast<std::ptrdiff_t>((start + count) * n));
  return finish({count, n}, std::move(out), "slice_rows", {a}, [n, start](Node& self) {
    auto& g = grad_buf(*self.parents[0]);
    for (std::size_t i = 0; i < self.grad.size(); ++i) g[start * n + i] += self.grad[i];
  });
}

namespace {

Tensor softmax_impl(const Tensor& x, bool causal, const char* op) {
  require_matrix(x, op);
  check_finite(x.data(), op);
  const std::size_t m = x.rows(), n = x.cols();
  if (causal && n < m) throw DimensionError(std::string(op) + ": needs cols >= rows, got " + shape_str(x.shape()));
  const std::size_t offset = causal ? n - m : 0;
  auto xv = x.data();
  std::vector<double> out(m * n, 0.0);
  for (std::size_t i = 0; i < m; ++i) {
    const std::size_t width = causal ? i + offset + 1 : n;
    const double* row = xv.data() + i * n;
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < width; ++j) mx = std::max(mx, row[j]);
    double z = 0.0;
    for (std::size_t j = 0; j < width; ++j) {
      out[i * n + j] = std::exp(row[j] - mx);
      z += out[i * n + j];
    }
    for (std::size_t j = 0; j < width; ++j) out[i * n + j] /= z;
  }
  return finish(x.shape(), std::move(out), op, {x}, [m, n](Node& self) {
    auto& g = grad_buf(*self.parents[0]);
    const std::vector<double>& y = self.value;
    for (std::size_t i = 0; i < m; ++i) {
      double dot = 0.0;
      for (std::size_t j = 0; j < n; ++j) dot += self.grad[i * n + j] * y[i * n + j];
      for (std::size_t j = 0; j < n; ++j) g[i * n + j] += y[i * n + j] * (self.grad[i * n + j] - dot);
    }
  });
}

}  // namespace

Tensor softmax_rows(const Tensor& x) { return softmax_impl(x, false, "softmax_rows"); }

Tensor causal_softmax_rows(const Tensor& x) { return softmax_impl(x, true, "causal_softmax_rows"); }

Tensor cross_entropy(const Tensor& logits, std::span<const TokenId> targets, TokenId ignore_index) {
  require_matrix(logits, "cross_entropy");
  const std::size_t t_len = logits.rows(), v = logits.cols();
  if (targets.size() != t_len) {
    throw DimensionError("cross_entropy: " + std::to_string(targets.size()) + " targets for logits " +
                         shape_str(logits.shape()));
  }
  check_finite(logits.data(), "cross_entropy");
  auto lv = logits.data();
  std::vector<TokenId> tgt(targets.begin(), targets.end());
  std::size_t count = 0;
  for (TokenId y : tgt) {
    if (y == ignore_index) continue;
    if (y < 0 || static_cast<std::size_t>(y) >= v) {
      throw ContractError("cross_entropy: target " + std::to_string(y) + " outside vocabulary of " +
                          std::to_string(v));
    }
    ++count;
  }
  if (count == 0) throw ContractError("cross_entropy: every position is ignored (degenerate batch)");

  std::vector<double> probs(t_len * v, 0.0);
  double total = 0.0;
  for (std::size_t t = 0; t < t_len; ++t) {
    if (tgt[t] == ignore_index) continue;
    const double* row = lv.data() + t * v;
    double mx = row[0];
    for (std::size_t j = 1; j < v; ++j) mx = std::max(mx, row[j]);
    double z = 0.0;
    for (std::size_t j = 0; j < v; ++j) {
      probs[t * v + j] = std::exp(row[j] - mx);
      z += probs[t * v + j];
    }
    for (std::size_t j = 0; j < v; ++j) probs[t * v + j] /= z;
    total += (mx + std::log(z)) - row[tgt[t]];
  }
  const double inv = 1.0 / static_cast<double>(count);
  return finish({}, {total * inv}, "cross_entropy", {logits},
                [t_len, v, inv, ignore_index, tgt = std::move(tgt), probs = std::move(probs)](Node& self) {
                  auto& g = grad_buf(*self.parents[0]);
                  const double up = self.grad[0] * inv;
                  for (std::size_t t = 0; t < t_len; ++t) {
                    if (tgt[t] == ignore_index) continue;
                    for (std::size_t j = 0; j < v; ++j) g[t * v + j] += up * probs[t * v + j];
                    g[t * v + static_cast<std::size_t>(tgt[t])] -= up;
                  }
                });
}

Tensor sum(const Tensor& a) {
  double s = 0.0;
  for (double x : a.data()) s += x;
  return finish({}, {s}, "sum", {a}, [](Node& self) {
    auto& g = grad_buf(*self.parents[0]);
    for (double& x : g) x += self.grad[0];
  });
}

Tensor mean(const Tensor& a) { return scale(sum(a), 1.0 / static_cast<double>(a.size())); }

Tensor neighbor_sum(const Tensor& h, const std::vector<std::vector<std::size_t>>& neighbors) {
  require_matrix(h, "neighbor_sum");
  const std::size_t n = h.rows(), d = h.cols();
  if (neighbors.size() != n) {
    throw DimensionError("neighbor_sum: " + std::to_string(neighbors.size()) + " adjacency lists for " +
                         shape_str(h.shape()));
  }
  check_finite(h.data(), "neighbor_sum");
  auto hv = h.data();
  std::vector<double> out(n * d, 0.0);
  std::vector<double> column;
  for (std::size_t v = 0; v < n; ++v) {
    for (std::size_t u : neighbors[v]) {
      if (u >= n) throw DimensionError("neighbor_sum: neighbor index " + std::to_string(u) + " out of range");
    }
    for (std::size_t j = 0; j < d; ++j) {
      column.clear();
      for (std::size_t u : neighbors[v]) column.push_back(hv[u * d + j]);
      std::sort(column.begin(), column.end());
      double s = 0.0;
      for (double x : column) s += x;
      out[v * d + j] = s;
    }
  }
  return finish(h.shape(), std::move(out), "neighbor_sum", {h}, [d, neighbors](Node& self) {
    auto& g = grad_buf(*self.parents[0]);
    for (std::size_t v = 0; v < neighbors.size(); ++v)
      for (std::size_t u : neighbors[v])
        for (std::size_t j = 0; j < d; ++j) g[u * d + j] += self.grad[v * d + j];
  });
}

}  // namespace mora
