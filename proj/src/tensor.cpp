#include "mora/tensor.hpp"

#include <algorithm>
#include <atomic>
#include <sstream>
#include <unordered_set>

#include "mora/errors.hpp"

namespace mora {

namespace {

std::atomic<std::uint64_t> g_next_seq{1};
thread_local bool t_grad_enabled = true;

std::shared_ptr<detail::Node> new_node(Shape shape, std::vector<double> value) {
  if (numel(shape) != value.size()) {
    throw DimensionError("tensor data length " + std::to_string(value.size()) +
                         " does not match shape " + shape_str(shape));
  }
  for (std::size_t d : shape) {
    if (d == 0) throw DimensionError("tensor dimensions must be positive, got " + shape_str(shape));
  }
  auto n = std::make_shared<detail::Node>();
  n->shape = std::move(shape);
  n->value = std::move(value);
  n->seq = g_next_seq.fetch_add(1, std::memory_order_relaxed);
  return n;
}

}  // namespace

std::size_t numel(const Shape& shape) {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << "x";
    os << shape[i];
  }
  os << ']';
  return os.str();
}

Tensor Tensor::wrap(std::shared_ptr<detail::Node> n) {
  Tensor t;
  t.node_ = std::move(n);
  return t;
}

Tensor Tensor::zeros(Shape shape) { return filled(std::move(shape), 0.0); }

Tensor Tensor::filled(Shape shape, double v) {
  std::vector<double> data(numel(shape), v);
  return wrap(new_node(std::move(shape), std::move(data)));
}

Tensor Tensor::from_data(Shape shape, std::vector<double> data) {
  return wrap(new_node(std::move(shape), std::move(data)));
}

Tensor Tensor::scalar(double v) { return wrap(new_node({}, {v})); }

Tensor Tensor::eye(std::size_t n) {
  Tensor t = zeros({n, n});
  for (std::size_t i = 0; i < n; ++i) t.node_->value[i * n + i] = 1.0;
  return t;
}

Tensor Tensor::randn(Shape shape, std::mt19937_64& rng, double stddev) {
  std::normal_distribution<double> dist(0.0, stddev);
  std::vector<double> data(numel(shape));
  for (double& x : data) x = dist(rng);
  return wrap(new_node(std::move(shape), std::move(data)));
}

const Shape& Tensor::shape() const {
  if (!node_) throw ContractError("use of an undefined tensor");
  return node_->shape;
}

std::size_t Tensor::size() const { return numel(shape()); }

std::size_t Tensor::rows() const {
  const Shape& s = shape();
  if (s.size() == 2) return s[0];
  if (s.size() <= 1) return 1;
  throw DimensionError("rows() on rank-" + std::to_string(s.size()) + " tensor " + shape_str(s));
}

std::size_t Tensor::cols() const {
  const Shape& s = shape();
  if (s.size() == 2) return s[1];
  if (s.size() == 1) return s[0];
  if (s.empty()) return 1;
  throw DimensionError("cols() on rank-" + std::to_string(s.size()) + " tensor " + shape_str(s));
}

std::span<const double> Tensor::data() const {
  shape();
  return node_->value;
}

std::span<double> Tensor::mutable_data() {
  shape();
  if (!node_->parents.empty() || node_->backward_fn) {
    throw ContractError("mutable_data() on a non-leaf tensor (op " + std::string(node_->op) + ")");
  }
  return node_->value;
}

double Tensor::item() const {
  if (size() != 1) throw DimensionError("item() on non-scalar tensor " + shape_str(shape()));
  return node_->value[0];
}

double Tensor::at(std::size_t r, std::size_t c) const {
  std::size_t nc = cols();
  if (r >= rows() || c >= nc) throw DimensionError("index out of range");
  return node_->value[r * nc + c];
}

bool Tensor::requires_grad() const { return node_ && node_->requires_grad; }

Tensor& Tensor::set_requires_grad(bool on) {
  if (!is_leaf()) throw ContractError("set_requires_grad on a non-leaf tensor");
  node_->requires_grad = on;
  if (!on) node_->grad.clear();
  return *this;
}

bool Tensor::is_leaf() const {
  shape();
  return node_->parents.empty() && !node_->backward_fn;
}

bool Tensor::has_grad() const { return node_ && !node_->grad.empty(); }

std::span<const double> Tensor::grad() const {
  if (!has_grad()) throw ContractError("tensor has no gradient");
  return node_->grad;
}

void Tensor::zero_grad() {
  if (node_) node_->grad.clear();
}

Tensor Tensor::detach() const { return from_data(shape(), node_->value); }

NoGradGuard::NoGradGuard() : previous_(t_grad_enabled) { t_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { t_grad_enabled = previous_; }

bool grad_enabled() { return t_grad_enabled; }

void backward(const Tensor& root) {
  if (!root.defined()) throw ContractError("backward on an undefined tensor");
  if (root.size() != 1) {
    throw ContractError("backward root must be a scalar, got shape " + shape_str(root.shape()));
  }
  detail::Node* r = root.node();
  if (!r->requires_grad) return;

  // Collect the sub-graph that needs gradients.
  std::vector<detail::Node*> order;
  std::unordered_set<detail::Node*> seen;
  std::vector<detail::Node*> stack{r};
  seen.insert(r);
  while (!stack.empty()) {
    detail::Node* n = stack.back();
    stack.pop_back();
    order.push_back(n);
    for (const auto& p : n->parents) {
      if (p->requires_grad && seen.insert(p.get()).second) stack.push_back(p.get());
    }
  }
  std::sort(order.begin(), order.end(),
            [](const detail::Node* a, const detail::Node* b) { return a->seq > b->seq; });

  if (r->grad.empty()) r->grad.assign(1, 0.0);
  r->grad[0] += 1.0;
  for (detail::Node* n : order) {
    if (n->backward_fn && !n->grad.empty()) n->backward_fn(*n);
  }
  // Interior gradients are scratch space; only leaves keep theirs.
  for (detail::Node* n : order) {
    if (n->backward_fn) n->grad.clear();
  }
}

}  // namespace mora
