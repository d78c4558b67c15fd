#include "tjaidl/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <unordered_set>

#include "tjaidl/error.hpp"

namespace tjaidl {

namespace detail {

struct Node {
  Shape shape;
  std::vector<double> values;
  std::vector<double> grad;  // empty until first accumulation
  bool requires_grad = false;
  const char* op = "leaf";
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward_fn;
  std::size_t backward_visits = 0;

  void ensure_grad() {
    if (grad.empty()) grad.assign(values.size(), 0.0);
  }
};

struct TensorAccess {
  static Tensor wrap(std::shared_ptr<Node> node) { return Tensor(std::move(node)); }
  static const std::shared_ptr<Node>& ptr(const Tensor& t) { return t.node_; }
};

}  // namespace detail

namespace {

using detail::Node;
using detail::TensorAccess;

thread_local bool g_grad_enabled = true;

Node& node_of(const Tensor& t) {
  const auto& p = TensorAccess::ptr(t);
  if (!p) throw ContractViolation("operation on an undefined tensor");
  return *p;
}

void check_finite(const char* op, const std::vector<double>& values) {
  for (double v : values) {
    if (!std::isfinite(v)) {
      throw NumericOverflowError(std::string(op) + ": non-finite output");
    }
  }
}

// Builds an op result; parents are recorded only if some parent needs grad.
Tensor make_result(const char* op, Shape shape, std::vector<double> values,
                   std::vector<Tensor> parents, std::function<void(Node&)> backward_fn) {
  check_finite(op, values);
  auto node = std::make_shared<Node>();
  node->shape = std::move(shape);
  node->values = std::move(values);
  node->op = op;
  bool needs = false;
  if (g_grad_enabled) {
    for (const auto& p : parents) needs = needs || node_of(p).requires_grad;
  }
  if (needs) {
    node->requires_grad = true;
    for (const auto& p : parents) node->parents.push_back(TensorAccess::ptr(p));
    node->backward_fn = std::move(backward_fn);
  }
  return TensorAccess::wrap(std::move(node));
}

void require_2d(const char* op, const Tensor& t) {
  if (t.ndim() != 2) {
    throw InvalidShapeError(std::string(op) + ": expected a 2-D tensor, got " +
                            shape_string(t.shape()));
  }
}

void require_same_shape(const char* op, const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    throw InvalidShapeError(std::string(op) + ": shape mismatch " + shape_string(a.shape()) +
                            " vs " + shape_string(b.shape()));
  }
}

// Applies f elementwise; df(x, y) is the local derivative given input and output.
template <typename F, typename DF>
Tensor unary(const char* op, const Tensor& x, F f, DF df) {
  const auto& xv = node_of(x).values;
  std::vector<double> out(xv.size());
  for (std::size_t i = 0; i < xv.size(); ++i) out[i] = f(xv[i]);
  return make_result(op, x.shape(), std::move(out), {x}, [df](Node& self) {
    Node& p = *self.parents[0];
    if (!p.requires_grad) return;
    p.ensure_grad();
    for (std::size_t i = 0; i < p.values.size(); ++i) {
      p.grad[i] += self.grad[i] * df(p.values[i], self.values[i]);
    }
  });
}

}  // namespace

std::size_t shape_size(const Shape& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << ']';
  return os.str();
}

// ---- Tensor --------------------------------------------------------------

Tensor Tensor::zeros(Shape shape, bool requires_grad) { return full(std::move(shape), 0.0, requires_grad); }

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  std::vector<double> values(shape_size(shape), value);
  return from_values(std::move(shape), std::move(values), requires_grad);
}

Tensor Tensor::from_values(Shape shape, std::vector<double> values, bool requires_grad) {
  for (auto d : shape) {
    if (d == 0) throw InvalidShapeError("tensor dimensions must be positive: " + shape_string(shape));
  }
  if (shape.empty() || shape_size(shape) != values.size()) {
    throw InvalidShapeError("shape " + shape_string(shape) + " does not match " +
                            std::to_string(values.size()) + " values");
  }
  auto node = std::make_shared<Node>();
  node->shape = std::move(shape);
  node->values = std::move(values);
  node->requires_grad = requires_grad;
  return Tensor(std::move(node));
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  return from_values({1}, {value}, requires_grad);
}

Tensor Tensor::matrix(std::initializer_list<std::initializer_list<double>> rows,
                      bool requires_grad) {
  std::size_t r = rows.size();
  std::size_t c = r ? rows.begin()->size() : 0;
  std::vector<double> values;
  values.reserve(r * c);
  for (const auto& row : rows) {
    if (row.size() != c) throw InvalidShapeError("ragged matrix literal");
    values.insert(values.end(), row.begin(), row.end());
  }
  return from_values({r, c}, std::move(values), requires_grad);
}

Node& Tensor::node() const { return node_of(*this); }

const Shape& Tensor::shape() const { return node().shape; }
std::size_t Tensor::size() const { return node().values.size(); }

std::size_t Tensor::rows() const {
  require_2d("rows", *this);
  return shape()[0];
}

std::size_t Tensor::cols() const {
  require_2d("cols", *this);
  return shape()[1];
}

std::span<const double> Tensor::values() const { return node().values; }
std::span<double> Tensor::mutable_values() { return node().values; }

double Tensor::item() const {
  if (size() != 1) throw ContractViolation("item() on non-scalar " + shape_string(shape()));
  return node().values[0];
}

double Tensor::at(std::size_t r, std::size_t c) const { return node().values[r * cols() + c]; }

bool Tensor::requires_grad() const { return node().requires_grad; }
bool Tensor::has_grad() const { return !node().grad.empty(); }
std::span<const double> Tensor::grad() const { return node().grad; }

std::span<double> Tensor::mutable_grad() {
  node().ensure_grad();
  return node().grad;
}

void Tensor::zero_grad() { node().grad.clear(); }
bool Tensor::is_leaf() const { return node().parents.empty(); }
const char* Tensor::op() const { return node().op; }
std::size_t Tensor::num_parents() const { return node().parents.size(); }
std::size_t Tensor::backward_visits() const { return node().backward_visits; }

Tensor Tensor::clone(bool requires_grad) const {
  return from_values(shape(), node().values, requires_grad);
}

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }
bool grad_enabled() { return g_grad_enabled; }

// ---- ops -----------------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_2d("matmul", a);
  require_2d("matmul", b);
  const std::size_t n = a.rows(), k = a.cols(), m = b.cols();
  if (b.rows() != k) {
    throw InvalidShapeError("matmul: shape mismatch " + shape_string(a.shape()) + " x " +
                            shape_string(b.shape()));
  }
  const auto& av = node_of(a).values;
  const auto& bv = node_of(b).values;
  std::vector<double> out(n * m, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = av[i * k + p];
      if (aip == 0.0) continue;
      const double* brow = &bv[p * m];
      double* orow = &out[i * m];
      for (std::size_t j = 0; j < m; ++j) orow[j] += aip * brow[j];
    }
  }
  return make_result("matmul", {n, m}, std::move(out), {a, b}, [n, k, m](Node& self) {
    Node& pa = *self.parents[0];
    Node& pb = *self.parents[1];
    const auto& g = self.grad;
    if (pa.requires_grad) {
      pa.ensure_grad();
      // dA = G * B^T
      for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t p = 0; p < k; ++p) {
          double acc = 0.0;
          for (std::size_t j = 0; j < m; ++j) acc += g[i * m + j] * pb.values[p * m + j];
          pa.grad[i * k + p] += acc;
        }
      }
    }
    if (pb.requires_grad) {
      pb.ensure_grad();
      // dB = A^T * G
      for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t p = 0; p < k; ++p) {
          const double aip = pa.values[i * k + p];
          if (aip == 0.0) continue;
          for (std::size_t j = 0; j < m; ++j) pb.grad[p * m + j] += aip * g[i * m + j];
        }
      }
    }
  });
}

namespace {

template <typename F, typename DA, typename DB>
Tensor binary(const char* op, const Tensor& a, const Tensor& b, F f, DA da, DB db) {
  require_same_shape(op, a, b);
  const auto& av = node_of(a).values;
  const auto& bv = node_of(b).values;
  std::vector<double> out(av.size());
  for (std::size_t i = 0; i < av.size(); ++i) out[i] = f(av[i], bv[i]);
  return make_result(op, a.shape(), std::move(out), {a, b}, [da, db](Node& self) {
    Node& pa = *self.parents[0];
    Node& pb = *self.parents[1];
    if (pa.requires_grad) {
      pa.ensure_grad();
      for (std::size_t i = 0; i < self.grad.size(); ++i)
        pa.grad[i] += self.grad[i] * da(pa.values[i], pb.values[i]);
    }
    if (pb.requires_grad) {
      pb.ensure_grad();
      for (std::size_t i = 0; i < self.grad.size(); ++i)
        pb.grad[i] += self.grad[i] * db(pa.values[i], pb.values[i]);
    }
  });
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  return binary(
      "add", a, b, [](double x, double y) { return x + y; },
      [](double, double) { return 1.0; }, [](double, double) { return 1.0; });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  return binary(
      "sub", a, b, [](double x, double y) { return x - y; },
      [](double, double) { return 1.0; }, [](double, double) { return -1.0; });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  return binary(
      "mul", a, b, [](double x, double y) { return x * y; },
      [](double, double y) { return y; }, [](double x, double) { return x; });
}

Tensor add_bias(const Tensor& x, const Tensor& bias) {
  require_2d("add_bias", x);
  const std::size_t n = x.rows(), k = x.cols();
  const bool ok = bias.size() == k &&
                  (bias.ndim() == 1 || (bias.ndim() == 2 && bias.shape()[0] == 1));
  if (!ok) {
    throw InvalidShapeError("add_bias: shape mismatch " + shape_string(x.shape()) + " + " +
                            shape_string(bias.shape()));
  }
  const auto& xv = node_of(x).values;
  const auto& bv = node_of(bias).values;
  std::vector<double> out(n * k);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < k; ++j) out[i * k + j] = xv[i * k + j] + bv[j];
  return make_result("add_bias", {n, k}, std::move(out), {x, bias}, [n, k](Node& self) {
    Node& px = *self.parents[0];
    Node& pb = *self.parents[1];
    if (px.requires_grad) {
      px.ensure_grad();
      for (std::size_t i = 0; i < n * k; ++i) px.grad[i] += self.grad[i];
    }
    if (pb.requires_grad) {
      pb.ensure_grad();
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < k; ++j) pb.grad[j] += self.grad[i * k + j];
    }
  });
}

Tensor scale(const Tensor& x, double factor) {
  return unary(
      "scale", x, [factor](double v) { return v * factor; },
      [factor](double, double) { return factor; });
}

Tensor add_scalar(const Tensor& x, double value) {
  return unary(
      "add_scalar", x, [value](double v) { return v + value; },
      [](double, double) { return 1.0; });
}

Tensor relu(const Tensor& x) {
  return unary(
      "relu", x, [](double v) { return v > 0.0 ? v : 0.0; },
      [](double in, double) { return in > 0.0 ? 1.0 : 0.0; });
}

Tensor sigmoid(const Tensor& x) {
  return unary(
      "sigmoid", x,
      [](double v) {
        if (v >= 0.0) return 1.0 / (1.0 + std::exp(-v));
        const double e = std::exp(v);
        return e / (1.0 + e);
      },
      [](double, double out) { return out * (1.0 - out); });
}

Tensor softmax_rows(const Tensor& x) {
  require_2d("softmax_rows", x);
  const std::size_t n = x.rows(), k = x.cols();
  const auto& xv = node_of(x).values;
  std::vector<double> out(n * k);
  for (std::size_t i = 0; i < n; ++i) {
    const double* row = &xv[i * k];
    const double mx = *std::max_element(row, row + k);
    double z = 0.0;
    for (std::size_t j = 0; j < k; ++j) {
      out[i * k + j] = std::exp(row[j] - mx);
      z += out[i * k + j];
    }
    for (std::size_t j = 0; j < k; ++j) out[i * k + j] /= z;
  }
  return make_result("softmax_rows", {n, k}, std::move(out), {x}, [n, k](Node& self) {
    Node& p = *self.parents[0];
    if (!p.requires_grad) return;
    p.ensure_grad();
    for (std::size_t i = 0; i < n; ++i) {
      double dot = 0.0;
      for (std::size_t j = 0; j < k; ++j) dot += self.grad[i * k + j] * self.values[i * k + j];
      for (std::size_t j = 0; j < k; ++j) {
        p.grad[i * k + j] += self.values[i * k + j] * (self.grad[i * k + j] - dot);
      }
    }
  });
}

Tensor log(const Tensor& x) {
  for (double v : x.values()) {
    if (!(v > 0.0)) throw NumericOverflowError("log: input must be strictly positive");
  }
  return unary(
      "log", x, [](double v) { return std::log(v); },
      [](double in, double) { return 1.0 / in; });
}

Tensor square(const Tensor& x) {
  return unary(
      "square", x, [](double v) { return v * v; },
      [](double in, double) { return 2.0 * in; });
}

Tensor clamp(const Tensor& x, double lo, double hi) {
  return unary(
      "clamp", x, [lo, hi](double v) { return std::clamp(v, lo, hi); },
      [lo, hi](double in, double) { return (in >= lo && in <= hi) ? 1.0 : 0.0; });
}

Tensor sum_all(const Tensor& x) {
  double s = 0.0;
  for (double v : x.values()) s += v;
  return make_result("sum_all", {1}, {s}, {x}, [](Node& self) {
    Node& p = *self.parents[0];
    if (!p.requires_grad) return;
    p.ensure_grad();
    for (auto& g : p.grad) g += self.grad[0];
  });
}

Tensor mean_all(const Tensor& x) {
  const double n = static_cast<double>(x.size());
  double s = 0.0;
  for (double v : x.values()) s += v;
  return make_result("mean_all", {1}, {s / n}, {x}, [n](Node& self) {
    Node& p = *self.parents[0];
    if (!p.requires_grad) return;
    p.ensure_grad();
    for (auto& g : p.grad) g += self.grad[0] / n;
  });
}

Tensor sum_axis(const Tensor& x, std::size_t axis) {
  require_2d("sum_axis", x);
  if (axis > 1) throw InvalidShapeError("sum_axis: axis must be 0 or 1 for " + shape_string(x.shape()));
  const std::size_t n = x.rows(), k = x.cols();
  const auto& xv = node_of(x).values;
  std::vector<double> out(axis == 0 ? k : n, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < k; ++j) out[axis == 0 ? j : i] += xv[i * k + j];
  Shape shape{out.size()};
  return make_result("sum_axis", std::move(shape), std::move(out), {x}, [n, k, axis](Node& self) {
    Node& p = *self.parents[0];
    if (!p.requires_grad) return;
    p.ensure_grad();
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < k; ++j) p.grad[i * k + j] += self.grad[axis == 0 ? j : i];
  });
}

Tensor concat(const std::vector<Tensor>& xs) {
  if (xs.empty()) throw InvalidShapeError("concat: no inputs");
  const std::size_t n = xs.front().rows();
  std::vector<std::size_t> widths;
  std::size_t total = 0;
  for (const auto& x : xs) {
    require_2d("concat", x);
    if (x.rows() != n) {
      throw InvalidShapeError("concat: shape mismatch " + shape_string(xs.front().shape()) +
                              " vs " + shape_string(x.shape()));
    }
    widths.push_back(x.cols());
    total += x.cols();
  }
  std::vector<double> out(n * total);
  std::size_t offset = 0;
  for (std::size_t t = 0; t < xs.size(); ++t) {
    const auto& xv = node_of(xs[t]).values;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < widths[t]; ++j) out[i * total + offset + j] = xv[i * widths[t] + j];
    offset += widths[t];
  }
  return make_result("concat", {n, total}, std::move(out), xs, [n, total, widths](Node& self) {
    std::size_t off = 0;
    for (std::size_t t = 0; t < self.parents.size(); ++t) {
      Node& p = *self.parents[t];
      if (p.requires_grad) {
        p.ensure_grad();
        for (std::size_t i = 0; i < n; ++i)
          for (std::size_t j = 0; j < widths[t]; ++j)
            p.grad[i * widths[t] + j] += self.grad[i * total + off + j];
      }
      off += widths[t];
    }
  });
}

Tensor gather_rows(const Tensor& x, std::span<const std::size_t> index) {
  require_2d("gather_rows", x);
  const std::size_t n = x.rows(), k = x.cols();
  if (index.size() != n) {
    throw InvalidShapeError("gather_rows: " + std::to_string(index.size()) +
                            " indices for shape " + shape_string(x.shape()));
  }
  std::vector<std::size_t> idx(index.begin(), index.end());
  const auto& xv = node_of(x).values;
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (idx[i] >= k) throw ContractViolation("gather_rows: index out of range");
    out[i] = xv[i * k + idx[i]];
  }
  return make_result("gather_rows", {n}, std::move(out), {x}, [k, idx](Node& self) {
    Node& p = *self.parents[0];
    if (!p.requires_grad) return;
    p.ensure_grad();
    for (std::size_t i = 0; i < idx.size(); ++i) p.grad[i * k + idx[i]] += self.grad[i];
  });
}

Tensor detach(const Tensor& x) {
  auto node = std::make_shared<Node>();
  node->shape = x.shape();
  node->values.assign(x.values().begin(), x.values().end());
  node->op = "detach";
  return TensorAccess::wrap(std::move(node));
}

void backward(const Tensor& root) {
  Node& r = node_of(root);
  if (r.values.size() != 1) {
    throw ContractViolation("backward: root must be scalar, got " + shape_string(r.shape));
  }
  if (!r.requires_grad) return;

  // Iterative post-order DFS gives a topological order.
  std::vector<Node*> order;
  std::unordered_set<Node*> visited;
  std::vector<std::pair<Node*, std::size_t>> stack{{&r, 0}};
  visited.insert(&r);
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node* parent = node->parents[next++].get();
      if (parent->requires_grad && visited.insert(parent).second) stack.emplace_back(parent, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  // Interior grads are per-sweep scratch; leaves accumulate across sweeps.
  for (Node* n : order) {
    if (!n->parents.empty()) n->grad.assign(n->values.size(), 0.0);
  }
  r.ensure_grad();
  r.grad[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (n->backward_fn) {
      n->backward_fn(*n);
      ++n->backward_visits;
    }
  }
}

}  // namespace tjaidl
