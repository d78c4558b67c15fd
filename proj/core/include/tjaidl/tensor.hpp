#pragma once

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace tjaidl {

using Shape = std::vector<std::size_t>;

std::size_t shape_size(const Shape& shape);
std::string shape_string(const Shape& shape);

/// Probabilities are clamped to [kProbEps, 1 - kProbEps] before any log.
inline constexpr double kProbEps = 1e-12;

namespace detail {
struct Node;
struct TensorAccess;
}  // namespace detail

/// Handle to a node of the compute graph. Values are evaluated eagerly when
/// an op is applied; gradients are filled in by backward(). Copies share the
/// underlying node.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor from_values(Shape shape, std::vector<double> values,
                            bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);
  /// Row-major 2-D literal, e.g. Tensor::matrix({{1, 2}, {3, 4}}).
  static Tensor matrix(std::initializer_list<std::initializer_list<double>> rows,
                       bool requires_grad = false);

  bool defined() const noexcept { return node_ != nullptr; }
  const Shape& shape() const;
  std::size_t size() const;
  std::size_t rows() const;  // 2-D only
  std::size_t cols() const;  // 2-D only
  std::size_t ndim() const { return shape().size(); }

  std::span<const double> values() const;
  /// In-place write access; only meaningful on leaves (parameters, inputs).
  std::span<double> mutable_values();
  double item() const;
  double at(std::size_t r, std::size_t c) const;

  bool requires_grad() const;
  bool has_grad() const;
  /// Empty when no gradient has been accumulated.
  std::span<const double> grad() const;
  std::span<double> mutable_grad();
  void zero_grad();

  bool is_leaf() const;
  const char* op() const;
  std::size_t num_parents() const;
  /// How many times backward() has executed this node's backward rule.
  std::size_t backward_visits() const;

  bool same_node(const Tensor& other) const noexcept { return node_ == other.node_; }

  /// Deep copy of values into a fresh leaf.
  Tensor clone(bool requires_grad) const;

 private:
  explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}
  detail::Node& node() const;

  std::shared_ptr<detail::Node> node_;
  friend struct detail::TensorAccess;
};

/// Disables graph recording on this thread for its lifetime.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

bool grad_enabled();

// Differentiable ops. All 2-D ops take row-major matrices.
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
/// x is n x k, bias has k entries (shape {k} or {1, k}).
Tensor add_bias(const Tensor& x, const Tensor& bias);
Tensor scale(const Tensor& x, double factor);
Tensor add_scalar(const Tensor& x, double value);
Tensor relu(const Tensor& x);
Tensor sigmoid(const Tensor& x);
Tensor softmax_rows(const Tensor& x);
/// Natural log; inputs must be strictly positive.
Tensor log(const Tensor& x);
Tensor square(const Tensor& x);
/// Gradient passes where lo <= x <= hi, is zero elsewhere.
Tensor clamp(const Tensor& x, double lo, double hi);
Tensor mean_all(const Tensor& x);
Tensor sum_all(const Tensor& x);
/// axis 0 sums over rows (result {cols}); axis 1 over columns (result {rows}).
Tensor sum_axis(const Tensor& x, std::size_t axis);
/// Concatenates 2-D tensors with equal row count along columns.
Tensor concat(const std::vector<Tensor>& xs);
/// out[i] = x[i, index[i]].
Tensor gather_rows(const Tensor& x, std::span<const std::size_t> index);
/// Same values, no history: gradients stop here.
Tensor detach(const Tensor& x);

/// Reverse-mode sweep from a scalar root. Gradients accumulate into every
/// ancestor that requires grad.
void backward(const Tensor& root);

}  // namespace tjaidl
