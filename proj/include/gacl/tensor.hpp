#pragma once

#include <functional>
#include <memory>
#include <span>
#include <unordered_map>
#include <vector>

#include "gacl/common.hpp"

namespace gacl {

using Shape = std::vector<int64_t>;

int64_t shape_numel(const Shape& s);
std::string shape_str(const Shape& s);

struct TensorNode;

/// Accumulates gradients into per-node buffers during a backward traversal.
class GradAccessor {
 public:
  std::vector<double>& at(TensorNode* node);

 private:
  friend void backward_impl(const class Tensor&, class GradSink*);
  std::unordered_map<TensorNode*, std::vector<double>> grads_;
};

using BackpropFn =
    std::function<void(const TensorNode& self, const std::vector<double>& gout, GradAccessor& acc)>;

/// One node of the reverse-mode tape. Ops create nodes linked to their
/// inputs; backward() walks the links, then severs them.
struct TensorNode {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;  // leaves only; empty until first backward reaches it
  bool requires_grad = false;
  bool consumed = false;  // loss node already used by a backward pass
  std::vector<std::shared_ptr<TensorNode>> parents;
  BackpropFn backprop;

  int64_t numel() const { return static_cast<int64_t>(value.size()); }
  bool is_leaf() const { return !backprop; }
};

/// Value-semantic handle to a tape node.
class Tensor {
 public:
  Tensor() = default;

  static Tensor constant(Shape shape, std::vector<double> value);
  static Tensor scalar(double v);
  static Tensor zeros(Shape shape);
  /// Trainable leaf.
  static Tensor parameter(Shape shape, std::vector<double> value);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  int64_t rank() const { return static_cast<int64_t>(node_->shape.size()); }
  int64_t dim(int i) const { return node_->shape[static_cast<size_t>(i)]; }
  int64_t numel() const { return node_->numel(); }
  bool requires_grad() const { return node_->requires_grad; }

  // Spans alias the node's storage; binding them off an expiring temporary
  // that holds the last reference would dangle, so rvalue access is a
  // compile error.
  std::span<const double> values() const& { return node_->value; }
  std::span<const double> values() const&& = delete;
  double item() const;
  double at(int64_t i) const { return node_->value[static_cast<size_t>(i)]; }
  double at(int64_t r, int64_t c) const;

  /// Leaf-only mutable storage (parameter updates, finite-difference probes).
  std::span<double> mutable_values();

  bool has_grad() const { return !node_->grad.empty(); }
  std::span<const double> grad() const& { return node_->grad; }
  std::span<const double> grad() const&& = delete;
  void accumulate_grad(std::span<const double> g);
  void zero_grad();

  TensorNode* node() const { return node_.get(); }
  const std::shared_ptr<TensorNode>& node_shared() const { return node_; }

  static Tensor wrap(std::shared_ptr<TensorNode> n) { return Tensor(std::move(n)); }

 private:
  explicit Tensor(std::shared_ptr<TensorNode> n) : node_(std::move(n)) {}
  std::shared_ptr<TensorNode> node_;
};

/// While alive, ops do not record tape nodes (pure inference).
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool prev_;
};

bool grad_enabled();

// ---- primitive ops (forward + registered backward) ----

/// Matrix product with numpy-style rank promotion: 1-D lhs acts as a row,
/// 1-D rhs as a column; promoted dims are dropped from the result, so
/// vector-vector yields a rank-0 scalar.
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);

// Elementwise; rank-0 operands broadcast to anything, a rank-1 operand
// broadcasts across the rows of a rank-2 operand.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double c);

/// Concatenation along the last dimension.
Tensor concat(std::span<const Tensor> parts);
Tensor concat(const Tensor& a, const Tensor& b);

/// Select index i along the first dimension (matrix -> row, vector -> scalar).
Tensor select(const Tensor& x, int64_t i);
/// Stack k same-shape tensors into a new leading dimension.
Tensor stack_rows(std::span<const Tensor> rows);

Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);

Tensor sigmoid(const Tensor& x);
Tensor tanh_op(const Tensor& x);
Tensor relu(const Tensor& x);
/// PReLU with a learnable rank-0 slope.
Tensor prelu(const Tensor& x, const Tensor& slope);
Tensor softmax(const Tensor& x);                       // last dim
Tensor layer_norm(const Tensor& x, double eps = 1e-12);  // last dim, no affine
Tensor l2_normalize(const Tensor& x, double eps = 1e-12);
Tensor sin_op(const Tensor& x);
Tensor cos_op(const Tensor& x);

/// Row lookup into an embedding table; gradients scatter back into the row.
Tensor embedding_lookup(const Tensor& table, int64_t id);

/// Collects leaf gradients of one backward pass instead of writing them into
/// the leaves; lets concurrent workers be merged in a deterministic order.
class GradSink {
 public:
  void merge_into_leaves();
  const std::unordered_map<TensorNode*, std::vector<double>>& grads() const { return grads_; }

 private:
  friend void backward_impl(const Tensor&, GradSink*);
  std::unordered_map<TensorNode*, std::vector<double>> grads_;
};

///// Reverse pass from a scalar loss: populates (or accumulates) leaf
/// gradients, then clears the tape edges it visited.
void backward(const Tensor& loss);
void backward(const Tensor& loss, GradSink& sink);

}  // namespace gacl
