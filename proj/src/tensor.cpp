#include "gacl/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <unordered_set>

namespace gacl {

int64_t shape_numel(const Shape& s) {
  int64_t n = 1;
  for (int64_t d : s) n *= d;
  return n;
}

std::string shape_str(const Shape& s) {
  std::string out = "(";
  for (size_t i = 0; i < s.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(s[i]);
  }
  out += ")";
  return out;
}

namespace {

thread_local bool g_grad_enabled = true;

void check_shape_valid(const Shape& s) {
  for (int64_t d : s) {
    if (d <= 0) throw ShapeError("tensor dimension must be positive, got " + shape_str(s));
  }
}

void check_finite(const std::vector<double>& v, const char* op) {
  for (double x : v) {
    if (!std::isfinite(x)) {
      throw NumericError(std::string("non-finite value produced by op '") + op + "'");
    }
  }
}

std::shared_ptr<TensorNode> make_leaf(Shape shape, std::vector<double> value, bool requires_grad) {
  check_shape_valid(shape);
  if (static_cast<int64_t>(value.size()) != shape_numel(shape)) {
    throw ShapeError("value size does not match shape " + shape_str(shape));
  }
  check_finite(value, requires_grad ? "parameter" : "constant");
  auto n = std::make_shared<TensorNode>();
  n->shape = std::move(shape);
  n->value = std::move(value);
  n->requires_grad = requires_grad;
  return n;
}

Tensor make_op(const char* name, Shape shape, std::vector<double> value,
               std::initializer_list<Tensor> inputs, BackpropFn fn) {
  if (static_cast<int64_t>(value.size()) != shape_numel(shape)) {
    throw ShapeError(std::string("internal: op '") + name + "' produced mismatched value size");
  }
  check_finite(value, name);
  auto n = std::make_shared<TensorNode>();
  n->shape = std::move(shape);
  n->value = std::move(value);
  bool rg = false;
  if (g_grad_enabled) {
    for (const Tensor& t : inputs) rg = rg || t.requires_grad();
  }
  if (rg) {
    n->requires_grad = true;
    n->parents.reserve(inputs.size());
    for (const Tensor& t : inputs) n->parents.push_back(t.node_shared());
    n->backprop = std::move(fn);
  }
  return Tensor::wrap(std::move(n));
}

}  // namespace

Tensor Tensor::constant(Shape shape, std::vector<double> value) {
  return Tensor(make_leaf(std::move(shape), std::move(value), false));
}

Tensor Tensor::scalar(double v) { return constant({}, {v}); }

Tensor Tensor::zeros(Shape shape) {
  int64_t n = shape_numel(shape);
  return constant(std::move(shape), std::vector<double>(static_cast<size_t>(n), 0.0));
}

Tensor Tensor::parameter(Shape shape, std::vector<double> value) {
  return Tensor(make_leaf(std::move(shape), std::move(value), true));
}

double Tensor::item() const {
  if (numel() != 1) throw ShapeError("item() requires a single-element tensor, got " + shape_str(shape()));
  return node_->value[0];
}

double Tensor::at(int64_t r, int64_t c) const {
  return node_->value[static_cast<size_t>(r * dim(1) + c)];
}

std::span<double> Tensor::mutable_values() {
  if (!node_->is_leaf()) throw ValidationError("mutable_values() is leaf-only");
  return node_->value;
}

void Tensor::accumulate_grad(std::span<const double> g) {
  if (static_cast<int64_t>(g.size()) != numel()) throw ShapeError("gradient size mismatch");
  if (node_->grad.empty()) node_->grad.assign(static_cast<size_t>(numel()), 0.0);
  for (size_t i = 0; i < g.size(); ++i) node_->grad[i] += g[i];
}

void Tensor::zero_grad() {
  node_->grad.clear();
  node_->grad.shrink_to_fit();
}

NoGradGuard::NoGradGuard() : prev_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = prev_; }

bool grad_enabled() { return g_grad_enabled; }

std::vector<double>& GradAccessor::at(TensorNode* node) {
  auto it = grads_.find(node);
  if (it == grads_.end()) {
    it = grads_.emplace(node, std::vector<double>(node->value.size(), 0.0)).first;
  }
  return it->second;
}

// ---------------------------------------------------------------------------
// ops
// ---------------------------------------------------------------------------

namespace {

// (n,k)x(k,m) with rank promotion bookkeeping
struct MatDims {
  int64_t n, k, m;
  bool a_vec, b_vec;
};

MatDims matmul_dims(const Tensor& a, const Tensor& b) {
  if (a.rank() < 1 || a.rank() > 2 || b.rank() < 1 || b.rank() > 2) {
    throw ShapeError("matmul supports rank 1/2 operands, got " + shape_str(a.shape()) + " x " +
                     shape_str(b.shape()));
  }
  MatDims d{};
  d.a_vec = a.rank() == 1;
  d.b_vec = b.rank() == 1;
  d.n = d.a_vec ? 1 : a.dim(0);
  int64_t ka = d.a_vec ? a.dim(0) : a.dim(1);
  int64_t kb = d.b_vec ? b.dim(0) : b.dim(0);
  d.m = d.b_vec ? 1 : b.dim(1);
  if (ka != kb) {
    throw ShapeError("matmul inner dimension mismatch: " + shape_str(a.shape()) + " x " +
                     shape_str(b.shape()));
  }
  d.k = ka;
  return d;
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  MatDims d = matmul_dims(a, b);
  std::vector<double> out(static_cast<size_t>(d.n * d.m), 0.0);
  auto av = a.values();
  auto bv = b.values();
  for (int64_t i = 0; i < d.n; ++i) {
    for (int64_t k = 0; k < d.k; ++k) {
      const double aik = av[static_cast<size_t>(i * d.k + k)];
      if (aik == 0.0) continue;
      const size_t boff = static_cast<size_t>(k * d.m);
      const size_t ooff = static_cast<size_t>(i * d.m);
      for (int64_t j = 0; j < d.m; ++j) out[ooff + j] += aik * bv[boff + j];
    }
  }
  Shape shape;
  if (!d.a_vec) shape.push_back(d.n);
  if (!d.b_vec) shape.push_back(d.m);
  return make_op("matmul", std::move(shape), std::move(out), {a, b},
                 [d](const TensorNode& self, const std::vector<double>& g, GradAccessor& acc) {
                   TensorNode* pa = self.parents[0].get();
                   TensorNode* pb = self.parents[1].get();
                   if (pa->requires_grad) {
                     auto& ga = acc.at(pa);
                     for (int64_t i = 0; i < d.n; ++i)
                       for (int64_t j = 0; j < d.m; ++j) {
                         const double gij = g[static_cast<size_t>(i * d.m + j)];
                         if (gij == 0.0) continue;
                         for (int64_t k = 0; k < d.k; ++k)
                           ga[static_cast<size_t>(i * d.k + k)] +=
                               gij * pb->value[static_cast<size_t>(k * d.m + j)];
                       }
                   }
                   if (pb->requires_grad) {
                     auto& gb = acc.at(pb);
                     for (int64_t i = 0; i < d.n; ++i)
                       for (int64_t k = 0; k < d.k; ++k) {
                         const double aik = pa->value[static_cast<size_t>(i * d.k + k)];
                         if (aik == 0.0) continue;
                         for (int64_t j = 0; j < d.m; ++j)
                           gb[static_cast<size_t>(k * d.m + j)] +=
                               aik * g[static_cast<size_t>(i * d.m + j)];
                       }
                   }
                 });
}

Tensor transpose(const Tensor& a) {
  if (a.rank() != 2) throw ShapeError("transpose requires rank 2, got " + shape_str(a.shape()));
  const int64_t r = a.dim(0), c = a.dim(1);
  std::vector<double> out(static_cast<size_t>(r * c));
  auto av = a.values();
  for (int64_t i = 0; i < r; ++i)
    for (int64_t j = 0; j < c; ++j) out[static_cast<size_t>(j * r + i)] = av[static_cast<size_t>(i * c + j)];
  return make_op("transpose", {c, r}, std::move(out), {a},
                 [r, c](const TensorNode& self, const std::vector<double>& g, GradAccessor& acc) {
                   TensorNode* pa = self.parents[0].get();
                   if (!pa->requires_grad) return;
                   auto& ga = acc.at(pa);
                   for (int64_t i = 0; i < r; ++i)
                     for (int64_t j = 0; j < c; ++j)
                       ga[static_cast<size_t>(i * c + j)] += g[static_cast<size_t>(j * r + i)];
                 });
}

namespace {

enum class BroadcastKind { Same, ScalarA, ScalarB, RowA, RowB };

// Same-shape, rank-0 against anything, or rank-1 against the rows of rank-2.
BroadcastKind broadcast_kind(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() == b.shape()) return BroadcastKind::Same;
  if (a.rank() == 0) return BroadcastKind::ScalarA;
  if (b.rank() == 0) return BroadcastKind::ScalarB;
  if (a.rank() == 2 && b.rank() == 1 && a.dim(1) == b.dim(0)) return BroadcastKind::RowB;
  if (a.rank() == 1 && b.rank() == 2 && a.dim(0) == b.dim(1)) return BroadcastKind::RowA;
  throw ShapeError(std::string(op) + ": incompatible shapes " + shape_str(a.shape()) + " vs " +
                   shape_str(b.shape()));
}

template <typename Fwd>
std::vector<double> broadcast_forward(const Tensor& a, const Tensor& b, BroadcastKind k, Fwd f) {
  auto av = a.values();
  auto bv = b.values();
  const Tensor& big = (k == BroadcastKind::ScalarA || k == BroadcastKind::RowA) ? b : a;
  std::vector<double> out(static_cast<size_t>(big.numel()));
  switch (k) {
    case BroadcastKind::Same:
      for (size_t i = 0; i < out.size(); ++i) out[i] = f(av[i], bv[i]);
      break;
    case BroadcastKind::ScalarA:
      for (size_t i = 0; i < out.size(); ++i) out[i] = f(av[0], bv[i]);
      break;
    case BroadcastKind::ScalarB:
      for (size_t i = 0; i < out.size(); ++i) out[i] = f(av[i], bv[0]);
      break;
    case BroadcastKind::RowB: {
      const size_t c = static_cast<size_t>(b.numel());
      for (size_t i = 0; i < out.size(); ++i) out[i] = f(av[i], bv[i % c]);
      break;
    }
    case BroadcastKind::RowA: {
      const size_t c = static_cast<size_t>(a.numel());
      for (size_t i = 0; i < out.size(); ++i) out[i] = f(av[i % c], bv[i]);
      break;
    }
  }
  return out;
}

// Accumulate gout (shaped like the large operand) into a gradient buffer for
// the operand indicated by `which_a`, applying per-element weight w(i).
template <typename W>
void broadcast_backward(TensorNode* p, bool p_is_a, BroadcastKind k, const std::vector<double>& g,
                        GradAccessor& acc, W weight) {
  if (!p->requires_grad) return;
  auto& gp = acc.at(p);
  const bool p_is_small = (p_is_a && (k == BroadcastKind::ScalarA || k == BroadcastKind::RowA)) ||
                          (!p_is_a && (k == BroadcastKind::ScalarB || k == BroadcastKind::RowB));
  if (!p_is_small) {
    for (size_t i = 0; i < g.size(); ++i) gp[i] += weight(i) * g[i];
  } else if (p->numel() == 1 && (k == BroadcastKind::ScalarA || k == BroadcastKind::ScalarB)) {
    for (size_t i = 0; i < g.size(); ++i) gp[0] += weight(i) * g[i];
  } else {
    const size_t c = p->value.size();
    for (size_t i = 0; i < g.size(); ++i) gp[i % c] += weight(i) * g[i];
  }
}

const Shape& broadcast_out_shape(const Tensor& a, const Tensor& b, BroadcastKind k) {
  return (k == BroadcastKind::ScalarA || k == BroadcastKind::RowA) ? b.shape() : a.shape();
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  BroadcastKind k = broadcast_kind(a, b, "add");
  auto out = broadcast_forward(a, b, k, [](double x, double y) { return x + y; });
  return make_op("add", broadcast_out_shape(a, b, k), std::move(out), {a, b},
                 [k](const TensorNode& self, const std::vector<double>& g, GradAccessor& acc) {
                   auto one = [](size_t) { return 1.0; };
                   broadcast_backward(self.parents[0].get(), true, k, g, acc, one);
                   broadcast_backward(self.parents[1].get(), false, k, g, acc, one);
                 });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  BroadcastKind k = broadcast_kind(a, b, "sub");
  auto out = broadcast_forward(a, b, k, [](double x, double y) { return x - y; });
  return make_op("sub", broadcast_out_shape(a, b, k), std::move(out), {a, b},
                 [k](const TensorNode& self, const std::vector<double>& g, GradAccessor& acc) {
                   broadcast_backward(self.parents[0].get(), true, k, g, acc, [](size_t) { return 1.0; });
                   broadcast_backward(self.parents[1].get(), false, k, g, acc, [](size_t) { return -1.0; });
                 });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  BroadcastKind k = broadcast_kind(a, b, "mul");
  auto out = broadcast_forward(a, b, k, [](double x, double y) { return x * y; });
  return make_op("mul", broadcast_out_shape(a, b, k), std::move(out), {a, b},
                 [k](const TensorNode& self, const std::vector<double>& g, GradAccessor& acc) {
                   TensorNode* pa = self.parents[0].get();
                   TensorNode* pb = self.parents[1].get();
                   // d/da = b at the broadcast position, and vice versa; the
                   // modulo collapses scalar/row operands and is identity otherwise
                   auto bval = [pb](size_t i) { return pb->value[i % pb->value.size()]; };
                   auto aval = [pa](size_t i) { return pa->value[i % pa->value.size()]; };
                   broadcast_backward(pa, true, k, g, acc, bval);
                   broadcast_backward(pb, false, k, g, acc, aval);
                 });
}

Tensor scale(const Tensor& a, double c) {
  if (!std::isfinite(c)) throw NumericError("scale: non-finite factor");
  std::vector<double> out(a.values().begin(), a.values().end());
  for (double& x : out) x *= c;
  return make_op("scale", a.shape(), std::move(out), {a},
                 [c](const TensorNode& self, const std::vector<double>& g, GradAccessor& acc) {
                   TensorNode* pa = self.parents[0].get();
                   if (!pa->requires_grad) return;
                   auto& ga = acc.at(pa);
                   for (size_t i = 0; i < g.size(); ++i) ga[i] += c * g[i];
                 });
}

Tensor concat(std::span<const Tensor> parts) {
  if (parts.empty()) throw ShapeError("concat: no inputs");
  const int64_t rank = parts[0].rank();
  if (rank != 1 && rank != 2) throw ShapeError("concat supports rank 1/2 inputs");
  const int64_t rows = rank == 2 ? parts[0].dim(0) : 1;
  int64_t total_cols = 0;
  std::vector<int64_t> cols(parts.size());
  for (size_t p = 0; p < parts.size(); ++p) {
    if (parts[p].rank() != rank || (rank == 2 && parts[p].dim(0) != rows)) {
      throw ShapeError("concat: inputs must agree on leading dimensions");
    }
    cols[p] = rank == 2 ? parts[p].dim(1) : parts[p].dim(0);
    total_cols += cols[p];
  }
  std::vector<double> out(static_cast<size_t>(rows * total_cols));
  int64_t off = 0;
  for (size_t p = 0; p < parts.size(); ++p) {
    auto v = parts[p].values();
    for (int64_t i = 0; i < rows; ++i)
      for (int64_t j = 0; j < cols[p]; ++j)
        out[static_cast<size_t>(i * total_cols + off + j)] = v[static_cast<size_t>(i * cols[p] + j)];
    off += cols[p];
  }
  Shape shape = rank == 2 ? Shape{rows, total_cols} : Shape{total_cols};
  auto n = std::make_shared<TensorNode>();
  n->shape = std::move(shape);
  n->value = std::move(out);
  check_finite(n->value, "concat");
  bool rg = false;
  if (g_grad_enabled)
    for (const Tensor& t : parts) rg = rg || t.requires_grad();
  if (rg) {
    n->requires_grad = true;
    for (const Tensor& t : parts) n->parents.push_back(t.node_shared());
    n->backprop = [rows, cols, total_cols](const TensorNode& self, const std::vector<double>& g,
                                           GradAccessor& acc) {
      int64_t off2 = 0;
      for (size_t p = 0; p < self.parents.size(); ++p) {
        TensorNode* pp = self.parents[p].get();
        if (pp->requires_grad) {
          auto& gp = acc.at(pp);
          for (int64_t i = 0; i < rows; ++i)
            for (int64_t j = 0; j < cols[p]; ++j)
              gp[static_cast<size_t>(i * cols[p] + j)] +=
                  g[static_cast<size_t>(i * total_cols + off2 + j)];
        }
        off2 += cols[p];
      }
    };
  }
  return Tensor::wrap(std::move(n));
}

Tensor concat(const Tensor& a, const Tensor& b) {
  Tensor parts[2] = {a, b};
  return concat(std::span<const Tensor>(parts, 2));
}

Tensor select(const Tensor& x, int64_t i) {
  if (x.rank() < 1) throw ShapeError("select requires rank >= 1");
  const int64_t n = x.dim(0);
  if (i < 0 || i >= n) {
    throw ValidationError("select: index " + std::to_string(i) + " out of range [0," +
                          std::to_string(n) + ")");
  }
  const int64_t stride = x.numel() / n;
  auto v = x.values();
  std::vector<double> out(v.begin() + i * stride, v.begin() + (i + 1) * stride);
  Shape shape(x.shape().begin() + 1, x.shape().end());
  return make_op("select", std::move(shape), std::move(out), {x},
                 [i, stride](const TensorNode& self, const std::vector<double>& g, GradAccessor& acc) {
                   TensorNode* px = self.parents[0].get();
                   if (!px->requires_grad) return;
                   auto& gx = acc.at(px);
                   const size_t off = static_cast<size_t>(i * stride);
                   for (size_t j = 0; j < g.size(); ++j) gx[off + j] += g[j];
                 });
}

Tensor stack_rows(std::span<const Tensor> rows) {
  if (rows.empty()) throw ShapeError("stack_rows: no inputs");
  const Shape& inner = rows[0].shape();
  if (inner.size() > 1) throw ShapeError("stack_rows supports rank 0/1 items");
  const int64_t stride = rows[0].numel();
  std::vector<double> out;
  out.reserve(static_cast<size_t>(stride) * rows.size());
  for (const Tensor& r : rows) {
    if (r.shape() != inner) throw ShapeError("stack_rows: items must share a shape");
    auto v = r.values();
    out.insert(out.end(), v.begin(), v.end());
  }
  Shape shape{static_cast<int64_t>(rows.size())};
  shape.insert(shape.end(), inner.begin(), inner.end());
  auto n = std::make_shared<TensorNode>();
  n->shape = std::move(shape);
  n->value = std::move(out);
  bool rg = false;
  if (g_grad_enabled)
    for (const Tensor& t : rows) rg = rg || t.requires_grad();
  if (rg) {
    n->requires_grad = true;
    for (const Tensor& t : rows) n->parents.push_back(t.node_shared());
    n->backprop = [stride](const TensorNode& self, const std::vector<double>& g, GradAccessor& acc) {
      for (size_t p = 0; p < self.parents.size(); ++p) {
        TensorNode* pp = self.parents[p].get();
        if (!pp->requires_grad) continue;
        auto& gp = acc.at(pp);
        const size_t off = p * static_cast<size_t>(stride);
        for (size_t j = 0; j < gp.size(); ++j) gp[j] += g[off + j];
      }
    };
  }
  return Tensor::wrap(std::move(n));
}

Tensor sum(const Tensor& x) {
  double s = 0.0;
  for (double v : x.values()) s += v;
  return make_op("sum", {}, {s}, {x},
                 [](const TensorNode& self, const std::vector<double>& g, GradAccessor& acc) {
                   TensorNode* px = self.parents[0].get();
                   if (!px->requires_grad) return;
                   auto& gx = acc.at(px);
                   for (double& v : gx) v += g[0];
                 });
}

Tensor mean(const Tensor& x) {
  const double n = static_cast<double>(x.numel());
  double s = 0.0;
  for (double v : x.values()) s += v;
  return make_op("mean", {}, {s / n}, {x},
                 [n](const TensorNode& self, const std::vector<double>& g, GradAccessor& acc) {
                   TensorNode* px = self.parents[0].get();
                   if (!px->requires_grad) return;
                   auto& gx = acc.at(px);
                   const double gi = g[0] / n;
                   for (double& v : gx) v += gi;
                 });
}

namespace {

double sigmoid_stable(double x) {
  if (x >= 0) {
    return 1.0 / (1.0 + std::exp(-x));
  }
  const double e = std::exp(x);
  return e / (1.0 + e);
}

template <typename F, typename DFromY>
Tensor unary_from_output(const char* name, const Tensor& x, F f, DFromY dy) {
  std::vector<double> out(static_cast<size_t>(x.numel()));
  auto v = x.values();
  for (size_t i = 0; i < out.size(); ++i) out[i] = f(v[i]);
  return make_op(name, x.shape(), std::move(out), {x},
                 [dy](const TensorNode& self, const std::vector<double>& g, GradAccessor& acc) {
                   TensorNode* px = self.parents[0].get();
                   if (!px->requires_grad) return;
                   auto& gx = acc.at(px);
                   for (size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * dy(self.value[i], px->value[i]);
                 });
}

}  // namespace

Tensor sigmoid(const Tensor& x) {
  return unary_from_output("sigmoid", x, sigmoid_stable,
                           [](double y, double) { return y * (1.0 - y); });
}

Tensor tanh_op(const Tensor& x) {
  return unary_from_output("tanh", x, [](double v) { return std::tanh(v); },
                           [](double y, double) { return 1.0 - y * y; });
}

Tensor relu(const Tensor& x) {
  return unary_from_output("relu", x, [](double v) { return v > 0 ? v : 0.0; },
                           [](double, double v) { return v > 0 ? 1.0 : 0.0; });
}

Tensor prelu(const Tensor& x, const Tensor& slope) {
  if (slope.numel() != 1) throw ShapeError("prelu slope must be a single element");
  const double a = slope.values()[0];
  std::vector<double> out(static_cast<size_t>(x.numel()));
  auto v = x.values();
  for (size_t i = 0; i < out.size(); ++i) out[i] = v[i] > 0 ? v[i] : a * v[i];
  return make_op("prelu", x.shape(), std::move(out), {x, slope},
                 [a](const TensorNode& self, const std::vector<double>& g, GradAccessor& acc) {
                   TensorNode* px = self.parents[0].get();
                   TensorNode* ps = self.parents[1].get();
                   if (px->requires_grad) {
                     auto& gx = acc.at(px);
                     for (size_t i = 0; i < g.size(); ++i)
                       gx[i] += g[i] * (px->value[i] > 0 ? 1.0 : a);
                   }
                   if (ps->requires_grad) {
                     auto& gs = acc.at(ps);
                     double acc_s = 0.0;
                     for (size_t i = 0; i < g.size(); ++i)
                       if (px->value[i] <= 0) acc_s += g[i] * px->value[i];
                     gs[0] += acc_s;
                   }
                 });
}

namespace {

struct RowSpec {
  int64_t rows, cols;
};

RowSpec last_dim_rows(const Tensor& x, const char* op) {
  if (x.rank() == 1) return {1, x.dim(0)};
  if (x.rank() == 2) return {x.dim(0), x.dim(1)};
  throw ShapeError(std::string(op) + " requires rank 1/2, got " + shape_str(x.shape()));
}

}  // namespace

Tensor softmax(const Tensor& x) {
  RowSpec rs = last_dim_rows(x, "softmax");
  std::vector<double> out(static_cast<size_t>(x.numel()));
  auto v = x.values();
  for (int64_t r = 0; r < rs.rows; ++r) {
    const size_t off = static_cast<size_t>(r * rs.cols);
    double mx = v[off];
    for (int64_t j = 1; j < rs.cols; ++j) mx = std::max(mx, v[off + j]);
    double s = 0.0;
    for (int64_t j = 0; j < rs.cols; ++j) {
      out[off + j] = std::exp(v[off + j] - mx);
      s += out[off + j];
    }
    for (int64_t j = 0; j < rs.cols; ++j) out[off + j] /= s;
  }
  return make_op("softmax", x.shape(), std::move(out), {x},
                 [rs](const TensorNode& self, const std::vector<double>& g, GradAccessor& acc) {
                   TensorNode* px = self.parents[0].get();
                   if (!px->requires_grad) return;
                   auto& gx = acc.at(px);
                   for (int64_t r = 0; r < rs.rows; ++r) {
                     const size_t off = static_cast<size_t>(r * rs.cols);
                     double dot = 0.0;
                     for (int64_t j = 0; j < rs.cols; ++j) dot += g[off + j] * self.value[off + j];
                     for (int64_t j = 0; j < rs.cols; ++j)
                       gx[off + j] += self.value[off + j] * (g[off + j] - dot);
                   }
                 });
}

Tensor layer_norm(const Tensor& x, double eps) {
  RowSpec rs = last_dim_rows(x, "layer_norm");
  const double n = static_cast<double>(rs.cols);
  std::vector<double> out(static_cast<size_t>(x.numel()));
  std::vector<double> inv_std(static_cast<size_t>(rs.rows));
  auto v = x.values();
  for (int64_t r = 0; r < rs.rows; ++r) {
    const size_t off = static_cast<size_t>(r * rs.cols);
    double mu = 0.0;
    for (int64_t j = 0; j < rs.cols; ++j) mu += v[off + j];
    mu /= n;
    double var = 0.0;
    for (int64_t j = 0; j < rs.cols; ++j) {
      const double c = v[off + j] - mu;
      var += c * c;
    }
    var /= n;
    const double inv = 1.0 / std::sqrt(var + eps);
    inv_std[static_cast<size_t>(r)] = inv;
    for (int64_t j = 0; j < rs.cols; ++j) out[off + j] = (v[off + j] - mu) * inv;
  }
  return make_op(
      "layer_norm", x.shape(), std::move(out), {x},
      [rs, n, inv_std](const TensorNode& self, const std::vector<double>& g, GradAccessor& acc) {
        TensorNode* px = self.parents[0].get();
        if (!px->requires_grad) return;
        auto& gx = acc.at(px);
        for (int64_t r = 0; r < rs.rows; ++r) {
          const size_t off = static_cast<size_t>(r * rs.cols);
          double gmean = 0.0, gydot = 0.0;
          for (int64_t j = 0; j < rs.cols; ++j) {
            gmean += g[off + j];
            gydot += g[off + j] * self.value[off + j];
          }
          gmean /= n;
          gydot /= n;
          const double inv = inv_std[static_cast<size_t>(r)];
          for (int64_t j = 0; j < rs.cols; ++j)
            gx[off + j] += inv * (g[off + j] - gmean - self.value[off + j] * gydot);
        }
      });
}

Tensor l2_normalize(const Tensor& x, double eps) {
  RowSpec rs = last_dim_rows(x, "l2_normalize");
  std::vector<double> out(static_cast<size_t>(x.numel()));
  std::vector<double> norms(static_cast<size_t>(rs.rows));
  auto v = x.values();
  for (int64_t r = 0; r < rs.rows; ++r) {
    const size_t off = static_cast<size_t>(r * rs.cols);
    double ss = 0.0;
    for (int64_t j = 0; j < rs.cols; ++j) ss += v[off + j] * v[off + j];
    const double s = std::sqrt(ss + eps * eps);  // smooth zero-vector floor
    norms[static_cast<size_t>(r)] = s;
    for (int64_t j = 0; j < rs.cols; ++j) out[off + j] = v[off + j] / s;
  }
  return make_op("l2_normalize", x.shape(), std::move(out), {x},
                 [rs, norms](const TensorNode& self, const std::vector<double>& g, GradAccessor& acc) {
                   TensorNode* px = self.parents[0].get();
                   if (!px->requires_grad) return;
                   auto& gx = acc.at(px);
                   for (int64_t r = 0; r < rs.rows; ++r) {
                     const size_t off = static_cast<size_t>(r * rs.cols);
                     const double s = norms[static_cast<size_t>(r)];
                     double dot = 0.0;
                     for (int64_t j = 0; j < rs.cols; ++j) dot += g[off + j] * px->value[off + j];
                     for (int64_t j = 0; j < rs.cols; ++j)
                       gx[off + j] += g[off + j] / s - px->value[off + j] * dot / (s * s * s);
                   }
                 });
}

Tensor sin_op(const Tensor& x) {
  return unary_from_output("sin", x, [](double v) { return std::sin(v); },
                           [](double, double v) { return std::cos(v); });
}

Tensor cos_op(const Tensor& x) {
  return unary_from_output("cos", x, [](double v) { return std::cos(v); },
                           [](double, double v) { return -std::sin(v); });
}

Tensor embedding_lookup(const Tensor& table, int64_t id) {
  if (table.rank() != 2) throw ShapeError("embedding_lookup requires a rank-2 table");
  return select(table, id);
}

// ---------------------------------------------------------------------------
// backward
// ---------------------------------------------------------------------------

void backward_impl(const Tensor& loss, GradSink* sink) {
  TensorNode* root = loss.node();
  if (!root) throw ValidationError("backward: undefined tensor");
  if (root->numel() != 1) {
    throw ValidationError("backward requires a scalar loss, got " + shape_str(root->shape));
  }
  if (!root->requires_grad) {
    throw ValidationError("backward: loss does not depend on any trainable parameter");
  }
  if (root->consumed) {
    throw ValidationError("backward already ran for this loss; re-run the forward pass first");
  }

  // iterative post-order DFS over requires_grad parents
  std::vector<TensorNode*> order;
  std::unordered_set<TensorNode*> visited;
  std::vector<std::pair<TensorNode*, size_t>> stack;
  stack.emplace_back(root, 0);
  visited.insert(root);
  while (!stack.empty()) {
    auto& [node, idx] = stack.back();
    if (idx < node->parents.size()) {
      TensorNode* p = node->parents[idx++].get();
      if (p->requires_grad && !visited.count(p)) {
        visited.insert(p);
        stack.emplace_back(p, 0);
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  GradAccessor acc;
  acc.at(root)[0] = 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    TensorNode* node = *it;
    if (!node->backprop) continue;
    auto git = acc.grads_.find(node);
    if (git == acc.grads_.end()) continue;
    node->backprop(*node, git->second, acc);
  }

  // flush leaf gradients, then sever tape edges for the visited subgraph
  for (auto& [node, g] : acc.grads_) {
    if (!node->is_leaf()) continue;
    if (sink) {
      auto it = sink->grads_.find(node);
      if (it == sink->grads_.end()) {
        sink->grads_.emplace(node, std::move(g));
      } else {
        for (size_t i = 0; i < it->second.size(); ++i) it->second[i] += g[i];
      }
    } else {
      if (node->grad.empty()) node->grad.assign(node->value.size(), 0.0);
      for (size_t i = 0; i < g.size(); ++i) node->grad[i] += g[i];
    }
  }
  for (TensorNode* node : order) {
    if (node->backprop) {
      node->backprop = nullptr;
      node->parents.clear();
      node->consumed = true;
    }
  }
  root->consumed = true;
}

void backward(const Tensor& loss) { backward_impl(loss, nullptr); }
void backward(const Tensor& loss, GradSink& sink) { backward_impl(loss, &sink); }

void GradSink::merge_into_leaves() {
  for (auto& [node, g] : grads_) {
    if (node->grad.empty()) node->grad.assign(node->value.size(), 0.0);
    for (size_t i = 0; i < g.size(); ++i) node->grad[i] += g[i];
  }
  grads_.clear();
}

}  // namespace gacl
