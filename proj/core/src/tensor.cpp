#include "dsr/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_set>

namespace dsr {

namespace {

Precision g_precision = Precision::F64;
thread_local bool g_grad = true;

inline void maybe_quantize(std::vector<double>& v) {
  if (g_precision == Precision::F32) {
    for (double& x : v) x = static_cast<double>(static_cast<float>(x));
  }
}

inline void ensure_grad(TensorImpl* t) {
  if (t->grad.size() != t->data.size()) t->grad.assign(t->data.size(), 0.0);
}

}  // namespace

void set_precision(Precision p) { g_precision = p; }
Precision precision() { return g_precision; }
bool grad_enabled() { return g_grad; }

NoGradGuard::NoGradGuard() : prev_(g_grad) { g_grad = false; }
NoGradGuard::~NoGradGuard() { g_grad = prev_; }

// builds the result tensor and, when gradients are live, its graph node
static Tensor make_result(Shape shape, std::vector<double> data, const char* op,
                          std::vector<Tensor> inputs,
                          std::function<void(const TensorImpl&)> bw) {
  auto impl = std::make_shared<TensorImpl>();
  if (shape_numel(shape) != static_cast<std::int64_t>(data.size()))
    fail(std::string(op) + ": internal shape/data mismatch");
  impl->shape = std::move(shape);
  impl->data = std::move(data);
  maybe_quantize(impl->data);
  if (g_grad) {
    bool need = false;
    for (const Tensor& t : inputs)
      if (t.requires_grad()) need = true;
    if (need) {
      impl->requires_grad = true;
      auto node = std::make_shared<Node>();
      node->op = op;
      node->inputs = std::move(inputs);
      node->backward = std::move(bw);
      impl->node = std::move(node);
    }
  }
  return Tensor(impl);
}

// ---- Tensor basics ----

// every tensor has rank >= 1 and strictly positive extents
static void check_shape_valid(const Shape& shape, const char* who) {
  if (shape.empty()) fail(std::string(who) + ": empty shape");
  for (int d : shape)
    if (d <= 0)
      fail(std::string(who) + ": non-positive extent in " + shape_str(shape));
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  check_shape_valid(shape, "Tensor::zeros");
  auto impl = std::make_shared<TensorImpl>();
  impl->data.assign(shape_numel(shape), 0.0);
  impl->shape = std::move(shape);
  impl->requires_grad = requires_grad;
  return Tensor(impl);
}

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  check_shape_valid(shape, "Tensor::full");
  auto impl = std::make_shared<TensorImpl>();
  impl->data.assign(shape_numel(shape), value);
  impl->shape = std::move(shape);
  impl->requires_grad = requires_grad;
  maybe_quantize(impl->data);
  return Tensor(impl);
}

Tensor Tensor::from_data(Shape shape, std::vector<double> data, bool requires_grad) {
  check_shape_valid(shape, "Tensor::from_data");
  if (shape_numel(shape) != static_cast<std::int64_t>(data.size()))
    fail("Tensor::from_data: " + std::to_string(data.size()) + " values for shape " +
         shape_str(shape));
  auto impl = std::make_shared<TensorImpl>();
  impl->shape = std::move(shape);
  impl->data = std::move(data);
  impl->requires_grad = requires_grad;
  maybe_quantize(impl->data);
  return Tensor(impl);
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  return from_data({1}, {value}, requires_grad);
}

Tensor Tensor::randn(Shape shape, Rng& rng, double stddev, bool requires_grad) {
  std::vector<double> data(shape_numel(shape));
  for (double& x : data) x = stddev * rng.normal();
  return from_data(std::move(shape), std::move(data), requires_grad);
}

Tensor Tensor::identity(int n) {
  if (n <= 0) fail("Tensor::identity: n must be positive");
  std::vector<double> data(static_cast<size_t>(n) * n, 0.0);
  for (int i = 0; i < n; ++i) data[static_cast<size_t>(i) * n + i] = 1.0;
  return from_data({n, n}, std::move(data));
}

const Shape& Tensor::shape() const {
  if (!impl_) fail("Tensor: use of undefined tensor");
  return impl_->shape;
}

int Tensor::dim(int i) const {
  const Shape& s = shape();
  if (i < 0 || i >= static_cast<int>(s.size()))
    fail("Tensor::dim: axis " + std::to_string(i) + " out of range for " + shape_str(s));
  return s[i];
}

std::int64_t Tensor::numel() const { return shape_numel(shape()); }

bool Tensor::requires_grad() const { return impl_ && impl_->requires_grad; }

void Tensor::set_requires_grad(bool v) {
  if (!impl_) fail("Tensor: use of undefined tensor");
  if (impl_->node) fail("Tensor::set_requires_grad: tensor is not a leaf");
  impl_->requires_grad = v;
}

bool Tensor::is_leaf() const { return impl_ && !impl_->node; }

const std::vector<double>& Tensor::data() const {
  if (!impl_) fail("Tensor: use of undefined tensor");
  return impl_->data;
}

std::vector<double>& Tensor::mutable_data() {
  if (!impl_) fail("Tensor: use of undefined tensor");
  if (impl_->node) fail("Tensor::mutable_data: refusing to mutate a non-leaf tensor");
  return impl_->data;
}

double Tensor::value() const {
  if (numel() != 1) fail("Tensor::value: tensor of shape " + shape_str(shape()) + " is not scalar");
  return data()[0];
}

double Tensor::at(const std::vector<int>& idx) const {
  const Shape& s = shape();
  if (idx.size() != s.size())
    fail("Tensor::at: " + std::to_string(idx.size()) + " indices for shape " + shape_str(s));
  std::int64_t off = 0;
  for (size_t i = 0; i < idx.size(); ++i) {
    if (idx[i] < 0 || idx[i] >= s[i])
      fail("Tensor::at: index " + std::to_string(idx[i]) + " out of range on axis " +
           std::to_string(i) + " of " + shape_str(s));
    off = off * s[i] + idx[i];
  }
  return data()[off];
}

bool Tensor::has_grad() const {
  return impl_ && impl_->grad.size() == impl_->data.size() && !impl_->data.empty();
}

const std::vector<double>& Tensor::grad() const {
  if (!has_grad()) fail("Tensor::grad: no gradient has been computed");
  return impl_->grad;
}

void Tensor::zero_grad() {
  if (!impl_) fail("Tensor: use of undefined tensor");
  if (!impl_->grad.empty()) std::fill(impl_->grad.begin(), impl_->grad.end(), 0.0);
}

// ---- reverse pass ----

void backward(const Tensor& loss) {
  if (!loss.defined()) fail("backward: undefined tensor");
  if (loss.numel() != 1) fail("backward: loss must be scalar, got " + shape_str(loss.shape()));
  if (!loss.requires_grad()) fail("backward: loss does not require grad");

  // iterative post-order DFS; order is deterministic (inputs visited in index order)
  std::vector<TensorImpl*> order;
  std::unordered_set<TensorImpl*> visited;
  struct Frame {
    TensorImpl* t;
    size_t next;
  };
  std::vector<Frame> stack;
  stack.push_back({loss.impl(), 0});
  visited.insert(loss.impl());
  while (!stack.empty()) {
    Frame& f = stack.back();
    Node* node = f.t->node.get();
    size_t n_in = node ? node->inputs.size() : 0;
    if (f.next < n_in) {
      TensorImpl* child = node->inputs[f.next++].impl();
      if (child && !visited.count(child)) {
        visited.insert(child);
        stack.push_back({child, 0});
      }
    } else {
      order.push_back(f.t);
      stack.pop_back();
    }
  }

  ensure_grad(loss.impl());
  loss.impl()->grad[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    TensorImpl* t = *it;
    if (t->node && t->grad.size() == t->data.size()) t->node->backward(*t);
  }
}

// ---- elementwise ----

static void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape())
    fail(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
         shape_str(b.shape()));
}

Tensor add(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "add");
  std::vector<double> out(a.data().size());
  for (size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] + b.data()[i];
  return make_result(a.shape(), std::move(out), "add", {a, b}, [a, b](const TensorImpl& o) {
    if (a.requires_grad()) {
      ensure_grad(a.impl());
      for (size_t i = 0; i < o.grad.size(); ++i) a.impl()->grad[i] += o.grad[i];
    }
    if (b.requires_grad()) {
      ensure_grad(b.impl());
      for (size_t i = 0; i < o.grad.size(); ++i) b.impl()->grad[i] += o.grad[i];
    }
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "sub");
  std::vector<double> out(a.data().size());
  for (size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] - b.data()[i];
  return make_result(a.shape(), std::move(out), "sub", {a, b}, [a, b](const TensorImpl& o) {
    if (a.requires_grad()) {
      ensure_grad(a.impl());
      for (size_t i = 0; i < o.grad.size(); ++i) a.impl()->grad[i] += o.grad[i];
    }
    if (b.requires_grad()) {
      ensure_grad(b.impl());
      for (size_t i = 0; i < o.grad.size(); ++i) b.impl()->grad[i] -= o.grad[i];
    }
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "mul");
  std::vector<double> out(a.data().size());
  for (size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] * b.data()[i];
  return make_result(a.shape(), std::move(out), "mul", {a, b}, [a, b](const TensorImpl& o) {
    if (a.requires_grad()) {
      ensure_grad(a.impl());
      for (size_t i = 0; i < o.grad.size(); ++i) a.impl()->grad[i] += o.grad[i] * b.data()[i];
    }
    if (b.requires_grad()) {
      ensure_grad(b.impl());
      for (size_t i = 0; i < o.grad.size(); ++i) b.impl()->grad[i] += o.grad[i] * a.data()[i];
    }
  });
}

Tensor div(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "div");
  std::vector<double> out(a.data().size());
  for (size_t i = 0; i < out.size(); ++i) {
    if (b.data()[i] == 0.0) fail("div: zero denominator at flat index " + std::to_string(i));
    out[i] = a.data()[i] / b.data()[i];
  }
  return make_result(a.shape(), std::move(out), "div", {a, b}, [a, b](const TensorImpl& o) {
    if (a.requires_grad()) {
      ensure_grad(a.impl());
      for (size_t i = 0; i < o.grad.size(); ++i) a.impl()->grad[i] += o.grad[i] / b.data()[i];
    }
    if (b.requires_grad()) {
      ensure_grad(b.impl());
      for (size_t i = 0; i < o.grad.size(); ++i) {
        double bv = b.data()[i];
        b.impl()->grad[i] -= o.grad[i] * a.data()[i] / (bv * bv);
      }
    }
  });
}

Tensor neg(const Tensor& a) { return scale(a, -1.0); }

Tensor add_scalar(const Tensor& a, double c) {
  std::vector<double> out(a.data().size());
  for (size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] + c;
  return make_result(a.shape(), std::move(out), "add_scalar", {a}, [a](const TensorImpl& o) {
    if (!a.requires_grad()) return;
    ensure_grad(a.impl());
    for (size_t i = 0; i < o.grad.size(); ++i) a.impl()->grad[i] += o.grad[i];
  });
}

Tensor scale(const Tensor& a, double c) {
  std::vector<double> out(a.data().size());
  for (size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] * c;
  return make_result(a.shape(), std::move(out), "scale", {a}, [a, c](const TensorImpl& o) {
    if (!a.requires_grad()) return;
    ensure_grad(a.impl());
    for (size_t i = 0; i < o.grad.size(); ++i) a.impl()->grad[i] += o.grad[i] * c;
  });
}

Tensor exp(const Tensor& a) {
  std::vector<double> out(a.data().size());
  for (size_t i = 0; i < out.size(); ++i) out[i] = std::exp(a.data()[i]);
  return make_result(a.shape(), std::move(out), "exp", {a}, [a](const TensorImpl& o) {
    if (!a.requires_grad()) return;
    ensure_grad(a.impl());
    for (size_t i = 0; i < o.grad.size(); ++i) a.impl()->grad[i] += o.grad[i] * o.data[i];
  });
}

Tensor log(const Tensor& a) {
  std::vector<double> out(a.data().size());
  for (size_t i = 0; i < out.size(); ++i) {
    if (a.data()[i] <= 0.0) fail("log: non-positive input at flat index " + std::to_string(i));
    out[i] = std::log(a.data()[i]);
  }
  return make_result(a.shape(), std::move(out), "log", {a}, [a](const TensorImpl& o) {
    if (!a.requires_grad()) return;
    ensure_grad(a.impl());
    for (size_t i = 0; i < o.grad.size(); ++i) a.impl()->grad[i] += o.grad[i] / a.data()[i];
  });
}

Tensor sqrt(const Tensor& a) {
  std::vector<double> out(a.data().size());
  for (size_t i = 0; i < out.size(); ++i) {
    if (a.data()[i] < 0.0) fail("sqrt: negative input at flat index " + std::to_string(i));
    out[i] = std::sqrt(a.data()[i]);
  }
  return make_result(a.shape(), std::move(out), "sqrt", {a}, [a](const TensorImpl& o) {
    if (!a.requires_grad()) return;
    ensure_grad(a.impl());
    for (size_t i = 0; i < o.grad.size(); ++i)
      a.impl()->grad[i] += o.grad[i] * 0.5 / o.data[i];
  });
}

Tensor relu(const Tensor& a) {
  std::vector<double> out(a.data().size());
  for (size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] > 0.0 ? a.data()[i] : 0.0;
  return make_result(a.shape(), std::move(out), "relu", {a}, [a](const TensorImpl& o) {
    if (!a.requires_grad()) return;
    ensure_grad(a.impl());
    for (size_t i = 0; i < o.grad.size(); ++i)
      if (a.data()[i] > 0.0) a.impl()->grad[i] += o.grad[i];
  });
}

Tensor gelu(const Tensor& a) {
  static const double inv_sqrt2 = 0.70710678118654752440;
  static const double inv_sqrt2pi = 0.39894228040143267794;
  std::vector<double> out(a.data().size());
  for (size_t i = 0; i < out.size(); ++i) {
    double x = a.data()[i];
    out[i] = 0.5 * x * (1.0 + std::erf(x * inv_sqrt2));
  }
  return make_result(a.shape(), std::move(out), "gelu", {a}, [a](const TensorImpl& o) {
    if (!a.requires_grad()) return;
    ensure_grad(a.impl());
    for (size_t i = 0; i < o.grad.size(); ++i) {
      double x = a.data()[i];
      double cdf = 0.5 * (1.0 + std::erf(x * inv_sqrt2));
      double pdf = inv_sqrt2pi * std::exp(-0.5 * x * x);
      a.impl()->grad[i] += o.grad[i] * (cdf + x * pdf);
    }
  });
}

Tensor sigmoid(const Tensor& a) {
  std::vector<double> out(a.data().size());
  for (size_t i = 0; i < out.size(); ++i) {
    double x = a.data()[i];
    if (x >= 0.0) {
      out[i] = 1.0 / (1.0 + std::exp(-x));
    } else {
      double e = std::exp(x);
      out[i] = e / (1.0 + e);
    }
  }
  return make_result(a.shape(), std::move(out), "sigmoid", {a}, [a](const TensorImpl& o) {
    if (!a.requires_grad()) return;
    ensure_grad(a.impl());
    for (size_t i = 0; i < o.grad.size(); ++i) {
      double s = o.data[i];
      a.impl()->grad[i] += o.grad[i] * s * (1.0 - s);
    }
  });
}

Tensor clamp01(const Tensor& a) {
  std::vector<double> out(a.data().size());
  for (size_t i = 0; i < out.size(); ++i) out[i] = std::min(1.0, std::max(0.0, a.data()[i]));
  return make_result(a.shape(), std::move(out), "clamp01", {a}, [a](const TensorImpl& o) {
    if (!a.requires_grad()) return;
    ensure_grad(a.impl());
    for (size_t i = 0; i < o.grad.size(); ++i) {
      double x = a.data()[i];
      if (x > 0.0 && x < 1.0) a.impl()->grad[i] += o.grad[i];
    }
  });
}

Tensor mul_sc(const Tensor& a, const Tensor& s) {
  if (s.numel() != 1) fail("mul_sc: second operand must be scalar, got " + shape_str(s.shape()));
  double sv = s.data()[0];
  std::vector<double> out(a.data().size());
  for (size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] * sv;
  return make_result(a.shape(), std::move(out), "mul_sc", {a, s}, [a, s](const TensorImpl& o) {
    double sv = s.data()[0];
    if (a.requires_grad()) {
      ensure_grad(a.impl());
      for (size_t i = 0; i < o.grad.size(); ++i) a.impl()->grad[i] += o.grad[i] * sv;
    }
    if (s.requires_grad()) {
      ensure_grad(s.impl());
      double acc = 0.0;
      for (size_t i = 0; i < o.grad.size(); ++i) acc += o.grad[i] * a.data()[i];
      s.impl()->grad[0] += acc;
    }
  });
}

Tensor div_sc(const Tensor& a, const Tensor& s) {
  if (s.numel() != 1) fail("div_sc: second operand must be scalar, got " + shape_str(s.shape()));
  double sv = s.data()[0];
  std::vector<double> out(a.data().size());
  for (size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] / sv;
  return make_result(a.shape(), std::move(out), "div_sc", {a, s}, [a, s](const TensorImpl& o) {
    double sv = s.data()[0];
    if (a.requires_grad()) {
      ensure_grad(a.impl());
      for (size_t i = 0; i < o.grad.size(); ++i) a.impl()->grad[i] += o.grad[i] / sv;
    }
    if (s.requires_grad()) {
      ensure_grad(s.impl());
      double acc = 0.0;
      for (size_t i = 0; i < o.grad.size(); ++i) acc += o.grad[i] * a.data()[i];
      s.impl()->grad[0] -= acc / (sv * sv);
    }
  });
}

Tensor add_rowvec(const Tensor& m, const Tensor& v) {
  if (m.ndim() != 2 || v.ndim() != 1 || m.dim(1) != v.dim(0))
    fail("add_rowvec: expected [r,c] + [c], got " + shape_str(m.shape()) + " + " +
         shape_str(v.shape()));
  int r = m.dim(0), c = m.dim(1);
  std::vector<double> out(m.data().size());
  for (int i = 0; i < r; ++i)
    for (int j = 0; j < c; ++j)
      out[static_cast<size_t>(i) * c + j] = m.data()[static_cast<size_t>(i) * c + j] + v.data()[j];
  return make_result(m.shape(), std::move(out), "add_rowvec", {m, v},
                     [m, v, r, c](const TensorImpl& o) {
                       if (m.requires_grad()) {
                         ensure_grad(m.impl());
                         for (size_t i = 0; i < o.grad.size(); ++i) m.impl()->grad[i] += o.grad[i];
                       }
                       if (v.requires_grad()) {
                         ensure_grad(v.impl());
                         for (int i = 0; i < r; ++i)
                           for (int j = 0; j < c; ++j)
                             v.impl()->grad[j] += o.grad[static_cast<size_t>(i) * c + j];
                       }
                     });
}

bool all_finite(const Tensor& t) {
  for (double x : t.data())
    if (!std::isfinite(x)) return false;
  return true;
}

// make_result is needed by the ops translation unit as well
Tensor detail_make_result(Shape shape, std::vector<double> data, const char* op,
                          std::vector<Tensor> inputs,
                          std::function<void(const TensorImpl&)> bw) {
  return make_result(std::move(shape), std::move(data), op, std::move(inputs), std::move(bw));
}

void detail_ensure_grad(TensorImpl* t) { ensure_grad(t); }

}  // namespace dsr
