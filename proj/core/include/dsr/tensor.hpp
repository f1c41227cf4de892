#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "dsr/common.hpp"
#include "dsr/rng.hpp"

namespace dsr {

// Numeric mode. Storage is always double; in F32 mode every op output (and
// every optimizer update) is rounded through IEEE binary32, which reproduces
// single-precision forward results while keeping one code path. F64 is the
// verification mode used by gradient checks and exact-identity tests.
enum class Precision { F32, F64 };

void set_precision(Precision p);
Precision precision();

bool grad_enabled();

// RAII guard that disables graph construction (evaluation-only forwards).
struct NoGradGuard {
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool prev_;
};

struct Node;

struct TensorImpl {
  Shape shape;
  std::vector<double> data;
  std::vector<double> grad;  // allocated lazily, same length as data
  bool requires_grad = false;
  std::shared_ptr<Node> node;  // set on op results that track gradients
};

// Value handle with reverse-mode autodiff. Copies share storage.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::shared_ptr<TensorImpl> impl) : impl_(std::move(impl)) {}

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor from_data(Shape shape, std::vector<double> data, bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);
  static Tensor randn(Shape shape, Rng& rng, double stddev = 1.0, bool requires_grad = false);
  static Tensor identity(int n);

  bool defined() const { return impl_ != nullptr; }
  const Shape& shape() const;
  int ndim() const { return static_cast<int>(shape().size()); }
  int dim(int i) const;
  std::int64_t numel() const;

  bool requires_grad() const;
  void set_requires_grad(bool v);
  bool is_leaf() const;

  const std::vector<double>& data() const;
  std::vector<double>& mutable_data();  // for leaves (optimizer, finite differences)
  double value() const;                 // scalar tensors only
  double at(const std::vector<int>& idx) const;

  bool has_grad() const;
  const std::vector<double>& grad() const;
  void zero_grad();

  TensorImpl* impl() const { return impl_.get(); }
  const std::shared_ptr<TensorImpl>& impl_ptr() const { return impl_; }

 private:
  std::shared_ptr<TensorImpl> impl_;
};

struct Node {
  const char* op = "";
  std::vector<Tensor> inputs;
  // reads out.grad and accumulates into the inputs' grad buffers
  std::function<void(const TensorImpl&)> backward;
};

// Reverse pass from a scalar. Gradients accumulate additively; a tensor
// feeding two downstream ops receives the sum of both contributions.
void backward(const Tensor& loss);

// ---- elementwise, same shape unless stated ----
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);
Tensor neg(const Tensor& a);
Tensor add_scalar(const Tensor& a, double c);
Tensor scale(const Tensor& a, double c);
Tensor exp(const Tensor& a);
Tensor log(const Tensor& a);
Tensor sqrt(const Tensor& a);
Tensor relu(const Tensor& a);
Tensor gelu(const Tensor& a);  // exact erf form
Tensor sigmoid(const Tensor& a);
Tensor clamp01(const Tensor& a);  // clamp to [0,1]; zero gradient where clamped

// scalar-tensor second operand (explicit ops; there is no implicit broadcasting)
Tensor mul_sc(const Tensor& a, const Tensor& s);
Tensor div_sc(const Tensor& a, const Tensor& s);

// the one broadcast op: add a length-c row vector to every row of [r, c]
Tensor add_rowvec(const Tensor& m, const Tensor& v);

// ---- shape & assembly ----
Tensor matmul(const Tensor& a, const Tensor& b);   // [m,k] x [k,n]
Tensor transpose(const Tensor& a);                 // 2-D
Tensor reshape(const Tensor& a, Shape shape);
Tensor concat_rows(const std::vector<Tensor>& parts);  // 2-D, equal column counts
Tensor concat_cols(const std::vector<Tensor>& parts);  // 2-D, equal row counts
Tensor stack_rows(const std::vector<Tensor>& rows);    // 1-D parts -> [n, c]
Tensor slice_rows(const Tensor& a, int start, int count);
Tensor row(const Tensor& a, int i);            // [c]
Tensor repeat_rows(const Tensor& a, int times);  // row i -> consecutive block i

// ---- reductions ----
Tensor sum_all(const Tensor& a);
Tensor mean_rows(const Tensor& a);  // [n,c] -> [c]
Tensor sumsq(const Tensor& a);      // sum of squares -> scalar
Tensor dot(const Tensor& a, const Tensor& b);  // 1-D

// ---- nn primitives ----
// softmax along `axis` of an arbitrary-rank tensor, max-shifted for stability
Tensor softmax(const Tensor& a, int axis);
// scalar cross-entropy of a 1-D logit vector against an integer label
Tensor cross_entropy(const Tensor& logits, int label);
// last-axis layer norm with learned gain/bias (1-D or 2-D input)
Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps = 1e-5);

// ---- linear-algebra helpers for the regularizers ----
Tensor sub_identity(const Tensor& g);  // square G -> G - I
// log det of a symmetric positive definite matrix via Cholesky; throws if
// a pivot is not strictly positive
Tensor logdet_spd(const Tensor& a);

// out[q] = sum_k weights[q,k] * values[q*K + k], values [n*K, c], weights [n, K]
Tensor weighted_group_sum(const Tensor& values, const Tensor& weights);

bool all_finite(const Tensor& t);

}  // namespace dsr
