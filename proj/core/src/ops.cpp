#include <algorithm>
#include <cmath>

#include "detail.hpp"
#include "dsr/tensor.hpp"

namespace dsr {

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.ndim() != 2 || b.ndim() != 2 || a.dim(1) != b.dim(0))
    fail("matmul: incompatible shapes " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
  int m = a.dim(0), k = a.dim(1), n = b.dim(1);
  std::vector<double> out(static_cast<size_t>(m) * n, 0.0);
  const double* A = a.data().data();
  const double* B = b.data().data();
  for (int i = 0; i < m; ++i) {
    double* crow = out.data() + static_cast<size_t>(i) * n;
    for (int p = 0; p < k; ++p) {
      double av = A[static_cast<size_t>(i) * k + p];
      if (av == 0.0) continue;
      const double* brow = B + static_cast<size_t>(p) * n;
      for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
  return detail_make_result(
      {m, n}, std::move(out), "matmul", {a, b}, [a, b, m, k, n](const TensorImpl& o) {
        const double* G = o.grad.data();
        if (a.requires_grad()) {
          detail_ensure_grad(a.impl());
          const double* B = b.data().data();
          double* dA = a.impl()->grad.data();
          for (int i = 0; i < m; ++i)
            for (int p = 0; p < k; ++p) {
              const double* grow = G + static_cast<size_t>(i) * n;
              const double* brow = B + static_cast<size_t>(p) * n;
              double acc = 0.0;
              for (int j = 0; j < n; ++j) acc += grow[j] * brow[j];
              dA[static_cast<size_t>(i) * k + p] += acc;
            }
        }
        if (b.requires_grad()) {
          detail_ensure_grad(b.impl());
          const double* A = a.data().data();
          double* dB = b.impl()->grad.data();
          for (int i = 0; i < m; ++i) {
            const double* grow = G + static_cast<size_t>(i) * n;
            for (int p = 0; p < k; ++p) {
              double av = A[static_cast<size_t>(i) * k + p];
              if (av == 0.0) continue;
              double* brow = dB + static_cast<size_t>(p) * n;
              for (int j = 0; j < n; ++j) brow[j] += av * grow[j];
            }
          }
        }
      });
}

Tensor transpose(const Tensor& a) {
  if (a.ndim() != 2) fail("transpose: expected 2-D tensor, got " + shape_str(a.shape()));
  int r = a.dim(0), c = a.dim(1);
  std::vector<double> out(a.data().size());
  for (int i = 0; i < r; ++i)
    for (int j = 0; j < c; ++j)
      out[static_cast<size_t>(j) * r + i] = a.data()[static_cast<size_t>(i) * c + j];
  return detail_make_result({c, r}, std::move(out), "transpose", {a},
                            [a, r, c](const TensorImpl& o) {
                              if (!a.requires_grad()) return;
                              detail_ensure_grad(a.impl());
                              for (int i = 0; i < r; ++i)
                                for (int j = 0; j < c; ++j)
                                  a.impl()->grad[static_cast<size_t>(i) * c + j] +=
                                      o.grad[static_cast<size_t>(j) * r + i];
                            });
}

Tensor reshape(const Tensor& a, Shape shape) {
  if (shape_numel(shape) != a.numel())
    fail("reshape: cannot view " + shape_str(a.shape()) + " as " + shape_str(shape));
  std::vector<double> out = a.data();
  return detail_make_result(std::move(shape), std::move(out), "reshape", {a},
                            [a](const TensorImpl& o) {
                              if (!a.requires_grad()) return;
                              detail_ensure_grad(a.impl());
                              for (size_t i = 0; i < o.grad.size(); ++i)
                                a.impl()->grad[i] += o.grad[i];
                            });
}

Tensor concat_rows(const std::vector<Tensor>& parts) {
  if (parts.empty()) fail("concat_rows: no tensors given");
  int c = -1, total = 0;
  for (const Tensor& t : parts) {
    if (t.ndim() != 2) fail("concat_rows: expected 2-D parts, got " + shape_str(t.shape()));
    if (c < 0) c = t.dim(1);
    if (t.dim(1) != c)
      fail("concat_rows: column mismatch, " + std::to_string(c) + " vs " + shape_str(t.shape()));
    total += t.dim(0);
  }
  std::vector<double> out;
  out.reserve(static_cast<size_t>(total) * c);
  for (const Tensor& t : parts) out.insert(out.end(), t.data().begin(), t.data().end());
  std::vector<Tensor> inputs = parts;
  return detail_make_result({total, c}, std::move(out), "concat_rows", inputs,
                            [inputs](const TensorImpl& o) {
                              size_t off = 0;
                              for (const Tensor& t : inputs) {
                                size_t n = t.data().size();
                                if (t.requires_grad()) {
                                  detail_ensure_grad(t.impl());
                                  for (size_t i = 0; i < n; ++i)
                                    t.impl()->grad[i] += o.grad[off + i];
                                }
                                off += n;
                              }
                            });
}

Tensor concat_cols(const std::vector<Tensor>& parts) {
  if (parts.empty()) fail("concat_cols: no tensors given");
  int r = -1, total = 0;
  for (const Tensor& t : parts) {
    if (t.ndim() != 2) fail("concat_cols: expected 2-D parts, got " + shape_str(t.shape()));
    if (r < 0) r = t.dim(0);
    if (t.dim(0) != r)
      fail("concat_cols: row mismatch, " + std::to_string(r) + " vs " + shape_str(t.shape()));
    total += t.dim(1);
  }
  std::vector<double> out(static_cast<size_t>(r) * total);
  int off = 0;
  for (const Tensor& t : parts) {
    int c = t.dim(1);
    for (int i = 0; i < r; ++i)
      for (int j = 0; j < c; ++j)
        out[static_cast<size_t>(i) * total + off + j] = t.data()[static_cast<size_t>(i) * c + j];
    off += c;
  }
  std::vector<Tensor> inputs = parts;
  return detail_make_result({r, total}, std::move(out), "concat_cols", inputs,
                            [inputs, r, total](const TensorImpl& o) {
                              int off = 0;
                              for (const Tensor& t : inputs) {
                                int c = t.dim(1);
                                if (t.requires_grad()) {
                                  detail_ensure_grad(t.impl());
                                  for (int i = 0; i < r; ++i)
                                    for (int j = 0; j < c; ++j)
                                      t.impl()->grad[static_cast<size_t>(i) * c + j] +=
                                          o.grad[static_cast<size_t>(i) * total + off + j];
                                }
                                off += c;
                              }
                            });
}

Tensor stack_rows(const std::vector<Tensor>& rows) {
  if (rows.empty()) fail("stack_rows: no tensors given");
  int c = -1;
  for (const Tensor& t : rows) {
    if (t.ndim() != 1) fail("stack_rows: expected 1-D parts, got " + shape_str(t.shape()));
    if (c < 0) c = t.dim(0);
    if (t.dim(0) != c)
      fail("stack_rows: length mismatch, " + std::to_string(c) + " vs " + shape_str(t.shape()));
  }
  int n = static_cast<int>(rows.size());
  std::vector<double> out;
  out.reserve(static_cast<size_t>(n) * c);
  for (const Tensor& t : rows) out.insert(out.end(), t.data().begin(), t.data().end());
  std::vector<Tensor> inputs = rows;
  return detail_make_result({n, c}, std::move(out), "stack_rows", inputs,
                            [inputs, c](const TensorImpl& o) {
                              for (size_t i = 0; i < inputs.size(); ++i) {
                                const Tensor& t = inputs[i];
                                if (!t.requires_grad()) continue;
                                detail_ensure_grad(t.impl());
                                for (int j = 0; j < c; ++j)
                                  t.impl()->grad[j] += o.grad[i * c + j];
                              }
                            });
}

Tensor slice_rows(const Tensor& a, int start, int count) {
  if (a.ndim() != 2) fail("slice_rows: expected 2-D tensor, got " + shape_str(a.shape()));
  if (start < 0 || count < 0 || start + count > a.dim(0))
    fail("slice_rows: range [" + std::to_string(start) + ", " + std::to_string(start + count) +
         ") out of bounds for " + shape_str(a.shape()));
  int c = a.dim(1);
  std::vector<double> out(a.data().begin() + static_cast<size_t>(start) * c,
                          a.data().begin() + static_cast<size_t>(start + count) * c);
  return detail_make_result({count, c}, std::move(out), "slice_rows", {a},
                            [a, start, c](const TensorImpl& o) {
                              if (!a.requires_grad()) return;
                              detail_ensure_grad(a.impl());
                              size_t base = static_cast<size_t>(start) * c;
                              for (size_t i = 0; i < o.grad.size(); ++i)
                                a.impl()->grad[base + i] += o.grad[i];
                            });
}

Tensor row(const Tensor& a, int i) {
  if (a.ndim() != 2) fail("row: expected 2-D tensor, got " + shape_str(a.shape()));
  if (i < 0 || i >= a.dim(0))
    fail("row: index " + std::to_string(i) + " out of range for " + shape_str(a.shape()));
  int c = a.dim(1);
  std::vector<double> out(a.data().begin() + static_cast<size_t>(i) * c,
                          a.data().begin() + static_cast<size_t>(i + 1) * c);
  return detail_make_result({c}, std::move(out), "row", {a}, [a, i, c](const TensorImpl& o) {
    if (!a.requires_grad()) return;
    detail_ensure_grad(a.impl());
    size_t base = static_cast<size_t>(i) * c;
    for (int j = 0; j < c; ++j) a.impl()->grad[base + j] += o.grad[j];
  });
}

Tensor repeat_rows(const Tensor& a, int times) {
  if (a.ndim() != 2) fail("repeat_rows: expected 2-D tensor, got " + shape_str(a.shape()));
  if (times <= 0) fail("repeat_rows: times must be positive");
  int r = a.dim(0), c = a.dim(1);
  std::vector<double> out(static_cast<size_t>(r) * times * c);
  for (int i = 0; i < r; ++i)
    for (int t = 0; t < times; ++t)
      std::copy(a.data().begin() + static_cast<size_t>(i) * c,
                a.data().begin() + static_cast<size_t>(i + 1) * c,
                out.begin() + (static_cast<size_t>(i) * times + t) * c);
  return detail_make_result({r * times, c}, std::move(out), "repeat_rows", {a},
                            [a, r, c, times](const TensorImpl& o) {
                              if (!a.requires_grad()) return;
                              detail_ensure_grad(a.impl());
                              for (int i = 0; i < r; ++i)
                                for (int t = 0; t < times; ++t) {
                                  size_t src = (static_cast<size_t>(i) * times + t) * c;
                                  size_t dst = static_cast<size_t>(i) * c;
                                  for (int j = 0; j < c; ++j)
                                    a.impl()->grad[dst + j] += o.grad[src + j];
                                }
                            });
}

Tensor sum_all(const Tensor& a) {
  double acc = 0.0;
  for (double x : a.data()) acc += x;
  return detail_make_result({1}, {acc}, "sum_all", {a}, [a](const TensorImpl& o) {
    if (!a.requires_grad()) return;
    detail_ensure_grad(a.impl());
    for (double& g : a.impl()->grad) g += o.grad[0];
  });
}

Tensor mean_rows(const Tensor& a) {
  if (a.ndim() != 2) fail("mean_rows: expected 2-D tensor, got " + shape_str(a.shape()));
  int r = a.dim(0), c = a.dim(1);
  if (r == 0) fail("mean_rows: empty tensor");
  std::vector<double> out(c, 0.0);
  for (int i = 0; i < r; ++i)
    for (int j = 0; j < c; ++j) out[j] += a.data()[static_cast<size_t>(i) * c + j];
  for (int j = 0; j < c; ++j) out[j] /= r;
  return detail_make_result({c}, std::move(out), "mean_rows", {a},
                            [a, r, c](const TensorImpl& o) {
                              if (!a.requires_grad()) return;
                              detail_ensure_grad(a.impl());
                              for (int i = 0; i < r; ++i)
                                for (int j = 0; j < c; ++j)
                                  a.impl()->grad[static_cast<size_t>(i) * c + j] += o.grad[j] / r;
                            });
}

Tensor sumsq(const Tensor& a) {
  double acc = 0.0;
  for (double x : a.data()) acc += x * x;
  return detail_make_result({1}, {acc}, "sumsq", {a}, [a](const TensorImpl& o) {
    if (!a.requires_grad()) return;
    detail_ensure_grad(a.impl());
    for (size_t i = 0; i < a.data().size(); ++i)
      a.impl()->grad[i] += 2.0 * a.data()[i] * o.grad[0];
  });
}

Tensor dot(const Tensor& a, const Tensor& b) {
  if (a.ndim() != 1 || b.ndim() != 1 || a.dim(0) != b.dim(0))
    fail("dot: expected equal-length vectors, got " + shape_str(a.shape()) + " and " +
         shape_str(b.shape()));
  double acc = 0.0;
  for (size_t i = 0; i < a.data().size(); ++i) acc += a.data()[i] * b.data()[i];
  return detail_make_result({1}, {acc}, "dot", {a, b}, [a, b](const TensorImpl& o) {
    if (a.requires_grad()) {
      detail_ensure_grad(a.impl());
      for (size_t i = 0; i < a.data().size(); ++i)
        a.impl()->grad[i] += o.grad[0] * b.data()[i];
    }
    if (b.requires_grad()) {
      detail_ensure_grad(b.impl());
      for (size_t i = 0; i < b.data().size(); ++i)
        b.impl()->grad[i] += o.grad[0] * a.data()[i];
    }
  });
}

Tensor softmax(const Tensor& a, int axis) {
  const Shape& s = a.shape();
  if (axis < 0 || axis >= static_cast<int>(s.size()))
    fail("softmax: axis " + std::to_string(axis) + " out of range for " + shape_str(s));
  std::int64_t len = s[axis];
  std::int64_t inner = 1;
  for (size_t i = axis + 1; i < s.size(); ++i) inner *= s[i];
  std::int64_t outer = a.numel() / (len * inner);
  std::vector<double> out(a.data().size());
  const double* x = a.data().data();
  for (std::int64_t o = 0; o < outer; ++o)
    for (std::int64_t in = 0; in < inner; ++in) {
      std::int64_t base = o * len * inner + in;
      double mx = x[base];
      for (std::int64_t k = 1; k < len; ++k) mx = std::max(mx, x[base + k * inner]);
      double z = 0.0;
      for (std::int64_t k = 0; k < len; ++k) {
        double e = std::exp(x[base + k * inner] - mx);
        out[base + k * inner] = e;
        z += e;
      }
      for (std::int64_t k = 0; k < len; ++k) out[base + k * inner] /= z;
    }
  return detail_make_result(
      s, std::move(out), "softmax", {a}, [a, len, inner, outer](const TensorImpl& o) {
        if (!a.requires_grad()) return;
        detail_ensure_grad(a.impl());
        const double* y = o.data.data();
        const double* g = o.grad.data();
        double* dx = a.impl()->grad.data();
        for (std::int64_t ou = 0; ou < outer; ++ou)
          for (std::int64_t in = 0; in < inner; ++in) {
            std::int64_t base = ou * len * inner + in;
            double acc = 0.0;
            for (std::int64_t k = 0; k < len; ++k)
              acc += g[base + k * inner] * y[base + k * inner];
            for (std::int64_t k = 0; k < len; ++k) {
              std::int64_t idx = base + k * inner;
              dx[idx] += y[idx] * (g[idx] - acc);
            }
          }
      });
}

Tensor cross_entropy(const Tensor& logits, int label) {
  if (logits.ndim() != 1)
    fail("cross_entropy: expected 1-D logits, got " + shape_str(logits.shape()));
  int n = logits.dim(0);
  if (label < 0 || label >= n)
    fail("cross_entropy: label " + std::to_string(label) + " out of range for " +
         std::to_string(n) + " classes");
  const std::vector<double>& x = logits.data();
  double mx = x[0];
  for (int i = 1; i < n; ++i) mx = std::max(mx, x[i]);
  double z = 0.0;
  for (int i = 0; i < n; ++i) z += std::exp(x[i] - mx);
  double lse = mx + std::log(z);
  double loss = lse - x[label];
  return detail_make_result({1}, {loss}, "cross_entropy", {logits},
                            [logits, label, lse, n](const TensorImpl& o) {
                              if (!logits.requires_grad()) return;
                              detail_ensure_grad(logits.impl());
                              for (int i = 0; i < n; ++i) {
                                double p = std::exp(logits.data()[i] - lse);
                                double ind = (i == label) ? 1.0 : 0.0;
                                logits.impl()->grad[i] += o.grad[0] * (p - ind);
                              }
                            });
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps) {
  if (gain.ndim() != 1 || bias.ndim() != 1 || gain.dim(0) != bias.dim(0))
    fail("layer_norm: gain/bias must be equal-length vectors");
  int d = gain.dim(0);
  int rows;
  if (x.ndim() == 1 && x.dim(0) == d) {
    rows = 1;
  } else if (x.ndim() == 2 && x.dim(1) == d) {
    rows = x.dim(0);
  } else {
    fail("layer_norm: input " + shape_str(x.shape()) + " does not end in width " +
         std::to_string(d));
  }
  std::vector<double> out(x.data().size());
  std::vector<double> inv_sigma(rows), mu(rows);
  const double* xd = x.data().data();
  for (int i = 0; i < rows; ++i) {
    const double* xr = xd + static_cast<size_t>(i) * d;
    double m = 0.0;
    for (int j = 0; j < d; ++j) m += xr[j];
    m /= d;
    double v = 0.0;
    for (int j = 0; j < d; ++j) v += (xr[j] - m) * (xr[j] - m);
    v /= d;
    double is = 1.0 / std::sqrt(v + eps);
    mu[i] = m;
    inv_sigma[i] = is;
    for (int j = 0; j < d; ++j)
      out[static_cast<size_t>(i) * d + j] = (xr[j] - m) * is * gain.data()[j] + bias.data()[j];
  }
  return detail_make_result(
      x.shape(), std::move(out), "layer_norm", {x, gain, bias},
      [x, gain, bias, rows, d, mu, inv_sigma](const TensorImpl& o) {
        const double* g = o.grad.data();
        const double* xd = x.data().data();
        for (int i = 0; i < rows; ++i) {
          const double* xr = xd + static_cast<size_t>(i) * d;
          const double* gr = g + static_cast<size_t>(i) * d;
          double is = inv_sigma[i], m = mu[i];
          // dL/dxhat, plus the mean/variance terms folded in
          double sum_dxh = 0.0, sum_dxh_xh = 0.0;
          for (int j = 0; j < d; ++j) {
            double xh = (xr[j] - m) * is;
            double dxh = gr[j] * gain.data()[j];
            sum_dxh += dxh;
            sum_dxh_xh += dxh * xh;
          }
          if (x.requires_grad()) {
            detail_ensure_grad(x.impl());
            for (int j = 0; j < d; ++j) {
              double xh = (xr[j] - m) * is;
              double dxh = gr[j] * gain.data()[j];
              x.impl()->grad[static_cast<size_t>(i) * d + j] +=
                  is * (dxh - sum_dxh / d - xh * sum_dxh_xh / d);
            }
          }
          if (gain.requires_grad()) {
            detail_ensure_grad(gain.impl());
            for (int j = 0; j < d; ++j)
              gain.impl()->grad[j] += gr[j] * (xr[j] - m) * is;
          }
          if (bias.requires_grad()) {
            detail_ensure_grad(bias.impl());
            for (int j = 0; j < d; ++j) bias.impl()->grad[j] += gr[j];
          }
        }
      });
}

Tensor sub_identity(const Tensor& g) {
  if (g.ndim() != 2 || g.dim(0) != g.dim(1))
    fail("sub_identity: expected square matrix, got " + shape_str(g.shape()));
  int n = g.dim(0);
  std::vector<double> out = g.data();
  for (int i = 0; i < n; ++i) out[static_cast<size_t>(i) * n + i] -= 1.0;
  return detail_make_result(g.shape(), std::move(out), "sub_identity", {g},
                            [g](const TensorImpl& o) {
                              if (!g.requires_grad()) return;
                              detail_ensure_grad(g.impl());
                              for (size_t i = 0; i < o.grad.size(); ++i)
                                g.impl()->grad[i] += o.grad[i];
                            });
}

Tensor logdet_spd(const Tensor& a) {
  if (a.ndim() != 2 || a.dim(0) != a.dim(1))
    fail("logdet_spd: expected square matrix, got " + shape_str(a.shape()));
  int n = a.dim(0);
  // symmetrize first so single-element perturbations behave like their
  // symmetric counterparts (and so roundoff asymmetry cannot break Cholesky)
  std::vector<double> L(static_cast<size_t>(n) * n, 0.0);
  const std::vector<double>& ad = a.data();
  auto sym = [&](int i, int j) {
    return 0.5 * (ad[static_cast<size_t>(i) * n + j] + ad[static_cast<size_t>(j) * n + i]);
  };
  double logdet = 0.0;
  for (int j = 0; j < n; ++j) {
    for (int i = j; i < n; ++i) {
      double s = sym(i, j);
      for (int p = 0; p < j; ++p)
        s -= L[static_cast<size_t>(i) * n + p] * L[static_cast<size_t>(j) * n + p];
      if (i == j) {
        if (!(s > 0.0)) fail("logdet_spd: matrix is not positive definite");
        L[static_cast<size_t>(j) * n + j] = std::sqrt(s);
        logdet += 2.0 * std::log(L[static_cast<size_t>(j) * n + j]);
      } else {
        L[static_cast<size_t>(i) * n + j] = s / L[static_cast<size_t>(j) * n + j];
      }
    }
  }
  return detail_make_result(
      {1}, {logdet}, "logdet_spd", {a}, [a, L, n](const TensorImpl& o) {
        if (!a.requires_grad()) return;
        detail_ensure_grad(a.impl());
        // inv(A) from the Cholesky factor: solve L Linv = I, then A^-1 = Linv^T Linv
        std::vector<double> Linv(static_cast<size_t>(n) * n, 0.0);
        for (int col = 0; col < n; ++col) {
          for (int i = col; i < n; ++i) {
            double s = (i == col) ? 1.0 : 0.0;
            for (int p = col; p < i; ++p)
              s -= L[static_cast<size_t>(i) * n + p] * Linv[static_cast<size_t>(p) * n + col];
            Linv[static_cast<size_t>(i) * n + col] = s / L[static_cast<size_t>(i) * n + i];
          }
        }
        for (int i = 0; i < n; ++i)
          for (int j = 0; j < n; ++j) {
            double s = 0.0;
            for (int p = std::max(i, j); p < n; ++p)
              s += Linv[static_cast<size_t>(p) * n + i] * Linv[static_cast<size_t>(p) * n + j];
            a.impl()->grad[static_cast<size_t>(i) * n + j] += o.grad[0] * s;
          }
      });
}

Tensor weighted_group_sum(const Tensor& values, const Tensor& weights) {
  if (values.ndim() != 2 || weights.ndim() != 2)
    fail("weighted_group_sum: expected 2-D values and weights");
  int n = weights.dim(0), K = weights.dim(1), c = values.dim(1);
  if (values.dim(0) != n * K)
    fail("weighted_group_sum: values rows " + std::to_string(values.dim(0)) +
         " != groups*K = " + std::to_string(n * K));
  std::vector<double> out(static_cast<size_t>(n) * c, 0.0);
  const double* V = values.data().data();
  const double* W = weights.data().data();
  for (int q = 0; q < n; ++q) {
    double* orow = out.data() + static_cast<size_t>(q) * c;
    for (int k = 0; k < K; ++k) {
      double w = W[static_cast<size_t>(q) * K + k];
      const double* vrow = V + (static_cast<size_t>(q) * K + k) * c;
      for (int j = 0; j < c; ++j) orow[j] += w * vrow[j];
    }
  }
  return detail_make_result(
      {n, c}, std::move(out), "weighted_group_sum", {values, weights},
      [values, weights, n, K, c](const TensorImpl& o) {
        const double* G = o.grad.data();
        const double* V = values.data().data();
        const double* W = weights.data().data();
        if (values.requires_grad()) {
          detail_ensure_grad(values.impl());
          double* dV = values.impl()->grad.data();
          for (int q = 0; q < n; ++q)
            for (int k = 0; k < K; ++k) {
              double w = W[static_cast<size_t>(q) * K + k];
              const double* grow = G + static_cast<size_t>(q) * c;
              double* drow = dV + (static_cast<size_t>(q) * K + k) * c;
              for (int j = 0; j < c; ++j) drow[j] += w * grow[j];
            }
        }
        if (weights.requires_grad()) {
          detail_ensure_grad(weights.impl());
          double* dW = weights.impl()->grad.data();
          for (int q = 0; q < n; ++q)
            for (int k = 0; k < K; ++k) {
              const double* grow = G + static_cast<size_t>(q) * c;
              const double* vrow = V + (static_cast<size_t>(q) * K + k) * c;
              double acc = 0.0;
              for (int j = 0; j < c; ++j) acc += grow[j] * vrow[j];
              dW[static_cast<size_t>(q) * K + k] += acc;
            }
        }
      });
}

}  // namespace dsr
