#include "aio/ops.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace aio {

namespace kernel {

double dot(const double* a, const double* b, int n) {
  double acc = 0.0;
  for (int i = 0; i < n; ++i) acc += a[i] * b[i];
  return acc;
}

void affine(const double* W, const double* b, const double* x, int m, int n,
            double* out) {
  for (int o = 0; o < m; ++o) {
    double acc = dot(W + static_cast<size_t>(o) * n, x, n);
    out[o] = b ? acc + b[o] : acc;
  }
}

void layer_norm(const double* x, const double* gain, const double* bias,
                double eps, int n, double* out) {
  double mean = 0.0;
  for (int i = 0; i < n; ++i) mean += x[i];
  mean /= n;
  double var = 0.0;
  for (int i = 0; i < n; ++i) {
    double d = x[i] - mean;
    var += d * d;
  }
  var /= n;
  double inv = 1.0 / std::sqrt(var + eps);
  for (int i = 0; i < n; ++i) {
    out[i] = gain[i] * ((x[i] - mean) * inv) + bias[i];
  }
}

void softmax(const double* x, int n, double* out) {
  double m = -std::numeric_limits<double>::infinity();
  for (int i = 0; i < n; ++i) m = std::max(m, x[i]);
  double sum = 0.0;
  for (int i = 0; i < n; ++i) {
    out[i] = std::exp(x[i] - m);
    sum += out[i];
  }
  double inv = 1.0 / sum;
  for (int i = 0; i < n; ++i) out[i] *= inv;
}

double sigmoid(double s) { return 1.0 / (1.0 + std::exp(-s)); }

namespace {
constexpr double kInvSqrt2 = 0.70710678118654752440;
constexpr double kInvSqrt2Pi = 0.39894228040143267794;
}  // namespace

double gelu(double x) { return 0.5 * x * (1.0 + std::erf(x * kInvSqrt2)); }

double gelu_grad(double x) {
  double cdf = 0.5 * (1.0 + std::erf(x * kInvSqrt2));
  double pdf = kInvSqrt2Pi * std::exp(-0.5 * x * x);
  return cdf + x * pdf;
}

double activation(Activation act, double x) {
  return act == Activation::kGelu ? gelu(x) : x;
}

double activation_grad(Activation act, double x) {
  return act == Activation::kGelu ? gelu_grad(x) : 1.0;
}

}  // namespace kernel

Tensor affine(const Tensor& W, const Tensor& x, const Tensor& b) {
  if (W.rank() != 2 || x.rank() != 1 || b.rank() != 1) {
    throw std::invalid_argument("affine: expects W [m x n], x [n], b [m]");
  }
  int m = W.dim(0), n = W.dim(1);
  if (x.dim(0) != n || b.dim(0) != m) {
    throw std::invalid_argument("affine: shape mismatch, W " + W.shape_string() +
                                " x " + x.shape_string() + " b " +
                                b.shape_string());
  }
  Tensor y({m});
  kernel::affine(W.data(), b.data(), x.data(), m, n, y.data());
  return y;
}

Tensor linear_rows(const Tensor& X, const Tensor& W, const Tensor* b) {
  if (X.rank() != 2 || W.rank() != 2) {
    throw std::invalid_argument("linear_rows: expects matrices");
  }
  int r = X.dim(0), n = X.dim(1), m = W.dim(0);
  if (W.dim(1) != n || (b && (b->rank() != 1 || b->dim(0) != m))) {
    throw std::invalid_argument("linear_rows: shape mismatch, X " +
                                X.shape_string() + " W " + W.shape_string());
  }
  Tensor y({r, m});
  for (int i = 0; i < r; ++i) {
    kernel::affine(W.data(), b ? b->data() : nullptr,
                   X.data() + static_cast<size_t>(i) * n, m, n,
                   y.data() + static_cast<size_t>(i) * m);
  }
  return y;
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias,
                  double eps) {
  if (x.rank() != 1 || !x.same_shape(gain) || !x.same_shape(bias)) {
    throw std::invalid_argument("layer_norm: expects equal-length vectors");
  }
  Tensor y({x.dim(0)});
  kernel::layer_norm(x.data(), gain.data(), bias.data(), eps, x.dim(0),
                     y.data());
  return y;
}

Tensor softmax(const Tensor& v) {
  if (v.rank() != 1) throw std::invalid_argument("softmax: expects a vector");
  bool any_finite = false;
  for (int64_t i = 0; i < v.numel(); ++i) {
    if (v[i] != -std::numeric_limits<double>::infinity()) {
      any_finite = true;
      break;
    }
  }
  if (!any_finite) {
    throw std::invalid_argument("softmax: all entries are -inf");
  }
  Tensor y({v.dim(0)});
  kernel::softmax(v.data(), v.dim(0), y.data());
  return y;
}

double sigmoid(double s) { return kernel::sigmoid(s); }

Tensor sigmoid(const Tensor& s) {
  Tensor y(s.dims());
  for (int64_t i = 0; i < s.numel(); ++i) y[i] = kernel::sigmoid(s[i]);
  return y;
}

Tensor feed_forward(const Tensor& x, const Tensor& w1, const Tensor& b1,
                    const Tensor& w2, const Tensor& b2, Activation act) {
  Tensor h = affine(w1, x, b1);
  for (int64_t i = 0; i < h.numel(); ++i) h[i] = kernel::activation(act, h[i]);
  return affine(w2, h, b2);
}

double log_sum_exp(const double* x, int n) {
  double m = -std::numeric_limits<double>::infinity();
  for (int i = 0; i < n; ++i) m = std::max(m, x[i]);
  if (m == -std::numeric_limits<double>::infinity()) return m;
  double sum = 0.0;
  for (int i = 0; i < n; ++i) sum += std::exp(x[i] - m);
  return m + std::log(sum);
}

double log_sum_exp2(double a, double b) {
  double x[2] = {a, b};
  return log_sum_exp(x, 2);
}

}  // namespace aio
