#pragma once

#include <vector>

#include "aio/tensor.hpp"

namespace aio {

enum class Activation { kGelu, kIdentity };

// Raw row kernels. The batched training path and the per-cell decoding path
// both funnel through these, which keeps their arithmetic bit-identical
// (same accumulation order everywhere).
namespace kernel {

double dot(const double* a, const double* b, int n);

// out[o] = dot(W[o,:], x) + b[o]; b may be null.
void affine(const double* W, const double* b, const double* x, int m, int n,
            double* out);

void layer_norm(const double* x, const double* gain, const double* bias,
                double eps, int n, double* out);

// Max-subtracted softmax. Caller has already rejected the all -inf case.
void softmax(const double* x, int n, double* out);

double sigmoid(double s);
double gelu(double x);
double gelu_grad(double x);
double activation(Activation act, double x);
double activation_grad(Activation act, double x);

}  // namespace kernel

// y = W x + b. W is [m x n], x is [n], b is [m].
Tensor affine(const Tensor& W, const Tensor& x, const Tensor& b);

// Per-row y = X W^T + b over X [r x n], W [m x n], b [m] (b optional).
Tensor linear_rows(const Tensor& X, const Tensor& W, const Tensor* b);

// Normalizes a vector to zero mean, unit variance (population variance, eps
// inside the square root), then applies gain and bias elementwise.
Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias,
                  double eps);

// Vector softmax with max subtraction. Rejects an all -inf input.
Tensor softmax(const Tensor& v);

double sigmoid(double s);
Tensor sigmoid(const Tensor& s);

// W2 act(W1 x + b1) + b2 on a single vector.
Tensor feed_forward(const Tensor& x, const Tensor& w1, const Tensor& b1,
                    const Tensor& w2, const Tensor& b2, Activation act);

// log(sum_i exp(x_i)) with -inf treated as an absent term.
double log_sum_exp(const double* x, int n);
double log_sum_exp2(double a, double b);

}  // namespace aio
