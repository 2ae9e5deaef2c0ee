#include "aio/tensor.hpp"

#include <algorithm>
#include <stdexcept>

namespace aio {

namespace {

int64_t product(const std::vector<int>& dims) {
  if (dims.empty()) {
    throw std::invalid_argument("tensor: rank 0 not supported");
  }
  int64_t n = 1;
  for (int d : dims) {
    if (d <= 0) throw std::invalid_argument("tensor: dims must be positive");
    n *= d;
  }
  return n;
}

}  // namespace

Tensor::Tensor(std::vector<int> dims) : dims_(std::move(dims)) {
  v_.assign(static_cast<size_t>(product(dims_)), 0.0);
}

Tensor::Tensor(std::vector<int> dims, std::vector<double> values)
    : dims_(std::move(dims)), v_(std::move(values)) {
  if (product(dims_) != static_cast<int64_t>(v_.size())) {
    throw std::invalid_argument("tensor: value count does not match dims");
  }
}

Tensor Tensor::full(std::vector<int> dims, double value) {
  Tensor t(std::move(dims));
  t.fill(value);
  return t;
}

void Tensor::fill(double value) { std::fill(v_.begin(), v_.end(), value); }

std::string Tensor::shape_string() const {
  std::string s = "[";
  for (size_t i = 0; i < dims_.size(); ++i) {
    if (i) s += "x";
    s += std::to_string(dims_[i]);
  }
  return s + "]";
}

void check_same_shape(const Tensor& a, const Tensor& b, const char* where) {
  if (!a.same_shape(b)) {
    throw std::invalid_argument(std::string(where) + ": shape mismatch " +
                                a.shape_string() + " vs " + b.shape_string());
  }
}

}  // namespace aio
