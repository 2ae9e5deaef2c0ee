#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace aio {

// Dense row-major tensor of 64-bit reals. Everything in-memory runs on
// doubles; 32-bit floats appear only at the checkpoint and feature-file
// boundary. Rank is 1..3 in practice (vectors, matrices, lattices).
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<int> dims);
  Tensor(std::vector<int> dims, std::vector<double> values);

  static Tensor zeros(std::vector<int> dims) { return Tensor(std::move(dims)); }
  static Tensor full(std::vector<int> dims, double value);

  int rank() const { return static_cast<int>(dims_.size()); }
  int dim(int i) const { return dims_[static_cast<size_t>(i)]; }
  const std::vector<int>& dims() const { return dims_; }
  int64_t numel() const { return static_cast<int64_t>(v_.size()); }
  bool defined() const { return !dims_.empty(); }
  bool same_shape(const Tensor& other) const { return dims_ == other.dims_; }

  double* data() { return v_.data(); }
  const double* data() const { return v_.data(); }

  double& operator[](int64_t i) { return v_[static_cast<size_t>(i)]; }
  double operator[](int64_t i) const { return v_[static_cast<size_t>(i)]; }

  // Unchecked indexed access; callers validate shapes at op boundaries.
  double& operator()(int i) { return v_[static_cast<size_t>(i)]; }
  double operator()(int i) const { return v_[static_cast<size_t>(i)]; }
  double& operator()(int i, int j) {
    return v_[static_cast<size_t>(i) * dims_[1] + j];
  }
  double operator()(int i, int j) const {
    return v_[static_cast<size_t>(i) * dims_[1] + j];
  }
  double& operator()(int i, int j, int k) {
    return v_[(static_cast<size_t>(i) * dims_[1] + j) * dims_[2] + k];
  }
  double operator()(int i, int j, int k) const {
    return v_[(static_cast<size_t>(i) * dims_[1] + j) * dims_[2] + k];
  }

  void fill(double value);
  std::string shape_string() const;  // e.g. "[3x4]", for error messages

 private:
  std::vector<int> dims_;
  std::vector<double> v_;
};

// Throws std::invalid_argument when the two shapes differ.
void check_same_shape(const Tensor& a, const Tensor& b, const char* where);

}  // namespace aio
