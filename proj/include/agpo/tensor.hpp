#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace agpo {

// Dense real tensor, rank 1 or 2, row-major doubles. Scalars are rank-1
// tensors with a single element.
struct Tensor {
  std::vector<int> shape;
  std::vector<double> data;

  Tensor() = default;
  Tensor(std::vector<int> s, std::vector<double> d)
      : shape(std::move(s)), data(std::move(d)) {
    if (numel() != static_cast<int>(data.size()))
      throw std::invalid_argument("Tensor: shape/data size mismatch");
  }

  static Tensor scalar(double v) { return Tensor({1}, {v}); }

  static Tensor zeros(std::vector<int> s) {
    Tensor t;
    t.shape = std::move(s);
    t.data.assign(static_cast<std::size_t>(t.numel()), 0.0);
    return t;
  }

  static Tensor full(std::vector<int> s, double v) {
    Tensor t = zeros(std::move(s));
    for (double& x : t.data) x = v;
    return t;
  }

  int rank() const { return static_cast<int>(shape.size()); }

  int numel() const {
    int n = 1;
    for (int d : shape) {
      if (d <= 0) throw std::invalid_argument("Tensor: nonpositive dimension");
      n *= d;
    }
    return n;
  }

  int rows() const { return shape.empty() ? 1 : shape[0]; }
  int cols() const { return rank() == 2 ? shape[1] : 1; }

  bool same_shape(const Tensor& o) const { return shape == o.shape; }

  double value() const {
    if (data.size() != 1)
      throw std::invalid_argument("Tensor::value: not a scalar");
    return data[0];
  }

  double& at(int r, int c) { return data[static_cast<std::size_t>(r) * cols() + c]; }
  double at(int r, int c) const { return data[static_cast<std::size_t>(r) * cols() + c]; }

  bool all_finite() const {
    for (double x : data)
      if (!std::isfinite(x)) return false;
    return true;
  }
};

inline std::string shape_str(const std::vector<int>& s) {
  std::string out = "(";
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) out += "x";
    out += std::to_string(s[i]);
  }
  return out + ")";
}

}  // namespace agpo
