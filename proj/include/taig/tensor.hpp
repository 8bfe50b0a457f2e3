#ifndef TAIG_TENSOR_HPP
#define TAIG_TENSOR_HPP

#include <cmath>
#include <cstddef>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

namespace taig {

struct ShapeError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Dense n-dimensional array of f64, row-major. The universal value type.
struct Tensor {
  std::vector<std::size_t> shape;
  std::vector<double> data;

  Tensor() = default;
  Tensor(std::vector<std::size_t> s, std::vector<double> d)
      : shape(std::move(s)), data(std::move(d)) {
    if (data.size() != count(shape))
      throw ShapeError("tensor data length does not match shape");
  }

  static std::size_t count(const std::vector<std::size_t>& s) {
    std::size_t n = 1;
    for (auto d : s) n *= d;
    return n;
  }

  static Tensor zeros(std::vector<std::size_t> s) {
    auto n = count(s);
    return Tensor(std::move(s), std::vector<double>(n, 0.0));
  }

  static Tensor full(std::vector<std::size_t> s, double v) {
    auto n = count(s);
    return Tensor(std::move(s), std::vector<double>(n, v));
  }

  std::size_t size() const { return data.size(); }
  double& operator[](std::size_t i) { return data[i]; }
  double operator[](std::size_t i) const { return data[i]; }

  bool same_shape(const Tensor& o) const { return shape == o.shape; }

  bool all_finite() const {
    for (double v : data)
      if (!std::isfinite(v)) return false;
    return true;
  }

  Tensor& operator+=(const Tensor& o) {
    require_same_shape(o, "+=");
    for (std::size_t i = 0; i < data.size(); ++i) data[i] += o.data[i];
    return *this;
  }
  Tensor& operator-=(const Tensor& o) {
    require_same_shape(o, "-=");
    for (std::size_t i = 0; i < data.size(); ++i) data[i] -= o.data[i];
    return *this;
  }
  Tensor& operator*=(double c) {
    for (auto& v : data) v *= c;
    return *this;
  }

  friend Tensor operator+(Tensor a, const Tensor& b) { return a += b; }
  friend Tensor operator-(Tensor a, const Tensor& b) { return a -= b; }
  friend Tensor operator*(Tensor a, double c) { return a *= c; }
  friend Tensor operator*(double c, Tensor a) { return a *= c; }

  friend bool operator==(const Tensor& a, const Tensor& b) {
    return a.shape == b.shape && a.data == b.data;
  }

  void require_same_shape(const Tensor& o, const char* op) const {
    if (!same_shape(o))
      throw ShapeError(std::string("shape mismatch in ") + op);
  }
};

inline double linf_dist(const Tensor& a, const Tensor& b) {
  a.require_same_shape(b, "linf_dist");
  double m = 0;
  for (std::size_t i = 0; i < a.size(); ++i)
    m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

inline double linf_norm(const Tensor& a) {
  double m = 0;
  for (double v : a.data) m = std::max(m, std::abs(v));
  return m;
}

inline double l1_norm(const Tensor& a) {
  double s = 0;
  for (double v : a.data) s += std::abs(v);
  return s;
}

inline double sum(const Tensor& a) {
  return std::accumulate(a.data.begin(), a.data.end(), 0.0);
}

inline int sgn(double v) { return (v > 0) - (v < 0); }

}  // namespace taig

#endif
