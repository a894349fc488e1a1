// Copyright (c) 2026 The foley-synth Authors
// SPDX-License-Identifier: Apache-2.0

#include "foley/tensor.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

namespace foley {

long long shape_size(const std::vector<int>& dims) {
  long long n = 1;
  for (int d : dims) {
    if (d <= 0) throw std::invalid_argument("tensor dimension must be positive");
    n *= d;
  }
  return n;
}

Tensor::Tensor(std::vector<int> shape) {
  dims = std::move(shape);
  v.assign(static_cast<size_t>(shape_size(dims)), 0.0);
}

Tensor::Tensor(std::vector<int> shape, double fill) {
  dims = std::move(shape);
  v.assign(static_cast<size_t>(shape_size(dims)), fill);
}

Tensor Tensor::scalar(double x) {
  Tensor t({1});
  t.v[0] = x;
  return t;
}

Tensor Tensor::from(std::vector<int> shape, std::vector<double> values) {
  if (shape_size(shape) != static_cast<long long>(values.size()))
    throw std::invalid_argument("tensor shape does not match value count");
  Tensor t;
  t.dims = std::move(shape);
  t.v = std::move(values);
  return t;
}

double Tensor::item() const {
  if (v.size() != 1) throw std::logic_error("item() on non-scalar tensor");
  return v[0];
}

void Tensor::fill(double x) {
  for (auto& e : v) e = x;
}

bool Tensor::all_finite() const {
  for (double e : v)
    if (!std::isfinite(e)) return false;
  return true;
}

std::string Tensor::shape_str() const {
  std::ostringstream os;
  os << "[";
  for (size_t i = 0; i < dims.size(); ++i) os << (i ? "x" : "") << dims[i];
  os << "]";
  return os.str();
}

double dot(const Tensor& a, const Tensor& b) {
  double s = 0.0;
  for (size_t i = 0; i < a.v.size(); ++i) s += a.v[i] * b.v[i];
  return s;
}

double l2_norm(const Tensor& a) { return std::sqrt(dot(a, a)); }

double max_abs(const Tensor& a) {
  double m = 0.0;
  for (double e : a.v) m = std::max(m, std::fabs(e));
  return m;
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
  double m = 0.0;
  for (size_t i = 0; i < a.v.size(); ++i) m = std::max(m, std::fabs(a.v[i] - b.v[i]));
  return m;
}

double mean_sq_diff(const Tensor& a, const Tensor& b) {
  double s = 0.0;
  for (size_t i = 0; i < a.v.size(); ++i) {
    double d = a.v[i] - b.v[i];
    s += d * d;
  }
  return s / static_cast<double>(a.v.size());
}

}  // namespace foley
