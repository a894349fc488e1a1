// Copyright (c) 2026 The foley-synth Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <initializer_list>
#include <string>
#include <vector>

namespace foley {

/// Dense row-major tensor of doubles with a runtime rank.
/// The last dimension varies fastest; a [N,C,H,W] tensor indexes as
/// ((n*C + c)*H + h)*W + w.
struct Tensor {
  std::vector<int> dims;
  std::vector<double> v;

  Tensor() = default;
  explicit Tensor(std::vector<int> shape);
  Tensor(std::vector<int> shape, double fill);

  static Tensor scalar(double x);
  static Tensor from(std::vector<int> shape, std::vector<double> values);

  int rank() const { return static_cast<int>(dims.size()); }
  long long size() const { return static_cast<long long>(v.size()); }
  bool same_shape(const Tensor& o) const { return dims == o.dims; }
  bool is_scalar() const { return v.size() == 1; }
  double item() const;

  double* data() { return v.data(); }
  const double* data() const { return v.data(); }

  double& operator[](long long i) { return v[static_cast<size_t>(i)]; }
  double operator[](long long i) const { return v[static_cast<size_t>(i)]; }

  // 2-d / 3-d / 4-d accessors for the common layouts.
  double& at2(int a, int b) { return v[static_cast<size_t>(a) * dims[1] + b]; }
  double at2(int a, int b) const { return v[static_cast<size_t>(a) * dims[1] + b]; }
  double& at3(int a, int b, int c) {
    return v[(static_cast<size_t>(a) * dims[1] + b) * dims[2] + c];
  }
  double at3(int a, int b, int c) const {
    return v[(static_cast<size_t>(a) * dims[1] + b) * dims[2] + c];
  }
  double& at4(int a, int b, int c, int d) {
    return v[((static_cast<size_t>(a) * dims[1] + b) * dims[2] + c) * dims[3] + d];
  }
  double at4(int a, int b, int c, int d) const {
    return v[((static_cast<size_t>(a) * dims[1] + b) * dims[2] + c) * dims[3] + d];
  }

  void fill(double x);
  bool all_finite() const;
  std::string shape_str() const;
};

long long shape_size(const std::vector<int>& dims);

double dot(const Tensor& a, const Tensor& b);
double l2_norm(const Tensor& a);
double max_abs(const Tensor& a);
double max_abs_diff(const Tensor& a, const Tensor& b);
double mean_sq_diff(const Tensor& a, const Tensor& b);

}  // namespace foley
