// Copyright (c) 2026 The foley-synth Authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include "foley/graph.hpp"
#include "test_util.hpp"

using namespace foley;
using test::grad_check;
using test::random_tensor;

namespace {

// Finite-difference check for a scalar-valued graph function of one or more
// parameters.
double op_grad_err(ParamStore& store, const std::function<Graph::Id(Graph&)>& build) {
  auto eval = [&] {
    Graph g;
    return g.val(build(g)).item();
  };
  auto eval_grad = [&] {
    Graph g;
    Graph::Id loss = build(g);
    g.backward(loss);
    return g.val(loss).item();
  };
  return grad_check(store, eval, eval_grad);
}

}  // namespace

TEST_SUITE("autograd") {

TEST_CASE("elementwise ops match finite differences") {
  Rng rng(11);
  ParamStore s;
  Param& a = s.add("a", {3, 4});
  Param& b = s.add("b", {3, 4});
  a.value = random_tensor({3, 4}, rng);
  b.value = random_tensor({3, 4}, rng);

  auto check_binary = [&](auto make) {
    double err = op_grad_err(s, [&](Graph& g) {
      return g.mean_all(make(g, g.leaf(a), g.leaf(b)));
    });
    CHECK(err < 1e-6);
  };
  check_binary([](Graph& g, Graph::Id x, Graph::Id y) { return g.add(x, y); });
  check_binary([](Graph& g, Graph::Id x, Graph::Id y) { return g.sub(x, y); });
  check_binary([](Graph& g, Graph::Id x, Graph::Id y) { return g.mul(x, y); });

  auto check_unary = [&](auto make) {
    double err = op_grad_err(s, [&](Graph& g) {
      return g.mean_all(make(g, g.leaf(a)));
    });
    CHECK(err < 1e-6);
  };
  check_unary([](Graph& g, Graph::Id x) { return g.scale(x, -1.7); });
  check_unary([](Graph& g, Graph::Id x) { return g.add_scalar(x, 0.3); });
  check_unary([](Graph& g, Graph::Id x) { return g.exp(g.scale(x, 0.5)); });
  check_unary([](Graph& g, Graph::Id x) { return g.silu(x); });
  check_unary([](Graph& g, Graph::Id x) { return g.relu(x); });
  check_unary([](Graph& g, Graph::Id x) { return g.tanh(x); });
  check_unary([](Graph& g, Graph::Id x) { return g.reshape(x, {4, 3}); });
  check_unary([](Graph& g, Graph::Id x) { return g.transpose2d(x); });
}

TEST_CASE("broadcast, rows and reductions match finite differences") {
  Rng rng(12);
  ParamStore s;
  Param& x = s.add("x", {4, 5});
  Param& f = s.add("f", {5});
  Param& sc = s.add("sc", {1});
  x.value = random_tensor({4, 5}, rng);
  f.value = random_tensor({5}, rng);
  sc.value.v[0] = 0.8;

  CHECK(op_grad_err(s, [&](Graph& g) {
          return g.mean_all(g.broadcast_scalar(g.leaf(sc), {3, 3}));
        }) < 1e-6);
  CHECK(op_grad_err(s, [&](Graph& g) {
          return g.mean_all(g.row_mix(g.leaf(x), g.leaf(f), {1, 0, 1, 0}));
        }) < 1e-6);
  CHECK(op_grad_err(s, [&](Graph& g) {
          return g.mean_all(g.scale_rows(g.leaf(x), {0.5, -1.0, 2.0, 0.1}));
        }) < 1e-6);
  CHECK(op_grad_err(s, [&](Graph& g) {
          return g.weighted_mean(g.mse_rows(g.leaf(x), g.constant(Tensor({4, 5}, 0.2))),
                                 {0.9, 0.1, 2.0, 1.3});
        }) < 1e-6);
  CHECK(op_grad_err(s, [&](Graph& g) {
          return g.mse(g.leaf(x), g.constant(Tensor({4, 5}, -0.1)));
        }) < 1e-6);
}

TEST_CASE("nn blocks match finite differences") {
  Rng rng(13);
  ParamStore s;
  Param& x = s.add("x", {2, 3, 4, 6});
  Param& w = s.add("w", {5, 3, 3, 3});
  Param& b = s.add("b", {5});
  x.value = random_tensor({2, 3, 4, 6}, rng);
  w.value = random_tensor({5, 3, 3, 3}, rng, 0.4);
  b.value = random_tensor({5}, rng, 0.2);

  CHECK(op_grad_err(s, [&](Graph& g) {
          return g.mean_all(g.conv2d(g.leaf(x), g.leaf(w), g.leaf(b), 1, 1, 1, 1));
        }) < 1e-6);
  CHECK(op_grad_err(s, [&](Graph& g) {
          return g.mean_all(g.conv2d(g.leaf(x), g.leaf(w), g.leaf(b), 2, 2, 1, 1));
        }) < 1e-6);
  CHECK(op_grad_err(s, [&](Graph& g) {
          return g.mean_all(g.upsample2x(g.leaf(x)));
        }) < 1e-6);
  CHECK(op_grad_err(s, [&](Graph& g) {
          return g.mean_all(g.mean_max_pool(g.leaf(x)));
        }) < 1e-6);
  CHECK(op_grad_err(s, [&](Graph& g) {
          return g.mean_all(g.slice_channels(g.leaf(x), 1, 3));
        }) < 1e-6);
  CHECK(op_grad_err(s, [&](Graph& g) {
          return g.mean_all(g.concat_channels(g.leaf(x), g.leaf(x)));
        }) < 1e-6);

  ParamStore s2;
  Param& xr = s2.add("xr", {4, 6});
  Param& wr = s2.add("wr", {3, 6});
  Param& br = s2.add("br", {3});
  Param& table = s2.add("table", {5, 6});
  xr.value = random_tensor({4, 6}, rng);
  wr.value = random_tensor({3, 6}, rng, 0.5);
  br.value = random_tensor({3}, rng, 0.2);
  table.value = random_tensor({5, 6}, rng);

  CHECK(op_grad_err(s2, [&](Graph& g) {
          return g.mean_all(g.linear(g.leaf(xr), g.leaf(wr), g.leaf(br)));
        }) < 1e-6);
  CHECK(op_grad_err(s2, [&](Graph& g) {
          return g.mean_all(g.embedding(g.leaf(table), {0, 2, 2, 4}));
        }) < 1e-6);
  CHECK(op_grad_err(s2, [&](Graph& g) {
          return g.mean_all(g.l2norm_rows(g.leaf(xr)));
        }) < 1e-6);
  CHECK(op_grad_err(s2, [&](Graph& g) {
          return g.mean_all(g.matmul_nt(g.leaf(xr), g.leaf(wr)));
        }) < 1e-6);
  CHECK(op_grad_err(s2, [&](Graph& g) {
          return g.ce_diag(g.matmul_nt(g.leaf(xr), g.leaf(xr)));
        }) < 1e-6);

  ParamStore s3;
  Param& xf = s3.add("xf", {2, 3, 2, 2});
  Param& ss = s3.add("ss", {2, 6});
  xf.value = random_tensor({2, 3, 2, 2}, rng);
  ss.value = random_tensor({2, 6}, rng, 0.5);
  CHECK(op_grad_err(s3, [&](Graph& g) {
          return g.mean_all(g.film(g.leaf(xf), g.leaf(ss)));
        }) < 1e-6);
}

TEST_CASE("gradient accumulates across shared subexpressions") {
  ParamStore s;
  Param& a = s.add("a", {2});
  a.value.v = {1.5, -0.5};
  Graph g;
  Graph::Id leaf = g.leaf(a);
  Graph::Id y = g.mean_all(g.mul(leaf, leaf));  // mean(a^2): d/da = a
  g.backward(y);
  CHECK(a.grad.v[0] == doctest::Approx(1.5).epsilon(1e-12));
  CHECK(a.grad.v[1] == doctest::Approx(-0.5).epsilon(1e-12));
}

TEST_CASE("constants do not receive gradients and frozen leaves are constant") {
  ParamStore s;
  Param& a = s.add("a", {2});
  a.value.v = {1.0, 2.0};
  a.trainable = false;
  Graph g;
  Graph::Id loss = g.mean_all(g.mul(g.leaf(a), g.leaf(a)));
  CHECK_FALSE(g.requires_grad(loss));
  g.backward(loss);  // no-op for a non-grad root
  CHECK(a.grad.v[0] == 0.0);
}

}  // TEST_SUITE
