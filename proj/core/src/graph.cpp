// Copyright (c) 2026 The foley-synth Authors
// SPDX-License-Identifier: Apache-2.0

#include "foley/graph.hpp"

#include <cmath>
#include <stdexcept>

namespace foley {

namespace {

void check(bool ok, const char* msg) {
  if (!ok) throw std::invalid_argument(msg);
}

int conv_out(int in, int k, int stride, int pad) {
  return (in + 2 * pad - k) / stride + 1;
}

}  // namespace

Graph::Id Graph::push(Tensor val, bool rg) {
  Node n;
  n.val = std::move(val);
  n.rg = rg;
  nodes_.push_back(std::move(n));
  return static_cast<Id>(nodes_.size() - 1);
}

Tensor& Graph::gbuf(Id id) {
  Node& n = nodes_[static_cast<size_t>(id)];
  if (!n.grad_live) {
    n.grad = Tensor(n.val.dims);
    n.grad_live = true;
  }
  return n.grad;
}

void Graph::addg(Id id, const Tensor& g) {
  Tensor& buf = gbuf(id);
  for (size_t i = 0; i < buf.v.size(); ++i) buf.v[i] += g.v[i];
}

const Tensor& Graph::grad_of(Id id) { return gbuf(id); }

Graph::Id Graph::constant(Tensor t) { return push(std::move(t), false); }

Graph::Id Graph::leaf(Param& p) {
  Id id = push(p.value, p.trainable);
  nodes_[static_cast<size_t>(id)].bound = p.trainable ? &p : nullptr;
  if (p.trainable) param_leaves_.push_back(id);
  return id;
}

void Graph::backward(Id root) {
  Node& r = nodes_[static_cast<size_t>(root)];
  check(r.val.is_scalar(), "backward root must be scalar");
  if (!r.rg) return;
  gbuf(root).v[0] = 1.0;
  for (Id id = root; id >= 0; --id) {
    Node& n = nodes_[static_cast<size_t>(id)];
    if (n.rg && n.grad_live && n.back) n.back(*this);
  }
  for (Id id : param_leaves_) {
    Node& n = nodes_[static_cast<size_t>(id)];
    if (n.bound && n.grad_live) {
      Tensor& pg = n.bound->grad;
      if (pg.dims != n.grad.dims) pg = Tensor(n.grad.dims);
      for (size_t i = 0; i < pg.v.size(); ++i) pg.v[i] += n.grad.v[i];
    }
  }
}

// ---------------------------------------------------------------------------
// Elementwise.

Graph::Id Graph::add(Id a, Id b) {
  const Tensor& A = val(a);
  const Tensor& B = val(b);
  check(A.dims == B.dims, "add: shape mismatch");
  Tensor out = A;
  for (size_t i = 0; i < out.v.size(); ++i) out.v[i] += B.v[i];
  bool rg = requires_grad(a) || requires_grad(b);
  Id id = push(std::move(out), rg);
  if (rg)
    nodes_[id].back = [a, b, id](Graph& g) {
      const Tensor& go = g.gbuf(id);
      if (g.requires_grad(a)) g.addg(a, go);
      if (g.requires_grad(b)) g.addg(b, go);
    };
  return id;
}

Graph::Id Graph::sub(Id a, Id b) {
  const Tensor& A = val(a);
  const Tensor& B = val(b);
  check(A.dims == B.dims, "sub: shape mismatch");
  Tensor out = A;
  for (size_t i = 0; i < out.v.size(); ++i) out.v[i] -= B.v[i];
  bool rg = requires_grad(a) || requires_grad(b);
  Id id = push(std::move(out), rg);
  if (rg)
    nodes_[id].back = [a, b, id](Graph& g) {
      const Tensor& go = g.gbuf(id);
      if (g.requires_grad(a)) g.addg(a, go);
      if (g.requires_grad(b)) {
        Tensor& gb = g.gbuf(b);
        for (size_t i = 0; i < gb.v.size(); ++i) gb.v[i] -= go.v[i];
      }
    };
  return id;
}

Graph::Id Graph::mul(Id a, Id b) {
  const Tensor& A = val(a);
  const Tensor& B = val(b);
  check(A.dims == B.dims, "mul: shape mismatch");
  Tensor out = A;
  for (size_t i = 0; i < out.v.size(); ++i) out.v[i] *= B.v[i];
  bool rg = requires_grad(a) || requires_grad(b);
  Id id = push(std::move(out), rg);
  if (rg)
    nodes_[id].back = [a, b, id](Graph& g) {
      const Tensor& go = g.gbuf(id);
      if (g.requires_grad(a)) {
        const Tensor& B2 = g.val(b);
        Tensor& ga = g.gbuf(a);
        for (size_t i = 0; i < ga.v.size(); ++i) ga.v[i] += go.v[i] * B2.v[i];
      }
      if (g.requires_grad(b)) {
        const Tensor& A2 = g.val(a);
        Tensor& gb = g.gbuf(b);
        for (size_t i = 0; i < gb.v.size(); ++i) gb.v[i] += go.v[i] * A2.v[i];
      }
    };
  return id;
}

Graph::Id Graph::scale(Id a, double s) {
  Tensor out = val(a);
  for (auto& e : out.v) e *= s;
  bool rg = requires_grad(a);
  Id id = push(std::move(out), rg);
  if (rg)
    nodes_[id].back = [a, s, id](Graph& g) {
      const Tensor& go = g.gbuf(id);
      Tensor& ga = g.gbuf(a);
      for (size_t i = 0; i < ga.v.size(); ++i) ga.v[i] += s * go.v[i];
    };
  return id;
}

Graph::Id Graph::add_scalar(Id a, double s) {
  Tensor out = val(a);
  for (auto& e : out.v) e += s;
  bool rg = requires_grad(a);
  Id id = push(std::move(out), rg);
  if (rg)
    nodes_[id].back = [a, id](Graph& g) { g.addg(a, g.gbuf(id)); };
  return id;
}

Graph::Id Graph::exp(Id a) {
  Tensor out = val(a);
  for (auto& e : out.v) e = std::exp(e);
  bool rg = requires_grad(a);
  Id id = push(std::move(out), rg);
  if (rg)
    nodes_[id].back = [a, id](Graph& g) {
      const Tensor& go = g.gbuf(id);
      const Tensor& y = g.val(id);
      Tensor& ga = g.gbuf(a);
      for (size_t i = 0; i < ga.v.size(); ++i) ga.v[i] += go.v[i] * y.v[i];
    };
  return id;
}

Graph::Id Graph::silu(Id a) {
  const Tensor& A = val(a);
  Tensor out = A;
  for (auto& e : out.v) {
    double s = 1.0 / (1.0 + std::exp(-e));
    e = e * s;
  }
  bool rg = requires_grad(a);
  Id id = push(std::move(out), rg);
  if (rg)
    nodes_[id].back = [a, id](Graph& g) {
      const Tensor& go = g.gbuf(id);
      const Tensor& x = g.val(a);
      Tensor& ga = g.gbuf(a);
      for (size_t i = 0; i < ga.v.size(); ++i) {
        double s = 1.0 / (1.0 + std::exp(-x.v[i]));
        ga.v[i] += go.v[i] * s * (1.0 + x.v[i] * (1.0 - s));
      }
    };
  return id;
}

Graph::Id Graph::relu(Id a) {
  Tensor out = val(a);
  for (auto& e : out.v) e = e > 0.0 ? e : 0.0;
  bool rg = requires_grad(a);
  Id id = push(std::move(out), rg);
  if (rg)
    nodes_[id].back = [a, id](Graph& g) {
      const Tensor& go = g.gbuf(id);
      const Tensor& x = g.val(a);
      Tensor& ga = g.gbuf(a);
      for (size_t i = 0; i < ga.v.size(); ++i)
        if (x.v[i] > 0.0) ga.v[i] += go.v[i];
    };
  return id;
}

Graph::Id Graph::tanh(Id a) {
  Tensor out = val(a);
  for (auto& e : out.v) e = std::tanh(e);
  bool rg = requires_grad(a);
  Id id = push(std::move(out), rg);
  if (rg)
    nodes_[id].back = [a, id](Graph& g) {
      const Tensor& go = g.gbuf(id);
      const Tensor& y = g.val(id);
      Tensor& ga = g.gbuf(a);
      for (size_t i = 0; i < ga.v.size(); ++i)
        ga.v[i] += go.v[i] * (1.0 - y.v[i] * y.v[i]);
    };
  return id;
}

// ---------------------------------------------------------------------------
// Shape.

Graph::Id Graph::reshape(Id a, std::vector<int> shape) {
  const Tensor& A = val(a);
  check(shape_size(shape) == A.size(), "reshape: element count mismatch");
  Tensor out = A;
  out.dims = shape;
  bool rg = requires_grad(a);
  Id id = push(std::move(out), rg);
  if (rg)
    nodes_[id].back = [a, id](Graph& g) {
      const Tensor& go = g.gbuf(id);
      Tensor& ga = g.gbuf(a);
      for (size_t i = 0; i < ga.v.size(); ++i) ga.v[i] += go.v[i];
    };
  return id;
}

Graph::Id Graph::broadcast_scalar(Id a, std::vector<int> shape) {
  const Tensor& A = val(a);
  check(A.is_scalar(), "broadcast_scalar: scalar input required");
  Tensor out(shape, A.v[0]);
  bool rg = requires_grad(a);
  Id id = push(std::move(out), rg);
  if (rg)
    nodes_[id].back = [a, id](Graph& g) {
      const Tensor& go = g.gbuf(id);
      double s = 0.0;
      for (double e : go.v) s += e;
      g.gbuf(a).v[0] += s;
    };
  return id;
}

Graph::Id Graph::transpose2d(Id a) {
  const Tensor& A = val(a);
  check(A.rank() == 2, "transpose2d: rank-2 input required");
  int R = A.dims[0], C = A.dims[1];
  Tensor out({C, R});
  for (int i = 0; i < R; ++i)
    for (int j = 0; j < C; ++j) out.at2(j, i) = A.at2(i, j);
  bool rg = requires_grad(a);
  Id id = push(std::move(out), rg);
  if (rg)
    nodes_[id].back = [a, id, R, C](Graph& g) {
      const Tensor& go = g.gbuf(id);
      Tensor& ga = g.gbuf(a);
      for (int i = 0; i < R; ++i)
        for (int j = 0; j < C; ++j) ga.at2(i, j) += go.at2(j, i);
    };
  return id;
}

Graph::Id Graph::slice_channels(Id x, int c0, int c1) {
  const Tensor& X = val(x);
  check(X.rank() == 4, "slice_channels: NCHW input required");
  check(0 <= c0 && c0 < c1 && c1 <= X.dims[1], "slice_channels: bad range");
  int N = X.dims[0], C = X.dims[1], H = X.dims[2], W = X.dims[3];
  int Cs = c1 - c0;
  Tensor out({N, Cs, H, W});
  for (int n = 0; n < N; ++n)
    for (int c = 0; c < Cs; ++c)
      for (int h = 0; h < H; ++h)
        for (int w = 0; w < W; ++w) out.at4(n, c, h, w) = X.at4(n, c0 + c, h, w);
  bool rg = requires_grad(x);
  Id id = push(std::move(out), rg);
  if (rg)
    nodes_[id].back = [x, id, N, C, H, W, c0, Cs](Graph& g) {
      (void)C;
      const Tensor& go = g.gbuf(id);
      Tensor& gx = g.gbuf(x);
      for (int n = 0; n < N; ++n)
        for (int c = 0; c < Cs; ++c)
          for (int h = 0; h < H; ++h)
            for (int w = 0; w < W; ++w) gx.at4(n, c0 + c, h, w) += go.at4(n, c, h, w);
    };
  return id;
}

Graph::Id Graph::concat_channels(Id a, Id b) {
  const Tensor& A = val(a);
  const Tensor& B = val(b);
  check(A.rank() == 4 && B.rank() == 4, "concat_channels: NCHW inputs required");
  check(A.dims[0] == B.dims[0] && A.dims[2] == B.dims[2] && A.dims[3] == B.dims[3],
        "concat_channels: incompatible shapes");
  int N = A.dims[0], Ca = A.dims[1], Cb = B.dims[1], H = A.dims[2], W = A.dims[3];
  Tensor out({N, Ca + Cb, H, W});
  for (int n = 0; n < N; ++n) {
    for (int c = 0; c < Ca; ++c)
      for (int h = 0; h < H; ++h)
        for (int w = 0; w < W; ++w) out.at4(n, c, h, w) = A.at4(n, c, h, w);
    for (int c = 0; c < Cb; ++c)
      for (int h = 0; h < H; ++h)
        for (int w = 0; w < W; ++w) out.at4(n, Ca + c, h, w) = B.at4(n, c, h, w);
  }
  bool rg = requires_grad(a) || requires_grad(b);
  Id id = push(std::move(out), rg);
  if (rg)
    nodes_[id].back = [a, b, id, N, Ca, Cb, H, W](Graph& g) {
      const Tensor& go = g.gbuf(id);
      if (g.requires_grad(a)) {
        Tensor& ga = g.gbuf(a);
        for (int n = 0; n < N; ++n)
          for (int c = 0; c < Ca; ++c)
            for (int h = 0; h < H; ++h)
              for (int w = 0; w < W; ++w) ga.at4(n, c, h, w) += go.at4(n, c, h, w);
      }
      if (g.requires_grad(b)) {
        Tensor& gb = g.gbuf(b);
        for (int n = 0; n < N; ++n)
          for (int c = 0; c < Cb; ++c)
            for (int h = 0; h < H; ++h)
              for (int w = 0; w < W; ++w) gb.at4(n, c, h, w) += go.at4(n, Ca + c, h, w);
      }
    };
  return id;
}

// ---------------------------------------------------------------------------
// Neural-net blocks.

Graph::Id Graph::linear(Id x, Id w, Id b) {
  const Tensor& X = val(x);
  const Tensor& W = val(w);
  const Tensor& B = val(b);
  check(X.rank() == 2 && W.rank() == 2 && B.rank() == 1, "linear: bad ranks");
  check(X.dims[1] == W.dims[1] && W.dims[0] == B.dims[0], "linear: shape mismatch");
  int N = X.dims[0], I = X.dims[1], O = W.dims[0];
  Tensor out({N, O});
  for (int n = 0; n < N; ++n)
    for (int o = 0; o < O; ++o) {
      double acc = B[o];
      const double* xp = X.data() + static_cast<size_t>(n) * I;
      const double* wp = W.data() + static_cast<size_t>(o) * I;
      for (int i = 0; i < I; ++i) acc += xp[i] * wp[i];
      out.at2(n, o) = acc;
    }
  bool rg = requires_grad(x) || requires_grad(w) || requires_grad(b);
  Id id = push(std::move(out), rg);
  if (rg)
    nodes_[id].back = [x, w, b, id, N, I, O](Graph& g) {
      const Tensor& go = g.gbuf(id);
      if (g.requires_grad(x)) {
        const Tensor& W2 = g.val(w);
        Tensor& gx = g.gbuf(x);
        for (int n = 0; n < N; ++n)
          for (int o = 0; o < O; ++o) {
            double gv = go.at2(n, o);
            double* gxp = gx.data() + static_cast<size_t>(n) * I;
            const double* wp = W2.data() + static_cast<size_t>(o) * I;
            for (int i = 0; i < I; ++i) gxp[i] += gv * wp[i];
          }
      }
      if (g.requires_grad(w)) {
        const Tensor& X2 = g.val(x);
        Tensor& gw = g.gbuf(w);
        for (int o = 0; o < O; ++o)
          for (int n = 0; n < N; ++n) {
            double gv = go.at2(n, o);
            double* gwp = gw.data() + static_cast<size_t>(o) * I;
            const double* xp = X2.data() + static_cast<size_t>(n) * I;
            for (int i = 0; i < I; ++i) gwp[i] += gv * xp[i];
          }
      }
      if (g.requires_grad(b)) {
        Tensor& gb = g.gbuf(b);
        for (int n = 0; n < N; ++n)
          for (int o = 0; o < O; ++o) gb[o] += go.at2(n, o);
      }
    };
  return id;
}

Graph::Id Graph::embedding(Id table, std::vector<int> idx) {
  const Tensor& T = val(table);
  check(T.rank() == 2, "embedding: table must be [L,E]");
  int L = T.dims[0], E = T.dims[1];
  int N = static_cast<int>(idx.size());
  for (int i : idx) check(0 <= i && i < L, "embedding: index out of range");
  Tensor out({N, E});
  for (int n = 0; n < N; ++n)
    for (int e = 0; e < E; ++e) out.at2(n, e) = T.at2(idx[static_cast<size_t>(n)], e);
  bool rg = requires_grad(table);
  Id id = push(std::move(out), rg);
  if (rg)
    nodes_[id].back = [table, id, idx = std::move(idx), E](Graph& g) {
      const Tensor& go = g.gbuf(id);
      Tensor& gt = g.gbuf(table);
      for (size_t n = 0; n < idx.size(); ++n)
        for (int e = 0; e < E; ++e) gt.at2(idx[n], e) += go.at2(static_cast<int>(n), e);
    };
  return id;
}

Graph::Id Graph::conv2d(Id x, Id w, Id b, int sh, int sw, int ph, int pw) {
  const Tensor& X = val(x);
  const Tensor& W = val(w);
  const Tensor& B = val(b);
  check(X.rank() == 4 && W.rank() == 4 && B.rank() == 1, "conv2d: bad ranks");
  check(X.dims[1] == W.dims[1] && W.dims[0] == B.dims[0], "conv2d: shape mismatch");
  int N = X.dims[0], C = X.dims[1], H = X.dims[2], Wd = X.dims[3];
  int O = W.dims[0], kh = W.dims[2], kw = W.dims[3];
  int Ho = conv_out(H, kh, sh, ph), Wo = conv_out(Wd, kw, sw, pw);
  check(Ho > 0 && Wo > 0, "conv2d: empty output");
  Tensor out({N, O, Ho, Wo});
  for (int n = 0; n < N; ++n)
    for (int o = 0; o < O; ++o)
      for (int oy = 0; oy < Ho; ++oy)
        for (int ox = 0; ox < Wo; ++ox) {
          double acc = B[o];
          for (int c = 0; c < C; ++c)
            for (int ky = 0; ky < kh; ++ky) {
              int iy = oy * sh + ky - ph;
              if (iy < 0 || iy >= H) continue;
              for (int kx = 0; kx < kw; ++kx) {
                int ix = ox * sw + kx - pw;
                if (ix < 0 || ix >= Wd) continue;
                acc += X.at4(n, c, iy, ix) * W.at4(o, c, ky, kx);
              }
            }
          out.at4(n, o, oy, ox) = acc;
        }
  bool rg = requires_grad(x) || requires_grad(w) || requires_grad(b);
  Id id = push(std::move(out), rg);
  if (rg)
    nodes_[id].back = [x, w, b, id, N, C, H, Wd, O, kh, kw, sh, sw, ph, pw, Ho,
                       Wo](Graph& g) {
      const Tensor& go = g.gbuf(id);
      if (g.requires_grad(x)) {
        const Tensor& W2 = g.val(w);
        Tensor& gx = g.gbuf(x);
        for (int n = 0; n < N; ++n)
          for (int o = 0; o < O; ++o)
            for (int oy = 0; oy < Ho; ++oy)
              for (int ox = 0; ox < Wo; ++ox) {
                double gv = go.at4(n, o, oy, ox);
                for (int c = 0; c < C; ++c)
                  for (int ky = 0; ky < kh; ++ky) {
                    int iy = oy * sh + ky - ph;
                    if (iy < 0 || iy >= H) continue;
                    for (int kx = 0; kx < kw; ++kx) {
                      int ix = ox * sw + kx - pw;
                      if (ix < 0 || ix >= Wd) continue;
                      gx.at4(n, c, iy, ix) += gv * W2.at4(o, c, ky, kx);
                    }
                  }
              }
      }
      if (g.requires_grad(w)) {
        const Tensor& X2 = g.val(x);
        Tensor& gw = g.gbuf(w);
        for (int n = 0; n < N; ++n)
          for (int o = 0; o < O; ++o)
            for (int oy = 0; oy < Ho; ++oy)
              for (int ox = 0; ox < Wo; ++ox) {
                double gv = go.at4(n, o, oy, ox);
                for (int c = 0; c < C; ++c)
                  for (int ky = 0; ky < kh; ++ky) {
                    int iy = oy * sh + ky - ph;
                    if (iy < 0 || iy >= H) continue;
                    for (int kx = 0; kx < kw; ++kx) {
                      int ix = ox * sw + kx - pw;
                      if (ix < 0 || ix >= Wd) continue;
                      gw.at4(o, c, ky, kx) += gv * X2.at4(n, c, iy, ix);
                    }
                  }
              }
      }
      if (g.requires_grad(b)) {
        Tensor& gb = g.gbuf(b);
        for (int n = 0; n < N; ++n)
          for (int o = 0; o < O; ++o)
            for (int oy = 0; oy < Ho; ++oy)
              for (int ox = 0; ox < Wo; ++ox) gb[o] += go.at4(n, o, oy, ox);
      }
    };
  return id;
}

Graph::Id Graph::upsample2x(Id x) {
  const Tensor& X = val(x);
  check(X.rank() == 4, "upsample2x: NCHW input required");
  int N = X.dims[0], C = X.dims[1], H = X.dims[2], W = X.dims[3];
  Tensor out({N, C, 2 * H, 2 * W});
  for (int n = 0; n < N; ++n)
    for (int c = 0; c < C; ++c)
      for (int h = 0; h < H; ++h)
        for (int w = 0; w < W; ++w) {
          double v = X.at4(n, c, h, w);
          out.at4(n, c, 2 * h, 2 * w) = v;
          out.at4(n, c, 2 * h, 2 * w + 1) = v;
          out.at4(n, c, 2 * h + 1, 2 * w) = v;
          out.at4(n, c, 2 * h + 1, 2 * w + 1) = v;
        }
  bool rg = requires_grad(x);
  Id id = push(std::move(out), rg);
  if (rg)
    nodes_[id].back = [x, id, N, C, H, W](Graph& g) {
      const Tensor& go = g.gbuf(id);
      Tensor& gx = g.gbuf(x);
      for (int n = 0; n < N; ++n)
        for (int c = 0; c < C; ++c)
          for (int h = 0; h < H; ++h)
            for (int w = 0; w < W; ++w)
              gx.at4(n, c, h, w) += go.at4(n, c, 2 * h, 2 * w) +
                                    go.at4(n, c, 2 * h, 2 * w + 1) +
                                    go.at4(n, c, 2 * h + 1, 2 * w) +
                                    go.at4(n, c, 2 * h + 1, 2 * w + 1);
    };
  return id;
}

Graph::Id Graph::mean_max_pool(Id x) {
  const Tensor& X = val(x);
  check(X.rank() == 4, "mean_max_pool: NCHW input required");
  int N = X.dims[0], C = X.dims[1], H = X.dims[2], W = X.dims[3];
  Tensor out({N, 2 * C});
  std::vector<int> argmax(static_cast<size_t>(N) * C, 0);
  for (int n = 0; n < N; ++n)
    for (int c = 0; c < C; ++c) {
      double sum = 0.0, best = X.at4(n, c, 0, 0);
      int besti = 0;
      for (int h = 0; h < H; ++h)
        for (int w = 0; w < W; ++w) {
          double v = X.at4(n, c, h, w);
          sum += v;
          int i = h * W + w;
          if (v > best) {
            best = v;
            besti = i;
          }
        }
      out.at2(n, c) = sum / (H * W);
      out.at2(n, C + c) = best;
      argmax[static_cast<size_t>(n) * C + c] = besti;
    }
  bool rg = requires_grad(x);
  Id id = push(std::move(out), rg);
  if (rg)
    nodes_[id].back = [x, id, N, C, H, W, argmax = std::move(argmax)](Graph& g) {
      const Tensor& go = g.gbuf(id);
      Tensor& gx = g.gbuf(x);
      double inv = 1.0 / (H * W);
      for (int n = 0; n < N; ++n)
        for (int c = 0; c < C; ++c) {
          double gmean = go.at2(n, c) * inv;
          for (int h = 0; h < H; ++h)
            for (int w = 0; w < W; ++w) gx.at4(n, c, h, w) += gmean;
          int bi = argmax[static_cast<size_t>(n) * C + c];
          gx.at4(n, c, bi / W, bi % W) += go.at2(n, C + c);
        }
    };
  return id;
}

Graph::Id Graph::l2norm_rows(Id x) {
  const Tensor& X = val(x);
  check(X.rank() == 2, "l2norm_rows: [N,D] input required");
  int N = X.dims[0], D = X.dims[1];
  Tensor out({N, D});
  std::vector<double> norms(static_cast<size_t>(N), 0.0);
  for (int n = 0; n < N; ++n) {
    double s = 0.0;
    for (int d = 0; d < D; ++d) s += X.at2(n, d) * X.at2(n, d);
    double nm = std::sqrt(s);
    check(nm > 1e-12, "l2norm_rows: zero vector");
    norms[static_cast<size_t>(n)] = nm;
    for (int d = 0; d < D; ++d) out.at2(n, d) = X.at2(n, d) / nm;
  }
  bool rg = requires_grad(x);
  Id id = push(std::move(out), rg);
  if (rg)
    nodes_[id].back = [x, id, N, D, norms = std::move(norms)](Graph& g) {
      const Tensor& go = g.gbuf(id);
      const Tensor& y = g.val(id);
      Tensor& gx = g.gbuf(x);
      for (int n = 0; n < N; ++n) {
        double gy = 0.0;
        for (int d = 0; d < D; ++d) gy += go.at2(n, d) * y.at2(n, d);
        double inv = 1.0 / norms[static_cast<size_t>(n)];
        for (int d = 0; d < D; ++d)
          gx.at2(n, d) += (go.at2(n, d) - gy * y.at2(n, d)) * inv;
      }
    };
  return id;
}

Graph::Id Graph::film(Id x, Id scale_shift) {
  const Tensor& X = val(x);
  const Tensor& S = val(scale_shift);
  check(X.rank() == 4 && S.rank() == 2, "film: x NCHW, scale_shift [N,2C]");
  int N = X.dims[0], C = X.dims[1], H = X.dims[2], W = X.dims[3];
  check(S.dims[0] == N && S.dims[1] == 2 * C, "film: scale_shift shape mismatch");
  Tensor out({N, C, H, W});
  for (int n = 0; n < N; ++n)
    for (int c = 0; c < C; ++c) {
      double sc = 1.0 + S.at2(n, c);
      double sh = S.at2(n, C + c);
      for (int h = 0; h < H; ++h)
        for (int w = 0; w < W; ++w) out.at4(n, c, h, w) = X.at4(n, c, h, w) * sc + sh;
    }
  bool rg = requires_grad(x) || requires_grad(scale_shift);
  Id id = push(std::move(out), rg);
  if (rg)
    nodes_[id].back = [x, scale_shift, id, N, C, H, W](Graph& g) {
      const Tensor& go = g.gbuf(id);
      const Tensor& S2 = g.val(scale_shift);
      if (g.requires_grad(x)) {
        Tensor& gx = g.gbuf(x);
        for (int n = 0; n < N; ++n)
          for (int c = 0; c < C; ++c) {
            double sc = 1.0 + S2.at2(n, c);
            for (int h = 0; h < H; ++h)
              for (int w = 0; w < W; ++w) gx.at4(n, c, h, w) += go.at4(n, c, h, w) * sc;
          }
      }
      if (g.requires_grad(scale_shift)) {
        const Tensor& X2 = g.val(x);
        Tensor& gs = g.gbuf(scale_shift);
        for (int n = 0; n < N; ++n)
          for (int c = 0; c < C; ++c) {
            double gsc = 0.0, gsh = 0.0;
            for (int h = 0; h < H; ++h)
              for (int w = 0; w < W; ++w) {
                gsc += go.at4(n, c, h, w) * X2.at4(n, c, h, w);
                gsh += go.at4(n, c, h, w);
              }
            gs.at2(n, c) += gsc;
            gs.at2(n, C + c) += gsh;
          }
      }
    };
  return id;
}

Graph::Id Graph::matmul_nt(Id a, Id b) {
  const Tensor& A = val(a);
  const Tensor& B = val(b);
  check(A.rank() == 2 && B.rank() == 2 && A.dims[1] == B.dims[1],
        "matmul_nt: [N,D]x[M,D] required");
  int N = A.dims[0], M = B.dims[0], D = A.dims[1];
  Tensor out({N, M});
  for (int n = 0; n < N; ++n)
    for (int m = 0; m < M; ++m) {
      double acc = 0.0;
      const double* ap = A.data() + static_cast<size_t>(n) * D;
      const double* bp = B.data() + static_cast<size_t>(m) * D;
      for (int d = 0; d < D; ++d) acc += ap[d] * bp[d];
      out.at2(n, m) = acc;
    }
  bool rg = requires_grad(a) || requires_grad(b);
  Id id = push(std::move(out), rg);
  if (rg)
    nodes_[id].back = [a, b, id, N, M, D](Graph& g) {
      const Tensor& go = g.gbuf(id);
      if (g.requires_grad(a)) {
        const Tensor& B2 = g.val(b);
        Tensor& ga = g.gbuf(a);
        for (int n = 0; n < N; ++n)
          for (int m = 0; m < M; ++m) {
            double gv = go.at2(n, m);
            double* gp = ga.data() + static_cast<size_t>(n) * D;
            const double* bp = B2.data() + static_cast<size_t>(m) * D;
            for (int d = 0; d < D; ++d) gp[d] += gv * bp[d];
          }
      }
      if (g.requires_grad(b)) {
        const Tensor& A2 = g.val(a);
        Tensor& gb = g.gbuf(b);
        for (int m = 0; m < M; ++m)
          for (int n = 0; n < N; ++n) {
            double gv = go.at2(n, m);
            double* gp = gb.data() + static_cast<size_t>(m) * D;
            const double* ap = A2.data() + static_cast<size_t>(n) * D;
            for (int d = 0; d < D; ++d) gp[d] += gv * ap[d];
          }
      }
    };
  return id;
}

Graph::Id Graph::row_mix(Id rows, Id fallback, std::vector<uint8_t> mask) {
  const Tensor& R = val(rows);
  const Tensor& F = val(fallback);
  check(R.rank() == 2 && F.rank() == 1 && R.dims[1] == F.dims[0],
        "row_mix: rows [N,D], fallback [D]");
  int N = R.dims[0], D = R.dims[1];
  check(static_cast<int>(mask.size()) == N, "row_mix: mask length mismatch");
  Tensor out({N, D});
  for (int n = 0; n < N; ++n)
    for (int d = 0; d < D; ++d)
      out.at2(n, d) = mask[static_cast<size_t>(n)] ? F[d] : R.at2(n, d);
  bool rg = requires_grad(rows) || requires_grad(fallback);
  Id id = push(std::move(out), rg);
  if (rg)
    nodes_[id].back = [rows, fallback, id, N, D, mask = std::move(mask)](Graph& g) {
      const Tensor& go = g.gbuf(id);
      if (g.requires_grad(rows)) {
        Tensor& gr = g.gbuf(rows);
        for (int n = 0; n < N; ++n)
          if (!mask[static_cast<size_t>(n)])
            for (int d = 0; d < D; ++d) gr.at2(n, d) += go.at2(n, d);
      }
      if (g.requires_grad(fallback)) {
        Tensor& gf = g.gbuf(fallback);
        for (int n = 0; n < N; ++n)
          if (mask[static_cast<size_t>(n)])
            for (int d = 0; d < D; ++d) gf[d] += go.at2(n, d);
      }
    };
  return id;
}

Graph::Id Graph::scale_rows(Id x, std::vector<double> coeffs) {
  const Tensor& X = val(x);
  check(X.rank() >= 1, "scale_rows: bad input");
  int N = X.dims[0];
  check(static_cast<int>(coeffs.size()) == N, "scale_rows: coeff count mismatch");
  long long stride = X.size() / N;
  Tensor out = X;
  for (int n = 0; n < N; ++n) {
    double c = coeffs[static_cast<size_t>(n)];
    double* p = out.data() + n * stride;
    for (long long i = 0; i < stride; ++i) p[i] *= c;
  }
  bool rg = requires_grad(x);
  Id id = push(std::move(out), rg);
  if (rg)
    nodes_[id].back = [x, id, N, stride, coeffs = std::move(coeffs)](Graph& g) {
      const Tensor& go = g.gbuf(id);
      Tensor& gx = g.gbuf(x);
      for (int n = 0; n < N; ++n) {
        double c = coeffs[static_cast<size_t>(n)];
        double* gp = gx.data() + n * stride;
        const double* op = go.data() + n * stride;
        for (long long i = 0; i < stride; ++i) gp[i] += c * op[i];
      }
    };
  return id;
}

// ---------------------------------------------------------------------------
// Reductions and losses.

Graph::Id Graph::mean_all(Id a) {
  const Tensor& A = val(a);
  double s = 0.0;
  for (double e : A.v) s += e;
  double m = s / static_cast<double>(A.v.size());
  bool rg = requires_grad(a);
  Id id = push(Tensor::scalar(m), rg);
  if (rg) {
    long long n = A.size();
    nodes_[id].back = [a, id, n](Graph& g) {
      double gv = g.gbuf(id).v[0] / static_cast<double>(n);
      Tensor& ga = g.gbuf(a);
      for (auto& e : ga.v) e += gv;
    };
  }
  return id;
}

Graph::Id Graph::mse(Id a, Id b) {
  const Tensor& A = val(a);
  const Tensor& B = val(b);
  check(A.dims == B.dims, "mse: shape mismatch");
  double s = 0.0;
  for (size_t i = 0; i < A.v.size(); ++i) {
    double d = A.v[i] - B.v[i];
    s += d * d;
  }
  long long M = A.size();
  bool rg = requires_grad(a) || requires_grad(b);
  Id id = push(Tensor::scalar(s / static_cast<double>(M)), rg);
  if (rg)
    nodes_[id].back = [a, b, id, M](Graph& g) {
      double gv = 2.0 * g.gbuf(id).v[0] / static_cast<double>(M);
      const Tensor& A2 = g.val(a);
      const Tensor& B2 = g.val(b);
      if (g.requires_grad(a)) {
        Tensor& ga = g.gbuf(a);
        for (size_t i = 0; i < ga.v.size(); ++i) ga.v[i] += gv * (A2.v[i] - B2.v[i]);
      }
      if (g.requires_grad(b)) {
        Tensor& gb = g.gbuf(b);
        for (size_t i = 0; i < gb.v.size(); ++i) gb.v[i] -= gv * (A2.v[i] - B2.v[i]);
      }
    };
  return id;
}

Graph::Id Graph::mse_rows(Id a, Id b) {
  const Tensor& A = val(a);
  const Tensor& B = val(b);
  check(A.rank() == 2 && A.dims == B.dims, "mse_rows: [N,D] pair required");
  int N = A.dims[0], D = A.dims[1];
  Tensor out({N});
  for (int n = 0; n < N; ++n) {
    double s = 0.0;
    for (int d = 0; d < D; ++d) {
      double df = A.at2(n, d) - B.at2(n, d);
      s += df * df;
    }
    out[n] = s / D;
  }
  bool rg = requires_grad(a) || requires_grad(b);
  Id id = push(std::move(out), rg);
  if (rg)
    nodes_[id].back = [a, b, id, N, D](Graph& g) {
      const Tensor& go = g.gbuf(id);
      const Tensor& A2 = g.val(a);
      const Tensor& B2 = g.val(b);
      for (int n = 0; n < N; ++n) {
        double gv = 2.0 * go[n] / D;
        if (g.requires_grad(a)) {
          Tensor& ga = g.gbuf(a);
          for (int d = 0; d < D; ++d) ga.at2(n, d) += gv * (A2.at2(n, d) - B2.at2(n, d));
        }
        if (g.requires_grad(b)) {
          Tensor& gb = g.gbuf(b);
          for (int d = 0; d < D; ++d) gb.at2(n, d) -= gv * (A2.at2(n, d) - B2.at2(n, d));
        }
      }
    };
  return id;
}

Graph::Id Graph::weighted_mean(Id x, std::vector<double> w) {
  const Tensor& X = val(x);
  check(X.rank() == 1, "weighted_mean: rank-1 input required");
  int N = X.dims[0];
  check(static_cast<int>(w.size()) == N, "weighted_mean: weight count mismatch");
  double s = 0.0;
  for (int n = 0; n < N; ++n) s += w[static_cast<size_t>(n)] * X[n];
  bool rg = requires_grad(x);
  Id id = push(Tensor::scalar(s / N), rg);
  if (rg)
    nodes_[id].back = [x, id, N, w = std::move(w)](Graph& g) {
      double gv = g.gbuf(id).v[0] / N;
      Tensor& gx = g.gbuf(x);
      for (int n = 0; n < N; ++n) gx[n] += gv * w[static_cast<size_t>(n)];
    };
  return id;
}

Graph::Id Graph::ce_diag(Id logits) {
  const Tensor& L = val(logits);
  check(L.rank() == 2 && L.dims[0] == L.dims[1], "ce_diag: square logits required");
  int B = L.dims[0];
  // Stable log-softmax per row.
  Tensor probs({B, B});
  double loss = 0.0;
  for (int i = 0; i < B; ++i) {
    double mx = L.at2(i, 0);
    for (int j = 1; j < B; ++j) mx = std::max(mx, L.at2(i, j));
    double z = 0.0;
    for (int j = 0; j < B; ++j) z += std::exp(L.at2(i, j) - mx);
    double logz = std::log(z) + mx;
    for (int j = 0; j < B; ++j) probs.at2(i, j) = std::exp(L.at2(i, j) - logz);
    loss += logz - L.at2(i, i);
  }
  loss /= B;
  bool rg = requires_grad(logits);
  Id id = push(Tensor::scalar(loss), rg);
  if (rg)
    nodes_[id].back = [logits, id, B, probs = std::move(probs)](Graph& g) {
      double gv = g.gbuf(id).v[0] / B;
      Tensor& gl = g.gbuf(logits);
      for (int i = 0; i < B; ++i)
        for (int j = 0; j < B; ++j)
          gl.at2(i, j) += gv * (probs.at2(i, j) - (i == j ? 1.0 : 0.0));
    };
  return id;
}

}  // namespace foley
