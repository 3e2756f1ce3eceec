// Copyright 2026 The sslasr Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "sslasr/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

#include "sslasr/kernels.hpp"

namespace sslasr::ad {

namespace {

void same_tape(Value a, Value b) {
  check(a.tape() == b.tape(), "values live on different tapes");
}

int64_t rows(const Tensor& t) {
  check(t.rank() == 2, "expected rank-2 tensor, got " + t.shape_str());
  return t.dim(0);
}
int64_t cols(const Tensor& t) { return t.dim(1); }

Tensor transposed(const Tensor& t) {
  const int64_t m = rows(t), n = cols(t);
  Tensor out({n, m});
  for (int64_t i = 0; i < m; ++i) {
    for (int64_t j = 0; j < n; ++j) out.at(j, i) = t.at(i, j);
  }
  return out;
}

int64_t ceildiv(int64_t a, int64_t b) { return (a + b - 1) / b; }

}  // namespace

Value Tape::param(ParamStore& store, const std::string& path) {
  Parameter& p = store.at(path);
  int idx = raw_node(p.value, {}, nullptr, p.trainable);
  if (p.trainable) bindings_.emplace_back(idx, &p);
  return wrap(idx);
}

int Tape::raw_node(Tensor value, std::vector<int> parents, BackwardFn backward,
                   bool force_requires_grad) {
  bool req = force_requires_grad;
  for (int p : parents) req = req || nodes_[p].requires_grad;
  Node n;
  n.value = std::move(value);
  n.parents = std::move(parents);
  n.requires_grad = req;
  if (req) n.backward = std::move(backward);
  nodes_.push_back(std::move(n));
  return static_cast<int>(nodes_.size()) - 1;
}

Tensor* Tape::grad_buf(int idx) {
  Node& n = nodes_[idx];
  if (!n.grad_live) {
    n.grad = Tensor::zeros(n.value.dims());
    n.grad_live = true;
  }
  return &n.grad;
}

void Tape::backward(Value loss) {
  check(loss.tape() == this, "loss lives on another tape");
  check(value(loss.idx()).numel() == 1, "backward() needs a scalar loss");
  (*grad_buf(loss.idx()))[0] = 1.0;
  for (int i = loss.idx(); i >= 0; --i) {
    Node& n = nodes_[i];
    if (n.requires_grad && n.grad_live && n.backward) n.backward(*this, i);
  }
}

void Tape::accumulate_param_grads() {
  for (auto& [idx, param] : bindings_) {
    if (!nodes_[idx].grad_live) continue;
    kernels::add(param->grad.data(), nodes_[idx].grad.data(), param->grad.data(),
                 static_cast<std::size_t>(param->grad.numel()));
  }
}

// ---------------------------------------------------------------------------
// elementwise
// ---------------------------------------------------------------------------

Value add(Value a, Value b) {
  same_tape(a, b);
  check(a.val().same_shape(b.val()), "add: shape " + a.val().shape_str() + " vs " + b.val().shape_str());
  Tape& t = *a.tape();
  Tensor out(a.dims());
  const auto n = static_cast<std::size_t>(out.numel());
  kernels::add(a.val().data(), b.val().data(), out.data(), n);
  int pa = a.idx(), pb = b.idx();
  return t.wrap(t.raw_node(std::move(out), {pa, pb}, [pa, pb](Tape& t, int self) {
    const Tensor& g = t.grad(self);
    const auto n = static_cast<std::size_t>(g.numel());
    if (t.requires_grad(pa)) kernels::add(t.grad_buf(pa)->data(), g.data(), t.grad_buf(pa)->data(), n);
    if (t.requires_grad(pb)) kernels::add(t.grad_buf(pb)->data(), g.data(), t.grad_buf(pb)->data(), n);
  }));
}

Value sub(Value a, Value b) {
  same_tape(a, b);
  check(a.val().same_shape(b.val()), "sub: shape mismatch");
  Tape& t = *a.tape();
  Tensor out(a.dims());
  const auto n = static_cast<std::size_t>(out.numel());
  kernels::sub(a.val().data(), b.val().data(), out.data(), n);
  int pa = a.idx(), pb = b.idx();
  return t.wrap(t.raw_node(std::move(out), {pa, pb}, [pa, pb](Tape& t, int self) {
    const Tensor& g = t.grad(self);
    const auto n = static_cast<std::size_t>(g.numel());
    if (t.requires_grad(pa)) kernels::add(t.grad_buf(pa)->data(), g.data(), t.grad_buf(pa)->data(), n);
    if (t.requires_grad(pb)) kernels::axpy(-1.0, g.data(), t.grad_buf(pb)->data(), n);
  }));
}

Value mul(Value a, Value b) {
  same_tape(a, b);
  check(a.val().same_shape(b.val()), "mul: shape mismatch");
  Tape& t = *a.tape();
  Tensor out(a.dims());
  const auto n = static_cast<std::size_t>(out.numel());
  kernels::mul(a.val().data(), b.val().data(), out.data(), n);
  int pa = a.idx(), pb = b.idx();
  return t.wrap(t.raw_node(std::move(out), {pa, pb}, [pa, pb](Tape& t, int self) {
    const Tensor& g = t.grad(self);
    const auto n = static_cast<std::size_t>(g.numel());
    if (t.requires_grad(pa)) {
      Tensor tmp(g.dims());
      kernels::mul(g.data(), t.value(pb).data(), tmp.data(), n);
      kernels::add(t.grad_buf(pa)->data(), tmp.data(), t.grad_buf(pa)->data(), n);
    }
    if (t.requires_grad(pb)) {
      Tensor tmp(g.dims());
      kernels::mul(g.data(), t.value(pa).data(), tmp.data(), n);
      kernels::add(t.grad_buf(pb)->data(), tmp.data(), t.grad_buf(pb)->data(), n);
    }
  }));
}

Value div(Value a, Value b) {
  same_tape(a, b);
  check(a.val().same_shape(b.val()), "div: shape mismatch");
  Tape& t = *a.tape();
  Tensor out(a.dims());
  const int64_t n = out.numel();
  for (int64_t i = 0; i < n; ++i) out[i] = a.val()[i] / b.val()[i];
  int pa = a.idx(), pb = b.idx();
  return t.wrap(t.raw_node(std::move(out), {pa, pb}, [pa, pb](Tape& t, int self) {
    const Tensor& g = t.grad(self);
    const Tensor& bv = t.value(pb);
    const int64_t n = g.numel();
    if (t.requires_grad(pa)) {
      Tensor* ga = t.grad_buf(pa);
      for (int64_t i = 0; i < n; ++i) (*ga)[i] += g[i] / bv[i];
    }
    if (t.requires_grad(pb)) {
      const Tensor& av = t.value(pa);
      Tensor* gb = t.grad_buf(pb);
      for (int64_t i = 0; i < n; ++i) (*gb)[i] -= g[i] * av[i] / (bv[i] * bv[i]);
    }
  }));
}

Value neg(Value a) { return scale(a, -1.0); }

Value scale(Value a, double s) {
  Tape& t = *a.tape();
  Tensor out(a.dims());
  const auto n = static_cast<std::size_t>(out.numel());
  kernels::scale(a.val().data(), s, out.data(), n);
  int pa = a.idx();
  return t.wrap(t.raw_node(std::move(out), {pa}, [pa, s](Tape& t, int self) {
    if (!t.requires_grad(pa)) return;
    const Tensor& g = t.grad(self);
    kernels::axpy(s, g.data(), t.grad_buf(pa)->data(), static_cast<std::size_t>(g.numel()));
  }));
}

Value add_scalar(Value a, double s) {
  Tape& t = *a.tape();
  Tensor out(a.dims());
  const int64_t n = out.numel();
  for (int64_t i = 0; i < n; ++i) out[i] = a.val()[i] + s;
  int pa = a.idx();
  return t.wrap(t.raw_node(std::move(out), {pa}, [pa](Tape& t, int self) {
    if (!t.requires_grad(pa)) return;
    const Tensor& g = t.grad(self);
    kernels::add(t.grad_buf(pa)->data(), g.data(), t.grad_buf(pa)->data(),
                 static_cast<std::size_t>(g.numel()));
  }));
}

Value clamp_min(Value a, double floor) {
  Tape& t = *a.tape();
  Tensor out(a.dims());
  const int64_t n = out.numel();
  for (int64_t i = 0; i < n; ++i) out[i] = a.val()[i] > floor ? a.val()[i] : floor;
  int pa = a.idx();
  return t.wrap(t.raw_node(std::move(out), {pa}, [pa, floor](Tape& t, int self) {
    if (!t.requires_grad(pa)) return;
    const Tensor& g = t.grad(self);
    const Tensor& av = t.value(pa);
    Tensor* ga = t.grad_buf(pa);
    for (int64_t i = 0; i < g.numel(); ++i) {
      if (av[i] > floor) (*ga)[i] += g[i];
    }
  }));
}

namespace {

template <typename Fwd, typename Bwd>
Value unary_op(Value a, Fwd fwd, Bwd bwd_from_y_and_x) {
  Tape& t = *a.tape();
  Tensor out(a.dims());
  const int64_t n = out.numel();
  for (int64_t i = 0; i < n; ++i) out[i] = fwd(a.val()[i]);
  int pa = a.idx();
  return t.wrap(t.raw_node(std::move(out), {pa}, [pa, bwd_from_y_and_x](Tape& t, int self) {
    if (!t.requires_grad(pa)) return;
    const Tensor& g = t.grad(self);
    const Tensor& y = t.value(self);
    const Tensor& x = t.value(pa);
    Tensor* ga = t.grad_buf(pa);
    for (int64_t i = 0; i < g.numel(); ++i) (*ga)[i] += g[i] * bwd_from_y_and_x(y[i], x[i]);
  }));
}

double sigmoid_s(double x) { return 1.0 / (1.0 + std::exp(-x)); }

}  // namespace

Value sigmoid(Value a) {
  return unary_op(a, sigmoid_s, [](double y, double) { return y * (1.0 - y); });
}

Value tanh_op(Value a) {
  return unary_op(a, [](double x) { return std::tanh(x); },
                  [](double y, double) { return 1.0 - y * y; });
}

Value swish(Value a) {
  return unary_op(a, [](double x) { return x * sigmoid_s(x); },
                  [](double y, double x) {
                    const double s = sigmoid_s(x);
                    return y + s * (1.0 - y);
                  });
}

Value exp_op(Value a) {
  return unary_op(a, [](double x) { return std::exp(x); },
                  [](double y, double) { return y; });
}

Value log_op(Value a) {
  return unary_op(a, [](double x) { return std::log(x); },
                  [](double, double x) { return 1.0 / x; });
}

Value sqrt_op(Value a) {
  return unary_op(a, [](double x) { return std::sqrt(x); },
                  [](double y, double) { return 0.5 / y; });
}

Value recip(Value a) {
  return unary_op(a, [](double x) { return 1.0 / x; },
                  [](double y, double) { return -y * y; });
}

// ---------------------------------------------------------------------------
// linear algebra / shape
// ---------------------------------------------------------------------------

Value matmul(Value a, Value b) {
  same_tape(a, b);
  const int64_t m = rows(a.val()), k = cols(a.val());
  check(rows(b.val()) == k, "matmul: inner dims " + a.val().shape_str() + " x " + b.val().shape_str());
  const int64_t n = cols(b.val());
  Tape& t = *a.tape();
  Tensor out({m, n});
  kernels::matmul_accum(a.val().data(), b.val().data(), out.data(), m, k, n);
  int pa = a.idx(), pb = b.idx();
  return t.wrap(t.raw_node(std::move(out), {pa, pb}, [pa, pb, m, k, n](Tape& t, int self) {
    const Tensor& g = t.grad(self);
    if (t.requires_grad(pa)) {
      Tensor bt = transposed(t.value(pb));
      kernels::matmul_accum(g.data(), bt.data(), t.grad_buf(pa)->data(), m, n, k);
    }
    if (t.requires_grad(pb)) {
      Tensor at = transposed(t.value(pa));
      kernels::matmul_accum(at.data(), g.data(), t.grad_buf(pb)->data(), k, m, n);
    }
  }));
}

Value transpose(Value a) {
  Tape& t = *a.tape();
  int pa = a.idx();
  return t.wrap(t.raw_node(transposed(a.val()), {pa}, [pa](Tape& t, int self) {
    if (!t.requires_grad(pa)) return;
    Tensor gt = transposed(t.grad(self));
    kernels::add(t.grad_buf(pa)->data(), gt.data(), t.grad_buf(pa)->data(),
                 static_cast<std::size_t>(gt.numel()));
  }));
}

Value add_rowvec(Value a, Value v) {
  same_tape(a, v);
  const int64_t m = rows(a.val()), n = cols(a.val());
  check(v.val().rank() == 1 && v.val().dim(0) == n, "add_rowvec: vector shape");
  Tape& t = *a.tape();
  Tensor out({m, n});
  for (int64_t i = 0; i < m; ++i) {
    kernels::add(a.val().data() + i * n, v.val().data(), out.data() + i * n,
                 static_cast<std::size_t>(n));
  }
  int pa = a.idx(), pv = v.idx();
  return t.wrap(t.raw_node(std::move(out), {pa, pv}, [pa, pv, m, n](Tape& t, int self) {
    const Tensor& g = t.grad(self);
    if (t.requires_grad(pa)) {
      kernels::add(t.grad_buf(pa)->data(), g.data(), t.grad_buf(pa)->data(),
                   static_cast<std::size_t>(g.numel()));
    }
    if (t.requires_grad(pv)) {
      Tensor* gv = t.grad_buf(pv);
      for (int64_t i = 0; i < m; ++i) {
        kernels::add(gv->data(), g.data() + i * n, gv->data(), static_cast<std::size_t>(n));
      }
    }
  }));
}

Value mul_rowvec(Value a, Value v) {
  same_tape(a, v);
  const int64_t m = rows(a.val()), n = cols(a.val());
  check(v.val().rank() == 1 && v.val().dim(0) == n, "mul_rowvec: vector shape");
  Tape& t = *a.tape();
  Tensor out({m, n});
  for (int64_t i = 0; i < m; ++i) {
    kernels::mul(a.val().data() + i * n, v.val().data(), out.data() + i * n,
                 static_cast<std::size_t>(n));
  }
  int pa = a.idx(), pv = v.idx();
  return t.wrap(t.raw_node(std::move(out), {pa, pv}, [pa, pv, m, n](Tape& t, int self) {
    const Tensor& g = t.grad(self);
    if (t.requires_grad(pa)) {
      Tensor* ga = t.grad_buf(pa);
      for (int64_t i = 0; i < m; ++i) {
        for (int64_t j = 0; j < n; ++j) ga->at(i, j) += g.at(i, j) * t.value(pv)[j];
      }
    }
    if (t.requires_grad(pv)) {
      Tensor* gv = t.grad_buf(pv);
      const Tensor& av = t.value(pa);
      for (int64_t i = 0; i < m; ++i) {
        for (int64_t j = 0; j < n; ++j) (*gv)[j] += g.at(i, j) * av.at(i, j);
      }
    }
  }));
}

Value mul_colvec(Value a, Value v) {
  same_tape(a, v);
  const int64_t m = rows(a.val()), n = cols(a.val());
  check(v.val().rank() == 1 && v.val().dim(0) == m, "mul_colvec: vector shape");
  Tape& t = *a.tape();
  Tensor out({m, n});
  for (int64_t i = 0; i < m; ++i) {
    kernels::scale(a.val().data() + i * n, v.val()[i], out.data() + i * n,
                   static_cast<std::size_t>(n));
  }
  int pa = a.idx(), pv = v.idx();
  return t.wrap(t.raw_node(std::move(out), {pa, pv}, [pa, pv, m, n](Tape& t, int self) {
    const Tensor& g = t.grad(self);
    if (t.requires_grad(pa)) {
      Tensor* ga = t.grad_buf(pa);
      for (int64_t i = 0; i < m; ++i) {
        kernels::axpy(t.value(pv)[i], g.data() + i * n, ga->data() + i * n,
                      static_cast<std::size_t>(n));
      }
    }
    if (t.requires_grad(pv)) {
      Tensor* gv = t.grad_buf(pv);
      const Tensor& av = t.value(pa);
      for (int64_t i = 0; i < m; ++i) {
        (*gv)[i] += kernels::dot(g.data() + i * n, av.data() + i * n, static_cast<std::size_t>(n));
      }
    }
  }));
}

Value concat_cols(Value a, Value b) {
  same_tape(a, b);
  const int64_t m = rows(a.val()), na = cols(a.val()), nb = cols(b.val());
  check(rows(b.val()) == m, "concat_cols: row mismatch");
  Tape& t = *a.tape();
  Tensor out({m, na + nb});
  for (int64_t i = 0; i < m; ++i) {
    std::memcpy(out.data() + i * (na + nb), a.val().data() + i * na, na * sizeof(double));
    std::memcpy(out.data() + i * (na + nb) + na, b.val().data() + i * nb, nb * sizeof(double));
  }
  int pa = a.idx(), pb = b.idx();
  return t.wrap(t.raw_node(std::move(out), {pa, pb}, [pa, pb, m, na, nb](Tape& t, int self) {
    const Tensor& g = t.grad(self);
    if (t.requires_grad(pa)) {
      Tensor* ga = t.grad_buf(pa);
      for (int64_t i = 0; i < m; ++i) {
        kernels::add(ga->data() + i * na, g.data() + i * (na + nb), ga->data() + i * na,
                     static_cast<std::size_t>(na));
      }
    }
    if (t.requires_grad(pb)) {
      Tensor* gb = t.grad_buf(pb);
      for (int64_t i = 0; i < m; ++i) {
        kernels::add(gb->data() + i * nb, g.data() + i * (na + nb) + na, gb->data() + i * nb,
                     static_cast<std::size_t>(nb));
      }
    }
  }));
}

Value slice_cols(Value a, int64_t c0, int64_t len) {
  const int64_t m = rows(a.val()), n = cols(a.val());
  check(c0 >= 0 && len >= 0 && c0 + len <= n, "slice_cols: out of range");
  Tape& t = *a.tape();
  Tensor out({m, len});
  for (int64_t i = 0; i < m; ++i) {
    std::memcpy(out.data() + i * len, a.val().data() + i * n + c0, len * sizeof(double));
  }
  int pa = a.idx();
  return t.wrap(t.raw_node(std::move(out), {pa}, [pa, c0, len, m, n](Tape& t, int self) {
    if (!t.requires_grad(pa)) return;
    const Tensor& g = t.grad(self);
    Tensor* ga = t.grad_buf(pa);
    for (int64_t i = 0; i < m; ++i) {
      kernels::add(ga->data() + i * n + c0, g.data() + i * len, ga->data() + i * n + c0,
                   static_cast<std::size_t>(len));
    }
  }));
}

Value concat_rows(const std::vector<Value>& parts) {
  check(!parts.empty(), "concat_rows: empty list");
  Tape& t = *parts[0].tape();
  const int64_t n = cols(parts[0].val());
  int64_t m = 0;
  std::vector<int> idxs;
  std::vector<int64_t> offsets;
  for (const Value& p : parts) {
    check(p.tape() == &t, "concat_rows: mixed tapes");
    check(cols(p.val()) == n, "concat_rows: column mismatch");
    idxs.push_back(p.idx());
    offsets.push_back(m);
    m += rows(p.val());
  }
  Tensor out({m, n});
  for (std::size_t k = 0; k < parts.size(); ++k) {
    std::memcpy(out.data() + offsets[k] * n, parts[k].val().data(),
                static_cast<std::size_t>(parts[k].val().numel()) * sizeof(double));
  }
  return t.wrap(t.raw_node(std::move(out), idxs, [idxs, offsets, n](Tape& t, int self) {
    const Tensor& g = t.grad(self);
    for (std::size_t k = 0; k < idxs.size(); ++k) {
      if (!t.requires_grad(idxs[k])) continue;
      Tensor* gp = t.grad_buf(idxs[k]);
      kernels::add(gp->data(), g.data() + offsets[k] * n, gp->data(),
                   static_cast<std::size_t>(gp->numel()));
    }
  }));
}

Value slice_rows(Value a, int64_t r0, int64_t len) {
  const int64_t m = rows(a.val()), n = cols(a.val());
  check(r0 >= 0 && len >= 0 && r0 + len <= m, "slice_rows: out of range");
  Tape& t = *a.tape();
  Tensor out({len, n});
  std::memcpy(out.data(), a.val().data() + r0 * n, static_cast<std::size_t>(len * n) * sizeof(double));
  int pa = a.idx();
  return t.wrap(t.raw_node(std::move(out), {pa}, [pa, r0, n](Tape& t, int self) {
    if (!t.requires_grad(pa)) return;
    const Tensor& g = t.grad(self);
    Tensor* ga = t.grad_buf(pa);
    kernels::add(ga->data() + r0 * n, g.data(), ga->data() + r0 * n,
                 static_cast<std::size_t>(g.numel()));
  }));
}

Value reshape(Value a, std::vector<int64_t> dims) {
  check(Tensor::numel_of(dims) == a.val().numel(), "reshape: numel mismatch");
  Tape& t = *a.tape();
  Tensor out(std::move(dims), a.val().vec());
  int pa = a.idx();
  return t.wrap(t.raw_node(std::move(out), {pa}, [pa](Tape& t, int self) {
    if (!t.requires_grad(pa)) return;
    const Tensor& g = t.grad(self);
    kernels::add(t.grad_buf(pa)->data(), g.data(), t.grad_buf(pa)->data(),
                 static_cast<std::size_t>(g.numel()));
  }));
}

// ---------------------------------------------------------------------------
// reductions
// ---------------------------------------------------------------------------

Value sum_all(Value a) {
  Tape& t = *a.tape();
  Tensor out = Tensor::scalar(kernels::sum(a.val().data(), static_cast<std::size_t>(a.val().numel())));
  int pa = a.idx();
  return t.wrap(t.raw_node(std::move(out), {pa}, [pa](Tape& t, int self) {
    if (!t.requires_grad(pa)) return;
    const double g = t.grad(self)[0];
    Tensor* ga = t.grad_buf(pa);
    for (int64_t i = 0; i < ga->numel(); ++i) (*ga)[i] += g;
  }));
}

Value mean_all(Value a) {
  check(a.val().numel() > 0, "mean_all: empty tensor");
  return scale(sum_all(a), 1.0 / static_cast<double>(a.val().numel()));
}

Value row_sum(Value a) {
  const int64_t m = rows(a.val()), n = cols(a.val());
  Tape& t = *a.tape();
  Tensor out({m});
  for (int64_t i = 0; i < m; ++i) {
    out[i] = kernels::sum(a.val().data() + i * n, static_cast<std::size_t>(n));
  }
  int pa = a.idx();
  return t.wrap(t.raw_node(std::move(out), {pa}, [pa, m, n](Tape& t, int self) {
    if (!t.requires_grad(pa)) return;
    const Tensor& g = t.grad(self);
    Tensor* ga = t.grad_buf(pa);
    for (int64_t i = 0; i < m; ++i) {
      for (int64_t j = 0; j < n; ++j) ga->at(i, j) += g[i];
    }
  }));
}

// ---------------------------------------------------------------------------
// nonlinear blocks
// ---------------------------------------------------------------------------

Value glu_cols(Value a) {
  const int64_t m = rows(a.val()), n2 = cols(a.val());
  check(n2 % 2 == 0, "glu_cols: odd column count");
  const int64_t n = n2 / 2;
  Tape& t = *a.tape();
  Tensor out({m, n});
  for (int64_t i = 0; i < m; ++i) {
    for (int64_t j = 0; j < n; ++j) {
      out.at(i, j) = a.val().at(i, j) * sigmoid_s(a.val().at(i, n + j));
    }
  }
  int pa = a.idx();
  return t.wrap(t.raw_node(std::move(out), {pa}, [pa, m, n](Tape& t, int self) {
    if (!t.requires_grad(pa)) return;
    const Tensor& g = t.grad(self);
    const Tensor& x = t.value(pa);
    Tensor* ga = t.grad_buf(pa);
    for (int64_t i = 0; i < m; ++i) {
      for (int64_t j = 0; j < n; ++j) {
        const double s = sigmoid_s(x.at(i, n + j));
        ga->at(i, j) += g.at(i, j) * s;
        ga->at(i, n + j) += g.at(i, j) * x.at(i, j) * s * (1.0 - s);
      }
    }
  }));
}

Value softmax_rows(Value a) {
  const int64_t m = rows(a.val()), n = cols(a.val());
  Tape& t = *a.tape();
  Tensor out({m, n});
  for (int64_t i = 0; i < m; ++i) {
    const double* x = a.val().data() + i * n;
    double* y = out.data() + i * n;
    const double mx = kernels::max(x, static_cast<std::size_t>(n));
    double z = 0.0;
    for (int64_t j = 0; j < n; ++j) {
      y[j] = std::exp(x[j] - mx);
      z += y[j];
    }
    kernels::scale(y, 1.0 / z, y, static_cast<std::size_t>(n));
  }
  int pa = a.idx();
  return t.wrap(t.raw_node(std::move(out), {pa}, [pa, m, n](Tape& t, int self) {
    if (!t.requires_grad(pa)) return;
    const Tensor& g = t.grad(self);
    const Tensor& y = t.value(self);
    Tensor* ga = t.grad_buf(pa);
    for (int64_t i = 0; i < m; ++i) {
      const double gy = kernels::dot(g.data() + i * n, y.data() + i * n, static_cast<std::size_t>(n));
      for (int64_t j = 0; j < n; ++j) {
        ga->at(i, j) += y.at(i, j) * (g.at(i, j) - gy);
      }
    }
  }));
}

Value log_softmax_rows(Value a) {
  const int64_t m = rows(a.val()), n = cols(a.val());
  Tape& t = *a.tape();
  Tensor out({m, n});
  for (int64_t i = 0; i < m; ++i) {
    const double* x = a.val().data() + i * n;
    double* y = out.data() + i * n;
    const double mx = kernels::max(x, static_cast<std::size_t>(n));
    double z = 0.0;
    for (int64_t j = 0; j < n; ++j) z += std::exp(x[j] - mx);
    const double lse = mx + std::log(z);
    for (int64_t j = 0; j < n; ++j) y[j] = x[j] - lse;
  }
  int pa = a.idx();
  return t.wrap(t.raw_node(std::move(out), {pa}, [pa, m, n](Tape& t, int self) {
    if (!t.requires_grad(pa)) return;
    const Tensor& g = t.grad(self);
    const Tensor& y = t.value(self);
    Tensor* ga = t.grad_buf(pa);
    for (int64_t i = 0; i < m; ++i) {
      const double gs = kernels::sum(g.data() + i * n, static_cast<std::size_t>(n));
      for (int64_t j = 0; j < n; ++j) {
        ga->at(i, j) += g.at(i, j) - std::exp(y.at(i, j)) * gs;
      }
    }
  }));
}

Value layer_norm_rows(Value a, Value gamma, Value beta, double eps) {
  same_tape(a, gamma);
  same_tape(a, beta);
  const int64_t m = rows(a.val()), n = cols(a.val());
  check(gamma.val().rank() == 1 && gamma.val().dim(0) == n, "layer_norm: gamma shape");
  check(beta.val().rank() == 1 && beta.val().dim(0) == n, "layer_norm: beta shape");
  Tape& t = *a.tape();
  Tensor out({m, n});
  Tensor xhat({m, n});
  std::vector<double> inv_std(static_cast<std::size_t>(m));
  for (int64_t i = 0; i < m; ++i) {
    const double* x = a.val().data() + i * n;
    const double mu = kernels::sum(x, static_cast<std::size_t>(n)) / static_cast<double>(n);
    double var = 0.0;
    for (int64_t j = 0; j < n; ++j) var += (x[j] - mu) * (x[j] - mu);
    var /= static_cast<double>(n);
    const double is = 1.0 / std::sqrt(var + eps);
    inv_std[static_cast<std::size_t>(i)] = is;
    for (int64_t j = 0; j < n; ++j) {
      xhat.at(i, j) = (x[j] - mu) * is;
      out.at(i, j) = xhat.at(i, j) * gamma.val()[j] + beta.val()[j];
    }
  }
  int pa = a.idx(), pg = gamma.idx(), pb = beta.idx();
  int xhat_idx = t.raw_node(std::move(xhat), {}, nullptr, false);  // saved activations
  return t.wrap(t.raw_node(std::move(out), {pa, pg, pb},
                           [pa, pg, pb, xhat_idx, m, n, inv_std](Tape& t, int self) {
    const Tensor& g = t.grad(self);
    const Tensor& xh = t.value(xhat_idx);
    const Tensor& gam = t.value(pg);
    if (t.requires_grad(pg)) {
      Tensor* gg = t.grad_buf(pg);
      for (int64_t i = 0; i < m; ++i) {
        for (int64_t j = 0; j < n; ++j) (*gg)[j] += g.at(i, j) * xh.at(i, j);
      }
    }
    if (t.requires_grad(pb)) {
      Tensor* gb = t.grad_buf(pb);
      for (int64_t i = 0; i < m; ++i) {
        for (int64_t j = 0; j < n; ++j) (*gb)[j] += g.at(i, j);
      }
    }
    if (t.requires_grad(pa)) {
      Tensor* ga = t.grad_buf(pa);
      for (int64_t i = 0; i < m; ++i) {
        double mean_gg = 0.0, mean_gx = 0.0;
        for (int64_t j = 0; j < n; ++j) {
          const double gg = g.at(i, j) * gam[j];
          mean_gg += gg;
          mean_gx += gg * xh.at(i, j);
        }
        mean_gg /= static_cast<double>(n);
        mean_gx /= static_cast<double>(n);
        const double is = inv_std[static_cast<std::size_t>(i)];
        for (int64_t j = 0; j < n; ++j) {
          const double gg = g.at(i, j) * gam[j];
          ga->at(i, j) += is * (gg - mean_gg - xh.at(i, j) * mean_gx);
        }
      }
    }
  }));
}

Value batch_norm_cols(Value a, Value gamma, Value beta, double eps, int64_t valid,
                      std::vector<double>* batch_mean, std::vector<double>* batch_var) {
  same_tape(a, gamma);
  same_tape(a, beta);
  const int64_t m = rows(a.val()), n = cols(a.val());
  check(valid >= 1 && valid <= m, "batch_norm: valid out of range");
  check(gamma.val().rank() == 1 && gamma.val().dim(0) == n, "batch_norm: gamma shape");
  Tape& t = *a.tape();
  Tensor out({m, n});
  Tensor xhat({valid, n});
  std::vector<double> inv_std(static_cast<std::size_t>(n));
  if (batch_mean) batch_mean->assign(static_cast<std::size_t>(n), 0.0);
  if (batch_var) batch_var->assign(static_cast<std::size_t>(n), 0.0);
  for (int64_t j = 0; j < n; ++j) {
    double mu = 0.0;
    for (int64_t i = 0; i < valid; ++i) mu += a.val().at(i, j);
    mu /= static_cast<double>(valid);
    double var = 0.0;
    for (int64_t i = 0; i < valid; ++i) {
      const double d = a.val().at(i, j) - mu;
      var += d * d;
    }
    var /= static_cast<double>(valid);
    const double is = 1.0 / std::sqrt(var + eps);
    inv_std[static_cast<std::size_t>(j)] = is;
    if (batch_mean) (*batch_mean)[static_cast<std::size_t>(j)] = mu;
    if (batch_var) (*batch_var)[static_cast<std::size_t>(j)] = var;
    for (int64_t i = 0; i < valid; ++i) {
      xhat.at(i, j) = (a.val().at(i, j) - mu) * is;
      out.at(i, j) = xhat.at(i, j) * gamma.val()[j] + beta.val()[j];
    }
  }
  int pa = a.idx(), pg = gamma.idx(), pb = beta.idx();
  int xhat_idx = t.raw_node(std::move(xhat), {}, nullptr, false);
  return t.wrap(t.raw_node(std::move(out), {pa, pg, pb},
                           [pa, pg, pb, xhat_idx, n, valid, inv_std](Tape& t, int self) {
    const Tensor& g = t.grad(self);
    const Tensor& xh = t.value(xhat_idx);
    const Tensor& gam = t.value(pg);
    if (t.requires_grad(pg)) {
      Tensor* gg = t.grad_buf(pg);
      for (int64_t i = 0; i < valid; ++i) {
        for (int64_t j = 0; j < n; ++j) (*gg)[j] += g.at(i, j) * xh.at(i, j);
      }
    }
    if (t.requires_grad(pb)) {
      Tensor* gb = t.grad_buf(pb);
      for (int64_t i = 0; i < valid; ++i) {
        for (int64_t j = 0; j < n; ++j) (*gb)[j] += g.at(i, j);
      }
    }
    if (t.requires_grad(pa)) {
      Tensor* ga = t.grad_buf(pa);
      for (int64_t j = 0; j < n; ++j) {
        double mean_gg = 0.0, mean_gx = 0.0;
        for (int64_t i = 0; i < valid; ++i) {
          const double gg = g.at(i, j) * gam[j];
          mean_gg += gg;
          mean_gx += gg * xh.at(i, j);
        }
        mean_gg /= static_cast<double>(valid);
        mean_gx /= static_cast<double>(valid);
        const double is = inv_std[static_cast<std::size_t>(j)];
        for (int64_t i = 0; i < valid; ++i) {
          const double gg = g.at(i, j) * gam[j];
          ga->at(i, j) += is * (gg - mean_gg - xh.at(i, j) * mean_gx);
        }
      }
    }
  }));
}

// ---------------------------------------------------------------------------
// convolutions
// ---------------------------------------------------------------------------

Value conv1d_depthwise(Value x, Value w, Value b, int64_t valid) {
  same_tape(x, w);
  same_tape(x, b);
  const int64_t m = rows(x.val()), c = cols(x.val());
  const int64_t k = rows(w.val());
  check(cols(w.val()) == c, "conv1d_depthwise: channel mismatch");
  check(b.val().rank() == 1 && b.val().dim(0) == c, "conv1d_depthwise: bias shape");
  check(valid >= 1 && valid <= m, "conv1d_depthwise: valid out of range");
  const int64_t pad = (k - 1) / 2;
  Tape& t = *x.tape();
  Tensor out({m, c});
  for (int64_t i = 0; i < valid; ++i) {
    double* y = out.data() + i * c;
    std::memcpy(y, b.val().data(), c * sizeof(double));
    for (int64_t ki = 0; ki < k; ++ki) {
      const int64_t s = i - pad + ki;
      if (s < 0 || s >= valid) continue;
      const double* xr = x.val().data() + s * c;
      const double* wr = w.val().data() + ki * c;
      for (int64_t j = 0; j < c; ++j) y[j] = std::fma(wr[j], xr[j], y[j]);
    }
  }
  int px = x.idx(), pw = w.idx(), pb = b.idx();
  return t.wrap(t.raw_node(std::move(out), {px, pw, pb},
                           [px, pw, pb, k, c, valid, pad](Tape& t, int self) {
    const Tensor& g = t.grad(self);
    const Tensor& xv = t.value(px);
    const Tensor& wv = t.value(pw);
    Tensor* gx = t.requires_grad(px) ? t.grad_buf(px) : nullptr;
    Tensor* gw = t.requires_grad(pw) ? t.grad_buf(pw) : nullptr;
    Tensor* gb = t.requires_grad(pb) ? t.grad_buf(pb) : nullptr;
    for (int64_t i = 0; i < valid; ++i) {
      const double* gr = g.data() + i * c;
      if (gb) {
        for (int64_t j = 0; j < c; ++j) (*gb)[j] += gr[j];
      }
      for (int64_t ki = 0; ki < k; ++ki) {
        const int64_t s = i - pad + ki;
        if (s < 0 || s >= valid) continue;
        if (gx) {
          const double* wr = wv.data() + ki * c;
          double* gxr = gx->data() + s * c;
          for (int64_t j = 0; j < c; ++j) gxr[j] = std::fma(wr[j], gr[j], gxr[j]);
        }
        if (gw) {
          const double* xr = xv.data() + s * c;
          double* gwr = gw->data() + ki * c;
          for (int64_t j = 0; j < c; ++j) gwr[j] = std::fma(xr[j], gr[j], gwr[j]);
        }
      }
    }
  }));
}

Value conv2d(Value x, Value w, Value b, int64_t stride_t, int64_t stride_f, int64_t valid) {
  same_tape(x, w);
  same_tape(x, b);
  check(x.val().rank() == 3, "conv2d: expected [T,F,Cin] input");
  check(w.val().rank() == 4, "conv2d: expected [kh,kw,Cin,Cout] weight");
  const int64_t T = x.val().dim(0), F = x.val().dim(1), ci_n = x.val().dim(2);
  const int64_t kh = w.val().dim(0), kw = w.val().dim(1);
  check(w.val().dim(2) == ci_n, "conv2d: input channel mismatch");
  const int64_t co_n = w.val().dim(3);
  check(b.val().rank() == 1 && b.val().dim(0) == co_n, "conv2d: bias shape");
  check(valid >= 1 && valid <= T, "conv2d: valid out of range");
  check(stride_t >= 1 && stride_f >= 1, "conv2d: bad stride");
  const int64_t To = ceildiv(T, stride_t), Fo = ceildiv(F, stride_f);
  const int64_t valid_o = ceildiv(valid, stride_t);
  const int64_t pt = (kh - 1) / 2, pf = (kw - 1) / 2;
  Tape& t = *x.tape();
  Tensor out({To, Fo, co_n});
  for (int64_t to = 0; to < valid_o; ++to) {
    for (int64_t fo = 0; fo < Fo; ++fo) {
      double* y = out.data() + (to * Fo + fo) * co_n;
      std::memcpy(y, b.val().data(), co_n * sizeof(double));
      for (int64_t i = 0; i < kh; ++i) {
        const int64_t s = to * stride_t - pt + i;
        if (s < 0 || s >= valid) continue;
        for (int64_t j = 0; j < kw; ++j) {
          const int64_t u = fo * stride_f - pf + j;
          if (u < 0 || u >= F) continue;
          const double* xr = x.val().data() + (s * F + u) * ci_n;
          const double* wr = w.val().data() + (i * kw + j) * ci_n * co_n;
          for (int64_t ci = 0; ci < ci_n; ++ci) {
            kernels::axpy(xr[ci], wr + ci * co_n, y, static_cast<std::size_t>(co_n));
          }
        }
      }
    }
  }
  int px = x.idx(), pw = w.idx(), pb = b.idx();
  return t.wrap(t.raw_node(
      std::move(out), {px, pw, pb},
      [px, pw, pb, T, F, ci_n, kh, kw, co_n, stride_t, stride_f, valid, Fo](Tape& t, int self) {
        const Tensor& g = t.grad(self);
        const Tensor& xv = t.value(px);
        const Tensor& wv = t.value(pw);
        Tensor* gx = t.requires_grad(px) ? t.grad_buf(px) : nullptr;
        Tensor* gw = t.requires_grad(pw) ? t.grad_buf(pw) : nullptr;
        Tensor* gb = t.requires_grad(pb) ? t.grad_buf(pb) : nullptr;
        const int64_t pt = (kh - 1) / 2, pf = (kw - 1) / 2;
        const int64_t valid_o = ceildiv(valid, stride_t);
        for (int64_t to = 0; to < valid_o; ++to) {
          for (int64_t fo = 0; fo < Fo; ++fo) {
            const double* gr = g.data() + (to * Fo + fo) * co_n;
            if (gb) {
              for (int64_t o = 0; o < co_n; ++o) (*gb)[o] += gr[o];
            }
            for (int64_t i = 0; i < kh; ++i) {
              const int64_t s = to * stride_t - pt + i;
              if (s < 0 || s >= valid) continue;
              for (int64_t j = 0; j < kw; ++j) {
                const int64_t u = fo * stride_f - pf + j;
                if (u < 0 || u >= F) continue;
                const double* xr = xv.data() + (s * F + u) * ci_n;
                const double* wr = wv.data() + (i * kw + j) * ci_n * co_n;
                for (int64_t ci = 0; ci < ci_n; ++ci) {
                  if (gw) {
                    double* gwr = gw->data() + ((i * kw + j) * ci_n + ci) * co_n;
                    kernels::axpy(xr[ci], gr, gwr, static_cast<std::size_t>(co_n));
                  }
                  if (gx) {
                    gx->data()[(s * F + u) * ci_n + ci] +=
                        kernels::dot(wr + ci * co_n, gr, static_cast<std::size_t>(co_n));
                  }
                }
              }
            }
          }
        }
      }));
}

// ---------------------------------------------------------------------------
// indexing
// ---------------------------------------------------------------------------

Value embedding_rows(Value table, const std::vector<int64_t>& ids) {
  const int64_t v = rows(table.val()), d = cols(table.val());
  Tape& t = *table.tape();
  const int64_t m = static_cast<int64_t>(ids.size());
  Tensor out({m, d});
  for (int64_t i = 0; i < m; ++i) {
    check(ids[i] >= 0 && ids[i] < v, "embedding_rows: id out of range");
    std::memcpy(out.data() + i * d, table.val().data() + ids[i] * d, d * sizeof(double));
  }
  int pt = table.idx();
  return t.wrap(t.raw_node(std::move(out), {pt}, [pt, ids, d](Tape& t, int self) {
    if (!t.requires_grad(pt)) return;
    const Tensor& g = t.grad(self);
    Tensor* gt = t.grad_buf(pt);
    for (std::size_t i = 0; i < ids.size(); ++i) {
      kernels::add(gt->data() + ids[i] * d, g.data() + static_cast<int64_t>(i) * d,
                   gt->data() + ids[i] * d, static_cast<std::size_t>(d));
    }
  }));
}

Value gather_rows(Value a, const std::vector<int64_t>& rows_idx) {
  return embedding_rows(a, rows_idx);
}

Value gather_per_row(Value a, const std::vector<int64_t>& cols_idx, int64_t k) {
  const int64_t m = rows(a.val()), n = cols(a.val());
  check(static_cast<int64_t>(cols_idx.size()) == m * k, "gather_per_row: index count");
  Tape& t = *a.tape();
  Tensor out({m, k});
  for (int64_t i = 0; i < m; ++i) {
    for (int64_t j = 0; j < k; ++j) {
      const int64_t cj = cols_idx[static_cast<std::size_t>(i * k + j)];
      check(cj >= 0 && cj < n, "gather_per_row: column out of range");
      out.at(i, j) = a.val().at(i, cj);
    }
  }
  int pa = a.idx();
  return t.wrap(t.raw_node(std::move(out), {pa}, [pa, cols_idx, k, m](Tape& t, int self) {
    if (!t.requires_grad(pa)) return;
    const Tensor& g = t.grad(self);
    Tensor* ga = t.grad_buf(pa);
    for (int64_t i = 0; i < m; ++i) {
      for (int64_t j = 0; j < k; ++j) {
        ga->at(i, cols_idx[static_cast<std::size_t>(i * k + j)]) += g.at(i, j);
      }
    }
  }));
}

Value replace_rows(Value x, const std::vector<uint8_t>& mask, Value row) {
  same_tape(x, row);
  const int64_t m = rows(x.val()), n = cols(x.val());
  check(static_cast<int64_t>(mask.size()) == m, "replace_rows: mask length");
  check(row.val().rank() == 1 && row.val().dim(0) == n, "replace_rows: row shape");
  Tape& t = *x.tape();
  Tensor out = x.val();
  for (int64_t i = 0; i < m; ++i) {
    if (mask[static_cast<std::size_t>(i)]) {
      std::memcpy(out.data() + i * n, row.val().data(), n * sizeof(double));
    }
  }
  int px = x.idx(), pr = row.idx();
  return t.wrap(t.raw_node(std::move(out), {px, pr}, [px, pr, mask, n, m](Tape& t, int self) {
    const Tensor& g = t.grad(self);
    if (t.requires_grad(px)) {
      Tensor* gx = t.grad_buf(px);
      for (int64_t i = 0; i < m; ++i) {
        if (!mask[static_cast<std::size_t>(i)]) {
          kernels::add(gx->data() + i * n, g.data() + i * n, gx->data() + i * n,
                       static_cast<std::size_t>(n));
        }
      }
    }
    if (t.requires_grad(pr)) {
      Tensor* gr = t.grad_buf(pr);
      for (int64_t i = 0; i < m; ++i) {
        if (mask[static_cast<std::size_t>(i)]) {
          kernels::add(gr->data(), g.data() + i * n, gr->data(), static_cast<std::size_t>(n));
        }
      }
    }
  }));
}

Value zero_rows_from(Value x, int64_t row0) {
  const int64_t m = rows(x.val()), n = cols(x.val());
  check(row0 >= 0 && row0 <= m, "zero_rows_from: out of range");
  Tape& t = *x.tape();
  Tensor out = x.val();
  std::fill(out.vec().begin() + static_cast<std::size_t>(row0 * n), out.vec().end(), 0.0);
  int px = x.idx();
  return t.wrap(t.raw_node(std::move(out), {px}, [px, row0, n](Tape& t, int self) {
    if (!t.requires_grad(px)) return;
    const Tensor& g = t.grad(self);
    Tensor* gx = t.grad_buf(px);
    kernels::add(gx->data(), g.data(), gx->data(), static_cast<std::size_t>(row0 * n));
  }));
}

Value stack_time_pairs(Value x) {
  const int64_t m = rows(x.val()), c = cols(x.val());
  const int64_t mo = ceildiv(m, 2);
  Tape& t = *x.tape();
  Tensor out({mo, 2 * c});
  for (int64_t p = 0; p < mo; ++p) {
    std::memcpy(out.data() + p * 2 * c, x.val().data() + (2 * p) * c, c * sizeof(double));
    if (2 * p + 1 < m) {
      std::memcpy(out.data() + p * 2 * c + c, x.val().data() + (2 * p + 1) * c, c * sizeof(double));
    }
  }
  int px = x.idx();
  return t.wrap(t.raw_node(std::move(out), {px}, [px, m, c, mo](Tape& t, int self) {
    if (!t.requires_grad(px)) return;
    const Tensor& g = t.grad(self);
    Tensor* gx = t.grad_buf(px);
    for (int64_t p = 0; p < mo; ++p) {
      kernels::add(gx->data() + (2 * p) * c, g.data() + p * 2 * c, gx->data() + (2 * p) * c,
                   static_cast<std::size_t>(c));
      if (2 * p + 1 < m) {
        kernels::add(gx->data() + (2 * p + 1) * c, g.data() + p * 2 * c + c,
                     gx->data() + (2 * p + 1) * c, static_cast<std::size_t>(c));
      }
    }
  }));
}

Value rel_bias_matrix(Value v, int64_t t_len) {
  check(v.val().rank() == 1, "rel_bias_matrix: expected vector");
  const int64_t span = v.val().dim(0);
  check(span % 2 == 1, "rel_bias_matrix: span must be odd (2R+1)");
  const int64_t radius = (span - 1) / 2;
  Tape& t = *v.tape();
  Tensor out({t_len, t_len});
  auto clamp_idx = [radius, span](int64_t rel) {
    int64_t k = rel + radius;
    if (k < 0) k = 0;
    if (k >= span) k = span - 1;
    return k;
  };
  for (int64_t i = 0; i < t_len; ++i) {
    for (int64_t j = 0; j < t_len; ++j) out.at(i, j) = v.val()[clamp_idx(i - j)];
  }
  int pv = v.idx();
  return t.wrap(t.raw_node(std::move(out), {pv}, [pv, t_len, radius, span](Tape& t, int self) {
    if (!t.requires_grad(pv)) return;
    const Tensor& g = t.grad(self);
    Tensor* gv = t.grad_buf(pv);
    for (int64_t i = 0; i < t_len; ++i) {
      for (int64_t j = 0; j < t_len; ++j) {
        int64_t k = i - j + radius;
        if (k < 0) k = 0;
        if (k >= span) k = span - 1;
        (*gv)[k] += g.at(i, j);
      }
    }
  }));
}

// ---------------------------------------------------------------------------
// losses
// ---------------------------------------------------------------------------

Value nll_rows(Value logp, const std::vector<int64_t>& targets) {
  const int64_t m = rows(logp.val()), n = cols(logp.val());
  check(static_cast<int64_t>(targets.size()) == m, "nll_rows: target count");
  Tape& t = *logp.tape();
  double loss = 0.0;
  for (int64_t i = 0; i < m; ++i) {
    check(targets[i] >= 0 && targets[i] < n, "nll_rows: target out of range");
    loss -= logp.val().at(i, targets[i]);
  }
  loss /= static_cast<double>(m);
  int pl = logp.idx();
  return t.wrap(t.raw_node(Tensor::scalar(loss), {pl}, [pl, targets, m](Tape& t, int self) {
    if (!t.requires_grad(pl)) return;
    const double g = t.grad(self)[0];
    Tensor* gl = t.grad_buf(pl);
    for (int64_t i = 0; i < m; ++i) {
      gl->at(i, targets[static_cast<std::size_t>(i)]) -= g / static_cast<double>(m);
    }
  }));
}

}  // namespace sslasr::ad
