// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <functional>
#include <memory>
#include <stdexcept>
#include <vector>

#include "idg/tensor.hpp"

namespace idg {

struct Var {
  int id = -1;
  bool valid() const { return id >= 0; }
};

// Reverse-mode tape. Nodes are created in topological order by construction;
// backward() replays the tape from the root downwards. One tape per sample,
// discarded after the step.
template <typename T>
class Tape {
 public:
  Var input(Tensor<T> v, bool needs_grad) {
    return push(std::move(v), needs_grad, {});
  }

  Var constant(Tensor<T> v) { return push(std::move(v), false, {}); }

  Var scalar(T v) { return constant(Tensor<T>({1, 1}, {v})); }

  const Tensor<T>& val(Var x) const { return nodes_[x.id].value; }
  Tensor<T>& grad(Var x) { return nodes_[x.id].grad; }
  bool needs_grad(Var x) const { return nodes_[x.id].needs; }

  // ---- linear algebra ----

  Var matmul(Var a, Var b, bool ta = false, bool tb = false) {
    Tensor<T> out = idg::matmul(val(a), val(b), ta, tb);
    Var r = push(std::move(out), needs(a) || needs(b), [=](Tape& t) {
      const Tensor<T>& g = t.grad_of_node(r_);
      // dA = dC * B^T (modulo transposes), dB = A^T * dC
      if (t.needs(a)) t.accum_matmul_grad_a(a, b, g, ta, tb);
      if (t.needs(b)) t.accum_matmul_grad_b(a, b, g, ta, tb);
    });
    return r;
  }

  Var add(Var a, Var b) {
    Tensor<T> out = idg::add(val(a), val(b));
    Var r = push(std::move(out), needs(a) || needs(b), [=](Tape& t) {
      const Tensor<T>& g = t.grad_of_node(r_);
      if (t.needs(a)) t.accum(a, g);
      if (t.needs(b)) t.accum(b, g);
    });
    return r;
  }

  Var sub(Var a, Var b) {
    Tensor<T> out = idg::sub(val(a), val(b));
    Var r = push(std::move(out), needs(a) || needs(b), [=](Tape& t) {
      const Tensor<T>& g = t.grad_of_node(r_);
      if (t.needs(a)) t.accum(a, g);
      if (t.needs(b)) t.accum_neg(b, g);
    });
    return r;
  }

  Var mul(Var a, Var b) {
    Tensor<T> out = idg::mul(val(a), val(b));
    Var r = push(std::move(out), needs(a) || needs(b), [=](Tape& t) {
      const Tensor<T>& g = t.grad_of_node(r_);
      if (t.needs(a)) t.accum_mul(a, t.val(b), g);
      if (t.needs(b)) t.accum_mul(b, t.val(a), g);
    });
    return r;
  }

  Var scale(Var a, T s) {
    Tensor<T> out = idg::scale(val(a), s);
    Var r = push(std::move(out), needs(a), [=](Tape& t) {
      if (t.needs(a)) {
        const Tensor<T>& g = t.grad_of_node(r_);
        Tensor<T>& ga = t.grad(a);
        for (std::size_t i = 0; i < g.numel(); ++i) ga.data[i] += s * g.data[i];
      }
    });
    return r;
  }

  // M[n x d] + row[1 x d], broadcast over rows.
  Var add_rowvec(Var m, Var row) {
    const Tensor<T>& mv = val(m);
    const Tensor<T>& rv = val(row);
    if (mv.shape.size() != 2 || rv.shape.size() != 2 || rv.shape[0] != 1 ||
        rv.shape[1] != mv.shape[1])
      throw std::invalid_argument("add_rowvec: incompatible shapes " +
                                  mv.shape_str() + " vs " + rv.shape_str());
    Tensor<T> out = mv;
    for (std::size_t i = 0; i < mv.shape[0]; ++i)
      for (std::size_t j = 0; j < mv.shape[1]; ++j)
        out.at(i, j) += rv.at(0, j);
    Var r = push(std::move(out), needs(m) || needs(row), [=](Tape& t) {
      const Tensor<T>& g = t.grad_of_node(r_);
      if (t.needs(m)) t.accum(m, g);
      if (t.needs(row)) {
        Tensor<T>& gr = t.grad(row);
        for (std::size_t i = 0; i < g.shape[0]; ++i)
          for (std::size_t j = 0; j < g.shape[1]; ++j)
            gr.at(0, j) += g.at(i, j);
      }
    });
    return r;
  }

  // ---- pointwise nonlinearities ----

  Var abs(Var a) {
    return unary(a, [](T x) { return std::abs(x); },
                 [](T x, T) { return x > T(0) ? T(1) : (x < T(0) ? T(-1) : T(0)); });
  }

  Var relu(Var a) {
    return unary(a, [](T x) { return x > T(0) ? x : T(0); },
                 [](T x, T) { return x > T(0) ? T(1) : T(0); });
  }

  Var sigmoid(Var a) {
    return unary(a, [](T x) { return T(1) / (T(1) + std::exp(-x)); },
                 [](T, T y) { return y * (T(1) - y); });
  }

  Var exp(Var a) {
    return unary(a, [](T x) { return std::exp(x); }, [](T, T y) { return y; });
  }

  Var log(Var a) {
    return unary(a, [](T x) { return std::log(x); },
                 [](T x, T) { return T(1) / x; });
  }

  Var neg(Var a) { return scale(a, T(-1)); }

  Var div(Var a, Var b) {
    check_same_shape(val(a), val(b), "div");
    Tensor<T> out = val(a);
    const Tensor<T>& bv = val(b);
    for (std::size_t i = 0; i < out.numel(); ++i) out.data[i] /= bv.data[i];
    Var r = push(std::move(out), needs(a) || needs(b), [=](Tape& t) {
      const Tensor<T>& g = t.grad_of_node(r_);
      const Tensor<T>& xa = t.val(a);
      const Tensor<T>& xb = t.val(b);
      for (std::size_t i = 0; i < g.numel(); ++i) {
        if (t.needs(a)) t.grad(a).data[i] += g.data[i] / xb.data[i];
        if (t.needs(b))
          t.grad(b).data[i] -=
              g.data[i] * xa.data[i] / (xb.data[i] * xb.data[i]);
      }
    });
    return r;
  }

  Var maximum(Var a, Var b) { return minmax(a, b, true); }
  Var minimum(Var a, Var b) { return minmax(a, b, false); }

  // ---- shape ops ----

  Var reshape(Var a, std::vector<std::size_t> s) {
    Tensor<T> out = idg::reshape(val(a), s);
    Var r = push(std::move(out), needs(a), [=](Tape& t) {
      if (t.needs(a)) {
        const Tensor<T>& g = t.grad_of_node(r_);
        Tensor<T>& ga = t.grad(a);
        for (std::size_t i = 0; i < g.numel(); ++i) ga.data[i] += g.data[i];
      }
    });
    return r;
  }

  Var transpose(Var a) {
    Tensor<T> out = idg::transpose(val(a));
    Var r = push(std::move(out), needs(a), [=](Tape& t) {
      if (t.needs(a)) {
        const Tensor<T>& g = t.grad_of_node(r_);
        Tensor<T>& ga = t.grad(a);
        for (std::size_t i = 0; i < g.shape[0]; ++i)
          for (std::size_t j = 0; j < g.shape[1]; ++j)
            ga.at(j, i) += g.at(i, j);
      }
    });
    return r;
  }

  Var concat_rows(const std::vector<Var>& parts) {
    if (parts.empty()) throw std::invalid_argument("concat_rows: empty");
    std::size_t cols = val(parts[0]).shape[1];
    std::size_t rows = 0;
    bool any = false;
    for (Var p : parts) {
      const Tensor<T>& v = val(p);
      if (v.shape.size() != 2 || v.shape[1] != cols)
        throw std::invalid_argument("concat_rows: column mismatch");
      rows += v.shape[0];
      any = any || needs(p);
    }
    Tensor<T> out({rows, cols});
    std::size_t r0 = 0;
    for (Var p : parts) {
      const Tensor<T>& v = val(p);
      std::copy(v.data.begin(), v.data.end(), out.data.begin() + r0 * cols);
      r0 += v.shape[0];
    }
    std::vector<Var> ps = parts;
    Var r = push(std::move(out), any, [=](Tape& t) {
      const Tensor<T>& g = t.grad_of_node(r_);
      std::size_t off = 0;
      for (Var p : ps) {
        std::size_t n = t.val(p).numel();
        if (t.needs(p)) {
          Tensor<T>& gp = t.grad(p);
          for (std::size_t i = 0; i < n; ++i) gp.data[i] += g.data[off + i];
        }
        off += n;
      }
    });
    return r;
  }

  // Rectangular slice [r0, r1) x [c0, c1) of a 2-D value.
  Var slice(Var a, std::size_t r0, std::size_t r1, std::size_t c0,
            std::size_t c1) {
    const Tensor<T>& v = val(a);
    if (v.shape.size() != 2 || r1 > v.shape[0] || c1 > v.shape[1] || r0 > r1 ||
        c0 > c1)
      throw std::invalid_argument("slice: bad range for " + v.shape_str());
    Tensor<T> out({r1 - r0, c1 - c0});
    for (std::size_t i = r0; i < r1; ++i)
      for (std::size_t j = c0; j < c1; ++j) out.at(i - r0, j - c0) = v.at(i, j);
    Var r = push(std::move(out), needs(a), [=](Tape& t) {
      if (t.needs(a)) {
        const Tensor<T>& g = t.grad_of_node(r_);
        Tensor<T>& ga = t.grad(a);
        for (std::size_t i = 0; i < g.shape[0]; ++i)
          for (std::size_t j = 0; j < g.shape[1]; ++j)
            ga.at(r0 + i, c0 + j) += g.at(i, j);
      }
    });
    return r;
  }

  Var slice_rows(Var a, std::size_t r0, std::size_t r1) {
    return slice(a, r0, r1, 0, val(a).shape[1]);
  }

  // ---- reductions & row-wise normalizers ----

  Var sum(Var a) {
    T s = T(0);
    for (T v : val(a).data) s += v;
    Var r = push(Tensor<T>({1, 1}, {s}), needs(a), [=](Tape& t) {
      if (t.needs(a)) {
        T g = t.grad_of_node(r_).data[0];
        Tensor<T>& ga = t.grad(a);
        for (auto& v : ga.data) v += g;
      }
    });
    return r;
  }

  Var mean(Var a) {
    std::size_t n = val(a).numel();
    return scale(sum(a), T(1) / T(n));
  }

  Var softmax_rows(Var a) {
    const Tensor<T>& v = val(a);
    Tensor<T> out = v;
    for (std::size_t i = 0; i < v.shape[0]; ++i) {
      T mx = v.at(i, 0);
      for (std::size_t j = 1; j < v.shape[1]; ++j) mx = std::max(mx, v.at(i, j));
      T z = T(0);
      for (std::size_t j = 0; j < v.shape[1]; ++j) {
        out.at(i, j) = std::exp(v.at(i, j) - mx);
        z += out.at(i, j);
      }
      for (std::size_t j = 0; j < v.shape[1]; ++j) out.at(i, j) /= z;
    }
    Var r = push(std::move(out), needs(a), [=](Tape& t) {
      if (!t.needs(a)) return;
      const Tensor<T>& y = t.val(t.r_var());
      const Tensor<T>& g = t.grad_of_node(r_);
      Tensor<T>& ga = t.grad(a);
      for (std::size_t i = 0; i < y.shape[0]; ++i) {
        T dot = T(0);
        for (std::size_t j = 0; j < y.shape[1]; ++j)
          dot += g.at(i, j) * y.at(i, j);
        for (std::size_t j = 0; j < y.shape[1]; ++j)
          ga.at(i, j) += y.at(i, j) * (g.at(i, j) - dot);
      }
    });
    return r;
  }

  // Per-row layer norm with learned gain/bias rows [1 x d].
  Var layer_norm(Var x, Var gain, Var bias, T eps = T(1e-5)) {
    const Tensor<T>& v = val(x);
    std::size_t n = v.shape[0], d = v.shape[1];
    Tensor<T> xhat({n, d});
    Tensor<T> inv_sigma({n, 1});
    for (std::size_t i = 0; i < n; ++i) {
      T mu = T(0);
      for (std::size_t j = 0; j < d; ++j) mu += v.at(i, j);
      mu /= T(d);
      T var = T(0);
      for (std::size_t j = 0; j < d; ++j) {
        T c = v.at(i, j) - mu;
        var += c * c;
      }
      var /= T(d);
      T is = T(1) / std::sqrt(var + eps);
      inv_sigma.at(i, 0) = is;
      for (std::size_t j = 0; j < d; ++j) xhat.at(i, j) = (v.at(i, j) - mu) * is;
    }
    Tensor<T> out({n, d});
    const Tensor<T>& gv = val(gain);
    const Tensor<T>& bv = val(bias);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < d; ++j)
        out.at(i, j) = xhat.at(i, j) * gv.at(0, j) + bv.at(0, j);
    auto xhat_s = std::make_shared<Tensor<T>>(std::move(xhat));
    auto is_s = std::make_shared<Tensor<T>>(std::move(inv_sigma));
    Var r = push(std::move(out), needs(x) || needs(gain) || needs(bias),
                 [=](Tape& t) {
      const Tensor<T>& g = t.grad_of_node(r_);
      const Tensor<T>& gn = t.val(gain);
      std::size_t nn = g.shape[0], dd = g.shape[1];
      if (t.needs(gain)) {
        Tensor<T>& gg = t.grad(gain);
        for (std::size_t i = 0; i < nn; ++i)
          for (std::size_t j = 0; j < dd; ++j)
            gg.at(0, j) += g.at(i, j) * xhat_s->at(i, j);
      }
      if (t.needs(bias)) {
        Tensor<T>& gb = t.grad(bias);
        for (std::size_t i = 0; i < nn; ++i)
          for (std::size_t j = 0; j < dd; ++j) gb.at(0, j) += g.at(i, j);
      }
      if (t.needs(x)) {
        Tensor<T>& gx = t.grad(x);
        for (std::size_t i = 0; i < nn; ++i) {
          T m1 = T(0), m2 = T(0);
          for (std::size_t j = 0; j < dd; ++j) {
            T gy = g.at(i, j) * gn.at(0, j);
            m1 += gy;
            m2 += gy * xhat_s->at(i, j);
          }
          m1 /= T(dd);
          m2 /= T(dd);
          T is = is_s->at(i, 0);
          for (std::size_t j = 0; j < dd; ++j) {
            T gy = g.at(i, j) * gn.at(0, j);
            gx.at(i, j) += (gy - m1 - xhat_s->at(i, j) * m2) * is;
          }
        }
      }
    });
    return r;
  }

  // 3x3 stride-2 pad-1 convolution on a CHW value; weight [Cout x Cin*9],
  // bias [1 x Cout]. Implemented as im2col + gemm, both directions.
  Var conv3x3s2(Var x, Var w, Var b, std::size_t cin, std::size_t h,
                std::size_t wth) {
    const Tensor<T>& xv = val(x);
    const Tensor<T>& wv = val(w);
    if (xv.numel() != cin * h * wth)
      throw std::invalid_argument("conv3x3s2: input size mismatch");
    if (wv.shape[1] != cin * 9)
      throw std::invalid_argument("conv3x3s2: weight inner extent mismatch");
    std::size_t cout = wv.shape[0];
    std::size_t oh = h / 2, ow = wth / 2;
    auto cols = std::make_shared<Tensor<T>>(im2col(xv, cin, h, wth, oh, ow));
    // out[(oh*ow) x cout] = cols[(oh*ow) x cin*9] * W^T
    Tensor<T> out = idg::matmul(*cols, wv, false, true);
    const Tensor<T>& bv = val(b);
    for (std::size_t i = 0; i < oh * ow; ++i)
      for (std::size_t j = 0; j < cout; ++j) out.at(i, j) += bv.at(0, j);
    Var r = push(std::move(out), needs(x) || needs(w) || needs(b),
                 [=](Tape& t) {
      const Tensor<T>& g = t.grad_of_node(r_);  // [(oh*ow) x cout]
      if (t.needs(b)) {
        Tensor<T>& gb = t.grad(b);
        for (std::size_t i = 0; i < g.shape[0]; ++i)
          for (std::size_t j = 0; j < g.shape[1]; ++j) gb.at(0, j) += g.at(i, j);
      }
      if (t.needs(w)) {
        // dW += g^T * cols
        Tensor<T>& gw = t.grad(w);
        detail::gemm(true, false, g.shape[1], cols->shape[1], g.shape[0],
                     g.data.data(), g.shape[1], cols->data.data(),
                     cols->shape[1], gw.data.data(), gw.shape[1], T(1));
      }
      if (t.needs(x)) {
        // dcols = g * W, then scatter back (col2im)
        Tensor<T> dcols = idg::matmul(g, t.val(w));
        col2im_accum(dcols, t.grad(x), cin, h, wth, oh, ow);
      }
    });
    return r;
  }

  // Permute a CHW-flattened value [C x H*W] to token-major [H*W x C]; this is
  // just transpose, provided for readability at DEM insertion points.
  Var chw_to_tokens(Var a) { return transpose(a); }
  Var tokens_to_chw(Var a) { return transpose(a); }

  void backward(Var root) {
    const Tensor<T>& rv = val(root);
    if (rv.numel() != 1)
      throw std::invalid_argument("backward: root must be scalar");
    if (!nodes_[root.id].needs) return;
    nodes_[root.id].grad.data[0] = T(1);
    for (int i = root.id; i >= 0; --i)
      if (nodes_[i].needs && nodes_[i].back) {
        cur_ = i;
        nodes_[i].back(*this);
      }
  }

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Tensor<T> value;
    Tensor<T> grad;
    bool needs = false;
    std::function<void(Tape&)> back;
  };

  std::vector<Node> nodes_;
  int cur_ = -1;
  // Inside a backward lambda, r_ refers to the node being differentiated.
  static constexpr struct CurTag {} r_{};
  const Tensor<T>& grad_of_node(CurTag) const { return nodes_[cur_].grad; }
  Var r_var() const { return Var{cur_}; }

  bool needs(Var x) const { return nodes_[x.id].needs; }

  Var push(Tensor<T> v, bool needs_grad, std::function<void(Tape&)> back) {
    Node n;
    n.value = std::move(v);
    n.needs = needs_grad;
    n.back = std::move(back);
    if (needs_grad) n.grad = Tensor<T>(n.value.shape);
    nodes_.push_back(std::move(n));
    return Var{int(nodes_.size()) - 1};
  }


  void accum(Var a, const Tensor<T>& g) {
    Tensor<T>& ga = grad(a);
    for (std::size_t i = 0; i < g.numel(); ++i) ga.data[i] += g.data[i];
  }

  void accum_neg(Var a, const Tensor<T>& g) {
    Tensor<T>& ga = grad(a);
    for (std::size_t i = 0; i < g.numel(); ++i) ga.data[i] -= g.data[i];
  }

  void accum_mul(Var a, const Tensor<T>& other, const Tensor<T>& g) {
    Tensor<T>& ga = grad(a);
    for (std::size_t i = 0; i < g.numel(); ++i)
      ga.data[i] += other.data[i] * g.data[i];
  }

  void accum_matmul_grad_a(Var a, Var b, const Tensor<T>& g, bool ta, bool tb) {
    Tensor<T>& ga = grad(a);
    const Tensor<T>& bv = val(b);
    if (!ta)
      // dA += g * op(B)^T
      detail::gemm(false, !tb, ga.shape[0], ga.shape[1],
                   g.shape[1], g.data.data(), g.shape[1], bv.data.data(),
                   bv.shape[1], ga.data.data(), ga.shape[1], T(1));
    else
      // A was transposed: dA += op(B) * g^T
      detail::gemm(tb, true, ga.shape[0], ga.shape[1], g.shape[1],
                   bv.data.data(), bv.shape[1], g.data.data(), g.shape[1],
                   ga.data.data(), ga.shape[1], T(1));
  }

  void accum_matmul_grad_b(Var a, Var b, const Tensor<T>& g, bool ta, bool tb) {
    Tensor<T>& gb = grad(b);
    const Tensor<T>& av = val(a);
    if (!tb)
      // dB += op(A)^T * g
      detail::gemm(!ta, false, gb.shape[0], gb.shape[1], g.shape[0],
                   av.data.data(), av.shape[1], g.data.data(), g.shape[1],
                   gb.data.data(), gb.shape[1], T(1));
    else
      // B was transposed: dB += g^T * op(A)
      detail::gemm(true, ta, gb.shape[0], gb.shape[1], g.shape[0],
                   g.data.data(), g.shape[1], av.data.data(), av.shape[1],
                   gb.data.data(), gb.shape[1], T(1));
  }

  template <typename F, typename DF>
  Var unary(Var a, F f, DF df) {
    Tensor<T> out = val(a);
    for (auto& v : out.data) v = f(v);
    Var r = push(std::move(out), needs(a), [=](Tape& t) {
      if (!t.needs(a)) return;
      const Tensor<T>& g = t.grad_of_node(r_);
      const Tensor<T>& x = t.val(a);
      const Tensor<T>& y = t.val(t.r_var());
      Tensor<T>& ga = t.grad(a);
      for (std::size_t i = 0; i < g.numel(); ++i)
        ga.data[i] += df(x.data[i], y.data[i]) * g.data[i];
    });
    return r;
  }

  Var minmax(Var a, Var b, bool take_max) {
    check_same_shape(val(a), val(b), take_max ? "maximum" : "minimum");
    const Tensor<T>& av = val(a);
    const Tensor<T>& bv = val(b);
    Tensor<T> out = av;
    for (std::size_t i = 0; i < out.numel(); ++i)
      out.data[i] = take_max ? std::max(av.data[i], bv.data[i])
                             : std::min(av.data[i], bv.data[i]);
    Var r = push(std::move(out), needs(a) || needs(b), [=](Tape& t) {
      const Tensor<T>& g = t.grad_of_node(r_);
      const Tensor<T>& xa = t.val(a);
      const Tensor<T>& xb = t.val(b);
      for (std::size_t i = 0; i < g.numel(); ++i) {
        bool a_wins = take_max ? (xa.data[i] >= xb.data[i])
                               : (xa.data[i] <= xb.data[i]);
        if (a_wins) {
          if (t.needs(a)) t.grad(a).data[i] += g.data[i];
        } else {
          if (t.needs(b)) t.grad(b).data[i] += g.data[i];
        }
      }
    });
    return r;
  }

  static Tensor<T> im2col(const Tensor<T>& x, std::size_t cin, std::size_t h,
                          std::size_t w, std::size_t oh, std::size_t ow) {
    Tensor<T> cols({oh * ow, cin * 9});
    for (std::size_t oy = 0; oy < oh; ++oy)
      for (std::size_t ox = 0; ox < ow; ++ox) {
        std::size_t row = oy * ow + ox;
        for (std::size_t c = 0; c < cin; ++c)
          for (int ky = 0; ky < 3; ++ky)
            for (int kx = 0; kx < 3; ++kx) {
              int iy = int(oy) * 2 + ky - 1;
              int ix = int(ox) * 2 + kx - 1;
              T v = T(0);
              if (iy >= 0 && iy < int(h) && ix >= 0 && ix < int(w))
                v = x.data[c * h * w + std::size_t(iy) * w + std::size_t(ix)];
              cols.at(row, c * 9 + std::size_t(ky) * 3 + std::size_t(kx)) = v;
            }
      }
    return cols;
  }

  static void col2im_accum(const Tensor<T>& dcols, Tensor<T>& gx,
                           std::size_t cin, std::size_t h, std::size_t w,
                           std::size_t oh, std::size_t ow) {
    for (std::size_t oy = 0; oy < oh; ++oy)
      for (std::size_t ox = 0; ox < ow; ++ox) {
        std::size_t row = oy * ow + ox;
        for (std::size_t c = 0; c < cin; ++c)
          for (int ky = 0; ky < 3; ++ky)
            for (int kx = 0; kx < 3; ++kx) {
              int iy = int(oy) * 2 + ky - 1;
              int ix = int(ox) * 2 + kx - 1;
              if (iy >= 0 && iy < int(h) && ix >= 0 && ix < int(w))
                gx.data[c * h * w + std::size_t(iy) * w + std::size_t(ix)] +=
                    dcols.at(row, c * 9 + std::size_t(ky) * 3 + std::size_t(kx));
            }
      }
  }
};

}  // namespace idg
