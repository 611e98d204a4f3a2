// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <stdexcept>
#include <string>

#include "idg/tape.hpp"
#include "idg/tensor.hpp"

namespace idg {

// Difference Enhancement Module parameters. Projections are shared (siamese)
// between the two images; without that the identical-input nullity the module
// is built around does not hold.
template <typename T>
struct DemParams {
  Tensor<T> wq, wk, wv;  // [d x d]
  T alpha = T(0.75);
  T beta = T(0.75);
  // Raw-product mode drops the 1/sqrt(d) scaling and evaluates the update
  // equations literally.
  bool scale_attention = true;

  static DemParams random(std::size_t d, Rng& rng, T alpha = T(0.75),
                          T beta = T(0.75)) {
    DemParams p;
    T std = T(1) / std::sqrt(T(d));
    p.wq = Tensor<T>::randn({d, d}, rng, std);
    p.wk = Tensor<T>::randn({d, d}, rng, std);
    p.wv = Tensor<T>::randn({d, d}, rng, std);
    p.alpha = alpha;
    p.beta = beta;
    return p;
  }

  static DemParams identity(std::size_t d, T alpha, T beta) {
    DemParams p;
    p.wq = Tensor<T>::identity(d);
    p.wk = Tensor<T>::identity(d);
    p.wv = Tensor<T>::identity(d);
    p.alpha = alpha;
    p.beta = beta;
    p.scale_attention = false;
    return p;
  }
};

// Attention maps retained for inspection: cross maps A1/A2, difference map
// Ad = |A1 - A2|, commonality map Ac = A1 * A2 (elementwise).
template <typename T>
struct DemTrace {
  Tensor<T> a1, a2, ad, ac;
};

template <typename T>
struct DemOut {
  Tensor<T> f1, f2;
  DemTrace<T> trace;
};

// Tape-level handles for building DEM into a larger differentiable graph.
struct DemVars {
  Var f1, f2;
  Var a1, a2, ad, ac;
};

// Core update on an existing tape:
//   qi = Fi Wq, ki = Fi Wk, vi = Fi Wv
//   A1 = q1 k2^T / sqrt(d), A2 = q2 k1^T / sqrt(d)
//   Ad = |A1 - A2|, Ac = A1 * A2
//   Fi~ = vi + alpha Ad vi - beta Ac vi
template <typename T>
DemVars dem_forward_on_tape(Tape<T>& t, Var f1, Var f2, Var wq, Var wk, Var wv,
                            T alpha, T beta, bool scale_attention = true) {
  const std::size_t d = t.val(wq).shape[0];
  if (t.val(f1).shape[1] != d || t.val(f2).shape[1] != d)
    throw std::invalid_argument(
        "dem_forward: feature width " + t.val(f1).shape_str() +
        " does not match projection width " + std::to_string(d));
  Var q1 = t.matmul(f1, wq), k1 = t.matmul(f1, wk), v1 = t.matmul(f1, wv);
  Var q2 = t.matmul(f2, wq), k2 = t.matmul(f2, wk), v2 = t.matmul(f2, wv);
  Var a1 = t.matmul(q1, k2, false, true);
  Var a2 = t.matmul(q2, k1, false, true);
  if (scale_attention) {
    T s = T(1) / std::sqrt(T(d));
    a1 = t.scale(a1, s);
    a2 = t.scale(a2, s);
  }
  Var ad = t.abs(t.sub(a1, a2));
  Var ac = t.mul(a1, a2);
  Var f1e = t.add(v1, t.sub(t.scale(t.matmul(ad, v1), alpha),
                            t.scale(t.matmul(ac, v1), beta)));
  Var f2e = t.add(v2, t.sub(t.scale(t.matmul(ad, v2), alpha),
                            t.scale(t.matmul(ac, v2), beta)));
  return DemVars{f1e, f2e, a1, a2, ad, ac};
}

template <typename T>
DemOut<T> dem_forward(const Tensor<T>& f1, const Tensor<T>& f2,
                      const DemParams<T>& p) {
  if (f1.shape.size() != 2 || !f1.same_shape(f2))
    throw std::invalid_argument("dem_forward: inputs must be equal-shape n x d, got " +
                                f1.shape_str() + " and " + f2.shape_str());
  Tape<T> t;
  Var vf1 = t.constant(f1), vf2 = t.constant(f2);
  Var wq = t.constant(p.wq), wk = t.constant(p.wk), wv = t.constant(p.wv);
  DemVars h = dem_forward_on_tape(t, vf1, vf2, wq, wk, wv, p.alpha, p.beta,
                                  p.scale_attention);
  DemOut<T> out;
  out.f1 = t.val(h.f1);
  out.f2 = t.val(h.f2);
  out.trace = DemTrace<T>{t.val(h.a1), t.val(h.a2), t.val(h.ad), t.val(h.ac)};
  assert_finite(out.trace.a1, "A1");
  assert_finite(out.trace.a2, "A2");
  assert_finite(out.trace.ad, "Ad");
  assert_finite(out.trace.ac, "Ac");
  assert_finite(out.f1, "F1~");
  assert_finite(out.f2, "F2~");
  return out;
}

// Swap equivariance probe: dem_forward(F2, F1) must equal the component-swap
// of dem_forward(F1, F2).
template <typename T>
bool dem_swap_check(const Tensor<T>& f1, const Tensor<T>& f2,
                    const DemParams<T>& p, double tol = 1e-6) {
  DemOut<T> fwd = dem_forward(f1, f2, p);
  DemOut<T> rev = dem_forward(f2, f1, p);
  return max_abs_diff(rev.f1, fwd.f2) <= tol && max_abs_diff(rev.f2, fwd.f1) <= tol;
}

}  // namespace idg
