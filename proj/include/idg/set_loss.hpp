// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cstddef>
#include <utility>
#include <vector>

#include "idg/geometry.hpp"
#include "idg/hungarian.hpp"
#include "idg/tape.hpp"

namespace idg {

// One decoder slot's output: a center-form box (already squashed to [0,1])
// and the probability that the slot is a real difference.
struct Prediction {
  BoxCXCYWH box;
  double p_diff = 0.0;
};

struct LossWeights {
  double w_cls = 1.0;
  double w_l1 = 5.0;
  double w_giou = 2.0;
  // Cross-entropy weight on unmatched ("no object") slots; with K slots and
  // a single target the background class dominates without a down-weight.
  double no_object_weight = 0.1;
};

// Matching cost for one (prediction, ground truth) pair:
//   w_cls * (-p_diff) + w_l1 * sum|b_pred - b_gt| (cxcywh) + w_giou * (1 - giou)
double match_cost(const Prediction& pred, const BoxXYXY& gt,
                  const LossWeights& w);

Tensor<double> cost_matrix(const std::vector<Prediction>& preds,
                           const std::vector<BoxXYXY>& gts,
                           const LossWeights& w);

struct SetLossBreakdown {
  double total = 0.0;
  double cls = 0.0;
  double l1 = 0.0;
  double giou_loss = 0.0;
  std::vector<std::pair<std::size_t, std::size_t>> assignment;
};

// DETR-style set loss on an existing tape. `boxes` is K x 4 (cx, cy, w, h in
// [0,1]); `logits` is K x 2 with class order {difference, no-object}.
// Matching runs on detached values; gradients flow through the matched-slot
// box terms and the per-slot cross-entropy.
template <typename T>
struct SetLossVars {
  Var total, cls, l1, giou_loss;
  std::vector<std::pair<std::size_t, std::size_t>> assignment;
};

template <typename T>
SetLossVars<T> set_loss_on_tape(Tape<T>& t, Var boxes, Var logits,
                                const std::vector<BoxXYXY>& gts,
                                const LossWeights& w);

// Convenience wrapper for tests and evaluation: values only.
SetLossBreakdown set_loss(const std::vector<Prediction>& preds,
                          const std::vector<BoxXYXY>& gts,
                          const LossWeights& w);

// ---- template implementation ----

namespace detail {

// Differentiable GIoU between a 1x4 cxcywh slice and a fixed ground truth.
template <typename T>
Var giou_on_tape(Tape<T>& t, Var box_row, const BoxXYXY& gt) {
  Var cx = t.slice(box_row, 0, 1, 0, 1);
  Var cy = t.slice(box_row, 0, 1, 1, 2);
  Var w = t.slice(box_row, 0, 1, 2, 3);
  Var h = t.slice(box_row, 0, 1, 3, 4);
  Var half_w = t.scale(w, T(0.5));
  Var half_h = t.scale(h, T(0.5));
  Var x1 = t.sub(cx, half_w), x2 = t.add(cx, half_w);
  Var y1 = t.sub(cy, half_h), y2 = t.add(cy, half_h);
  auto c = [&](double v) { return t.scalar(T(v)); };
  Var ix1 = t.maximum(x1, c(gt.x1)), iy1 = t.maximum(y1, c(gt.y1));
  Var ix2 = t.minimum(x2, c(gt.x2)), iy2 = t.minimum(y2, c(gt.y2));
  Var iw = t.relu(t.sub(ix2, ix1)), ih = t.relu(t.sub(iy2, iy1));
  Var inter = t.mul(iw, ih);
  Var area_p = t.mul(w, h);
  Var uni = t.sub(t.add(area_p, c(gt.area())), inter);
  Var iou = t.div(inter, uni);
  Var ex1 = t.minimum(x1, c(gt.x1)), ey1 = t.minimum(y1, c(gt.y1));
  Var ex2 = t.maximum(x2, c(gt.x2)), ey2 = t.maximum(y2, c(gt.y2));
  Var enc = t.mul(t.sub(ex2, ex1), t.sub(ey2, ey1));
  return t.sub(iou, t.div(t.sub(enc, uni), enc));
}

// Numerically stable two-way cross-entropy: lse(l0, l1) - l_label.
template <typename T>
Var binary_ce_on_tape(Tape<T>& t, Var logit_row, int label) {
  Var l0 = t.slice(logit_row, 0, 1, 0, 1);
  Var l1 = t.slice(logit_row, 0, 1, 1, 2);
  Var m = t.maximum(l0, l1);
  Var lse = t.add(m, t.log(t.add(t.exp(t.sub(l0, m)), t.exp(t.sub(l1, m)))));
  return t.sub(lse, label == 0 ? l0 : l1);
}

}  // namespace detail

template <typename T>
SetLossVars<T> set_loss_on_tape(Tape<T>& t, Var boxes, Var logits,
                                const std::vector<BoxXYXY>& gts,
                                const LossWeights& w) {
  const std::size_t k = t.val(boxes).shape[0];
  const std::size_t g = gts.size();

  // Detached matching.
  std::vector<Prediction> preds(k);
  for (std::size_t i = 0; i < k; ++i) {
    const Tensor<T>& bv = t.val(boxes);
    const Tensor<T>& lv = t.val(logits);
    preds[i].box = BoxCXCYWH{double(bv.at(i, 0)), double(bv.at(i, 1)),
                             double(bv.at(i, 2)), double(bv.at(i, 3))};
    double e0 = std::exp(double(lv.at(i, 0)) -
                         std::max(double(lv.at(i, 0)), double(lv.at(i, 1))));
    double e1 = std::exp(double(lv.at(i, 1)) -
                         std::max(double(lv.at(i, 0)), double(lv.at(i, 1))));
    preds[i].p_diff = e0 / (e0 + e1);
  }
  auto assignment = hungarian(cost_matrix(preds, gts, w));

  std::vector<int> label(k, 1);  // 1 = no-object
  for (auto [pi, gi] : assignment) label[pi] = 0;

  Var cls = t.scalar(T(0));
  for (std::size_t i = 0; i < k; ++i) {
    Var ce = detail::binary_ce_on_tape(t, t.slice_rows(logits, i, i + 1),
                                       label[i]);
    T wt = label[i] == 0 ? T(1) : T(w.no_object_weight);
    cls = t.add(cls, t.scale(ce, wt));
  }
  // DETR-style normalization by target count, not slot count: with K >> G a
  // /K norm starves the classifier and the argmax slot rule stops working.
  cls = t.scale(cls, T(1) / T(std::max<std::size_t>(g, 1)));

  Var l1 = t.scalar(T(0));
  Var gl = t.scalar(T(0));
  for (auto [pi, gi] : assignment) {
    Var row = t.slice_rows(boxes, pi, pi + 1);
    BoxCXCYWH gt_c = to_cxcywh(gts[gi]);
    Tensor<T> gt_t({1, 4}, {T(gt_c.cx), T(gt_c.cy), T(gt_c.w), T(gt_c.h)});
    l1 = t.add(l1, t.sum(t.abs(t.sub(row, t.constant(gt_t)))));
    gl = t.add(gl, t.sub(t.scalar(T(1)),
                         detail::giou_on_tape(t, row, gts[gi])));
  }
  if (g > 0) {
    l1 = t.scale(l1, T(1) / T(g));
    gl = t.scale(gl, T(1) / T(g));
  }

  Var total = t.add(t.scale(cls, T(w.w_cls)),
                    t.add(t.scale(l1, T(w.w_l1)), t.scale(gl, T(w.w_giou))));
  return SetLossVars<T>{total, cls, l1, gl, std::move(assignment)};
}

}  // namespace idg
