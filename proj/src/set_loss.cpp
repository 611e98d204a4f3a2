// SPDX-License-Identifier: Apache-2.0
#include "idg/set_loss.hpp"

#include <cmath>

namespace idg {

double match_cost(const Prediction& pred, const BoxXYXY& gt,
                  const LossWeights& w) {
  BoxCXCYWH g = to_cxcywh(gt);
  double l1 = std::abs(pred.box.cx - g.cx) + std::abs(pred.box.cy - g.cy) +
              std::abs(pred.box.w - g.w) + std::abs(pred.box.h - g.h);
  double gi = giou(to_xyxy(pred.box), gt);
  return w.w_cls * (-pred.p_diff) + w.w_l1 * l1 + w.w_giou * (1.0 - gi);
}

Tensor<double> cost_matrix(const std::vector<Prediction>& preds,
                           const std::vector<BoxXYXY>& gts,
                           const LossWeights& w) {
  Tensor<double> c({preds.size(), gts.size()});
  for (std::size_t i = 0; i < preds.size(); ++i)
    for (std::size_t j = 0; j < gts.size(); ++j)
      c.at(i, j) = match_cost(preds[i], gts[j], w);
  return c;
}

SetLossBreakdown set_loss(const std::vector<Prediction>& preds,
                          const std::vector<BoxXYXY>& gts,
                          const LossWeights& w) {
  const std::size_t k = preds.size();
  Tensor<double> boxes({k, 4});
  Tensor<double> logits({k, 2});
  for (std::size_t i = 0; i < k; ++i) {
    boxes.at(i, 0) = preds[i].box.cx;
    boxes.at(i, 1) = preds[i].box.cy;
    boxes.at(i, 2) = preds[i].box.w;
    boxes.at(i, 3) = preds[i].box.h;
    // Recover two-way logits reproducing p_diff under softmax.
    double p = std::min(std::max(preds[i].p_diff, 1e-12), 1.0 - 1e-12);
    logits.at(i, 0) = std::log(p);
    logits.at(i, 1) = std::log(1.0 - p);
  }
  Tape<double> t;
  Var b = t.constant(std::move(boxes));
  Var l = t.constant(std::move(logits));
  auto v = set_loss_on_tape(t, b, l, gts, w);
  SetLossBreakdown out;
  out.total = t.val(v.total).data[0];
  out.cls = t.val(v.cls).data[0];
  out.l1 = t.val(v.l1).data[0];
  out.giou_loss = t.val(v.giou_loss).data[0];
  out.assignment = v.assignment;
  return out;
}

}  // namespace idg
