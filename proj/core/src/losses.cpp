#include "tsdet/losses.hpp"

#include <stdexcept>

namespace tsdet {

using nn::Var;

Var zero_loss() { return nn::constant(nn::Tensor::scalar(0.0)); }

namespace {

// Masked mean CE: gathers the rows with labels and averages over them.
Var masked_ce(const Var& logits, const std::vector<std::optional<int>>& labels) {
  std::vector<std::int64_t> rows;
  std::vector<int> ys;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i]) {
      rows.push_back(static_cast<std::int64_t>(i));
      ys.push_back(*labels[i]);
    }
  }
  if (rows.empty()) return zero_loss();
  return nn::softmax_ce_mean(nn::gather_rows(logits, rows), ys);
}

}  // namespace

SceLoss sce_attribute_loss(const Var& color_logits,
                           const std::vector<std::optional<int>>& color_labels,
                           const Var& material_logits,
                           const std::vector<std::optional<int>>& material_labels) {
  SceLoss out;
  out.color = masked_ce(color_logits, color_labels);
  out.material = masked_ce(material_logits, material_labels);
  return out;
}

UnifiedRows build_unified_rows(const std::vector<std::optional<int>>& color_labels,
                               const std::vector<std::optional<int>>& material_labels,
                               int n_colors) {
  if (color_labels.size() != material_labels.size()) {
    throw std::invalid_argument("unified rows: label vectors must align");
  }
  UnifiedRows rows;
  for (std::size_t i = 0; i < color_labels.size(); ++i) {
    if (color_labels[i]) {
      rows.row_of.push_back(static_cast<std::int64_t>(i));
      rows.label.push_back(*color_labels[i]);
    }
    if (material_labels[i]) {
      rows.row_of.push_back(static_cast<std::int64_t>(i));
      rows.label.push_back(n_colors + *material_labels[i]);
    }
  }
  return rows;
}

Var uce_attribute_loss(const Var& unified_logits, const UnifiedRows& rows) {
  if (rows.row_of.empty()) return zero_loss();
  return nn::softmax_ce_mean(nn::gather_rows(unified_logits, rows.row_of), rows.label);
}

RpnLoss rpn_loss(const Var& objectness_logits, const Var& deltas, const AnchorTargets& targets) {
  RpnLoss out;
  if (targets.sampled.empty()) {
    out.objectness = zero_loss();
    out.box = zero_loss();
    return out;
  }

  std::int64_t total = objectness_logits->value.numel();
  Var obj2d = nn::reshape(objectness_logits, {total, 1});
  std::vector<std::int64_t> rows(targets.sampled.begin(), targets.sampled.end());
  std::vector<double> ys;
  for (int a : targets.sampled) {
    ys.push_back(targets.label[static_cast<std::size_t>(a)] == AnchorLabel::Positive ? 1.0 : 0.0);
  }
  Var sampled_logits = nn::reshape(nn::gather_rows(obj2d, rows), {static_cast<std::int64_t>(rows.size())});
  out.objectness = nn::sigmoid_bce_mean(sampled_logits, ys);

  if (targets.sampled_positive.empty()) {
    out.box = zero_loss();
    return out;
  }
  std::vector<std::int64_t> pos(targets.sampled_positive.begin(), targets.sampled_positive.end());
  nn::Tensor target({static_cast<std::int64_t>(pos.size()), 4});
  for (std::size_t i = 0; i < pos.size(); ++i) {
    const BoxDelta& d = targets.delta[static_cast<std::size_t>(pos[i])];
    target.data[i * 4 + 0] = d.dx;
    target.data[i * 4 + 1] = d.dy;
    target.data[i * 4 + 2] = d.dw;
    target.data[i * 4 + 3] = d.dh;
  }
  Var pred = nn::gather_rows(deltas, pos);
  out.box = nn::smooth_l1(pred, target, /*beta=*/1.0, /*normalizer=*/static_cast<double>(pos.size()));
  return out;
}

DetectionLoss detection_loss(const HeadOutputs& heads, const RoiTargets& targets,
                             const std::array<double, 4>& bbox_reg_weights) {
  DetectionLoss out;
  std::int64_t n = static_cast<std::int64_t>(targets.sampled.size());
  if (n == 0) {
    out.cls = zero_loss();
    out.loc = zero_loss();
    return out;
  }
  out.cls = nn::softmax_ce_mean(heads.category, targets.category);

  if (targets.foreground_count == 0) {
    out.loc = zero_loss();
    return out;
  }
  std::int64_t fg = targets.foreground_count;  // foreground rows come first
  std::vector<std::int64_t> fg_rows(static_cast<std::size_t>(fg));
  std::vector<std::int64_t> fg_class(static_cast<std::size_t>(fg));
  nn::Tensor target({fg, 4});
  for (std::int64_t i = 0; i < fg; ++i) {
    fg_rows[static_cast<std::size_t>(i)] = i;
    fg_class[static_cast<std::size_t>(i)] = targets.category[static_cast<std::size_t>(i)] - 1;
    const BoxDelta& d = targets.delta[static_cast<std::size_t>(i)];
    target.data[i * 4 + 0] = d.dx * bbox_reg_weights[0];
    target.data[i * 4 + 1] = d.dy * bbox_reg_weights[1];
    target.data[i * 4 + 2] = d.dw * bbox_reg_weights[2];
    target.data[i * 4 + 3] = d.dh * bbox_reg_weights[3];
  }
  Var pred = nn::gather_cols4(nn::gather_rows(heads.bbox, fg_rows), fg_class);
  out.loc = nn::smooth_l1(pred, target, /*beta=*/1.0, /*normalizer=*/static_cast<double>(n));
  return out;
}

}  // namespace tsdet
