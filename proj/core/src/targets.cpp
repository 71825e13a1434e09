#include "tsdet/targets.hpp"

#include <algorithm>
#include <stdexcept>

namespace tsdet {

namespace {

// Shuffles `pool` and truncates it to `limit`.
void sample_down(std::vector<int>& pool, int limit, Rng& rng) {
  if (static_cast<int>(pool.size()) <= limit) return;
  rng.shuffle(pool);
  pool.resize(static_cast<std::size_t>(limit));
  std::sort(pool.begin(), pool.end());
}

}  // namespace

AnchorTargets assign_anchor_targets(std::span<const Box> anchors, std::span<const Box> gt_boxes,
                                    const AnchorMatchConfig& cfg, Rng rng) {
  if (!(0.0 <= cfg.neg_max && cfg.neg_max < cfg.pos_min && cfg.pos_min <= 1.0)) {
    throw std::invalid_argument("anchor thresholds must satisfy 0 <= neg_max < pos_min <= 1");
  }

  const std::size_t n = anchors.size();
  const std::size_t g = gt_boxes.size();
  AnchorTargets out;
  out.label.assign(n, AnchorLabel::Ignore);
  out.delta.assign(n, BoxDelta{});

  std::vector<double> best_iou(n, 0.0);
  std::vector<int> best_gt(n, -1);
  std::vector<double> gt_best_iou(g, 0.0);
  for (std::size_t a = 0; a < n; ++a) {
    for (std::size_t j = 0; j < g; ++j) {
      double v = iou(anchors[a], gt_boxes[j]);
      if (v > best_iou[a]) {
        best_iou[a] = v;
        best_gt[a] = static_cast<int>(j);
      }
      gt_best_iou[j] = std::max(gt_best_iou[j], v);
    }
  }

  for (std::size_t a = 0; a < n; ++a) {
    if (g == 0 || best_iou[a] < cfg.neg_max) out.label[a] = AnchorLabel::Negative;
    if (g > 0 && best_iou[a] >= cfg.pos_min) out.label[a] = AnchorLabel::Positive;
  }
  // Force the best anchor(s) for each ground truth positive so no object is
  // left without a learning signal.
  for (std::size_t j = 0; j < g; ++j) {
    if (gt_best_iou[j] <= 0.0) continue;
    for (std::size_t a = 0; a < n; ++a) {
      if (best_gt[a] == static_cast<int>(j) && best_iou[a] == gt_best_iou[j]) {
        out.label[a] = AnchorLabel::Positive;
      }
    }
  }
  for (std::size_t a = 0; a < n; ++a) {
    if (out.label[a] == AnchorLabel::Positive) {
      out.delta[a] = encode_box(gt_boxes[static_cast<std::size_t>(best_gt[a])], anchors[a]);
    }
  }

  std::vector<int> positives, negatives;
  for (std::size_t a = 0; a < n; ++a) {
    if (out.label[a] == AnchorLabel::Positive) positives.push_back(static_cast<int>(a));
    if (out.label[a] == AnchorLabel::Negative) negatives.push_back(static_cast<int>(a));
  }
  int max_pos = static_cast<int>(cfg.batch * cfg.pos_fraction);
  Rng pos_rng = rng.child("sample-pos");
  Rng neg_rng = rng.child("sample-neg");
  sample_down(positives, max_pos, pos_rng);
  sample_down(negatives, cfg.batch - static_cast<int>(positives.size()), neg_rng);

  out.sampled_positive = positives;
  out.sampled = positives;
  out.sampled.insert(out.sampled.end(), negatives.begin(), negatives.end());
  return out;
}

RoiTargets assign_roi_targets(std::span<const Box> proposals,
                              std::span<const ObjectAnnotation> annotations,
                              const RoiSampleConfig& cfg, Rng rng) {
  if (cfg.fg_iou <= 0.0 || cfg.fg_iou >= 1.0) {
    throw std::invalid_argument("roi fg_iou must be in (0,1)");
  }

  const std::size_t n = proposals.size();
  std::vector<int> matched(n, -1);
  std::vector<double> best_iou(n, 0.0);
  for (std::size_t p = 0; p < n; ++p) {
    for (std::size_t j = 0; j < annotations.size(); ++j) {
      double v = iou(proposals[p], annotations[j].box);
      if (v > best_iou[p]) {
        best_iou[p] = v;
        matched[p] = static_cast<int>(j);
      }
    }
  }

  std::vector<int> fg, bg;
  for (std::size_t p = 0; p < n; ++p) {
    if (matched[p] >= 0 && best_iou[p] >= cfg.fg_iou) fg.push_back(static_cast<int>(p));
    else bg.push_back(static_cast<int>(p));
  }
  int max_fg = static_cast<int>(cfg.batch * cfg.fg_fraction);
  Rng fg_rng = rng.child("sample-fg");
  Rng bg_rng = rng.child("sample-bg");
  sample_down(fg, max_fg, fg_rng);
  sample_down(bg, cfg.batch - static_cast<int>(fg.size()), bg_rng);

  RoiTargets out;
  out.foreground_count = static_cast<int>(fg.size());
  auto push_row = [&](int p, bool foreground) {
    out.sampled.push_back(p);
    if (foreground) {
      const ObjectAnnotation& ann = annotations[static_cast<std::size_t>(matched[static_cast<std::size_t>(p)])];
      out.category.push_back(ann.category + 1);
      out.delta.push_back(encode_box(ann.box, proposals[static_cast<std::size_t>(p)]));
      out.color.push_back(ann.color);
      out.material.push_back(ann.material);
    } else {
      out.category.push_back(0);
      out.delta.push_back(BoxDelta{});
      out.color.push_back(std::nullopt);
      out.material.push_back(std::nullopt);
    }
  };
  for (int p : fg) push_row(p, true);
  for (int p : bg) push_row(p, false);
  return out;
}

}  // namespace tsdet
