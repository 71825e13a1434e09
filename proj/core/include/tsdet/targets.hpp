#pragma once

#include <optional>
#include <span>
#include <vector>

#include "tsdet/datamodel.hpp"
#include "tsdet/geometry.hpp"
#include "tsdet/rng.hpp"

namespace tsdet {

enum class AnchorLabel : std::int8_t { Negative = 0, Positive = 1, Ignore = -1 };

struct AnchorMatchConfig {
  double neg_max = 0.3;       // max IoU < neg_max -> negative
  double pos_min = 0.7;       // IoU >= pos_min (or per-gt argmax) -> positive
  int batch = 256;            // sampled anchors per image
  double pos_fraction = 0.5;  // cap on the positive share of the sample
};

struct AnchorTargets {
  std::vector<AnchorLabel> label;     // per anchor
  std::vector<BoxDelta> delta;        // valid where label == Positive
  std::vector<int> sampled;           // sampled anchor indices (positives first)
  std::vector<int> sampled_positive;  // subset of `sampled`
};

// Ren-style anchor assignment: IoU thresholds plus the per-ground-truth
// argmax anchor forced positive, then a random subsample. With no ground
// truth every sampled anchor is negative.
AnchorTargets assign_anchor_targets(std::span<const Box> anchors, std::span<const Box> gt_boxes,
                                    const AnchorMatchConfig& cfg, Rng rng);

struct RoiSampleConfig {
  double fg_iou = 0.5;
  int batch = 128;
  double fg_fraction = 0.25;
};

struct RoiTargets {
  std::vector<int> sampled;                  // proposal indices, foreground first
  std::vector<int> category;                 // per sampled row; 0 = background
  std::vector<BoxDelta> delta;               // per sampled row, valid for foreground
  std::vector<std::optional<int>> color;     // attribute targets; present only when the
  std::vector<std::optional<int>> material;  // matched annotation carries the label
  int foreground_count = 0;

  bool color_mask(std::size_t row) const { return color[row].has_value(); }
  bool material_mask(std::size_t row) const { return material[row].has_value(); }
};

// Max-IoU proposal-to-annotation matching with foreground/background
// sampling. Attribute targets are copied only where the matched annotation
// has them; background rows carry neither box nor attribute targets.
RoiTargets assign_roi_targets(std::span<const Box> proposals,
                              std::span<const ObjectAnnotation> annotations,
                              const RoiSampleConfig& cfg, Rng rng);

}  // namespace tsdet
