#pragma once

#include <optional>
#include <vector>

#include "tsdet/model/detector.hpp"
#include "tsdet/nn/ops.hpp"
#include "tsdet/targets.hpp"

namespace tsdet {

// Per-step loss components. `attr` is color + material under the separated
// loss and the single unified value otherwise; `total` is always the sum
// rpn_objectness + rpn_box + cls + loc + attr.
struct LossBreakdown {
  double rpn_objectness = 0.0;
  double rpn_box = 0.0;
  double cls = 0.0;
  double loc = 0.0;
  double color = 0.0;
  double material = 0.0;
  double attr = 0.0;
  double total = 0.0;
};

// Separated cross-entropy: independent softmax losses for color and material,
// each averaged over the rows whose mask is set. A term with no masked-in
// rows is exactly zero (and contributes no gradient).
struct SceLoss {
  nn::Var color;
  nn::Var material;
};
SceLoss sce_attribute_loss(const nn::Var& color_logits, const std::vector<std::optional<int>>& color_labels,
                           const nn::Var& material_logits,
                           const std::vector<std::optional<int>>& material_labels);

// Rows for the unified loss: an object contributes one row per attribute
// label it carries, with material labels offset by the color count.
struct UnifiedRows {
  std::vector<std::int64_t> row_of;  // index into the per-RoI logits
  std::vector<int> label;            // class in [0, n_colors + n_materials)
};
UnifiedRows build_unified_rows(const std::vector<std::optional<int>>& color_labels,
                               const std::vector<std::optional<int>>& material_labels,
                               int n_colors);

// Unified cross-entropy over the combined color+material class space; mean
// over the provided rows, zero when there are none.
nn::Var uce_attribute_loss(const nn::Var& unified_logits, const UnifiedRows& rows);

struct RpnLoss {
  nn::Var objectness;  // binary CE, mean over sampled anchors
  nn::Var box;         // smooth-L1, mean over positive anchors (0 with none)
};
RpnLoss rpn_loss(const nn::Var& objectness_logits, const nn::Var& deltas,
                 const AnchorTargets& targets);

struct DetectionLoss {
  nn::Var cls;  // softmax CE over all sampled rows incl. background
  nn::Var loc;  // smooth-L1 over foreground class-specific deltas / #sampled
};
DetectionLoss detection_loss(const HeadOutputs& heads, const RoiTargets& targets,
                             const std::array<double, 4>& bbox_reg_weights);

// Scalar-zero graph node (used for absent loss terms).
nn::Var zero_loss();

}  // namespace tsdet
