#pragma once

#include <vector>

#include "tsdet/geometry.hpp"
#include "tsdet/model/config.hpp"

namespace tsdet {

// Feature map side length after `level` stride-2 stages (3x3, pad 1 convs).
int feature_extent(int image_extent, int level);

struct AnchorSet {
  std::vector<Box> boxes;      // all levels concatenated, row (y*W + x)*A + a per level
  std::vector<int> level_of;   // pyramid level per anchor
  std::vector<int> level_offsets;  // start index per configured level
};

// Dense anchor grid over the configured pyramid levels. Anchors may extend
// beyond the image; matching and decoding handle clipping.
AnchorSet generate_anchors(const AnchorConfig& cfg, const std::vector<int>& pyramid_levels,
                           int image_width, int image_height);

// FPN assignment: k = floor(k0 + log2(sqrt(area)/canonical)), clamped to the
// available levels.
int fpn_level_for_box(const Box& box, int k0, double canonical_scale, int level_min, int level_max);

}  // namespace tsdet
