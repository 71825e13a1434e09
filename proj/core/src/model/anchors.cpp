#include "tsdet/model/anchors.hpp"

#include <algorithm>
#include <cmath>

namespace tsdet {

int feature_extent(int image_extent, int level) {
  int e = image_extent;
  for (int i = 0; i < level; ++i) e = (e + 1) / 2;
  return e;
}

AnchorSet generate_anchors(const AnchorConfig& cfg, const std::vector<int>& pyramid_levels,
                           int image_width, int image_height) {
  AnchorSet out;
  for (int level : pyramid_levels) {
    out.level_offsets.push_back(static_cast<int>(out.boxes.size()));
    int stride = 1 << level;
    int fh = feature_extent(image_height, level);
    int fw = feature_extent(image_width, level);
    for (int y = 0; y < fh; ++y) {
      for (int x = 0; x < fw; ++x) {
        double cx = (x + 0.5) * stride;
        double cy = (y + 0.5) * stride;
        for (double scale : cfg.scales) {
          for (double ratio : cfg.ratios) {
            double base = stride * cfg.base_factor * scale;
            double w = base / std::sqrt(ratio);
            double h = base * std::sqrt(ratio);
            out.boxes.push_back(Box{cx - 0.5 * w, cy - 0.5 * h, cx + 0.5 * w, cy + 0.5 * h});
            out.level_of.push_back(level);
          }
        }
      }
    }
  }
  return out;
}

int fpn_level_for_box(const Box& box, int k0, double canonical_scale, int level_min,
                      int level_max) {
  double size = std::sqrt(std::max(box.area(), 1e-12));
  int k = static_cast<int>(std::floor(k0 + std::log2(size / canonical_scale)));
  return std::clamp(k, level_min, level_max);
}

}  // namespace tsdet
