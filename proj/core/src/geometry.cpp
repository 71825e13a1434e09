#include "tsdet/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace tsdet {

bool Box::valid() const {
  return std::isfinite(x1) && std::isfinite(y1) && std::isfinite(x2) && std::isfinite(y2) &&
         x2 > x1 && y2 > y1;
}

double delta_clamp() {
  static const double kClamp = std::log(1000.0 / 16.0);
  return kClamp;
}

namespace {

void require_valid(const Box& b) {
  if (!b.valid()) {
    throw std::domain_error("degenerate box");
  }
}

}  // namespace

double iou(const Box& a, const Box& b) {
  require_valid(a);
  require_valid(b);
  double ix = std::min(a.x2, b.x2) - std::max(a.x1, b.x1);
  double iy = std::min(a.y2, b.y2) - std::max(a.y1, b.y1);
  if (ix <= 0.0 || iy <= 0.0) return 0.0;
  double inter = ix * iy;
  return inter / (a.area() + b.area() - inter);
}

BoxDelta encode_box(const Box& gt, const Box& anchor) {
  require_valid(gt);
  require_valid(anchor);
  BoxDelta d;
  d.dx = (gt.cx() - anchor.cx()) / anchor.width();
  d.dy = (gt.cy() - anchor.cy()) / anchor.height();
  d.dw = std::log(gt.width() / anchor.width());
  d.dh = std::log(gt.height() / anchor.height());
  return d;
}

Box decode_box(const BoxDelta& delta, const Box& anchor) {
  require_valid(anchor);
  double dw = std::min(delta.dw, delta_clamp());
  double dh = std::min(delta.dh, delta_clamp());
  double cx = anchor.cx() + delta.dx * anchor.width();
  double cy = anchor.cy() + delta.dy * anchor.height();
  double w = anchor.width() * std::exp(dw);
  double h = anchor.height() * std::exp(dh);
  return Box{cx - 0.5 * w, cy - 0.5 * h, cx + 0.5 * w, cy + 0.5 * h};
}

Box clip_box(const Box& b, double image_width, double image_height) {
  Box out;
  out.x1 = std::clamp(b.x1, 0.0, image_width);
  out.y1 = std::clamp(b.y1, 0.0, image_height);
  out.x2 = std::clamp(b.x2, 0.0, image_width);
  out.y2 = std::clamp(b.y2, 0.0, image_height);
  return out;
}

std::vector<int> nms(std::span<const Box> boxes, std::span<const double> scores,
                     double iou_threshold) {
  std::vector<int> order(boxes.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](int a, int b) { return scores[a] > scores[b]; });

  std::vector<int> kept;
  for (int idx : order) {
    bool suppressed = false;
    for (int k : kept) {
      if (iou(boxes[idx], boxes[k]) > iou_threshold) {
        suppressed = true;
        break;
      }
    }
    if (!suppressed) kept.push_back(idx);
  }
  return kept;
}

}  // namespace tsdet
