#pragma once

#include <span>
#include <vector>

namespace tsdet {

// Axis-aligned box in continuous image coordinates, corners (x1,y1) top-left
// and (x2,y2) bottom-right. A valid box has strictly positive width and height.
struct Box {
  double x1 = 0.0, y1 = 0.0, x2 = 0.0, y2 = 0.0;

  double width() const { return x2 - x1; }
  double height() const { return y2 - y1; }
  double area() const { return width() * height(); }
  double cx() const { return 0.5 * (x1 + x2); }
  double cy() const { return 0.5 * (y1 + y2); }
  bool valid() const;

  bool operator==(const Box&) const = default;
};

// Parameterized box regression offsets: center shift normalized by anchor
// size, log-scale size ratios.
struct BoxDelta {
  double dx = 0.0, dy = 0.0, dw = 0.0, dh = 0.0;

  bool operator==(const BoxDelta&) const = default;
};

// Clamp applied to dw/dh before exponentiation when decoding.
double delta_clamp();

// Intersection-over-union of two valid boxes. Throws std::domain_error if
// either box is degenerate.
double iou(const Box& a, const Box& b);

// Regression target such that decode_box(encode_box(gt, anchor), anchor) == gt.
BoxDelta encode_box(const Box& gt, const Box& anchor);

Box decode_box(const BoxDelta& delta, const Box& anchor);

Box clip_box(const Box& b, double image_width, double image_height);

// Greedy non-maximum suppression. Returns kept indices sorted by descending
// score; equal scores break toward the lower input index. A box is suppressed
// when its IoU with an already-kept box exceeds the threshold.
std::vector<int> nms(std::span<const Box> boxes, std::span<const double> scores,
                     double iou_threshold);

}  // namespace tsdet
