#pragma once

#include <array>
#include <string>
#include <vector>

#include "tsdet/datamodel.hpp"

namespace tsdet {

void draw_rect(ImageU8& img, const Box& box, std::array<std::uint8_t, 3> rgb, int thickness = 1);

// 5x7 bitmap text (uppercased), 6px advance.
void draw_text(ImageU8& img, int x, int y, const std::string& text,
               std::array<std::uint8_t, 3> rgb);

// Boxes plus "category|color|material" labels for detections at or above the
// confidence floor. With a split, reference-category predictions draw blue
// and target-category predictions red; otherwise green.
void draw_detections(ImageU8& img, const std::vector<Detection>& detections,
                     const Vocabulary& vocabulary, double confidence,
                     const CategorySplit* split = nullptr);

std::string detection_label(const Detection& det, const Vocabulary& vocabulary);

}  // namespace tsdet
