#include "tsdet/visualize.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>

namespace tsdet {

namespace {

// 5x7 glyphs, one byte per row, 5 LSBs used (bit 4 = leftmost pixel).
struct Glyph {
  char ch;
  std::uint8_t rows[7];
};

const Glyph kFont[] = {
    {'A', {0x0E, 0x11, 0x11, 0x1F, 0x11, 0x11, 0x11}},
    {'B', {0x1E, 0x11, 0x11, 0x1E, 0x11, 0x11, 0x1E}},
    {'C', {0x0E, 0x11, 0x10, 0x10, 0x10, 0x11, 0x0E}},
    {'D', {0x1C, 0x12, 0x11, 0x11, 0x11, 0x12, 0x1C}},
    {'E', {0x1F, 0x10, 0x10, 0x1E, 0x10, 0x10, 0x1F}},
    {'F', {0x1F, 0x10, 0x10, 0x1E, 0x10, 0x10, 0x10}},
    {'G', {0x0E, 0x11, 0x10, 0x17, 0x11, 0x11, 0x0F}},
    {'H', {0x11, 0x11, 0x11, 0x1F, 0x11, 0x11, 0x11}},
    {'I', {0x0E, 0x04, 0x04, 0x04, 0x04, 0x04, 0x0E}},
    {'J', {0x07, 0x02, 0x02, 0x02, 0x02, 0x12, 0x0C}},
    {'K', {0x11, 0x12, 0x14, 0x18, 0x14, 0x12, 0x11}},
    {'L', {0x10, 0x10, 0x10, 0x10, 0x10, 0x10, 0x1F}},
    {'M', {0x11, 0x1B, 0x15, 0x15, 0x11, 0x11, 0x11}},
    {'N', {0x11, 0x19, 0x15, 0x13, 0x11, 0x11, 0x11}},
    {'O', {0x0E, 0x11, 0x11, 0x11, 0x11, 0x11, 0x0E}},
    {'P', {0x1E, 0x11, 0x11, 0x1E, 0x10, 0x10, 0x10}},
    {'Q', {0x0E, 0x11, 0x11, 0x11, 0x15, 0x12, 0x0D}},
    {'R', {0x1E, 0x11, 0x11, 0x1E, 0x14, 0x12, 0x11}},
    {'S', {0x0F, 0x10, 0x10, 0x0E, 0x01, 0x01, 0x1E}},
    {'T', {0x1F, 0x04, 0x04, 0x04, 0x04, 0x04, 0x04}},
    {'U', {0x11, 0x11, 0x11, 0x11, 0x11, 0x11, 0x0E}},
    {'V', {0x11, 0x11, 0x11, 0x11, 0x11, 0x0A, 0x04}},
    {'W', {0x11, 0x11, 0x11, 0x15, 0x15, 0x1B, 0x11}},
    {'X', {0x11, 0x0A, 0x04, 0x04, 0x04, 0x0A, 0x11}},
    {'Y', {0x11, 0x11, 0x0A, 0x04, 0x04, 0x04, 0x04}},
    {'Z', {0x1F, 0x01, 0x02, 0x04, 0x08, 0x10, 0x1F}},
    {'0', {0x0E, 0x11, 0x13, 0x15, 0x19, 0x11, 0x0E}},
    {'1', {0x04, 0x0C, 0x04, 0x04, 0x04, 0x04, 0x0E}},
    {'2', {0x0E, 0x11, 0x01, 0x06, 0x08, 0x10, 0x1F}},
    {'3', {0x1F, 0x02, 0x04, 0x02, 0x01, 0x11, 0x0E}},
    {'4', {0x02, 0x06, 0x0A, 0x12, 0x1F, 0x02, 0x02}},
    {'5', {0x1F, 0x10, 0x1E, 0x01, 0x01, 0x11, 0x0E}},
    {'6', {0x06, 0x08, 0x10, 0x1E, 0x11, 0x11, 0x0E}},
    {'7', {0x1F, 0x01, 0x02, 0x04, 0x08, 0x08, 0x08}},
    {'8', {0x0E, 0x11, 0x11, 0x0E, 0x11, 0x11, 0x0E}},
    {'9', {0x0E, 0x11, 0x11, 0x0F, 0x01, 0x02, 0x0C}},
    {'|', {0x04, 0x04, 0x04, 0x04, 0x04, 0x04, 0x04}},
    {'-', {0x00, 0x00, 0x00, 0x1F, 0x00, 0x00, 0x00}},
    {'.', {0x00, 0x00, 0x00, 0x00, 0x00, 0x0C, 0x0C}},
    {'_', {0x00, 0x00, 0x00, 0x00, 0x00, 0x00, 0x1F}},
    {':', {0x00, 0x0C, 0x0C, 0x00, 0x0C, 0x0C, 0x00}},
    {'%', {0x19, 0x1A, 0x02, 0x04, 0x08, 0x0B, 0x13}},
    {'/', {0x01, 0x02, 0x02, 0x04, 0x08, 0x08, 0x10}},
    {' ', {0x00, 0x00, 0x00, 0x00, 0x00, 0x00, 0x00}},
};

const std::uint8_t* glyph_rows(char c) {
  for (const auto& g : kFont) {
    if (g.ch == c) return g.rows;
  }
  return nullptr;
}

}  // namespace

void draw_rect(ImageU8& img, const Box& box, std::array<std::uint8_t, 3> rgb, int thickness) {
  int x1 = static_cast<int>(std::lround(box.x1));
  int y1 = static_cast<int>(std::lround(box.y1));
  int x2 = static_cast<int>(std::lround(box.x2)) - 1;
  int y2 = static_cast<int>(std::lround(box.y2)) - 1;
  for (int t = 0; t < thickness; ++t) {
    for (int x = x1; x <= x2; ++x) {
      img.set_pixel(x, y1 + t, rgb);
      img.set_pixel(x, y2 - t, rgb);
    }
    for (int y = y1; y <= y2; ++y) {
      img.set_pixel(x1 + t, y, rgb);
      img.set_pixel(x2 - t, y, rgb);
    }
  }
}

void draw_text(ImageU8& img, int x, int y, const std::string& text,
               std::array<std::uint8_t, 3> rgb) {
  int cx = x;
  for (char raw : text) {
    char c = static_cast<char>(std::toupper(static_cast<unsigned char>(raw)));
    const std::uint8_t* rows = glyph_rows(c);
    if (rows) {
      for (int ry = 0; ry < 7; ++ry) {
        for (int rx = 0; rx < 5; ++rx) {
          if (rows[ry] & (0x10 >> rx)) img.set_pixel(cx + rx, y + ry, rgb);
        }
      }
    }
    cx += 6;
  }
}

std::string detection_label(const Detection& det, const Vocabulary& vocabulary) {
  std::string label = vocabulary.categories.at(static_cast<std::size_t>(det.category()));
  if (!det.color_scores.empty()) {
    label += "|" + vocabulary.colors.at(static_cast<std::size_t>(det.color()));
  }
  if (!det.material_scores.empty()) {
    label += "|" + vocabulary.materials.at(static_cast<std::size_t>(det.material()));
  }
  return label;
}

void draw_detections(ImageU8& img, const std::vector<Detection>& detections,
                     const Vocabulary& vocabulary, double confidence,
                     const CategorySplit* split) {
  const std::array<std::uint8_t, 3> blue{40, 90, 255};
  const std::array<std::uint8_t, 3> red{255, 50, 40};
  const std::array<std::uint8_t, 3> green{40, 220, 60};
  for (const auto& det : detections) {
    if (det.confidence() < confidence) continue;
    std::array<std::uint8_t, 3> color = green;
    if (split) color = split->in_reference(det.category()) ? blue : red;
    draw_rect(img, det.box, color);
    int tx = static_cast<int>(std::lround(det.box.x1)) + 1;
    int ty = static_cast<int>(std::lround(det.box.y1)) - 8;
    if (ty < 0) ty = static_cast<int>(std::lround(det.box.y1)) + 2;
    draw_text(img, tx, ty, detection_label(det, vocabulary), color);
  }
}

}  // namespace tsdet
