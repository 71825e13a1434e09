#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace tsdet {

// Interleaved 8-bit RGB raster, row-major.
struct ImageU8 {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> data;  // height * width * 3

  ImageU8() = default;
  ImageU8(int w, int h, std::array<std::uint8_t, 3> fill = {0, 0, 0});

  std::uint8_t& at(int x, int y, int c) { return data[(static_cast<std::size_t>(y) * width + x) * 3 + c]; }
  std::uint8_t at(int x, int y, int c) const { return data[(static_cast<std::size_t>(y) * width + x) * 3 + c]; }

  void set_pixel(int x, int y, std::array<std::uint8_t, 3> rgb);

  bool operator==(const ImageU8&) const = default;
};

// Binary PPM (P6) I/O. The byte layout is a pure function of the pixel
// content, which the dataset determinism contract relies on.
void write_ppm(const ImageU8& img, const std::filesystem::path& path);
ImageU8 read_ppm(const std::filesystem::path& path);

ImageU8 flip_horizontal(const ImageU8& img);

}  // namespace tsdet
