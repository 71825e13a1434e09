#include "tsdet/image.hpp"

#include <fstream>
#include <stdexcept>

namespace tsdet {

ImageU8::ImageU8(int w, int h, std::array<std::uint8_t, 3> fill)
    : width(w), height(h), data(static_cast<std::size_t>(w) * h * 3) {
  for (std::size_t i = 0; i < data.size(); i += 3) {
    data[i] = fill[0];
    data[i + 1] = fill[1];
    data[i + 2] = fill[2];
  }
}

void ImageU8::set_pixel(int x, int y, std::array<std::uint8_t, 3> rgb) {
  if (x < 0 || y < 0 || x >= width || y >= height) return;
  at(x, y, 0) = rgb[0];
  at(x, y, 1) = rgb[1];
  at(x, y, 2) = rgb[2];
}

void write_ppm(const ImageU8& img, const std::filesystem::path& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open for writing: " + path.string());
  f << "P6\n" << img.width << " " << img.height << "\n255\n";
  f.write(reinterpret_cast<const char*>(img.data.data()),
          static_cast<std::streamsize>(img.data.size()));
  if (!f) throw std::runtime_error("write failed: " + path.string());
}

namespace {

int next_ppm_token(std::istream& in) {
  // Skips whitespace and '#' comments, then parses an unsigned integer.
  int c = in.get();
  while (c != EOF && (std::isspace(c) || c == '#')) {
    if (c == '#') {
      while (c != EOF && c != '\n') c = in.get();
    }
    c = in.get();
  }
  if (c == EOF || !std::isdigit(c)) throw std::runtime_error("malformed PPM header");
  int value = 0;
  while (c != EOF && std::isdigit(c)) {
    value = value * 10 + (c - '0');
    c = in.get();
  }
  return value;
}

}  // namespace

ImageU8 read_ppm(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open: " + path.string());
  char m0 = static_cast<char>(f.get());
  char m1 = static_cast<char>(f.get());
  if (m0 != 'P' || m1 != '6') throw std::runtime_error("not a P6 PPM: " + path.string());
  int w = next_ppm_token(f);
  int h = next_ppm_token(f);
  int maxval = next_ppm_token(f);
  if (maxval != 255) throw std::runtime_error("unsupported PPM maxval: " + path.string());
  ImageU8 img(w, h);
  f.read(reinterpret_cast<char*>(img.data.data()), static_cast<std::streamsize>(img.data.size()));
  if (f.gcount() != static_cast<std::streamsize>(img.data.size())) {
    throw std::runtime_error("truncated PPM: " + path.string());
  }
  return img;
}

ImageU8 flip_horizontal(const ImageU8& img) {
  ImageU8 out(img.width, img.height);
  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x < img.width; ++x) {
      for (int c = 0; c < 3; ++c) {
        out.at(x, y, c) = img.at(img.width - 1 - x, y, c);
      }
    }
  }
  return out;
}

}  // namespace tsdet
