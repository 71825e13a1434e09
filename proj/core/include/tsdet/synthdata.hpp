#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "tsdet/datamodel.hpp"

namespace tsdet {

enum class ShapeKind { Circle, Square, Triangle, Cross, Ring, Bar };

const char* shape_kind_name(ShapeKind kind);
ShapeKind shape_kind_from_name(const std::string& name);

struct ShapeSpec {
  ShapeKind kind = ShapeKind::Circle;
  double min_size = 12.0;  // tight-box long side, pixels
  double max_size = 24.0;
};

struct SynthColor {
  std::string name;
  std::array<std::uint8_t, 3> rgb{};  // pre-jitter centroid; also the label
  double jitter = 8.0;                // per-pixel additive noise stddev
};

enum class TextureKind { Flat, Speckle, Stripe, GlossGradient };

struct SynthMaterial {
  std::string name;
  TextureKind texture = TextureKind::Flat;
};

struct SynthConfig {
  int n_images = 200;
  int image_size = 64;
  std::vector<ShapeSpec> categories;    // defaults to all six kinds
  std::vector<SynthColor> colors;       // defaults to the 12-color table
  std::vector<SynthMaterial> materials; // defaults to the 4-material table
  int min_objects = 1;
  int max_objects = 3;
  std::uint64_t seed = 0;
  double attribute_label_rate = 1.0 / 3.0;  // independent keep-probability per attribute
  double max_overlap_iou = 0.3;
  int placement_retries = 60;
  int clutter_min = 4;
  int clutter_max = 9;
  double occluder_prob = 0.25;

  SynthConfig();

  void validate() const;  // >=2 categories, >=2 colors, >=1 material

  static std::vector<ShapeSpec> default_shapes();
  static std::vector<SynthColor> default_colors();
  static std::vector<SynthMaterial> default_materials();
};

// Deterministic function of the config: per-image substreams are derived from
// (seed, image index), so the output is identical regardless of how the
// caller schedules generation. Samples carry in-memory pixels and a relative
// image_path ("images/<id>.ppm") for later export.
Dataset generate(const SynthConfig& config);

// Writes images plus "manifest.json" under dir.
std::filesystem::path write_dataset(const Dataset& dataset, const std::filesystem::path& dir);

}  // namespace tsdet
