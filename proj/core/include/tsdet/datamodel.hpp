#pragma once

#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "tsdet/geometry.hpp"
#include "tsdet/image.hpp"

namespace tsdet {

// Category / attribute name tables. Annotations and predictions refer to
// entries by index; manifests store the names and resolve at load time.
struct Vocabulary {
  std::vector<std::string> categories;
  std::vector<std::string> colors;
  std::vector<std::string> materials;

  // Throws std::invalid_argument on duplicate names or empty categories.
  void validate() const;

  int category_index(const std::string& name) const;  // -1 when absent
  int color_index(const std::string& name) const;
  int material_index(const std::string& name) const;

  bool operator==(const Vocabulary&) const = default;

  // The 20-category / 12-color / 4-material table used throughout the docs.
  static Vocabulary vg20();
};

struct ObjectAnnotation {
  Box box;
  int category = 0;
  std::optional<int> color;
  std::optional<int> material;

  bool operator==(const ObjectAnnotation&) const = default;
};

struct DetectionSample {
  std::string image_id;
  std::string image_path;  // relative to the manifest's directory unless absolute
  int width = 0;
  int height = 0;
  std::vector<ObjectAnnotation> annotations;
  // Optional in-memory raster; pipelines that never touch disk fill this.
  std::shared_ptr<const ImageU8> pixels;

  // Returns pixels if present, otherwise reads image_path (resolved against
  // base_dir when relative).
  ImageU8 load_image(const std::filesystem::path& base_dir = {}) const;
};

// Disjoint reference/target category partition for attribute transfer.
struct CategorySplit {
  std::vector<int> reference;  // sorted
  std::vector<int> target;     // sorted

  bool in_target(int category) const;
  bool in_reference(int category) const;
  void validate(int n_categories) const;

  bool operator==(const CategorySplit&) const = default;
};

// One predicted object. Score vectors are simplexes (sum to 1 within 1e-5);
// category_scores covers the foreground categories, background already
// removed and the remainder renormalized.
struct Detection {
  Box box;
  std::vector<double> category_scores;
  std::vector<double> color_scores;
  std::vector<double> material_scores;
  double objectness = 0.0;

  int category() const;             // argmax of category_scores
  double confidence() const;        // max of category_scores
  int color() const;                // argmax, -1 when head disabled
  int material() const;
};

struct Dataset {
  std::vector<DetectionSample> samples;
  Vocabulary vocabulary;
};

// Manifest I/O. The schema is a single JSON document:
//   {"vocabulary": {"categories": [...], "colors": [...], "materials": [...]},
//    "samples": [{"image_id", "image_path", "width", "height",
//                 "annotations": [{"box": [x1,y1,x2,y2], "category": "name",
//                                  "color": "name"|null, "material": "name"|null}]}]}
// Loading validates every record against the vocabulary and reports the
// offending sample/annotation on failure. Writing is deterministic: two calls
// on the same input produce byte-identical files.
Dataset load_manifest(const std::filesystem::path& path);
void write_manifest(const std::vector<DetectionSample>& samples, const Vocabulary& vocabulary,
                    const std::filesystem::path& path);

// Mirrored reference/target partitions: run_a.reference == run_b.target and
// vice versa. Deterministic in (vocabulary size, seed); requires an even
// category count.
std::pair<CategorySplit, CategorySplit> make_split(const Vocabulary& vocabulary,
                                                   std::uint64_t seed);

// Copy of the samples with color/material removed from every annotation whose
// category is in split.target. Boxes and category labels are untouched.
std::vector<DetectionSample> mask_target_attributes(const std::vector<DetectionSample>& samples,
                                                    const CategorySplit& split);

// Split file I/O ({"reference": [names], "target": [names]}).
CategorySplit load_split(const std::filesystem::path& path, const Vocabulary& vocabulary);
void write_split(const CategorySplit& split, const Vocabulary& vocabulary,
                 const std::filesystem::path& path);

}  // namespace tsdet
