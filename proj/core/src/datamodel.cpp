#include "tsdet/datamodel.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "tsdet/rng.hpp"

namespace tsdet {

using nlohmann::json;

namespace {

int index_of(const std::vector<std::string>& names, const std::string& name) {
  auto it = std::find(names.begin(), names.end(), name);
  return it == names.end() ? -1 : static_cast<int>(it - names.begin());
}

void check_unique(const std::vector<std::string>& names, const char* what) {
  std::set<std::string> seen;
  for (const auto& n : names) {
    if (!seen.insert(n).second) {
      throw std::invalid_argument(std::string("duplicate ") + what + " name: " + n);
    }
  }
}

}  // namespace

void Vocabulary::validate() const {
  if (categories.empty()) throw std::invalid_argument("vocabulary has no categories");
  check_unique(categories, "category");
  check_unique(colors, "color");
  check_unique(materials, "material");
}

int Vocabulary::category_index(const std::string& name) const { return index_of(categories, name); }
int Vocabulary::color_index(const std::string& name) const { return index_of(colors, name); }
int Vocabulary::material_index(const std::string& name) const { return index_of(materials, name); }

Vocabulary Vocabulary::vg20() {
  Vocabulary v;
  v.categories = {"car",  "cat",   "tree",  "chair", "hat",  "bottle", "shirt",
                  "table", "bird",  "truck", "door",  "window", "dog",  "bear",
                  "bench", "fence", "cow",   "cup",   "post", "pole"};
  v.colors = {"white", "black",  "green",  "blue", "brown",  "red",
              "gray",  "yellow", "orange", "silver", "pink", "purple"};
  v.materials = {"wood", "metal", "plastic", "glass"};
  return v;
}

ImageU8 DetectionSample::load_image(const std::filesystem::path& base_dir) const {
  if (pixels) return *pixels;
  if (image_path.empty()) {
    throw std::runtime_error("sample " + image_id + " has neither pixels nor an image path");
  }
  std::filesystem::path p(image_path);
  if (p.is_relative() && !base_dir.empty()) p = base_dir / p;
  return read_ppm(p);
}

bool CategorySplit::in_target(int category) const {
  return std::binary_search(target.begin(), target.end(), category);
}

bool CategorySplit::in_reference(int category) const {
  return std::binary_search(reference.begin(), reference.end(), category);
}

void CategorySplit::validate(int n_categories) const {
  std::vector<bool> seen(n_categories, false);
  auto visit = [&](const std::vector<int>& ids, const char* side) {
    for (int id : ids) {
      if (id < 0 || id >= n_categories) {
        throw std::invalid_argument(std::string("split ") + side + " index out of range");
      }
      if (seen[id]) throw std::invalid_argument("split sides are not disjoint");
      seen[id] = true;
    }
  };
  visit(reference, "reference");
  visit(target, "target");
  if (std::find(seen.begin(), seen.end(), false) != seen.end()) {
    throw std::invalid_argument("split does not cover all categories");
  }
}

namespace {

int argmax(const std::vector<double>& v) {
  if (v.empty()) return -1;
  return static_cast<int>(std::max_element(v.begin(), v.end()) - v.begin());
}

}  // namespace

int Detection::category() const { return argmax(category_scores); }
double Detection::confidence() const {
  return category_scores.empty() ? 0.0 : *std::max_element(category_scores.begin(), category_scores.end());
}
int Detection::color() const { return argmax(color_scores); }
int Detection::material() const { return argmax(material_scores); }

namespace {

json vocabulary_to_json(const Vocabulary& v) {
  return json{{"categories", v.categories}, {"colors", v.colors}, {"materials", v.materials}};
}

Vocabulary vocabulary_from_json(const json& j) {
  Vocabulary v;
  v.categories = j.at("categories").get<std::vector<std::string>>();
  v.colors = j.at("colors").get<std::vector<std::string>>();
  v.materials = j.at("materials").get<std::vector<std::string>>();
  v.validate();
  return v;
}

[[noreturn]] void annotation_error(const DetectionSample& s, std::size_t ann_index,
                                   const std::string& message) {
  throw std::runtime_error("sample '" + s.image_id + "' annotation " + std::to_string(ann_index) +
                           ": " + message);
}

}  // namespace

Dataset load_manifest(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open manifest: " + path.string());
  json doc;
  try {
    doc = json::parse(f);
  } catch (const json::parse_error& e) {
    throw std::runtime_error("manifest parse error in " + path.string() + ": " + e.what());
  }

  Dataset out;
  try {
    out.vocabulary = vocabulary_from_json(doc.at("vocabulary"));
  } catch (const json::exception& e) {
    throw std::runtime_error("manifest vocabulary error in " + path.string() + ": " + e.what());
  }

  const auto& samples = doc.at("samples");
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const json& js = samples[i];
    DetectionSample s;
    try {
      s.image_id = js.at("image_id").get<std::string>();
      s.image_path = js.value("image_path", std::string{});
      s.width = js.at("width").get<int>();
      s.height = js.at("height").get<int>();
    } catch (const json::exception& e) {
      throw std::runtime_error("manifest sample " + std::to_string(i) + ": " + e.what());
    }
    if (s.width < 32 || s.height < 32) {
      throw std::runtime_error("sample '" + s.image_id + "': image smaller than 32x32");
    }
    const json& anns = js.value("annotations", json::array());
    for (std::size_t k = 0; k < anns.size(); ++k) {
      const json& ja = anns[k];
      ObjectAnnotation a;
      const auto& b = ja.at("box");
      if (!b.is_array() || b.size() != 4) annotation_error(s, k, "box must be [x1,y1,x2,y2]");
      a.box = Box{b[0].get<double>(), b[1].get<double>(), b[2].get<double>(), b[3].get<double>()};
      if (!a.box.valid()) annotation_error(s, k, "degenerate box");
      if (a.box.x1 < 0 || a.box.y1 < 0 || a.box.x2 > s.width || a.box.y2 > s.height) {
        annotation_error(s, k, "box outside image bounds");
      }
      std::string cat = ja.at("category").get<std::string>();
      a.category = out.vocabulary.category_index(cat);
      if (a.category < 0) annotation_error(s, k, "unknown category '" + cat + "'");
      if (ja.contains("color") && !ja["color"].is_null()) {
        std::string c = ja["color"].get<std::string>();
        int idx = out.vocabulary.color_index(c);
        if (idx < 0) annotation_error(s, k, "unknown color '" + c + "'");
        a.color = idx;
      }
      if (ja.contains("material") && !ja["material"].is_null()) {
        std::string m = ja["material"].get<std::string>();
        int idx = out.vocabulary.material_index(m);
        if (idx < 0) annotation_error(s, k, "unknown material '" + m + "'");
        a.material = idx;
      }
      s.annotations.push_back(a);
    }
    out.samples.push_back(std::move(s));
  }
  return out;
}

void write_manifest(const std::vector<DetectionSample>& samples, const Vocabulary& vocabulary,
                    const std::filesystem::path& path) {
  vocabulary.validate();
  json doc;
  doc["vocabulary"] = vocabulary_to_json(vocabulary);
  json out_samples = json::array();
  for (const auto& s : samples) {
    json js;
    js["image_id"] = s.image_id;
    js["image_path"] = s.image_path;
    js["width"] = s.width;
    js["height"] = s.height;
    json anns = json::array();
    for (const auto& a : s.annotations) {
      json ja;
      ja["box"] = {a.box.x1, a.box.y1, a.box.x2, a.box.y2};
      ja["category"] = vocabulary.categories.at(a.category);
      ja["color"] = a.color ? json(vocabulary.colors.at(*a.color)) : json(nullptr);
      ja["material"] = a.material ? json(vocabulary.materials.at(*a.material)) : json(nullptr);
      anns.push_back(std::move(ja));
    }
    js["annotations"] = std::move(anns);
    out_samples.push_back(std::move(js));
  }
  doc["samples"] = std::move(out_samples);

  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open manifest for writing: " + path.string());
  f << doc.dump(2) << "\n";
  if (!f) throw std::runtime_error("manifest write failed: " + path.string());
}

std::pair<CategorySplit, CategorySplit> make_split(const Vocabulary& vocabulary,
                                                   std::uint64_t seed) {
  int n = static_cast<int>(vocabulary.categories.size());
  if (n % 2 != 0) {
    throw std::invalid_argument("attribute-transfer split requires an even category count, got " +
                                std::to_string(n));
  }
  std::vector<int> ids(n);
  for (int i = 0; i < n; ++i) ids[i] = i;
  Rng rng = Rng(seed).child("category-split");
  rng.shuffle(ids);

  CategorySplit run_a;
  run_a.reference.assign(ids.begin(), ids.begin() + n / 2);
  run_a.target.assign(ids.begin() + n / 2, ids.end());
  std::sort(run_a.reference.begin(), run_a.reference.end());
  std::sort(run_a.target.begin(), run_a.target.end());

  CategorySplit run_b{run_a.target, run_a.reference};
  return {run_a, run_b};
}

std::vector<DetectionSample> mask_target_attributes(const std::vector<DetectionSample>& samples,
                                                    const CategorySplit& split) {
  std::vector<DetectionSample> out = samples;
  for (auto& s : out) {
    for (auto& a : s.annotations) {
      if (split.in_target(a.category)) {
        a.color.reset();
        a.material.reset();
      }
    }
  }
  return out;
}

CategorySplit load_split(const std::filesystem::path& path, const Vocabulary& vocabulary) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open split file: " + path.string());
  json doc = json::parse(f);
  CategorySplit split;
  auto resolve = [&](const json& names, std::vector<int>& out_ids) {
    for (const auto& n : names) {
      int idx = vocabulary.category_index(n.get<std::string>());
      if (idx < 0) {
        throw std::runtime_error("split file names unknown category '" + n.get<std::string>() + "'");
      }
      out_ids.push_back(idx);
    }
    std::sort(out_ids.begin(), out_ids.end());
  };
  resolve(doc.at("reference"), split.reference);
  resolve(doc.at("target"), split.target);
  split.validate(static_cast<int>(vocabulary.categories.size()));
  return split;
}

void write_split(const CategorySplit& split, const Vocabulary& vocabulary,
                 const std::filesystem::path& path) {
  json doc;
  auto names = [&](const std::vector<int>& ids) {
    std::vector<std::string> out;
    for (int id : ids) out.push_back(vocabulary.categories.at(id));
    return out;
  };
  doc["reference"] = names(split.reference);
  doc["target"] = names(split.target);
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open split file for writing: " + path.string());
  f << doc.dump(2) << "\n";
}

}  // namespace tsdet
