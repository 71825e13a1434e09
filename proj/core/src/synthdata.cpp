#include "tsdet/synthdata.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "tsdet/rng.hpp"

namespace tsdet {

const char* shape_kind_name(ShapeKind kind) {
  switch (kind) {
    case ShapeKind::Circle: return "circle";
    case ShapeKind::Square: return "square";
    case ShapeKind::Triangle: return "triangle";
    case ShapeKind::Cross: return "cross";
    case ShapeKind::Ring: return "ring";
    case ShapeKind::Bar: return "bar";
  }
  return "?";
}

ShapeKind shape_kind_from_name(const std::string& name) {
  for (ShapeKind k : {ShapeKind::Circle, ShapeKind::Square, ShapeKind::Triangle, ShapeKind::Cross,
                      ShapeKind::Ring, ShapeKind::Bar}) {
    if (name == shape_kind_name(k)) return k;
  }
  throw std::invalid_argument("unknown shape kind: " + name);
}

std::vector<ShapeSpec> SynthConfig::default_shapes() {
  return {
      {ShapeKind::Circle, 12, 24},  {ShapeKind::Square, 12, 24}, {ShapeKind::Triangle, 14, 26},
      {ShapeKind::Cross, 14, 26},   {ShapeKind::Ring, 14, 26},   {ShapeKind::Bar, 16, 28},
  };
}

std::vector<SynthColor> SynthConfig::default_colors() {
  // Centroids are spread so that a box-mean stays nearest its own centroid
  // even when roughly half the box is mid-gray background.
  return {
      {"white", {255, 255, 255}, 8},  {"black", {10, 10, 10}, 8},
      {"green", {25, 160, 50}, 8},    {"blue", {35, 70, 220}, 8},
      {"brown", {150, 85, 20}, 8},    {"red", {225, 30, 35}, 8},
      {"gray", {70, 70, 70}, 8},      {"yellow", {245, 210, 40}, 8},
      {"orange", {250, 140, 25}, 8},  {"silver", {145, 150, 168}, 8},
      {"pink", {240, 120, 170}, 8},   {"purple", {140, 55, 190}, 8},
  };
}

std::vector<SynthMaterial> SynthConfig::default_materials() {
  return {
      {"wood", TextureKind::Stripe},
      {"metal", TextureKind::GlossGradient},
      {"plastic", TextureKind::Flat},
      {"glass", TextureKind::Speckle},
  };
}

SynthConfig::SynthConfig()
    : categories(default_shapes()), colors(default_colors()), materials(default_materials()) {}

void SynthConfig::validate() const {
  if (categories.size() < 2) throw std::invalid_argument("synthdata needs at least 2 categories");
  if (colors.size() < 2) throw std::invalid_argument("synthdata needs at least 2 colors");
  if (materials.empty()) throw std::invalid_argument("synthdata needs at least 1 material");
  if (n_images < 0) throw std::invalid_argument("n_images must be nonnegative");
  if (image_size < 32) throw std::invalid_argument("image_size must be at least 32");
  if (min_objects < 1 || max_objects < min_objects) {
    throw std::invalid_argument("invalid objects_per_image range");
  }
  if (attribute_label_rate < 0.0 || attribute_label_rate > 1.0) {
    throw std::invalid_argument("attribute_label_rate must be in [0,1]");
  }
}

namespace {

std::uint8_t to_u8(double v) {
  return static_cast<std::uint8_t>(std::clamp(v, 0.0, 255.0));
}

struct PlacedObject {
  Box box;
  int category = 0;
  int color = 0;
  int material = 0;
  int orientation = 0;      // triangles: 0..3, bars: 0..1
  double brightness = 1.0;  // per-object global factor
  double inner_ratio = 0.3; // rings
};

// Fraction of the subpixel point (px,py) covered by the shape whose tight box
// is `b`. Points are pre-checked to be inside the box.
bool point_in_shape(ShapeKind kind, const PlacedObject& o, double px, double py) {
  const Box& b = o.box;
  double w = b.width(), h = b.height();
  double nx = (px - b.cx()) / (0.5 * w);   // [-1, 1]
  double ny = (py - b.cy()) / (0.5 * h);
  switch (kind) {
    case ShapeKind::Circle:
      return nx * nx + ny * ny <= 1.0;
    case ShapeKind::Square:
    case ShapeKind::Bar:
      return true;
    case ShapeKind::Ring: {
      double r2 = nx * nx + ny * ny;
      return r2 <= 1.0 && r2 >= o.inner_ratio * o.inner_ratio;
    }
    case ShapeKind::Cross:
      return std::abs(nx) <= 0.6 || std::abs(ny) <= 0.6;
    case ShapeKind::Triangle: {
      // Isoceles triangle pointing up/down/left/right.
      double a = nx, t = ny;
      switch (o.orientation) {
        case 0: break;                       // up: apex at ny=-1
        case 1: t = -ny; break;              // down
        case 2: a = ny; t = nx; break;       // left: apex at nx=-1
        default: a = ny; t = -nx; break;     // right
      }
      // at t=-1 width 0, at t=+1 full width
      return std::abs(a) <= 0.5 * (t + 1.0);
    }
  }
  return false;
}

double coverage(ShapeKind kind, const PlacedObject& o, int x, int y) {
  static const double offs[2] = {0.25, 0.75};
  int hit = 0;
  for (double oy : offs) {
    for (double ox : offs) {
      double px = x + ox, py = y + oy;
      if (px < o.box.x1 || px > o.box.x2 || py < o.box.y1 || py > o.box.y2) continue;
      if (point_in_shape(kind, o, px, py)) ++hit;
    }
  }
  return hit / 4.0;
}

void render_object(ImageU8& img, const SynthConfig& cfg, const PlacedObject& o, Rng& rng) {
  const ShapeKind kind = cfg.categories[o.category].kind;
  const SynthColor& color = cfg.colors[o.color];
  const TextureKind texture = cfg.materials[o.material].texture;
  const Box& b = o.box;

  int x0 = static_cast<int>(std::floor(b.x1));
  int y0 = static_cast<int>(std::floor(b.y1));
  int x1 = static_cast<int>(std::ceil(b.x2));
  int y1 = static_cast<int>(std::ceil(b.y2));
  double stripe_w = std::max(2.0, b.width() / 6.0);

  for (int y = y0; y < y1; ++y) {
    for (int x = x0; x < x1; ++x) {
      double cov = coverage(kind, o, x, y);
      // One jitter/texture draw per pixel regardless of coverage keeps the
      // stream aligned and the output independent of tiny box changes.
      double fac = o.brightness;
      switch (texture) {
        case TextureKind::Flat:
          break;
        case TextureKind::Speckle:
          if (rng.uniform() < 0.18) fac *= 0.55;
          break;
        case TextureKind::Stripe:
          if (static_cast<int>(std::floor((x - b.x1 + y - b.y1) / stripe_w)) % 2 == 0) fac *= 0.62;
          break;
        case TextureKind::GlossGradient: {
          double t = (x - b.x1 + y - b.y1) / (b.width() + b.height());
          fac *= 1.35 - 0.65 * t;
          double gx = (x - (b.x1 + 0.3 * b.width())) / (0.18 * b.width());
          double gy = (y - (b.y1 + 0.3 * b.height())) / (0.18 * b.height());
          if (gx * gx + gy * gy < 1.0) fac *= 1.5;
          break;
        }
      }
      double noise[3] = {rng.normal(0, color.jitter), rng.normal(0, color.jitter),
                         rng.normal(0, color.jitter)};
      if (cov <= 0.0 || x < 0 || y < 0 || x >= img.width || y >= img.height) continue;
      for (int c = 0; c < 3; ++c) {
        double shade = std::clamp(color.rgb[c] * fac + noise[c], 0.0, 255.0);
        double mixed = img.at(x, y, c) * (1.0 - cov) + shade * cov;
        img.at(x, y, c) = to_u8(mixed);
      }
    }
  }
}

void render_occluder(ImageU8& img, const Box& b, std::array<double, 3> bg, Rng& rng) {
  // A thin background-toned bar across the middle of the object, never
  // touching the box border so ground-truth tightness is preserved.
  bool horizontal = rng.bernoulli(0.5);
  double thickness = std::max(2.0, 0.12 * (horizontal ? b.height() : b.width()));
  double center = horizontal ? rng.uniform(b.y1 + 0.3 * b.height(), b.y2 - 0.3 * b.height())
                             : rng.uniform(b.x1 + 0.3 * b.width(), b.x2 - 0.3 * b.width());
  double tint[3] = {rng.normal(0, 10), rng.normal(0, 10), rng.normal(0, 10)};
  int x0 = static_cast<int>(std::floor(b.x1)) + 1;
  int y0 = static_cast<int>(std::floor(b.y1)) + 1;
  int x1 = static_cast<int>(std::ceil(b.x2)) - 1;
  int y1 = static_cast<int>(std::ceil(b.y2)) - 1;
  for (int y = std::max(0, y0); y < std::min(img.height, y1); ++y) {
    for (int x = std::max(0, x0); x < std::min(img.width, x1); ++x) {
      double d = horizontal ? std::abs(y + 0.5 - center) : std::abs(x + 0.5 - center);
      if (d > 0.5 * thickness) continue;
      for (int c = 0; c < 3; ++c) {
        img.at(x, y, c) = to_u8(bg[c] + tint[c] + rng.normal(0, 4));
      }
    }
  }
}

DetectionSample render_image(const SynthConfig& cfg, int image_index, Rng image_rng) {
  const int S = cfg.image_size;
  auto img = std::make_shared<ImageU8>(S, S);

  // Background: mid-gray base with gentle per-pixel noise.
  Rng bg_rng = image_rng.child("background");
  std::array<double, 3> bg{};
  for (int c = 0; c < 3; ++c) bg[c] = 100.0 + bg_rng.normal(0, 5);
  for (int y = 0; y < S; ++y) {
    for (int x = 0; x < S; ++x) {
      for (int c = 0; c < 3; ++c) img->at(x, y, c) = to_u8(bg[c] + bg_rng.normal(0, 4));
    }
  }

  // Muted clutter rectangles behind the objects.
  Rng clutter_rng = image_rng.child("clutter");
  int n_clutter = static_cast<int>(clutter_rng.randint(cfg.clutter_min, cfg.clutter_max + 1));
  for (int i = 0; i < n_clutter; ++i) {
    int w = static_cast<int>(clutter_rng.randint(6, std::max(7, S / 3)));
    int h = static_cast<int>(clutter_rng.randint(6, std::max(7, S / 3)));
    int x0 = static_cast<int>(clutter_rng.randint(0, std::max(1, S - w)));
    int y0 = static_cast<int>(clutter_rng.randint(0, std::max(1, S - h)));
    double tint[3] = {clutter_rng.normal(0, 18), clutter_rng.normal(0, 18),
                      clutter_rng.normal(0, 18)};
    for (int y = y0; y < y0 + h; ++y) {
      for (int x = x0; x < x0 + w; ++x) {
        for (int c = 0; c < 3; ++c) img->at(x, y, c) = to_u8(bg[c] + tint[c] + clutter_rng.normal(0, 4));
      }
    }
  }

  // Place objects by rejection sampling on pairwise IoU.
  Rng place_rng = image_rng.child("place");
  int n_objects = static_cast<int>(place_rng.randint(cfg.min_objects, cfg.max_objects + 1));
  std::vector<PlacedObject> objects;
  for (int i = 0; i < n_objects; ++i) {
    bool placed = false;
    for (int attempt = 0; attempt < cfg.placement_retries && !placed; ++attempt) {
      PlacedObject o;
      o.category = static_cast<int>(place_rng.randint(0, static_cast<std::int64_t>(cfg.categories.size())));
      const ShapeSpec& spec = cfg.categories[o.category];
      double size = place_rng.uniform(spec.min_size, spec.max_size);
      double w = size, h = size;
      switch (spec.kind) {
        case ShapeKind::Bar: {
          double aspect = place_rng.uniform(2.5, 3.5);
          if (place_rng.bernoulli(0.5)) { w = size; h = size / aspect; }
          else { w = size / aspect; h = size; }
          break;
        }
        case ShapeKind::Triangle:
          o.orientation = static_cast<int>(place_rng.randint(0, 4));
          h = size * place_rng.uniform(0.85, 1.0);
          break;
        case ShapeKind::Ring:
          o.inner_ratio = 0.3;
          break;
        default:
          break;
      }
      if (w >= S - 2 || h >= S - 2) continue;
      double x1 = place_rng.uniform(1.0, S - 1.0 - w);
      double y1 = place_rng.uniform(1.0, S - 1.0 - h);
      o.box = Box{x1, y1, x1 + w, y1 + h};
      bool overlaps = false;
      for (const auto& other : objects) {
        if (iou(o.box, other.box) >= cfg.max_overlap_iou) { overlaps = true; break; }
      }
      if (overlaps) continue;
      o.color = static_cast<int>(place_rng.randint(0, static_cast<std::int64_t>(cfg.colors.size())));
      o.material = static_cast<int>(place_rng.randint(0, static_cast<std::int64_t>(cfg.materials.size())));
      o.brightness = place_rng.uniform(0.92, 1.08);
      objects.push_back(o);
      placed = true;
    }
    if (!placed) {
      throw std::runtime_error("synthdata: could not place object " + std::to_string(i) +
                               " in image " + std::to_string(image_index) +
                               " (scene too crowded)");
    }
  }

  for (std::size_t i = 0; i < objects.size(); ++i) {
    Rng draw_rng = image_rng.child("draw", i);
    render_object(*img, cfg, objects[i], draw_rng);
    Rng occ_rng = image_rng.child("occluder", i);
    if (occ_rng.bernoulli(cfg.occluder_prob)) render_occluder(*img, objects[i].box, bg, occ_rng);
  }

  DetectionSample sample;
  char buf[32];
  std::snprintf(buf, sizeof(buf), "synth_%06d", image_index);
  sample.image_id = buf;
  sample.image_path = std::string("images/") + buf + ".ppm";
  sample.width = S;
  sample.height = S;
  sample.pixels = img;

  Rng label_rng = image_rng.child("labels");
  for (const auto& o : objects) {
    ObjectAnnotation a;
    a.box = o.box;
    a.category = o.category;
    if (label_rng.bernoulli(cfg.attribute_label_rate)) a.color = o.color;
    if (label_rng.bernoulli(cfg.attribute_label_rate)) a.material = o.material;
    sample.annotations.push_back(a);
  }
  return sample;
}

}  // namespace

Dataset generate(const SynthConfig& config) {
  config.validate();
  Dataset out;
  for (const auto& s : config.categories) out.vocabulary.categories.push_back(shape_kind_name(s.kind));
  for (const auto& c : config.colors) out.vocabulary.colors.push_back(c.name);
  for (const auto& m : config.materials) out.vocabulary.materials.push_back(m.name);
  out.vocabulary.validate();

  Rng root(config.seed);
  out.samples.reserve(config.n_images);
  for (int i = 0; i < config.n_images; ++i) {
    out.samples.push_back(render_image(config, i, root.child("synth-image", i)));
  }
  return out;
}

std::filesystem::path write_dataset(const Dataset& dataset, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir / "images");
  for (const auto& s : dataset.samples) {
    if (!s.pixels) throw std::runtime_error("sample " + s.image_id + " has no pixels to write");
    write_ppm(*s.pixels, dir / s.image_path);
  }
  auto manifest = dir / "manifest.json";
  write_manifest(dataset.samples, dataset.vocabulary, manifest);
  return manifest;
}

}  // namespace tsdet
