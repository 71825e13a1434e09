#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "model_fixtures.hpp"
#include "tsdet/model/checkpoint.hpp"
#include "tsdet/model/detector.hpp"
#include "tsdet/rng.hpp"
#include "tsdet/synthdata.hpp"
#include "tsdet/visualize.hpp"

using namespace tsdet;
using nn::Tensor;
using nn::Var;

namespace {

Dataset tiny_dataset(int n, std::uint64_t seed) { return generate(fixtures::tiny_synth(n, seed)); }

struct ForwardProbe {
  std::vector<Box> rois;
  Tensor category, bbox, color, material;
};

// Runs the full head path with a fixed proposal set.
ForwardProbe probe_heads(const DetectionModel& model, const ImageU8& img,
                         const std::vector<Box>* fixed_rois = nullptr) {
  nn::NoGradGuard no_grad;
  Tensor t = model.preprocess(img);
  ForwardProbe out;
  auto object_fpn = model.forward_stream(StreamKind::Object, t);
  if (fixed_rois) {
    out.rois = *fixed_rois;
  } else {
    RpnForward rpn = model.forward_rpn(t, false);
    for (const auto& p : rpn.proposals) out.rois.push_back(p.box);
    object_fpn = rpn.object_fpn;
  }
  Var obj_pooled = model.extract_roi_features(StreamKind::Object, object_fpn, out.rois);
  Var attr_pooled = obj_pooled;
  if (variant_is_two_stream(model.config().variant)) {
    auto attr_fpn = model.forward_stream(StreamKind::Attribute, t);
    attr_pooled = model.extract_roi_features(StreamKind::Attribute, attr_fpn, out.rois);
  }
  std::vector<int> labels(out.rois.size(), 1);
  HeadOutputs heads =
      variant_is_pa(model.config().variant)
          ? model.forward_heads(obj_pooled, attr_pooled, &labels)
          : model.forward_heads(obj_pooled, attr_pooled);
  out.category = heads.category->value;
  out.bbox = heads.bbox->value;
  if (heads.color) out.color = heads.color->value;
  if (heads.material) out.material = heads.material->value;
  if (heads.unified) out.color = heads.unified->value;
  return out;
}

void perturb(std::vector<Var> params, std::uint64_t seed) {
  Rng rng(seed);
  for (auto& p : params) {
    for (auto& v : p->value.data) v += rng.normal(0, 0.05);
  }
}

}  // namespace

TEST_CASE("variant names round trip and bad names list the valid set") {
  for (const auto& name : variant_names()) {
    CHECK(variant_name(variant_from_name(name)) == name);
  }
  CHECK(variant_from_name("TwoStream+CrossLink") == ModelVariant::TwoStreamCrossLink);
  CHECK(variant_from_name("PA+SCE") == ModelVariant::PaSce);
  try {
    variant_from_name("resnet");
    FAIL("expected throw");
  } catch (const std::invalid_argument& e) {
    std::string msg = e.what();
    CHECK(msg.find("two_stream") != std::string::npos);
    CHECK(msg.find("pa_uce") != std::string::npos);
  }
}

TEST_CASE("anchor grid count matches the closed form") {
  AnchorConfig cfg;  // 3 scales x 3 ratios
  AnchorSet anchors = generate_anchors(cfg, {3, 4}, 64, 64);
  CHECK(anchors.boxes.size() == (8 * 8 + 4 * 4) * 9);
  CHECK(anchors.level_of.front() == 3);
  CHECK(anchors.level_of.back() == 4);

  AnchorSet fine = generate_anchors(cfg, {2, 3}, 64, 64);
  CHECK(fine.boxes.size() == (16 * 16 + 8 * 8) * 9);
}

TEST_CASE("fpn level assignment") {
  CHECK(fpn_level_for_box(Box{0, 0, 224, 224}, 4, 224.0, 2, 5) == 4);
  CHECK(fpn_level_for_box(Box{0, 0, 448, 448}, 4, 224.0, 2, 5) == 5);
  CHECK(fpn_level_for_box(Box{0, 0, 28, 28}, 4, 224.0, 2, 5) == 2);   // clamped
  CHECK(fpn_level_for_box(Box{0, 0, 112, 112}, 4, 224.0, 2, 5) == 3);
}

TEST_CASE("head shapes: background class and embedding rows") {
  Dataset ds = tiny_dataset(1, 1);
  REQUIRE(ds.vocabulary.categories.size() == 3);

  DetectionModel ts = DetectionModel::build(fixtures::tiny_model(ModelVariant::TwoStream),
                                            ds.vocabulary, 7);
  Var cat_w = ts.params().find("head_category.fc.weight");
  REQUIRE(cat_w);
  CHECK(cat_w->value.dim(1) == 4);  // 3 categories + background
  Var bbox_w = ts.params().find("head_bbox.fc.weight");
  CHECK(bbox_w->value.dim(1) == 12);

  DetectionModel pa = DetectionModel::build(fixtures::tiny_model(ModelVariant::PaSce),
                                            ds.vocabulary, 7);
  Var table = pa.params().find("pa_embed.table");
  REQUIRE(table);
  CHECK(table->value.dim(0) == 4);  // one row per class incl. background
}

TEST_CASE("two-stream doubles the backbone parameters") {
  Dataset ds = tiny_dataset(1, 1);
  DetectionModel det_only = DetectionModel::build(
      fixtures::tiny_model(ModelVariant::SingleStreamDetectionOnly), ds.vocabulary, 7);
  DetectionModel ts =
      DetectionModel::build(fixtures::tiny_model(ModelVariant::TwoStream), ds.vocabulary, 7);

  auto count = [](const DetectionModel& m, const std::string& prefix) {
    return m.params().count_with_prefix(prefix);
  };
  std::int64_t single_backbone = count(det_only, "object_backbone.");
  CHECK(single_backbone > 0);
  CHECK(count(ts, "object_backbone.") == single_backbone);
  CHECK(count(ts, "attr_backbone.") == single_backbone);

  auto report = ts.parameter_report();
  CHECK(report.back().first == "total");
  CHECK(report.back().second == ts.params().total_count());
}

TEST_CASE("object-stream init is identical across variants under one seed") {
  Dataset ds = tiny_dataset(1, 1);
  DetectionModel a = DetectionModel::build(
      fixtures::tiny_model(ModelVariant::SingleStreamDetectionOnly), ds.vocabulary, 11);
  DetectionModel b =
      DetectionModel::build(fixtures::tiny_model(ModelVariant::TwoStream), ds.vocabulary, 11);
  for (const auto& p : a.object_stream_params()) {
    Var q = b.params().find(p->name);
    REQUIRE(q);
    CHECK(p->value.data == q->value.data);
  }
}

TEST_CASE("rpn proposals on a blank image are valid and capped") {
  Dataset ds = tiny_dataset(1, 2);
  DetectionModel model =
      DetectionModel::build(fixtures::tiny_model(ModelVariant::SingleStream), ds.vocabulary, 3);
  ImageU8 blank(48, 48, {128, 128, 128});
  nn::NoGradGuard no_grad;
  RpnForward rpn = model.forward_rpn(model.preprocess(blank), false);
  CHECK(rpn.proposals.size() <= 16);  // post-NMS test cap
  for (std::size_t i = 0; i < rpn.proposals.size(); ++i) {
    const Proposal& p = rpn.proposals[i];
    CHECK(p.box.valid());
    CHECK(p.box.x1 >= 0.0);
    CHECK(p.box.y1 >= 0.0);
    CHECK(p.box.x2 <= 48.0);
    CHECK(p.box.y2 <= 48.0);
    CHECK(p.objectness >= 0.0);
    CHECK(p.objectness <= 1.0);
    if (i > 0) CHECK(rpn.proposals[i - 1].objectness >= p.objectness);
  }
  // anchors enumerate both configured levels
  CHECK(rpn.anchors.boxes.size() == (12 * 12 + 6 * 6) * 9);
}

TEST_CASE("stream isolation in the plain two-stream wiring") {
  Dataset ds = tiny_dataset(2, 3);
  const ImageU8& img = *ds.samples[0].pixels;
  DetectionModel model =
      DetectionModel::build(fixtures::tiny_model(ModelVariant::TwoStream), ds.vocabulary, 5);

  ForwardProbe base = probe_heads(model, img);
  REQUIRE(!base.rois.empty());

  // randomize every attribute-stream parameter: category/box outputs must not
  // move by a single bit (proposals held fixed)
  perturb(model.attribute_stream_params(), 99);
  ForwardProbe after = probe_heads(model, img, &base.rois);
  CHECK(after.category.data == base.category.data);
  CHECK(after.bbox.data == base.bbox.data);
  CHECK(after.color.data != base.color.data);

  // converse: object-stream perturbation leaves attribute outputs unchanged
  DetectionModel model2 =
      DetectionModel::build(fixtures::tiny_model(ModelVariant::TwoStream), ds.vocabulary, 5);
  ForwardProbe base2 = probe_heads(model2, img);
  perturb(model2.object_stream_params(), 123);
  ForwardProbe after2 = probe_heads(model2, img, &base2.rois);
  CHECK(after2.color.data == base2.color.data);
  CHECK(after2.material.data == base2.material.data);
  CHECK(after2.category.data != base2.category.data);
}

TEST_CASE("cross link: blocked copy feeds attributes but never the category head") {
  Dataset ds = tiny_dataset(2, 4);
  const ImageU8& img = *ds.samples[0].pixels;
  DetectionModel model = DetectionModel::build(
      fixtures::tiny_model(ModelVariant::TwoStreamCrossLink), ds.vocabulary, 5);

  ForwardProbe base = probe_heads(model, img);
  REQUIRE(!base.rois.empty());

  // zero the attribute-head weight rows that read the blocked object copy:
  // attribute logits change, category logits cannot
  int d = model.config().roi.fc_dim;
  for (const char* name : {"head_color.fc.weight", "head_material.fc.weight"}) {
    Var w = model.params().find(name);
    REQUIRE(w);
    REQUIRE(w->value.dim(0) == 2 * d);  // [attr_feat ; stopgrad(obj_feat)]
    for (std::int64_t r = d; r < 2 * d; ++r) {
      for (std::int64_t c = 0; c < w->value.dim(1); ++c) w->value.data[r * w->value.dim(1) + c] = 0.0;
    }
  }
  ForwardProbe after = probe_heads(model, img, &base.rois);
  CHECK(after.color.data != base.color.data);
  CHECK(after.material.data != base.material.data);
  CHECK(after.category.data == base.category.data);
  CHECK(after.bbox.data == base.bbox.data);
}

TEST_CASE("single stream: ablating one shared channel moves both heads") {
  Dataset ds = tiny_dataset(2, 5);
  const ImageU8& img = *ds.samples[0].pixels;
  DetectionModel model =
      DetectionModel::build(fixtures::tiny_model(ModelVariant::SingleStream), ds.vocabulary, 5);
  ForwardProbe base = probe_heads(model, img);

  // zero one input column of the shared trunk fc: both heads read through it
  Var w = model.params().find("object_mlp.fc.weight");
  REQUIRE(w);
  std::int64_t out_dim = w->value.dim(1);
  for (std::int64_t c = 0; c < out_dim; ++c) w->value.data[3 * out_dim + c] = 0.0;

  ForwardProbe after = probe_heads(model, img, &base.rois);
  CHECK(after.category.data != base.category.data);
  CHECK(after.color.data != base.color.data);
}

TEST_CASE("late feature entanglement: attribute parameters reach category logits") {
  Dataset ds = tiny_dataset(2, 6);
  const ImageU8& img = *ds.samples[0].pixels;
  DetectionModel model =
      DetectionModel::build(fixtures::tiny_model(ModelVariant::TwoStreamLfe), ds.vocabulary, 5);
  ForwardProbe base = probe_heads(model, img);
  perturb(model.params().with_prefix("attr_mlp."), 55);
  ForwardProbe after = probe_heads(model, img, &base.rois);
  CHECK(after.category.data != base.category.data);  // entanglement witness
}

TEST_CASE("PA variants require the category labels") {
  Dataset ds = tiny_dataset(1, 7);
  DetectionModel model =
      DetectionModel::build(fixtures::tiny_model(ModelVariant::PaUce), ds.vocabulary, 5);
  nn::NoGradGuard no_grad;
  Tensor t = model.preprocess(*ds.samples[0].pixels);
  RpnForward rpn = model.forward_rpn(t, false);
  REQUIRE(!rpn.proposals.empty());
  std::vector<Box> rois{rpn.proposals[0].box};
  Var pooled = model.extract_roi_features(StreamKind::Object, rpn.object_fpn, rois);
  CHECK_THROWS_AS(model.forward_heads(pooled, pooled), std::invalid_argument);
  std::vector<int> labels{1};
  HeadOutputs heads = model.forward_heads(pooled, pooled, &labels);
  CHECK(heads.unified);
  CHECK(heads.unified->value.dim(1) ==
        static_cast<std::int64_t>(ds.vocabulary.colors.size() + ds.vocabulary.materials.size()));
}

TEST_CASE("predict: thresholds, simplexes, determinism") {
  Dataset ds = tiny_dataset(2, 8);
  const ImageU8& img = *ds.samples[0].pixels;
  DetectionModel model =
      DetectionModel::build(fixtures::tiny_model(ModelVariant::TwoStream), ds.vocabulary, 5);

  PredictOptions unreachable;
  unreachable.score_threshold = 1.1;
  CHECK(model.predict(img, unreachable).empty());

  PredictOptions open;
  open.score_threshold = 0.0;
  auto dets = model.predict(img, open);
  auto again = model.predict(img, open);
  REQUIRE(dets.size() == again.size());
  for (std::size_t i = 0; i < dets.size(); ++i) {
    CHECK(dets[i].box == again[i].box);
    CHECK(dets[i].category_scores == again[i].category_scores);
    auto sum = [](const std::vector<double>& v) {
      double s = 0;
      for (double x : v) s += x;
      return s;
    };
    CHECK(std::abs(sum(dets[i].category_scores) - 1.0) < 1e-5);
    CHECK(std::abs(sum(dets[i].color_scores) - 1.0) < 1e-5);
    CHECK(std::abs(sum(dets[i].material_scores) - 1.0) < 1e-5);
  }
}

TEST_CASE("unified-head predict still produces per-attribute simplexes") {
  Dataset ds = tiny_dataset(2, 9);
  DetectionModel model =
      DetectionModel::build(fixtures::tiny_model(ModelVariant::PaUce), ds.vocabulary, 5);
  PredictOptions open;
  open.score_threshold = 0.0;
  auto dets = model.predict(*ds.samples[0].pixels, open);
  for (const auto& d : dets) {
    REQUIRE(d.color_scores.size() == ds.vocabulary.colors.size());
    REQUIRE(d.material_scores.size() == ds.vocabulary.materials.size());
    double cs = 0, ms = 0;
    for (double v : d.color_scores) cs += v;
    for (double v : d.material_scores) ms += v;
    CHECK(std::abs(cs - 1.0) < 1e-5);
    CHECK(std::abs(ms - 1.0) < 1e-5);
  }
}

TEST_CASE("checkpoint round trip reproduces predictions bit-exactly") {
  Dataset ds = tiny_dataset(2, 10);
  const ImageU8& img = *ds.samples[0].pixels;
  DetectionModel model = DetectionModel::build(
      fixtures::tiny_model(ModelVariant::TwoStreamCrossLink), ds.vocabulary, 21);
  model.set_normalization({0.4, 0.41, 0.39}, {0.2, 0.21, 0.22});

  auto dir = std::filesystem::temp_directory_path() / "tsdet_model_test";
  std::filesystem::create_directories(dir);
  auto path = dir / "model.ckpt";
  save_checkpoint(model, path);
  DetectionModel loaded = load_checkpoint(path);

  CHECK(loaded.config().variant == ModelVariant::TwoStreamCrossLink);
  CHECK(loaded.vocabulary() == ds.vocabulary);
  CHECK(loaded.config().norm_mean == model.config().norm_mean);

  PredictOptions open;
  open.score_threshold = 0.0;
  auto a = model.predict(img, open);
  auto b = loaded.predict(img, open);
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].box == b[i].box);
    CHECK(a[i].category_scores == b[i].category_scores);
    CHECK(a[i].color_scores == b[i].color_scores);
    CHECK(a[i].material_scores == b[i].material_scores);
  }
}

TEST_CASE("detection label format and split coloring") {
  Vocabulary v;
  v.categories = {"circle", "square"};
  v.colors = {"red", "blue"};
  v.materials = {"wood", "metal"};
  Detection d;
  d.box = Box{10, 10, 30, 30};
  d.category_scores = {0.9, 0.1};
  d.color_scores = {0.2, 0.8};
  d.material_scores = {0.7, 0.3};
  CHECK(detection_label(d, v) == "circle|blue|wood");

  ImageU8 img(64, 64, {0, 0, 0});
  CategorySplit split{{0}, {1}};
  draw_detections(img, {d}, v, 0.5, &split);
  bool has_blue = false;
  for (std::size_t i = 0; i < img.data.size(); i += 3) {
    if (img.data[i] == 40 && img.data[i + 1] == 90 && img.data[i + 2] == 255) has_blue = true;
  }
  CHECK(has_blue);  // reference categories draw blue

  ImageU8 img2(64, 64, {0, 0, 0});
  Detection target_det = d;
  target_det.category_scores = {0.1, 0.9};
  draw_detections(img2, {target_det}, v, 0.5, &split);
  bool has_red = false;
  for (std::size_t i = 0; i < img2.data.size(); i += 3) {
    if (img2.data[i] == 255 && img2.data[i + 1] == 50 && img2.data[i + 2] == 40) has_red = true;
  }
  CHECK(has_red);  // target categories draw red

  // above the unreachable confidence nothing is drawn
  ImageU8 img3(64, 64, {0, 0, 0});
  draw_detections(img3, {d}, v, 1.1, &split);
  CHECK(img3 == ImageU8(64, 64, {0, 0, 0}));
}

TEST_CASE("attribute heads demand attribute vocabularies") {
  Vocabulary v;
  v.categories = {"a", "b"};
  CHECK_THROWS_AS(
      DetectionModel::build(fixtures::tiny_model(ModelVariant::TwoStream), v, 1),
      std::invalid_argument);
  CHECK_NOTHROW(
      DetectionModel::build(fixtures::tiny_model(ModelVariant::SingleStreamDetectionOnly), v, 1));
}
