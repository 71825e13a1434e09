// Acceptance suite: runs every criterion at its stated tolerance and prints
// one pass/fail line per criterion. Criterion 7 trains the desk-scale
// benchmark (30 short training runs) and dominates the runtime.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <string>
#include <vector>

#include "model_fixtures.hpp"
#include "oracles.hpp"
#include "test_util.hpp"
#include "tsdet/datamodel.hpp"
#include "tsdet/evaluation.hpp"
#include "tsdet/losses.hpp"
#include "tsdet/model/checkpoint.hpp"
#include "tsdet/model/detector.hpp"
#include "tsdet/synthdata.hpp"
#include "tsdet/training.hpp"

using namespace tsdet;

namespace {

struct Outcome {
  bool pass = true;
  std::string detail;
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

void expect(Outcome& o, bool cond, const std::string& what) {
  if (!cond) {
    o.pass = false;
    o.detail += (o.detail.empty() ? "" : "; ") + what;
  }
}

double median3(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  return v.at(v.size() / 2);
}

// ---------------------------------------------------------------------------
// criteria 1-2: structural audits on the tiny fixture
// ---------------------------------------------------------------------------

Outcome criterion1_gradient_block() {
  Outcome o;
  auto t0 = std::chrono::steady_clock::now();
  Dataset ds = generate(fixtures::tiny_synth(3, 101, /*label_rate=*/1.0));
  std::vector<DetectionSample> batch(ds.samples.begin(), ds.samples.begin() + 2);
  TrainConfig tc = fixtures::tiny_train(1, 5);

  DetectionModel cross = DetectionModel::build(
      fixtures::tiny_model(ModelVariant::TwoStreamCrossLink), ds.vocabulary, 31);
  GradientBlockAudit blocked = audit_gradient_block(cross, batch, tc);
  expect(o, blocked.max_abs_object_grad == 0.0,
         "cross-link object-stream gradient nonzero: " + std::to_string(blocked.max_abs_object_grad));

  DetectionModel lfe = DetectionModel::build(
      fixtures::tiny_model(ModelVariant::TwoStreamLfe), ds.vocabulary, 31);
  GradientBlockAudit leaked = audit_gradient_block(lfe, batch, tc);
  expect(o, leaked.max_abs_object_grad > 0.0, "LFE audit unexpectedly zero");

  double dt = seconds_since(t0);
  expect(o, dt < 10.0, "runtime " + std::to_string(dt) + "s exceeds 10s");
  char buf[128];
  std::snprintf(buf, sizeof(buf), " (cross=0, lfe=%.3g, %.1fs)", leaked.max_abs_object_grad, dt);
  o.detail += buf;
  return o;
}

Outcome criterion2_stream_isolation() {
  Outcome o;
  auto t0 = std::chrono::steady_clock::now();
  Dataset ds = generate(fixtures::tiny_synth(2, 102));
  const ImageU8& img = *ds.samples[0].pixels;

  DetectionModel model =
      DetectionModel::build(fixtures::tiny_model(ModelVariant::TwoStream), ds.vocabulary, 33);
  nn::NoGradGuard no_grad;
  nn::Tensor t = model.preprocess(img);
  RpnForward rpn = model.forward_rpn(t, false);
  std::vector<Box> rois;
  for (const auto& p : rpn.proposals) rois.push_back(p.box);
  expect(o, !rois.empty(), "no proposals on the probe image");

  auto run_heads = [&](const DetectionModel& m) {
    auto object_fpn = m.forward_stream(StreamKind::Object, t);
    auto attr_fpn = m.forward_stream(StreamKind::Attribute, t);
    nn::Var obj = m.extract_roi_features(StreamKind::Object, object_fpn, rois);
    nn::Var attr = m.extract_roi_features(StreamKind::Attribute, attr_fpn, rois);
    return m.forward_heads(obj, attr);
  };
  HeadOutputs base = run_heads(model);
  nn::Tensor cat = base.category->value, bbox = base.bbox->value;
  nn::Tensor color = base.color->value, material = base.material->value;

  Rng noise(44);
  for (auto& p : model.attribute_stream_params()) {
    for (auto& v : p->value.data) v += noise.normal(0, 0.1);
  }
  HeadOutputs after = run_heads(model);
  expect(o, after.category->value.data == cat.data, "category logits moved with attribute params");
  expect(o, after.bbox->value.data == bbox.data, "box deltas moved with attribute params");
  expect(o, after.color->value.data != color.data, "color logits ignored attribute params");

  for (auto& p : model.object_stream_params()) {
    for (auto& v : p->value.data) v += noise.normal(0, 0.1);
  }
  HeadOutputs converse = run_heads(model);
  expect(o, converse.color->value.data == after.color->value.data,
         "color logits moved with object params under fixed proposals");
  expect(o, converse.material->value.data == after.material->value.data,
         "material logits moved with object params under fixed proposals");

  double dt = seconds_since(t0);
  expect(o, dt < 10.0, "runtime " + std::to_string(dt) + "s exceeds 10s");
  char buf[64];
  std::snprintf(buf, sizeof(buf), " (%.1fs)", dt);
  o.detail += buf;
  return o;
}

// ---------------------------------------------------------------------------
// criterion 3: loss oracles
// ---------------------------------------------------------------------------

double ce_row(const double* logits, int k, int label) {
  double m = logits[0];
  for (int j = 1; j < k; ++j) m = std::max(m, logits[j]);
  double lse = 0.0;
  for (int j = 0; j < k; ++j) lse += std::exp(logits[j] - m);
  return m + std::log(lse) - logits[label];
}

Outcome criterion3_loss_oracles() {
  Outcome o;
  // uniform-logit closed forms
  {
    nn::Tensor zeros12({1, 12}, 0.0), zeros4({1, 4}, 0.0), zeros16({1, 16}, 0.0);
    std::vector<std::optional<int>> c{5}, none{std::nullopt};
    SceLoss sce = sce_attribute_loss(nn::constant(zeros12), c, nn::constant(zeros4), none);
    expect(o, std::abs(sce.color->value.item() - std::log(12.0)) < 1e-6, "ln 12 case");
    UnifiedRows rows = build_unified_rows(c, none, 12);
    nn::Var uce = uce_attribute_loss(nn::constant(zeros16), rows);
    expect(o, std::abs(uce->value.item() - std::log(16.0)) < 1e-6, "ln 16 case");
  }

  Rng rng(3001);
  for (int trial = 0; trial < 50 && o.pass; ++trial) {
    int n = static_cast<int>(rng.randint(1, 9));
    int ncol = 6, nmat = 3, ncat = 4;
    auto rand_logits = [&](int rows, int k) {
      nn::Tensor t({rows, k});
      for (auto& v : t.data) v = rng.normal(0, 2.0);
      return t;
    };
    nn::Tensor color = rand_logits(n, ncol), mat = rand_logits(n, nmat);
    nn::Tensor unified = rand_logits(n, ncol + nmat);
    std::vector<std::optional<int>> cl, ml;
    for (int i = 0; i < n; ++i) {
      cl.push_back(rng.bernoulli(0.6) ? std::optional<int>(static_cast<int>(rng.randint(0, ncol)))
                                      : std::nullopt);
      ml.push_back(rng.bernoulli(0.6) ? std::optional<int>(static_cast<int>(rng.randint(0, nmat)))
                                      : std::nullopt);
    }
    SceLoss sce = sce_attribute_loss(nn::constant(color), cl, nn::constant(mat), ml);
    double csum = 0, msum = 0;
    int cn = 0, mn = 0;
    for (int i = 0; i < n; ++i) {
      if (cl[static_cast<std::size_t>(i)]) { csum += ce_row(color.data.data() + i * ncol, ncol, *cl[static_cast<std::size_t>(i)]); ++cn; }
      if (ml[static_cast<std::size_t>(i)]) { msum += ce_row(mat.data.data() + i * nmat, nmat, *ml[static_cast<std::size_t>(i)]); ++mn; }
    }
    expect(o, std::abs(sce.color->value.item() - (cn ? csum / cn : 0.0)) < 1e-6, "SCE color oracle");
    expect(o, std::abs(sce.material->value.item() - (mn ? msum / mn : 0.0)) < 1e-6, "SCE material oracle");

    UnifiedRows rows = build_unified_rows(cl, ml, ncol);
    nn::Var uce = uce_attribute_loss(nn::constant(unified), rows);
    double usum = 0;
    for (std::size_t r = 0; r < rows.row_of.size(); ++r) {
      usum += ce_row(unified.data.data() + rows.row_of[r] * (ncol + nmat), ncol + nmat, rows.label[r]);
    }
    expect(o, std::abs(uce->value.item() - (rows.row_of.empty() ? 0.0 : usum / rows.row_of.size())) < 1e-6,
           "UCE oracle");

    // masked rows contribute exactly zero: poke them, value must not move a bit
    nn::Tensor poked = color;
    bool any_masked = false;
    for (int i = 0; i < n; ++i) {
      if (!cl[static_cast<std::size_t>(i)]) {
        any_masked = true;
        for (int j = 0; j < ncol; ++j) poked.data[i * ncol + j] += 500.0;
      }
    }
    if (any_masked) {
      SceLoss poked_loss = sce_attribute_loss(nn::constant(poked), cl, nn::constant(mat), ml);
      expect(o, poked_loss.color->value.item() == sce.color->value.item(), "masked row leaked");
    }

    // detection and rpn losses against scalar arithmetic
    nn::Tensor cat = rand_logits(n, ncat + 1);
    std::vector<int> labels;
    int fg = static_cast<int>(rng.randint(0, n + 1));
    RoiTargets rt;
    for (int i = 0; i < n; ++i) {
      int lab = i < fg ? 1 + static_cast<int>(rng.randint(0, ncat)) : 0;
      labels.push_back(lab);
      rt.sampled.push_back(i);
      rt.category.push_back(lab);
      rt.delta.push_back(lab ? BoxDelta{rng.normal(0, 0.1), rng.normal(0, 0.1), rng.normal(0, 0.1),
                                        rng.normal(0, 0.1)}
                             : BoxDelta{});
      rt.color.push_back(std::nullopt);
      rt.material.push_back(std::nullopt);
    }
    rt.foreground_count = fg;
    nn::Tensor bbox = rand_logits(n, 4 * ncat);
    HeadOutputs heads;
    heads.category = nn::constant(cat);
    heads.bbox = nn::constant(bbox);
    std::array<double, 4> wts{10, 10, 5, 5};
    DetectionLoss dl = detection_loss(heads, rt, wts);
    double cls_sum = 0;
    for (int i = 0; i < n; ++i) cls_sum += ce_row(cat.data.data() + i * (ncat + 1), ncat + 1, labels[static_cast<std::size_t>(i)]);
    expect(o, std::abs(dl.cls->value.item() - cls_sum / n) < 1e-6, "detection cls oracle");
    double loc_sum = 0;
    for (int i = 0; i < fg; ++i) {
      const BoxDelta& d = rt.delta[static_cast<std::size_t>(i)];
      double tgt[4] = {d.dx * 10, d.dy * 10, d.dw * 5, d.dh * 5};
      const double* pred = bbox.data.data() + i * 4 * ncat + 4 * (labels[static_cast<std::size_t>(i)] - 1);
      for (int j = 0; j < 4; ++j) {
        double diff = std::abs(pred[j] - tgt[j]);
        loc_sum += diff < 1.0 ? 0.5 * diff * diff : diff - 0.5;
      }
    }
    expect(o, std::abs(dl.loc->value.item() - loc_sum / n) < 1e-6, "detection loc oracle");

    int na = 6;
    AnchorTargets at;
    nn::Tensor obj({na});
    nn::Tensor deltas({na, 4});
    for (int i = 0; i < na; ++i) {
      obj[i] = rng.normal(0, 2);
      bool pos = rng.bernoulli(0.5);
      at.label.push_back(pos ? AnchorLabel::Positive : AnchorLabel::Negative);
      at.delta.push_back(pos ? BoxDelta{rng.normal(0, 0.5), rng.normal(0, 0.5), rng.normal(0, 0.5),
                                        rng.normal(0, 0.5)}
                             : BoxDelta{});
      at.sampled.push_back(i);
      if (pos) at.sampled_positive.push_back(i);
      for (int j = 0; j < 4; ++j) deltas.data[i * 4 + j] = rng.normal(0, 0.5);
    }
    RpnLoss rl = rpn_loss(nn::constant(obj), nn::constant(deltas), at);
    double obj_sum = 0;
    for (int i = 0; i < na; ++i) {
      double z = obj[i], y = at.label[static_cast<std::size_t>(i)] == AnchorLabel::Positive ? 1.0 : 0.0;
      obj_sum += std::max(z, 0.0) - z * y + std::log1p(std::exp(-std::abs(z)));
    }
    expect(o, std::abs(rl.objectness->value.item() - obj_sum / na) < 1e-6, "rpn objectness oracle");
    double box_sum = 0;
    for (int i : at.sampled_positive) {
      const BoxDelta& d = at.delta[static_cast<std::size_t>(i)];
      double tgt[4] = {d.dx, d.dy, d.dw, d.dh};
      for (int j = 0; j < 4; ++j) {
        double diff = std::abs(deltas.data[i * 4 + j] - tgt[j]);
        box_sum += diff < 1.0 ? 0.5 * diff * diff : diff - 0.5;
      }
    }
    if (!at.sampled_positive.empty()) {
      expect(o, std::abs(rl.box->value.item() - box_sum / at.sampled_positive.size()) < 1e-6,
             "rpn box oracle");
    }
  }
  return o;
}

// ---------------------------------------------------------------------------
// criterion 4: finite-difference gradient checks (1e-4 relative)
// ---------------------------------------------------------------------------

bool fd_check(nn::Tensor x, const std::function<nn::Var(const nn::Var&)>& f, double tol,
              std::string& why) {
  nn::Var leaf_x = nn::leaf(x);
  auto store = nn::backward(f(leaf_x));
  const nn::Tensor* g = store.find(leaf_x.get());
  if (!g) {
    why = "no gradient recorded";
    return false;
  }
  for (std::int64_t i = 0; i < x.numel(); ++i) {
    double orig = x[i];
    double h = 1e-5 * std::max(1.0, std::abs(orig));
    x[i] = orig + h;
    double up = f(nn::leaf(x))->value.item();
    x[i] = orig - h;
    double down = f(nn::leaf(x))->value.item();
    x[i] = orig;
    double numeric = (up - down) / (2 * h);
    double denom = std::max({1.0, std::abs(numeric), std::abs((*g)[i])});
    if (std::abs(numeric - (*g)[i]) / denom > tol) {
      why = "element " + std::to_string(i) + ": numeric " + std::to_string(numeric) +
            " vs analytic " + std::to_string((*g)[i]);
      return false;
    }
  }
  return true;
}

Outcome criterion4_gradient_checks() {
  Outcome o;
  Rng rng(4001);
  std::string why;

  // RoI pooling on a 3-channel 16x16 map
  nn::Tensor feat({3, 16, 16});
  for (auto& v : feat.data) v = rng.normal(0, 1);
  std::vector<Box> rois{{1.5, 2.5, 12.0, 14.5}, {5, 5, 15.5, 15.5}, {0.25, 0.5, 7.75, 6.5}};
  nn::Tensor wts({3, 3 * 7 * 7});
  for (auto& v : wts.data) v = rng.normal(0, 1);
  expect(o, fd_check(feat, [&](const nn::Var& v) {
    return nn::weighted_sum(nn::roi_align(v, rois, 1.0, 7, 2), wts);
  }, 1e-4, why), "roi_align gradient: " + why);

  // every loss, via leaf logits
  auto rand_t = [&](std::vector<std::int64_t> s) {
    nn::Tensor t(std::move(s));
    for (auto& v : t.data) v = rng.normal(0, 2);
    return t;
  };
  {
    nn::Tensor logits = rand_t({5, 6});
    std::vector<std::optional<int>> cl{2, std::nullopt, 5, 1, std::nullopt};
    nn::Tensor mat = rand_t({5, 3});
    std::vector<std::optional<int>> ml{std::nullopt, 1, 0, std::nullopt, 2};
    expect(o, fd_check(logits, [&](const nn::Var& v) {
      SceLoss l = sce_attribute_loss(v, cl, nn::constant(mat), ml);
      return l.color;
    }, 1e-4, why), "SCE color gradient: " + why);
    expect(o, fd_check(mat, [&](const nn::Var& v) {
      SceLoss l = sce_attribute_loss(nn::constant(logits), cl, v, ml);
      return l.material;
    }, 1e-4, why), "SCE material gradient: " + why);

    nn::Tensor uni = rand_t({5, 9});
    UnifiedRows rows = build_unified_rows(cl, ml, 6);
    expect(o, fd_check(uni, [&](const nn::Var& v) { return uce_attribute_loss(v, rows); }, 1e-4, why),
           "UCE gradient: " + why);
  }
  {
    AnchorTargets at;
    at.label = {AnchorLabel::Positive, AnchorLabel::Negative, AnchorLabel::Positive,
                AnchorLabel::Negative};
    at.delta = {BoxDelta{0.1, 0.2, -0.1, 0.05}, BoxDelta{}, BoxDelta{-0.2, 0.1, 0.3, -0.15},
                BoxDelta{}};
    at.sampled = {0, 1, 2, 3};
    at.sampled_positive = {0, 2};
    nn::Tensor obj = rand_t({4});
    nn::Tensor deltas = rand_t({4, 4});
    deltas.scale_(0.1);
    expect(o, fd_check(obj, [&](const nn::Var& v) {
      return rpn_loss(v, nn::constant(deltas), at).objectness;
    }, 1e-4, why), "rpn objectness gradient: " + why);
    expect(o, fd_check(deltas, [&](const nn::Var& v) {
      return rpn_loss(nn::constant(obj), v, at).box;
    }, 1e-4, why), "rpn box gradient: " + why);
  }
  {
    RoiTargets rt;
    rt.sampled = {0, 1, 2};
    rt.category = {2, 1, 0};
    rt.delta = {BoxDelta{0.02, -0.01, 0.03, 0.0}, BoxDelta{0.01, 0.02, -0.02, 0.01}, BoxDelta{}};
    rt.color.assign(3, std::nullopt);
    rt.material.assign(3, std::nullopt);
    rt.foreground_count = 2;
    std::array<double, 4> wts4{10, 10, 5, 5};
    nn::Tensor cat = rand_t({3, 4});
    nn::Tensor bbox = rand_t({3, 12});
    bbox.scale_(0.1);
    expect(o, fd_check(cat, [&](const nn::Var& v) {
      HeadOutputs h;
      h.category = v;
      h.bbox = nn::constant(bbox);
      return detection_loss(h, rt, wts4).cls;
    }, 1e-4, why), "detection cls gradient: " + why);
    expect(o, fd_check(bbox, [&](const nn::Var& v) {
      HeadOutputs h;
      h.category = nn::constant(cat);
      h.bbox = v;
      return detection_loss(h, rt, wts4).loc;
    }, 1e-4, why), "detection loc gradient: " + why);
  }
  return o;
}

// ---------------------------------------------------------------------------
// criterion 5: metric oracles
// ---------------------------------------------------------------------------

Outcome criterion5_metric_oracles() {
  Outcome o;
  auto t0 = std::chrono::steady_clock::now();
  Vocabulary vocab;
  vocab.categories = {"circle", "square", "bar"};
  vocab.colors = {"red", "blue"};
  vocab.materials = {"wood"};

  Rng rng(5001);
  auto make_det = [&](const Box& b, int cat, double score, int color) {
    Detection d;
    d.box = b;
    d.category_scores.assign(3, (1.0 - score) / 2);
    d.category_scores[static_cast<std::size_t>(cat)] = score;
    d.color_scores.assign(2, 0.1);
    d.color_scores[static_cast<std::size_t>(color)] = 0.9;
    d.objectness = score;
    return d;
  };

  for (int inst = 0; inst < 200 && o.pass; ++inst) {
    int n_images = static_cast<int>(rng.randint(1, 4));
    std::vector<DetectionSample> gt;
    std::vector<std::vector<Detection>> dets;
    for (int i = 0; i < n_images; ++i) {
      DetectionSample s;
      s.image_id = "i" + std::to_string(i);
      s.width = s.height = 100;
      int n_gt = static_cast<int>(rng.randint(0, 4));
      for (int j = 0; j < n_gt; ++j) {
        s.annotations.push_back({testutil::random_box(rng, 90, 8),
                                 static_cast<int>(rng.randint(0, 3)), std::nullopt, std::nullopt});
      }
      gt.push_back(s);
      dets.emplace_back();
    }
    int budget = static_cast<int>(rng.randint(0, 11));
    for (int d = 0; d < budget; ++d) {
      int img = static_cast<int>(rng.randint(0, n_images));
      dets[static_cast<std::size_t>(img)].push_back(make_det(testutil::random_box(rng, 90, 8),
                                                             static_cast<int>(rng.randint(0, 3)),
                                                             rng.uniform(0.34, 1.0),
                                                             static_cast<int>(rng.randint(0, 2))));
    }
    MapResult r = compute_map(dets, gt, vocab);
    double expect_map = oracle::map_oracle(dets, gt, 3, 0.5);
    expect(o, std::abs(r.map - expect_map) < 1e-9,
           "mAP " + std::to_string(r.map) + " vs oracle " + std::to_string(expect_map));
  }

  // worked attribute-recall scenario: 2 of 3
  {
    DetectionSample s;
    s.image_id = "w";
    s.width = s.height = 100;
    s.annotations = {{Box{0, 0, 10, 10}, 0, 0, std::nullopt},
                     {Box{30, 30, 40, 40}, 1, 1, std::nullopt},
                     {Box{60, 60, 80, 80}, 2, 0, std::nullopt}};
    std::vector<std::vector<Detection>> dets{{
        make_det(Box{0, 0, 10, 10}, 0, 0.9, 0),
        make_det(Box{30, 30, 40, 40}, 1, 0.8, 1),
        make_det(Box{60, 60, 80, 80}, 2, 0.7, 1),
    }};
    auto recall = compute_attribute_recall(dets, {s}, AttributeKind::Color, 0.5, 0.5, true);
    expect(o, recall && std::abs(*recall - 66.6667) < 0.01,
           "worked recall scenario gave " + std::to_string(recall.value_or(-1)));
  }

  // NMS vs the quadratic oracle on 200 random instances
  for (int inst = 0; inst < 200 && o.pass; ++inst) {
    int n = static_cast<int>(rng.randint(1, 21));
    std::vector<Box> boxes;
    std::vector<double> scores;
    for (int i = 0; i < n; ++i) {
      boxes.push_back(testutil::random_box(rng, 60, 4));
      scores.push_back(rng.uniform());
    }
    expect(o, nms(boxes, scores, 0.5) == testutil::nms_oracle(boxes, scores, 0.5), "nms mismatch");
  }

  double dt = seconds_since(t0);
  expect(o, dt < 60.0, "runtime " + std::to_string(dt) + "s exceeds 60s");
  char buf[64];
  std::snprintf(buf, sizeof(buf), " (%.1fs)", dt);
  o.detail += buf;
  return o;
}

// ---------------------------------------------------------------------------
// criterion 6: protocol conformance
// ---------------------------------------------------------------------------

Outcome criterion6_protocol() {
  Outcome o;
  Vocabulary vg = Vocabulary::vg20();
  auto [run_a, run_b] = make_split(vg, 77);
  expect(o, run_a.reference.size() == 10 && run_a.target.size() == 10, "split is not 10/10");
  expect(o, run_b.reference == run_a.target && run_b.target == run_a.reference,
         "splits are not mirrored");
  run_a.validate(20);
  run_b.validate(20);

  // masking strips exactly the target categories
  std::vector<DetectionSample> samples(1);
  samples[0].image_id = "m";
  samples[0].width = samples[0].height = 64;
  for (int c = 0; c < 20; ++c) {
    samples[0].annotations.push_back(
        {Box{1.0 + c, 1.0, 3.0 + c, 3.0}, c, c % 12, c % 4});
  }
  auto masked = mask_target_attributes(samples, run_a);
  for (const auto& ann : masked[0].annotations) {
    bool is_target = run_a.in_target(ann.category);
    expect(o, ann.color.has_value() == !is_target, "color masking wrong");
    expect(o, ann.material.has_value() == !is_target, "material masking wrong");
    expect(o, samples[0].annotations[static_cast<std::size_t>(&ann - masked[0].annotations.data())]
                      .box == ann.box,
           "box changed by masking");
  }

  MetricSet a, b;
  a.map = 40.0;
  b.map = 60.0;
  a.color_recall = 40.0;
  b.color_recall = 60.0;
  MetricSet avg = average_metrics(a, b);
  expect(o, avg.map == 50.0 && avg.color_recall == 50.0, "40/60 does not average to 50");
  return o;
}

// ---------------------------------------------------------------------------
// criterion 7: desk-scale directional reproduction
// ---------------------------------------------------------------------------

SynthConfig benchmark_synth(int n_images, std::uint64_t seed) {
  SynthConfig sc;
  sc.n_images = n_images;
  sc.image_size = 64;
  sc.seed = seed;
  sc.attribute_label_rate = 1.0 / 3.0;
  sc.min_objects = 1;
  sc.max_objects = 3;
  sc.colors = {
      {"red", {225, 30, 35}, 8},     {"green", {25, 160, 50}, 8},
      {"blue", {35, 70, 220}, 8},    {"yellow", {245, 210, 40}, 8},
      {"white", {255, 255, 255}, 8}, {"black", {10, 10, 10}, 8},
  };
  sc.materials = {{"plastic", TextureKind::Flat}, {"wood", TextureKind::Stripe}};
  return sc;
}

ModelConfig benchmark_model(ModelVariant variant) {
  ModelConfig mc;
  mc.variant = variant;
  return mc;  // library defaults are the desk-scale benchmark backbone
}

TrainConfig benchmark_train(std::uint64_t seed) {
  TrainConfig tc;
  tc.learning_rate = 2e-3;
  tc.batch_size = 4;
  tc.max_steps = 1200;
  tc.seed = seed;
  tc.roi_targets.batch = 64;
  tc.num_threads = 4;
  return tc;
}

struct SupervisedResult {
  double map = 0.0;
  // balanced subgroup averages used for the (c) consistency check
  double ref_map = 0.0;
  double ref_color = 0.0;
  double ref_material = 0.0;
};

Outcome criterion7_directional() {
  Outcome o;
  auto t0 = std::chrono::steady_clock::now();

  Dataset train = generate(benchmark_synth(2000, 20240));
  Dataset test = generate(benchmark_synth(400, 20241));
  const std::uint64_t split_seed = 7;
  auto [split_a, split_b] = make_split(train.vocabulary, split_seed);
  (void)split_b;

  EvalOptions eopts;
  eopts.num_threads = 4;

  const std::vector<std::uint64_t> seeds{1, 2, 3};

  auto supervised = [&](ModelVariant variant, std::uint64_t seed) {
    DetectionModel model = DetectionModel::build(benchmark_model(variant), train.vocabulary, seed);
    train_model(model, train.samples, benchmark_train(seed));
    auto predict = [&](const DetectionSample& s) { return model.predict(*s.pixels, eopts.predict); };
    EvalReport report = evaluate_predictor(predict, test.samples, test.vocabulary, eopts, split_a);
    SupervisedResult r;
    r.map = report.overall.map;
    r.ref_map = 0.5 * (report.reference->map + report.target->map);
    r.ref_color = 0.5 * (report.reference->color_recall.value_or(0.0) +
                         report.target->color_recall.value_or(0.0));
    r.ref_material = 0.5 * (report.reference->material_recall.value_or(0.0) +
                            report.target->material_recall.value_or(0.0));
    return r;
  };

  auto transfer = [&](ModelVariant variant, std::uint64_t seed) {
    TransferTrainFn fn = standard_transfer_train_fn(benchmark_model(variant),
                                                    benchmark_train(seed), train.vocabulary, seed,
                                                    {}, {}, eopts.predict);
    return run_transfer_protocol(fn, train.samples, test.samples, train.vocabulary, split_seed,
                                 eopts);
  };

  std::vector<double> det_map, ss_map, ts_map;
  std::vector<double> ss_tgt_color, ts_tgt_color, cl_tgt_color;
  struct RefStats {
    std::vector<double> tr_map, tr_color, tr_mat, sup_map, sup_color, sup_mat;
  };
  RefStats ss_ref, ts_ref, cl_ref;

  for (std::uint64_t seed : seeds) {
    SupervisedResult det = supervised(ModelVariant::SingleStreamDetectionOnly, seed);
    SupervisedResult ss = supervised(ModelVariant::SingleStream, seed);
    SupervisedResult ts = supervised(ModelVariant::TwoStream, seed);
    SupervisedResult cl = supervised(ModelVariant::TwoStreamCrossLink, seed);
    det_map.push_back(det.map);
    ss_map.push_back(ss.map);
    ts_map.push_back(ts.map);

    TransferOutcome ss_tr = transfer(ModelVariant::SingleStream, seed);
    TransferOutcome ts_tr = transfer(ModelVariant::TwoStream, seed);
    TransferOutcome cl_tr = transfer(ModelVariant::TwoStreamCrossLink, seed);
    ss_tgt_color.push_back(ss_tr.averaged_target.color_recall.value_or(0.0));
    ts_tgt_color.push_back(ts_tr.averaged_target.color_recall.value_or(0.0));
    cl_tgt_color.push_back(cl_tr.averaged_target.color_recall.value_or(0.0));

    auto record_ref = [](RefStats& stats, const TransferOutcome& tr, const SupervisedResult& sup) {
      stats.tr_map.push_back(tr.averaged_reference.map);
      stats.tr_color.push_back(tr.averaged_reference.color_recall.value_or(0.0));
      stats.tr_mat.push_back(tr.averaged_reference.material_recall.value_or(0.0));
      stats.sup_map.push_back(sup.ref_map);
      stats.sup_color.push_back(sup.ref_color);
      stats.sup_mat.push_back(sup.ref_material);
    };
    record_ref(ss_ref, ss_tr, ss);
    record_ref(ts_ref, ts_tr, ts);
    record_ref(cl_ref, cl_tr, cl);

    std::printf("  [criterion 7] seed %llu: mAP det=%.2f ss=%.2f ts=%.2f | tgt color ss=%.2f ts=%.2f cl=%.2f (%.0fs)\n",
                static_cast<unsigned long long>(seed), det.map, ss.map, ts.map,
                ss_tgt_color.back(), ts_tgt_color.back(), cl_tgt_color.back(), seconds_since(t0));
    std::fflush(stdout);
  }

  double med_det = median3(det_map), med_ss = median3(ss_map), med_ts = median3(ts_map);
  char buf[256];
  std::snprintf(buf, sizeof(buf), " (a) mAP det-only=%.2f ss=%.2f ts=%.2f;", med_det, med_ss, med_ts);
  o.detail += buf;
  expect(o, std::abs(med_ts - med_det) <= 3.0, "detection-only and two-stream mAP differ by > 3");
  expect(o, med_ss < med_det, "single-stream does not trail detection-only");

  double med_ss_tc = median3(ss_tgt_color), med_ts_tc = median3(ts_tgt_color),
         med_cl_tc = median3(cl_tgt_color);
  std::snprintf(buf, sizeof(buf), " (b) target color ss=%.2f ts=%.2f cl=%.2f;", med_ss_tc, med_ts_tc,
                med_cl_tc);
  o.detail += buf;
  expect(o, med_cl_tc >= med_ts_tc, "cross link trails plain two-stream on target color recall");
  expect(o, med_ts_tc >= med_ss_tc, "two-stream trails single-stream on target color recall");

  auto check_ref = [&](const char* name, RefStats& s) {
    double dm = std::abs(median3(s.tr_map) - median3(s.sup_map));
    double dc = std::abs(median3(s.tr_color) - median3(s.sup_color));
    double dmat = std::abs(median3(s.tr_mat) - median3(s.sup_mat));
    char line[160];
    std::snprintf(line, sizeof(line), " (c) %s ref deltas map=%.2f color=%.2f material=%.2f;", name,
                  dm, dc, dmat);
    o.detail += line;
    expect(o, dm <= 5.0 && dc <= 5.0 && dmat <= 5.0,
           std::string(name) + " reference metrics drift > 5 points from supervised");
  };
  check_ref("ss", ss_ref);
  check_ref("ts", ts_ref);
  check_ref("cl", cl_ref);

  std::snprintf(buf, sizeof(buf), " (%.0fs total)", seconds_since(t0));
  o.detail += buf;
  return o;
}

// ---------------------------------------------------------------------------
// criterion 8: bit-identical reruns
// ---------------------------------------------------------------------------

Outcome criterion8_reproducibility() {
  Outcome o;
  namespace fs = std::filesystem;
  fs::path root = fs::temp_directory_path() / "tsdet_acceptance_repro";
  fs::remove_all(root);
  fs::create_directories(root);

  Dataset ds = generate(fixtures::tiny_synth4(10, 801));
  Dataset test = generate(fixtures::tiny_synth4(6, 802));

  auto train_once = [&](const fs::path& dir) {
    DetectionModel model =
        DetectionModel::build(fixtures::tiny_model(ModelVariant::TwoStream), ds.vocabulary, 5);
    TrainConfig tc = fixtures::tiny_train(4, 5);
    tc.batch_size = 2;
    tc.num_threads = 2;
    TrainOutcome out = train_model(model, ds.samples, tc, dir);
    EvalOptions opts;
    auto predict = [&](const DetectionSample& s) { return model.predict(*s.pixels, opts.predict); };
    EvalReport report = evaluate_predictor(predict, test.samples, test.vocabulary, opts);
    save_report(report, dir / "report.json");
    return out;
  };
  TrainOutcome r1 = train_once(root / "r1");
  TrainOutcome r2 = train_once(root / "r2");
  for (std::size_t i = 0; i < r1.history.size(); ++i) {
    expect(o, r1.history[i].total == r2.history[i].total, "loss curves diverge");
  }
  auto slurp_file = [](const fs::path& p) {
    std::ifstream f(p, std::ios::binary);
    return std::string(std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>());
  };
  expect(o, slurp_file(root / "r1" / "step_4.ckpt") == slurp_file(root / "r2" / "step_4.ckpt"),
         "checkpoints differ");
  expect(o, slurp_file(root / "r1" / "report.json") == slurp_file(root / "r2" / "report.json"),
         "eval reports differ");

  // transfer protocol rerun
  auto transfer_once = [&]() {
    TransferTrainFn fn = standard_transfer_train_fn(fixtures::tiny_model(ModelVariant::TwoStream),
                                                    fixtures::tiny_train(3, 9), ds.vocabulary, 9);
    return run_transfer_protocol(fn, ds.samples, test.samples, ds.vocabulary, 11, EvalOptions{});
  };
  TransferOutcome t1 = transfer_once();
  TransferOutcome t2 = transfer_once();
  expect(o, t1.averaged_target.map == t2.averaged_target.map, "transfer target mAP differs");
  expect(o, t1.averaged_target.color_recall == t2.averaged_target.color_recall,
         "transfer target color recall differs");
  expect(o, t1.averaged_reference.map == t2.averaged_reference.map, "transfer reference mAP differs");
  return o;
}

}  // namespace

int main() {
  struct Entry {
    const char* name;
    std::function<Outcome()> run;
  };
  const Entry entries[] = {
      {"criterion 1: gradient-block audit", criterion1_gradient_block},
      {"criterion 2: stream-isolation suite", criterion2_stream_isolation},
      {"criterion 3: loss oracles", criterion3_loss_oracles},
      {"criterion 4: gradient checks", criterion4_gradient_checks},
      {"criterion 5: metric oracles", criterion5_metric_oracles},
      {"criterion 6: protocol conformance", criterion6_protocol},
      {"criterion 7: desk-scale directional reproduction", criterion7_directional},
      {"criterion 8: reproducibility", criterion8_reproducibility},
  };

  bool all_pass = true;
  for (const auto& e : entries) {
    Outcome o;
    try {
      o = e.run();
    } catch (const std::exception& ex) {
      o.pass = false;
      o.detail = std::string("exception: ") + ex.what();
    }
    std::printf("[%s] %s%s%s\n", o.pass ? "PASS" : "FAIL", e.name, o.detail.empty() ? "" : " -",
                o.detail.c_str());
    std::fflush(stdout);
    all_pass = all_pass && o.pass;
  }
  return all_pass ? 0 : 1;
}
