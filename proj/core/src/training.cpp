#include "tsdet/training.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <future>
#include <stdexcept>
#include <thread>

#include <nlohmann/json.hpp>

#include "tsdet/model/checkpoint.hpp"

namespace tsdet {

using nn::Tensor;
using nn::Var;

void TrainConfig::validate() const {
  if (learning_rate <= 0.0) throw std::invalid_argument("learning_rate must be positive");
  if (batch_size < 1) throw std::invalid_argument("batch_size must be at least 1");
  if (max_steps < 0) throw std::invalid_argument("max_steps must be nonnegative");
}

Adam::Adam(std::vector<Var> params, double learning_rate, const AdamConfig& cfg)
    : params_(std::move(params)), lr_(learning_rate), cfg_(cfg) {
  for (const auto& p : params_) {
    m_.emplace_back(p->value.shape);
    v_.emplace_back(p->value.shape);
  }
}

void Adam::step(const std::vector<Tensor>& grads) {
  if (grads.size() != params_.size()) throw std::invalid_argument("adam: gradient list mismatch");
  ++t_;
  double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  for (std::size_t i = 0; i < params_.size(); ++i) {
    Tensor& p = params_[i]->value;
    const Tensor& g = grads[i];
    Tensor& m = m_[i];
    Tensor& v = v_[i];
    for (std::size_t k = 0; k < p.data.size(); ++k) {
      double gk = g.data[k];
      m.data[k] = cfg_.beta1 * m.data[k] + (1.0 - cfg_.beta1) * gk;
      v.data[k] = cfg_.beta2 * v.data[k] + (1.0 - cfg_.beta2) * gk * gk;
      double mhat = m.data[k] / bc1;
      double vhat = v.data[k] / bc2;
      p.data[k] -= lr_ * mhat / (std::sqrt(vhat) + cfg_.eps);
    }
  }
}

std::pair<std::array<double, 3>, std::array<double, 3>> compute_normalization(
    const std::vector<DetectionSample>& samples, const std::filesystem::path& data_dir) {
  std::array<double, 3> sum{}, sumsq{};
  double count = 0.0;
  for (const auto& s : samples) {
    ImageU8 img = s.load_image(data_dir);
    for (int y = 0; y < img.height; ++y) {
      for (int x = 0; x < img.width; ++x) {
        for (int c = 0; c < 3; ++c) {
          double v = img.at(x, y, c) / 255.0;
          sum[c] += v;
          sumsq[c] += v * v;
        }
      }
    }
    count += static_cast<double>(img.width) * img.height;
  }
  std::array<double, 3> mean{0.5, 0.5, 0.5}, stddev{0.25, 0.25, 0.25};
  if (count > 0) {
    for (int c = 0; c < 3; ++c) {
      mean[c] = sum[c] / count;
      double var = sumsq[c] / count - mean[c] * mean[c];
      stddev[c] = std::max(std::sqrt(std::max(var, 0.0)), 1e-3);
    }
  }
  return {mean, stddev};
}

namespace {

struct FlippedSample {
  ImageU8 image;
  std::vector<ObjectAnnotation> annotations;
};

FlippedSample maybe_flip(const ImageU8& img, const std::vector<ObjectAnnotation>& anns,
                         bool do_flip) {
  if (!do_flip) return {img, anns};
  FlippedSample out{flip_horizontal(img), anns};
  for (auto& a : out.annotations) {
    double x1 = img.width - a.box.x2;
    double x2 = img.width - a.box.x1;
    a.box.x1 = x1;
    a.box.x2 = x2;
  }
  return out;
}

}  // namespace

ImageLosses forward_losses(const DetectionModel& model, const ImageU8& img,
                           const std::vector<ObjectAnnotation>& annotations,
                           const TrainConfig& cfg, const Rng& rng) {
  const ModelConfig& mc = model.config();
  const Vocabulary& vocab = model.vocabulary();

  Tensor image = model.preprocess(img);
  RpnForward rpn = model.forward_rpn(image, /*train_mode=*/true);

  std::vector<Box> gt_boxes;
  for (const auto& a : annotations) gt_boxes.push_back(a.box);
  AnchorTargets anchor_targets =
      assign_anchor_targets(rpn.anchors.boxes, gt_boxes, cfg.rpn_targets, rng.child("anchor"));
  RpnLoss rloss = rpn_loss(rpn.objectness, rpn.deltas, anchor_targets);

  // Ground-truth boxes join the proposal pool so foreground rows exist from
  // the first step.
  std::vector<Box> rois;
  for (const auto& p : rpn.proposals) rois.push_back(p.box);
  for (const auto& b : gt_boxes) rois.push_back(b);
  RoiTargets roi_targets = assign_roi_targets(rois, annotations, cfg.roi_targets, rng.child("roi"));

  std::vector<Box> sampled_boxes;
  for (int idx : roi_targets.sampled) sampled_boxes.push_back(rois[static_cast<std::size_t>(idx)]);

  Var obj_pooled = model.extract_roi_features(StreamKind::Object, rpn.object_fpn, sampled_boxes);
  Var attr_pooled = obj_pooled;
  if (variant_is_two_stream(mc.variant)) {
    auto attr_fpn = model.forward_stream(StreamKind::Attribute, image);
    attr_pooled = model.extract_roi_features(StreamKind::Attribute, attr_fpn, sampled_boxes);
  }
  HeadOutputs heads;
  if (variant_is_pa(mc.variant)) {
    // Teacher forcing: the embedding sees the matched ground-truth category.
    heads = model.forward_heads(obj_pooled, attr_pooled, &roi_targets.category);
  } else {
    heads = model.forward_heads(obj_pooled, attr_pooled);
  }
  DetectionLoss dloss = detection_loss(heads, roi_targets, mc.bbox_reg_weights);

  ImageLosses out;
  Var color_loss = zero_loss();
  Var material_loss = zero_loss();
  Var attr_loss = zero_loss();
  if (variant_has_attribute_heads(mc.variant)) {
    if (variant_uses_unified_attr(mc.variant)) {
      UnifiedRows rows = build_unified_rows(roi_targets.color, roi_targets.material,
                                            static_cast<int>(vocab.colors.size()));
      attr_loss = uce_attribute_loss(heads.unified, rows);
      for (std::size_t i = 0; i < rows.row_of.size(); ++i) {
        int cat = roi_targets.category[static_cast<std::size_t>(rows.row_of[i])] - 1;
        int kind = rows.label[i] < static_cast<int>(vocab.colors.size()) ? 0 : 1;
        out.attr_rows.emplace_back(cat, kind);
      }
    } else {
      SceLoss sce = sce_attribute_loss(heads.color, roi_targets.color, heads.material,
                                       roi_targets.material);
      color_loss = sce.color;
      material_loss = sce.material;
      attr_loss = nn::add(sce.color, sce.material);
      for (std::size_t i = 0; i < roi_targets.sampled.size(); ++i) {
        int cat = roi_targets.category[i] - 1;
        if (roi_targets.color[i]) out.attr_rows.emplace_back(cat, 0);
        if (roi_targets.material[i]) out.attr_rows.emplace_back(cat, 1);
      }
    }
  }

  out.total = nn::add(nn::add(nn::add(rloss.objectness, rloss.box), nn::add(dloss.cls, dloss.loc)),
                      attr_loss);
  out.attr_only = attr_loss;
  out.values.rpn_objectness = rloss.objectness->value.item();
  out.values.rpn_box = rloss.box->value.item();
  out.values.cls = dloss.cls->value.item();
  out.values.loc = dloss.loc->value.item();
  out.values.color = color_loss->value.item();
  out.values.material = material_loss->value.item();
  out.values.attr = attr_loss->value.item();
  out.values.total = out.total->value.item();
  return out;
}

namespace {

void accumulate_breakdown(LossBreakdown& acc, const LossBreakdown& part, double w) {
  acc.rpn_objectness += w * part.rpn_objectness;
  acc.rpn_box += w * part.rpn_box;
  acc.cls += w * part.cls;
  acc.loc += w * part.loc;
  acc.color += w * part.color;
  acc.material += w * part.material;
  acc.attr += w * part.attr;
  acc.total += w * part.total;
}

void check_finite(const LossBreakdown& loss, int step) {
  const std::pair<const char*, double> parts[] = {
      {"rpn_objectness", loss.rpn_objectness}, {"rpn_box", loss.rpn_box}, {"cls", loss.cls},
      {"loc", loss.loc},                       {"color", loss.color},     {"material", loss.material},
      {"attr", loss.attr},                     {"total", loss.total},
  };
  for (const auto& [name, value] : parts) {
    if (!std::isfinite(value)) {
      throw std::runtime_error("non-finite loss component '" + std::string(name) + "' at step " +
                               std::to_string(step));
    }
  }
}

struct ImageWork {
  LossBreakdown values;
  nn::GradStore grads;
  std::vector<std::pair<int, int>> attr_rows;
};

}  // namespace

TrainOutcome train_model(DetectionModel& model, const std::vector<DetectionSample>& samples,
                         const TrainConfig& cfg, const std::filesystem::path& run_dir,
                         const std::filesystem::path& data_dir) {
  cfg.validate();
  if (samples.empty()) throw std::invalid_argument("training needs at least one sample");

  auto [mean, stddev] = compute_normalization(samples, data_dir);
  model.set_normalization(mean, stddev);

  // Images are small at desk scale; cache them decoded.
  std::vector<ImageU8> cache;
  cache.reserve(samples.size());
  for (const auto& s : samples) cache.push_back(s.load_image(data_dir));

  const std::vector<Var>& params = model.params().all();
  Adam opt(params, cfg.learning_rate, cfg.adam);

  std::ofstream log;
  if (!run_dir.empty()) {
    std::filesystem::create_directories(run_dir);
    log.open(run_dir / "metrics.jsonl", std::ios::binary);
  }

  TrainOutcome outcome;
  outcome.color_rows_per_category.assign(model.vocabulary().categories.size(), 0);
  outcome.material_rows_per_category.assign(model.vocabulary().categories.size(), 0);

  Rng root(cfg.seed);
  std::vector<int> order;
  std::uint64_t epoch = 0;
  auto refill_order = [&]() {
    order.resize(samples.size());
    for (std::size_t i = 0; i < samples.size(); ++i) order[i] = static_cast<int>(i);
    Rng shuffle_rng = root.child("data-order", epoch);
    shuffle_rng.shuffle(order);
    ++epoch;
  };
  refill_order();
  std::size_t cursor = 0;

  int threads = cfg.num_threads > 0
                    ? cfg.num_threads
                    : std::min<int>(cfg.batch_size,
                                    std::max(1u, std::thread::hardware_concurrency()));

  for (int step = 0; step < cfg.max_steps; ++step) {
    std::vector<int> batch;
    for (int i = 0; i < cfg.batch_size; ++i) {
      if (cursor >= order.size()) {
        refill_order();
        cursor = 0;
      }
      batch.push_back(order[cursor++]);
    }

    auto run_image = [&](int slot) {
      int sample_idx = batch[static_cast<std::size_t>(slot)];
      Rng rng = root.child("step", static_cast<std::uint64_t>(step), static_cast<std::uint64_t>(slot));
      bool flip = cfg.hflip && rng.child("flip").bernoulli(0.5);
      FlippedSample fs = maybe_flip(cache[static_cast<std::size_t>(sample_idx)],
                                    samples[static_cast<std::size_t>(sample_idx)].annotations, flip);
      ImageWork w;
      ImageLosses losses = forward_losses(model, fs.image, fs.annotations, cfg, rng);
      w.values = losses.values;
      w.attr_rows = std::move(losses.attr_rows);
      w.grads = nn::backward(losses.total);
      return w;
    };

    std::vector<ImageWork> work(batch.size());
    if (threads <= 1 || batch.size() == 1) {
      for (std::size_t i = 0; i < batch.size(); ++i) work[i] = run_image(static_cast<int>(i));
    } else {
      std::vector<std::future<ImageWork>> futures;
      for (std::size_t i = 0; i < batch.size(); ++i) {
        futures.push_back(std::async(std::launch::async, run_image, static_cast<int>(i)));
      }
      for (std::size_t i = 0; i < batch.size(); ++i) work[i] = futures[i].get();
    }

    // Fixed-order reduction keeps the step bit-deterministic.
    double inv_b = 1.0 / static_cast<double>(batch.size());
    LossBreakdown step_loss;
    std::vector<Tensor> grads;
    grads.reserve(params.size());
    for (const auto& p : params) grads.emplace_back(p->value.shape);
    for (const auto& w : work) {
      accumulate_breakdown(step_loss, w.values, inv_b);
      for (std::size_t pi = 0; pi < params.size(); ++pi) {
        const Tensor* g = w.grads.find(params[pi].get());
        if (!g) continue;
        Tensor& acc = grads[pi];
        for (std::size_t k = 0; k < acc.data.size(); ++k) acc.data[k] += inv_b * g->data[k];
      }
      for (const auto& [cat, kind] : w.attr_rows) {
        if (kind == 0) outcome.color_rows_per_category[static_cast<std::size_t>(cat)]++;
        else outcome.material_rows_per_category[static_cast<std::size_t>(cat)]++;
      }
    }
    check_finite(step_loss, step);

    if (cfg.grad_clip) {
      double sq = 0.0;
      for (const auto& g : grads) {
        for (double v : g.data) sq += v * v;
      }
      double norm = std::sqrt(sq);
      if (norm > *cfg.grad_clip) {
        double scale = *cfg.grad_clip / norm;
        for (auto& g : grads) g.scale_(scale);
      }
    }
    opt.step(grads);

    outcome.history.push_back(step_loss);
    if (log.is_open()) {
      nlohmann::json line;
      line["step"] = step;
      line["rpn_objectness"] = step_loss.rpn_objectness;
      line["rpn_box"] = step_loss.rpn_box;
      line["cls"] = step_loss.cls;
      line["loc"] = step_loss.loc;
      if (variant_has_attribute_heads(model.config().variant)) {
        if (!variant_uses_unified_attr(model.config().variant)) {
          line["color"] = step_loss.color;
          line["material"] = step_loss.material;
        }
        line["attr"] = step_loss.attr;
      }
      line["total"] = step_loss.total;
      line["lr"] = cfg.learning_rate;
      line["timestamp"] = std::chrono::duration_cast<std::chrono::milliseconds>(
                              std::chrono::system_clock::now().time_since_epoch())
                              .count();
      log << line.dump() << "\n";
    }

    if (!run_dir.empty() && cfg.checkpoint_interval > 0 && (step + 1) % cfg.checkpoint_interval == 0 &&
        step + 1 != cfg.max_steps) {
      save_checkpoint(model, run_dir / ("step_" + std::to_string(step + 1) + ".ckpt"));
    }
  }

  if (!run_dir.empty()) {
    outcome.checkpoint_path = run_dir / ("step_" + std::to_string(cfg.max_steps) + ".ckpt");
    save_checkpoint(model, outcome.checkpoint_path);
  }
  return outcome;
}

TransferTrainFn standard_transfer_train_fn(const ModelConfig& model_cfg,
                                           const TrainConfig& train_cfg,
                                           const Vocabulary& vocabulary, std::uint64_t init_seed,
                                           const std::filesystem::path& out_dir,
                                           const std::filesystem::path& data_dir,
                                           const PredictOptions& predict_opts) {
  return [=](const std::vector<DetectionSample>& masked_train, const CategorySplit& split,
             int run_index) -> PredictFn {
    auto model = std::make_shared<DetectionModel>(
        DetectionModel::build(model_cfg, vocabulary, init_seed));
    std::filesystem::path run_dir;
    if (!out_dir.empty()) {
      run_dir = out_dir / (run_index == 0 ? "run_a" : "run_b");
      std::filesystem::create_directories(run_dir);
      write_split(split, vocabulary, run_dir / "split.json");
    }
    train_model(*model, masked_train, train_cfg, run_dir, data_dir);
    return [model, predict_opts, data_dir](const DetectionSample& sample) {
      return model->predict(sample.load_image(data_dir), predict_opts);
    };
  };
}

GradientBlockAudit audit_gradient_block(const DetectionModel& model,
                                        const std::vector<DetectionSample>& batch,
                                        const TrainConfig& cfg,
                                        const std::filesystem::path& data_dir) {
  if (!variant_is_two_stream(model.config().variant)) {
    throw std::invalid_argument("gradient-block audit needs a two-stream variant, got " +
                                variant_name(model.config().variant));
  }
  if (batch.empty()) throw std::invalid_argument("gradient-block audit needs a nonempty batch");

  GradientBlockAudit report;
  std::vector<Var> object_params = model.object_stream_params();
  report.params_checked = static_cast<std::int64_t>(object_params.size());
  Rng root(cfg.seed);
  for (std::size_t i = 0; i < batch.size(); ++i) {
    ImageU8 img = batch[i].load_image(data_dir);
    Rng rng = root.child("audit", i);
    ImageLosses losses = forward_losses(model, img, batch[i].annotations, cfg, rng);
    nn::GradStore grads = nn::backward(losses.attr_only);
    for (const auto& p : object_params) {
      const Tensor* g = grads.find(p.get());
      if (g) report.max_abs_object_grad = std::max(report.max_abs_object_grad, g->max_abs());
    }
  }
  report.blocked = report.max_abs_object_grad == 0.0;
  return report;
}

}  // namespace tsdet
