// Internal JSON (de)serialization for the config structs. Not installed;
// nlohmann/json stays out of the public headers.
#pragma once

#include <nlohmann/json.hpp>

#include "tsdet/datamodel.hpp"
#include "tsdet/evaluation.hpp"
#include "tsdet/model/config.hpp"
#include "tsdet/synthdata.hpp"
#include "tsdet/training.hpp"

namespace tsdet::detail {

using nlohmann::json;

// ---- vocabulary ----------------------------------------------------------------

inline json to_json(const Vocabulary& v) {
  return json{{"categories", v.categories}, {"colors", v.colors}, {"materials", v.materials}};
}

inline Vocabulary vocabulary_from_json(const json& j) {
  Vocabulary v;
  v.categories = j.at("categories").get<std::vector<std::string>>();
  v.colors = j.at("colors").get<std::vector<std::string>>();
  v.materials = j.at("materials").get<std::vector<std::string>>();
  v.validate();
  return v;
}

// ---- model config ----------------------------------------------------------------

inline json to_json(const ModelConfig& c) {
  json j;
  j["variant"] = variant_name(c.variant);
  j["backbone"] = {
      {"stem_width", c.backbone.stem_width},       {"stage_widths", c.backbone.stage_widths},
      {"stage_blocks", c.backbone.stage_blocks},   {"pyramid_levels", c.backbone.pyramid_levels},
      {"gn_groups", c.backbone.gn_groups},
  };
  j["fpn_channels"] = c.fpn_channels;
  j["anchors"] = {{"scales", c.anchors.scales},
                  {"ratios", c.anchors.ratios},
                  {"base_factor", c.anchors.base_factor}};
  j["proposals"] = {{"pre_nms_train", c.proposals.pre_nms_train},
                    {"post_nms_train", c.proposals.post_nms_train},
                    {"pre_nms_test", c.proposals.pre_nms_test},
                    {"post_nms_test", c.proposals.post_nms_test},
                    {"nms_threshold", c.proposals.nms_threshold},
                    {"min_size", c.proposals.min_size}};
  j["roi"] = {{"resolution", c.roi.resolution},
              {"sampling", c.roi.sampling},
              {"fc_dim", c.roi.fc_dim},
              {"level_k0", c.roi.level_k0},
              {"canonical_scale", c.roi.canonical_scale}};
  j["cross_link"] = c.cross_link == CrossLinkMode::Both ? "both" : "material_only";
  j["pa_embed_dim"] = c.pa_embed_dim;
  j["bbox_reg_weights"] = c.bbox_reg_weights;
  j["norm_mean"] = c.norm_mean;
  j["norm_std"] = c.norm_std;
  return j;
}

inline ModelConfig model_config_from_json(const json& j) {
  ModelConfig c;
  if (j.contains("variant")) c.variant = variant_from_name(j["variant"].get<std::string>());
  if (j.contains("backbone")) {
    const json& b = j["backbone"];
    c.backbone.stem_width = b.value("stem_width", c.backbone.stem_width);
    if (b.contains("stage_widths")) c.backbone.stage_widths = b["stage_widths"].get<std::vector<int>>();
    if (b.contains("stage_blocks")) c.backbone.stage_blocks = b["stage_blocks"].get<std::vector<int>>();
    if (b.contains("pyramid_levels")) c.backbone.pyramid_levels = b["pyramid_levels"].get<std::vector<int>>();
    c.backbone.gn_groups = b.value("gn_groups", c.backbone.gn_groups);
  }
  c.fpn_channels = j.value("fpn_channels", c.fpn_channels);
  if (j.contains("anchors")) {
    const json& a = j["anchors"];
    if (a.contains("scales")) c.anchors.scales = a["scales"].get<std::vector<double>>();
    if (a.contains("ratios")) c.anchors.ratios = a["ratios"].get<std::vector<double>>();
    c.anchors.base_factor = a.value("base_factor", c.anchors.base_factor);
  }
  if (j.contains("proposals")) {
    const json& p = j["proposals"];
    c.proposals.pre_nms_train = p.value("pre_nms_train", c.proposals.pre_nms_train);
    c.proposals.post_nms_train = p.value("post_nms_train", c.proposals.post_nms_train);
    c.proposals.pre_nms_test = p.value("pre_nms_test", c.proposals.pre_nms_test);
    c.proposals.post_nms_test = p.value("post_nms_test", c.proposals.post_nms_test);
    c.proposals.nms_threshold = p.value("nms_threshold", c.proposals.nms_threshold);
    c.proposals.min_size = p.value("min_size", c.proposals.min_size);
  }
  if (j.contains("roi")) {
    const json& r = j["roi"];
    c.roi.resolution = r.value("resolution", c.roi.resolution);
    c.roi.sampling = r.value("sampling", c.roi.sampling);
    c.roi.fc_dim = r.value("fc_dim", c.roi.fc_dim);
    c.roi.level_k0 = r.value("level_k0", c.roi.level_k0);
    c.roi.canonical_scale = r.value("canonical_scale", c.roi.canonical_scale);
  }
  if (j.contains("cross_link")) {
    c.cross_link = j["cross_link"].get<std::string>() == "material_only"
                       ? CrossLinkMode::MaterialOnly
                       : CrossLinkMode::Both;
  }
  c.pa_embed_dim = j.value("pa_embed_dim", c.pa_embed_dim);
  if (j.contains("bbox_reg_weights")) c.bbox_reg_weights = j["bbox_reg_weights"].get<std::array<double, 4>>();
  if (j.contains("norm_mean")) c.norm_mean = j["norm_mean"].get<std::array<double, 3>>();
  if (j.contains("norm_std")) c.norm_std = j["norm_std"].get<std::array<double, 3>>();
  return c;
}

// ---- train config ----------------------------------------------------------------

inline json to_json(const TrainConfig& c) {
  json j;
  j["learning_rate"] = c.learning_rate;
  j["batch_size"] = c.batch_size;
  j["max_steps"] = c.max_steps;
  j["seed"] = c.seed;
  j["eval_interval"] = c.eval_interval;
  j["checkpoint_interval"] = c.checkpoint_interval;
  j["adam"] = {{"beta1", c.adam.beta1}, {"beta2", c.adam.beta2}, {"eps", c.adam.eps}};
  j["grad_clip"] = c.grad_clip ? json(*c.grad_clip) : json(nullptr);
  j["hflip"] = c.hflip;
  j["rpn_targets"] = {{"neg_max", c.rpn_targets.neg_max},
                      {"pos_min", c.rpn_targets.pos_min},
                      {"batch", c.rpn_targets.batch},
                      {"pos_fraction", c.rpn_targets.pos_fraction}};
  j["roi_targets"] = {{"fg_iou", c.roi_targets.fg_iou},
                      {"batch", c.roi_targets.batch},
                      {"fg_fraction", c.roi_targets.fg_fraction}};
  j["num_threads"] = c.num_threads;
  return j;
}

inline TrainConfig train_config_from_json(const json& j) {
  TrainConfig c;
  c.learning_rate = j.value("learning_rate", c.learning_rate);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.max_steps = j.value("max_steps", c.max_steps);
  c.seed = j.value("seed", c.seed);
  c.eval_interval = j.value("eval_interval", c.eval_interval);
  c.checkpoint_interval = j.value("checkpoint_interval", c.checkpoint_interval);
  if (j.contains("adam")) {
    const json& a = j["adam"];
    c.adam.beta1 = a.value("beta1", c.adam.beta1);
    c.adam.beta2 = a.value("beta2", c.adam.beta2);
    c.adam.eps = a.value("eps", c.adam.eps);
  }
  if (j.contains("grad_clip") && !j["grad_clip"].is_null()) c.grad_clip = j["grad_clip"].get<double>();
  c.hflip = j.value("hflip", c.hflip);
  if (j.contains("rpn_targets")) {
    const json& r = j["rpn_targets"];
    c.rpn_targets.neg_max = r.value("neg_max", c.rpn_targets.neg_max);
    c.rpn_targets.pos_min = r.value("pos_min", c.rpn_targets.pos_min);
    c.rpn_targets.batch = r.value("batch", c.rpn_targets.batch);
    c.rpn_targets.pos_fraction = r.value("pos_fraction", c.rpn_targets.pos_fraction);
  }
  if (j.contains("roi_targets")) {
    const json& r = j["roi_targets"];
    c.roi_targets.fg_iou = r.value("fg_iou", c.roi_targets.fg_iou);
    c.roi_targets.batch = r.value("batch", c.roi_targets.batch);
    c.roi_targets.fg_fraction = r.value("fg_fraction", c.roi_targets.fg_fraction);
  }
  c.num_threads = j.value("num_threads", c.num_threads);
  return c;
}

// ---- eval options -----------------------------------------------------------------

inline json to_json(const EvalOptions& c) {
  json j;
  j["iou_threshold"] = c.iou_threshold;
  j["score_threshold"] = c.score_threshold;
  j["category_aware_recall"] = c.category_aware_recall;
  j["predict"] = {{"score_threshold", c.predict.score_threshold},
                  {"nms_threshold", c.predict.nms_threshold},
                  {"max_detections", c.predict.max_detections}};
  j["num_threads"] = c.num_threads;
  return j;
}

inline EvalOptions eval_options_from_json(const json& j) {
  EvalOptions c;
  c.iou_threshold = j.value("iou_threshold", c.iou_threshold);
  c.score_threshold = j.value("score_threshold", c.score_threshold);
  c.category_aware_recall = j.value("category_aware_recall", c.category_aware_recall);
  if (j.contains("predict")) {
    const json& p = j["predict"];
    c.predict.score_threshold = p.value("score_threshold", c.predict.score_threshold);
    c.predict.nms_threshold = p.value("nms_threshold", c.predict.nms_threshold);
    c.predict.max_detections = p.value("max_detections", c.predict.max_detections);
  }
  c.num_threads = j.value("num_threads", c.num_threads);
  return c;
}

// ---- synth config -----------------------------------------------------------------

inline json to_json(const SynthConfig& c) {
  json j;
  j["n_images"] = c.n_images;
  j["image_size"] = c.image_size;
  json cats = json::array();
  for (const auto& s : c.categories) {
    cats.push_back({{"kind", shape_kind_name(s.kind)}, {"min_size", s.min_size}, {"max_size", s.max_size}});
  }
  j["categories"] = cats;
  json cols = json::array();
  for (const auto& col : c.colors) {
    cols.push_back({{"name", col.name},
                    {"rgb", std::vector<int>{col.rgb[0], col.rgb[1], col.rgb[2]}},
                    {"jitter", col.jitter}});
  }
  j["colors"] = cols;
  json mats = json::array();
  for (const auto& m : c.materials) {
    const char* t = m.texture == TextureKind::Flat      ? "flat"
                    : m.texture == TextureKind::Speckle ? "speckle"
                    : m.texture == TextureKind::Stripe  ? "stripe"
                                                        : "gloss-gradient";
    mats.push_back({{"name", m.name}, {"texture", t}});
  }
  j["materials"] = mats;
  j["min_objects"] = c.min_objects;
  j["max_objects"] = c.max_objects;
  j["seed"] = c.seed;
  j["attribute_label_rate"] = c.attribute_label_rate;
  j["max_overlap_iou"] = c.max_overlap_iou;
  j["placement_retries"] = c.placement_retries;
  j["clutter_min"] = c.clutter_min;
  j["clutter_max"] = c.clutter_max;
  j["occluder_prob"] = c.occluder_prob;
  return j;
}

inline SynthConfig synth_config_from_json(const json& j) {
  SynthConfig c;
  c.n_images = j.value("n_images", c.n_images);
  c.image_size = j.value("image_size", c.image_size);
  if (j.contains("categories")) {
    c.categories.clear();
    for (const auto& s : j["categories"]) {
      ShapeSpec spec;
      spec.kind = shape_kind_from_name(s.at("kind").get<std::string>());
      spec.min_size = s.value("min_size", spec.min_size);
      spec.max_size = s.value("max_size", spec.max_size);
      c.categories.push_back(spec);
    }
  }
  if (j.contains("colors")) {
    c.colors.clear();
    for (const auto& col : j["colors"]) {
      SynthColor sc;
      sc.name = col.at("name").get<std::string>();
      auto rgb = col.at("rgb").get<std::vector<int>>();
      sc.rgb = {static_cast<std::uint8_t>(rgb.at(0)), static_cast<std::uint8_t>(rgb.at(1)),
                static_cast<std::uint8_t>(rgb.at(2))};
      sc.jitter = col.value("jitter", sc.jitter);
      c.colors.push_back(sc);
    }
  }
  if (j.contains("materials")) {
    c.materials.clear();
    for (const auto& m : j["materials"]) {
      SynthMaterial sm;
      sm.name = m.at("name").get<std::string>();
      std::string t = m.value("texture", "flat");
      sm.texture = t == "speckle"          ? TextureKind::Speckle
                   : t == "stripe"         ? TextureKind::Stripe
                   : t == "gloss-gradient" ? TextureKind::GlossGradient
                                           : TextureKind::Flat;
      c.materials.push_back(sm);
    }
  }
  c.min_objects = j.value("min_objects", c.min_objects);
  c.max_objects = j.value("max_objects", c.max_objects);
  c.seed = j.value("seed", c.seed);
  c.attribute_label_rate = j.value("attribute_label_rate", c.attribute_label_rate);
  c.max_overlap_iou = j.value("max_overlap_iou", c.max_overlap_iou);
  c.placement_retries = j.value("placement_retries", c.placement_retries);
  c.clutter_min = j.value("clutter_min", c.clutter_min);
  c.clutter_max = j.value("clutter_max", c.clutter_max);
  c.occluder_prob = j.value("occluder_prob", c.occluder_prob);
  return c;
}

}  // namespace tsdet::detail
