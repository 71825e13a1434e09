#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "tsdet/geometry.hpp"

namespace tsdet {

// The seven stream wirings under comparison.
enum class ModelVariant {
  SingleStream,
  SingleStreamDetectionOnly,
  PaSce,
  PaUce,
  TwoStream,
  TwoStreamCrossLink,
  TwoStreamLfe,
};

std::string variant_name(ModelVariant v);
// Accepts the canonical snake_case names plus the common spellings
// ("TwoStream+CrossLink", "PA+SCE", ...). Throws std::invalid_argument
// listing the valid names otherwise.
ModelVariant variant_from_name(const std::string& name);
std::vector<std::string> variant_names();

bool variant_is_two_stream(ModelVariant v);
bool variant_is_pa(ModelVariant v);
bool variant_has_attribute_heads(ModelVariant v);
bool variant_uses_unified_attr(ModelVariant v);  // single softmax over colors+materials

struct BackboneConfig {
  int stem_width = 16;
  std::vector<int> stage_widths = {16, 32, 48};
  std::vector<int> stage_blocks = {1, 1, 1};
  // Pyramid level l taps the stage at stride 2^l; at least two levels.
  std::vector<int> pyramid_levels = {2, 3};
  int gn_groups = 8;

  void validate() const;
};

struct AnchorConfig {
  std::vector<double> scales = {1.0, 1.2599, 1.5874};  // 2^{0,1/3,2/3}
  std::vector<double> ratios = {0.5, 1.0, 2.0};        // height / width
  double base_factor = 3.0;                            // anchor side = stride * base_factor * scale

  int per_location() const { return static_cast<int>(scales.size() * ratios.size()); }
};

struct ProposalConfig {
  int pre_nms_train = 512;
  int post_nms_train = 64;
  int pre_nms_test = 512;
  int post_nms_test = 48;
  double nms_threshold = 0.7;
  double min_size = 2.0;
};

struct RoiConfig {
  int resolution = 7;
  int sampling = 2;
  int fc_dim = 64;
  int level_k0 = 4;              // canonical pyramid level in the FPN assignment rule
  double canonical_scale = 224.0;
};

enum class CrossLinkMode { Both, MaterialOnly };

struct ModelConfig {
  ModelVariant variant = ModelVariant::TwoStream;
  BackboneConfig backbone;
  int fpn_channels = 32;
  AnchorConfig anchors;
  ProposalConfig proposals;
  RoiConfig roi;
  CrossLinkMode cross_link = CrossLinkMode::Both;
  int pa_embed_dim = 16;
  std::array<double, 4> bbox_reg_weights = {10.0, 10.0, 5.0, 5.0};
  // Per-channel input normalization in [0,1] pixel units; the trainer
  // recomputes these from the training set and they travel with checkpoints.
  std::array<double, 3> norm_mean = {0.5, 0.5, 0.5};
  std::array<double, 3> norm_std = {0.25, 0.25, 0.25};
};

// Class-agnostic RoI shared by both streams.
struct Proposal {
  Box box;
  double objectness = 0.0;  // sigmoid of the RPN logit
  int source_level = 0;
};

struct PredictOptions {
  double score_threshold = 0.05;
  double nms_threshold = 0.5;
  int max_detections = 50;
};

}  // namespace tsdet
