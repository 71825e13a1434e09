#pragma once

#include <cstdint>
#include <optional>
#include <utility>
#include <vector>

#include "tsdet/datamodel.hpp"
#include "tsdet/model/anchors.hpp"
#include "tsdet/model/config.hpp"
#include "tsdet/nn/ops.hpp"
#include "tsdet/nn/params.hpp"

namespace tsdet {

enum class StreamKind { Object, Attribute };

// Per-RoI head logits. `category` has the background class at index 0 and
// `bbox` holds one weighted delta set per foreground class. For the unified
// attribute loss only `unified` is set; otherwise `color`/`material`.
struct HeadOutputs {
  nn::Var category;
  nn::Var bbox;
  nn::Var color;
  nn::Var material;
  nn::Var unified;
};

struct RpnForward {
  std::vector<Proposal> proposals;  // objectness-descending, clipped to the image
  nn::Var objectness;               // [A_total] raw logits, anchor enumeration order
  nn::Var deltas;                   // [A_total, 4]
  AnchorSet anchors;
  std::vector<nn::Var> object_fpn;  // per pyramid level; reused for RoI pooling
};

namespace detail {

struct ConvLayer {
  nn::Var w, b;
  int stride = 1, pad = 1;
  nn::Var operator()(const nn::Var& x) const { return nn::conv2d(x, w, b, stride, pad); }
};

struct NormLayer {
  nn::Var gamma, beta;
  int groups = 8;
  nn::Var operator()(const nn::Var& x) const { return nn::group_norm(x, gamma, beta, groups); }
};

struct LinearLayer {
  nn::Var w, b;
  nn::Var operator()(const nn::Var& x) const { return nn::linear(x, w, b); }
};

struct ResidualBlock {
  ConvLayer conv1;
  NormLayer gn1;
  ConvLayer conv2;
  NormLayer gn2;
  bool has_projection = false;
  ConvLayer proj;
  NormLayer proj_gn;
};

struct BackboneNet {
  ConvLayer stem;
  NormLayer stem_gn;
  std::vector<std::vector<ResidualBlock>> stages;
};

struct FpnNet {
  std::vector<ConvLayer> lateral;  // 1x1 per level
  std::vector<ConvLayer> smooth;   // 3x3 per level
};

struct RpnNet {
  ConvLayer conv;
  ConvLayer cls;  // 1x1 -> A channels
  ConvLayer reg;  // 1x1 -> 4A channels
};

}  // namespace detail

// The detection network for one of the stream-wiring variants. One instance
// owns its parameters; forwards build fresh per-image tapes, so a const model
// in evaluation mode may serve concurrent predict calls.
class DetectionModel {
 public:
  static DetectionModel build(const ModelConfig& config, const Vocabulary& vocabulary,
                              std::uint64_t init_seed);

  const ModelConfig& config() const { return cfg_; }
  const Vocabulary& vocabulary() const { return vocab_; }
  nn::ParamStore& params() { return params_; }
  const nn::ParamStore& params() const { return params_; }

  void set_normalization(std::array<double, 3> mean, std::array<double, 3> stddev);

  // [3,H,W] normalized tensor.
  nn::Tensor preprocess(const ImageU8& img) const;

  // Backbone + FPN features for one stream, ascending pyramid level order.
  std::vector<nn::Var> forward_stream(StreamKind stream, const nn::Tensor& image) const;

  // Runs the object stream and the RPN, producing shared proposals.
  RpnForward forward_rpn(const nn::Tensor& image, bool train_mode) const;

  // Pooled, flattened per-RoI features [N, fpn_channels * resolution^2].
  nn::Var extract_roi_features(StreamKind stream, const std::vector<nn::Var>& fpn,
                               const std::vector<Box>& rois) const;

  // Wires the per-variant head graph. Single-stream variants pass the same
  // pooled features for both arguments. PA variants require per-RoI category
  // labels (ground-truth while training, argmax prediction at inference) and
  // throw std::invalid_argument without them.
  HeadOutputs forward_heads(const nn::Var& object_pooled, const nn::Var& attr_pooled,
                            const std::vector<int>* pa_category_labels = nullptr) const;

  std::vector<Detection> predict(const ImageU8& img, const PredictOptions& opts = {}) const;

  // (component, parameter count) pairs plus a "total" row.
  std::vector<std::pair<std::string, std::int64_t>> parameter_report() const;

  std::vector<nn::Var> object_stream_params() const;
  std::vector<nn::Var> attribute_stream_params() const;

 private:
  DetectionModel(const ModelConfig& config, const Vocabulary& vocabulary, std::uint64_t init_seed);

  detail::ConvLayer make_conv(const std::string& name, int cin, int cout, int k, int stride,
                              int pad, nn::Init init, double scale = 0.0);
  detail::NormLayer make_norm(const std::string& name, int channels);
  detail::LinearLayer make_linear(const std::string& name, int in, int out, nn::Init init,
                                  double scale = 0.0);
  detail::BackboneNet make_backbone(const std::string& prefix);
  detail::FpnNet make_fpn(const std::string& prefix);

  std::vector<nn::Var> run_backbone(const detail::BackboneNet& net, const detail::FpnNet& fpn,
                                    const nn::Tensor& image) const;

  ModelConfig cfg_;
  Vocabulary vocab_;
  nn::ParamStore params_;

  detail::BackboneNet object_backbone_;
  detail::FpnNet object_fpn_;
  detail::RpnNet rpn_;
  detail::LinearLayer object_mlp_;

  bool has_attr_stream_ = false;
  detail::BackboneNet attr_backbone_;
  detail::FpnNet attr_fpn_;
  detail::LinearLayer attr_mlp_;

  detail::LinearLayer head_category_;
  detail::LinearLayer head_bbox_;
  bool has_attr_heads_ = false;
  detail::LinearLayer head_color_;
  detail::LinearLayer head_material_;
  detail::LinearLayer head_unified_;

  bool is_pa_ = false;
  nn::Var pa_embed_;  // [C+1, embed_dim]
  detail::LinearLayer pa_fc_;
};

}  // namespace tsdet
