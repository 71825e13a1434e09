#include "tsdet/model/detector.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace tsdet {

using nn::Var;

namespace {

// Pooled feature width fed to the per-stream MLPs.
int pooled_dim(const ModelConfig& cfg) {
  return cfg.fpn_channels * cfg.roi.resolution * cfg.roi.resolution;
}

nn::Var run_block(const detail::ResidualBlock& b, const nn::Var& x) {
  Var h = nn::relu(b.gn1(b.conv1(x)));
  h = b.gn2(b.conv2(h));
  Var skip = b.has_projection ? b.proj_gn(b.proj(x)) : x;
  return nn::relu(nn::add(h, skip));
}

}  // namespace

DetectionModel DetectionModel::build(const ModelConfig& config, const Vocabulary& vocabulary,
                                     std::uint64_t init_seed) {
  config.backbone.validate();
  vocabulary.validate();
  if (variant_has_attribute_heads(config.variant)) {
    if (vocabulary.colors.empty() || vocabulary.materials.empty()) {
      throw std::invalid_argument(
          "variant " + variant_name(config.variant) +
          " needs nonempty color and material vocabularies");
    }
  }
  return DetectionModel(config, vocabulary, init_seed);
}

detail::ConvLayer DetectionModel::make_conv(const std::string& name, int cin, int cout, int k,
                                            int stride, int pad, nn::Init init, double scale) {
  detail::ConvLayer l;
  l.w = params_.create(name + ".weight", {cout, cin, k, k}, init, scale);
  l.b = params_.create(name + ".bias", {cout}, nn::Init::Zeros);
  l.stride = stride;
  l.pad = pad;
  return l;
}

detail::NormLayer DetectionModel::make_norm(const std::string& name, int channels) {
  detail::NormLayer l;
  l.gamma = params_.create(name + ".gamma", {channels}, nn::Init::Ones);
  l.beta = params_.create(name + ".beta", {channels}, nn::Init::Zeros);
  l.groups = cfg_.backbone.gn_groups;
  return l;
}

detail::LinearLayer DetectionModel::make_linear(const std::string& name, int in, int out,
                                                nn::Init init, double scale) {
  detail::LinearLayer l;
  l.w = params_.create(name + ".weight", {in, out}, init, scale);
  l.b = params_.create(name + ".bias", {out}, nn::Init::Zeros);
  return l;
}

detail::BackboneNet DetectionModel::make_backbone(const std::string& prefix) {
  const BackboneConfig& bc = cfg_.backbone;
  detail::BackboneNet net;
  net.stem = make_conv(prefix + ".stem", 3, bc.stem_width, 3, 1, 1, nn::Init::KaimingNormal);
  net.stem_gn = make_norm(prefix + ".stem_gn", bc.stem_width);
  int cin = bc.stem_width;
  for (std::size_t s = 0; s < bc.stage_widths.size(); ++s) {
    int cout = bc.stage_widths[s];
    std::vector<detail::ResidualBlock> blocks;
    for (int bidx = 0; bidx < bc.stage_blocks[s]; ++bidx) {
      int stride = bidx == 0 ? 2 : 1;
      std::string bname = prefix + ".stage" + std::to_string(s + 1) + ".block" + std::to_string(bidx);
      detail::ResidualBlock blk;
      blk.conv1 = make_conv(bname + ".conv1", cin, cout, 3, stride, 1, nn::Init::KaimingNormal);
      blk.gn1 = make_norm(bname + ".gn1", cout);
      blk.conv2 = make_conv(bname + ".conv2", cout, cout, 3, 1, 1, nn::Init::KaimingNormal);
      blk.gn2 = make_norm(bname + ".gn2", cout);
      if (stride != 1 || cin != cout) {
        blk.has_projection = true;
        blk.proj = make_conv(bname + ".proj", cin, cout, 1, stride, 0, nn::Init::KaimingNormal);
        blk.proj_gn = make_norm(bname + ".proj_gn", cout);
      }
      blocks.push_back(std::move(blk));
      cin = cout;
    }
    net.stages.push_back(std::move(blocks));
  }
  return net;
}

detail::FpnNet DetectionModel::make_fpn(const std::string& prefix) {
  detail::FpnNet net;
  for (int level : cfg_.backbone.pyramid_levels) {
    int cin = cfg_.backbone.stage_widths[level - 1];
    std::string lname = prefix + ".lateral" + std::to_string(level);
    std::string sname = prefix + ".smooth" + std::to_string(level);
    net.lateral.push_back(make_conv(lname, cin, cfg_.fpn_channels, 1, 1, 0, nn::Init::KaimingNormal));
    net.smooth.push_back(make_conv(sname, cfg_.fpn_channels, cfg_.fpn_channels, 3, 1, 1,
                                   nn::Init::KaimingNormal));
  }
  return net;
}

DetectionModel::DetectionModel(const ModelConfig& config, const Vocabulary& vocabulary,
                               std::uint64_t init_seed)
    : cfg_(config), vocab_(vocabulary), params_(init_seed) {
  const int n_cat = static_cast<int>(vocab_.categories.size());
  const int n_col = static_cast<int>(vocab_.colors.size());
  const int n_mat = static_cast<int>(vocab_.materials.size());
  const int D = cfg_.roi.fc_dim;

  // Object stream exists in every variant and keeps the same parameter names,
  // so a fixed init seed gives identical object-side weights across variants.
  object_backbone_ = make_backbone("object_backbone");
  object_fpn_ = make_fpn("object_fpn");
  int A = cfg_.anchors.per_location();
  rpn_.conv = make_conv("rpn.conv", cfg_.fpn_channels, cfg_.fpn_channels, 3, 1, 1,
                        nn::Init::KaimingNormal);
  rpn_.cls = make_conv("rpn.cls", cfg_.fpn_channels, A, 1, 1, 0, nn::Init::Normal, 0.01);
  rpn_.reg = make_conv("rpn.reg", cfg_.fpn_channels, 4 * A, 1, 1, 0, nn::Init::Normal, 0.01);
  object_mlp_ = make_linear("object_mlp.fc", pooled_dim(cfg_), D, nn::Init::KaimingNormal);

  has_attr_stream_ = variant_is_two_stream(cfg_.variant);
  if (has_attr_stream_) {
    attr_backbone_ = make_backbone("attr_backbone");
    attr_fpn_ = make_fpn("attr_fpn");
    attr_mlp_ = make_linear("attr_mlp.fc", pooled_dim(cfg_), D, nn::Init::KaimingNormal);
  }

  int cls_in = cfg_.variant == ModelVariant::TwoStreamLfe ? 2 * D : D;
  head_category_ = make_linear("head_category.fc", cls_in, n_cat + 1, nn::Init::Normal, 0.01);
  head_bbox_ = make_linear("head_bbox.fc", cls_in, 4 * n_cat, nn::Init::Normal, 0.001);

  has_attr_heads_ = variant_has_attribute_heads(cfg_.variant);
  is_pa_ = variant_is_pa(cfg_.variant);
  if (is_pa_) {
    pa_embed_ = params_.create("pa_embed.table", {n_cat + 1, cfg_.pa_embed_dim}, nn::Init::Normal,
                               0.02);
    pa_fc_ = make_linear("pa_fc.fc", D + cfg_.pa_embed_dim, D, nn::Init::KaimingNormal);
  }
  if (has_attr_heads_) {
    int attr_in = D;
    switch (cfg_.variant) {
      case ModelVariant::TwoStreamLfe: attr_in = 2 * D; break;
      case ModelVariant::TwoStreamCrossLink: attr_in = 2 * D; break;
      default: break;
    }
    if (variant_uses_unified_attr(cfg_.variant)) {
      head_unified_ = make_linear("head_attr.fc", attr_in, n_col + n_mat, nn::Init::Normal, 0.01);
    } else {
      int color_in = attr_in;
      if (cfg_.variant == ModelVariant::TwoStreamCrossLink &&
          cfg_.cross_link == CrossLinkMode::MaterialOnly) {
        color_in = D;
      }
      head_color_ = make_linear("head_color.fc", color_in, n_col, nn::Init::Normal, 0.01);
      head_material_ = make_linear("head_material.fc", attr_in, n_mat, nn::Init::Normal, 0.01);
    }
  }
}

void DetectionModel::set_normalization(std::array<double, 3> mean, std::array<double, 3> stddev) {
  cfg_.norm_mean = mean;
  cfg_.norm_std = stddev;
}

nn::Tensor DetectionModel::preprocess(const ImageU8& img) const {
  nn::Tensor t({3, img.height, img.width});
  for (int c = 0; c < 3; ++c) {
    double mean = cfg_.norm_mean[static_cast<std::size_t>(c)];
    double stddev = cfg_.norm_std[static_cast<std::size_t>(c)];
    for (int y = 0; y < img.height; ++y) {
      for (int x = 0; x < img.width; ++x) {
        t.data[(c * img.height + y) * img.width + x] =
            (img.at(x, y, c) / 255.0 - mean) / stddev;
      }
    }
  }
  return t;
}

std::vector<Var> DetectionModel::run_backbone(const detail::BackboneNet& net,
                                              const detail::FpnNet& fpn,
                                              const nn::Tensor& image) const {
  Var x = nn::relu(net.stem_gn(net.stem(nn::constant(image))));
  std::vector<Var> stage_out;
  for (const auto& stage : net.stages) {
    for (const auto& blk : stage) x = run_block(blk, x);
    stage_out.push_back(x);
  }

  const auto& levels = cfg_.backbone.pyramid_levels;
  std::vector<Var> laterals;
  for (std::size_t i = 0; i < levels.size(); ++i) {
    laterals.push_back(fpn.lateral[i](stage_out[levels[i] - 1]));
  }
  // Top-down pathway, then one smoothing conv per level.
  std::vector<Var> merged(laterals.size());
  merged.back() = laterals.back();
  for (int i = static_cast<int>(laterals.size()) - 2; i >= 0; --i) {
    Var up = nn::upsample_nearest2(merged[i + 1]);
    up = nn::crop2d(up, laterals[i]->value.dim(1), laterals[i]->value.dim(2));
    merged[i] = nn::add(laterals[i], up);
  }
  std::vector<Var> out;
  for (std::size_t i = 0; i < merged.size(); ++i) out.push_back(fpn.smooth[i](merged[i]));
  return out;
}

std::vector<Var> DetectionModel::forward_stream(StreamKind stream, const nn::Tensor& image) const {
  if (stream == StreamKind::Object) return run_backbone(object_backbone_, object_fpn_, image);
  if (!has_attr_stream_) {
    throw std::invalid_argument("variant " + variant_name(cfg_.variant) +
                                " has no attribute stream");
  }
  return run_backbone(attr_backbone_, attr_fpn_, image);
}

RpnForward DetectionModel::forward_rpn(const nn::Tensor& image, bool train_mode) const {
  RpnForward out;
  out.object_fpn = forward_stream(StreamKind::Object, image);
  int height = static_cast<int>(image.dim(1));
  int width = static_cast<int>(image.dim(2));
  out.anchors = generate_anchors(cfg_.anchors, cfg_.backbone.pyramid_levels, width, height);
  int A = cfg_.anchors.per_location();

  std::vector<Var> obj_parts, delta_parts;
  for (const auto& feat : out.object_fpn) {
    Var h = nn::relu(rpn_.conv(feat));
    obj_parts.push_back(nn::rpn_permute(rpn_.cls(h), A, 1));
    delta_parts.push_back(nn::rpn_permute(rpn_.reg(h), A, 4));
  }
  Var obj2d = nn::concat_rows(obj_parts);
  out.objectness = nn::reshape(obj2d, {obj2d->value.dim(0)});
  out.deltas = nn::concat_rows(delta_parts);

  // Proposal selection happens on values; boxes are non-differentiable.
  const nn::Tensor& logits = out.objectness->value;
  const nn::Tensor& deltas = out.deltas->value;
  int pre_nms = train_mode ? cfg_.proposals.pre_nms_train : cfg_.proposals.pre_nms_test;
  int post_nms = train_mode ? cfg_.proposals.post_nms_train : cfg_.proposals.post_nms_test;

  struct Candidate {
    Box box;
    double score;
    int level;
  };
  std::vector<Candidate> candidates;
  const auto& levels = cfg_.backbone.pyramid_levels;
  for (std::size_t li = 0; li < levels.size(); ++li) {
    int begin = out.anchors.level_offsets[li];
    int end = li + 1 < levels.size() ? out.anchors.level_offsets[li + 1]
                                     : static_cast<int>(out.anchors.boxes.size());
    std::vector<int> idx(end - begin);
    std::iota(idx.begin(), idx.end(), begin);
    std::stable_sort(idx.begin(), idx.end(),
                     [&](int a, int b) { return logits[a] > logits[b]; });
    int take = std::min<int>(pre_nms, static_cast<int>(idx.size()));
    for (int i = 0; i < take; ++i) {
      int a = idx[i];
      BoxDelta d{deltas[a * 4 + 0], deltas[a * 4 + 1], deltas[a * 4 + 2], deltas[a * 4 + 3]};
      Box b = clip_box(decode_box(d, out.anchors.boxes[a]), width, height);
      if (b.width() < cfg_.proposals.min_size || b.height() < cfg_.proposals.min_size) continue;
      candidates.push_back({b, 1.0 / (1.0 + std::exp(-logits[a])), levels[li]});
    }
  }

  std::vector<int> order(candidates.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](int a, int b) { return candidates[a].score > candidates[b].score; });
  std::vector<Box> boxes;
  std::vector<double> scores;
  std::vector<int> cand_of;
  for (int i : order) {
    boxes.push_back(candidates[i].box);
    scores.push_back(candidates[i].score);
    cand_of.push_back(i);
  }
  std::vector<int> kept = nms(boxes, scores, cfg_.proposals.nms_threshold);
  int take = std::min<int>(post_nms, static_cast<int>(kept.size()));
  for (int i = 0; i < take; ++i) {
    const Candidate& c = candidates[cand_of[kept[i]]];
    out.proposals.push_back(Proposal{c.box, c.score, c.level});
  }
  return out;
}

Var DetectionModel::extract_roi_features(StreamKind stream, const std::vector<Var>& fpn,
                                         const std::vector<Box>& rois) const {
  (void)stream;  // both streams share pooling parameters-free machinery
  const auto& levels = cfg_.backbone.pyramid_levels;
  int level_min = levels.front(), level_max = levels.back();
  std::int64_t n = static_cast<std::int64_t>(rois.size());
  if (n == 0) {
    return nn::constant(nn::Tensor({0, pooled_dim(cfg_)}));
  }

  // Pool per level, then restore the original roi order.
  std::vector<std::vector<int>> per_level(levels.size());
  for (std::int64_t i = 0; i < n; ++i) {
    int k = fpn_level_for_box(rois[i], cfg_.roi.level_k0, cfg_.roi.canonical_scale, level_min,
                              level_max);
    per_level[k - level_min].push_back(static_cast<int>(i));
  }
  std::vector<Var> parts;
  std::vector<std::int64_t> grouped_order;
  for (std::size_t li = 0; li < levels.size(); ++li) {
    if (per_level[li].empty()) continue;
    std::vector<Box> subset;
    for (int i : per_level[li]) {
      subset.push_back(rois[i]);
      grouped_order.push_back(i);
    }
    double scale = 1.0 / (1 << levels[li]);
    parts.push_back(nn::roi_align(fpn[li], subset, scale, cfg_.roi.resolution, cfg_.roi.sampling));
  }
  Var grouped = parts.size() == 1 ? parts[0] : nn::concat_rows(parts);
  // inverse permutation
  std::vector<std::int64_t> inverse(n);
  for (std::int64_t pos = 0; pos < n; ++pos) inverse[grouped_order[pos]] = pos;
  bool identity = std::is_sorted(grouped_order.begin(), grouped_order.end());
  return identity ? grouped : nn::gather_rows(grouped, inverse);
}

HeadOutputs DetectionModel::forward_heads(const Var& object_pooled, const Var& attr_pooled,
                                          const std::vector<int>* pa_category_labels) const {
  Var obj_feat = nn::relu(object_mlp_(object_pooled));
  Var attr_feat;
  if (has_attr_stream_) attr_feat = nn::relu(attr_mlp_(attr_pooled));

  Var cls_in = obj_feat;
  if (cfg_.variant == ModelVariant::TwoStreamLfe) cls_in = nn::concat_cols(obj_feat, attr_feat);

  HeadOutputs out;
  out.category = head_category_(cls_in);
  out.bbox = head_bbox_(cls_in);
  if (!has_attr_heads_) return out;

  Var color_in, material_in;
  switch (cfg_.variant) {
    case ModelVariant::SingleStream:
      color_in = material_in = obj_feat;
      break;
    case ModelVariant::PaSce:
    case ModelVariant::PaUce: {
      if (pa_category_labels == nullptr) {
        throw std::invalid_argument("PA variants need per-RoI category labels for the embedding");
      }
      std::vector<std::int64_t> idx(pa_category_labels->begin(), pa_category_labels->end());
      Var emb = nn::gather_rows(pa_embed_, idx);
      Var fused = nn::relu(pa_fc_(nn::concat_cols(obj_feat, emb)));
      color_in = material_in = fused;
      break;
    }
    case ModelVariant::TwoStream:
      color_in = material_in = attr_feat;
      break;
    case ModelVariant::TwoStreamCrossLink: {
      // Object features enter the attribute prediction layer through a
      // stop-gradient, so attribute losses cannot disturb the object stream.
      Var linked = nn::concat_cols(attr_feat, nn::stop_gradient(obj_feat));
      material_in = linked;
      color_in = cfg_.cross_link == CrossLinkMode::Both ? linked : attr_feat;
      break;
    }
    case ModelVariant::TwoStreamLfe:
      color_in = material_in = cls_in;
      break;
    default:
      break;
  }

  if (variant_uses_unified_attr(cfg_.variant)) {
    out.unified = head_unified_(color_in);
  } else {
    out.color = head_color_(color_in);
    out.material = head_material_(material_in);
  }
  return out;
}

std::vector<Detection> DetectionModel::predict(const ImageU8& img,
                                               const PredictOptions& opts) const {
  nn::NoGradGuard no_grad;
  const int n_cat = static_cast<int>(vocab_.categories.size());
  const int n_col = static_cast<int>(vocab_.colors.size());
  const int n_mat = static_cast<int>(vocab_.materials.size());

  nn::Tensor image = preprocess(img);
  RpnForward rpn = forward_rpn(image, /*train_mode=*/false);
  if (rpn.proposals.empty()) return {};

  std::vector<Box> rois;
  for (const auto& p : rpn.proposals) rois.push_back(p.box);
  Var obj_pooled = extract_roi_features(StreamKind::Object, rpn.object_fpn, rois);
  Var attr_pooled = obj_pooled;
  if (has_attr_stream_) {
    auto attr_fpn = forward_stream(StreamKind::Attribute, image);
    attr_pooled = extract_roi_features(StreamKind::Attribute, attr_fpn, rois);
  }

  std::vector<int> pa_labels;
  HeadOutputs heads;
  if (is_pa_) {
    // First pass for category argmax, then the attribute path conditioned on it.
    HeadOutputs cat_only;
    Var obj_feat = nn::relu(object_mlp_(obj_pooled));
    cat_only.category = head_category_(obj_feat);
    nn::Tensor probs = nn::softmax_rows(cat_only.category->value);
    for (std::size_t i = 0; i < rois.size(); ++i) {
      const double* row = probs.data.data() + i * (n_cat + 1);
      pa_labels.push_back(static_cast<int>(std::max_element(row, row + n_cat + 1) - row));
    }
    heads = forward_heads(obj_pooled, attr_pooled, &pa_labels);
  } else {
    heads = forward_heads(obj_pooled, attr_pooled);
  }

  nn::Tensor cat_probs = nn::softmax_rows(heads.category->value);
  nn::Tensor color_probs, mat_probs, unified_probs;
  if (has_attr_heads_) {
    if (variant_uses_unified_attr(cfg_.variant)) {
      unified_probs = nn::softmax_rows(heads.unified->value);
    } else {
      color_probs = nn::softmax_rows(heads.color->value);
      mat_probs = nn::softmax_rows(heads.material->value);
    }
  }

  std::vector<Detection> dets;
  std::vector<int> det_class;
  for (std::size_t i = 0; i < rois.size(); ++i) {
    const double* row = cat_probs.data.data() + i * (n_cat + 1);
    int best = 1;
    for (int c = 2; c <= n_cat; ++c) {
      if (row[c] > row[best]) best = c;
    }
    if (row[0] >= row[best]) continue;  // background wins
    double fg_mass = 1.0 - row[0];
    Detection det;
    det.category_scores.resize(n_cat);
    for (int c = 0; c < n_cat; ++c) det.category_scores[c] = row[c + 1] / fg_mass;
    if (det.confidence() < opts.score_threshold) continue;

    int fg = best - 1;
    const double* draw = heads.bbox->value.data.data() + i * 4 * n_cat + 4 * fg;
    BoxDelta d{draw[0] / cfg_.bbox_reg_weights[0], draw[1] / cfg_.bbox_reg_weights[1],
               draw[2] / cfg_.bbox_reg_weights[2], draw[3] / cfg_.bbox_reg_weights[3]};
    Box b = clip_box(decode_box(d, rois[i]), img.width, img.height);
    if (!b.valid()) continue;
    det.box = b;
    det.objectness = rpn.proposals[i].objectness;

    if (has_attr_heads_) {
      if (variant_uses_unified_attr(cfg_.variant)) {
        const double* urow = unified_probs.data.data() + i * (n_col + n_mat);
        double csum = 0.0, msum = 0.0;
        for (int c = 0; c < n_col; ++c) csum += urow[c];
        for (int m = 0; m < n_mat; ++m) msum += urow[n_col + m];
        det.color_scores.resize(n_col);
        det.material_scores.resize(n_mat);
        for (int c = 0; c < n_col; ++c) det.color_scores[c] = urow[c] / csum;
        for (int m = 0; m < n_mat; ++m) det.material_scores[m] = urow[n_col + m] / msum;
      } else {
        det.color_scores.assign(color_probs.data.data() + i * n_col,
                                color_probs.data.data() + (i + 1) * n_col);
        det.material_scores.assign(mat_probs.data.data() + i * n_mat,
                                   mat_probs.data.data() + (i + 1) * n_mat);
      }
    }
    dets.push_back(std::move(det));
    det_class.push_back(fg);
  }

  // Per-class NMS on the decoded boxes.
  std::vector<Detection> out;
  for (int c = 0; c < n_cat; ++c) {
    std::vector<Box> boxes;
    std::vector<double> scores;
    std::vector<int> src;
    for (std::size_t i = 0; i < dets.size(); ++i) {
      if (det_class[i] != c) continue;
      boxes.push_back(dets[i].box);
      scores.push_back(dets[i].confidence());
      src.push_back(static_cast<int>(i));
    }
    for (int k : nms(boxes, scores, opts.nms_threshold)) out.push_back(dets[src[k]]);
  }
  std::stable_sort(out.begin(), out.end(),
                   [](const Detection& a, const Detection& b) { return a.confidence() > b.confidence(); });
  if (static_cast<int>(out.size()) > opts.max_detections) out.resize(opts.max_detections);
  return out;
}

std::vector<std::pair<std::string, std::int64_t>> DetectionModel::parameter_report() const {
  std::vector<std::pair<std::string, std::int64_t>> report;
  auto add = [&](const std::string& component, std::int64_t count) {
    if (count > 0) report.emplace_back(component, count);
  };
  for (const char* prefix : {"object_backbone", "object_fpn", "rpn", "object_mlp", "attr_backbone",
                             "attr_fpn", "attr_mlp", "head_category", "head_bbox", "head_color",
                             "head_material", "head_attr", "pa_embed", "pa_fc"}) {
    add(prefix, params_.count_with_prefix(std::string(prefix) + "."));
  }
  report.emplace_back("total", params_.total_count());
  return report;
}

std::vector<Var> DetectionModel::object_stream_params() const {
  std::vector<Var> out;
  for (const char* prefix :
       {"object_backbone.", "object_fpn.", "rpn.", "object_mlp.", "head_category.", "head_bbox."}) {
    auto part = params_.with_prefix(prefix);
    out.insert(out.end(), part.begin(), part.end());
  }
  return out;
}

std::vector<Var> DetectionModel::attribute_stream_params() const {
  std::vector<Var> out;
  for (const char* prefix : {"attr_backbone.", "attr_fpn.", "attr_mlp.", "head_color.",
                             "head_material.", "head_attr.", "pa_embed.", "pa_fc."}) {
    auto part = params_.with_prefix(prefix);
    out.insert(out.end(), part.begin(), part.end());
  }
  return out;
}

}  // namespace tsdet
