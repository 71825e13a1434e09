#include "tsdet/model/config.hpp"

#include <algorithm>
#include <stdexcept>

namespace tsdet {

namespace {

struct VariantEntry {
  ModelVariant variant;
  const char* canonical;
  const char* alias;  // paper-style spelling
};

const VariantEntry kVariants[] = {
    {ModelVariant::SingleStream, "single_stream", "SingleStream"},
    {ModelVariant::SingleStreamDetectionOnly, "single_stream_detection_only",
     "SingleStream-DetectionOnly"},
    {ModelVariant::PaSce, "pa_sce", "PA+SCE"},
    {ModelVariant::PaUce, "pa_uce", "PA+UCE"},
    {ModelVariant::TwoStream, "two_stream", "TwoStream"},
    {ModelVariant::TwoStreamCrossLink, "two_stream_cross_link", "TwoStream+CrossLink"},
    {ModelVariant::TwoStreamLfe, "two_stream_lfe", "TwoStream+LFE"},
};

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
  return s;
}

}  // namespace

std::string variant_name(ModelVariant v) {
  for (const auto& e : kVariants) {
    if (e.variant == v) return e.canonical;
  }
  return "?";
}

std::vector<std::string> variant_names() {
  std::vector<std::string> out;
  for (const auto& e : kVariants) out.push_back(e.canonical);
  return out;
}

ModelVariant variant_from_name(const std::string& name) {
  std::string n = lower(name);
  for (const auto& e : kVariants) {
    if (n == e.canonical || n == lower(e.alias)) return e.variant;
  }
  std::string valid;
  for (const auto& e : kVariants) {
    if (!valid.empty()) valid += ", ";
    valid += e.canonical;
  }
  throw std::invalid_argument("unknown model variant '" + name + "'; valid variants: " + valid);
}

bool variant_is_two_stream(ModelVariant v) {
  return v == ModelVariant::TwoStream || v == ModelVariant::TwoStreamCrossLink ||
         v == ModelVariant::TwoStreamLfe;
}

bool variant_is_pa(ModelVariant v) {
  return v == ModelVariant::PaSce || v == ModelVariant::PaUce;
}

bool variant_has_attribute_heads(ModelVariant v) {
  return v != ModelVariant::SingleStreamDetectionOnly;
}

bool variant_uses_unified_attr(ModelVariant v) { return v == ModelVariant::PaUce; }

void BackboneConfig::validate() const {
  if (stage_widths.empty() || stage_widths.size() != stage_blocks.size()) {
    throw std::invalid_argument("backbone stage widths/blocks mismatch");
  }
  if (pyramid_levels.size() < 2) {
    throw std::invalid_argument("backbone needs at least 2 pyramid levels");
  }
  for (std::size_t i = 1; i < pyramid_levels.size(); ++i) {
    if (pyramid_levels[i] != pyramid_levels[i - 1] + 1) {
      throw std::invalid_argument("pyramid levels must be consecutive");
    }
  }
  if (pyramid_levels.front() < 1 ||
      pyramid_levels.back() > static_cast<int>(stage_widths.size())) {
    throw std::invalid_argument("pyramid level outside stage range");
  }
  int groups = gn_groups;
  auto divisible = [groups](int w) { return w % groups == 0; };
  if (!divisible(stem_width) || !std::all_of(stage_widths.begin(), stage_widths.end(), divisible)) {
    throw std::invalid_argument("stage widths must be divisible by gn_groups");
  }
}

}  // namespace tsdet
