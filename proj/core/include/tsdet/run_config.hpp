#pragma once

#include <filesystem>
#include <optional>
#include <string>

#include "tsdet/evaluation.hpp"
#include "tsdet/model/config.hpp"
#include "tsdet/synthdata.hpp"
#include "tsdet/training.hpp"

namespace tsdet {

// The single hierarchical config file consumed by the CLI. Flag overrides are
// applied on top of the parsed file; seed precedence is flag > RUN_SEED env >
// file.
struct RunConfig {
  std::uint64_t seed = 0;
  std::string out_dir = "run";
  std::string manifest;       // training/eval dataset manifest path
  std::string eval_manifest;  // held-out manifest used for evaluation
  std::optional<SynthConfig> synth;
  ModelConfig model;
  TrainConfig train;
  EvalOptions eval;
  std::uint64_t split_seed = 0;
};

std::string run_config_to_json_text(const RunConfig& cfg);
RunConfig run_config_from_json_text(const std::string& text);
RunConfig load_run_config(const std::filesystem::path& path);

// 16-hex-digit FNV-based content fingerprint of the manifest plus every image
// it references.
std::string dataset_fingerprint(const std::filesystem::path& manifest_path);

}  // namespace tsdet
