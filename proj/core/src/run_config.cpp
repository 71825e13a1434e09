#include "tsdet/run_config.hpp"

#include <fstream>
#include <sstream>

#include "config_json.hpp"
#include "tsdet/rng.hpp"

namespace tsdet {

using nlohmann::json;

std::string run_config_to_json_text(const RunConfig& cfg) {
  json j;
  j["seed"] = cfg.seed;
  j["out"] = cfg.out_dir;
  j["manifest"] = cfg.manifest;
  j["eval_manifest"] = cfg.eval_manifest;
  if (cfg.synth) j["synth"] = detail::to_json(*cfg.synth);
  j["model"] = detail::to_json(cfg.model);
  j["train"] = detail::to_json(cfg.train);
  j["eval"] = detail::to_json(cfg.eval);
  j["split_seed"] = cfg.split_seed;
  return j.dump(2) + "\n";
}

RunConfig run_config_from_json_text(const std::string& text) {
  json j = json::parse(text);
  RunConfig cfg;
  cfg.seed = j.value("seed", cfg.seed);
  cfg.out_dir = j.value("out", cfg.out_dir);
  cfg.manifest = j.value("manifest", cfg.manifest);
  cfg.eval_manifest = j.value("eval_manifest", cfg.eval_manifest);
  if (j.contains("synth")) cfg.synth = detail::synth_config_from_json(j["synth"]);
  if (j.contains("model")) cfg.model = detail::model_config_from_json(j["model"]);
  if (j.contains("train")) cfg.train = detail::train_config_from_json(j["train"]);
  if (j.contains("eval")) cfg.eval = detail::eval_options_from_json(j["eval"]);
  cfg.split_seed = j.value("split_seed", cfg.split_seed);
  return cfg;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open config: " + path.string());
  std::stringstream ss;
  ss << f.rdbuf();
  try {
    return run_config_from_json_text(ss.str());
  } catch (const json::exception& e) {
    throw std::runtime_error("config parse error in " + path.string() + ": " + e.what());
  }
}

namespace {

std::uint64_t hash_file(const std::filesystem::path& path, std::uint64_t seed) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("fingerprint: cannot open " + path.string());
  char buf[65536];
  std::uint64_t h = seed;
  while (f) {
    f.read(buf, sizeof(buf));
    std::streamsize n = f.gcount();
    if (n > 0) h = hash_bytes(buf, static_cast<std::size_t>(n), h);
  }
  return h;
}

}  // namespace

std::string dataset_fingerprint(const std::filesystem::path& manifest_path) {
  std::uint64_t h = hash_file(manifest_path, 0x9ae16a3b2f90404fULL);
  Dataset ds = load_manifest(manifest_path);
  auto base = manifest_path.parent_path();
  for (const auto& s : ds.samples) {
    if (s.image_path.empty()) continue;
    std::filesystem::path p(s.image_path);
    if (p.is_relative()) p = base / p;
    h = hash_file(p, h);
  }
  char buf[24];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace tsdet
