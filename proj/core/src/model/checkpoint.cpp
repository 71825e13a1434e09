#include "tsdet/model/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <stdexcept>

#include "../config_json.hpp"
#include "tsdet/version.hpp"

namespace tsdet {

namespace {
constexpr char kMagic[8] = {'T', 'S', 'D', 'E', 'T', 'C', 'K', 'P'};
}

void save_checkpoint(const DetectionModel& model, const std::filesystem::path& path) {
  using nlohmann::json;
  json header;
  header["format_version"] = 1;
  header["tool_version"] = kVersion;
  header["variant"] = variant_name(model.config().variant);
  header["vocabulary"] = detail::to_json(model.vocabulary());
  header["model_config"] = detail::to_json(model.config());
  header["init_seed"] = model.params().init_seed();
  json params = json::array();
  for (const auto& p : model.params().all()) {
    params.push_back({{"name", p->name}, {"shape", p->value.shape}});
  }
  header["params"] = params;
  std::string htext = header.dump();

  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write checkpoint: " + path.string());
  f.write(kMagic, sizeof(kMagic));
  std::uint64_t hlen = htext.size();
  f.write(reinterpret_cast<const char*>(&hlen), sizeof(hlen));
  f.write(htext.data(), static_cast<std::streamsize>(htext.size()));
  for (const auto& p : model.params().all()) {
    f.write(reinterpret_cast<const char*>(p->value.data.data()),
            static_cast<std::streamsize>(p->value.data.size() * sizeof(double)));
  }
  if (!f) throw std::runtime_error("checkpoint write failed: " + path.string());
}

DetectionModel load_checkpoint(const std::filesystem::path& path) {
  using nlohmann::json;
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open checkpoint: " + path.string());
  char magic[8];
  f.read(magic, sizeof(magic));
  if (f.gcount() != sizeof(magic) || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
    throw std::runtime_error("not a checkpoint file: " + path.string());
  }
  std::uint64_t hlen = 0;
  f.read(reinterpret_cast<char*>(&hlen), sizeof(hlen));
  std::string htext(hlen, '\0');
  f.read(htext.data(), static_cast<std::streamsize>(hlen));
  json header = json::parse(htext);

  Vocabulary vocab = detail::vocabulary_from_json(header.at("vocabulary"));
  ModelConfig config = detail::model_config_from_json(header.at("model_config"));
  std::uint64_t init_seed = header.value("init_seed", std::uint64_t{0});
  DetectionModel model = DetectionModel::build(config, vocab, init_seed);

  for (const auto& pj : header.at("params")) {
    std::string name = pj.at("name").get<std::string>();
    auto shape = pj.at("shape").get<std::vector<std::int64_t>>();
    nn::Var p = model.params().find(name);
    if (!p) throw std::runtime_error("checkpoint parameter not in model: " + name);
    if (p->value.shape != shape) throw std::runtime_error("checkpoint shape mismatch for " + name);
    f.read(reinterpret_cast<char*>(p->value.data.data()),
           static_cast<std::streamsize>(p->value.data.size() * sizeof(double)));
    if (f.gcount() != static_cast<std::streamsize>(p->value.data.size() * sizeof(double))) {
      throw std::runtime_error("truncated checkpoint: " + path.string());
    }
  }
  return model;
}

}  // namespace tsdet
