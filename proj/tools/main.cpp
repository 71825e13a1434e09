// tsdet: synthetic data generation, training, evaluation, attribute-transfer
// runs, and visualization for the two-stream detector, driven by one JSON
// config file plus flag overrides (flag > RUN_SEED env > config file).

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "tsdet/datamodel.hpp"
#include "tsdet/evaluation.hpp"
#include "tsdet/model/checkpoint.hpp"
#include "tsdet/run_config.hpp"
#include "tsdet/synthdata.hpp"
#include "tsdet/training.hpp"
#include "tsdet/version.hpp"
#include "tsdet/visualize.hpp"

namespace {

using nlohmann::json;

struct CommonFlags {
  std::string config;
  std::string variant;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::string checkpoint;
  std::string manifest;
  std::string split;
  double confidence = 0.5;
  std::optional<int> steps;
  std::optional<int> batch_size;
  std::optional<double> lr;
};

std::optional<std::uint64_t> env_seed() {
  const char* v = std::getenv("RUN_SEED");
  if (!v || !*v) return std::nullopt;
  return std::strtoull(v, nullptr, 10);
}

tsdet::RunConfig resolve_config(const CommonFlags& flags, bool require_config) {
  tsdet::RunConfig cfg;
  if (!flags.config.empty()) {
    cfg = tsdet::load_run_config(flags.config);
  } else if (require_config) {
    throw CLI::ValidationError("--config", "a config file is required");
  }
  if (auto env = env_seed()) cfg.seed = *env;
  if (flags.seed) cfg.seed = *flags.seed;
  if (!flags.out.empty()) cfg.out_dir = flags.out;
  if (!flags.manifest.empty()) cfg.manifest = flags.manifest;
  if (!flags.variant.empty()) cfg.model.variant = tsdet::variant_from_name(flags.variant);
  if (flags.steps) cfg.train.max_steps = *flags.steps;
  if (flags.batch_size) cfg.train.batch_size = *flags.batch_size;
  if (flags.lr) cfg.train.learning_rate = *flags.lr;
  cfg.train.seed = cfg.seed;
  if (cfg.split_seed == 0) cfg.split_seed = cfg.seed;
  return cfg;
}

void write_run_manifest(const tsdet::RunConfig& cfg, const std::filesystem::path& run_dir,
                        const std::string& fingerprint) {
  json j;
  j["config"] = json::parse(tsdet::run_config_to_json_text(cfg));
  j["seed"] = cfg.seed;
  j["variant"] = tsdet::variant_name(cfg.model.variant);
  j["dataset_fingerprint"] = fingerprint;
  j["tool_version"] = tsdet::kVersion;
  std::ofstream f(run_dir / "run_manifest.json", std::ios::binary);
  if (!f) throw std::runtime_error("cannot write run manifest");
  f << j.dump(2) << "\n";
}

int cmd_synth(const CommonFlags& flags) {
  tsdet::RunConfig cfg = resolve_config(flags, true);
  if (!cfg.synth) throw std::runtime_error("config has no \"synth\" section");
  tsdet::SynthConfig sc = *cfg.synth;
  if (flags.seed || env_seed()) sc.seed = cfg.seed;
  tsdet::Dataset ds = tsdet::generate(sc);
  std::filesystem::path out = cfg.out_dir;
  auto manifest = tsdet::write_dataset(ds, out);
  std::cout << "wrote " << ds.samples.size() << " images to " << out.string() << "\n";
  std::cout << "manifest: " << manifest.string() << "\n";
  std::cout << "fingerprint: " << tsdet::dataset_fingerprint(manifest) << "\n";
  return 0;
}

int cmd_train(const CommonFlags& flags) {
  tsdet::RunConfig cfg = resolve_config(flags, true);
  if (cfg.manifest.empty()) throw std::runtime_error("config needs a \"manifest\" path");
  tsdet::Dataset ds = tsdet::load_manifest(cfg.manifest);
  std::filesystem::path data_dir = std::filesystem::path(cfg.manifest).parent_path();

  std::optional<tsdet::CategorySplit> split;
  std::vector<tsdet::DetectionSample> train_samples = ds.samples;
  if (!flags.split.empty()) {
    split = tsdet::load_split(flags.split, ds.vocabulary);
    train_samples = tsdet::mask_target_attributes(train_samples, *split);
  }

  std::filesystem::path run_dir = cfg.out_dir;
  std::filesystem::create_directories(run_dir);
  write_run_manifest(cfg, run_dir, tsdet::dataset_fingerprint(cfg.manifest));

  tsdet::DetectionModel model = tsdet::DetectionModel::build(cfg.model, ds.vocabulary, cfg.seed);
  tsdet::TrainOutcome outcome = tsdet::train_model(model, train_samples, cfg.train, run_dir, data_dir);
  std::cout << "trained " << tsdet::variant_name(cfg.model.variant) << " for "
            << cfg.train.max_steps << " steps\n";
  std::cout << "checkpoint: " << outcome.checkpoint_path.string() << "\n";

  if (!cfg.eval_manifest.empty()) {
    tsdet::Dataset eval_ds = tsdet::load_manifest(cfg.eval_manifest);
    std::filesystem::path eval_dir = std::filesystem::path(cfg.eval_manifest).parent_path();
    auto predict = [&](const tsdet::DetectionSample& s) {
      return model.predict(s.load_image(eval_dir), cfg.eval.predict);
    };
    tsdet::EvalReport report =
        tsdet::evaluate_predictor(predict, eval_ds.samples, eval_ds.vocabulary, cfg.eval, split);
    tsdet::save_report(report, run_dir / "report.json");
    std::string table = tsdet::render_report_table(report, eval_ds.vocabulary);
    std::ofstream(run_dir / "report.txt", std::ios::binary) << table;
    std::cout << table;
  }
  return 0;
}

int cmd_eval(const CommonFlags& flags) {
  if (flags.checkpoint.empty()) throw CLI::ValidationError("--checkpoint", "required");
  if (flags.manifest.empty()) throw CLI::ValidationError("--manifest", "required");
  tsdet::RunConfig cfg = resolve_config(flags, false);
  tsdet::DetectionModel model = tsdet::load_checkpoint(flags.checkpoint);
  tsdet::Dataset ds = tsdet::load_manifest(flags.manifest);
  std::filesystem::path data_dir = std::filesystem::path(flags.manifest).parent_path();

  std::optional<tsdet::CategorySplit> split;
  if (!flags.split.empty()) split = tsdet::load_split(flags.split, ds.vocabulary);

  auto predict = [&](const tsdet::DetectionSample& s) {
    return model.predict(s.load_image(data_dir), cfg.eval.predict);
  };
  tsdet::EvalReport report =
      tsdet::evaluate_predictor(predict, ds.samples, ds.vocabulary, cfg.eval, split);

  std::string table = tsdet::render_report_table(report, ds.vocabulary);
  std::cout << table;
  if (!cfg.out_dir.empty()) {
    std::filesystem::create_directories(cfg.out_dir);
    tsdet::save_report(report, std::filesystem::path(cfg.out_dir) / "report.json");
    std::ofstream(std::filesystem::path(cfg.out_dir) / "report.txt", std::ios::binary) << table;
  }
  return 0;
}

int cmd_transfer(const CommonFlags& flags) {
  tsdet::RunConfig cfg = resolve_config(flags, true);
  if (cfg.manifest.empty() || cfg.eval_manifest.empty()) {
    throw std::runtime_error("transfer needs \"manifest\" (train) and \"eval_manifest\" (test)");
  }
  tsdet::Dataset train_ds = tsdet::load_manifest(cfg.manifest);
  tsdet::Dataset test_ds = tsdet::load_manifest(cfg.eval_manifest);
  std::filesystem::path train_dir = std::filesystem::path(cfg.manifest).parent_path();
  std::filesystem::path test_dir = std::filesystem::path(cfg.eval_manifest).parent_path();

  std::filesystem::path out = cfg.out_dir;
  std::filesystem::create_directories(out);
  write_run_manifest(cfg, out, tsdet::dataset_fingerprint(cfg.manifest));

  // The train samples and the predictor resolve images against different
  // directories; pre-load pixels so one data_dir suffices.
  for (auto& s : train_ds.samples) {
    if (!s.pixels) s.pixels = std::make_shared<tsdet::ImageU8>(s.load_image(train_dir));
  }
  for (auto& s : test_ds.samples) {
    if (!s.pixels) s.pixels = std::make_shared<tsdet::ImageU8>(s.load_image(test_dir));
  }

  tsdet::TransferTrainFn train_fn = tsdet::standard_transfer_train_fn(
      cfg.model, cfg.train, train_ds.vocabulary, cfg.seed, out, {}, cfg.eval.predict);
  tsdet::TransferOutcome outcome = tsdet::run_transfer_protocol(
      train_fn, train_ds.samples, test_ds.samples, train_ds.vocabulary, cfg.split_seed, cfg.eval);

  tsdet::save_report(outcome.run_a.report, out / "run_a" / "report.json");
  tsdet::save_report(outcome.run_b.report, out / "run_b" / "report.json");
  tsdet::EvalReport averaged;
  averaged.n_images = outcome.run_a.report.n_images + outcome.run_b.report.n_images;
  averaged.overall =
      tsdet::average_metrics(outcome.run_a.report.overall, outcome.run_b.report.overall);
  averaged.target = outcome.averaged_target;
  averaged.reference = outcome.averaged_reference;
  tsdet::save_report(averaged, out / "report_averaged.json");

  std::string table = tsdet::render_report_table(averaged, train_ds.vocabulary);
  std::ofstream(out / "report_averaged.txt", std::ios::binary) << table;
  std::cout << "averaged over two mirrored runs:\n" << table;
  return 0;
}

int cmd_visualize(const CommonFlags& flags) {
  if (flags.checkpoint.empty()) throw CLI::ValidationError("--checkpoint", "required");
  if (flags.manifest.empty()) throw CLI::ValidationError("--manifest", "required");
  tsdet::RunConfig cfg = resolve_config(flags, false);
  tsdet::DetectionModel model = tsdet::load_checkpoint(flags.checkpoint);
  tsdet::Dataset ds = tsdet::load_manifest(flags.manifest);
  std::filesystem::path data_dir = std::filesystem::path(flags.manifest).parent_path();

  std::optional<tsdet::CategorySplit> split;
  if (!flags.split.empty()) split = tsdet::load_split(flags.split, ds.vocabulary);

  std::filesystem::path out = cfg.out_dir;
  std::filesystem::create_directories(out);
  for (const auto& s : ds.samples) {
    tsdet::ImageU8 img = s.load_image(data_dir);
    auto dets = model.predict(img, cfg.eval.predict);
    tsdet::draw_detections(img, dets, ds.vocabulary, flags.confidence,
                           split ? &*split : nullptr);
    tsdet::write_ppm(img, out / (s.image_id + ".ppm"));
  }
  std::cout << "wrote " << ds.samples.size() << " annotated images to " << out.string() << "\n";
  return 0;
}

void add_common_flags(CLI::App* cmd, CommonFlags& flags) {
  cmd->add_option("--config", flags.config, "JSON config file");
  cmd->add_option("--variant", flags.variant, "model variant (overrides config)");
  cmd->add_option("--seed", flags.seed, "seed (overrides RUN_SEED and config)");
  cmd->add_option("--out", flags.out, "output directory");
  cmd->add_option("--checkpoint", flags.checkpoint, "checkpoint file");
  cmd->add_option("--manifest", flags.manifest, "dataset manifest");
  cmd->add_option("--split", flags.split, "category split file");
  cmd->add_option("--confidence", flags.confidence, "confidence threshold");
  cmd->add_option("--steps", flags.steps, "training steps (overrides config)");
  cmd->add_option("--batch-size", flags.batch_size, "batch size (overrides config)");
  cmd->add_option("--lr", flags.lr, "learning rate (overrides config)");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"joint object detection and color/material recognition"};
  app.set_version_flag("--version", tsdet::kVersion);
  app.require_subcommand(1);

  CommonFlags flags;
  struct Sub {
    const char* name;
    const char* help;
    int (*fn)(const CommonFlags&);
  };
  const Sub subs[] = {
      {"synth", "generate a synthetic dataset", cmd_synth},
      {"train", "train one model variant", cmd_train},
      {"eval", "evaluate a checkpoint on a manifest", cmd_eval},
      {"transfer", "run the mirrored two-run attribute-transfer protocol", cmd_transfer},
      {"visualize", "write annotated prediction images", cmd_visualize},
  };
  for (const auto& sub : subs) {
    CLI::App* cmd = app.add_subcommand(sub.name, sub.help);
    add_common_flags(cmd, flags);
    cmd->callback([&flags, &sub]() {
      int rc = sub.fn(flags);
      if (rc != 0) throw CLI::RuntimeError(rc);
    });
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::RuntimeError& e) {
    return e.get_exit_code();
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;  // usage error
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
