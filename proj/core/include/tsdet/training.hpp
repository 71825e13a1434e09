#pragma once

#include <filesystem>
#include <functional>
#include <optional>
#include <vector>

#include "tsdet/datamodel.hpp"
#include "tsdet/evaluation.hpp"
#include "tsdet/losses.hpp"
#include "tsdet/model/detector.hpp"
#include "tsdet/targets.hpp"

namespace tsdet {

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct TrainConfig {
  double learning_rate = 5e-5;  // paper preset; desk presets override
  int batch_size = 12;          // paper preset
  int max_steps = 1000;
  std::uint64_t seed = 0;
  int eval_interval = 0;        // 0 = no periodic eval
  int checkpoint_interval = 0;  // 0 = final checkpoint only
  AdamConfig adam;
  std::optional<double> grad_clip;  // global norm bound
  bool hflip = true;
  AnchorMatchConfig rpn_targets;
  RoiSampleConfig roi_targets;
  int num_threads = 0;  // 0 = min(batch_size, hardware)

  void validate() const;
};

// Adam over a fixed parameter list; state is indexed by list position.
class Adam {
 public:
  Adam(std::vector<nn::Var> params, double learning_rate, const AdamConfig& cfg);
  void step(const std::vector<nn::Tensor>& grads);
  double learning_rate() const { return lr_; }

 private:
  std::vector<nn::Var> params_;
  double lr_;
  AdamConfig cfg_;
  std::int64_t t_ = 0;
  std::vector<nn::Tensor> m_, v_;
};

// Per-channel pixel mean/std over the training images (in [0,1] units).
std::pair<std::array<double, 3>, std::array<double, 3>> compute_normalization(
    const std::vector<DetectionSample>& samples, const std::filesystem::path& data_dir);

// One image's loss graph plus bookkeeping, shared by the trainer and the
// gradient audits.
struct ImageLosses {
  LossBreakdown values;
  nn::Var total;
  nn::Var attr_only;  // color+material (or unified) term alone
  // (category, attribute) pairs that contributed loss rows; attribute is
  // 0 = color, 1 = material. Used to audit the transfer masking.
  std::vector<std::pair<int, int>> attr_rows;
};
ImageLosses forward_losses(const DetectionModel& model, const ImageU8& img,
                           const std::vector<ObjectAnnotation>& annotations,
                           const TrainConfig& cfg, const Rng& rng);

struct TrainOutcome {
  std::filesystem::path checkpoint_path;  // empty when run_dir is empty
  std::vector<LossBreakdown> history;     // one entry per step
  // Attribute loss rows that reached a loss, by category.
  std::vector<std::int64_t> color_rows_per_category;
  std::vector<std::int64_t> material_rows_per_category;
};

// Deterministic training loop. Samples must already be masked when running
// the transfer protocol. If run_dir is nonempty it receives metrics.jsonl and
// step_{N}.ckpt checkpoints; data_dir resolves relative image paths. Throws
// on a non-finite loss, naming the step and component.
TrainOutcome train_model(DetectionModel& model, const std::vector<DetectionSample>& samples,
                         const TrainConfig& cfg, const std::filesystem::path& run_dir = {},
                         const std::filesystem::path& data_dir = {});

// Builds the per-run trainer used by the transfer protocol: each run
// constructs a fresh model (same init seed), trains it on the masked samples,
// and returns its predictor. Run directories run_a/ and run_b/ are created
// under out_dir when it is nonempty.
TransferTrainFn standard_transfer_train_fn(const ModelConfig& model_cfg,
                                           const TrainConfig& train_cfg,
                                           const Vocabulary& vocabulary, std::uint64_t init_seed,
                                           const std::filesystem::path& out_dir = {},
                                           const std::filesystem::path& data_dir = {},
                                           const PredictOptions& predict_opts = {});

struct GradientBlockAudit {
  double max_abs_object_grad = 0.0;
  std::int64_t params_checked = 0;
  bool blocked = false;  // max_abs_object_grad == 0
};

// Backpropagates the attribute loss alone on a batch and reports the largest
// object-stream parameter gradient. Only meaningful for the two-stream
// wirings; throws std::invalid_argument otherwise.
GradientBlockAudit audit_gradient_block(const DetectionModel& model,
                                        const std::vector<DetectionSample>& batch,
                                        const TrainConfig& cfg,
                                        const std::filesystem::path& data_dir = {});

}  // namespace tsdet
