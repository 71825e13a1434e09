#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "tsdet/datamodel.hpp"
#include "tsdet/model/config.hpp"

namespace tsdet {

enum class AttributeKind { Color, Material };

struct EvalOptions {
  double iou_threshold = 0.5;
  double score_threshold = 0.5;      // detection confidence floor for attribute recall
  bool category_aware_recall = true; // recall requires the correct category prediction
  PredictOptions predict;
  int num_threads = 0;               // parallel predict; 0 = hardware
};

// Metrics over one category subset. Percent units; recalls are null when no
// ground-truth object carries that attribute label.
struct MetricSet {
  double map = 0.0;
  std::optional<double> color_recall;
  std::optional<double> material_recall;
  std::vector<std::optional<double>> per_category_ap;  // null when the category has no gt
  std::vector<int> gt_per_category;
  int color_gt = 0;
  int material_gt = 0;
};

struct EvalReport {
  MetricSet overall;
  std::optional<MetricSet> reference;
  std::optional<MetricSet> target;
  int n_images = 0;
};

// VOC-style mAP@iou with all-points interpolation. Detections declare the
// category by their score argmax and rank by that score; greedy matching
// allows one detection per ground-truth box. When `category_subset` is given,
// only those categories enter (detections of other categories are ignored).
struct MapResult {
  double map = 0.0;  // percent, mean over categories with >= 1 gt instance
  std::vector<std::optional<double>> per_category_ap;
  std::vector<int> gt_per_category;
};
MapResult compute_map(const std::vector<std::vector<Detection>>& detections,
                      const std::vector<DetectionSample>& ground_truth,
                      const Vocabulary& vocabulary, double iou_threshold = 0.5,
                      const std::vector<int>* category_subset = nullptr);

// Fraction of attribute-labeled ground-truth objects matched by a detection
// above score_threshold with IoU >= threshold, the correct category (unless
// category-agnostic), and the correct attribute argmax. Detections greedily
// claim at most one ground-truth object each, in descending score order.
// Returns null when no ground truth carries the label; *denominator_out (when
// non-null) receives the count either way.
std::optional<double> compute_attribute_recall(
    const std::vector<std::vector<Detection>>& detections,
    const std::vector<DetectionSample>& ground_truth, AttributeKind attribute,
    double iou_threshold = 0.5, double score_threshold = 0.5, bool category_aware = true,
    const std::vector<int>* category_subset = nullptr, int* denominator_out = nullptr);

// Full report over precomputed detections; subgroup metrics when a split is
// given.
EvalReport evaluate_detections(const std::vector<std::vector<Detection>>& detections,
                               const std::vector<DetectionSample>& ground_truth,
                               const Vocabulary& vocabulary, const EvalOptions& opts,
                               const std::optional<CategorySplit>& split = std::nullopt);

using PredictFn = std::function<std::vector<Detection>(const DetectionSample&)>;

// Runs the predictor over every sample (parallel, order-preserving).
std::vector<std::vector<Detection>> predict_dataset(const PredictFn& predict,
                                                    const std::vector<DetectionSample>& samples,
                                                    int num_threads = 0);

EvalReport evaluate_predictor(const PredictFn& predict,
                              const std::vector<DetectionSample>& samples,
                              const Vocabulary& vocabulary, const EvalOptions& opts,
                              const std::optional<CategorySplit>& split = std::nullopt);

// ---- transfer protocol ---------------------------------------------------------

struct TransferRun {
  CategorySplit split;
  EvalReport report;
};

struct TransferOutcome {
  TransferRun run_a;
  TransferRun run_b;
  // Arithmetic means over the two runs' target/reference subgroup metrics.
  MetricSet averaged_target;
  MetricSet averaged_reference;
};

// Trains on the masked dataset and returns a predictor for the test set.
using TransferTrainFn =
    std::function<PredictFn(const std::vector<DetectionSample>& masked_train,
                            const CategorySplit& split, int run_index)>;

// Mirrored two-run protocol: builds the splits, masks target attributes,
// trains each run via train_fn, evaluates on the test set, and averages the
// two runs' subgroup metrics.
TransferOutcome run_transfer_protocol(const TransferTrainFn& train_fn,
                                      const std::vector<DetectionSample>& train_samples,
                                      const std::vector<DetectionSample>& test_samples,
                                      const Vocabulary& vocabulary, std::uint64_t seed,
                                      const EvalOptions& opts);

MetricSet average_metrics(const MetricSet& a, const MetricSet& b);

// ---- report I/O -----------------------------------------------------------------

std::string render_report_table(const EvalReport& report, const Vocabulary& vocabulary);
void save_report(const EvalReport& report, const std::filesystem::path& path);
EvalReport load_report(const std::filesystem::path& path);

}  // namespace tsdet
