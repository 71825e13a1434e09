#include "tsdet/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <future>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <thread>

#include <nlohmann/json.hpp>

namespace tsdet {

namespace {

bool in_subset(int category, const std::vector<int>* subset) {
  if (!subset) return true;
  return std::find(subset->begin(), subset->end(), category) != subset->end();
}

struct RankedDetection {
  int image;
  int index;  // within the image
  double score;
};

// Flattens detections above a score floor, sorted by descending score with
// (image, index) as the deterministic tie-break.
std::vector<RankedDetection> rank_detections(const std::vector<std::vector<Detection>>& dets,
                                             double min_score) {
  std::vector<RankedDetection> out;
  for (std::size_t img = 0; img < dets.size(); ++img) {
    for (std::size_t i = 0; i < dets[img].size(); ++i) {
      double s = dets[img][i].confidence();
      if (s < min_score) continue;
      out.push_back({static_cast<int>(img), static_cast<int>(i), s});
    }
  }
  std::stable_sort(out.begin(), out.end(),
                   [](const RankedDetection& a, const RankedDetection& b) { return a.score > b.score; });
  return out;
}

}  // namespace

MapResult compute_map(const std::vector<std::vector<Detection>>& detections,
                      const std::vector<DetectionSample>& ground_truth,
                      const Vocabulary& vocabulary, double iou_threshold,
                      const std::vector<int>* category_subset) {
  if (detections.size() != ground_truth.size()) {
    throw std::invalid_argument("compute_map: detection/ground-truth image count mismatch");
  }
  const int n_cat = static_cast<int>(vocabulary.categories.size());
  MapResult out;
  out.per_category_ap.assign(static_cast<std::size_t>(n_cat), std::nullopt);
  out.gt_per_category.assign(static_cast<std::size_t>(n_cat), 0);

  for (const auto& s : ground_truth) {
    for (const auto& a : s.annotations) out.gt_per_category[static_cast<std::size_t>(a.category)]++;
  }

  std::vector<RankedDetection> ranked = rank_detections(detections, 0.0);

  double ap_sum = 0.0;
  int ap_count = 0;
  for (int c = 0; c < n_cat; ++c) {
    if (!in_subset(c, category_subset)) continue;
    int n_gt = out.gt_per_category[static_cast<std::size_t>(c)];
    if (n_gt == 0) continue;

    // Greedy matching in score order; one detection per ground-truth box.
    std::vector<std::vector<bool>> taken(ground_truth.size());
    for (std::size_t i = 0; i < ground_truth.size(); ++i) {
      taken[i].assign(ground_truth[i].annotations.size(), false);
    }
    std::vector<double> precision, recall;
    int tp = 0, seen = 0;
    for (const auto& rd : ranked) {
      const Detection& det = detections[static_cast<std::size_t>(rd.image)][static_cast<std::size_t>(rd.index)];
      if (det.category() != c) continue;
      ++seen;
      const auto& anns = ground_truth[static_cast<std::size_t>(rd.image)].annotations;
      double best_iou = 0.0;
      int best = -1;
      for (std::size_t j = 0; j < anns.size(); ++j) {
        if (anns[j].category != c || taken[static_cast<std::size_t>(rd.image)][j]) continue;
        double v = iou(det.box, anns[j].box);
        if (v > best_iou) {
          best_iou = v;
          best = static_cast<int>(j);
        }
      }
      if (best >= 0 && best_iou >= iou_threshold) {
        taken[static_cast<std::size_t>(rd.image)][static_cast<std::size_t>(best)] = true;
        ++tp;
      }
      precision.push_back(static_cast<double>(tp) / seen);
      recall.push_back(static_cast<double>(tp) / n_gt);
    }

    // All-points interpolation: integrate the precision envelope over recall.
    double ap = 0.0;
    double env = 0.0;
    double prev_recall = recall.empty() ? 0.0 : recall.back();
    (void)prev_recall;
    double last_r = 0.0;
    // Walk from the end to build max-precision-at-recall>=r, then integrate.
    std::vector<double> envelope(precision.size());
    for (int i = static_cast<int>(precision.size()) - 1; i >= 0; --i) {
      env = std::max(env, precision[static_cast<std::size_t>(i)]);
      envelope[static_cast<std::size_t>(i)] = env;
    }
    last_r = 0.0;
    for (std::size_t i = 0; i < precision.size(); ++i) {
      if (recall[i] > last_r) {
        ap += (recall[i] - last_r) * envelope[i];
        last_r = recall[i];
      }
    }
    out.per_category_ap[static_cast<std::size_t>(c)] = ap * 100.0;
    ap_sum += ap * 100.0;
    ++ap_count;
  }
  out.map = ap_count > 0 ? ap_sum / ap_count : 0.0;
  return out;
}

std::optional<double> compute_attribute_recall(const std::vector<std::vector<Detection>>& detections,
                                               const std::vector<DetectionSample>& ground_truth,
                                               AttributeKind attribute, double iou_threshold,
                                               double score_threshold, bool category_aware,
                                               const std::vector<int>* category_subset,
                                               int* denominator_out) {
  if (detections.size() != ground_truth.size()) {
    throw std::invalid_argument("compute_attribute_recall: image count mismatch");
  }
  auto label_of = [&](const ObjectAnnotation& a) {
    return attribute == AttributeKind::Color ? a.color : a.material;
  };

  int denominator = 0;
  int recalled = 0;
  for (std::size_t img = 0; img < ground_truth.size(); ++img) {
    const auto& anns = ground_truth[img].annotations;
    std::vector<bool> taken(anns.size(), false);

    std::vector<int> order(detections[img].size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
      return detections[img][static_cast<std::size_t>(a)].confidence() >
             detections[img][static_cast<std::size_t>(b)].confidence();
    });

    for (int di : order) {
      const Detection& det = detections[img][static_cast<std::size_t>(di)];
      if (det.confidence() < score_threshold) continue;
      double best_iou = 0.0;
      int best = -1;
      for (std::size_t j = 0; j < anns.size(); ++j) {
        if (taken[j]) continue;
        if (!in_subset(anns[j].category, category_subset)) continue;
        if (category_aware && det.category() != anns[j].category) continue;
        double v = iou(det.box, anns[j].box);
        if (v > best_iou) {
          best_iou = v;
          best = static_cast<int>(j);
        }
      }
      if (best < 0 || best_iou < iou_threshold) continue;
      taken[static_cast<std::size_t>(best)] = true;
      const auto gt_label = label_of(anns[static_cast<std::size_t>(best)]);
      if (!gt_label) continue;
      int predicted = attribute == AttributeKind::Color ? det.color() : det.material();
      if (predicted == *gt_label) ++recalled;
    }

    for (const auto& a : anns) {
      if (in_subset(a.category, category_subset) && label_of(a)) ++denominator;
    }
  }

  if (denominator_out) *denominator_out = denominator;
  if (denominator == 0) return std::nullopt;
  return 100.0 * recalled / denominator;
}

namespace {

MetricSet metrics_for_subset(const std::vector<std::vector<Detection>>& dets,
                             const std::vector<DetectionSample>& gt, const Vocabulary& vocab,
                             const EvalOptions& opts, const std::vector<int>* subset) {
  MetricSet m;
  MapResult mr = compute_map(dets, gt, vocab, opts.iou_threshold, subset);
  m.map = mr.map;
  m.per_category_ap = mr.per_category_ap;
  m.gt_per_category = mr.gt_per_category;
  if (subset) {
    // Zero out the categories outside the subset in the count table.
    for (int c = 0; c < static_cast<int>(m.gt_per_category.size()); ++c) {
      if (!in_subset(c, subset)) {
        m.gt_per_category[static_cast<std::size_t>(c)] = 0;
        m.per_category_ap[static_cast<std::size_t>(c)] = std::nullopt;
      }
    }
  }
  if (!vocab.colors.empty()) {
    m.color_recall = compute_attribute_recall(dets, gt, AttributeKind::Color, opts.iou_threshold,
                                              opts.score_threshold, opts.category_aware_recall,
                                              subset, &m.color_gt);
  }
  if (!vocab.materials.empty()) {
    m.material_recall = compute_attribute_recall(dets, gt, AttributeKind::Material,
                                                 opts.iou_threshold, opts.score_threshold,
                                                 opts.category_aware_recall, subset, &m.material_gt);
  }
  return m;
}

}  // namespace

EvalReport evaluate_detections(const std::vector<std::vector<Detection>>& detections,
                               const std::vector<DetectionSample>& ground_truth,
                               const Vocabulary& vocabulary, const EvalOptions& opts,
                               const std::optional<CategorySplit>& split) {
  EvalReport report;
  report.n_images = static_cast<int>(ground_truth.size());
  report.overall = metrics_for_subset(detections, ground_truth, vocabulary, opts, nullptr);
  if (split) {
    split->validate(static_cast<int>(vocabulary.categories.size()));
    report.reference = metrics_for_subset(detections, ground_truth, vocabulary, opts, &split->reference);
    report.target = metrics_for_subset(detections, ground_truth, vocabulary, opts, &split->target);
  }
  return report;
}

std::vector<std::vector<Detection>> predict_dataset(const PredictFn& predict,
                                                    const std::vector<DetectionSample>& samples,
                                                    int num_threads) {
  std::vector<std::vector<Detection>> out(samples.size());
  int threads = num_threads > 0 ? num_threads
                                : static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
  if (threads <= 1 || samples.size() <= 1) {
    for (std::size_t i = 0; i < samples.size(); ++i) out[i] = predict(samples[i]);
    return out;
  }
  std::atomic<std::size_t> next{0};
  auto worker = [&]() {
    for (;;) {
      std::size_t i = next.fetch_add(1);
      if (i >= samples.size()) return;
      out[i] = predict(samples[i]);
    }
  };
  std::vector<std::thread> pool;
  for (int t = 0; t < threads; ++t) pool.emplace_back(worker);
  for (auto& t : pool) t.join();
  return out;
}

EvalReport evaluate_predictor(const PredictFn& predict, const std::vector<DetectionSample>& samples,
                              const Vocabulary& vocabulary, const EvalOptions& opts,
                              const std::optional<CategorySplit>& split) {
  auto dets = predict_dataset(predict, samples, opts.num_threads);
  return evaluate_detections(dets, samples, vocabulary, opts, split);
}

MetricSet average_metrics(const MetricSet& a, const MetricSet& b) {
  MetricSet out;
  out.map = 0.5 * (a.map + b.map);
  auto avg_opt = [](const std::optional<double>& x, const std::optional<double>& y) -> std::optional<double> {
    if (x && y) return 0.5 * (*x + *y);
    if (x) return x;
    return y;
  };
  out.color_recall = avg_opt(a.color_recall, b.color_recall);
  out.material_recall = avg_opt(a.material_recall, b.material_recall);
  std::size_t n = std::max(a.per_category_ap.size(), b.per_category_ap.size());
  out.per_category_ap.resize(n);
  out.gt_per_category.resize(n, 0);
  for (std::size_t i = 0; i < n; ++i) {
    std::optional<double> x = i < a.per_category_ap.size() ? a.per_category_ap[i] : std::nullopt;
    std::optional<double> y = i < b.per_category_ap.size() ? b.per_category_ap[i] : std::nullopt;
    out.per_category_ap[i] = avg_opt(x, y);
    int gx = i < a.gt_per_category.size() ? a.gt_per_category[i] : 0;
    int gy = i < b.gt_per_category.size() ? b.gt_per_category[i] : 0;
    out.gt_per_category[i] = gx + gy;
  }
  out.color_gt = a.color_gt + b.color_gt;
  out.material_gt = a.material_gt + b.material_gt;
  return out;
}

TransferOutcome run_transfer_protocol(const TransferTrainFn& train_fn,
                                      const std::vector<DetectionSample>& train_samples,
                                      const std::vector<DetectionSample>& test_samples,
                                      const Vocabulary& vocabulary, std::uint64_t seed,
                                      const EvalOptions& opts) {
  auto [split_a, split_b] = make_split(vocabulary, seed);
  TransferOutcome out;

  auto run_one = [&](const CategorySplit& split, int run_index) {
    TransferRun run;
    run.split = split;
    auto masked = mask_target_attributes(train_samples, split);
    PredictFn predict = train_fn(masked, split, run_index);
    run.report = evaluate_predictor(predict, test_samples, vocabulary, opts, split);
    return run;
  };
  out.run_a = run_one(split_a, 0);
  out.run_b = run_one(split_b, 1);

  out.averaged_target = average_metrics(*out.run_a.report.target, *out.run_b.report.target);
  out.averaged_reference = average_metrics(*out.run_a.report.reference, *out.run_b.report.reference);
  return out;
}

// ---- report I/O ------------------------------------------------------------------

namespace {

using nlohmann::json;

json metric_to_json(const MetricSet& m) {
  json j;
  j["map_50"] = m.map;
  j["color_recall_50"] = m.color_recall ? json(*m.color_recall) : json(nullptr);
  j["material_recall_50"] = m.material_recall ? json(*m.material_recall) : json(nullptr);
  j["color_gt"] = m.color_gt;
  j["material_gt"] = m.material_gt;
  json aps = json::array();
  for (const auto& ap : m.per_category_ap) aps.push_back(ap ? json(*ap) : json(nullptr));
  j["per_category_ap"] = aps;
  j["gt_per_category"] = m.gt_per_category;
  return j;
}

MetricSet metric_from_json(const json& j) {
  MetricSet m;
  m.map = j.at("map_50").get<double>();
  if (!j.at("color_recall_50").is_null()) m.color_recall = j["color_recall_50"].get<double>();
  if (!j.at("material_recall_50").is_null()) m.material_recall = j["material_recall_50"].get<double>();
  m.color_gt = j.value("color_gt", 0);
  m.material_gt = j.value("material_gt", 0);
  for (const auto& ap : j.at("per_category_ap")) {
    m.per_category_ap.push_back(ap.is_null() ? std::nullopt : std::optional<double>(ap.get<double>()));
  }
  m.gt_per_category = j.value("gt_per_category", std::vector<int>{});
  return m;
}

}  // namespace

void save_report(const EvalReport& report, const std::filesystem::path& path) {
  json j;
  j["n_images"] = report.n_images;
  j["overall"] = metric_to_json(report.overall);
  if (report.reference) j["reference"] = metric_to_json(*report.reference);
  if (report.target) j["target"] = metric_to_json(*report.target);
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write report: " + path.string());
  f << j.dump(2) << "\n";
}

EvalReport load_report(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open report: " + path.string());
  json j = json::parse(f);
  EvalReport report;
  report.n_images = j.value("n_images", 0);
  report.overall = metric_from_json(j.at("overall"));
  if (j.contains("reference")) report.reference = metric_from_json(j["reference"]);
  if (j.contains("target")) report.target = metric_from_json(j["target"]);
  return report;
}

namespace {

std::string fmt_metric(const std::optional<double>& v) {
  char buf[32];
  if (!v) return "    -";
  std::snprintf(buf, sizeof(buf), "%5.2f", *v);
  return buf;
}

void table_row(std::ostringstream& os, const std::string& group, const MetricSet& m) {
  os << "  " << group;
  for (std::size_t i = group.size(); i < 12; ++i) os << ' ';
  os << "| " << fmt_metric(m.map) << "          | " << fmt_metric(m.color_recall)
     << "            | " << fmt_metric(m.material_recall) << "\n";
}

}  // namespace

std::string render_report_table(const EvalReport& report, const Vocabulary& vocabulary) {
  std::ostringstream os;
  os << "  Group       | Object mAP @.5 | Color Recall @.5 | Material Recall @.5\n";
  os << "  ------------+----------------+------------------+--------------------\n";
  if (report.target) table_row(os, "Target", *report.target);
  if (report.reference) table_row(os, "Reference", *report.reference);
  table_row(os, "Overall", report.overall);
  os << "\n  Per-category AP @.5 (" << report.n_images << " images):\n";
  for (std::size_t c = 0; c < vocabulary.categories.size(); ++c) {
    os << "    " << vocabulary.categories[c];
    for (std::size_t i = vocabulary.categories[c].size(); i < 12; ++i) os << ' ';
    os << fmt_metric(c < report.overall.per_category_ap.size() ? report.overall.per_category_ap[c]
                                                               : std::nullopt)
       << "  (gt " << (c < report.overall.gt_per_category.size() ? report.overall.gt_per_category[c] : 0)
       << ")\n";
  }
  return os.str();
}

}  // namespace tsdet
