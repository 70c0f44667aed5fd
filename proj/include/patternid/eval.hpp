// Copyright (c) 2026 the patternid authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "patternid/annotations.hpp"
#include "patternid/detection.hpp"
#include "patternid/errors.hpp"
#include "patternid/logreg.hpp"
#include "patternid/version.hpp"

namespace patternid {

/// Per-class detection average precision with its raw precision-recall
/// points (recall nondecreasing).
struct APResult {
  std::string cls;
  double ap = 0;
  std::vector<std::pair<double, double>> precision_recall;  // (recall, prec)
  int n_gt = 0;
};

/// VOC-style AP: detections ranked by score across all images, greedily
/// matched to unmatched same-class ground truth at the IoU threshold;
/// duplicates count as false positives. AP is the area under the precision
/// envelope over recall (all-points interpolation).
inline APResult average_precision(const std::vector<DetectorOutput>& outputs,
                                  const DatasetManifest& ground_truth,
                                  const std::string& cls,
                                  double match_iou = 0.5) {
  std::map<std::string, std::vector<LabeledBox>> gt_boxes;
  int n_gt = 0;
  for (const ImageRecord& rec : ground_truth.records)
    for (const LabeledBox& box : rec.boxes)
      if (box.label == cls) {
        gt_boxes[rec.image_id].push_back(box);
        ++n_gt;
      }
  if (n_gt == 0)
    throw InvalidArgument("no ground truth for class '" + cls +
                          "': AP undefined");

  struct Scored {
    std::string image_id;
    Detection det;
  };
  std::vector<Scored> all;
  for (const DetectorOutput& out : outputs)
    for (const Detection& d : out.detections)
      if (d.box.label == cls) all.push_back({out.image_id, d});
  std::sort(all.begin(), all.end(), [](const Scored& a, const Scored& b) {
    if (a.det.score != b.det.score) return a.det.score > b.det.score;
    if (a.image_id != b.image_id) return a.image_id < b.image_id;
    return box_coords_less(a.det.box, b.det.box);
  });

  std::map<std::string, std::vector<bool>> matched;
  for (const auto& [image_id, boxes] : gt_boxes)
    matched[image_id].assign(boxes.size(), false);

  APResult result;
  result.cls = cls;
  result.n_gt = n_gt;
  int tp = 0, fp = 0;
  for (const Scored& s : all) {
    double best_iou = 0;
    std::size_t best = 0;
    bool found = false;
    auto it = gt_boxes.find(s.image_id);
    if (it != gt_boxes.end()) {
      const auto& boxes = it->second;
      auto& flags = matched[s.image_id];
      for (std::size_t i = 0; i < boxes.size(); ++i) {
        if (flags[i]) continue;
        const double v = iou(s.det.box, boxes[i]);
        if (v > best_iou) {
          best_iou = v;
          best = i;
          found = true;
        }
      }
      if (found && best_iou >= match_iou) {
        flags[best] = true;
        ++tp;
      } else {
        ++fp;
      }
    } else {
      ++fp;
    }
    result.precision_recall.emplace_back(
        static_cast<double>(tp) / n_gt,
        static_cast<double>(tp) / (tp + fp));
  }

  // all-points interpolation over the precision envelope
  const std::size_t m = result.precision_recall.size();
  std::vector<double> recall(m + 2), precision(m + 2);
  recall[0] = 0;
  precision[0] = m > 0 ? result.precision_recall.front().second : 0;
  for (std::size_t i = 0; i < m; ++i) {
    recall[i + 1] = result.precision_recall[i].first;
    precision[i + 1] = result.precision_recall[i].second;
  }
  recall[m + 1] = recall[m];
  precision[m + 1] = 0;
  for (std::size_t i = m + 1; i-- > 0;)
    precision[i] = std::max(precision[i], precision[i + 1]);
  double ap = 0;
  for (std::size_t i = 0; i + 1 < recall.size(); ++i)
    ap += (recall[i + 1] - recall[i]) * precision[i + 1];
  result.ap = ap;
  return result;
}

/// Mean over a class's ground-truth boxes of the best IoU achieved by any
/// same-class detection in the same image (0 when none overlaps). This is
/// a localization-quality summary, not AP.
inline double mean_best_iou(const std::vector<DetectorOutput>& outputs,
                            const DatasetManifest& ground_truth,
                            const std::string& cls) {
  std::map<std::string, const DetectorOutput*> by_image;
  for (const DetectorOutput& out : outputs) by_image[out.image_id] = &out;
  double sum = 0;
  int count = 0;
  for (const ImageRecord& rec : ground_truth.records)
    for (const LabeledBox& box : rec.boxes) {
      if (box.label != cls) continue;
      double best = 0;
      auto it = by_image.find(rec.image_id);
      if (it != by_image.end())
        for (const Detection& d : it->second->detections)
          if (d.box.label == cls) best = std::max(best, iou(d.box, box));
      sum += best;
      ++count;
    }
  if (count == 0)
    throw InvalidArgument("no ground truth for class '" + cls + "'");
  return sum / count;
}

/// AP per class and mAP across an NMS-threshold sweep.
struct SweepTable {
  std::vector<double> thresholds;
  std::vector<std::string> classes;
  std::vector<std::vector<double>> ap;  // [class][threshold]
  std::vector<double> map;              // [threshold]
};

/// Post-process the raw outputs at each NMS threshold and score each class.
inline SweepTable nms_sweep(const std::vector<DetectorOutput>& raw,
                            const DatasetManifest& ground_truth,
                            const std::vector<double>& thresholds,
                            double min_score = 0.8, double match_iou = 0.5) {
  if (thresholds.empty()) throw InvalidArgument("empty threshold list");
  for (double t : thresholds)
    if (!(t > 0.0 && t < 1.0))
      throw InvalidArgument("NMS thresholds must lie in (0, 1)");

  SweepTable table;
  table.thresholds = thresholds;
  {
    std::set<std::string> labels;
    for (const ImageRecord& rec : ground_truth.records)
      for (const LabeledBox& box : rec.boxes) labels.insert(box.label);
    table.classes.assign(labels.begin(), labels.end());
  }
  if (table.classes.empty())
    throw InvalidArgument("ground truth contains no boxes");

  table.ap.assign(table.classes.size(), {});
  for (double threshold : thresholds) {
    std::vector<DetectorOutput> processed;
    processed.reserve(raw.size());
    for (const DetectorOutput& out : raw)
      processed.push_back(postprocess(out, min_score, threshold));
    double sum = 0;
    for (std::size_t c = 0; c < table.classes.size(); ++c) {
      const APResult r = average_precision(processed, ground_truth,
                                           table.classes[c], match_iou);
      table.ap[c].push_back(r.ap);
      sum += r.ap;
    }
    table.map.push_back(sum / static_cast<double>(table.classes.size()));
  }
  return table;
}

/// Fraction of queries whose true label appears within the top k.
inline double rank_k_accuracy(const std::vector<RankedPrediction>& predictions,
                              const std::vector<std::string>& truth, int k) {
  if (k < 1) throw InvalidArgument("rank must be >= 1");
  if (predictions.size() != truth.size())
    throw InvalidArgument("prediction/truth length mismatch");
  if (predictions.empty()) throw InvalidArgument("empty prediction list");
  for (const RankedPrediction& p : predictions)
    if (static_cast<std::size_t>(k) > p.ranked.size())
      throw InvalidArgument("rank exceeds the class count");

  int hits = 0;
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    const auto& ranked = predictions[i].ranked;
    for (int r = 0; r < k; ++r)
      if (ranked[static_cast<std::size_t>(r)].first == truth[i]) {
        ++hits;
        break;
      }
  }
  return static_cast<double>(hits) / static_cast<double>(predictions.size());
}

/// Rank-k accuracy as a function of k; nondecreasing by construction.
struct CMCCurve {
  std::vector<double> accuracies;  // index r-1 holds rank-r accuracy
};

inline CMCCurve cmc_curve(const std::vector<RankedPrediction>& predictions,
                          const std::vector<std::string>& truth,
                          int max_rank = 5) {
  CMCCurve curve;
  for (int r = 1; r <= max_rank; ++r)
    curve.accuracies.push_back(rank_k_accuracy(predictions, truth, r));
  return curve;
}

/// Mean and sample standard deviation over repeated splits.
struct SplitAggregate {
  std::vector<double> values;
  double mean = 0;
  double stddev = 0;
};

inline SplitAggregate aggregate_splits(const std::vector<double>& values) {
  if (values.size() < 2)
    throw InvalidArgument("aggregate needs at least 2 split values");
  SplitAggregate agg;
  agg.values = values;
  double sum = 0;
  for (double v : values) sum += v;
  agg.mean = sum / static_cast<double>(values.size());
  double ss = 0;
  for (double v : values) ss += (v - agg.mean) * (v - agg.mean);
  agg.stddev = std::sqrt(ss / static_cast<double>(values.size() - 1));
  return agg;
}

// ---- report emission ----

namespace detail {

inline std::string format_fixed(double v) {
  std::ostringstream out;
  out << std::fixed << std::setprecision(4) << v;
  return out.str();
}

inline std::ofstream open_report(const std::filesystem::path& path,
                                 const std::string& kind,
                                 const std::string& parameters) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open file for writing: " + path.string());
  out << "# patternid " << kVersion << " " << kind << "\n";
  if (!parameters.empty()) out << "# " << parameters << "\n";
  return out;
}

}  // namespace detail

/// Sweep table as delimited text: `#` metadata, a header row, then one row
/// per threshold (threshold, per-class AP columns, mAP), 4-decimal fixed.
inline void emit_report(const SweepTable& table,
                        const std::filesystem::path& path,
                        const std::string& parameters = {}) {
  auto out = detail::open_report(path, "nms-sweep", parameters);
  out << "threshold";
  for (const std::string& cls : table.classes) out << "," << cls;
  out << ",mAP\n";
  for (std::size_t t = 0; t < table.thresholds.size(); ++t) {
    out << detail::format_fixed(table.thresholds[t]);
    for (std::size_t c = 0; c < table.classes.size(); ++c)
      out << "," << detail::format_fixed(table.ap[c][t]);
    out << "," << detail::format_fixed(table.map[t]) << "\n";
  }
  if (!out) throw IoError("write failure: " + path.string());
}

/// CMC curve as two-column delimited text (rank, accuracy).
inline void emit_report(const CMCCurve& curve,
                        const std::filesystem::path& path,
                        const std::string& parameters = {}) {
  auto out = detail::open_report(path, "cmc-curve", parameters);
  out << "rank,accuracy\n";
  for (std::size_t r = 0; r < curve.accuracies.size(); ++r)
    out << (r + 1) << "," << detail::format_fixed(curve.accuracies[r]) << "\n";
  if (!out) throw IoError("write failure: " + path.string());
}

/// Precision-recall points as two-column delimited text.
inline void emit_report(const APResult& result,
                        const std::filesystem::path& path,
                        const std::string& parameters = {}) {
  auto out = detail::open_report(path, "pr-curve class=" + result.cls,
                                 parameters);
  out << "recall,precision\n";
  for (const auto& [recall, precision] : result.precision_recall)
    out << detail::format_fixed(recall) << ","
        << detail::format_fixed(precision) << "\n";
  if (!out) throw IoError("write failure: " + path.string());
}

/// Split aggregate as delimited text: one row per split then the summary.
inline void emit_report(const SplitAggregate& agg,
                        const std::filesystem::path& path,
                        const std::string& parameters = {}) {
  auto out = detail::open_report(path, "split-aggregate", parameters);
  out << "split,rank1_accuracy\n";
  for (std::size_t i = 0; i < agg.values.size(); ++i)
    out << (i + 1) << "," << detail::format_fixed(agg.values[i]) << "\n";
  out << "mean," << detail::format_fixed(agg.mean) << "\n";
  out << "stddev," << detail::format_fixed(agg.stddev) << "\n";
  if (!out) throw IoError("write failure: " + path.string());
}

/// Structured-text (JSON) variants with a self-identifying `type` field, so
/// the report subcommand can re-emit them as delimited text.
inline nlohmann::ordered_json to_json(const SweepTable& table) {
  nlohmann::ordered_json j;
  j["type"] = "nms_sweep";
  j["thresholds"] = table.thresholds;
  j["classes"] = table.classes;
  j["ap"] = table.ap;
  j["map"] = table.map;
  return j;
}

inline nlohmann::ordered_json to_json(const CMCCurve& curve) {
  nlohmann::ordered_json j;
  j["type"] = "cmc_curve";
  j["accuracies"] = curve.accuracies;
  return j;
}

inline nlohmann::ordered_json to_json(const SplitAggregate& agg) {
  nlohmann::ordered_json j;
  j["type"] = "split_aggregate";
  j["values"] = agg.values;
  j["mean"] = agg.mean;
  j["stddev"] = agg.stddev;
  return j;
}

inline void write_json(const nlohmann::ordered_json& j,
                       const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open file for writing: " + path.string());
  out << j.dump(2) << "\n";
  if (!out) throw IoError("write failure: " + path.string());
}

}  // namespace patternid
