// Copyright (c) 2026 the patternid authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "patternid/boxes.hpp"
#include "patternid/errors.hpp"
#include "patternid/image.hpp"

namespace patternid {

inline constexpr const char* kFlankLabel = "flank";

/// A scored detector proposal.
struct Detection {
  LabeledBox box;
  double score = 0;  // objectness in [0, 1]

  friend bool operator==(const Detection& a, const Detection& b) {
    return a.score == b.score && a.box == b.box;
  }
};

/// All proposals for one image.
struct DetectorOutput {
  std::string image_id;
  std::vector<Detection> detections;
};

enum class RouteStatus { flank_ready, expert_review, no_animal };

inline const char* to_string(RouteStatus s) {
  switch (s) {
    case RouteStatus::flank_ready: return "flank_ready";
    case RouteStatus::expert_review: return "expert_review";
    default: return "no_animal";
  }
}

/// Where an image goes after detection: identification (a usable flank was
/// found), the expert queue (animal but no flank), or nowhere.
struct RoutingDecision {
  std::string image_id;
  RouteStatus status = RouteStatus::no_animal;
  std::optional<Detection> selected_flank;
  std::optional<Detection> selected_body;
};

/// Keep detections with score strictly greater than min_score, in order.
inline std::vector<Detection> filter_by_score(
    const std::vector<Detection>& dets, double min_score = 0.8) {
  std::vector<Detection> out;
  for (const Detection& d : dets)
    if (d.score > min_score) out.push_back(d);
  return out;
}

namespace detail {

/// Descending score; ties broken by ascending box coordinates so the greedy
/// order (and therefore the survivor set) is deterministic.
inline bool nms_order(const Detection& a, const Detection& b) {
  if (a.score != b.score) return a.score > b.score;
  return box_coords_less(a.box, b.box);
}

}  // namespace detail

/// Greedy non-maximum suppression over a single class: repeatedly keep the
/// highest-score remaining detection and suppress everything with IoU
/// strictly greater than the threshold against it. Output sorted by the
/// greedy order.
inline std::vector<Detection> nms(const std::vector<Detection>& dets,
                                  double iou_threshold) {
  if (dets.empty()) return {};
  for (const Detection& d : dets)
    if (d.box.label != dets.front().box.label)
      throw InvalidArgument("nms input mixes class labels");

  std::vector<Detection> sorted = dets;
  std::sort(sorted.begin(), sorted.end(), detail::nms_order);
  std::vector<Detection> kept;
  for (const Detection& d : sorted) {
    bool suppressed = false;
    for (const Detection& k : kept)
      if (iou(d.box, k.box) > iou_threshold) {
        suppressed = true;
        break;
      }
    if (!suppressed) kept.push_back(d);
  }
  return kept;
}

/// Inference-side post-processing: strict objectness filter, then NMS per
/// class (classes are independent). Idempotent.
inline DetectorOutput postprocess(const DetectorOutput& raw,
                                  double min_score = 0.8,
                                  double nms_threshold = 0.3) {
  std::map<std::string, std::vector<Detection>> per_class;
  for (const Detection& d : filter_by_score(raw.detections, min_score))
    per_class[d.box.label].push_back(d);

  DetectorOutput out;
  out.image_id = raw.image_id;
  for (auto& [label, dets] : per_class)
    for (Detection& d : nms(dets, nms_threshold))
      out.detections.push_back(std::move(d));
  return out;
}

/// Flank-to-body assignment result.
struct FlankPairing {
  std::vector<std::pair<Detection, Detection>> pairs;  // (body, flank)
  std::vector<Detection> unmatched_flanks;
  std::vector<Detection> unmatched_bodies;
};

/// Assign each flank to the body box maximizing intersection-over-flank-area,
/// accepted when that ratio reaches min_overlap. Greedy by descending flank
/// score; each body takes at most one flank.
inline FlankPairing associate_flank(const std::vector<Detection>& bodies,
                                    const std::vector<Detection>& flanks,
                                    double min_overlap = 0.7) {
  std::vector<Detection> ordered_flanks = flanks;
  std::sort(ordered_flanks.begin(), ordered_flanks.end(), detail::nms_order);

  FlankPairing result;
  std::vector<bool> body_taken(bodies.size(), false);
  for (const Detection& flank : ordered_flanks) {
    double best_ratio = 0;
    std::size_t best = bodies.size();
    for (std::size_t i = 0; i < bodies.size(); ++i) {
      if (body_taken[i]) continue;
      const double ratio =
          intersection_area(bodies[i].box, flank.box) / flank.box.area();
      if (ratio > best_ratio) {
        best_ratio = ratio;
        best = i;
      }
    }
    if (best < bodies.size() && best_ratio >= min_overlap) {
      body_taken[best] = true;
      result.pairs.emplace_back(bodies[best], flank);
    } else {
      result.unmatched_flanks.push_back(flank);
    }
  }
  for (std::size_t i = 0; i < bodies.size(); ++i)
    if (!body_taken[i]) result.unmatched_bodies.push_back(bodies[i]);
  return result;
}

/// Route one post-processed image: a flank detection sends it to
/// identification, a body without a flank to the expert queue, nothing at
/// all means no animal. Total over every input.
inline RoutingDecision route(const DetectorOutput& output) {
  std::vector<Detection> flanks, bodies;
  for (const Detection& d : output.detections)
    (d.box.label == kFlankLabel ? flanks : bodies).push_back(d);
  std::sort(flanks.begin(), flanks.end(), detail::nms_order);
  std::sort(bodies.begin(), bodies.end(), detail::nms_order);

  RoutingDecision decision;
  decision.image_id = output.image_id;
  if (!flanks.empty()) {
    decision.status = RouteStatus::flank_ready;
    decision.selected_flank = flanks.front();
    if (!bodies.empty()) decision.selected_body = bodies.front();
  } else if (!bodies.empty()) {
    decision.status = RouteStatus::expert_review;
    decision.selected_body = bodies.front();
  } else {
    decision.status = RouteStatus::no_animal;
  }
  return decision;
}

namespace detail {

inline std::vector<std::string> split_csv_row(const std::string& line) {
  std::vector<std::string> fields;
  std::string field;
  std::istringstream in(line);
  while (std::getline(in, field, ',')) {
    // trim surrounding spaces
    const auto b = field.find_first_not_of(" \t");
    const auto e = field.find_last_not_of(" \t\r");
    fields.push_back(b == std::string::npos ? ""
                                            : field.substr(b, e - b + 1));
  }
  return fields;
}

}  // namespace detail

/// Read the raw-detections file: CSV with a mandatory header
/// `image_id,class,score,x_min,y_min,x_max,y_max`, one detection per row,
/// row order irrelevant. Outputs are grouped per image, in first-seen order.
inline std::vector<DetectorOutput> load_raw_detections(
    const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open detections file: " + path.string());
  std::string line;
  if (!std::getline(in, line)) return {};
  {
    auto header = detail::split_csv_row(line);
    const std::vector<std::string> expected = {
        "image_id", "class", "score", "x_min", "y_min", "x_max", "y_max"};
    if (header != expected)
      throw FormatError("detections file missing the mandatory header: " +
                        path.string());
  }

  std::vector<DetectorOutput> outputs;
  std::map<std::string, std::size_t> index;
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto fields = detail::split_csv_row(line);
    if (fields.size() != 7)
      throw FormatError("detections row " + std::to_string(lineno) +
                        " has " + std::to_string(fields.size()) +
                        " fields, expected 7: " + path.string());
    Detection det;
    try {
      det.score = std::stod(fields[2]);
      det.box.x_min = std::stod(fields[3]);
      det.box.y_min = std::stod(fields[4]);
      det.box.x_max = std::stod(fields[5]);
      det.box.y_max = std::stod(fields[6]);
    } catch (const std::exception&) {
      throw FormatError("detections row " + std::to_string(lineno) +
                        " has a non-numeric field: " + path.string());
    }
    det.box.label = fields[1];
    if (det.score < 0.0 || det.score > 1.0)
      throw FormatError("detections row " + std::to_string(lineno) +
                        " score outside [0, 1]: " + path.string());
    if (!det.box.valid())
      throw FormatError("detections row " + std::to_string(lineno) +
                        " has an invalid box: " + path.string());
    auto [it, inserted] = index.try_emplace(fields[0], outputs.size());
    if (inserted) outputs.push_back({fields[0], {}});
    outputs[it->second].detections.push_back(std::move(det));
  }
  return outputs;
}

/// Writer counterpart of load_raw_detections.
inline void save_raw_detections(const std::vector<DetectorOutput>& outputs,
                                const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open file for writing: " + path.string());
  out << "image_id,class,score,x_min,y_min,x_max,y_max\n";
  out.precision(10);
  for (const DetectorOutput& o : outputs)
    for (const Detection& d : o.detections)
      out << o.image_id << "," << d.box.label << "," << d.score << ","
          << d.box.x_min << "," << d.box.y_min << "," << d.box.x_max << ","
          << d.box.y_max << "\n";
  if (!out) throw IoError("write failure: " + path.string());
}

/// Detector proposals come from a pluggable backend; training a detector is
/// outside this library. Implementations must either be safe for concurrent
/// per-image calls or report themselves serial.
class DetectorBackend {
 public:
  virtual ~DetectorBackend() = default;
  virtual DetectorOutput detect(const std::string& image_id,
                                const ImageBuffer& image) = 0;
  virtual bool concurrent_safe() const { return true; }
};

/// Reference backend: proposals preloaded from a raw-detections file.
class FileDetectorBackend final : public DetectorBackend {
 public:
  explicit FileDetectorBackend(const std::filesystem::path& path) {
    for (DetectorOutput& o : load_raw_detections(path))
      outputs_.emplace(o.image_id, std::move(o));
  }

  DetectorOutput detect(const std::string& image_id,
                        const ImageBuffer&) override {
    auto it = outputs_.find(image_id);
    if (it == outputs_.end()) return {image_id, {}};
    return it->second;
  }

 private:
  std::map<std::string, DetectorOutput> outputs_;
};

}  // namespace patternid
