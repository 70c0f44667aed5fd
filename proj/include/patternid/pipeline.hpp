// Copyright (c) 2026 the patternid authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "patternid/annotations.hpp"
#include "patternid/augment.hpp"
#include "patternid/config.hpp"
#include "patternid/detection.hpp"
#include "patternid/eval.hpp"
#include "patternid/image.hpp"
#include "patternid/logreg.hpp"
#include "patternid/net.hpp"
#include "patternid/parallel.hpp"
#include "patternid/pca.hpp"
#include "patternid/splits.hpp"

namespace patternid {

/// Stage wrapper: failures surface with the stage name in front.
template <typename F>
auto pipeline_stage(const char* name, F&& f) -> decltype(f()) {
  try {
    return f();
  } catch (const std::exception& e) {
    throw Error(std::string("stage '") + name + "' failed: " + e.what());
  }
}

/// Where each image's flank crop comes from, and where the rest go.
struct FlankResolution {
  std::map<std::string, LabeledBox> flank_box;  // image_id -> crop box
  std::vector<std::string> expert_queue;        // animal found, no flank
  std::vector<std::string> no_animal;
};

/// Ground-truth mode: the largest annotated flank box per image; images with
/// only body boxes go to the expert queue.
inline FlankResolution resolve_flanks_from_annotations(
    const DatasetManifest& manifest) {
  FlankResolution res;
  for (const ImageRecord& rec : manifest.records) {
    const LabeledBox* best = nullptr;
    bool has_body = false;
    for (const LabeledBox& box : rec.boxes) {
      if (box.label == kFlankLabel) {
        if (!best || box.area() > best->area() ||
            (box.area() == best->area() && box_coords_less(box, *best)))
          best = &box;
      } else {
        has_body = true;
      }
    }
    if (best)
      res.flank_box[rec.image_id] = *best;
    else if (has_body)
      res.expert_queue.push_back(rec.image_id);
    else
      res.no_animal.push_back(rec.image_id);
  }
  return res;
}

/// Detector mode: post-process the raw proposals and route each image; the
/// selected flank of flank_ready images becomes the crop box.
inline FlankResolution resolve_flanks_from_detections(
    const DatasetManifest& manifest, const std::vector<DetectorOutput>& raw,
    double min_score, double nms_threshold) {
  std::map<std::string, const DetectorOutput*> by_image;
  for (const DetectorOutput& out : raw) by_image[out.image_id] = &out;

  FlankResolution res;
  for (const ImageRecord& rec : manifest.records) {
    DetectorOutput processed{rec.image_id, {}};
    auto it = by_image.find(rec.image_id);
    if (it != by_image.end())
      processed = postprocess(*it->second, min_score, nms_threshold);
    const RoutingDecision decision = route(processed);
    switch (decision.status) {
      case RouteStatus::flank_ready:
        res.flank_box[rec.image_id] = decision.selected_flank->box;
        break;
      case RouteStatus::expert_review:
        res.expert_queue.push_back(rec.image_id);
        break;
      case RouteStatus::no_animal:
        res.no_animal.push_back(rec.image_id);
        break;
    }
  }
  return res;
}

/// Load an image, cut out its flank box and resize to the species geometry.
inline ImageBuffer load_flank_crop(const ImageRecord& rec,
                                   const LabeledBox& box, int out_w, int out_h,
                                   int channels) {
  ImageBuffer img = load_image(rec.path);
  if (channels == 3 && img.channels == 1) img = to_rgb(img);
  ImageBuffer flank = crop(img, static_cast<int>(std::floor(box.x_min)),
                           static_cast<int>(std::floor(box.y_min)),
                           static_cast<int>(std::ceil(box.x_max)),
                           static_cast<int>(std::ceil(box.y_max)));
  return resize_bilinear(flank, out_w, out_h);
}

/// One leakage-log row: which image touched which stage of which split.
struct LeakageEntry {
  std::string split;  // "1".."n" or "final"
  std::string stage;  // augment | pca_fit | train | evaluate
  std::string image_id;
};

struct SplitMetrics {
  double rank1 = 0;
  CMCCurve cmc;
  double C_used = 0;
  int n_train = 0;
  int n_train_augmented = 0;
  int n_test = 0;
};

struct RunReidResult {
  std::vector<SplitMetrics> split_metrics;
  SplitAggregate rank1;
  std::vector<std::string> expert_queue;
  std::vector<std::string> no_animal;
  std::vector<std::string> excluded_individuals;
  std::vector<LeakageEntry> leakage_log;
  std::filesystem::path out_dir;
};

namespace detail {

/// Removes everything it recorded if the run aborts, so no partial outputs
/// survive a failure.
class OutputTracker {
 public:
  std::filesystem::path dir(const std::filesystem::path& p) {
    if (!std::filesystem::exists(p)) {
      std::filesystem::create_directories(p);
      created_.push_back(p);
    }
    return p;
  }
  std::filesystem::path file(const std::filesystem::path& p) {
    created_.push_back(p);
    return p;
  }
  void discard_all() noexcept {
    for (auto it = created_.rbegin(); it != created_.rend(); ++it) {
      std::error_code ec;
      std::filesystem::remove(*it, ec);
    }
  }

 private:
  std::vector<std::filesystem::path> created_;
};

/// Extract features for a batch of crops into a row-per-crop matrix.
inline Eigen::MatrixXd feature_matrix(const std::vector<ImageBuffer>& crops,
                                      const ConvNetSpec& spec,
                                      const WeightStore& weights) {
  const std::size_t dim = output_shape(spec).count();
  Eigen::MatrixXd X(static_cast<Eigen::Index>(crops.size()),
                    static_cast<Eigen::Index>(dim));
  parallel_for(crops.size(), [&](std::size_t i) {
    const FeatureVector f = extract_features(crops[i], spec, weights);
    for (std::size_t j = 0; j < f.values.size(); ++j)
      X(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
          f.values[j];
  });
  return X;
}

struct FittedModel {
  PCAModel pca;
  IdentModel ident;
  double C_used = 0;
};

/// Augment 3x, extract features, fit PCA on the augmented set, pick C and
/// train the classifier. Only ever sees training-side crops.
inline FittedModel fit_on_crops(const std::vector<ImageBuffer>& crops,
                                const std::vector<std::string>& labels,
                                const PipelineConfig& config,
                                const ConvNetSpec& spec,
                                const WeightStore& weights,
                                std::uint64_t plan_seed) {
  AugmentationPlan plan = config.augment;
  plan.seed = plan_seed;
  const std::vector<ImageBuffer> augmented =
      pipeline_stage("augment", [&] { return augment_recognition_set(crops, plan); });
  std::vector<std::string> aug_labels;
  aug_labels.reserve(labels.size() * 3);
  for (const std::string& label : labels)
    for (int i = 0; i < 3; ++i) aug_labels.push_back(label);

  const Eigen::MatrixXd features = pipeline_stage(
      "features", [&] { return feature_matrix(augmented, spec, weights); });

  FittedModel fitted;
  fitted.pca = pipeline_stage(
      "pca", [&] { return pca_fit(features, config.pca_energy); });
  const Eigen::MatrixXd reduced = pca_transform(fitted.pca, features);

  fitted.C_used = config.C ? *config.C : 0.0;
  if (!config.C) {
    const GridSearchResult grid = pipeline_stage("grid-search", [&] {
      return grid_search(reduced, aug_labels, config.C_grid,
                         config.grid_folds, plan_seed);
    });
    fitted.C_used = grid.best_C;
  }
  fitted.ident = pipeline_stage(
      "train", [&] { return train(reduced, aug_labels, fitted.C_used); });
  return fitted;
}

inline void save_fitted(const FittedModel& fitted,
                        const std::filesystem::path& dir,
                        OutputTracker& tracker) {
  fitted.pca.save(tracker.file(dir / "pca.ntb"));
  fitted.ident.save(tracker.file(dir / "ident.ntb"),
                    tracker.file(dir / "classes.txt"));
}

inline void write_lines(const std::vector<std::string>& lines,
                        const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open file for writing: " + path.string());
  for (const std::string& line : lines) out << line << "\n";
  if (!out) throw IoError("write failure: " + path.string());
}

}  // namespace detail

/// The full recognition protocol: resolve flank crops, build stratified
/// splits, and per split augment/extract/fit/evaluate; finally train a
/// deployable model on all eligible images. Writes models, reports, the
/// expert queue and a leakage log under out_dir. Deterministic for a fixed
/// seed and inputs; any failure removes whatever was already written.
inline RunReidResult run_reid(const DatasetManifest& manifest,
                              const std::vector<DetectorOutput>& raw,
                              const PipelineConfig& config,
                              const std::filesystem::path& out_dir) {
  config.validate();
  const ConvNetSpec spec = pipeline_stage(
      "load-net", [&] { return load_net_spec(config.net_spec_path); });
  const WeightStore weights = pipeline_stage(
      "load-weights", [&] { return WeightStore::load(config.weight_path); });
  if (spec.input_width != config.flank_resize_width ||
      spec.input_height != config.flank_resize_height)
    throw Error(
        "stage 'load-net' failed: net input geometry does not match the "
        "configured flank resize");

  const FlankResolution flanks = pipeline_stage("resolve-flanks", [&] {
    return config.use_gt_flank
               ? resolve_flanks_from_annotations(manifest)
               : resolve_flanks_from_detections(manifest, raw,
                                                config.min_score,
                                                config.nms_threshold);
  });

  // Recognition set: flank-ready images with a known identity.
  DatasetManifest eligible;
  eligible.species = manifest.species;
  for (const ImageRecord& rec : manifest.records)
    if (flanks.flank_box.count(rec.image_id) && rec.individual_id)
      eligible.records.push_back(rec);
  if (eligible.records.empty())
    throw Error("stage 'resolve-flanks' failed: no identified flank images");

  const ReidSplits splits = pipeline_stage("splits", [&] {
    return make_reid_splits(eligible, config.n_splits, config.train_fraction,
                            config.seed);
  });

  std::map<std::string, const ImageRecord*> by_id;
  for (const ImageRecord& rec : eligible.records) by_id[rec.image_id] = &rec;
  std::set<std::string> eligible_individuals;
  for (const ImageRecord& rec : eligible.records) {
    bool excluded =
        std::find(splits.excluded_individuals.begin(),
                  splits.excluded_individuals.end(),
                  *rec.individual_id) != splits.excluded_individuals.end();
    if (!excluded) eligible_individuals.insert(*rec.individual_id);
  }

  auto load_crops = [&](const std::vector<std::string>& ids) {
    std::vector<ImageBuffer> crops(ids.size());
    std::vector<std::string> labels(ids.size());
    parallel_for(ids.size(), [&](std::size_t i) {
      const ImageRecord* rec = by_id.at(ids[i]);
      crops[i] = load_flank_crop(*rec, flanks.flank_box.at(ids[i]),
                                 config.flank_resize_width,
                                 config.flank_resize_height,
                                 spec.input_channels);
      labels[i] = *rec->individual_id;
    });
    return std::make_pair(std::move(crops), std::move(labels));
  };

  RunReidResult result;
  result.out_dir = out_dir;
  result.expert_queue = flanks.expert_queue;
  result.no_animal = flanks.no_animal;
  result.excluded_individuals = splits.excluded_individuals;

  detail::OutputTracker tracker;
  try {
    tracker.dir(out_dir);
    const std::filesystem::path splits_dir = tracker.dir(out_dir / "splits");

    std::vector<double> rank1_values;
    for (std::size_t s = 0; s < splits.splits.size(); ++s) {
      const SplitSpec& split = splits.splits[s];
      const std::string split_name = std::to_string(s + 1);

      auto [train_crops, train_labels] = pipeline_stage(
          "load-images", [&] { return load_crops(split.train_ids); });
      for (const std::string& id : split.train_ids) {
        result.leakage_log.push_back({split_name, "augment", id});
        result.leakage_log.push_back({split_name, "pca_fit", id});
        result.leakage_log.push_back({split_name, "train", id});
      }

      const detail::FittedModel fitted =
          detail::fit_on_crops(train_crops, train_labels, config, spec,
                               weights, derive_seed(config.seed, s));

      auto [test_crops, test_labels] = pipeline_stage(
          "load-images", [&] { return load_crops(split.test_ids); });
      for (const std::string& id : split.test_ids)
        result.leakage_log.push_back({split_name, "evaluate", id});

      const Eigen::MatrixXd test_features = pipeline_stage("features", [&] {
        return detail::feature_matrix(test_crops, spec, weights);
      });
      const Eigen::MatrixXd test_reduced =
          pca_transform(fitted.pca, test_features);

      std::vector<RankedPrediction> predictions;
      predictions.reserve(test_labels.size());
      for (Eigen::Index i = 0; i < test_reduced.rows(); ++i)
        predictions.push_back(
            predict_ranked(fitted.ident, test_reduced.row(i).transpose()));

      SplitMetrics metrics;
      metrics.C_used = fitted.C_used;
      metrics.n_train = static_cast<int>(train_crops.size());
      metrics.n_train_augmented = metrics.n_train * 3;
      metrics.n_test = static_cast<int>(test_crops.size());
      const int max_rank = std::min<int>(config.rank_max,
                                         fitted.ident.n_classes());
      metrics.cmc = pipeline_stage("evaluate", [&] {
        return cmc_curve(predictions, test_labels, max_rank);
      });
      metrics.rank1 = metrics.cmc.accuracies.front();
      rank1_values.push_back(metrics.rank1);
      result.split_metrics.push_back(metrics);

      const std::filesystem::path split_dir =
          tracker.dir(splits_dir / ("split" + split_name));
      save_split(split, tracker.file(split_dir / "split.json"));
      detail::save_fitted(fitted, split_dir, tracker);
      emit_report(metrics.cmc, tracker.file(split_dir / "cmc.csv"),
                  "species=" + config.species + " split=" + split_name +
                      " seed=" + std::to_string(config.seed));
    }

    if (rank1_values.size() >= 2)
      result.rank1 = aggregate_splits(rank1_values);
    else
      result.rank1 = SplitAggregate{rank1_values,
                                    rank1_values.empty() ? 0.0
                                                         : rank1_values[0],
                                    0.0};

    // Deployable model fitted on every eligible image.
    std::vector<std::string> all_ids;
    for (const ImageRecord& rec : eligible.records)
      if (eligible_individuals.count(*rec.individual_id))
        all_ids.push_back(rec.image_id);
    std::sort(all_ids.begin(), all_ids.end());
    auto [all_crops, all_labels] =
        pipeline_stage("load-images", [&] { return load_crops(all_ids); });
    for (const std::string& id : all_ids) {
      result.leakage_log.push_back({"final", "augment", id});
      result.leakage_log.push_back({"final", "pca_fit", id});
      result.leakage_log.push_back({"final", "train", id});
    }
    const detail::FittedModel final_model = detail::fit_on_crops(
        all_crops, all_labels, config, spec, weights,
        derive_seed(config.seed, 0xF17A1ULL));

    const std::filesystem::path final_dir = tracker.dir(out_dir / "final");
    detail::save_fitted(final_model, final_dir, tracker);
    save_net_spec(spec, tracker.file(final_dir / "net.json"));
    weights.save(tracker.file(final_dir / "weights.ntb"));
    {
      nlohmann::ordered_json meta;
      meta["type"] = "ident_model";
      meta["species"] = config.species;
      meta["flank_resize"] = {config.flank_resize_width,
                              config.flank_resize_height};
      meta["rank_max"] = config.rank_max;
      meta["C"] = final_model.C_used;
      meta["pca_energy"] = config.pca_energy;
      meta["net_spec"] = "net.json";
      meta["weights"] = "weights.ntb";
      meta["pca"] = "pca.ntb";
      meta["ident"] = "ident.ntb";
      meta["classes"] = "classes.txt";
      write_json(meta, tracker.file(final_dir / "model.json"));
    }

    // Reports and logs.
    nlohmann::ordered_json summary;
    summary["type"] = "run_reid_summary";
    summary["species"] = config.species;
    summary["seed"] = config.seed;
    summary["flank_source"] = config.use_gt_flank ? "annotations" : "detector";
    summary["n_splits"] = static_cast<int>(result.split_metrics.size());
    summary["train_fraction"] = config.train_fraction;
    summary["pca_energy"] = config.pca_energy;
    summary["splits"] = nlohmann::ordered_json::array();
    for (std::size_t s = 0; s < result.split_metrics.size(); ++s) {
      const SplitMetrics& m = result.split_metrics[s];
      summary["splits"].push_back({{"split", s + 1},
                                   {"rank1", m.rank1},
                                   {"cmc", m.cmc.accuracies},
                                   {"C", m.C_used},
                                   {"n_train", m.n_train},
                                   {"n_train_augmented", m.n_train_augmented},
                                   {"n_test", m.n_test}});
    }
    summary["rank1_mean"] = result.rank1.mean;
    summary["rank1_stddev"] = result.rank1.stddev;
    summary["excluded_individuals"] = result.excluded_individuals;
    summary["expert_queue_size"] =
        static_cast<int>(result.expert_queue.size());
    write_json(summary, tracker.file(out_dir / "summary.json"));

    emit_report(result.rank1, tracker.file(out_dir / "rank1.csv"),
                "species=" + config.species +
                    " seed=" + std::to_string(config.seed) +
                    " flank_source=" +
                    (config.use_gt_flank ? "annotations" : "detector"));
    detail::write_lines(result.expert_queue,
                        tracker.file(out_dir / "expert_queue.txt"));
    {
      std::ofstream log(tracker.file(out_dir / "leakage_log.tsv"));
      if (!log) throw IoError("cannot open leakage log for writing");
      log << "split\tstage\timage_id\n";
      for (const LeakageEntry& e : result.leakage_log)
        log << e.split << "\t" << e.stage << "\t" << e.image_id << "\n";
      if (!log) throw IoError("write failure: leakage log");
    }
  } catch (...) {
    tracker.discard_all();
    throw;
  }
  return result;
}

/// A saved final model plus everything needed to score new flank crops.
struct ModelBundle {
  std::string species;
  int flank_resize_width = 0;
  int flank_resize_height = 0;
  int rank_max = 5;
  ConvNetSpec net;
  WeightStore weights;
  PCAModel pca;
  IdentModel ident;
};

inline ModelBundle load_model_bundle(const std::filesystem::path& dir) {
  const std::filesystem::path meta_path = dir / "model.json";
  std::ifstream in(meta_path);
  if (!in) throw IoError("cannot open model metadata: " + meta_path.string());
  nlohmann::json meta;
  try {
    in >> meta;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError("malformed model metadata: " + meta_path.string() +
                     ": " + e.what());
  }
  ModelBundle bundle;
  try {
    bundle.species = meta.at("species").get<std::string>();
    bundle.flank_resize_width = meta.at("flank_resize").at(0).get<int>();
    bundle.flank_resize_height = meta.at("flank_resize").at(1).get<int>();
    bundle.rank_max = meta.value("rank_max", 5);
    bundle.net = load_net_spec(dir / meta.at("net_spec").get<std::string>());
    bundle.weights =
        WeightStore::load(dir / meta.at("weights").get<std::string>());
    bundle.pca = PCAModel::load(dir / meta.at("pca").get<std::string>());
    bundle.ident =
        IdentModel::load(dir / meta.at("ident").get<std::string>(),
                         dir / meta.at("classes").get<std::string>());
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("model metadata missing mandatory field: " +
                      meta_path.string() + ": " + e.what());
  }
  return bundle;
}

/// Score one flank crop (any size; resized here) against a saved model.
inline RankedPrediction identify_crop(const ModelBundle& bundle,
                                      const ImageBuffer& flank_crop) {
  ImageBuffer img = flank_crop;
  if (bundle.net.input_channels == 3 && img.channels == 1) img = to_rgb(img);
  img = resize_bilinear(img, bundle.net.input_width, bundle.net.input_height);
  const FeatureVector f = extract_features(img, bundle.net, bundle.weights);
  Eigen::VectorXd x(static_cast<Eigen::Index>(f.values.size()));
  for (std::size_t i = 0; i < f.values.size(); ++i)
    x(static_cast<Eigen::Index>(i)) = f.values[i];
  return predict_ranked(bundle.ident, pca_transform(bundle.pca, x));
}

}  // namespace patternid
