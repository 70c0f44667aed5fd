// Copyright (c) 2026 the patternid authors
// SPDX-License-Identifier: Apache-2.0

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "patternid/patternid.hpp"

namespace fs = std::filesystem;
using namespace patternid;

namespace {

struct CommonFlags {
  std::string config_path;
  std::string species = "tiger";
};

PipelineConfig resolve_config(const CommonFlags& common) {
  if (!common.config_path.empty())
    return load_config(common.config_path, common.species);
  PipelineConfig config;
  config.species = common.species;
  return config;
}

int cmd_ingest(const std::string& annotations_dir,
               const std::string& identity_table, const std::string& species,
               const std::string& images_dir, const std::string& out_path) {
  DatasetManifest manifest =
      build_manifest(annotations_dir, identity_table, species, images_dir);
  save_manifest(manifest, out_path);
  std::cout << "manifest: " << manifest.records.size() << " records, "
            << manifest.individuals().size() << " individuals -> " << out_path
            << "\n";
  if (manifest.records.empty())
    std::cout << "warning: no annotation files found in " << annotations_dir
              << "\n";
  return 0;
}

int cmd_split(const std::string& manifest_path, const std::string& mode,
              int n_splits, double train_fraction, std::uint64_t seed,
              const std::string& out_dir) {
  const DatasetManifest manifest = load_manifest(manifest_path);
  fs::create_directories(out_dir);
  if (mode == "detection") {
    const SplitSpec split = make_detection_split(manifest, train_fraction, seed);
    const fs::path out = fs::path(out_dir) / "detection_split.json";
    save_split(split, out);
    std::cout << "detection split: " << split.train_ids.size() << " train / "
              << split.test_ids.size() << " test -> " << out << "\n";
  } else if (mode == "reid") {
    const ReidSplits splits =
        make_reid_splits(manifest, n_splits, train_fraction, seed);
    for (std::size_t i = 0; i < splits.splits.size(); ++i) {
      const fs::path out =
          fs::path(out_dir) / ("reid_split" + std::to_string(i + 1) + ".json");
      save_split(splits.splits[i], out);
      std::cout << "reid split " << (i + 1) << ": "
                << splits.splits[i].train_ids.size() << " train / "
                << splits.splits[i].test_ids.size() << " test -> " << out
                << "\n";
    }
    for (const std::string& individual : splits.excluded_individuals)
      std::cout << "warning: individual '" << individual
                << "' has a single image and was excluded\n";
  } else {
    throw InvalidArgument("unknown split mode: " + mode);
  }
  return 0;
}

int cmd_detect_eval(const std::string& manifest_path,
                    const std::string& detections_path,
                    const PipelineConfig& config,
                    std::vector<double> thresholds,
                    const std::string& out_path) {
  const DatasetManifest manifest = load_manifest(manifest_path);
  const std::vector<DetectorOutput> raw = load_raw_detections(detections_path);
  if (thresholds.empty())
    thresholds = {0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9};
  const SweepTable table =
      nms_sweep(raw, manifest, thresholds, config.min_score);
  emit_report(table, out_path,
              "min_score=" + std::to_string(config.min_score));
  write_json(to_json(table), fs::path(out_path).replace_extension(".json"));
  std::cout << "nms sweep over " << thresholds.size() << " thresholds, "
            << table.classes.size() << " classes -> " << out_path << "\n";
  return 0;
}

int cmd_run_reid(const std::string& manifest_path,
                 const std::string& detections_path, PipelineConfig config,
                 const std::string& out_dir) {
  const DatasetManifest manifest = load_manifest(manifest_path);
  std::vector<DetectorOutput> raw;
  if (!detections_path.empty()) raw = load_raw_detections(detections_path);
  if (!config.use_gt_flank && detections_path.empty())
    throw InvalidArgument(
        "--detector-flanks requires --detections <file>");
  const RunReidResult result = run_reid(manifest, raw, config, out_dir);
  for (std::size_t s = 0; s < result.split_metrics.size(); ++s)
    std::cout << "split " << (s + 1) << ": rank-1 "
              << result.split_metrics[s].rank1
              << " (C=" << result.split_metrics[s].C_used << ", "
              << result.split_metrics[s].n_train << " train -> "
              << result.split_metrics[s].n_train_augmented << " augmented, "
              << result.split_metrics[s].n_test << " test)\n";
  std::cout << "rank-1 mean " << result.rank1.mean << " +/- "
            << result.rank1.stddev << " over "
            << result.split_metrics.size() << " splits\n"
            << "expert queue: " << result.expert_queue.size()
            << " images -> " << (fs::path(out_dir) / "expert_queue.txt")
            << "\n";
  return 0;
}

int cmd_identify(const std::string& model_dir, const std::string& image_path,
                 int top) {
  const ModelBundle bundle = load_model_bundle(model_dir);
  const ImageBuffer img = load_image(image_path);
  const RankedPrediction prediction = identify_crop(bundle, img);
  const int limit = std::min<int>(top, static_cast<int>(prediction.ranked.size()));
  for (int i = 0; i < limit; ++i)
    std::cout << prediction.ranked[static_cast<std::size_t>(i)].first << "\t"
              << prediction.ranked[static_cast<std::size_t>(i)].second << "\n";
  return 0;
}

int cmd_report(const std::string& in_path, const std::string& out_path) {
  std::ifstream in(in_path);
  if (!in) throw IoError("cannot open metrics file: " + in_path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError("malformed metrics JSON: " + in_path + ": " + e.what());
  }
  const std::string type = j.value("type", "");
  if (type == "nms_sweep") {
    SweepTable table;
    table.thresholds = j.at("thresholds").get<std::vector<double>>();
    table.classes = j.at("classes").get<std::vector<std::string>>();
    table.ap = j.at("ap").get<std::vector<std::vector<double>>>();
    table.map = j.at("map").get<std::vector<double>>();
    emit_report(table, out_path);
  } else if (type == "cmc_curve") {
    CMCCurve curve;
    curve.accuracies = j.at("accuracies").get<std::vector<double>>();
    emit_report(curve, out_path);
  } else if (type == "split_aggregate" || type == "run_reid_summary") {
    SplitAggregate agg;
    if (type == "run_reid_summary") {
      for (const auto& s : j.at("splits"))
        agg.values.push_back(s.at("rank1").get<double>());
      agg.mean = j.at("rank1_mean").get<double>();
      agg.stddev = j.at("rank1_stddev").get<double>();
    } else {
      agg.values = j.at("values").get<std::vector<double>>();
      agg.mean = j.at("mean").get<double>();
      agg.stddev = j.at("stddev").get<double>();
    }
    emit_report(agg, out_path);
  } else {
    throw FormatError("metrics file has no recognized 'type': " + in_path);
  }
  std::cout << "report -> " << out_path << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Detection post-processing and individual recognition for "
               "patterned species"};
  app.set_version_flag("--version", std::string(kVersion));
  app.require_subcommand(1);

  CommonFlags common;

  // ingest
  auto* ingest = app.add_subcommand(
      "ingest", "Build a dataset manifest from VOC XML annotations");
  std::string annotations_dir, identity_table, images_dir, out_manifest;
  ingest->add_option("--annotations", annotations_dir, "VOC XML directory")
      ->required();
  ingest->add_option("--identities", identity_table,
                     "image_id<TAB>individual_id table");
  ingest->add_option("--images", images_dir,
                     "directory the XML filenames are relative to");
  ingest->add_option("--species", common.species, "species tag");
  ingest->add_option("--out", out_manifest, "output manifest path")
      ->required();

  // split
  auto* split_cmd = app.add_subcommand(
      "split", "Generate train/test split files from a manifest");
  std::string manifest_path, split_mode = "reid", split_out_dir = ".";
  int n_splits = 5;
  double train_fraction = 0.75;
  std::uint64_t seed = 0;
  split_cmd->add_option("--manifest", manifest_path, "manifest path")
      ->required();
  split_cmd->add_option("--mode", split_mode, "detection | reid")
      ->check(CLI::IsMember({"detection", "reid"}));
  split_cmd->add_option("--n-splits", n_splits, "number of reid splits");
  split_cmd->add_option("--train-fraction", train_fraction, "train fraction");
  split_cmd->add_option("--seed", seed, "split seed")->required();
  split_cmd->add_option("--out", split_out_dir, "output directory");

  // detect-eval
  auto* detect_eval = app.add_subcommand(
      "detect-eval", "Sweep NMS thresholds and report per-class AP / mAP");
  std::string detections_path, sweep_out = "sweep.csv";
  std::vector<double> thresholds;
  detect_eval->add_option("--manifest", manifest_path, "manifest path")
      ->required();
  detect_eval->add_option("--detections", detections_path,
                          "raw detections CSV")
      ->required();
  detect_eval->add_option("--config", common.config_path, "config file");
  detect_eval->add_option("--species", common.species, "species preset");
  detect_eval->add_option("--thresholds", thresholds,
                          "NMS thresholds (default 0.2..0.9)");
  double min_score_flag = -1;
  detect_eval->add_option("--min-score", min_score_flag,
                          "objectness cutoff (strict)");
  detect_eval->add_option("--out", sweep_out, "output report path");

  // run-reid
  auto* run = app.add_subcommand(
      "run-reid", "Full recognition protocol over repeated splits");
  std::string run_out_dir = "reid_out";
  bool detector_flanks = false;
  std::optional<double> C_flag;
  std::optional<int> n_splits_flag;
  std::optional<double> fraction_flag, energy_flag;
  run->add_option("--manifest", manifest_path, "manifest path")->required();
  run->add_option("--detections", detections_path,
                  "raw detections CSV (required with --detector-flanks)");
  run->add_option("--config", common.config_path, "config file");
  run->add_option("--species", common.species, "species preset");
  run->add_option("--seed", seed, "run seed")->required();
  run->add_option("--out", run_out_dir, "output directory");
  run->add_flag("--detector-flanks", detector_flanks,
                "crop flanks from detector output instead of annotations");
  double C_value = 0;
  auto* c_opt = run->add_option("--C", C_value, "fixed inverse regularization");
  auto* ns_opt = run->add_option("--n-splits", n_splits, "number of splits");
  auto* tf_opt =
      run->add_option("--train-fraction", train_fraction, "train fraction");
  double pca_energy = 0.99;
  auto* pe_opt = run->add_option("--pca-energy", pca_energy,
                                 "retained PCA energy fraction");
  std::string net_spec_flag, weights_flag;
  run->add_option("--net-spec", net_spec_flag, "net spec JSON");
  run->add_option("--weights", weights_flag, "weight container");

  // identify
  auto* identify = app.add_subcommand(
      "identify", "Rank identities for one flank crop");
  std::string model_dir, image_path;
  int top = 5;
  identify->add_option("--model-dir", model_dir, "saved model directory")
      ->required();
  identify->add_option("--image", image_path, "flank crop image")->required();
  identify->add_option("--top", top, "ranks to print");

  // report
  auto* report = app.add_subcommand(
      "report", "Re-emit a structured metrics file as delimited text");
  std::string report_in, report_out;
  report->add_option("--in", report_in, "metrics JSON")->required();
  report->add_option("--out", report_out, "output report path")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (app.got_subcommand(ingest))
      return cmd_ingest(annotations_dir, identity_table, common.species,
                        images_dir, out_manifest);
    if (app.got_subcommand(split_cmd))
      return cmd_split(manifest_path, split_mode, n_splits, train_fraction,
                       seed, split_out_dir);
    if (app.got_subcommand(detect_eval)) {
      PipelineConfig config = resolve_config(common);
      if (min_score_flag >= 0) config.min_score = min_score_flag;
      return cmd_detect_eval(manifest_path, detections_path, config,
                             thresholds, sweep_out);
    }
    if (app.got_subcommand(run)) {
      PipelineConfig config = resolve_config(common);
      config.seed = seed;
      config.use_gt_flank = !detector_flanks;
      if (*c_opt) config.C = C_value;
      if (*ns_opt) config.n_splits = n_splits;
      if (*tf_opt) config.train_fraction = train_fraction;
      if (*pe_opt) config.pca_energy = pca_energy;
      if (!net_spec_flag.empty()) config.net_spec_path = net_spec_flag;
      if (!weights_flag.empty()) config.weight_path = weights_flag;
      return cmd_run_reid(manifest_path, detections_path, config, run_out_dir);
    }
    if (app.got_subcommand(identify))
      return cmd_identify(model_dir, image_path, top);
    if (app.got_subcommand(report)) return cmd_report(report_in, report_out);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
