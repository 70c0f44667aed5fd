// Copyright (c) 2026 the patternid authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "patternid/augment.hpp"
#include "patternid/errors.hpp"

namespace patternid {

/// Everything the end-to-end pipeline needs, assembled from the config
/// file's defaults, the selected species preset, and CLI flag overrides (in
/// that order of precedence, flags strongest).
struct PipelineConfig {
  std::string species = "tiger";
  int flank_resize_width = 256;
  int flank_resize_height = 192;
  std::filesystem::path net_spec_path;
  std::filesystem::path weight_path;
  double pca_energy = 0.99;
  std::optional<double> C;           // fixed C wins over the grid
  std::vector<double> C_grid = {1e-2, 1e0, 1e2, 1e4, 1e5, 1e6};
  int grid_folds = 3;
  double nms_threshold = 0.3;
  double min_score = 0.8;
  int n_splits = 5;
  double train_fraction = 0.75;
  int rank_max = 5;
  std::uint64_t seed = 0;
  bool use_gt_flank = true;  // crop from annotated flank boxes by default
  AugmentationPlan augment;  // seed is overwritten per run/split

  void validate() const {
    if (flank_resize_width < 1 || flank_resize_height < 1)
      throw InvalidArgument("flank resize dims must be >= 1");
    if (!(pca_energy > 0.0 && pca_energy <= 1.0))
      throw InvalidArgument("pca_energy must be in (0, 1]");
    if (C && !(*C > 0)) throw InvalidArgument("C must be positive");
    for (double c : C_grid)
      if (!(c > 0)) throw InvalidArgument("C grid values must be positive");
    if (!(nms_threshold > 0.0 && nms_threshold < 1.0))
      throw InvalidArgument("nms_threshold must be in (0, 1)");
    if (!(min_score >= 0.0 && min_score < 1.0))
      throw InvalidArgument("min_score must be in [0, 1)");
    if (n_splits < 1) throw InvalidArgument("n_splits must be >= 1");
    if (!(train_fraction > 0.0 && train_fraction < 1.0))
      throw InvalidArgument("train_fraction must be in (0, 1)");
    if (rank_max < 1) throw InvalidArgument("rank_max must be >= 1");
  }
};

namespace detail {

inline void apply_config_section(PipelineConfig& config,
                                 const nlohmann::json& section) {
  if (section.contains("flank_resize")) {
    config.flank_resize_width = section["flank_resize"].at(0).get<int>();
    config.flank_resize_height = section["flank_resize"].at(1).get<int>();
  }
  if (section.contains("net_spec"))
    config.net_spec_path = section["net_spec"].get<std::string>();
  if (section.contains("weights"))
    config.weight_path = section["weights"].get<std::string>();
  if (section.contains("pca_energy"))
    config.pca_energy = section["pca_energy"].get<double>();
  if (section.contains("C")) config.C = section["C"].get<double>();
  if (section.contains("C_grid"))
    config.C_grid = section["C_grid"].get<std::vector<double>>();
  if (section.contains("grid_folds"))
    config.grid_folds = section["grid_folds"].get<int>();
  if (section.contains("nms_threshold"))
    config.nms_threshold = section["nms_threshold"].get<double>();
  if (section.contains("min_score"))
    config.min_score = section["min_score"].get<double>();
  if (section.contains("n_splits"))
    config.n_splits = section["n_splits"].get<int>();
  if (section.contains("train_fraction"))
    config.train_fraction = section["train_fraction"].get<double>();
  if (section.contains("rank_max"))
    config.rank_max = section["rank_max"].get<int>();
  if (section.contains("use_gt_flank"))
    config.use_gt_flank = section["use_gt_flank"].get<bool>();
  if (section.contains("augment")) {
    const auto& aug = section["augment"];
    if (aug.contains("contrast_low"))
      config.augment.contrast_low_percentile = aug["contrast_low"].get<double>();
    if (aug.contains("contrast_high"))
      config.augment.contrast_high_percentile =
          aug["contrast_high"].get<double>();
    if (aug.contains("gaussian_sigma"))
      config.augment.gaussian_sigma = aug["gaussian_sigma"].get<double>();
    if (aug.contains("median_window"))
      config.augment.median_window = aug["median_window"].get<int>();
  }
}

}  // namespace detail

/// Load the config file (defaults section merged with one species preset).
/// Relative net spec / weight paths are resolved against the config file's
/// directory.
inline PipelineConfig load_config(const std::filesystem::path& path,
                                  const std::string& species) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config: " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError("malformed config JSON: " + path.string() + ": " +
                     e.what());
  }

  PipelineConfig config;
  config.species = species;
  try {
    if (j.contains("defaults"))
      detail::apply_config_section(config, j["defaults"]);
    if (!species.empty()) {
      if (!j.contains("species") || !j["species"].contains(species))
        throw FormatError("config has no preset for species '" + species +
                          "': " + path.string());
      detail::apply_config_section(config, j["species"][species]);
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("config field has the wrong type: " + path.string() +
                      ": " + e.what());
  }

  const std::filesystem::path base = path.parent_path();
  if (!config.net_spec_path.empty() && config.net_spec_path.is_relative())
    config.net_spec_path = base / config.net_spec_path;
  if (!config.weight_path.empty() && config.weight_path.is_relative())
    config.weight_path = base / config.weight_path;
  config.validate();
  return config;
}

}  // namespace patternid
