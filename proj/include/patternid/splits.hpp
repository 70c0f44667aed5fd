// Copyright (c) 2026 the patternid authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "patternid/annotations.hpp"
#include "patternid/errors.hpp"
#include "patternid/random.hpp"

namespace patternid {

enum class SplitMode { disjoint_individual, per_individual_stratified };

/// A reproducible train/test partition of a manifest's image ids.
struct SplitSpec {
  std::uint64_t seed = 0;
  double train_fraction = 0.75;
  SplitMode mode = SplitMode::per_individual_stratified;
  std::vector<std::string> train_ids;
  std::vector<std::string> test_ids;
};

namespace detail {

inline long round_half_up(double x) {
  return static_cast<long>(std::floor(x + 0.5));
}

/// Individual -> image ids, with both levels in a canonical order
/// (individuals by descending image count then id, images by id) so that
/// seeded shuffles are reproducible regardless of record order.
inline std::vector<std::pair<std::string, std::vector<std::string>>>
group_by_individual(const DatasetManifest& manifest) {
  std::map<std::string, std::vector<std::string>> groups;
  for (const ImageRecord& r : manifest.records) {
    if (!r.individual_id)
      throw InvalidArgument("record without individual_id: " + r.image_id);
    groups[*r.individual_id].push_back(r.image_id);
  }
  std::vector<std::pair<std::string, std::vector<std::string>>> out(
      groups.begin(), groups.end());
  for (auto& [id, images] : out) std::sort(images.begin(), images.end());
  std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) {
    if (a.second.size() != b.second.size())
      return a.second.size() > b.second.size();
    return a.first < b.first;
  });
  return out;
}

}  // namespace detail

/// Detection protocol: individuals are disjoint across sides. Individuals
/// are shuffled by the seed, then assigned to the train side until its
/// cumulative image count first reaches round(train_fraction * total).
inline SplitSpec make_detection_split(const DatasetManifest& manifest,
                                      double train_fraction,
                                      std::uint64_t seed) {
  if (!(train_fraction > 0.0 && train_fraction <= 1.0))
    throw InvalidArgument("train_fraction must be in (0, 1]");
  auto groups = detail::group_by_individual(manifest);
  if (groups.size() < 2)
    throw InvalidArgument("detection split needs at least 2 individuals");

  Rng rng(derive_seed(seed, 0xDE7EC7ULL));
  rng.shuffle(groups);

  std::size_t total = 0;
  for (const auto& [id, images] : groups) total += images.size();
  const long target = std::max<long>(
      1, detail::round_half_up(train_fraction * static_cast<double>(total)));

  SplitSpec split;
  split.seed = seed;
  split.train_fraction = train_fraction;
  split.mode = SplitMode::disjoint_individual;
  long cumulative = 0;
  std::size_t i = 0;
  for (; i < groups.size() && cumulative < target; ++i) {
    cumulative += static_cast<long>(groups[i].second.size());
    for (const auto& img : groups[i].second) split.train_ids.push_back(img);
  }
  for (; i < groups.size(); ++i)
    for (const auto& img : groups[i].second) split.test_ids.push_back(img);

  if (split.test_ids.empty()) {
    // fraction high enough to swallow everything: demote the last assigned
    // individual so both sides stay nonempty
    for (const auto& img : groups.back().second) {
      auto it = std::find(split.train_ids.begin(), split.train_ids.end(), img);
      if (it != split.train_ids.end()) split.train_ids.erase(it);
      split.test_ids.push_back(img);
    }
  }
  return split;
}

/// Result of the recognition split protocol: individuals with a single
/// image cannot appear on both sides and are excluded (reported, not
/// silently dropped).
struct ReidSplits {
  std::vector<SplitSpec> splits;
  std::vector<std::string> excluded_individuals;
};

/// Recognition protocol: n_splits independent stratified partitions. Within
/// each individual, round(train_fraction * count) images go to train with at
/// least one image on each side.
inline ReidSplits make_reid_splits(const DatasetManifest& manifest,
                                   int n_splits, double train_fraction,
                                   std::uint64_t seed) {
  if (n_splits < 1) throw InvalidArgument("n_splits must be >= 1");
  if (manifest.records.empty()) throw InvalidArgument("empty manifest");
  if (!(train_fraction > 0.0 && train_fraction < 1.0))
    throw InvalidArgument("train_fraction must be in (0, 1)");

  auto groups = detail::group_by_individual(manifest);
  ReidSplits result;
  std::vector<std::pair<std::string, std::vector<std::string>>> eligible;
  for (auto& g : groups) {
    if (g.second.size() >= 2)
      eligible.push_back(g);
    else
      result.excluded_individuals.push_back(g.first);
  }
  std::sort(result.excluded_individuals.begin(),
            result.excluded_individuals.end());
  if (eligible.empty())
    throw InvalidArgument("no individual has at least 2 images");

  for (int s = 0; s < n_splits; ++s) {
    SplitSpec split;
    split.seed = derive_seed(seed, static_cast<std::uint64_t>(s));
    split.train_fraction = train_fraction;
    split.mode = SplitMode::per_individual_stratified;
    Rng rng(split.seed);
    for (const auto& [individual, images] : eligible) {
      std::vector<std::string> shuffled = images;
      rng.shuffle(shuffled);
      const long count = static_cast<long>(shuffled.size());
      long n_train = detail::round_half_up(train_fraction * count);
      n_train = std::clamp<long>(n_train, 1, count - 1);
      for (long i = 0; i < count; ++i)
        (i < n_train ? split.train_ids : split.test_ids)
            .push_back(shuffled[static_cast<std::size_t>(i)]);
    }
    result.splits.push_back(std::move(split));
  }
  return result;
}

inline void save_split(const SplitSpec& split,
                       const std::filesystem::path& path) {
  nlohmann::ordered_json j;
  j["seed"] = split.seed;
  j["train_fraction"] = split.train_fraction;
  j["mode"] = split.mode == SplitMode::disjoint_individual
                  ? "disjoint_individual"
                  : "per_individual_stratified";
  j["train_ids"] = split.train_ids;
  j["test_ids"] = split.test_ids;
  std::ofstream out(path);
  if (!out) throw IoError("cannot open file for writing: " + path.string());
  out << j.dump(2) << "\n";
  if (!out) throw IoError("write failure: " + path.string());
}

inline SplitSpec load_split(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open split file: " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError("malformed split JSON: " + path.string() + ": " +
                     e.what());
  }
  SplitSpec split;
  try {
    split.seed = j.at("seed").get<std::uint64_t>();
    split.train_fraction = j.at("train_fraction").get<double>();
    const std::string mode = j.at("mode").get<std::string>();
    if (mode == "disjoint_individual")
      split.mode = SplitMode::disjoint_individual;
    else if (mode == "per_individual_stratified")
      split.mode = SplitMode::per_individual_stratified;
    else
      throw FormatError("unknown split mode: " + mode);
    split.train_ids = j.at("train_ids").get<std::vector<std::string>>();
    split.test_ids = j.at("test_ids").get<std::vector<std::string>>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("split file missing mandatory field: " + path.string() +
                      ": " + e.what());
  }
  return split;
}

}  // namespace patternid
