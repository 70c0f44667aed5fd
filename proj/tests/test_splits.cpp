// Copyright (c) 2026 the patternid authors
// SPDX-License-Identifier: Apache-2.0

#include <catch2/catch_amalgamated.hpp>

#include <set>

#include "patternid/splits.hpp"

#include "helpers.hpp"

using namespace patternid;

namespace {

/// Synthetic manifest: `images_per` images for each of `n` individuals.
DatasetManifest synthetic_manifest(const std::vector<int>& images_per) {
  DatasetManifest m;
  m.species = "tiger";
  int counter = 0;
  for (std::size_t i = 0; i < images_per.size(); ++i) {
    const std::string individual = "ind" + std::to_string(i);
    for (int j = 0; j < images_per[i]; ++j) {
      ImageRecord rec;
      rec.image_id = "img" + std::to_string(counter++);
      rec.individual_id = individual;
      m.records.push_back(std::move(rec));
    }
  }
  return m;
}

std::set<std::string> individuals_of(const DatasetManifest& m,
                                     const std::vector<std::string>& ids) {
  std::set<std::string> out;
  for (const std::string& id : ids)
    out.insert(*m.find(id)->individual_id);
  return out;
}

}  // namespace

TEST_CASE("make_detection_split basics") {
  SECTION("two singleton individuals at 0.5 go one per side") {
    const DatasetManifest m = synthetic_manifest({1, 1});
    const SplitSpec s = make_detection_split(m, 0.5, 3);
    CHECK(s.train_ids.size() == 1);
    CHECK(s.test_ids.size() == 1);
    CHECK(s.mode == SplitMode::disjoint_individual);
  }

  SECTION("same seed gives identical splits") {
    const DatasetManifest m = synthetic_manifest({4, 3, 5, 2, 6, 1, 7});
    const SplitSpec a = make_detection_split(m, 0.75, 99);
    const SplitSpec b = make_detection_split(m, 0.75, 99);
    CHECK(a.train_ids == b.train_ids);
    CHECK(a.test_ids == b.test_ids);
  }

  SECTION("687 images at 0.75 lands near the 516/171 protocol counts") {
    // 171 individuals with 4 images plus one with 3 = 687 total
    std::vector<int> sizes(171, 4);
    sizes.push_back(3);
    const DatasetManifest m = synthetic_manifest(sizes);
    const SplitSpec s = make_detection_split(m, 0.75, 7);
    const std::size_t train = s.train_ids.size();
    CHECK(train >= 515);
    CHECK(train <= 518);  // greedy overshoot bounded by one individual
    CHECK(s.train_ids.size() + s.test_ids.size() == 687);
  }

  SECTION("errors") {
    DatasetManifest m = synthetic_manifest({2, 2});
    m.records[0].individual_id.reset();
    CHECK_THROWS_AS(make_detection_split(m, 0.75, 1), InvalidArgument);
    CHECK_THROWS_AS(make_detection_split(synthetic_manifest({5}), 0.75, 1),
                    InvalidArgument);
  }
}

TEST_CASE("detection splits keep individuals disjoint over 100 seeds") {
  const DatasetManifest m = synthetic_manifest({3, 1, 4, 1, 5, 9, 2, 6, 5, 3});
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    const SplitSpec s = make_detection_split(m, 0.75, seed);
    CHECK(s.train_ids.size() + s.test_ids.size() == m.records.size());
    const auto train_ind = individuals_of(m, s.train_ids);
    const auto test_ind = individuals_of(m, s.test_ids);
    CHECK_FALSE(train_ind.empty());
    CHECK_FALSE(test_ind.empty());
    for (const std::string& t : test_ind) CHECK(train_ind.count(t) == 0);
    std::set<std::string> overlap;
    for (const std::string& id : s.train_ids)
      CHECK(std::find(s.test_ids.begin(), s.test_ids.end(), id) ==
            s.test_ids.end());
  }
}

TEST_CASE("make_reid_splits") {
  const DatasetManifest m = synthetic_manifest({2, 5, 8, 3, 2, 4});

  SECTION("produces n independent splits with distinct derived seeds") {
    const ReidSplits r = make_reid_splits(m, 5, 0.75, 31);
    REQUIRE(r.splits.size() == 5);
    std::set<std::uint64_t> seeds;
    for (const SplitSpec& s : r.splits) seeds.insert(s.seed);
    CHECK(seeds.size() == 5);
    CHECK(r.excluded_individuals.empty());
  }

  SECTION("an individual with 2 images gets 1 train + 1 test in every split") {
    const ReidSplits r = make_reid_splits(m, 5, 0.75, 31);
    for (const SplitSpec& s : r.splits) {
      int train = 0, test = 0;
      for (const std::string& id : s.train_ids)
        if (*m.find(id)->individual_id == "ind0") ++train;
      for (const std::string& id : s.test_ids)
        if (*m.find(id)->individual_id == "ind0") ++test;
      CHECK(train == 1);
      CHECK(test == 1);
    }
  }

  SECTION("train and test partition the eligible records in every split") {
    const ReidSplits r = make_reid_splits(m, 4, 0.75, 17);
    std::set<std::string> eligible;
    for (const ImageRecord& rec : m.records) eligible.insert(rec.image_id);
    for (const SplitSpec& s : r.splits) {
      std::set<std::string> seen;
      for (const std::string& id : s.train_ids) CHECK(seen.insert(id).second);
      for (const std::string& id : s.test_ids) CHECK(seen.insert(id).second);
      CHECK(seen == eligible);
    }
  }

  SECTION("every individual appears on both sides of every split") {
    const ReidSplits r = make_reid_splits(m, 5, 0.75, 23);
    const auto all = m.individuals();
    for (const SplitSpec& s : r.splits) {
      CHECK(individuals_of(m, s.train_ids) == all);
      CHECK(individuals_of(m, s.test_ids) == all);
    }
  }

  SECTION("single-image individuals are excluded with a report") {
    DatasetManifest with_singleton = synthetic_manifest({2, 1, 3});
    const ReidSplits r = make_reid_splits(with_singleton, 2, 0.75, 5);
    REQUIRE(r.excluded_individuals == std::vector<std::string>{"ind1"});
    for (const SplitSpec& s : r.splits)
      for (const std::string& id : s.train_ids)
        CHECK(*with_singleton.find(id)->individual_id != "ind1");
  }

  SECTION("deterministic under a fixed seed") {
    const ReidSplits a = make_reid_splits(m, 3, 0.75, 8);
    const ReidSplits b = make_reid_splits(m, 3, 0.75, 8);
    for (std::size_t i = 0; i < 3; ++i) {
      CHECK(a.splits[i].train_ids == b.splits[i].train_ids);
      CHECK(a.splits[i].test_ids == b.splits[i].test_ids);
    }
  }

  SECTION("errors") {
    CHECK_THROWS_AS(make_reid_splits(m, 0, 0.75, 1), InvalidArgument);
    CHECK_THROWS_AS(make_reid_splits(DatasetManifest{}, 5, 0.75, 1),
                    InvalidArgument);
  }
}

TEST_CASE("round-half-up train counts per individual") {
  // 3 images at 0.75 -> round(2.25) = 2 train; 5 at 0.75 -> round(3.75) = 4
  const DatasetManifest m = synthetic_manifest({3, 5});
  const ReidSplits r = make_reid_splits(m, 1, 0.75, 2);
  const SplitSpec& s = r.splits[0];
  int train0 = 0, train1 = 0;
  for (const std::string& id : s.train_ids) {
    if (*m.find(id)->individual_id == "ind0") ++train0;
    if (*m.find(id)->individual_id == "ind1") ++train1;
  }
  CHECK(train0 == 2);
  CHECK(train1 == 4);
}

TEST_CASE("split persistence round-trips") {
  testutil::TempDir dir("split_rt");
  const DatasetManifest m = synthetic_manifest({3, 4, 5});
  const SplitSpec s = make_reid_splits(m, 1, 0.75, 12).splits[0];
  save_split(s, dir / "s.json");
  const SplitSpec back = load_split(dir / "s.json");
  CHECK(back.seed == s.seed);
  CHECK(back.mode == s.mode);
  CHECK(back.train_ids == s.train_ids);
  CHECK(back.test_ids == s.test_ids);
}
