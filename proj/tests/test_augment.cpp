// Copyright (c) 2026 the patternid authors
// SPDX-License-Identifier: Apache-2.0

#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "patternid/augment.hpp"

#include "helpers.hpp"
#include "oracles.hpp"

using namespace patternid;

TEST_CASE("enhance_contrast") {
  AugmentationPlan plan;

  SECTION("channel spanning the full range at the chosen percentiles") {
    plan.contrast_low_percentile = 0.0;
    plan.contrast_high_percentile = 1.0;
    ImageBuffer img(16, 1, 1);
    for (int x = 0; x < 16; ++x)
      img.at(x, 0, 0) = static_cast<std::uint8_t>(x * 17);  // 0..255
    const ImageBuffer out = enhance_contrast(img, plan);
    for (int x = 0; x < 16; ++x)
      CHECK(std::abs(out.at(x, 0, 0) - img.at(x, 0, 0)) <= 1);
  }

  SECTION("constant image is untouched") {
    ImageBuffer img(8, 8, 3, 99);
    CHECK(enhance_contrast(img, plan).pixels == img.pixels);
  }

  SECTION("values 50..200 with 0/1 percentiles stretch to 0..255") {
    plan.contrast_low_percentile = 0.0;
    plan.contrast_high_percentile = 1.0;
    ImageBuffer img(151, 1, 1);
    for (int x = 0; x < 151; ++x)
      img.at(x, 0, 0) = static_cast<std::uint8_t>(50 + x);
    const ImageBuffer out = enhance_contrast(img, plan);
    CHECK(out.at(0, 0, 0) == 0);
    CHECK(out.at(150, 0, 0) == 255);
    for (int x = 1; x < 151; ++x)
      CHECK(out.at(x, 0, 0) >= out.at(x - 1, 0, 0));
  }

  SECTION("percentile preconditions") {
    plan.contrast_low_percentile = 0.6;
    ImageBuffer img(2, 2, 1, 0);
    CHECK_THROWS_AS(enhance_contrast(img, plan), InvalidArgument);
  }
}

TEST_CASE("gaussian_filter") {
  SECTION("constant image is unchanged") {
    ImageBuffer img(12, 9, 3, 123);
    CHECK(gaussian_filter(img, 1.0).pixels == img.pixels);
  }

  SECTION("impulse response is symmetric and decays") {
    ImageBuffer img(11, 11, 1, 0);
    img.at(5, 5, 0) = 255;
    const ImageBuffer out = gaussian_filter(img, 1.0);
    CHECK(out.at(5, 5, 0) > out.at(4, 5, 0));
    CHECK(out.at(4, 5, 0) > out.at(3, 5, 0));
    CHECK(out.at(4, 5, 0) == out.at(6, 5, 0));
    CHECK(out.at(5, 4, 0) == out.at(5, 6, 0));
    CHECK(out.at(5, 4, 0) == out.at(4, 5, 0));
  }

  SECTION("normalized kernel keeps the mean within 0.5 on a smooth image") {
    ImageBuffer img(32, 32, 1);
    for (int y = 0; y < 32; ++y)
      for (int x = 0; x < 32; ++x)
        img.at(x, y, 0) = static_cast<std::uint8_t>(
            128 + 60 * std::sin(x * 0.4) * std::cos(y * 0.3));
    const ImageBuffer out = gaussian_filter(img, 1.0);
    double mean_in = 0, mean_out = 0;
    for (std::size_t i = 0; i < img.pixels.size(); ++i) {
      mean_in += img.pixels[i];
      mean_out += out.pixels[i];
    }
    mean_in /= static_cast<double>(img.pixels.size());
    mean_out /= static_cast<double>(out.pixels.size());
    CHECK(std::abs(mean_in - mean_out) < 0.5);
  }

  SECTION("rejects non-positive sigma") {
    ImageBuffer img(2, 2, 1, 0);
    CHECK_THROWS_AS(gaussian_filter(img, 0.0), InvalidArgument);
    CHECK_THROWS_AS(gaussian_filter(img, -1.0), InvalidArgument);
  }
}

TEST_CASE("median_filter") {
  SECTION("constant image is unchanged") {
    ImageBuffer img(7, 5, 3, 42);
    CHECK(median_filter(img, 3).pixels == img.pixels);
  }

  SECTION("single salt pixel disappears") {
    ImageBuffer img(9, 9, 1, 10);
    img.at(4, 4, 0) = 255;
    const ImageBuffer out = median_filter(img, 3);
    for (auto p : out.pixels) CHECK(p == 10);
  }

  SECTION("agrees exactly with the sort-based oracle") {
    for (std::uint64_t seed : {1ULL, 2ULL, 3ULL, 4ULL}) {
      const ImageBuffer img = testutil::random_image(8, 8, 3, seed);
      for (int window : {3, 5}) {
        const ImageBuffer ours = median_filter(img, window);
        const ImageBuffer ref = oracle::median_reference(img, window);
        CHECK(ours.pixels == ref.pixels);
      }
    }
  }

  SECTION("rejects even or tiny windows") {
    ImageBuffer img(4, 4, 1, 0);
    CHECK_THROWS_AS(median_filter(img, 4), InvalidArgument);
    CHECK_THROWS_AS(median_filter(img, 1), InvalidArgument);
  }
}

TEST_CASE("augment_recognition_set") {
  AugmentationPlan plan;
  plan.seed = 11;
  std::vector<ImageBuffer> inputs;
  for (std::uint64_t i = 0; i < 5; ++i)
    inputs.push_back(testutil::random_image(12, 10, 3, 100 + i));

  SECTION("5 inputs produce exactly 15 outputs") {
    CHECK(augment_recognition_set(inputs, plan).size() == 15);
  }

  SECTION("deterministic under a fixed seed") {
    const auto a = augment_recognition_set(inputs, plan);
    const auto b = augment_recognition_set(inputs, plan);
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i)
      CHECK(a[i].pixels == b[i].pixels);
  }

  SECTION("every third output is the untouched original") {
    const auto out = augment_recognition_set(inputs, plan);
    for (std::size_t i = 0; i < inputs.size(); ++i)
      CHECK(out[3 * i].pixels == inputs[i].pixels);
  }

  SECTION("filter variant matches the plan's per-index choice") {
    const auto out = augment_recognition_set(inputs, plan);
    for (std::size_t i = 0; i < inputs.size(); ++i) {
      const ImageBuffer expected =
          plan_chooses_gaussian(plan, i)
              ? gaussian_filter(inputs[i], plan.gaussian_sigma)
              : median_filter(inputs[i], plan.median_window);
      CHECK(out[3 * i + 2].pixels == expected.pixels);
    }
  }

  SECTION("empty input is an error") {
    CHECK_THROWS_AS(augment_recognition_set({}, plan), InvalidArgument);
  }
}
