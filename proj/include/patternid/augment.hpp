// Copyright (c) 2026 the patternid authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include "patternid/errors.hpp"
#include "patternid/image.hpp"
#include "patternid/random.hpp"

namespace patternid {

/// Parameters of the recognition-side training augmentation: each input
/// image yields itself, a contrast-enhanced variant and one randomly
/// filtered variant (Gaussian or median, chosen per image index from the
/// seed). Same seed + same input set always reproduces the same output.
struct AugmentationPlan {
  std::uint64_t seed = 0;
  double contrast_low_percentile = 0.02;
  double contrast_high_percentile = 0.98;
  double gaussian_sigma = 1.0;
  int median_window = 3;

  void validate() const {
    if (!(contrast_low_percentile >= 0.0 && contrast_low_percentile < 0.5))
      throw InvalidArgument("contrast_low_percentile must be in [0, 0.5)");
    if (!(contrast_high_percentile > 0.5 && contrast_high_percentile <= 1.0))
      throw InvalidArgument("contrast_high_percentile must be in (0.5, 1]");
    if (!(contrast_low_percentile < contrast_high_percentile))
      throw InvalidArgument("contrast percentiles out of order");
    if (!(gaussian_sigma > 0))
      throw InvalidArgument("gaussian_sigma must be positive");
    if (median_window < 3 || median_window % 2 == 0)
      throw InvalidArgument("median_window must be an odd integer >= 3");
  }
};

/// The plan's filter choice for one image index: true selects the Gaussian
/// filter, false the median filter. Pure function of (seed, index).
inline bool plan_chooses_gaussian(const AugmentationPlan& plan,
                                  std::size_t index) {
  return (derive_seed(plan.seed, index) & 1ULL) == 0;
}

namespace detail {

/// Linear-interpolated order statistic of a sorted sample, numpy style:
/// position p*(n-1) between neighbors.
inline double percentile_sorted(const std::vector<std::uint8_t>& sorted,
                                double p) {
  const double pos = p * static_cast<double>(sorted.size() - 1);
  const std::size_t lo = static_cast<std::size_t>(pos);
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return (1.0 - frac) * sorted[lo] + frac * sorted[hi];
}

}  // namespace detail

/// Per-channel linear stretch mapping the plan's low/high percentile
/// intensities to 0 and 255. A channel with no spread between the two
/// percentiles is left unchanged.
inline ImageBuffer enhance_contrast(const ImageBuffer& img,
                                    const AugmentationPlan& plan) {
  if (!img.valid()) throw InvalidArgument("invalid image buffer");
  plan.validate();
  ImageBuffer out = img;
  const std::size_t n = static_cast<std::size_t>(img.width) * img.height;
  std::vector<std::uint8_t> values(n);
  for (int c = 0; c < img.channels; ++c) {
    for (std::size_t i = 0; i < n; ++i)
      values[i] = img.pixels[i * img.channels + c];
    std::sort(values.begin(), values.end());
    const double lo = detail::percentile_sorted(values, plan.contrast_low_percentile);
    const double hi = detail::percentile_sorted(values, plan.contrast_high_percentile);
    if (hi - lo < 1e-12) continue;  // constant channel: identity
    const double scale = 255.0 / (hi - lo);
    for (std::size_t i = 0; i < n; ++i) {
      const double v = (img.pixels[i * img.channels + c] - lo) * scale;
      out.pixels[i * img.channels + c] =
          static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 255.0)));
    }
  }
  return out;
}

/// Separable Gaussian blur, kernel radius ceil(3*sigma), kernel normalized
/// to sum 1, borders replicated.
inline ImageBuffer gaussian_filter(const ImageBuffer& img, double sigma) {
  if (!img.valid()) throw InvalidArgument("invalid image buffer");
  if (!(sigma > 0)) throw InvalidArgument("sigma must be positive");

  const int radius = static_cast<int>(std::ceil(3.0 * sigma));
  std::vector<double> kernel(2 * radius + 1);
  double sum = 0;
  for (int i = -radius; i <= radius; ++i) {
    kernel[i + radius] = std::exp(-0.5 * (i * i) / (sigma * sigma));
    sum += kernel[i + radius];
  }
  for (double& k : kernel) k /= sum;

  const int w = img.width, h = img.height, ch = img.channels;
  std::vector<double> tmp(static_cast<std::size_t>(w) * h * ch);
  // horizontal pass
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < ch; ++c) {
        double acc = 0;
        for (int i = -radius; i <= radius; ++i) {
          const int xi = std::clamp(x + i, 0, w - 1);
          acc += kernel[i + radius] * img.at(xi, y, c);
        }
        tmp[(static_cast<std::size_t>(y) * w + x) * ch + c] = acc;
      }
  // vertical pass
  ImageBuffer out(w, h, ch);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < ch; ++c) {
        double acc = 0;
        for (int i = -radius; i <= radius; ++i) {
          const int yi = std::clamp(y + i, 0, h - 1);
          acc += kernel[i + radius] *
                 tmp[(static_cast<std::size_t>(yi) * w + x) * ch + c];
        }
        out.at(x, y, c) =
            static_cast<std::uint8_t>(std::lround(std::clamp(acc, 0.0, 255.0)));
      }
  return out;
}

/// Per-channel median over a window x window neighborhood, borders
/// replicated.
inline ImageBuffer median_filter(const ImageBuffer& img, int window) {
  if (!img.valid()) throw InvalidArgument("invalid image buffer");
  if (window < 3 || window % 2 == 0)
    throw InvalidArgument("median window must be an odd integer >= 3");

  const int radius = window / 2;
  ImageBuffer out(img.width, img.height, img.channels);
  std::vector<std::uint8_t> neighborhood;
  neighborhood.reserve(static_cast<std::size_t>(window) * window);
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x)
      for (int c = 0; c < img.channels; ++c) {
        neighborhood.clear();
        for (int dy = -radius; dy <= radius; ++dy)
          for (int dx = -radius; dx <= radius; ++dx) {
            const int xi = std::clamp(x + dx, 0, img.width - 1);
            const int yi = std::clamp(y + dy, 0, img.height - 1);
            neighborhood.push_back(img.at(xi, yi, c));
          }
        auto mid = neighborhood.begin() + neighborhood.size() / 2;
        std::nth_element(neighborhood.begin(), mid, neighborhood.end());
        out.at(x, y, c) = *mid;
      }
  return out;
}

/// Expand a training set to exactly 3x its size: for each input, emit the
/// original, its contrast-enhanced variant, and its filtered variant.
inline std::vector<ImageBuffer> augment_recognition_set(
    const std::vector<ImageBuffer>& images, const AugmentationPlan& plan) {
  if (images.empty()) throw InvalidArgument("empty augmentation input");
  plan.validate();
  std::vector<ImageBuffer> out;
  out.reserve(images.size() * 3);
  for (std::size_t i = 0; i < images.size(); ++i) {
    out.push_back(images[i]);
    out.push_back(enhance_contrast(images[i], plan));
    out.push_back(plan_chooses_gaussian(plan, i)
                      ? gaussian_filter(images[i], plan.gaussian_sigma)
                      : median_filter(images[i], plan.median_window));
  }
  return out;
}

}  // namespace patternid
