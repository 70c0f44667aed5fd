// Copyright (c) 2026 the patternid authors
// SPDX-License-Identifier: Apache-2.0

// Procedural striped-animal dataset used by the end-to-end tests: each
// individual gets a distinct stripe pattern, rendered under seeded pose,
// contrast and blur jitter, with ground-truth body/flank boxes, identities,
// a raw-detections file, a small random-weight conv spec and a config.

#pragma once

#include <cmath>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "patternid/annotations.hpp"
#include "patternid/augment.hpp"
#include "patternid/config.hpp"
#include "patternid/detection.hpp"
#include "patternid/image.hpp"
#include "patternid/net.hpp"
#include "patternid/random.hpp"

namespace synthetic {

struct Options {
  int n_individuals = 20;
  int views_per_individual = 10;
  int frame_width = 200;
  int frame_height = 150;
  int flank_width = 120;
  int flank_height = 80;
  int net_input_width = 256;   // must match the config's flank_resize
  int net_input_height = 192;
  std::uint64_t seed = 7;
};

struct Dataset {
  std::filesystem::path root;
  std::filesystem::path annotations_dir;
  std::filesystem::path images_dir;
  std::filesystem::path identity_table;
  std::filesystem::path detections_csv;
  std::filesystem::path net_spec;
  std::filesystem::path weights;
  std::filesystem::path manifest_json;
  patternid::DatasetManifest manifest;
};

/// Two conv blocks; small enough to run hundreds of forwards per second at
/// the paper-scale input geometry.
inline patternid::ConvNetSpec small_conv_net(int input_height,
                                             int input_width) {
  patternid::ConvNetSpec spec;
  spec.name = "small_conv";
  spec.input_height = input_height;
  spec.input_width = input_width;
  spec.input_channels = 3;
  spec.channel_mean = {110.0f, 110.0f, 110.0f};
  spec.layers = {
      patternid::ConvParams{"c1", 8, 5, 5, 2, 2, 1},
      patternid::ReluParams{},
      patternid::MaxPoolParams{3, 2, patternid::PoolRounding::ceil},
      patternid::ConvParams{"c2", 16, 3, 3, 1, 1, 1},
      patternid::ReluParams{},
      patternid::MaxPoolParams{3, 2, patternid::PoolRounding::ceil},
  };
  spec.tap_point = static_cast<int>(spec.layers.size()) - 1;
  return spec;
}

namespace detail {

/// A stripe pattern: a few seeded sinusoids thresholded into bands.
struct StripePattern {
  double freq[4];
  double phase[4];
  double amp[4];
  double vert_freq;
  double vert_amp;
  int dark, bright;
  int tint[3];

  static StripePattern make(patternid::Rng& rng) {
    StripePattern p{};
    for (int j = 0; j < 4; ++j) {
      p.freq[j] = rng.next_double(2.5, 14.0);
      p.phase[j] = rng.next_double(0.0, 6.28318530717958647692);
      p.amp[j] = rng.next_double(0.4, 1.0);
    }
    p.vert_freq = rng.next_double(0.8, 3.0);
    p.vert_amp = rng.next_double(0.1, 0.35);
    p.dark = 35 + static_cast<int>(rng.next_below(30));
    p.bright = 165 + static_cast<int>(rng.next_below(55));
    for (int c = 0; c < 3; ++c)
      p.tint[c] = static_cast<int>(rng.next_below(25)) - 12;
    return p;
  }

  int value(double u, double v) const {
    double s = 0;
    for (int j = 0; j < 4; ++j)
      s += amp[j] * std::sin(6.28318530717958647692 * freq[j] * u + phase[j]);
    s += vert_amp * std::sin(6.28318530717958647692 * vert_freq * v);
    return s > 0 ? bright : dark;
  }
};

inline std::uint8_t clamp_byte(int v) {
  return static_cast<std::uint8_t>(std::min(255, std::max(0, v)));
}

}  // namespace detail

/// Build the dataset under `root` and return every path the pipeline needs.
inline Dataset generate(const std::filesystem::path& root,
                        const Options& opts = {}) {
  namespace fs = std::filesystem;
  using patternid::ImageBuffer;

  Dataset ds;
  ds.root = root;
  ds.annotations_dir = root / "annotations";
  ds.images_dir = root / "images";
  ds.identity_table = root / "identities.tsv";
  ds.detections_csv = root / "detections.csv";
  ds.net_spec = root / "net.json";
  ds.weights = root / "weights.ntb";
  ds.manifest_json = root / "manifest.json";
  fs::create_directories(ds.annotations_dir);
  fs::create_directories(ds.images_dir);

  std::vector<detail::StripePattern> patterns;
  for (int i = 0; i < opts.n_individuals; ++i) {
    patternid::Rng rng(patternid::derive_seed(opts.seed, 1000 + i));
    patterns.push_back(detail::StripePattern::make(rng));
  }

  std::ofstream ids(ds.identity_table);
  ids << "# synthetic striped individuals\n";
  std::vector<patternid::DetectorOutput> detections;

  for (int i = 0; i < opts.n_individuals; ++i) {
    for (int view = 0; view < opts.views_per_individual; ++view) {
      patternid::Rng rng(patternid::derive_seed(
          opts.seed, 50000 + i * 1000 + view));
      const detail::StripePattern& pat = patterns[static_cast<std::size_t>(i)];

      // pose jitter: where the texture window sits on the animal
      const double u_shift = rng.next_double(-0.04, 0.04);
      const double u_scale = rng.next_double(0.94, 1.06);
      const double v_shift = rng.next_double(-0.03, 0.03);
      // photometric jitter
      const double gain = rng.next_double(0.88, 1.12);
      const int offset = static_cast<int>(rng.next_below(21)) - 10;

      // flank placement inside the frame
      const int margin = 14;
      const int x0 = margin + static_cast<int>(rng.next_below(
                         static_cast<std::uint64_t>(
                             opts.frame_width - opts.flank_width - 2 * margin)));
      const int y0 = margin + static_cast<int>(rng.next_below(
                         static_cast<std::uint64_t>(opts.frame_height -
                                                    opts.flank_height -
                                                    2 * margin)));

      ImageBuffer frame(opts.frame_width, opts.frame_height, 3);
      for (int y = 0; y < opts.frame_height; ++y)
        for (int x = 0; x < opts.frame_width; ++x) {
          const int base = 85 + static_cast<int>(rng.next_below(25));
          for (int c = 0; c < 3; ++c)
            frame.at(x, y, c) = detail::clamp_byte(base + 6 * c);
        }

      for (int y = y0; y < y0 + opts.flank_height; ++y)
        for (int x = x0; x < x0 + opts.flank_width; ++x) {
          const double u =
              (static_cast<double>(x - x0) / opts.flank_width) * u_scale +
              u_shift;
          const double v =
              (static_cast<double>(y - y0) / opts.flank_height) + v_shift;
          const int noise = static_cast<int>(rng.next_below(11)) - 5;
          const int value = static_cast<int>(
              gain * pat.value(u, v) + offset + noise);
          for (int c = 0; c < 3; ++c)
            frame.at(x, y, c) = detail::clamp_byte(value + pat.tint[c]);
        }

      // a third of the views get a mild blur
      if (view % 3 == 2)
        frame = patternid::gaussian_filter(frame, rng.next_double(0.4, 0.9));

      char name[64];
      std::snprintf(name, sizeof(name), "img_%03d_%02d", i, view);
      const std::string image_id = name;
      const fs::path image_path = ds.images_dir / (image_id + ".ppm");
      patternid::save_image(frame, image_path);

      patternid::ImageRecord rec;
      rec.image_id = image_id;
      rec.path = image_id + ".ppm";
      rec.width = opts.frame_width;
      rec.height = opts.frame_height;
      const patternid::LabeledBox flank{
          "flank", static_cast<double>(x0), static_cast<double>(y0),
          static_cast<double>(x0 + opts.flank_width),
          static_cast<double>(y0 + opts.flank_height)};
      patternid::LabeledBox body{
          "tiger", std::max(0.0, flank.x_min - 12),
          std::max(0.0, flank.y_min - 10),
          std::min<double>(opts.frame_width, flank.x_max + 12),
          std::min<double>(opts.frame_height, flank.y_max + 10)};
      rec.boxes = {body, flank};
      patternid::write_voc_xml(rec, ds.annotations_dir / (image_id + ".xml"));
      ids << image_id << "\tind" << (i < 10 ? "0" : "") << i << "\n";

      patternid::DetectorOutput out;
      out.image_id = image_id;
      out.detections.push_back({body, 0.95});
      out.detections.push_back({flank, 0.92});
      // one low-confidence distractor that the score filter must drop
      out.detections.push_back(
          {patternid::LabeledBox{"tiger", 1, 1, 30, 25}, 0.45});
      detections.push_back(std::move(out));
    }
  }
  ids.close();
  patternid::save_raw_detections(detections, ds.detections_csv);

  const patternid::ConvNetSpec spec =
      small_conv_net(opts.net_input_height, opts.net_input_width);
  patternid::save_net_spec(spec, ds.net_spec);
  patternid::random_weights(spec, patternid::derive_seed(opts.seed, 0xCAFE))
      .save(ds.weights);

  ds.manifest = patternid::build_manifest(ds.annotations_dir,
                                          ds.identity_table, "tiger",
                                          ds.images_dir);
  patternid::save_manifest(ds.manifest, ds.manifest_json);
  return ds;
}

/// Matching pipeline config for a generated dataset.
inline patternid::PipelineConfig config_for(const Dataset& ds,
                                            const Options& opts,
                                            std::uint64_t run_seed) {
  patternid::PipelineConfig config;
  config.species = "tiger";
  config.flank_resize_width = opts.net_input_width;
  config.flank_resize_height = opts.net_input_height;
  config.net_spec_path = ds.net_spec;
  config.weight_path = ds.weights;
  config.C = 1e6;
  config.seed = run_seed;
  return config;
}

}  // namespace synthetic
