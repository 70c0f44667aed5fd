// Copyright (c) 2026 the patternid authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <variant>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "patternid/errors.hpp"
#include "patternid/image.hpp"
#include "patternid/random.hpp"
#include "patternid/tensor.hpp"
#include "patternid/tensor_io.hpp"

namespace patternid {

struct ConvParams {
  std::string name;  // weight store keys are "<name>.weight" / "<name>.bias"
  int out_channels = 0;
  int kernel_h = 0;
  int kernel_w = 0;
  int stride = 1;
  int padding = 0;
  int groups = 1;
};

struct ReluParams {};

struct LrnParams {
  int local_size = 5;
  double alpha = 1e-4;
  double beta = 0.75;
  double k = 1.0;
};

enum class PoolRounding { ceil, floor };

struct MaxPoolParams {
  int kernel = 0;
  int stride = 1;
  PoolRounding rounding = PoolRounding::ceil;
};

using LayerSpec = std::variant<ConvParams, ReluParams, LrnParams,
                               MaxPoolParams>;

/// Declarative layer stack with a tap point: the feature is the output of
/// layers[tap_point]. Preprocessing is per-channel mean subtraction.
struct ConvNetSpec {
  std::string name;
  int input_height = 0;
  int input_width = 0;
  int input_channels = 0;
  std::vector<float> channel_mean;  // one entry per input channel
  std::vector<LayerSpec> layers;
  int tap_point = 0;
};

struct Shape3 {
  int channels = 0;
  int height = 0;
  int width = 0;

  std::size_t count() const {
    return static_cast<std::size_t>(channels) * height * width;
  }
  friend bool operator==(const Shape3& a, const Shape3& b) {
    return a.channels == b.channels && a.height == b.height &&
           a.width == b.width;
  }
};

namespace detail {

inline int conv_out_dim(int in, int kernel, int stride, int padding) {
  return (in + 2 * padding - kernel) / stride + 1;
}

inline int pool_out_dim(int in, int kernel, int stride,
                        PoolRounding rounding) {
  const int span = in - kernel;
  int out = rounding == PoolRounding::ceil
                ? static_cast<int>(
                      std::ceil(static_cast<double>(span) / stride)) + 1
                : span / stride + 1;
  // a partial ceil-mode window must still start inside the input
  if (out > 1 && (out - 1) * stride >= in) --out;
  return out;
}

}  // namespace detail

/// Pure shape arithmetic for every layer, validating that each intermediate
/// stays at least 1x1.
inline std::vector<Shape3> layer_shapes(const ConvNetSpec& spec) {
  Shape3 shape{spec.input_channels, spec.input_height, spec.input_width};
  if (shape.channels < 1 || shape.height < 1 || shape.width < 1)
    throw InvalidArgument("net input geometry must be at least 1x1x1");
  std::vector<Shape3> shapes;
  for (std::size_t i = 0; i < spec.layers.size(); ++i) {
    const LayerSpec& layer = spec.layers[i];
    if (const auto* conv = std::get_if<ConvParams>(&layer)) {
      if (conv->groups < 1 || shape.channels % conv->groups != 0 ||
          conv->out_channels % conv->groups != 0)
        throw InvalidArgument("conv '" + conv->name +
                              "': channels not divisible by groups");
      shape.height = detail::conv_out_dim(shape.height, conv->kernel_h,
                                          conv->stride, conv->padding);
      shape.width = detail::conv_out_dim(shape.width, conv->kernel_w,
                                         conv->stride, conv->padding);
      shape.channels = conv->out_channels;
    } else if (const auto* pool = std::get_if<MaxPoolParams>(&layer)) {
      shape.height = detail::pool_out_dim(shape.height, pool->kernel,
                                          pool->stride, pool->rounding);
      shape.width = detail::pool_out_dim(shape.width, pool->kernel,
                                         pool->stride, pool->rounding);
    } else if (const auto* lrn = std::get_if<LrnParams>(&layer)) {
      if (lrn->local_size < 1 || lrn->local_size % 2 == 0)
        throw InvalidArgument("lrn local_size must be odd");
    }
    if (shape.height < 1 || shape.width < 1)
      throw InvalidArgument("layer " + std::to_string(i) +
                            " collapses the spatial extent below 1");
    shapes.push_back(shape);
  }
  return shapes;
}

/// Shape at the tap point.
inline Shape3 output_shape(const ConvNetSpec& spec) {
  const auto shapes = layer_shapes(spec);
  if (spec.tap_point < 0 ||
      static_cast<std::size_t>(spec.tap_point) >= shapes.size())
    throw InvalidArgument("tap_point outside the layer range");
  return shapes[static_cast<std::size_t>(spec.tap_point)];
}

/// Grouped 2-D cross-correlation with per-output-channel bias and zero
/// padding, via im2col + GEMM.
inline Tensor conv2d(const Tensor& input, const ConvParams& conv,
                     const WeightStore& weights) {
  if (conv.groups < 1 || input.channels % conv.groups != 0 ||
      conv.out_channels % conv.groups != 0)
    throw InvalidArgument("conv '" + conv.name +
                          "': channels not divisible by groups");
  const int out_h = detail::conv_out_dim(input.height, conv.kernel_h,
                                         conv.stride, conv.padding);
  const int out_w = detail::conv_out_dim(input.width, conv.kernel_w,
                                         conv.stride, conv.padding);
  if (out_h < 1 || out_w < 1)
    throw InvalidArgument("conv '" + conv.name + "': empty output");

  const NamedTensor& weight = weights.get(conv.name + ".weight");
  const NamedTensor& bias = weights.get(conv.name + ".bias");
  const int in_per_group = input.channels / conv.groups;
  const int out_per_group = conv.out_channels / conv.groups;
  const std::vector<std::uint64_t> expected_shape = {
      static_cast<std::uint64_t>(conv.out_channels),
      static_cast<std::uint64_t>(in_per_group),
      static_cast<std::uint64_t>(conv.kernel_h),
      static_cast<std::uint64_t>(conv.kernel_w)};
  if (weight.shape != expected_shape)
    throw InvalidArgument("conv '" + conv.name + "': weight shape mismatch");
  if (bias.shape != std::vector<std::uint64_t>{
                        static_cast<std::uint64_t>(conv.out_channels)})
    throw InvalidArgument("conv '" + conv.name + "': bias shape mismatch");

  const int patch = in_per_group * conv.kernel_h * conv.kernel_w;
  const int cols = out_h * out_w;
  Eigen::MatrixXf col_buffer(patch, cols);
  Tensor out(conv.out_channels, out_h, out_w);

  using RowMajorMap = Eigen::Map<const Eigen::Matrix<
      float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
  for (int g = 0; g < conv.groups; ++g) {
    // im2col for this group's input slice
    for (int c = 0; c < in_per_group; ++c) {
      const int in_c = g * in_per_group + c;
      for (int ky = 0; ky < conv.kernel_h; ++ky)
        for (int kx = 0; kx < conv.kernel_w; ++kx) {
          const int row = (c * conv.kernel_h + ky) * conv.kernel_w + kx;
          for (int oy = 0; oy < out_h; ++oy) {
            const int y = oy * conv.stride + ky - conv.padding;
            for (int ox = 0; ox < out_w; ++ox) {
              const int x = ox * conv.stride + kx - conv.padding;
              col_buffer(row, oy * out_w + ox) =
                  (y < 0 || y >= input.height || x < 0 || x >= input.width)
                      ? 0.0f
                      : input.at(in_c, y, x);
            }
          }
        }
    }
    RowMajorMap w_map(weight.values.data() +
                          static_cast<std::size_t>(g) * out_per_group * patch,
                      out_per_group, patch);
    Eigen::Map<Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic,
                             Eigen::RowMajor>>
        out_map(out.data.data() +
                    static_cast<std::size_t>(g) * out_per_group * cols,
                out_per_group, cols);
    out_map.noalias() = w_map * col_buffer;
    for (int oc = 0; oc < out_per_group; ++oc)
      out_map.row(oc).array() += bias.values[static_cast<std::size_t>(
          g * out_per_group + oc)];
  }
  return out;
}

/// Elementwise max(0, x).
inline Tensor relu(const Tensor& input) {
  Tensor out = input;
  for (float& v : out.data) v = std::max(0.0f, v);
  return out;
}

/// Across-channel local response normalization:
/// y = x / (k + (alpha/local_size) * sum of x^2 over the channel window)^beta
inline Tensor lrn(const Tensor& input, const LrnParams& params) {
  if (params.local_size < 1 || params.local_size % 2 == 0)
    throw InvalidArgument("lrn local_size must be odd");
  const int half = params.local_size / 2;
  Tensor out(input.channels, input.height, input.width);
  for (int y = 0; y < input.height; ++y)
    for (int x = 0; x < input.width; ++x)
      for (int c = 0; c < input.channels; ++c) {
        double sum_sq = 0;
        const int c0 = std::max(0, c - half);
        const int c1 = std::min(input.channels - 1, c + half);
        for (int j = c0; j <= c1; ++j) {
          const double v = input.at(j, y, x);
          sum_sq += v * v;
        }
        const double denom = std::pow(
            params.k + params.alpha / params.local_size * sum_sq, params.beta);
        out.at(c, y, x) = static_cast<float>(input.at(c, y, x) / denom);
      }
  return out;
}

/// Per-channel window max. Ceil-mode windows may extend past the input and
/// are clipped to it.
inline Tensor maxpool(const Tensor& input, const MaxPoolParams& params) {
  const int out_h = detail::pool_out_dim(input.height, params.kernel,
                                         params.stride, params.rounding);
  const int out_w = detail::pool_out_dim(input.width, params.kernel,
                                         params.stride, params.rounding);
  Tensor out(input.channels, out_h, out_w);
  for (int c = 0; c < input.channels; ++c)
    for (int oy = 0; oy < out_h; ++oy) {
      const int y0 = oy * params.stride;
      const int y1 = std::min(y0 + params.kernel, input.height);
      for (int ox = 0; ox < out_w; ++ox) {
        const int x0 = ox * params.stride;
        const int x1 = std::min(x0 + params.kernel, input.width);
        float m = input.at(c, y0, x0);
        for (int y = y0; y < y1; ++y)
          for (int x = x0; x < x1; ++x) m = std::max(m, input.at(c, y, x));
        out.at(c, oy, ox) = m;
      }
    }
  return out;
}

/// Run layers [0, upto] on an input tensor.
inline Tensor forward(Tensor input, const ConvNetSpec& spec,
                      const WeightStore& weights, int upto) {
  if (upto < 0 || static_cast<std::size_t>(upto) >= spec.layers.size())
    throw InvalidArgument("layer index outside the stack");
  for (int i = 0; i <= upto; ++i) {
    const LayerSpec& layer = spec.layers[static_cast<std::size_t>(i)];
    if (const auto* conv = std::get_if<ConvParams>(&layer))
      input = conv2d(input, *conv, weights);
    else if (std::holds_alternative<ReluParams>(layer))
      input = relu(input);
    else if (const auto* l = std::get_if<LrnParams>(&layer))
      input = lrn(input, *l);
    else
      input = maxpool(input, std::get<MaxPoolParams>(layer));
  }
  return input;
}

/// A flattened tap-point activation with its provenance.
struct FeatureVector {
  std::vector<float> values;
  struct Provenance {
    std::string net;
    int tap_point = 0;
    int input_height = 0;
    int input_width = 0;
    int input_channels = 0;
  } provenance;

  std::size_t dim() const { return values.size(); }
};

/// Mean-subtract then forward to the tap point; the result is flattened in
/// (channel, row, column) order. The caller resizes the image to the spec's
/// input geometry beforehand.
inline FeatureVector extract_features(const ImageBuffer& img,
                                      const ConvNetSpec& spec,
                                      const WeightStore& weights) {
  if (img.width != spec.input_width || img.height != spec.input_height ||
      img.channels != spec.input_channels)
    throw InvalidArgument(
        "image geometry does not match the net input (expected " +
        std::to_string(spec.input_width) + "x" +
        std::to_string(spec.input_height) + "x" +
        std::to_string(spec.input_channels) + ")");
  if (spec.channel_mean.size() !=
      static_cast<std::size_t>(spec.input_channels))
    throw InvalidArgument("channel_mean size does not match input channels");

  Tensor input(spec.input_channels, spec.input_height, spec.input_width);
  for (int c = 0; c < spec.input_channels; ++c)
    for (int y = 0; y < spec.input_height; ++y)
      for (int x = 0; x < spec.input_width; ++x)
        input.at(c, y, x) =
            static_cast<float>(img.at(x, y, c)) -
            spec.channel_mean[static_cast<std::size_t>(c)];

  Tensor tap = forward(std::move(input), spec, weights, spec.tap_point);
  for (float v : tap.data)
    if (!std::isfinite(v)) throw Error("non-finite activation at tap point");

  FeatureVector feature;
  feature.values = std::move(tap.data);
  feature.provenance = {spec.name, spec.tap_point, spec.input_height,
                        spec.input_width, spec.input_channels};
  return feature;
}

// ---- net spec persistence (JSON) ----

inline void save_net_spec(const ConvNetSpec& spec,
                          const std::filesystem::path& path) {
  nlohmann::ordered_json j;
  j["name"] = spec.name;
  j["input"] = {{"height", spec.input_height},
                {"width", spec.input_width},
                {"channels", spec.input_channels}};
  j["mean"] = spec.channel_mean;
  j["tap"] = spec.tap_point;
  j["layers"] = nlohmann::ordered_json::array();
  for (const LayerSpec& layer : spec.layers) {
    nlohmann::ordered_json l;
    if (const auto* conv = std::get_if<ConvParams>(&layer)) {
      l["kind"] = "conv";
      l["name"] = conv->name;
      l["out_channels"] = conv->out_channels;
      l["kernel"] = {conv->kernel_h, conv->kernel_w};
      l["stride"] = conv->stride;
      l["padding"] = conv->padding;
      l["groups"] = conv->groups;
    } else if (std::holds_alternative<ReluParams>(layer)) {
      l["kind"] = "relu";
    } else if (const auto* lr = std::get_if<LrnParams>(&layer)) {
      l["kind"] = "lrn";
      l["local_size"] = lr->local_size;
      l["alpha"] = lr->alpha;
      l["beta"] = lr->beta;
      l["k"] = lr->k;
    } else {
      const auto& pool = std::get<MaxPoolParams>(layer);
      l["kind"] = "maxpool";
      l["kernel"] = pool.kernel;
      l["stride"] = pool.stride;
      l["rounding"] = pool.rounding == PoolRounding::ceil ? "ceil" : "floor";
    }
    j["layers"].push_back(std::move(l));
  }
  std::ofstream out(path);
  if (!out) throw IoError("cannot open file for writing: " + path.string());
  out << j.dump(2) << "\n";
  if (!out) throw IoError("write failure: " + path.string());
}

inline ConvNetSpec load_net_spec(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open net spec: " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError("malformed net spec JSON: " + path.string() + ": " +
                     e.what());
  }
  ConvNetSpec spec;
  try {
    spec.name = j.at("name").get<std::string>();
    spec.input_height = j.at("input").at("height").get<int>();
    spec.input_width = j.at("input").at("width").get<int>();
    spec.input_channels = j.at("input").at("channels").get<int>();
    spec.channel_mean = j.at("mean").get<std::vector<float>>();
    spec.tap_point = j.at("tap").get<int>();
    for (const auto& l : j.at("layers")) {
      const std::string kind = l.at("kind").get<std::string>();
      if (kind == "conv") {
        ConvParams conv;
        conv.name = l.at("name").get<std::string>();
        conv.out_channels = l.at("out_channels").get<int>();
        conv.kernel_h = l.at("kernel").at(0).get<int>();
        conv.kernel_w = l.at("kernel").at(1).get<int>();
        conv.stride = l.value("stride", 1);
        conv.padding = l.value("padding", 0);
        conv.groups = l.value("groups", 1);
        spec.layers.emplace_back(conv);
      } else if (kind == "relu") {
        spec.layers.emplace_back(ReluParams{});
      } else if (kind == "lrn") {
        LrnParams lr;
        lr.local_size = l.value("local_size", 5);
        lr.alpha = l.value("alpha", 1e-4);
        lr.beta = l.value("beta", 0.75);
        lr.k = l.value("k", 1.0);
        spec.layers.emplace_back(lr);
      } else if (kind == "maxpool") {
        MaxPoolParams pool;
        pool.kernel = l.at("kernel").get<int>();
        pool.stride = l.at("stride").get<int>();
        const std::string r = l.value("rounding", std::string("ceil"));
        if (r != "ceil" && r != "floor")
          throw FormatError("unknown pool rounding: " + r);
        pool.rounding =
            r == "ceil" ? PoolRounding::ceil : PoolRounding::floor;
        spec.layers.emplace_back(pool);
      } else {
        throw FormatError("unknown layer kind: " + kind);
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("net spec missing mandatory field: " + path.string() +
                      ": " + e.what());
  }
  layer_shapes(spec);  // validate geometry early
  if (spec.tap_point < 0 ||
      static_cast<std::size_t>(spec.tap_point) >= spec.layers.size())
    throw FormatError("tap point outside the layer range: " + path.string());
  return spec;
}

/// The AlexNet stack up to conv3 (conv/relu/lrn/pool x2, conv3, relu), with
/// ceil-mode pooling. The tap point is the final relu.
inline ConvNetSpec make_alexnet_conv3(int input_height, int input_width,
                                      std::vector<float> channel_mean = {
                                          104.0f, 117.0f, 123.0f}) {
  ConvNetSpec spec;
  spec.name = "alexnet_conv3";
  spec.input_height = input_height;
  spec.input_width = input_width;
  spec.input_channels = 3;
  spec.channel_mean = std::move(channel_mean);
  spec.layers = {
      ConvParams{"conv1", 96, 11, 11, 4, 0, 1},
      ReluParams{},
      LrnParams{},
      MaxPoolParams{3, 2, PoolRounding::ceil},
      ConvParams{"conv2", 256, 5, 5, 1, 2, 2},
      ReluParams{},
      LrnParams{},
      MaxPoolParams{3, 2, PoolRounding::ceil},
      ConvParams{"conv3", 384, 3, 3, 1, 1, 1},
      ReluParams{},
  };
  spec.tap_point = static_cast<int>(spec.layers.size()) - 1;
  return spec;
}

/// Fill every conv layer of a spec with seeded uniform weights in
/// [-scale, scale] and zero biases. Used wherever a runnable stack without
/// trained weights is needed.
inline WeightStore random_weights(const ConvNetSpec& spec, std::uint64_t seed,
                                  double scale = 0.05) {
  WeightStore store;
  Rng rng(derive_seed(seed, 0x5EEDULL));
  int in_channels = spec.input_channels;
  for (const LayerSpec& layer : spec.layers) {
    if (const auto* conv = std::get_if<ConvParams>(&layer)) {
      const std::size_t n = static_cast<std::size_t>(conv->out_channels) *
                            (in_channels / conv->groups) * conv->kernel_h *
                            conv->kernel_w;
      std::vector<float> w(n);
      for (float& v : w)
        v = static_cast<float>(rng.next_double(-scale, scale));
      store.put(conv->name + ".weight",
                {static_cast<std::uint64_t>(conv->out_channels),
                 static_cast<std::uint64_t>(in_channels / conv->groups),
                 static_cast<std::uint64_t>(conv->kernel_h),
                 static_cast<std::uint64_t>(conv->kernel_w)},
                std::move(w));
      store.put(conv->name + ".bias",
                {static_cast<std::uint64_t>(conv->out_channels)},
                std::vector<float>(
                    static_cast<std::size_t>(conv->out_channels), 0.0f));
      in_channels = conv->out_channels;
    }
  }
  return store;
}

}  // namespace patternid
