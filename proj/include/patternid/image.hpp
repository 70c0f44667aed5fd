// Copyright (c) 2026 the patternid authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cmath>
#include <csetjmp>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <jpeglib.h>
#include <png.h>

#include "patternid/errors.hpp"

namespace patternid {

/// Decoded 8-bit raster, interleaved row-major. Channel order is R, G, B
/// for 3-channel buffers; 1-channel buffers are grayscale.
struct ImageBuffer {
  int width = 0;
  int height = 0;
  int channels = 0;
  std::vector<std::uint8_t> pixels;

  ImageBuffer() = default;
  ImageBuffer(int w, int h, int c, std::uint8_t fill = 0)
      : width(w), height(h), channels(c),
        pixels(static_cast<std::size_t>(w) * h * c, fill) {}

  std::uint8_t& at(int x, int y, int c) {
    return pixels[(static_cast<std::size_t>(y) * width + x) * channels + c];
  }
  std::uint8_t at(int x, int y, int c) const {
    return pixels[(static_cast<std::size_t>(y) * width + x) * channels + c];
  }

  bool valid() const {
    return width >= 1 && height >= 1 && (channels == 1 || channels == 3) &&
           pixels.size() == static_cast<std::size_t>(width) * height * channels;
  }
};

namespace detail {

inline std::vector<std::uint8_t> read_file_bytes(
    const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open file: " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  if (in.bad()) throw IoError("read failure: " + path.string());
  return bytes;
}

// ---- PPM / PGM (binary, 8-bit) ----

inline int ppm_token(const std::vector<std::uint8_t>& b, std::size_t& pos) {
  // Skips whitespace and '#' comments, then parses one decimal integer.
  for (;;) {
    while (pos < b.size() && std::isspace(b[pos])) ++pos;
    if (pos < b.size() && b[pos] == '#') {
      while (pos < b.size() && b[pos] != '\n') ++pos;
      continue;
    }
    break;
  }
  if (pos >= b.size() || !std::isdigit(b[pos]))
    throw ParseError("corrupt pixmap header");
  long v = 0;
  while (pos < b.size() && std::isdigit(b[pos])) {
    v = v * 10 + (b[pos] - '0');
    if (v > 1 << 30) throw ParseError("corrupt pixmap header");
    ++pos;
  }
  return static_cast<int>(v);
}

inline ImageBuffer decode_pnm(const std::vector<std::uint8_t>& bytes,
                              const std::string& name) {
  const int channels = bytes[1] == '6' ? 3 : 1;  // P6 or P5
  std::size_t pos = 2;
  int w = ppm_token(bytes, pos);
  int h = ppm_token(bytes, pos);
  int maxval = ppm_token(bytes, pos);
  if (w < 1 || h < 1) throw ParseError("corrupt pixmap dimensions: " + name);
  if (maxval != 255)
    throw FormatError("unsupported pixmap depth (maxval " +
                      std::to_string(maxval) + "): " + name);
  ++pos;  // single whitespace byte after maxval
  const std::size_t need = static_cast<std::size_t>(w) * h * channels;
  if (bytes.size() - pos < need)
    throw ParseError("truncated pixmap payload: " + name);
  ImageBuffer img(w, h, channels);
  std::copy_n(bytes.begin() + pos, need, img.pixels.begin());
  return img;
}

// ---- PNG ----

inline ImageBuffer decode_png(const std::vector<std::uint8_t>& bytes,
                              const std::string& name) {
  struct Reader {
    const std::uint8_t* data;
    std::size_t size;
    std::size_t pos;
  } reader{bytes.data(), bytes.size(), 0};

  png_structp png =
      png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png) throw Error("libpng init failure");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_read_struct(&png, nullptr, nullptr);
    throw Error("libpng init failure");
  }

  // libpng reports errors by longjmp; convert to an exception after cleanup.
  // No C++ objects with destructors may live between setjmp and the throw.
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw ParseError("corrupt PNG payload: " + name);
  }

  png_set_read_fn(png, &reader, [](png_structp p, png_bytep out, png_size_t n) {
    auto* r = static_cast<Reader*>(png_get_io_ptr(p));
    if (r->pos + n > r->size) png_error(p, "unexpected end of data");
    std::copy_n(r->data + r->pos, n, out);
    r->pos += n;
  });

  png_read_info(png, info);
  png_uint_32 w = png_get_image_width(png, info);
  png_uint_32 h = png_get_image_height(png, info);
  int color = png_get_color_type(png, info);
  int depth = png_get_bit_depth(png, info);

  if (depth == 16) png_set_strip_16(png);
  if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color == PNG_COLOR_TYPE_GRAY && depth < 8)
    png_set_expand_gray_1_2_4_to_8(png);
  if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
  png_set_strip_alpha(png);
  png_read_update_info(png, info);

  int channels = png_get_channels(png, info);
  if (channels != 1 && channels != 3) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw FormatError("unsupported PNG channel layout: " + name);
  }

  ImageBuffer img(static_cast<int>(w), static_cast<int>(h), channels);
  {
    std::vector<png_bytep> rows(h);
    for (png_uint_32 y = 0; y < h; ++y)
      rows[y] = img.pixels.data() +
                static_cast<std::size_t>(y) * w * channels;
    png_read_image(png, rows.data());
  }
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  return img;
}

// ---- JPEG ----

struct JpegErrorMgr {
  jpeg_error_mgr pub;
  std::jmp_buf jump;
};

inline ImageBuffer decode_jpeg(const std::vector<std::uint8_t>& bytes,
                               const std::string& name) {
  jpeg_decompress_struct cinfo;
  JpegErrorMgr err;
  cinfo.err = jpeg_std_error(&err.pub);
  err.pub.error_exit = [](j_common_ptr c) {
    std::longjmp(reinterpret_cast<JpegErrorMgr*>(c->err)->jump, 1);
  };
  err.pub.output_message = [](j_common_ptr) {};

  if (setjmp(err.jump)) {
    jpeg_destroy_decompress(&cinfo);
    throw ParseError("corrupt JPEG payload: " + name);
  }

  jpeg_create_decompress(&cinfo);
  jpeg_mem_src(&cinfo, bytes.data(), static_cast<unsigned long>(bytes.size()));
  jpeg_read_header(&cinfo, TRUE);
  cinfo.out_color_space =
      cinfo.num_components == 1 ? JCS_GRAYSCALE : JCS_RGB;
  jpeg_start_decompress(&cinfo);

  const int w = static_cast<int>(cinfo.output_width);
  const int h = static_cast<int>(cinfo.output_height);
  const int channels = cinfo.output_components;
  if (channels != 1 && channels != 3) {
    jpeg_destroy_decompress(&cinfo);
    throw FormatError("unsupported JPEG channel layout: " + name);
  }

  ImageBuffer img(w, h, channels);
  while (cinfo.output_scanline < cinfo.output_height) {
    JSAMPROW row = img.pixels.data() +
                   static_cast<std::size_t>(cinfo.output_scanline) * w *
                       channels;
    jpeg_read_scanlines(&cinfo, &row, 1);
  }
  jpeg_finish_decompress(&cinfo);
  jpeg_destroy_decompress(&cinfo);
  return img;
}

}  // namespace detail

/// Decode a PNG, JPEG or binary PPM/PGM file. The format is sniffed from
/// magic bytes, not from the extension.
inline ImageBuffer load_image(const std::filesystem::path& path) {
  std::vector<std::uint8_t> bytes = detail::read_file_bytes(path);
  const std::string name = path.string();
  if (bytes.size() >= 8 && bytes[0] == 0x89 && bytes[1] == 'P' &&
      bytes[2] == 'N' && bytes[3] == 'G')
    return detail::decode_png(bytes, name);
  if (bytes.size() >= 3 && bytes[0] == 0xFF && bytes[1] == 0xD8 &&
      bytes[2] == 0xFF)
    return detail::decode_jpeg(bytes, name);
  if (bytes.size() >= 2 && bytes[0] == 'P' &&
      (bytes[1] == '5' || bytes[1] == '6'))
    return detail::decode_pnm(bytes, name);
  throw FormatError("unsupported image format: " + name);
}

/// Write a lossless binary pixmap: P6 for 3-channel buffers, P5 for
/// 1-channel buffers.
inline void save_image(const ImageBuffer& img,
                       const std::filesystem::path& path) {
  if (!img.valid()) throw InvalidArgument("invalid image buffer");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open file for writing: " + path.string());
  out << (img.channels == 3 ? "P6" : "P5") << "\n"
      << img.width << " " << img.height << "\n255\n";
  out.write(reinterpret_cast<const char*>(img.pixels.data()),
            static_cast<std::streamsize>(img.pixels.size()));
  if (!out) throw IoError("write failure: " + path.string());
}

/// Bilinear resize with half-pixel center alignment and edge clamping.
inline ImageBuffer resize_bilinear(const ImageBuffer& img, int out_w,
                                   int out_h) {
  if (!img.valid()) throw InvalidArgument("invalid image buffer");
  if (out_w < 1 || out_h < 1)
    throw InvalidArgument("resize target must be at least 1x1");
  if (out_w == img.width && out_h == img.height) return img;

  ImageBuffer out(out_w, out_h, img.channels);
  const double sx = static_cast<double>(img.width) / out_w;
  const double sy = static_cast<double>(img.height) / out_h;
  for (int y = 0; y < out_h; ++y) {
    double fy = (y + 0.5) * sy - 0.5;
    fy = std::clamp(fy, 0.0, static_cast<double>(img.height - 1));
    const int y0 = static_cast<int>(fy);
    const int y1 = std::min(y0 + 1, img.height - 1);
    const double wy = fy - y0;
    for (int x = 0; x < out_w; ++x) {
      double fx = (x + 0.5) * sx - 0.5;
      fx = std::clamp(fx, 0.0, static_cast<double>(img.width - 1));
      const int x0 = static_cast<int>(fx);
      const int x1 = std::min(x0 + 1, img.width - 1);
      const double wx = fx - x0;
      for (int c = 0; c < img.channels; ++c) {
        const double v =
            (1 - wy) * ((1 - wx) * img.at(x0, y0, c) + wx * img.at(x1, y0, c)) +
            wy * ((1 - wx) * img.at(x0, y1, c) + wx * img.at(x1, y1, c));
        out.at(x, y, c) = static_cast<std::uint8_t>(std::lround(v));
      }
    }
  }
  return out;
}

/// Mirror left-right: column i maps to column width-1-i.
inline ImageBuffer hflip(const ImageBuffer& img) {
  if (!img.valid()) throw InvalidArgument("invalid image buffer");
  ImageBuffer out(img.width, img.height, img.channels);
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x)
      for (int c = 0; c < img.channels; ++c)
        out.at(x, y, c) = img.at(img.width - 1 - x, y, c);
  return out;
}

/// Extract the pixel rectangle [x0, x1) x [y0, y1), clamped to the image.
inline ImageBuffer crop(const ImageBuffer& img, int x0, int y0, int x1,
                        int y1) {
  if (!img.valid()) throw InvalidArgument("invalid image buffer");
  x0 = std::clamp(x0, 0, img.width);
  x1 = std::clamp(x1, 0, img.width);
  y0 = std::clamp(y0, 0, img.height);
  y1 = std::clamp(y1, 0, img.height);
  if (x1 <= x0 || y1 <= y0)
    throw InvalidArgument("empty crop rectangle");
  ImageBuffer out(x1 - x0, y1 - y0, img.channels);
  for (int y = y0; y < y1; ++y)
    for (int x = x0; x < x1; ++x)
      for (int c = 0; c < img.channels; ++c)
        out.at(x - x0, y - y0, c) = img.at(x, y, c);
  return out;
}

/// Replicate a grayscale buffer into 3 channels; 3-channel input passes
/// through unchanged.
inline ImageBuffer to_rgb(const ImageBuffer& img) {
  if (!img.valid()) throw InvalidArgument("invalid image buffer");
  if (img.channels == 3) return img;
  ImageBuffer out(img.width, img.height, 3);
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x) {
      const std::uint8_t v = img.at(x, y, 0);
      out.at(x, y, 0) = v;
      out.at(x, y, 1) = v;
      out.at(x, y, 2) = v;
    }
  return out;
}

}  // namespace patternid
