// Copyright (c) 2026 the patternid authors
// SPDX-License-Identifier: Apache-2.0

#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <fstream>

#include "patternid/image.hpp"

#include "helpers.hpp"

using namespace patternid;
using testutil::TempDir;

namespace {

// Tiny raster fixtures (generated once with an external encoder).
inline constexpr unsigned char kPngRgb2x2[] = {137,80,78,71,13,10,26,10,0,0,0,13,73,72,68,82,0,0,0,2,0,0,0,2,8,2,0,0,0,253,212,154,115,0,0,0,22,73,68,65,84,120,156,99,248,207,192,192,240,159,129,129,129,225,63,151,136,28,0,26,88,3,58,130,224,171,83,0,0,0,0,73,69,78,68,174,66,96,130};
inline constexpr unsigned char kPngGray3x2[] = {137,80,78,71,13,10,26,10,0,0,0,13,73,72,68,82,0,0,0,3,0,0,0,2,8,0,0,0,0,184,31,57,198,0,0,0,16,73,68,65,84,120,156,99,96,104,248,207,200,197,197,5,0,8,67,1,159,178,131,20,5,0,0,0,0,73,69,78,68,174,66,96,130};
inline constexpr unsigned char kJpegRgb8x8[] = {255,216,255,224,0,16,74,70,73,70,0,1,1,0,0,1,0,1,0,0,255,219,0,67,0,2,1,1,1,1,1,2,1,1,1,2,2,2,2,2,4,3,2,2,2,2,5,4,4,3,4,6,5,6,6,6,5,6,6,6,7,9,8,6,7,9,7,6,6,8,11,8,9,10,10,10,10,10,6,8,11,12,11,10,12,9,10,10,10,255,219,0,67,1,2,2,2,2,2,2,5,3,3,5,10,7,6,7,10,10,10,10,10,10,10,10,10,10,10,10,10,10,10,10,10,10,10,10,10,10,10,10,10,10,10,10,10,10,10,10,10,10,10,10,10,10,10,10,10,10,10,10,10,10,10,10,10,10,255,192,0,17,8,0,8,0,8,3,1,34,0,2,17,1,3,17,1,255,196,0,31,0,0,1,5,1,1,1,1,1,1,0,0,0,0,0,0,0,0,1,2,3,4,5,6,7,8,9,10,11,255,196,0,181,16,0,2,1,3,3,2,4,3,5,5,4,4,0,0,1,125,1,2,3,0,4,17,5,18,33,49,65,6,19,81,97,7,34,113,20,50,129,145,161,8,35,66,177,193,21,82,209,240,36,51,98,114,130,9,10,22,23,24,25,26,37,38,39,40,41,42,52,53,54,55,56,57,58,67,68,69,70,71,72,73,74,83,84,85,86,87,88,89,90,99,100,101,102,103,104,105,106,115,116,117,118,119,120,121,122,131,132,133,134,135,136,137,138,146,147,148,149,150,151,152,153,154,162,163,164,165,166,167,168,169,170,178,179,180,181,182,183,184,185,186,194,195,196,197,198,199,200,201,202,210,211,212,213,214,215,216,217,218,225,226,227,228,229,230,231,232,233,234,241,242,243,244,245,246,247,248,249,250,255,196,0,31,1,0,3,1,1,1,1,1,1,1,1,1,0,0,0,0,0,0,1,2,3,4,5,6,7,8,9,10,11,255,196,0,181,17,0,2,1,2,4,4,3,4,7,5,4,4,0,1,2,119,0,1,2,3,17,4,5,33,49,6,18,65,81,7,97,113,19,34,50,129,8,20,66,145,161,177,193,9,35,51,82,240,21,98,114,209,10,22,36,52,225,37,241,23,24,25,26,38,39,40,41,42,53,54,55,56,57,58,67,68,69,70,71,72,73,74,83,84,85,86,87,88,89,90,99,100,101,102,103,104,105,106,115,116,117,118,119,120,121,122,130,131,132,133,134,135,136,137,138,146,147,148,149,150,151,152,153,154,162,163,164,165,166,167,168,169,170,178,179,180,181,182,183,184,185,186,194,195,196,197,198,199,200,201,202,210,211,212,213,214,215,216,217,218,226,227,228,229,230,231,232,233,234,242,243,244,245,246,247,248,249,250,255,218,0,12,3,1,0,2,17,3,17,0,63,0,248,238,138,40,175,196,207,232,195,255,217};

template <std::size_t N>
void write_bytes(const std::filesystem::path& path,
                 const unsigned char (&bytes)[N], std::size_t count = N) {
  std::ofstream out(path, std::ios::binary);
  out.write(reinterpret_cast<const char*>(bytes),
            static_cast<std::streamsize>(count));
}

}  // namespace

TEST_CASE("load_image decodes binary pixmaps") {
  TempDir dir("ppm");

  SECTION("2x2 all-black P6") {
    testutil::write_text(dir / "black.ppm",
                         std::string("P6\n2 2\n255\n") + std::string(12, '\0'));
    const ImageBuffer img = load_image(dir / "black.ppm");
    REQUIRE(img.width == 2);
    REQUIRE(img.height == 2);
    REQUIRE(img.channels == 3);
    for (auto p : img.pixels) CHECK(p == 0);
  }

  SECTION("1x1 single red pixel") {
    std::string payload = "P6\n1 1\n255\n";
    payload += static_cast<char>(255);
    payload += static_cast<char>(0);
    payload += static_cast<char>(0);
    testutil::write_text(dir / "red.ppm", payload);
    const ImageBuffer img = load_image(dir / "red.ppm");
    REQUIRE(img.pixels == std::vector<std::uint8_t>{255, 0, 0});
  }

  SECTION("P5 grayscale with a comment line") {
    std::string payload = "P5\n# camera 3\n2 1\n255\n";
    payload += static_cast<char>(7);
    payload += static_cast<char>(9);
    testutil::write_text(dir / "gray.pgm", payload);
    const ImageBuffer img = load_image(dir / "gray.pgm");
    REQUIRE(img.channels == 1);
    REQUIRE(img.pixels == std::vector<std::uint8_t>{7, 9});
  }

  SECTION("16-bit pixmap rejected as unsupported") {
    testutil::write_text(dir / "deep.ppm", "P6\n1 1\n65535\n??????");
    CHECK_THROWS_AS(load_image(dir / "deep.ppm"), FormatError);
  }

  SECTION("truncated payload is corrupt") {
    testutil::write_text(dir / "short.ppm", "P6\n4 4\n255\nxx");
    CHECK_THROWS_AS(load_image(dir / "short.ppm"), ParseError);
  }
}

TEST_CASE("save_image / load_image round-trips losslessly") {
  TempDir dir("roundtrip");
  const ImageBuffer img = testutil::random_image(16, 16, 3, 42);
  save_image(img, dir / "img.ppm");
  const ImageBuffer back = load_image(dir / "img.ppm");
  CHECK(back.pixels == img.pixels);

  const ImageBuffer gray = testutil::random_image(9, 5, 1, 43);
  save_image(gray, dir / "img.pgm");
  CHECK(load_image(dir / "img.pgm").pixels == gray.pixels);
}

TEST_CASE("load_image decodes PNG") {
  TempDir dir("png");

  SECTION("2x2 RGB with known pixels") {
    write_bytes(dir / "rgb.png", kPngRgb2x2);
    const ImageBuffer img = load_image(dir / "rgb.png");
    REQUIRE(img.width == 2);
    REQUIRE(img.height == 2);
    REQUIRE(img.channels == 3);
    CHECK(img.pixels == std::vector<std::uint8_t>{255, 0, 0, 0, 255, 0,
                                                  0, 0, 255, 10, 20, 30});
  }

  SECTION("3x2 grayscale") {
    write_bytes(dir / "gray.png", kPngGray3x2);
    const ImageBuffer img = load_image(dir / "gray.png");
    REQUIRE(img.channels == 1);
    CHECK(img.pixels == std::vector<std::uint8_t>{0, 128, 255, 10, 20, 30});
  }

  SECTION("truncated PNG is corrupt") {
    write_bytes(dir / "bad.png", kPngRgb2x2, sizeof(kPngRgb2x2) / 2);
    CHECK_THROWS_AS(load_image(dir / "bad.png"), ParseError);
  }
}

TEST_CASE("load_image decodes JPEG") {
  TempDir dir("jpeg");
  write_bytes(dir / "img.jpg", kJpegRgb8x8);
  const ImageBuffer img = load_image(dir / "img.jpg");
  REQUIRE(img.width == 8);
  REQUIRE(img.height == 8);
  REQUIRE(img.channels == 3);
  // constant (128, 64, 32) fill; lossy codec, so allow a small wobble
  for (int y = 0; y < 8; ++y)
    for (int x = 0; x < 8; ++x) {
      CHECK(std::abs(img.at(x, y, 0) - 128) <= 3);
      CHECK(std::abs(img.at(x, y, 1) - 64) <= 3);
      CHECK(std::abs(img.at(x, y, 2) - 32) <= 3);
    }

  SECTION("truncated JPEG is corrupt") {
    write_bytes(dir / "bad.jpg", kJpegRgb8x8, 40);
    CHECK_THROWS_AS(load_image(dir / "bad.jpg"), ParseError);
  }
}

TEST_CASE("load_image failure modes are distinct") {
  TempDir dir("errors");
  SECTION("missing file") {
    CHECK_THROWS_AS(load_image(dir / "nope.png"), IoError);
  }
  SECTION("unknown magic bytes") {
    testutil::write_text(dir / "mystery.bin", "GIF89a.....");
    CHECK_THROWS_AS(load_image(dir / "mystery.bin"), FormatError);
  }
}

TEST_CASE("resize_bilinear") {
  SECTION("constant image stays constant at any size") {
    ImageBuffer img(10, 10, 3, 77);
    const ImageBuffer out = resize_bilinear(img, 256, 192);
    REQUIRE(out.width == 256);
    REQUIRE(out.height == 192);
    for (auto p : out.pixels) CHECK(p == 77);
  }

  SECTION("identity dims give identical pixels") {
    const ImageBuffer img = testutil::random_image(13, 7, 3, 7);
    CHECK(resize_bilinear(img, 13, 7).pixels == img.pixels);
  }

  SECTION("2x1 [0,255] upsampled to 4x1 is monotone with known values") {
    ImageBuffer img(2, 1, 1);
    img.at(0, 0, 0) = 0;
    img.at(1, 0, 0) = 255;
    const ImageBuffer out = resize_bilinear(img, 4, 1);
    // centers map to source x = -0.25, 0.25, 0.75, 1.25 (clamped)
    std::vector<std::uint8_t> expected;
    for (double sx : {0.0, 0.25, 0.75, 1.0})
      expected.push_back(
          static_cast<std::uint8_t>(std::lround(sx * 255.0)));
    CHECK(out.pixels == expected);
    for (std::size_t i = 1; i < out.pixels.size(); ++i)
      CHECK(out.pixels[i] >= out.pixels[i - 1]);
  }

  SECTION("output range stays inside the per-channel input range") {
    const ImageBuffer img = testutil::random_image(9, 6, 3, 99);
    const ImageBuffer out = resize_bilinear(img, 23, 17);
    for (int c = 0; c < 3; ++c) {
      std::uint8_t lo = 255, hi = 0;
      for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x) {
          lo = std::min(lo, img.at(x, y, c));
          hi = std::max(hi, img.at(x, y, c));
        }
      for (int y = 0; y < out.height; ++y)
        for (int x = 0; x < out.width; ++x) {
          CHECK(out.at(x, y, c) >= lo);
          CHECK(out.at(x, y, c) <= hi);
        }
    }
  }

  SECTION("rejects empty targets") {
    const ImageBuffer img = testutil::random_image(4, 4, 1, 1);
    CHECK_THROWS_AS(resize_bilinear(img, 0, 4), InvalidArgument);
    CHECK_THROWS_AS(resize_bilinear(img, 4, -1), InvalidArgument);
  }
}

TEST_CASE("hflip") {
  SECTION("3x1 row mirrors") {
    ImageBuffer img(3, 1, 1);
    img.at(0, 0, 0) = 1;
    img.at(1, 0, 0) = 2;
    img.at(2, 0, 0) = 3;
    CHECK(hflip(img).pixels == std::vector<std::uint8_t>{3, 2, 1});
  }

  SECTION("involution and row-reversal oracle") {
    const ImageBuffer img = testutil::random_image(11, 6, 3, 5);
    const ImageBuffer flipped = hflip(img);
    CHECK(hflip(flipped).pixels == img.pixels);
    for (int y = 0; y < img.height; ++y)
      for (int x = 0; x < img.width; ++x)
        for (int c = 0; c < 3; ++c)
          CHECK(flipped.at(x, y, c) == img.at(img.width - 1 - x, y, c));
  }
}

TEST_CASE("crop clamps to bounds and rejects empty rectangles") {
  const ImageBuffer img = testutil::random_image(10, 8, 3, 12);
  const ImageBuffer c = crop(img, 2, 1, 7, 5);
  REQUIRE(c.width == 5);
  REQUIRE(c.height == 4);
  CHECK(c.at(0, 0, 0) == img.at(2, 1, 0));
  CHECK(c.at(4, 3, 2) == img.at(6, 4, 2));

  const ImageBuffer clamped = crop(img, -3, -3, 100, 100);
  CHECK(clamped.width == 10);
  CHECK(clamped.height == 8);
  CHECK_THROWS_AS(crop(img, 5, 5, 5, 9), InvalidArgument);
}

TEST_CASE("to_rgb replicates grayscale") {
  const ImageBuffer gray = testutil::random_image(4, 3, 1, 3);
  const ImageBuffer rgb = to_rgb(gray);
  REQUIRE(rgb.channels == 3);
  for (int y = 0; y < 3; ++y)
    for (int x = 0; x < 4; ++x)
      for (int c = 0; c < 3; ++c)
        CHECK(rgb.at(x, y, c) == gray.at(x, y, 0));
  CHECK(to_rgb(rgb).pixels == rgb.pixels);
}
