#include <doctest.h>
#include <png.h>

#include <cmath>
#include <cstring>
#include <fstream>

#include "drgrade/imageproc.hpp"
#include "drgrade/kernels.hpp"
#include "drgrade/rng.hpp"
#include "test_support.hpp"

using namespace drgrade;

namespace {

const std::filesystem::path kData = DRGRADE_TEST_DATA;

RgbImage gray(std::size_t h, std::size_t w, std::uint8_t v) { return RgbImage(h, w, 3, v); }

// Direct 2D correlation with the outer-product kernel and the same border rule.
ImageF brute_force_blur(const ImageF& img, const std::vector<float>& k1) {
  const long long r = static_cast<long long>(k1.size() / 2);
  ImageF out(img.height, img.width, img.channels);
  for (std::size_t y = 0; y < img.height; ++y)
    for (std::size_t x = 0; x < img.width; ++x)
      for (std::size_t c = 0; c < img.channels; ++c) {
        double s = 0;
        for (long long dy = -r; dy <= r; ++dy)
          for (long long dx = -r; dx <= r; ++dx) {
            const auto yy = reference::reflect_index(static_cast<long long>(y) + dy, img.height);
            const auto xx = reference::reflect_index(static_cast<long long>(x) + dx, img.width);
            s += double(k1[dy + r]) * double(k1[dx + r]) * img.at(yy, xx, c);
          }
        out.at(y, x, c) = static_cast<float>(s);
      }
  return out;
}

struct Diff {
  int max_abs = 0;
  double exact_fraction = 0;
};

Diff compare(const RgbImage& a, const RgbImage& b) {
  REQUIRE(a.height == b.height);
  REQUIRE(a.width == b.width);
  Diff d;
  std::size_t exact = 0;
  for (std::size_t i = 0; i < a.data.size(); ++i) {
    const int e = std::abs(int(a.data[i]) - int(b.data[i]));
    d.max_abs = std::max(d.max_abs, e);
    exact += e == 0;
  }
  d.exact_fraction = double(exact) / double(a.data.size());
  return d;
}

}  // namespace

TEST_CASE("gaussian kernel") {
  const auto k = gaussian_kernel(10.0);
  CHECK(k.size() == 61);
  double s = 0;
  for (float v : k) s += v;
  CHECK(s == doctest::Approx(1.0).epsilon(1e-6));
  CHECK(k[30] > k[29]);
  CHECK(k[0] == k[60]);
  CHECK(gaussian_kernel(0.4).size() == 3);  // r = round(1.2) = 1
  CHECK_THROWS_AS(gaussian_kernel(0.0), Error);
}

TEST_CASE("impulse response matches the analytic gaussian") {
  for (double sigma : {1.0, 2.5, 4.0}) {
    const long long r = std::llround(3 * sigma);
    const std::size_t side = static_cast<std::size_t>(4 * r + 3);
    ImageF img(side, side, 1, 0.0f);
    const std::size_t c = side / 2;
    img.at(c, c, 0) = 1.0f;
    const ImageF out = gaussian_blur(img, sigma);
    double z = 0;
    for (long long i = -r; i <= r; ++i) z += std::exp(-double(i * i) / (2 * sigma * sigma));
    double worst = 0;
    for (std::size_t y = 0; y < side; ++y)
      for (std::size_t x = 0; x < side; ++x) {
        const long long dy = static_cast<long long>(y) - static_cast<long long>(c);
        const long long dx = static_cast<long long>(x) - static_cast<long long>(c);
        double expect = 0;
        if (std::llabs(dy) <= r && std::llabs(dx) <= r)
          expect = std::exp(-double(dy * dy + dx * dx) / (2 * sigma * sigma)) / (z * z);
        worst = std::max(worst, std::abs(expect - out.at(y, x, 0)));
      }
    CAPTURE(sigma);
    CHECK(worst <= 1e-6);
  }
}

TEST_CASE("separable blur equals brute-force 2D convolution") {
  Rng rng(4);
  for (auto [h, w, sigma] : {std::tuple{13, 17, 1.5}, std::tuple{6, 9, 3.0}, std::tuple{20, 20, 2.0}}) {
    ImageF img(h, w, 3);
    for (auto& v : img.data) v = static_cast<float>(255 * rng.uniform());
    const ImageF fast = gaussian_blur(img, sigma);
    const ImageF slow = brute_force_blur(img, gaussian_kernel(sigma));
    double worst = 0;
    for (std::size_t i = 0; i < fast.data.size(); ++i)
      worst = std::max(worst, std::abs(double(fast.data[i]) - slow.data[i]) / 255.0);
    CHECK(worst <= 1e-5);
  }
}

TEST_CASE("blur preserves the global mean and constants") {
  Rng rng(5);
  ImageF img(31, 24, 3);
  for (auto& v : img.data) v = static_cast<float>(255 * rng.uniform());
  const ImageF out = gaussian_blur(img, 10.0);  // kernel wider than the image
  for (std::size_t c = 0; c < 3; ++c) {
    double a = 0, b = 0;
    for (std::size_t i = c; i < img.data.size(); i += 3) {
      a += img.data[i];
      b += out.data[i];
    }
    CHECK(b == doctest::Approx(a).epsilon(1e-5));
  }
  const ImageF flat = gaussian_blur(ImageF(9, 9, 3, 77.0f), 2.0);
  for (float v : flat.data) CHECK(v == doctest::Approx(77.0f).epsilon(1e-6));
}

TEST_CASE("constant gray enhances to a uniform 128") {
  EnhanceParams p;
  p.size = 64;
  for (std::uint8_t v : {std::uint8_t(40), std::uint8_t(128), std::uint8_t(200)}) {
    const RgbImage out = preprocess_image(gray(50, 70, v), p);
    CHECK(out.height == 64);
    CHECK(out.width == 64);
    CHECK(std::all_of(out.data.begin(), out.data.end(), [](std::uint8_t x) { return x == 128; }));
  }
}

TEST_CASE("impulse on black saturates after enhancement") {
  RgbImage img = gray(21, 21, 0);
  for (std::size_t c = 0; c < 3; ++c) img.at(10, 10, c) = 255;
  EnhanceParams p;
  p.sigma = 2;
  const RgbImage out = local_mean_enhance(img, p);
  CHECK(out.at(10, 10, 0) == 255);
  CHECK(out.at(0, 0, 0) == 128);      // far from the impulse
  CHECK(out.at(10, 11, 0) < 128);     // halo below the offset
}

TEST_CASE("crop bounding boxes") {
  RgbImage img = gray(40, 50, 0);
  for (std::size_t y = 7; y <= 30; ++y)
    for (std::size_t x = 12; x <= 44; ++x) img.at(y, x, 1) = 200;
  CHECK(foreground_box(img, 7) == CropBox{7, 12, 24, 33});

  // Mean exactly at the tolerance is background; one above is foreground.
  RgbImage edge = gray(10, 10, 0);
  edge.at(2, 3, 0) = 21;  // mean 7
  edge.at(5, 6, 0) = 22;  // mean 7.33
  CHECK(foreground_box(edge, 7) == CropBox{5, 6, 1, 1});

  const RgbImage cropped = crop_black_border(img, 7);
  CHECK(cropped.height == 24);
  CHECK(cropped.width == 33);
  CHECK(cropped.at(0, 0, 1) == 200);

  CHECK_THROWS_AS(crop_black_border(gray(8, 8, 7), 7), Error);
  try {
    crop_black_border(gray(8, 8, 0), 7);
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::NoContent);
  }
}

TEST_CASE("bilinear resize") {
  Rng rng(6);
  RgbImage img(9, 13, 3);
  for (auto& v : img.data) v = static_cast<std::uint8_t>(rng.below(256));
  CHECK(resize_bilinear(img, 9, 13) == img);

  // 2x2 -> 4x4 with half-pixel centres: taps at -0.25 (clamped), 0.25, 0.75, 1.25 (clamped).
  RgbImage small(2, 2, 3);
  const std::uint8_t vals[4] = {0, 100, 200, 40};
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t c = 0; c < 3; ++c) small.data[i * 3 + c] = vals[i];
  const RgbImage big = resize_bilinear(small, 4, 4);
  auto at = [&](std::size_t y, std::size_t x) { return int(big.at(y, x, 0)); };
  CHECK(at(0, 0) == 0);
  CHECK(at(0, 1) == 25);
  CHECK(at(0, 2) == 75);
  CHECK(at(0, 3) == 100);
  CHECK(at(3, 0) == 200);
  CHECK(at(3, 3) == 40);
  // (1,1): rows 0.25, cols 0.25 -> 0.75*(0.75*0 + 0.25*100) + 0.25*(0.75*200 + 0.25*40) = 58.75
  CHECK(at(1, 1) == 59);

  // Downscale of a constant stays constant; aspect ratio is not preserved.
  const RgbImage down = resize_bilinear(gray(30, 90, 61), 8, 8);
  CHECK(std::all_of(down.data.begin(), down.data.end(), [](std::uint8_t x) { return x == 61; }));
}

TEST_CASE("png round trip and format conversion") {
  const auto dir = drgrade::testing::fresh_dir("png");
  Rng rng(8);
  RgbImage img(17, 23, 3);
  for (auto& v : img.data) v = static_cast<std::uint8_t>(rng.below(256));
  write_png(dir / "a.png", img);
  CHECK(read_png(dir / "a.png") == img);

  // Grayscale file decodes to three equal channels.
  {
    png_image pi;
    std::memset(&pi, 0, sizeof pi);
    pi.version = PNG_IMAGE_VERSION;
    pi.width = 4;
    pi.height = 2;
    pi.format = PNG_FORMAT_GRAY;
    const std::uint8_t px[8] = {0, 10, 20, 30, 40, 50, 60, 255};
    REQUIRE(png_image_write_to_file(&pi, (dir / "g.png").c_str(), 0, px, 0, nullptr));
    const RgbImage g = read_png(dir / "g.png");
    CHECK(g.channels == 3);
    CHECK(g.at(0, 1, 0) == 10);
    CHECK(g.at(0, 1, 2) == 10);
    CHECK(g.at(1, 3, 1) == 255);
  }
  // Opaque RGBA decodes to its RGB part.
  {
    png_image pi;
    std::memset(&pi, 0, sizeof pi);
    pi.version = PNG_IMAGE_VERSION;
    pi.width = 2;
    pi.height = 1;
    pi.format = PNG_FORMAT_RGBA;
    const std::uint8_t px[8] = {1, 2, 3, 255, 200, 100, 50, 255};
    REQUIRE(png_image_write_to_file(&pi, (dir / "rgba.png").c_str(), 0, px, 0, nullptr));
    const RgbImage c = read_png(dir / "rgba.png");
    CHECK(c.data == std::vector<std::uint8_t>{1, 2, 3, 200, 100, 50});
  }

  std::ofstream(dir / "junk.png") << "not a png";
  try {
    read_png(dir / "junk.png");
    FAIL("expected a decode error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::Decode);
  }
  try {
    read_png(dir / "missing.png");
    FAIL("expected an io error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::Io);
  }
}

TEST_CASE("pipeline matches the independent float64 goldens") {
  const RgbImage raw = read_png(kData / "fundus_input.png");
  CHECK(foreground_box(raw, 7) == CropBox{11, 43, 123, 123});
  for (auto [size, sigma] : {std::pair<std::size_t, double>{512, 10.0}, {96, 3.0}}) {
    EnhanceParams p;
    p.size = size;
    p.sigma = sigma;
    const RgbImage out = preprocess_image(raw, p);
    const RgbImage golden = read_png(kData / ("fundus_golden_" + std::to_string(size) + ".png"));
    const Diff d = compare(out, golden);
    CAPTURE(size);
    // float32 accumulation may flip a value sitting on a rounding boundary.
    CHECK(d.max_abs <= 1);
    CHECK(d.exact_fraction >= 0.999);
  }
}

TEST_CASE("preprocess_file writes the enhanced image") {
  const auto dir = drgrade::testing::fresh_dir("prep");
  EnhanceParams p;
  p.size = 32;
  const auto s = preprocess_file(kData / "fundus_input.png", dir / "out.png", p);
  CHECK(s.in_w == 200);
  CHECK(s.in_h == 150);
  CHECK(s.crop_w == 123);
  CHECK(s.crop_h == 123);
  const RgbImage out = read_png(dir / "out.png");
  CHECK(out.height == 32);
  CHECK(pixel_hash(out) == pixel_hash(preprocess_image(read_png(kData / "fundus_input.png"), p)));
  p.sigma = -1;
  CHECK_THROWS_AS(preprocess_file(kData / "fundus_input.png", dir / "x.png", p), Error);
}
