#include "drgrade/imageproc.hpp"

#include <algorithm>
#include <cmath>

#include "drgrade/kernels.hpp"

namespace drgrade {

void EnhanceParams::validate() const {
  DRGRADE_REQUIRE(sigma > 0, ErrorKind::InvalidArgument, "sigma must be > 0");
  DRGRADE_REQUIRE(alpha > 0, ErrorKind::InvalidArgument, "alpha must be > 0");
  DRGRADE_REQUIRE(offset >= 0 && offset <= 255, ErrorKind::InvalidArgument, "offset must be in [0,255]");
  DRGRADE_REQUIRE(crop_tol >= 0 && crop_tol < 255, ErrorKind::InvalidArgument, "crop tolerance must be in [0,255)");
  DRGRADE_REQUIRE(size >= 1, ErrorKind::InvalidArgument, "output size must be >= 1");
}

namespace {

void require_rgb(const RgbImage& img, const char* who) {
  DRGRADE_REQUIRE(img.valid() && img.channels == 3, ErrorKind::InvalidArgument,
                  std::string(who) + ": expected a non-empty 3-channel image");
}

}  // namespace

CropBox foreground_box(const RgbImage& img, int crop_tol) {
  require_rgb(img, "crop_black_border");
  const int limit = 3 * crop_tol;  // mean > tol  <=>  sum > 3 * tol
  std::size_t y0 = img.height, y1 = 0, x0 = img.width, x1 = 0;
  bool any = false;
  for (std::size_t y = 0; y < img.height; ++y)
    for (std::size_t x = 0; x < img.width; ++x) {
      const int sum = img.at(y, x, 0) + img.at(y, x, 1) + img.at(y, x, 2);
      if (sum > limit) {
        any = true;
        y0 = std::min(y0, y);
        y1 = std::max(y1, y);
        x0 = std::min(x0, x);
        x1 = std::max(x1, x);
      }
    }
  DRGRADE_REQUIRE(any, ErrorKind::NoContent, "no pixel brighter than the crop tolerance");
  return {y0, x0, y1 - y0 + 1, x1 - x0 + 1};
}

RgbImage crop(const RgbImage& img, const CropBox& box) {
  DRGRADE_REQUIRE(box.y0 + box.height <= img.height && box.x0 + box.width <= img.width, ErrorKind::InvalidArgument,
                  "crop box exceeds image");
  RgbImage out(box.height, box.width, img.channels);
  for (std::size_t y = 0; y < box.height; ++y) {
    const auto* src = &img.data[((box.y0 + y) * img.width + box.x0) * img.channels];
    std::copy(src, src + box.width * img.channels, &out.data[y * box.width * img.channels]);
  }
  return out;
}

RgbImage crop_black_border(const RgbImage& img, int crop_tol) { return crop(img, foreground_box(img, crop_tol)); }

RgbImage resize_bilinear(const RgbImage& img, std::size_t out_h, std::size_t out_w) {
  DRGRADE_REQUIRE(img.valid(), ErrorKind::InvalidArgument, "resize: invalid image");
  DRGRADE_REQUIRE(out_h >= 1 && out_w >= 1, ErrorKind::InvalidArgument, "resize: target must be at least 1x1");
  struct Tap {
    std::size_t i0, i1;
    double frac;
  };
  auto taps = [](std::size_t in, std::size_t out) {
    std::vector<Tap> t(out);
    const double scale = static_cast<double>(in) / static_cast<double>(out);
    for (std::size_t o = 0; o < out; ++o) {
      double src = (static_cast<double>(o) + 0.5) * scale - 0.5;
      src = std::clamp(src, 0.0, static_cast<double>(in - 1));
      const std::size_t i0 = static_cast<std::size_t>(std::floor(src));
      const std::size_t i1 = std::min(i0 + 1, in - 1);
      t[o] = {i0, i1, src - static_cast<double>(i0)};
    }
    return t;
  };
  const auto ty = taps(img.height, out_h);
  const auto tx = taps(img.width, out_w);
  RgbImage out(out_h, out_w, img.channels);
#pragma omp parallel for schedule(static)
  for (long long y = 0; y < static_cast<long long>(out_h); ++y) {
    const Tap& a = ty[y];
    for (std::size_t x = 0; x < out_w; ++x) {
      const Tap& b = tx[x];
      for (std::size_t c = 0; c < img.channels; ++c) {
        const double top = img.at(a.i0, b.i0, c) * (1 - b.frac) + img.at(a.i0, b.i1, c) * b.frac;
        const double bot = img.at(a.i1, b.i0, c) * (1 - b.frac) + img.at(a.i1, b.i1, c) * b.frac;
        const double v = top * (1 - a.frac) + bot * a.frac;
        out.at(y, x, c) = static_cast<std::uint8_t>(std::clamp(std::round(v), 0.0, 255.0));
      }
    }
  }
  return out;
}

std::vector<float> gaussian_kernel(double sigma) {
  DRGRADE_REQUIRE(sigma > 0, ErrorKind::InvalidArgument, "gaussian: sigma must be > 0");
  const long long r = std::llround(3 * sigma);
  std::vector<double> k(2 * r + 1);
  double sum = 0;
  for (long long i = -r; i <= r; ++i) {
    k[i + r] = std::exp(-static_cast<double>(i * i) / (2 * sigma * sigma));
    sum += k[i + r];
  }
  std::vector<float> out(k.size());
  for (std::size_t i = 0; i < k.size(); ++i) out[i] = static_cast<float>(k[i] / sum);
  return out;
}

ImageF gaussian_blur(const ImageF& img, double sigma) {
  DRGRADE_REQUIRE(img.valid(), ErrorKind::InvalidArgument, "gaussian_blur: invalid image");
  const auto k = gaussian_kernel(sigma);
  ImageF out(img.height, img.width, img.channels);
  kernels::separable_blur(img.height, img.width, img.channels, k, img.data, out.data);
  return out;
}

ImageF to_float(const RgbImage& img) {
  ImageF f(img.height, img.width, img.channels);
  std::transform(img.data.begin(), img.data.end(), f.data.begin(), [](std::uint8_t v) { return float(v); });
  return f;
}

RgbImage to_u8(const ImageF& img) {
  RgbImage u(img.height, img.width, img.channels);
  std::transform(img.data.begin(), img.data.end(), u.data.begin(), [](float v) {
    return static_cast<std::uint8_t>(std::round(std::clamp(v, 0.0f, 255.0f)));
  });
  return u;
}

RgbImage local_mean_enhance(const RgbImage& img, const EnhanceParams& p) {
  p.validate();
  require_rgb(img, "local_mean_enhance");
  const ImageF in = to_float(img);
  const ImageF blurred = gaussian_blur(in, p.sigma);
  const float alpha = static_cast<float>(p.alpha), offset = static_cast<float>(p.offset);
  ImageF out(in.height, in.width, in.channels);
  for (std::size_t i = 0; i < in.data.size(); ++i) out.data[i] = alpha * in.data[i] - alpha * blurred.data[i] + offset;
  return to_u8(out);
}

RgbImage preprocess_image(const RgbImage& img, const EnhanceParams& p, CropBox* box_out) {
  p.validate();
  const CropBox box = foreground_box(img, p.crop_tol);
  if (box_out) *box_out = box;
  return local_mean_enhance(resize_bilinear(crop(img, box), p.size, p.size), p);
}

PreprocessSummary preprocess_file(const std::filesystem::path& in_path, const std::filesystem::path& out_path,
                                  const EnhanceParams& p) {
  const RgbImage raw = read_png(in_path);
  CropBox box;
  const RgbImage out = preprocess_image(raw, p, &box);
  write_png(out_path, out);
  return {raw.width, raw.height, box.width, box.height, out_path};
}

std::uint64_t pixel_hash(const RgbImage& img) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto feed = [&h](std::uint8_t b) {
    h ^= b;
    h *= 0x100000001b3ULL;
  };
  for (std::size_t v : {img.height, img.width, img.channels})
    for (int s = 0; s < 64; s += 8) feed(static_cast<std::uint8_t>(v >> s));
  for (auto b : img.data) feed(b);
  return h;
}

}  // namespace drgrade
