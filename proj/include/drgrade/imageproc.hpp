#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "drgrade/error.hpp"

namespace drgrade {

/// Interleaved row-major image (H x W x C).
template <typename T>
struct Image {
  std::size_t height = 0;
  std::size_t width = 0;
  std::size_t channels = 3;
  std::vector<T> data;

  Image() = default;
  Image(std::size_t h, std::size_t w, std::size_t c = 3, T fill = T{0})
      : height(h), width(w), channels(c), data(h * w * c, fill) {}

  T& at(std::size_t y, std::size_t x, std::size_t c) { return data[(y * width + x) * channels + c]; }
  const T& at(std::size_t y, std::size_t x, std::size_t c) const { return data[(y * width + x) * channels + c]; }
  bool valid() const { return height >= 1 && width >= 1 && channels >= 1 && data.size() == height * width * channels; }
  bool operator==(const Image&) const = default;
};

using RgbImage = Image<std::uint8_t>;
using ImageF = Image<float>;

struct EnhanceParams {
  double sigma = 10.0;
  double alpha = 4.0;
  double offset = 128.0;
  int crop_tol = 7;
  std::size_t size = 512;

  void validate() const;
};

struct CropBox {
  std::size_t y0 = 0, x0 = 0, height = 0, width = 0;
  bool operator==(const CropBox&) const = default;
};

/// Tight box around pixels whose mean of R,G,B exceeds crop_tol. Throws
/// NoContent if there are none.
CropBox foreground_box(const RgbImage& img, int crop_tol);
RgbImage crop(const RgbImage& img, const CropBox& box);
RgbImage crop_black_border(const RgbImage& img, int crop_tol);

/// Bilinear resampling with half-pixel centers; stretches to the target
/// without preserving aspect ratio.
RgbImage resize_bilinear(const RgbImage& img, std::size_t out_h, std::size_t out_w);

/// Normalized samples exp(-k^2 / 2 sigma^2), k in [-r, r], r = round(3 sigma).
std::vector<float> gaussian_kernel(double sigma);
/// Separable Gaussian blur; borders mirror with the edge sample repeated.
ImageF gaussian_blur(const ImageF& img, double sigma);

ImageF to_float(const RgbImage& img);
/// Clamp to [0,255] and round half away from zero.
RgbImage to_u8(const ImageF& img);

/// out = clamp(alpha * I - alpha * G_sigma(I) + offset, 0, 255), rounded.
RgbImage local_mean_enhance(const RgbImage& img, const EnhanceParams& p);

/// crop -> resize to p.size x p.size -> enhance.
RgbImage preprocess_image(const RgbImage& img, const EnhanceParams& p, CropBox* box_out = nullptr);

struct PreprocessSummary {
  std::size_t in_w = 0, in_h = 0;
  std::size_t crop_w = 0, crop_h = 0;
  std::filesystem::path out_path;
};

PreprocessSummary preprocess_file(const std::filesystem::path& in_path, const std::filesystem::path& out_path,
                                  const EnhanceParams& p);

/// Decodes any PNG to 8-bit RGB.
RgbImage read_png(const std::filesystem::path& path);
void write_png(const std::filesystem::path& path, const RgbImage& img);

/// 64-bit FNV-1a over the pixel bytes, for golden comparisons.
std::uint64_t pixel_hash(const RgbImage& img);

}  // namespace drgrade
