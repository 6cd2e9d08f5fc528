#include <png.h>

#include <cstring>

#include "drgrade/imageproc.hpp"

namespace drgrade {

namespace {

// Releases libpng's simplified-API resources on every exit path.
struct PngImage {
  png_image img;
  PngImage() {
    std::memset(&img, 0, sizeof img);
    img.version = PNG_IMAGE_VERSION;
  }
  ~PngImage() { png_image_free(&img); }
  PngImage(const PngImage&) = delete;
  PngImage& operator=(const PngImage&) = delete;
};

}  // namespace

RgbImage read_png(const std::filesystem::path& path) {
  DRGRADE_REQUIRE(std::filesystem::is_regular_file(path), ErrorKind::Io, "cannot read " + path.string());
  PngImage png;
  if (!png_image_begin_read_from_file(&png.img, path.c_str()))
    throw Error(ErrorKind::Decode, path.string() + ": " + png.img.message);
  png.img.format = PNG_FORMAT_RGB;
  RgbImage out(png.img.height, png.img.width, 3);
  DRGRADE_REQUIRE(out.valid(), ErrorKind::Decode, path.string() + ": empty image");
  if (!png_image_finish_read(&png.img, nullptr, out.data.data(), 0, nullptr))
    throw Error(ErrorKind::Decode, path.string() + ": " + png.img.message);
  return out;
}

void write_png(const std::filesystem::path& path, const RgbImage& img) {
  DRGRADE_REQUIRE(img.valid() && img.channels == 3, ErrorKind::InvalidArgument, "write_png: expected RGB image");
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  PngImage png;
  png.img.width = static_cast<png_uint_32>(img.width);
  png.img.height = static_cast<png_uint_32>(img.height);
  png.img.format = PNG_FORMAT_RGB;
  if (!png_image_write_to_file(&png.img, path.c_str(), 0, img.data.data(), 0, nullptr))
    throw Error(ErrorKind::Io, path.string() + ": " + png.img.message);
}

}  // namespace drgrade
