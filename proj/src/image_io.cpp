#include "winseg/data.hpp"

#include <png.h>
#include <cstdio>
#include <jpeglib.h>

#include <cmath>
#include <csetjmp>
#include <cstring>
#include <memory>

namespace winseg {

namespace fs = std::filesystem;

namespace {

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

FilePtr open_file(const fs::path& path, const char* mode) {
  FilePtr f(std::fopen(path.c_str(), mode));
  if (!f) throw IoError("cannot open '" + path.string() + "'");
  return f;
}

RgbImage read_png(const fs::path& path) {
  png_image image;
  std::memset(&image, 0, sizeof(image));
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&image, path.c_str()))
    throw IoError("cannot decode PNG '" + path.string() + "': " + image.message);
  image.format = PNG_FORMAT_RGB;
  RgbImage out{static_cast<int>(image.height), static_cast<int>(image.width), {}};
  out.pixels.resize(PNG_IMAGE_SIZE(image));
  if (!png_image_finish_read(&image, nullptr, out.pixels.data(), 0, nullptr)) {
    png_image_free(&image);
    throw IoError("cannot decode PNG '" + path.string() + "': " + image.message);
  }
  return out;
}

struct JpegError {
  jpeg_error_mgr mgr;
  std::jmp_buf jump;
};

void jpeg_fail(j_common_ptr cinfo) {
  auto* err = reinterpret_cast<JpegError*>(cinfo->err);
  std::longjmp(err->jump, 1);
}

RgbImage read_jpeg(const fs::path& path) {
  FilePtr f = open_file(path, "rb");
  jpeg_decompress_struct cinfo;
  JpegError err;
  cinfo.err = jpeg_std_error(&err.mgr);
  err.mgr.error_exit = jpeg_fail;
  RgbImage out;
  if (setjmp(err.jump)) {
    jpeg_destroy_decompress(&cinfo);
    throw IoError("cannot decode JPEG '" + path.string() + "'");
  }
  jpeg_create_decompress(&cinfo);
  jpeg_stdio_src(&cinfo, f.get());
  jpeg_read_header(&cinfo, TRUE);
  cinfo.out_color_space = JCS_RGB;
  jpeg_start_decompress(&cinfo);
  out.height = static_cast<int>(cinfo.output_height);
  out.width = static_cast<int>(cinfo.output_width);
  out.pixels.resize(static_cast<std::size_t>(out.height) * out.width * 3);
  while (cinfo.output_scanline < cinfo.output_height) {
    JSAMPROW row = out.pixels.data() + static_cast<std::size_t>(cinfo.output_scanline) * out.width * 3;
    jpeg_read_scanlines(&cinfo, &row, 1);
  }
  jpeg_finish_decompress(&cinfo);
  jpeg_destroy_decompress(&cinfo);
  return out;
}

// Classic libpng writer for 8/16-bit grayscale or 8-bit RGB rows (big-endian samples).
void write_png_rows(const fs::path& path, int width, int height, int bit_depth, int color_type,
                    const std::vector<png_byte>& data) {
  FilePtr f = open_file(path, "wb");
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_write_struct(&png, &info);
    throw IoError("libpng initialization failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw IoError("failed writing PNG '" + path.string() + "'");
  }
  png_init_io(png, f.get());
  png_set_IHDR(png, info, static_cast<png_uint_32>(width), static_cast<png_uint_32>(height), bit_depth, color_type,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  const int channels = color_type == PNG_COLOR_TYPE_RGB ? 3 : 1;
  const std::size_t stride = static_cast<std::size_t>(width) * channels * (bit_depth / 8);
  for (int r = 0; r < height; ++r) png_write_row(png, data.data() + stride * static_cast<std::size_t>(r));
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

}  // namespace

RgbImage read_image(const fs::path& path) {
  unsigned char sig[8] = {0};
  {
    FilePtr f = open_file(path, "rb");
    if (std::fread(sig, 1, 8, f.get()) < 3) throw IoError("'" + path.string() + "' is too short to be an image");
  }
  if (png_sig_cmp(sig, 0, 8) == 0) return read_png(path);
  if (sig[0] == 0xFF && sig[1] == 0xD8 && sig[2] == 0xFF) return read_jpeg(path);
  throw IoError("'" + path.string() + "' is neither PNG nor JPEG");
}

void write_png_rgb(const fs::path& path, const RgbImage& image) {
  write_png_rows(path, image.width, image.height, 8, PNG_COLOR_TYPE_RGB,
                 std::vector<png_byte>(image.pixels.begin(), image.pixels.end()));
}

void write_png_gray8(const fs::path& path, const Map2D<std::uint8_t>& image) {
  std::vector<png_byte> data(image.data(), image.data() + image.size());
  write_png_rows(path, static_cast<int>(image.cols()), static_cast<int>(image.rows()), 8, PNG_COLOR_TYPE_GRAY, data);
}

BinaryMask read_mask(const fs::path& path) {
  const RgbImage img = read_image(path);
  BinaryMask mask(img.height, img.width);
  for (int r = 0; r < img.height; ++r)
    for (int c = 0; c < img.width; ++c) mask(r, c) = img.at(r, c, 0) > 127 ? 1 : 0;
  return mask;
}

std::uint16_t heatmap_value(double score) {
  if (!(score >= 0.0 && score <= 1.0)) throw ContractError("heatmap scores must lie in [0, 1]");
  return static_cast<std::uint16_t>(std::floor(score * 65535.0 + 0.5));
}

void export_heatmap(const ScoreMap& map, const fs::path& path) {
  std::vector<png_byte> data(static_cast<std::size_t>(map.size()) * 2);
  for (Eigen::Index i = 0; i < map.size(); ++i) {
    const std::uint16_t v = heatmap_value(map.data()[i]);
    data[static_cast<std::size_t>(2 * i)] = static_cast<png_byte>(v >> 8);
    data[static_cast<std::size_t>(2 * i + 1)] = static_cast<png_byte>(v & 0xFF);
  }
  write_png_rows(path, static_cast<int>(map.cols()), static_cast<int>(map.rows()), 16, PNG_COLOR_TYPE_GRAY, data);
}

Map2D<std::uint16_t> read_png_gray16(const fs::path& path) {
  FilePtr f = open_file(path, "rb");
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw IoError("libpng initialization failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw IoError("cannot decode PNG '" + path.string() + "'");
  }
  png_init_io(png, f.get());
  png_read_info(png, info);
  if (png_get_bit_depth(png, info) != 16 || png_get_color_type(png, info) != PNG_COLOR_TYPE_GRAY) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw IoError("'" + path.string() + "' is not a 16-bit grayscale PNG");
  }
  const auto width = static_cast<int>(png_get_image_width(png, info));
  const auto height = static_cast<int>(png_get_image_height(png, info));
  std::vector<png_byte> row(static_cast<std::size_t>(width) * 2);
  Map2D<std::uint16_t> out(height, width);
  for (int r = 0; r < height; ++r) {
    png_read_row(png, row.data(), nullptr);
    for (int c = 0; c < width; ++c)
      out(r, c) = static_cast<std::uint16_t>((row[static_cast<std::size_t>(2 * c)] << 8) | row[static_cast<std::size_t>(2 * c + 1)]);
  }
  png_destroy_read_struct(&png, &info, nullptr);
  return out;
}

}  // namespace winseg
