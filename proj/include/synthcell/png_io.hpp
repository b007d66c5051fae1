#pragma once

// PNG read/write for 8-bit gray/RGB rasters and 16-bit gray label maps,
// on top of libpng's low-level API.

#include <png.h>

#include <csetjmp>
#include <cstdio>
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include "synthcell/error.hpp"
#include "synthcell/imgcore.hpp"

namespace synthcell {

namespace detail {

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

struct PngData {
  int width = 0;
  int height = 0;
  int channels = 0;
  int bit_depth = 0;  // 8 or 16 after expansion
  std::vector<std::uint8_t> bytes;
  std::vector<png_bytep> rows;
  std::string error;
};

inline void png_error_handler(png_structp png, png_const_charp msg) {
  auto* data = static_cast<PngData*>(png_get_error_ptr(png));
  if (data) data->error = msg ? msg : "libpng error";
  png_longjmp(png, 1);
}

inline void png_warning_handler(png_structp, png_const_charp) {}

// Returns false with data.error set on any decode failure. Only POD locals
// live across the setjmp boundary.
inline bool decode_png(std::FILE* fp, PngData& data) {
  png_byte sig[8];
  if (std::fread(sig, 1, 8, fp) != 8 || png_sig_cmp(sig, 0, 8) != 0) {
    data.error = "not a PNG file";
    return false;
  }
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, &data, png_error_handler, png_warning_handler);
  if (!png) {
    data.error = "png_create_read_struct failed";
    return false;
  }
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_read_struct(&png, nullptr, nullptr);
    data.error = "png_create_info_struct failed";
    return false;
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    return false;
  }
  png_init_io(png, fp);
  png_set_sig_bytes(png, 8);
  png_read_info(png, info);

  const int color_type = png_get_color_type(png, info);
  const int depth = png_get_bit_depth(png, info);
  if (color_type == PNG_COLOR_TYPE_PALETTE) {
    data.error = "palette PNGs are not supported";
    png_destroy_read_struct(&png, &info, nullptr);
    return false;
  }
  if ((color_type & PNG_COLOR_MASK_ALPHA) != 0 || png_get_valid(png, info, PNG_INFO_tRNS)) {
    data.error = "PNGs with an alpha channel are not supported";
    png_destroy_read_struct(&png, &info, nullptr);
    return false;
  }
  if (color_type == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(png);
  png_set_interlace_handling(png);
  png_read_update_info(png, info);

  data.width = static_cast<int>(png_get_image_width(png, info));
  data.height = static_cast<int>(png_get_image_height(png, info));
  data.channels = png_get_channels(png, info);
  data.bit_depth = png_get_bit_depth(png, info);
  const std::size_t row_bytes = png_get_rowbytes(png, info);
  data.bytes.resize(row_bytes * static_cast<std::size_t>(data.height));
  data.rows.resize(static_cast<std::size_t>(data.height));
  for (int y = 0; y < data.height; ++y) data.rows[y] = data.bytes.data() + row_bytes * static_cast<std::size_t>(y);
  png_read_image(png, data.rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  return true;
}

inline PngData read_png(const std::filesystem::path& path) {
  std::error_code ec;
  if (!std::filesystem::is_regular_file(path, ec)) fail(ErrorCode::NotFound, "no such file: " + path.string());
  FilePtr fp(std::fopen(path.c_str(), "rb"));
  if (!fp) fail(ErrorCode::NotFound, "cannot open " + path.string());
  PngData data;
  if (!decode_png(fp.get(), data)) fail(ErrorCode::UnsupportedFormat, path.string() + ": " + data.error);
  return data;
}

inline bool encode_png(std::FILE* fp, int width, int height, int color_type, int bit_depth,
                       std::vector<png_bytep>& rows, std::string& error) {
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png) return false;
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_write_struct(&png, nullptr);
    return false;
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    error = "libpng write failure";
    return false;
  }
  png_init_io(png, fp);
  png_set_IHDR(png, info, static_cast<png_uint_32>(width), static_cast<png_uint_32>(height), bit_depth, color_type,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  png_write_image(png, rows.data());
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
  return true;
}

inline void write_png(const std::filesystem::path& path, int width, int height, int channels, int bit_depth,
                      std::vector<std::uint8_t>& bytes) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  FilePtr fp(std::fopen(path.c_str(), "wb"));
  if (!fp) fail(ErrorCode::IoFailure, "cannot write " + path.string());
  const std::size_t row_bytes = static_cast<std::size_t>(width) * channels * (bit_depth / 8);
  std::vector<png_bytep> rows(static_cast<std::size_t>(height));
  for (int y = 0; y < height; ++y) rows[y] = bytes.data() + row_bytes * static_cast<std::size_t>(y);
  const int color_type = channels == 1 ? PNG_COLOR_TYPE_GRAY : PNG_COLOR_TYPE_RGB;
  std::string error;
  if (!encode_png(fp.get(), width, height, color_type, bit_depth, rows, error)) {
    fail(ErrorCode::IoFailure, path.string() + ": " + error);
  }
}

}  // namespace detail

/// Loads an 8-bit (or 16-bit, rescaled by /257) gray or RGB PNG.
inline RasterImage load_raster(const std::filesystem::path& path) {
  detail::PngData data = detail::read_png(path);
  if (data.channels != 1 && data.channels != 3) {
    fail(ErrorCode::UnsupportedFormat, path.string() + ": unexpected channel count");
  }
  if (data.bit_depth == 8) return RasterImage(data.width, data.height, data.channels, std::move(data.bytes));
  std::vector<std::uint8_t> px(data.bytes.size() / 2);
  for (std::size_t i = 0; i < px.size(); ++i) {
    const unsigned v = (static_cast<unsigned>(data.bytes[2 * i]) << 8) | data.bytes[2 * i + 1];
    px[i] = static_cast<std::uint8_t>(v / 257);
  }
  return RasterImage(data.width, data.height, data.channels, std::move(px));
}

inline void save_raster(const std::filesystem::path& path, const RasterImage& img) {
  std::vector<std::uint8_t> bytes = img.buffer();
  detail::write_png(path, img.width(), img.height(), img.channels(), 8, bytes);
}

/// Loads an 8- or 16-bit grayscale PNG as exact integer labels.
inline LabelMap load_label_map(const std::filesystem::path& path) {
  detail::PngData data = detail::read_png(path);
  if (data.channels != 1) fail(ErrorCode::UnsupportedFormat, path.string() + ": label maps must be grayscale");
  LabelMap map(data.width, data.height);
  for (std::size_t i = 0; i < map.size(); ++i) {
    map[i] = data.bit_depth == 8 ? data.bytes[i]
                                 : (static_cast<std::uint32_t>(data.bytes[2 * i]) << 8) | data.bytes[2 * i + 1];
  }
  return map;
}

/// Writes labels as a 16-bit grayscale PNG. Labels above 65535 are rejected.
inline void save_label_map(const std::filesystem::path& path, const LabelMap& map) {
  std::vector<std::uint8_t> bytes(map.size() * 2);
  for (std::size_t i = 0; i < map.size(); ++i) {
    if (map[i] > 0xFFFF) fail(ErrorCode::InvalidParam, "label " + std::to_string(map[i]) + " exceeds 16 bits");
    bytes[2 * i] = static_cast<std::uint8_t>(map[i] >> 8);
    bytes[2 * i + 1] = static_cast<std::uint8_t>(map[i] & 0xFF);
  }
  detail::write_png(path, map.width(), map.height(), 1, 16, bytes);
}

/// 0/255 8-bit PNG.
inline void save_binary_mask(const std::filesystem::path& path, const BinaryMask& mask) {
  std::vector<std::uint8_t> bytes(mask.size());
  for (std::size_t i = 0; i < mask.size(); ++i) bytes[i] = mask[i] ? 255 : 0;
  detail::write_png(path, mask.width(), mask.height(), 1, 8, bytes);
}

inline BinaryMask load_binary_mask(const std::filesystem::path& path) {
  const RasterImage img = load_raster(path);
  if (img.channels() != 1) fail(ErrorCode::UnsupportedFormat, path.string() + ": masks must be grayscale");
  BinaryMask mask(img.width(), img.height());
  for (std::size_t i = 0; i < mask.size(); ++i) mask[i] = img.pixels()[i] >= 128 ? 1 : 0;
  return mask;
}

}  // namespace synthcell
