#include "empaste/image_io.hpp"

#include <png.h>

#include <cstdio>
#include <memory>
#include <string>

namespace empaste::io {

namespace {

struct FileCloser {
  void operator()(std::FILE* f) const noexcept {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

FilePtr open_file(const std::filesystem::path& path, const char* mode) {
  FilePtr f(std::fopen(path.c_str(), mode));
  if (!f) throw Error(ErrorCode::IoError, "cannot open " + path.string());
  return f;
}

[[noreturn]] void png_fail(const std::filesystem::path& path, const char* what) {
  throw Error(ErrorCode::MalformedFile, std::string(what) + ": " + path.string());
}

// Decoded PNG with all transforms applied: 8- or 16-bit samples, gray or RGB,
// no alpha.
struct Decoded {
  int width = 0;
  int height = 0;
  int channels = 0;
  int bit_depth = 8;
  std::vector<std::uint8_t> rows;  // big-endian for 16-bit
};

Decoded decode(const std::filesystem::path& path, bool want_rgb, bool keep16) {
  FilePtr f = open_file(path, "rb");
  unsigned char sig[8];
  if (std::fread(sig, 1, 8, f.get()) != 8 || png_sig_cmp(sig, 0, 8) != 0) png_fail(path, "not a PNG");

  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png) png_fail(path, "png_create_read_struct failed");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_read_struct(&png, nullptr, nullptr);
    png_fail(path, "png_create_info_struct failed");
  }
  Decoded out;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    png_fail(path, "corrupt PNG");
  }
  png_init_io(png, f.get());
  png_set_sig_bytes(png, 8);
  png_read_info(png, info);

  const png_byte color = png_get_color_type(png, info);
  const png_byte depth = png_get_bit_depth(png, info);
  if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(png);
  if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
  if (depth == 16 && !keep16) png_set_strip_16(png);
  png_set_strip_alpha(png);
  const bool is_color = (color & PNG_COLOR_MASK_COLOR) != 0;
  if (want_rgb && !is_color) png_set_gray_to_rgb(png);
  if (!want_rgb && is_color) png_set_rgb_to_gray_fixed(png, 1, -1, -1);
  png_read_update_info(png, info);

  out.width = static_cast<int>(png_get_image_width(png, info));
  out.height = static_cast<int>(png_get_image_height(png, info));
  out.channels = png_get_channels(png, info);
  out.bit_depth = png_get_bit_depth(png, info);
  const std::size_t rowbytes = png_get_rowbytes(png, info);
  out.rows.resize(rowbytes * static_cast<std::size_t>(out.height));
  std::vector<png_bytep> ptrs(static_cast<std::size_t>(out.height));
  for (int y = 0; y < out.height; ++y) ptrs[static_cast<std::size_t>(y)] = out.rows.data() + rowbytes * y;
  png_read_image(png, ptrs.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  return out;
}

void encode(const std::filesystem::path& path, int width, int height, int color_type, int bit_depth,
            const std::uint8_t* data, std::size_t rowbytes) {
  FilePtr f = open_file(path, "wb");
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png) throw Error(ErrorCode::IoError, "png_create_write_struct failed");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_write_struct(&png, nullptr);
    throw Error(ErrorCode::IoError, "png_create_info_struct failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw Error(ErrorCode::IoError, "PNG write failed: " + path.string());
  }
  png_init_io(png, f.get());
  png_set_IHDR(png, info, static_cast<png_uint_32>(width), static_cast<png_uint_32>(height), bit_depth,
               color_type, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  for (int y = 0; y < height; ++y)
    png_write_row(png, const_cast<png_bytep>(data + rowbytes * static_cast<std::size_t>(y)));
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

}  // namespace

RasterImage read_png(const std::filesystem::path& path, int channels) {
  if (channels != 1 && channels != 3) throw Error(ErrorCode::InvalidArgument, "channels must be 1 or 3");
  Decoded d = decode(path, channels == 3, false);
  return RasterImage(d.width, d.height, d.channels, std::move(d.rows));
}

void write_png(const std::filesystem::path& path, const RasterImage& image) {
  encode(path, image.width(), image.height(), image.channels() == 3 ? PNG_COLOR_TYPE_RGB : PNG_COLOR_TYPE_GRAY,
         8, image.samples().data(), static_cast<std::size_t>(image.width()) * image.channels());
}

Gray16 read_png16(const std::filesystem::path& path) {
  Decoded d = decode(path, false, true);
  Gray16 out{d.width, d.height, {}};
  out.values.resize(static_cast<std::size_t>(d.width) * static_cast<std::size_t>(d.height));
  for (std::size_t i = 0; i < out.values.size(); ++i) {
    if (d.bit_depth == 16) {
      out.values[i] = static_cast<std::uint16_t>((d.rows[2 * i] << 8) | d.rows[2 * i + 1]);
    } else {
      out.values[i] = static_cast<std::uint16_t>(d.rows[i] * 257);
    }
  }
  return out;
}

void write_png16(const std::filesystem::path& path, const Gray16& image) {
  std::vector<std::uint8_t> bytes(image.values.size() * 2);
  for (std::size_t i = 0; i < image.values.size(); ++i) {
    bytes[2 * i] = static_cast<std::uint8_t>(image.values[i] >> 8);
    bytes[2 * i + 1] = static_cast<std::uint8_t>(image.values[i] & 0xff);
  }
  encode(path, image.width, image.height, PNG_COLOR_TYPE_GRAY, 16, bytes.data(),
         static_cast<std::size_t>(image.width) * 2);
}

BinaryMask read_mask_png(const std::filesystem::path& path) {
  Decoded d = decode(path, false, false);
  return BinaryMask(d.width, d.height, std::move(d.rows));
}

void write_mask_png(const std::filesystem::path& path, const BinaryMask& mask) {
  std::vector<std::uint8_t> bytes(mask.bits().begin(), mask.bits().end());
  for (auto& b : bytes) b = b ? 255 : 0;
  encode(path, mask.width(), mask.height(), PNG_COLOR_TYPE_GRAY, 8, bytes.data(),
         static_cast<std::size_t>(mask.width()));
}

}  // namespace empaste::io
