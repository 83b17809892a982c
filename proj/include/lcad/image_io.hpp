#pragma once

#include <png.h>

#include <cctype>
#include <csetjmp>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include "lcad/image.hpp"

namespace lcad {

enum class ImageFormat { Pgm, Png };

inline ImageFormat format_for_path(const std::filesystem::path& path) {
  auto ext = path.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  return ext == ".png" ? ImageFormat::Png : ImageFormat::Pgm;
}

namespace detail {

inline int bit_depth_for_maxval(unsigned maxval) {
  for (int bits : {8, 10, 12, 16})
    if (maxval < (1u << bits)) return bits;
  throw Error("unsupported PGM maxval " + std::to_string(maxval));
}

inline std::vector<unsigned char> read_all(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot read image file: " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

// PGM header token reader; skips whitespace and '#' comments.
class PgmHeader {
 public:
  explicit PgmHeader(const std::vector<unsigned char>& data) : data_(data) {}

  unsigned next_number() {
    skip_space();
    if (pos_ >= data_.size() || !std::isdigit(data_[pos_])) throw Error("corrupt image: bad PGM header");
    unsigned long v = 0;
    while (pos_ < data_.size() && std::isdigit(data_[pos_])) {
      v = v * 10 + (data_[pos_++] - '0');
      if (v > 1u << 30) throw Error("corrupt image: PGM header value too large");
    }
    return static_cast<unsigned>(v);
  }
  // Exactly one whitespace byte separates the header from the raster.
  std::size_t raster_offset() {
    if (pos_ >= data_.size() || !std::isspace(data_[pos_])) throw Error("corrupt image: bad PGM header");
    return pos_ + 1;
  }

 private:
  void skip_space() {
    while (pos_ < data_.size()) {
      if (data_[pos_] == '#') {
        while (pos_ < data_.size() && data_[pos_] != '\n') ++pos_;
      } else if (std::isspace(data_[pos_])) {
        ++pos_;
      } else {
        break;
      }
    }
  }
  const std::vector<unsigned char>& data_;
  std::size_t pos_ = 2;
};

inline GrayImage decode_pgm(const std::vector<unsigned char>& data) {
  if (data.size() >= 2 && data[0] == 'P' && (data[1] == '6' || data[1] == '3'))
    throw Error("color image rejected: PPM input is not grayscale");
  if (data.size() < 2 || data[0] != 'P' || data[1] != '5') throw Error("unsupported image format");
  PgmHeader header(data);
  const unsigned w = header.next_number();
  const unsigned h = header.next_number();
  const unsigned maxval = header.next_number();
  if (w == 0 || h == 0 || maxval == 0 || maxval > 65535) throw Error("corrupt image: bad PGM dimensions");
  const std::size_t offset = header.raster_offset();
  const std::size_t bytes_per = maxval < 256 ? 1 : 2;
  const std::size_t need = static_cast<std::size_t>(w) * h * bytes_per;
  if (data.size() < offset + need) throw Error("corrupt image: truncated raster");

  GrayImage img(static_cast<int>(w), static_cast<int>(h), bit_depth_for_maxval(maxval));
  const unsigned char* p = data.data() + offset;
  for (std::size_t i = 0; i < img.pixels.size(); ++i) {
    const unsigned v = bytes_per == 1 ? p[i] : (static_cast<unsigned>(p[2 * i]) << 8) | p[2 * i + 1];
    if (v > maxval) throw Error("corrupt image: sample exceeds maxval");
    img.pixels[i] = static_cast<std::uint16_t>(v);
  }
  return img;
}

inline std::vector<unsigned char> encode_pgm(const GrayImage& img) {
  img.validate();
  const unsigned maxval = static_cast<unsigned>(img.max_value());
  std::string header = "P5\n" + std::to_string(img.width) + " " + std::to_string(img.height) + "\n" +
                       std::to_string(maxval) + "\n";
  std::vector<unsigned char> out(header.begin(), header.end());
  out.reserve(out.size() + img.size() * (maxval < 256 ? 1 : 2));
  for (std::uint16_t v : img.pixels) {
    if (maxval < 256) {
      out.push_back(static_cast<unsigned char>(v));
    } else {
      out.push_back(static_cast<unsigned char>(v >> 8));
      out.push_back(static_cast<unsigned char>(v & 0xff));
    }
  }
  return out;
}

struct PngMemoryReader {
  const std::vector<unsigned char>* data;
  std::size_t pos;
};

inline void png_read_from_memory(png_structp png, png_bytep out, png_size_t n) {
  auto* r = static_cast<PngMemoryReader*>(png_get_io_ptr(png));
  if (r->pos + n > r->data->size()) png_error(png, "truncated");
  std::memcpy(out, r->data->data() + r->pos, n);
  r->pos += n;
}

inline void png_silent_warning(png_structp, png_const_charp) {}

// libpng reports errors by longjmp; nothing with a destructor is created between
// setjmp and the calls that may jump.
inline GrayImage decode_png(const std::vector<unsigned char>& data) {
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, png_silent_warning);
  if (!png) throw Error("libpng init failed");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_read_struct(&png, nullptr, nullptr);
    throw Error("libpng init failed");
  }
  PngMemoryReader reader{&data, 0};
  GrayImage img;
  std::vector<png_bytep> rows;
  std::vector<unsigned char> raster;
  const char* volatile failure = nullptr;

  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw Error(failure ? failure : "corrupt image: PNG decode failed");
  }
  png_set_read_fn(png, &reader, png_read_from_memory);
  png_read_info(png, info);
  const png_uint_32 w = png_get_image_width(png, info);
  const png_uint_32 h = png_get_image_height(png, info);
  const int color = png_get_color_type(png, info);
  const int depth = png_get_bit_depth(png, info);
  if (color != PNG_COLOR_TYPE_GRAY) {
    failure = (color & PNG_COLOR_MASK_COLOR) ? "color image rejected: PNG is not grayscale"
                                            : "unsupported image format: gray+alpha PNG";
    png_error(png, "reject");
  }
  if (depth != 8 && depth != 16) {
    failure = "unsupported image format: PNG bit depth must be 8 or 16";
    png_error(png, "reject");
  }
  int bits = depth;
  png_color_8p sig = nullptr;
  if (depth == 16 && png_get_sBIT(png, info, &sig) && sig && is_supported_bit_depth(sig->gray))
    bits = sig->gray;

  const std::size_t stride = static_cast<std::size_t>(w) * (depth / 8);
  raster.resize(stride * h);
  rows.resize(h);
  for (png_uint_32 y = 0; y < h; ++y) rows[y] = raster.data() + y * stride;
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);

  img = GrayImage(static_cast<int>(w), static_cast<int>(h), bits);
  for (std::size_t i = 0; i < img.pixels.size(); ++i) {
    const unsigned v = depth == 8 ? raster[i] : (static_cast<unsigned>(raster[2 * i]) << 8) | raster[2 * i + 1];
    if (static_cast<int>(v) > img.max_value()) throw Error("corrupt image: sample exceeds significant bits");
    img.pixels[i] = static_cast<std::uint16_t>(v);
  }
  return img;
}

inline void png_write_to_vector(png_structp png, png_bytep in, png_size_t n) {
  auto* out = static_cast<std::vector<unsigned char>*>(png_get_io_ptr(png));
  out->insert(out->end(), in, in + n);
}

inline void png_flush_noop(png_structp) {}

inline std::vector<unsigned char> encode_png(const GrayImage& img) {
  img.validate();
  const int depth = img.bit_depth == 8 ? 8 : 16;
  const std::size_t stride = static_cast<std::size_t>(img.width) * (depth / 8);
  std::vector<unsigned char> raster(stride * img.height);
  for (std::size_t i = 0; i < img.pixels.size(); ++i) {
    if (depth == 8) {
      raster[i] = static_cast<unsigned char>(img.pixels[i]);
    } else {
      raster[2 * i] = static_cast<unsigned char>(img.pixels[i] >> 8);
      raster[2 * i + 1] = static_cast<unsigned char>(img.pixels[i] & 0xff);
    }
  }
  std::vector<png_bytep> rows(img.height);
  for (int y = 0; y < img.height; ++y) rows[y] = raster.data() + y * stride;
  std::vector<unsigned char> out;

  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, png_silent_warning);
  if (!png) throw Error("libpng init failed");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_write_struct(&png, nullptr);
    throw Error("libpng init failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw Error("PNG encode failed");
  }
  png_set_write_fn(png, &out, png_write_to_vector, png_flush_noop);
  png_set_IHDR(png, info, img.width, img.height, depth, PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  if (depth == 16 && img.bit_depth != 16) {
    png_color_8 sig{};
    sig.gray = static_cast<png_byte>(img.bit_depth);
    png_set_sBIT(png, info, &sig);
  }
  png_write_info(png, info);
  png_write_image(png, rows.data());
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
  return out;
}

inline bool has_png_signature(const std::vector<unsigned char>& data) {
  return data.size() >= 8 && png_sig_cmp(data.data(), 0, 8) == 0;
}

}  // namespace detail

/// Decodes an in-memory P5 PGM or grayscale PNG. Pixel values are never rescaled.
inline GrayImage decode_image(const std::vector<unsigned char>& data) {
  if (detail::has_png_signature(data)) return detail::decode_png(data);
  if (data.size() >= 2 && data[0] == 'P') return detail::decode_pgm(data);
  if (data.size() >= 4 && data[1] == 'P' && data[2] == 'N' && data[3] == 'G')
    throw Error("corrupt image: damaged PNG signature");
  throw Error("unsupported image format");
}

inline std::vector<unsigned char> encode_image(const GrayImage& img, ImageFormat format) {
  return format == ImageFormat::Png ? detail::encode_png(img) : detail::encode_pgm(img);
}

inline GrayImage load_image(const std::filesystem::path& path) { return decode_image(detail::read_all(path)); }

/// Writes through a sibling temp file and renames it into place, so readers never see
/// a partial file.
inline void write_bytes(const std::filesystem::path& path, const std::vector<unsigned char>& bytes) {
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot open for writing: " + path.string());
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out.flush()) throw Error("write failed: " + path.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    std::filesystem::remove(tmp, ec);
    throw Error("cannot move output into place: " + path.string());
  }
}

inline void write_text(const std::filesystem::path& path, const std::string& text) {
  write_bytes(path, std::vector<unsigned char>(text.begin(), text.end()));
}

/// Writes PGM or PNG, chosen by the file extension.
inline void save_image(const GrayImage& img, const std::filesystem::path& path) {
  write_bytes(path, encode_image(img, format_for_path(path)));
}

/// Mask as 8-bit image: 255 breast, 0 background.
inline GrayImage mask_to_image(const BreastMask& mask) {
  GrayImage img(mask.width, mask.height, 8);
  std::transform(mask.mask.begin(), mask.mask.end(), img.pixels.begin(),
                 [](std::uint8_t m) { return static_cast<std::uint16_t>(m ? 255 : 0); });
  return img;
}

inline BreastMask image_to_mask(const GrayImage& img) {
  BreastMask mask(img.width, img.height);
  std::transform(img.pixels.begin(), img.pixels.end(), mask.mask.begin(),
                 [](std::uint16_t v) { return static_cast<std::uint8_t>(v != 0); });
  return mask;
}

}  // namespace lcad
