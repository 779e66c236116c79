#pragma once

// PNG (via libpng) and binary PPM/PGM reading and writing.

#include <png.h>

#include <cctype>
#include <csetjmp>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "shadoc/error.hpp"
#include "shadoc/imaging/image.hpp"

namespace shadoc::imaging {

inline std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw io_error("cannot open '" + path.string() + "'");
  return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(in), {});
}

inline void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  const auto dir = path.parent_path();
  if (!dir.empty() && !std::filesystem::is_directory(dir))
    throw io_error("directory '" + dir.string() + "' does not exist");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw io_error("cannot write '" + path.string() + "'");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw io_error("short write to '" + path.string() + "'");
}

namespace detail {

struct png_stream {
  std::span<const std::uint8_t> in;
  std::size_t offset = 0;
  std::vector<std::uint8_t>* out = nullptr;
  char message[256] = {};
};

extern "C" inline void png_read_bytes(png_structp png, png_bytep dst, png_size_t len) {
  auto* s = static_cast<png_stream*>(png_get_io_ptr(png));
  if (s->offset + len > s->in.size()) {
    s->offset = s->in.size();
    png_error(png, "unexpected end of PNG data");
  }
  std::memcpy(dst, s->in.data() + s->offset, len);
  s->offset += len;
}

extern "C" inline void png_write_bytes(png_structp png, png_bytep src, png_size_t len) {
  auto* s = static_cast<png_stream*>(png_get_io_ptr(png));
  s->out->insert(s->out->end(), src, src + len);
}

extern "C" inline void png_flush_noop(png_structp) {}

extern "C" inline void png_on_error(png_structp png, png_const_charp msg) {
  auto* s = static_cast<png_stream*>(png_get_error_ptr(png));
  std::strncpy(s->message, msg, sizeof(s->message) - 1);
  std::longjmp(png_jmpbuf(png), 1);
}

extern "C" inline void png_on_warning(png_structp, png_const_charp) {}

inline bool has_png_signature(std::span<const std::uint8_t> b) {
  return b.size() >= 8 && png_sig_cmp(b.data(), 0, 8) == 0;
}

inline bool has_pnm_signature(std::span<const std::uint8_t> b) {
  return b.size() >= 2 && b[0] == 'P' && (b[1] == '5' || b[1] == '6');
}

}  // namespace detail

/// Decodes an 8-bit gray or RGB PNG. Alpha is dropped; palette and
/// 16-bit or sub-byte images are rejected.
inline image decode_png(std::span<const std::uint8_t> bytes) {
  // Everything touched after setjmp lives on the heap so longjmp cannot leave
  // an automatic object in an indeterminate state.
  struct state {
    detail::png_stream stream;
    image img;
    std::vector<png_bytep> rows;
    const char* unsupported = nullptr;
  };
  const auto st = std::make_unique<state>();
  st->stream.in = bytes;
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, &st->stream, detail::png_on_error,
                                           detail::png_on_warning);
  if (!png) throw error("libpng: cannot allocate read struct");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_read_struct(&png, nullptr, nullptr);
    throw error("libpng: cannot allocate info struct");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw decode_error(std::string("PNG decode failed: ") + st->stream.message, st->stream.offset);
  }
  png_set_read_fn(png, &st->stream, detail::png_read_bytes);
  png_read_info(png, info);
  const int depth = png_get_bit_depth(png, info);
  const int color = png_get_color_type(png, info);
  std::size_t channels = 0;
  if (depth != 8) {
    st->unsupported = "only 8-bit PNG images are supported";
  } else if (color == PNG_COLOR_TYPE_PALETTE) {
    st->unsupported = "paletted PNG images are not supported";
  } else if (color == PNG_COLOR_TYPE_GRAY || color == PNG_COLOR_TYPE_GRAY_ALPHA) {
    channels = 1;
  } else if (color == PNG_COLOR_TYPE_RGB || color == PNG_COLOR_TYPE_RGB_ALPHA) {
    channels = 3;
  } else {
    st->unsupported = "unknown PNG color type";
  }
  if (!st->unsupported) {
    if (color & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
    png_set_interlace_handling(png);
    png_read_update_info(png, info);
    st->img = image(png_get_image_width(png, info), png_get_image_height(png, info), channels);
    st->rows.resize(st->img.height);
    for (std::size_t y = 0; y < st->img.height; ++y)
      st->rows[y] = st->img.pixels.data() + y * st->img.width * channels;
    png_read_image(png, st->rows.data());
    png_read_end(png, nullptr);
  }
  png_destroy_read_struct(&png, &info, nullptr);
  if (st->unsupported) throw unsupported_format_error(st->unsupported);
  return std::move(st->img);
}

inline std::vector<std::uint8_t> encode_png(const image& img) {
  struct state {
    detail::png_stream stream;
    std::vector<std::uint8_t> out;
    std::vector<png_bytep> rows;
  };
  const auto st = std::make_unique<state>();
  st->stream.out = &st->out;
  st->rows.resize(img.height);
  for (std::size_t y = 0; y < img.height; ++y)
    st->rows[y] = const_cast<png_bytep>(img.pixels.data() + y * img.width * img.channels);
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, &st->stream, detail::png_on_error,
                                            detail::png_on_warning);
  if (!png) throw error("libpng: cannot allocate write struct");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_write_struct(&png, nullptr);
    throw error("libpng: cannot allocate info struct");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw error(std::string("PNG encode failed: ") + st->stream.message);
  }
  png_set_write_fn(png, &st->stream, detail::png_write_bytes, detail::png_flush_noop);
  png_set_IHDR(png, info, static_cast<png_uint_32>(img.width), static_cast<png_uint_32>(img.height), 8,
               img.channels == 3 ? PNG_COLOR_TYPE_RGB : PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  png_write_image(png, st->rows.data());
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
  return std::move(st->out);
}

/// Binary P5 (gray) or P6 (RGB) with maxval 255.
inline image decode_pnm(std::span<const std::uint8_t> bytes) {
  std::size_t pos = 0;
  if (!detail::has_pnm_signature(bytes)) throw unsupported_format_error("not a binary PGM/PPM file");
  const std::size_t channels = bytes[1] == '6' ? 3 : 1;
  pos = 2;
  auto skip_space = [&] {
    while (pos < bytes.size()) {
      if (bytes[pos] == '#') {
        while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
      } else if (std::isspace(bytes[pos])) {
        ++pos;
      } else {
        break;
      }
    }
  };
  auto read_uint = [&](const char* what) {
    skip_space();
    if (pos >= bytes.size() || !std::isdigit(bytes[pos]))
      throw decode_error(std::string("PNM header: expected ") + what, pos);
    std::size_t v = 0;
    while (pos < bytes.size() && std::isdigit(bytes[pos])) {
      v = v * 10 + (bytes[pos] - '0');
      if (v > (1u << 24)) throw decode_error(std::string("PNM header: ") + what + " too large", pos);
      ++pos;
    }
    return v;
  };
  const std::size_t w = read_uint("width");
  const std::size_t h = read_uint("height");
  const std::size_t maxval = read_uint("maxval");
  if (w == 0 || h == 0) throw decode_error("PNM header: zero extent", pos);
  if (maxval != 255) throw unsupported_format_error("PNM maxval " + std::to_string(maxval) + " (only 255 is supported)");
  if (pos >= bytes.size() || !std::isspace(bytes[pos])) throw decode_error("PNM header: missing separator", pos);
  ++pos;
  image img(w, h, channels);
  if (bytes.size() - pos < img.size())
    throw decode_error("PNM payload truncated", bytes.size());
  std::memcpy(img.pixels.data(), bytes.data() + pos, img.size());
  return img;
}

inline std::vector<std::uint8_t> encode_pnm(const image& img) {
  const std::string header = std::string(img.channels == 3 ? "P6" : "P5") + "\n" +
                             std::to_string(img.width) + " " + std::to_string(img.height) + "\n255\n";
  std::vector<std::uint8_t> out(header.begin(), header.end());
  out.insert(out.end(), img.pixels.begin(), img.pixels.end());
  return out;
}

/// Decodes by magic bytes: PNG or binary PPM/PGM.
inline image decode_image(std::span<const std::uint8_t> bytes) {
  if (detail::has_png_signature(bytes)) return decode_png(bytes);
  if (detail::has_pnm_signature(bytes)) return decode_pnm(bytes);
  throw unsupported_format_error("unrecognised image signature (expected PNG or binary PPM/PGM)");
}

inline image load_image(const std::filesystem::path& path) {
  return decode_image(read_file(path));
}

/// Writes PPM/PGM for .ppm/.pgm extensions and PNG otherwise.
inline void save_image(const image& img, const std::filesystem::path& path) {
  const auto ext = path.extension().string();
  if (ext == ".ppm" || ext == ".pgm")
    write_file(path, encode_pnm(img));
  else
    write_file(path, encode_png(img));
}

}  // namespace shadoc::imaging
