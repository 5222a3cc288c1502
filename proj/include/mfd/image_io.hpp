#pragma once

// Image decoding/encoding: binary PPM/PGM (P6/P5) for bit-exact fixtures,
// PNG via libpng and JPEG via libjpeg for real data. Decoded images are
// raw-domain H x W x 3; gray sources are replicated and alpha is dropped.

#include <png.h>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <csetjmp>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <span>
#include <string>
#include <vector>

// jpeglib.h needs FILE and size_t declared first.
#include <jpeglib.h>

#include "mfd/error.hpp"
#include "mfd/image.hpp"

namespace mfd {

namespace fs = std::filesystem;

inline std::vector<std::uint8_t> read_file_bytes(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "'");
  return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(in), {});
}

namespace detail {

inline Image image_from_interleaved(const std::uint8_t* px, std::size_t h, std::size_t w,
                                    std::size_t src_channels, std::size_t keep_channels) {
  Image img(h, w, 3);
  double* out = img.pixels.data();
  for (std::size_t i = 0; i < h * w; ++i) {
    const std::uint8_t* p = px + i * src_channels;
    for (std::size_t c = 0; c < 3; ++c) out[i * 3 + c] = keep_channels == 1 ? p[0] : p[c];
  }
  return img;
}

inline Image decode_pnm(std::span<const std::uint8_t> bytes, const std::string& name) {
  std::size_t pos = 2;
  auto fail = [&](const std::string& why) -> DecodeError {
    return DecodeError("decode '" + name + "': " + why);
  };
  auto next_int = [&]() -> std::size_t {
    // Whitespace and '#' comments separate header fields.
    while (pos < bytes.size()) {
      if (bytes[pos] == '#') {
        while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
      } else if (std::isspace(bytes[pos])) {
        ++pos;
      } else {
        break;
      }
    }
    if (pos >= bytes.size() || !std::isdigit(bytes[pos])) throw fail("bad PNM header");
    std::size_t v = 0;
    while (pos < bytes.size() && std::isdigit(bytes[pos])) {
      v = v * 10 + (bytes[pos++] - '0');
      if (v > (1u << 24)) throw fail("PNM header value out of range");
    }
    return v;
  };
  const std::size_t channels = bytes[1] == '6' ? 3 : 1;
  const std::size_t w = next_int(), h = next_int(), maxval = next_int();
  if (w == 0 || h == 0) throw fail("zero image size");
  if (maxval != 255) throw fail("only 8-bit PNM (maxval 255) is supported");
  if (pos >= bytes.size() || !std::isspace(bytes[pos])) throw fail("bad PNM header");
  ++pos;
  if (bytes.size() - pos < w * h * channels) throw fail("truncated pixel data");
  return image_from_interleaved(bytes.data() + pos, h, w, channels, channels);
}

inline Image decode_png(std::span<const std::uint8_t> bytes, const std::string& name) {
  png_image image;
  std::memset(&image, 0, sizeof image);
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_memory(&image, bytes.data(), bytes.size()))
    throw DecodeError("decode '" + name + "': " + image.message);
  image.format = PNG_FORMAT_RGBA;
  std::vector<std::uint8_t> buf(PNG_IMAGE_SIZE(image));
  if (!png_image_finish_read(&image, nullptr, buf.data(), 0, nullptr)) {
    png_image_free(&image);
    throw DecodeError("decode '" + name + "': " + image.message);
  }
  return image_from_interleaved(buf.data(), image.height, image.width, 4, 3);
}

struct JpegErrorManager {
  jpeg_error_mgr pub;
  std::jmp_buf jump;
  char message[JMSG_LENGTH_MAX];
};

struct JpegPixels {
  std::vector<std::uint8_t> data;
  std::size_t height = 0, width = 0, components = 0;
};

// Only C objects live in this frame, so the longjmp out of libjpeg's error
// handler skips no destructors. Returns false with `message` filled on error.
inline bool jpeg_decode_into(std::span<const std::uint8_t> bytes, JpegPixels& out,
                             char (&message)[JMSG_LENGTH_MAX]) {
  jpeg_decompress_struct cinfo;
  JpegErrorManager err;
  cinfo.err = jpeg_std_error(&err.pub);
  err.pub.error_exit = [](j_common_ptr info) {
    auto* e = reinterpret_cast<JpegErrorManager*>(info->err);
    (*info->err->format_message)(info, e->message);
    std::longjmp(e->jump, 1);
  };
  if (setjmp(err.jump)) {
    std::memcpy(message, err.message, sizeof message);
    jpeg_destroy_decompress(&cinfo);
    return false;
  }
  jpeg_create_decompress(&cinfo);
  jpeg_mem_src(&cinfo, bytes.data(), static_cast<unsigned long>(bytes.size()));
  jpeg_read_header(&cinfo, TRUE);
  if (cinfo.jpeg_color_space != JCS_GRAYSCALE) cinfo.out_color_space = JCS_RGB;
  jpeg_start_decompress(&cinfo);
  out.height = cinfo.output_height;
  out.width = cinfo.output_width;
  out.components = static_cast<std::size_t>(cinfo.output_components);
  if (out.components != 1 && out.components != 3) {
    std::snprintf(message, sizeof message, "unsupported JPEG color layout");
    jpeg_destroy_decompress(&cinfo);
    return false;
  }
  out.data.resize(out.height * out.width * out.components);
  while (cinfo.output_scanline < cinfo.output_height) {
    JSAMPROW row = out.data.data() + cinfo.output_scanline * out.width * out.components;
    jpeg_read_scanlines(&cinfo, &row, 1);
  }
  jpeg_finish_decompress(&cinfo);
  jpeg_destroy_decompress(&cinfo);
  return true;
}

inline Image decode_jpeg(std::span<const std::uint8_t> bytes, const std::string& name) {
  JpegPixels px;
  char message[JMSG_LENGTH_MAX] = {};
  if (!jpeg_decode_into(bytes, px, message))
    throw DecodeError("decode '" + name + "': " + message);
  return image_from_interleaved(px.data.data(), px.height, px.width, px.components, px.components);
}

}  // namespace detail

// Decodes by content signature, not by file extension.
inline Image decode_image_bytes(std::span<const std::uint8_t> bytes, const std::string& name) {
  if (bytes.size() >= 2 && bytes[0] == 'P' && (bytes[1] == '6' || bytes[1] == '5'))
    return detail::decode_pnm(bytes, name);
  if (bytes.size() >= 8 && png_sig_cmp(bytes.data(), 0, 8) == 0) return detail::decode_png(bytes, name);
  if (bytes.size() >= 3 && bytes[0] == 0xFF && bytes[1] == 0xD8 && bytes[2] == 0xFF)
    return detail::decode_jpeg(bytes, name);
  throw DecodeError("decode '" + name + "': unsupported or unrecognized image format");
}

inline Image decode_image(const fs::path& path) {
  std::vector<std::uint8_t> bytes;
  try {
    bytes = read_file_bytes(path);
  } catch (const IoError& e) {
    throw DecodeError(std::string("decode: ") + e.what());
  }
  return decode_image_bytes(bytes, path.string());
}

inline bool has_image_extension(const fs::path& p) {
  std::string ext = p.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  return ext == ".png" || ext == ".jpg" || ext == ".jpeg" || ext == ".ppm" || ext == ".pgm" ||
         ext == ".pnm";
}

// 8-bit interleaved RGB, rounded and clamped. Unit-domain images are scaled by 255.
inline std::vector<std::uint8_t> to_rgb8(const Image& img) {
  if (img.channels() != 3) throw ShapeError("encode: expected a 3-channel image");
  const double k = img.domain == PixelDomain::unit ? 255.0 : 1.0;
  std::vector<std::uint8_t> out(img.pixels.size());
  for (std::size_t i = 0; i < out.size(); ++i)
    out[i] = static_cast<std::uint8_t>(std::clamp(std::round(img.pixels[i] * k), 0.0, 255.0));
  return out;
}

inline std::vector<std::uint8_t> encode_ppm(const Image& img) {
  const std::string header =
      "P6\n" + std::to_string(img.width()) + " " + std::to_string(img.height()) + "\n255\n";
  std::vector<std::uint8_t> out(header.begin(), header.end());
  const auto px = to_rgb8(img);
  out.insert(out.end(), px.begin(), px.end());
  return out;
}

inline std::vector<std::uint8_t> encode_png(const Image& img) {
  const auto px = to_rgb8(img);
  png_image image;
  std::memset(&image, 0, sizeof image);
  image.version = PNG_IMAGE_VERSION;
  image.width = static_cast<png_uint_32>(img.width());
  image.height = static_cast<png_uint_32>(img.height());
  image.format = PNG_FORMAT_RGB;
  png_alloc_size_t size = 0;
  if (!png_image_write_to_memory(&image, nullptr, &size, 0, px.data(), 0, nullptr))
    throw IoError(std::string("encode png: ") + image.message);
  std::vector<std::uint8_t> out(size);
  if (!png_image_write_to_memory(&image, out.data(), &size, 0, px.data(), 0, nullptr))
    throw IoError(std::string("encode png: ") + image.message);
  out.resize(size);
  return out;
}

inline void write_file_bytes(const fs::path& path, std::span<const std::uint8_t> bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write '" + path.string() + "'");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed for '" + path.string() + "'");
}

// Format chosen by extension: .ppm or .png.
inline void write_image(const fs::path& path, const Image& img) {
  const std::string ext = path.extension().string();
  if (ext == ".ppm")
    write_file_bytes(path, encode_ppm(img));
  else if (ext == ".png")
    write_file_bytes(path, encode_png(img));
  else
    throw ValidationError("write_image: unsupported extension '" + ext + "' (use .png or .ppm)");
}

}  // namespace mfd
