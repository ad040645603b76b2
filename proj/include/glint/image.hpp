// Float RGB images and their file formats: PFM (HDR), PPM and PNG (8-bit,
// gamma 2.2).
#pragma once

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <zlib.h>

#include "glint/core.hpp"

namespace glint {

/// Row-major RGB float image, row 0 at the top.
struct ImageRGB {
  int width = 0;
  int height = 0;
  std::vector<float> data;  // (y * width + x) * 3 + c

  ImageRGB() = default;
  ImageRGB(int w, int h) : width(w), height(h), data(static_cast<std::size_t>(w) * h * 3, 0.0f) {}

  float& at(int x, int y, int c) { return data[(static_cast<std::size_t>(y) * width + x) * 3 + c]; }
  float at(int x, int y, int c) const {
    return data[(static_cast<std::size_t>(y) * width + x) * 3 + c];
  }

  friend bool operator==(const ImageRGB&, const ImageRGB&) = default;
};

namespace detail {

inline void put_f32_le(std::string& out, float f) {
  auto bits = std::bit_cast<std::uint32_t>(f);
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((bits >> (8 * i)) & 0xffu));
}

inline float get_f32_le(const unsigned char* p) {
  std::uint32_t bits = 0;
  for (int i = 0; i < 4; ++i) bits |= static_cast<std::uint32_t>(p[i]) << (8 * i);
  return std::bit_cast<float>(bits);
}

inline std::uint8_t to_srgb8(float linear, double exposure) {
  const double v = std::clamp(static_cast<double>(linear) * exposure, 0.0, 1.0);
  return static_cast<std::uint8_t>(std::lround(std::pow(v, 1.0 / 2.2) * 255.0));
}

inline void put_u32_be(std::string& out, std::uint32_t v) {
  for (int i = 3; i >= 0; --i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xffu));
}

inline void png_chunk(std::string& out, const char type[4], const std::string& payload) {
  put_u32_be(out, static_cast<std::uint32_t>(payload.size()));
  std::string body(type, 4);
  body += payload;
  out += body;
  const auto crc = crc32(0L, reinterpret_cast<const Bytef*>(body.data()), static_cast<uInt>(body.size()));
  put_u32_be(out, static_cast<std::uint32_t>(crc));
}

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_file(const std::string& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot write '" + path + "'");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

}  // namespace detail

/// PFM bytes: "PF", little-endian (scale -1), scanlines bottom-up.
inline std::string encode_pfm(const ImageRGB& img) {
  std::string out = "PF\n" + std::to_string(img.width) + " " + std::to_string(img.height) + "\n-1.0\n";
  out.reserve(out.size() + img.data.size() * 4);
  for (int y = img.height - 1; y >= 0; --y)
    for (int x = 0; x < img.width; ++x)
      for (int c = 0; c < 3; ++c) detail::put_f32_le(out, img.at(x, y, c));
  return out;
}

inline ImageRGB decode_pfm(const std::string& bytes) {
  std::istringstream header(bytes);
  std::string magic;
  int w = 0, h = 0;
  double scale = 0;
  header >> magic >> w >> h >> scale;
  if (!header || magic != "PF" || w <= 0 || h <= 0) throw FormatError("not an RGB PFM file");
  if (scale > 0) throw FormatError("big-endian PFM is not supported");
  const auto offset = static_cast<std::size_t>(header.tellg()) + 1;  // single whitespace byte
  const std::size_t need = static_cast<std::size_t>(w) * h * 12;
  if (bytes.size() < offset + need) throw FormatError("truncated PFM file");
  ImageRGB img(w, h);
  const auto* p = reinterpret_cast<const unsigned char*>(bytes.data()) + offset;
  for (int y = h - 1; y >= 0; --y)
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < 3; ++c, p += 4) img.at(x, y, c) = detail::get_f32_le(p);
  return img;
}

inline void write_pfm(const std::string& path, const ImageRGB& img) { detail::write_file(path, encode_pfm(img)); }
inline ImageRGB read_pfm(const std::string& path) { return decode_pfm(detail::read_file(path)); }

inline std::string encode_ppm(const ImageRGB& img, double exposure = 1.0) {
  std::string out = "P6\n" + std::to_string(img.width) + " " + std::to_string(img.height) + "\n255\n";
  for (float v : img.data) out.push_back(static_cast<char>(detail::to_srgb8(v, exposure)));
  return out;
}

inline void write_ppm(const std::string& path, const ImageRGB& img, double exposure = 1.0) {
  detail::write_file(path, encode_ppm(img, exposure));
}

/// 8-bit RGB PNG; radiance is scaled by `exposure`, clamped to [0,1] and
/// gamma-encoded with 1/2.2.
inline std::string encode_png(const ImageRGB& img, double exposure = 1.0) {
  std::string raw;
  raw.reserve(static_cast<std::size_t>(img.height) * (img.width * 3 + 1));
  for (int y = 0; y < img.height; ++y) {
    raw.push_back('\0');  // filter: none
    for (int x = 0; x < img.width; ++x)
      for (int c = 0; c < 3; ++c) raw.push_back(static_cast<char>(detail::to_srgb8(img.at(x, y, c), exposure)));
  }
  uLongf packed_size = compressBound(static_cast<uLong>(raw.size()));
  std::string packed(packed_size, '\0');
  if (compress2(reinterpret_cast<Bytef*>(packed.data()), &packed_size,
                reinterpret_cast<const Bytef*>(raw.data()), static_cast<uLong>(raw.size()), 6) != Z_OK)
    throw FormatError("zlib compression failed");
  packed.resize(packed_size);

  std::string out("\x89PNG\r\n\x1a\n", 8);
  std::string ihdr;
  detail::put_u32_be(ihdr, static_cast<std::uint32_t>(img.width));
  detail::put_u32_be(ihdr, static_cast<std::uint32_t>(img.height));
  ihdr += std::string("\x08\x02\x00\x00\x00", 5);  // 8-bit, truecolor
  detail::png_chunk(out, "IHDR", ihdr);
  detail::png_chunk(out, "IDAT", packed);
  detail::png_chunk(out, "IEND", "");
  return out;
}

/// Decodes the subset of PNG produced by encode_png (used by tests and tools).
inline ImageRGB decode_png_rgb8(const std::string& bytes) {
  if (bytes.size() < 8 || bytes.compare(0, 8, std::string("\x89PNG\r\n\x1a\n", 8)) != 0)
    throw FormatError("not a PNG file");
  auto be32 = [&](std::size_t at) {
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v = (v << 8) | static_cast<unsigned char>(bytes[at + i]);
    return v;
  };
  std::size_t pos = 8;
  int w = 0, h = 0;
  std::string idat;
  while (pos + 12 <= bytes.size()) {
    const std::uint32_t len = be32(pos);
    const std::string type = bytes.substr(pos + 4, 4);
    if (pos + 12 + len > bytes.size()) throw FormatError("truncated PNG chunk");
    if (type == "IHDR") {
      w = static_cast<int>(be32(pos + 8));
      h = static_cast<int>(be32(pos + 12));
    } else if (type == "IDAT") {
      idat += bytes.substr(pos + 8, len);
    }
    pos += 12 + len;
  }
  std::string raw(static_cast<std::size_t>(h) * (w * 3 + 1), '\0');
  uLongf raw_size = static_cast<uLongf>(raw.size());
  if (uncompress(reinterpret_cast<Bytef*>(raw.data()), &raw_size,
                 reinterpret_cast<const Bytef*>(idat.data()), static_cast<uLong>(idat.size())) != Z_OK)
    throw FormatError("corrupt PNG data");
  ImageRGB img(w, h);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w * 3; ++x)
      img.data[static_cast<std::size_t>(y) * w * 3 + x] =
          static_cast<unsigned char>(raw[static_cast<std::size_t>(y) * (w * 3 + 1) + 1 + x]) / 255.0f;
  return img;
}

}  // namespace glint
