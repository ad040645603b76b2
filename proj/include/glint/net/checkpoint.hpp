// Binary checkpoint of a float generator and its Adam moments.
//
//   "GLNT" | version u32 | scene dim u32 | hidden width u32 | layer count u32
//   | weights f32... | m f32... | v f32... | t u64      (all little-endian)
#pragma once

#include <bit>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "glint/core.hpp"
#include "glint/image.hpp"
#include "glint/net/adam.hpp"
#include "glint/net/generator.hpp"

namespace glint {

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  PixelGenerator<float> net;
  AdamState<float> adam;
};

namespace detail {

inline void put_u32_le(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xffu));
}

inline void put_u64_le(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xffu));
}

class ByteReader {
 public:
  explicit ByteReader(const std::string& bytes) : bytes_(bytes) {}

  std::uint64_t take(int n, const char* what) {
    if (pos_ + static_cast<std::size_t>(n) > bytes_.size())
      throw FormatError(std::string("checkpoint truncated while reading ") + what);
    std::uint64_t v = 0;
    for (int i = 0; i < n; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
    pos_ += static_cast<std::size_t>(n);
    return v;
  }
  std::uint32_t u32(const char* what) { return static_cast<std::uint32_t>(take(4, what)); }
  float f32(const char* what) { return std::bit_cast<float>(u32(what)); }
  bool done() const { return pos_ == bytes_.size(); }

 private:
  const std::string& bytes_;
  std::size_t pos_ = 0;
};

}  // namespace detail

inline std::string encode_checkpoint(const PixelGenerator<float>& net, const AdamState<float>& adam) {
  const auto params = net.parameters();
  if (adam.size() != params.size()) throw DimensionError("checkpoint: Adam moments do not match the network");
  std::string out = "GLNT";
  detail::put_u32_le(out, kCheckpointVersion);
  detail::put_u32_le(out, static_cast<std::uint32_t>(net.shape().scene_dim));
  detail::put_u32_le(out, static_cast<std::uint32_t>(net.shape().hidden_width));
  detail::put_u32_le(out, static_cast<std::uint32_t>(net.shape().hidden_layers));
  out.reserve(out.size() + params.size() * 12 + 8);
  for (float w : params) detail::put_f32_le(out, w);
  for (float m : adam.m) detail::put_f32_le(out, m);
  for (float v : adam.v) detail::put_f32_le(out, v);
  detail::put_u64_le(out, adam.t);
  return out;
}

/// Decodes a checkpoint; `expected_dim`, when set, must equal the stored
/// scene dimension.
inline Checkpoint decode_checkpoint(const std::string& bytes, std::optional<int> expected_dim = std::nullopt,
                                    AdamConfig adam_config = {}) {
  if (bytes.size() < 4 || bytes.compare(0, 4, "GLNT") != 0) throw FormatError("not a checkpoint (bad magic)");
  detail::ByteReader in(bytes);
  in.u32("magic");
  const std::uint32_t version = in.u32("version");
  if (version != kCheckpointVersion) throw FormatError("unsupported checkpoint version " + std::to_string(version));
  GeneratorShape shape;
  shape.scene_dim = static_cast<int>(in.u32("scene dim"));
  shape.hidden_width = static_cast<int>(in.u32("hidden width"));
  shape.hidden_layers = static_cast<int>(in.u32("layer count"));
  if (expected_dim && *expected_dim != shape.scene_dim)
    throw DimensionError("checkpoint was trained for " + std::to_string(shape.scene_dim) +
                         " scene parameters, scene space has " + std::to_string(*expected_dim));
  if (shape.hidden_width < 1 || shape.hidden_width > 65536 || shape.hidden_layers < 2 || shape.hidden_layers > 1024 ||
      shape.scene_dim > 65536)
    throw FormatError("checkpoint header has an implausible shape");
  const std::size_t n = PixelGenerator<float>::parameter_count(shape);
  std::vector<float> params(n);
  for (auto& w : params) w = in.f32("weights");
  AdamState<float> adam(n, adam_config);
  for (auto& m : adam.m) m = in.f32("first moments");
  for (auto& v : adam.v) v = in.f32("second moments");
  adam.t = in.take(8, "timestep");
  if (!in.done()) throw FormatError("checkpoint has trailing bytes");
  return {PixelGenerator<float>::from_parameters(shape, std::move(params)), std::move(adam)};
}

inline void save_checkpoint(const std::string& path, const PixelGenerator<float>& net, const AdamState<float>& adam) {
  detail::write_file(path, encode_checkpoint(net, adam));
}

inline Checkpoint load_checkpoint(const std::string& path, std::optional<int> expected_dim = std::nullopt,
                                  AdamConfig adam_config = {}) {
  return decode_checkpoint(detail::read_file(path), expected_dim, adam_config);
}

}  // namespace glint
