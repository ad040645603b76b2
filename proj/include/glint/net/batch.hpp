// Per-pixel network inputs assembled from G-buffers.
#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "glint/scene.hpp"
#include "glint/tracer.hpp"

namespace glint {

/// normal 3 + albedo 3 + roughness 1 + outgoing direction 3.
inline constexpr int kSurfaceFeatures = 10;

/// Conditioning width for a space of `scene_dim` parameters: surface
/// features, the scene vector, and the 6 camera floats.
constexpr int conditioning_dim(int scene_dim) { return kSurfaceFeatures + scene_dim + 6; }

/// Columns are pixels. Position goes alone through the first layer; the
/// conditioning block joins at the skip layers; emission bypasses the network.
template <typename Scalar>
struct PixelBatch {
  using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

  Matrix position;      // 3 x N
  Matrix conditioning;  // C x N
  Matrix emission;      // 3 x N
  Eigen::Array<Scalar, 1, Eigen::Dynamic> mask;  // 1 on hit pixels

  Eigen::Index size() const { return position.cols(); }
};

/// Pixels of one patch plus the global state that conditions them.
struct PatchInputs {
  const GBufferPatch* gbuffer = nullptr;
  std::span<const double> scene_vector;
  CameraVector camera{};
};

template <typename Scalar>
PixelBatch<Scalar> assemble_batch(std::span<const PatchInputs> patches) {
  Eigen::Index total = 0;
  const int scene_dim = patches.empty() ? 0 : static_cast<int>(patches.front().scene_vector.size());
  for (const auto& p : patches) {
    total += p.gbuffer->window.pixel_count();
    if (static_cast<int>(p.scene_vector.size()) != scene_dim)
      throw DimensionError("patches in one batch must share the scene dimension");
  }
  PixelBatch<Scalar> b;
  const int cdim = conditioning_dim(scene_dim);
  b.position.resize(3, total);
  b.conditioning.resize(cdim, total);
  b.emission.resize(3, total);
  b.mask.resize(total);
  Eigen::Index col = 0;
  for (const auto& p : patches) {
    const GBufferPatch& g = *p.gbuffer;
    const auto n = static_cast<std::size_t>(g.window.pixel_count());
    for (std::size_t i = 0; i < n; ++i, ++col) {
      for (int c = 0; c < 3; ++c) {
        b.position(c, col) = static_cast<Scalar>(g.position[3 * i + c]);
        b.emission(c, col) = static_cast<Scalar>(g.emission[3 * i + c]);
        b.conditioning(c, col) = static_cast<Scalar>(g.normal[3 * i + c]);
        b.conditioning(3 + c, col) = static_cast<Scalar>(g.albedo[3 * i + c]);
        b.conditioning(7 + c, col) = static_cast<Scalar>(g.wo[3 * i + c]);
      }
      b.conditioning(6, col) = static_cast<Scalar>(g.roughness[i]);
      for (int d = 0; d < scene_dim; ++d)
        b.conditioning(kSurfaceFeatures + d, col) = static_cast<Scalar>(p.scene_vector[d]);
      for (int d = 0; d < 6; ++d)
        b.conditioning(kSurfaceFeatures + scene_dim + d, col) = static_cast<Scalar>(p.camera[d]);
      b.mask(col) = g.mask[i] ? Scalar(1) : Scalar(0);
    }
  }
  return b;
}

template <typename Scalar>
PixelBatch<Scalar> assemble_batch(const PatchInputs& single) {
  return assemble_batch<Scalar>(std::span<const PatchInputs>(&single, 1));
}

/// Target radiance of a set of patches as a 3 x N matrix in batch column order.
template <typename Scalar>
Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> assemble_targets(
    std::span<const RadiancePatch* const> patches) {
  Eigen::Index total = 0;
  for (const auto* p : patches) total += p->window.pixel_count();
  Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> t(3, total);
  Eigen::Index col = 0;
  for (const auto* p : patches)
    for (std::size_t i = 0; i < static_cast<std::size_t>(p->window.pixel_count()); ++i, ++col)
      for (int c = 0; c < 3; ++c) t(c, col) = static_cast<Scalar>(p->rgb[3 * i + c]);
  return t;
}

}  // namespace glint
