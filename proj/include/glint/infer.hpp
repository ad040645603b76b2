// Full-image inference: trace G-buffers, run the generator in row bands.
#pragma once

#include <algorithm>
#include <span>
#include <vector>

#include "glint/image.hpp"
#include "glint/net/batch.hpp"
#include "glint/net/generator.hpp"
#include "glint/parallel.hpp"
#include "glint/scene.hpp"
#include "glint/tracer.hpp"

namespace glint {

/// Scene instance plus the camera actually used for it.
struct SceneSetup {
  SceneInstance instance;
  std::vector<double> scene;
  CameraVector camera{};
};

inline CameraVector camera_vector(const Camera& c) {
  return {c.position.x, c.position.y, c.position.z, c.lookat.x, c.lookat.y, c.lookat.z};
}

inline SceneSetup make_setup(const SceneSpace& space, const std::vector<double>& scene, const CameraVector& camera) {
  SceneSetup s{instantiate(space, SceneVector(scene), camera), scene, {}};
  s.camera = camera_vector(s.instance.camera);
  return s;
}

/// Rows [y0, y0 + rows) of a full-image G-buffer.
inline GBufferPatch slice_rows(const GBufferPatch& g, int y0, int rows) {
  const int w = g.window.width;
  GBufferPatch out(PatchWindow{g.window.image_res, g.window.x0, g.window.y0 + y0, w, rows});
  const std::size_t begin = static_cast<std::size_t>(y0) * w, n = static_cast<std::size_t>(rows) * w;
  auto copy3 = [&](const std::vector<float>& src, std::vector<float>& dst) {
    std::copy(src.begin() + 3 * begin, src.begin() + 3 * (begin + n), dst.begin());
  };
  copy3(g.position, out.position);
  copy3(g.normal, out.normal);
  copy3(g.albedo, out.albedo);
  copy3(g.wo, out.wo);
  copy3(g.emission, out.emission);
  std::copy(g.roughness.begin() + begin, g.roughness.begin() + begin + n, out.roughness.begin());
  std::copy(g.mask.begin() + begin, g.mask.begin() + begin + n, out.mask.begin());
  return out;
}

/// Network radiance for a G-buffer covering a width x height region.
inline ImageRGB predict(const PixelGenerator<float>& net, const GBufferPatch& g, std::span<const double> scene,
                        const CameraVector& camera, int band_rows = 32) {
  if (static_cast<int>(scene.size()) != net.shape().scene_dim)
    throw DimensionError("scene vector has " + std::to_string(scene.size()) + " entries, the network expects " +
                         std::to_string(net.shape().scene_dim));
  const int w = g.window.width, h = g.window.height;
  ImageRGB img(w, h);
  const int bands = (h + band_rows - 1) / band_rows;
  parallel_for(static_cast<std::size_t>(bands), [&](std::size_t b) {
    const int y0 = static_cast<int>(b) * band_rows;
    const int rows = std::min(band_rows, h - y0);
    const GBufferPatch part = slice_rows(g, y0, rows);
    const PatchInputs in{&part, scene, camera};
    const auto out = net.forward(assemble_batch<float>(in));
    std::copy(out.data(), out.data() + out.size(), img.data.begin() + 3 * static_cast<std::size_t>(y0) * w);
  });
  return img;
}

inline ImageRGB predict_image(const PixelGenerator<float>& net, const SceneSetup& setup, int resolution) {
  const auto g = render_image(setup.instance, resolution, 0, 0, false).gbuffer;
  return predict(net, g, setup.scene, setup.camera);
}

}  // namespace glint
