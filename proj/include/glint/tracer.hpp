// CPU path tracer: first-intersection G-buffers and path-traced radiance for
// rectangular windows of a virtual square image.
//
// Integrator: unidirectional path tracing with next event estimation on quad
// emitters, combined with BSDF sampling by the power heuristic. At most
// kMaxDepth surface vertices per path; Russian roulette from vertex
// kRouletteStart on, surviving with the max albedo component.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "glint/core.hpp"
#include "glint/image.hpp"
#include "glint/parallel.hpp"
#include "glint/rng.hpp"
#include "glint/scene.hpp"

namespace glint {

inline constexpr int kMaxDepth = 8;
inline constexpr int kRouletteStart = 3;
inline constexpr int kDefaultPatchSize = 32;

struct Ray {
  Vec3 origin;
  Vec3 dir;  // unit length
};

struct Hit {
  double t = 0;
  Vec3 position;
  Vec3 normal;  // geometric, outward (quads: edge_u x edge_v)
  int primitive = -1;
};

/// Scene in a form ready for ray queries; built once per SceneInstance.
class SceneGeometry {
 public:
  explicit SceneGeometry(const SceneInstance& scene) : scene_(scene) {
    shapes_.reserve(scene.primitives.size());
    for (std::size_t i = 0; i < scene.primitives.size(); ++i) {
      const Primitive& p = scene.primitives[i];
      Shape s;
      s.type = p.shape;
      s.center = p.translation;
      const double theta = p.rotation_y_deg * kPi / 180.0;
      s.cos_t = std::cos(theta);
      s.sin_t = std::sin(theta);
      s.radius = p.radius;
      s.half = p.half_extent;
      if (p.shape == ShapeType::Quad) {
        s.u = rotate(p.edge_u, s.cos_t, s.sin_t);
        s.v = rotate(p.edge_v, s.cos_t, s.sin_t);
        const Vec3 nn = cross(s.u, s.v);
        s.area = length(nn);
        s.normal = nn / s.area;
        s.inv_uu = 1.0 / dot(s.u, s.u);
        s.inv_vv = 1.0 / dot(s.v, s.v);
      }
      shapes_.push_back(s);
      if (p.material.type == MaterialType::Emitter && p.shape == ShapeType::Quad)
        lights_.push_back(static_cast<int>(i));
    }
  }

  const SceneInstance& scene() const { return scene_; }
  const Material& material(int prim) const { return scene_.primitives[prim].material; }
  const std::vector<int>& lights() const { return lights_; }

  std::optional<Hit> intersect(const Ray& ray, double t_max = std::numeric_limits<double>::infinity()) const {
    Hit best;
    best.t = t_max;
    for (std::size_t i = 0; i < shapes_.size(); ++i) {
      if (intersect_shape(shapes_[i], ray, best)) best.primitive = static_cast<int>(i);
    }
    if (best.primitive < 0) return std::nullopt;
    best.position = ray.origin + ray.dir * best.t;
    return best;
  }

  bool occluded(const Vec3& from, const Vec3& to) const {
    const Vec3 d = to - from;
    const double dist = length(d);
    Hit h;
    h.t = dist * (1.0 - 1e-6);
    const Ray r{from, d / dist};
    for (const auto& s : shapes_)
      if (intersect_shape(s, r, h)) return true;
    return false;
  }

  /// Uniform point on quad light `prim`; returns the point.
  Vec3 sample_quad(int prim, double a, double b) const {
    const Shape& s = shapes_[prim];
    return s.center + s.u * (a - 0.5) + s.v * (b - 0.5);
  }
  double quad_area(int prim) const { return shapes_[prim].area; }
  Vec3 quad_normal(int prim) const { return shapes_[prim].normal; }
  bool is_light(int prim) const {
    return std::find(lights_.begin(), lights_.end(), prim) != lights_.end();
  }

 private:
  struct Shape {
    ShapeType type;
    Vec3 center;
    double cos_t = 1, sin_t = 0;
    double radius = 0;
    Vec3 half;
    Vec3 u, v, normal;
    double area = 0, inv_uu = 0, inv_vv = 0;
  };

  static Vec3 rotate(const Vec3& p, double c, double s) { return {c * p.x + s * p.z, p.y, -s * p.x + c * p.z}; }
  static Vec3 unrotate(const Vec3& p, double c, double s) { return {c * p.x - s * p.z, p.y, s * p.x + c * p.z}; }

  static constexpr double kTMin = 1e-7;

  // Updates `h` (t and normal) when a closer hit exists.
  static bool intersect_shape(const Shape& s, const Ray& r, Hit& h) {
    switch (s.type) {
      case ShapeType::Sphere: {
        const Vec3 oc = r.origin - s.center;
        const double b = dot(oc, r.dir);
        const double c = dot(oc, oc) - s.radius * s.radius;
        const double disc = b * b - c;
        if (disc < 0) return false;
        const double sq = std::sqrt(disc);
        double t = -b - sq;
        if (t <= kTMin) t = -b + sq;
        if (t <= kTMin || t >= h.t) return false;
        h.t = t;
        h.normal = (oc + r.dir * t) / s.radius;
        return true;
      }
      case ShapeType::Quad: {
        const double denom = dot(s.normal, r.dir);
        if (std::abs(denom) < 1e-12) return false;
        const double t = dot(s.normal, s.center - r.origin) / denom;
        if (t <= kTMin || t >= h.t) return false;
        const Vec3 d = r.origin + r.dir * t - s.center;
        if (std::abs(dot(d, s.u) * s.inv_uu) > 0.5 || std::abs(dot(d, s.v) * s.inv_vv) > 0.5) return false;
        h.t = t;
        h.normal = s.normal;
        return true;
      }
      case ShapeType::Box: {
        const Vec3 o = unrotate(r.origin - s.center, s.cos_t, s.sin_t);
        const Vec3 d = unrotate(r.dir, s.cos_t, s.sin_t);
        double t0 = -std::numeric_limits<double>::infinity();
        double t1 = std::numeric_limits<double>::infinity();
        int axis0 = 0, axis1 = 0;
        for (int a = 0; a < 3; ++a) {
          if (std::abs(d[a]) < 1e-15) {
            if (std::abs(o[a]) > s.half[a]) return false;
            continue;
          }
          double ta = (-s.half[a] - o[a]) / d[a];
          double tb = (s.half[a] - o[a]) / d[a];
          if (ta > tb) std::swap(ta, tb);
          if (ta > t0) {
            t0 = ta;
            axis0 = a;
          }
          if (tb < t1) {
            t1 = tb;
            axis1 = a;
          }
          if (t0 > t1) return false;
        }
        double t = t0;
        int axis = axis0;
        if (t <= kTMin) {
          t = t1;
          axis = axis1;
        }
        if (t <= kTMin || t >= h.t) return false;
        const Vec3 lp = o + d * t;
        Vec3 ln{};
        ln[axis] = lp[axis] > 0 ? 1.0 : -1.0;
        h.t = t;
        h.normal = rotate(ln, s.cos_t, s.sin_t);
        return true;
      }
    }
    return false;
  }

  SceneInstance scene_;
  std::vector<Shape> shapes_;
  std::vector<int> lights_;
};

// ---------------------------------------------------------------------------
// BSDFs
// ---------------------------------------------------------------------------

/// Normalized Phong exponent for a roughness in (0, 1].
inline double phong_exponent(double roughness) { return 2.0 / (roughness * roughness) - 2.0; }

namespace detail {

struct BsdfSample {
  Vec3 wi;
  Vec3 weight;  // f * cos / pdf
  double pdf = 0;
  bool delta = false;
};

/// BSDF value (without the cosine). `n` faces the side `wo` is on.
inline Vec3 bsdf_eval(const Material& m, const Vec3& wo, const Vec3& wi, const Vec3& n) {
  if (dot(wi, n) <= 0) return {};
  switch (m.type) {
    case MaterialType::Diffuse: return m.albedo * kInvPi;
    case MaterialType::Glossy: {
      const double e = phong_exponent(m.roughness);
      const double ca = dot(wi, reflect(wo, n));
      if (ca <= 0) return {};
      return m.albedo * ((e + 2.0) / (2.0 * kPi) * std::pow(ca, e));
    }
    default: return {};
  }
}

inline double bsdf_pdf(const Material& m, const Vec3& wo, const Vec3& wi, const Vec3& n) {
  switch (m.type) {
    case MaterialType::Diffuse: return std::max(0.0, dot(wi, n)) * kInvPi;
    case MaterialType::Glossy: {
      const double e = phong_exponent(m.roughness);
      const double ca = dot(wi, reflect(wo, n));
      if (ca <= 0) return 0;
      return (e + 1.0) / (2.0 * kPi) * std::pow(ca, e);
    }
    default: return 0;
  }
}

inline Vec3 around(const Vec3& axis, double cos_theta, double phi) {
  Vec3 t, b;
  orthonormal_basis(axis, t, b);
  const double sin_theta = std::sqrt(std::max(0.0, 1.0 - cos_theta * cos_theta));
  return t * (sin_theta * std::cos(phi)) + b * (sin_theta * std::sin(phi)) + axis * cos_theta;
}

inline std::optional<BsdfSample> bsdf_sample(const Material& m, const Vec3& wo, const Vec3& n, double u1,
                                             double u2) {
  BsdfSample s;
  switch (m.type) {
    case MaterialType::Diffuse: {
      s.wi = around(n, std::sqrt(1.0 - u1), 2.0 * kPi * u2);
      const double c = dot(s.wi, n);
      if (c <= 0) return std::nullopt;
      s.pdf = c * kInvPi;
      s.weight = m.albedo;
      return s;
    }
    case MaterialType::Glossy: {
      const double e = phong_exponent(m.roughness);
      const Vec3 r = reflect(wo, n);
      const double ca = std::pow(1.0 - u1, 1.0 / (e + 1.0));
      s.wi = around(r, ca, 2.0 * kPi * u2);
      const double c = dot(s.wi, n);
      if (c <= 0) return std::nullopt;
      s.pdf = (e + 1.0) / (2.0 * kPi) * std::pow(ca, e);
      s.weight = m.albedo * ((e + 2.0) / (e + 1.0) * c);
      return s;
    }
    case MaterialType::Mirror: {
      s.wi = reflect(wo, n);
      s.weight = m.albedo;
      s.pdf = 1.0;
      s.delta = true;
      return s;
    }
    case MaterialType::Emitter: return std::nullopt;
  }
  return std::nullopt;
}

inline double power_heuristic(double a, double b) {
  const double a2 = a * a;
  const double b2 = b * b;
  return a2 + b2 > 0 ? a2 / (a2 + b2) : 0.0;
}

inline Vec3 offset_origin(const Vec3& p, const Vec3& n, const Vec3& dir) {
  return p + n * (dot(dir, n) > 0 ? 1e-6 : -1e-6);
}

}  // namespace detail

/// Incoming radiance along `ray`; `first` optionally supplies its first hit.
inline Vec3 trace_path(const SceneGeometry& g, Ray ray, Pcg32& rng, std::optional<Hit> first = std::nullopt,
                       int max_depth = kMaxDepth) {
  const SceneInstance& scene = g.scene();
  const auto& lights = g.lights();
  Vec3 L{0.0};
  Vec3 beta{1.0};
  bool prev_delta = true;
  double prev_pdf = 0;
  Vec3 prev_p;
  for (int depth = 1;; ++depth) {
    std::optional<Hit> hit = (depth == 1 && first) ? first : g.intersect(ray);
    if (!hit) {
      L += beta * scene.environment;
      break;
    }
    const Material& m = g.material(hit->primitive);
    const Vec3 wo = -ray.dir;
    const bool front = dot(hit->normal, wo) > 0;
    const Vec3 n = front ? hit->normal : -hit->normal;

    if (m.type == MaterialType::Emitter) {
      if (front) {
        double w = 1.0;
        if (!prev_delta && g.is_light(hit->primitive)) {
          const double cos_l = dot(hit->normal, wo);
          const double pdf_light =
              hit->t * hit->t / (cos_l * g.quad_area(hit->primitive) * static_cast<double>(lights.size()));
          w = detail::power_heuristic(prev_pdf, pdf_light);
        }
        L += beta * m.emission * w;
      }
      break;
    }
    L += beta * m.emission;
    if (depth >= max_depth) break;

    if (m.type != MaterialType::Mirror && !lights.empty()) {
      const auto pick = std::min(static_cast<std::size_t>(rng.uniform() * static_cast<double>(lights.size())),
                                 lights.size() - 1);
      const int light = lights[pick];
      const double a = rng.uniform();
      const double b = rng.uniform();
      const Vec3 q = g.sample_quad(light, a, b);
      Vec3 wi = q - hit->position;
      const double dist2 = dot(wi, wi);
      const double dist = std::sqrt(dist2);
      wi = wi / dist;
      const double cos_l = -dot(g.quad_normal(light), wi);
      const double cos_i = dot(wi, n);
      if (cos_l > 0 && cos_i > 0) {
        const Vec3 f = detail::bsdf_eval(m, wo, wi, n);
        if (max_component(f) > 0) {
          const Vec3 origin = detail::offset_origin(hit->position, n, wi);
          if (!g.occluded(origin, q)) {
            const double pdf_light = dist2 / (cos_l * g.quad_area(light) * static_cast<double>(lights.size()));
            const double w = detail::power_heuristic(pdf_light, detail::bsdf_pdf(m, wo, wi, n));
            L += beta * f * g.material(light).emission * (cos_i * w / pdf_light);
          }
        }
      }
    }

    if (depth >= kRouletteStart) {
      const double survive = std::min(1.0, max_component(m.albedo));
      if (survive <= 0.0 || rng.uniform() >= survive) break;
      beta *= 1.0 / survive;
    }

    const double u1 = rng.uniform();
    const double u2 = rng.uniform();
    const auto s = detail::bsdf_sample(m, wo, n, u1, u2);
    if (!s) break;
    beta *= s->weight;
    prev_delta = s->delta;
    prev_pdf = s->pdf;
    prev_p = hit->position;
    ray = {detail::offset_origin(hit->position, n, s->wi), s->wi};
  }
  return L;
}

// ---------------------------------------------------------------------------
// Windows, G-buffers and radiance patches
// ---------------------------------------------------------------------------

/// A rectangle of pixels inside a virtual square image of side `image_res`.
struct PatchWindow {
  int image_res = 128;
  int x0 = 0;
  int y0 = 0;
  int width = kDefaultPatchSize;
  int height = kDefaultPatchSize;

  static PatchWindow square(int image_res, int x0, int y0, int size = kDefaultPatchSize) {
    return {image_res, x0, y0, size, size};
  }
  int pixel_count() const { return width * height; }
  void validate() const {
    if (image_res < 1 || width < 1 || height < 1 || x0 < 0 || y0 < 0 || x0 + width > image_res ||
        y0 + height > image_res)
      throw RangeError("patch window (" + std::to_string(x0) + "," + std::to_string(y0) + ") " +
                       std::to_string(width) + "x" + std::to_string(height) + " does not fit a " +
                       std::to_string(image_res) + "^2 image");
  }
  friend bool operator==(const PatchWindow&, const PatchWindow&) = default;
};

/// Primary ray through the center of pixel (px, py) of an R x R image.
inline Ray camera_ray(const Camera& cam, int image_res, double px, double py) {
  const Vec3 forward = normalize(cam.lookat - cam.position);
  Vec3 up_hint{0, 1, 0};
  if (length(cross(forward, up_hint)) < 1e-6) up_hint = {0, 0, -1};
  const Vec3 right = normalize(cross(forward, up_hint));
  const Vec3 up = cross(right, forward);
  const double scale = std::tan(cam.fov_deg * kPi / 360.0);
  const double sx = (2.0 * (px + 0.5) / image_res - 1.0) * scale;
  const double sy = (1.0 - 2.0 * (py + 0.5) / image_res) * scale;
  return {cam.position, normalize(forward + right * sx + up * sy)};
}

/// Per-pixel first-intersection attributes, pixels row-major.
struct GBufferPatch {
  PatchWindow window;
  std::vector<float> position;   // 3 per pixel, world units
  std::vector<float> normal;     // 3, unit, facing the camera
  std::vector<float> albedo;     // 3
  std::vector<float> roughness;  // 1
  std::vector<float> wo;         // 3, unit, toward the camera
  std::vector<float> emission;   // 3
  std::vector<std::uint8_t> mask;

  explicit GBufferPatch(const PatchWindow& w = {}) : window(w) {
    const auto n = static_cast<std::size_t>(w.pixel_count());
    position.assign(3 * n, 0.f);
    normal.assign(3 * n, 0.f);
    albedo.assign(3 * n, 0.f);
    roughness.assign(n, 0.f);
    wo.assign(3 * n, 0.f);
    emission.assign(3 * n, 0.f);
    mask.assign(n, 0);
  }
  friend bool operator==(const GBufferPatch&, const GBufferPatch&) = default;
};

struct RadiancePatch {
  PatchWindow window;
  int spp = 0;
  std::uint64_t seed = 0;
  std::vector<float> rgb;  // 3 per pixel

  friend bool operator==(const RadiancePatch&, const RadiancePatch&) = default;
};

namespace detail {

inline void store3(std::vector<float>& dst, std::size_t i, const Vec3& v) {
  dst[3 * i] = static_cast<float>(v.x);
  dst[3 * i + 1] = static_cast<float>(v.y);
  dst[3 * i + 2] = static_cast<float>(v.z);
}

inline double gbuffer_roughness(const Material& m) {
  switch (m.type) {
    case MaterialType::Glossy: return m.roughness;
    case MaterialType::Mirror: return 0.0;
    default: return 1.0;
  }
}

}  // namespace detail

inline GBufferPatch gbuffer_patch(const SceneGeometry& g, const PatchWindow& window) {
  window.validate();
  GBufferPatch out(window);
  const Camera& cam = g.scene().camera;
  for (int y = 0; y < window.height; ++y) {
    for (int x = 0; x < window.width; ++x) {
      const auto i = static_cast<std::size_t>(y * window.width + x);
      const Ray ray = camera_ray(cam, window.image_res, window.x0 + x, window.y0 + y);
      const auto hit = g.intersect(ray);
      if (!hit) continue;
      const Material& m = g.material(hit->primitive);
      const bool front = dot(hit->normal, -ray.dir) > 0;
      const Vec3 n = front ? hit->normal : -hit->normal;
      out.mask[i] = 1;
      detail::store3(out.position, i, hit->position);
      detail::store3(out.normal, i, n);
      detail::store3(out.albedo, i, m.albedo);
      out.roughness[i] = static_cast<float>(detail::gbuffer_roughness(m));
      detail::store3(out.wo, i, normalize(cam.position - hit->position));
      const Vec3 e = m.type == MaterialType::Emitter ? (front ? m.emission : Vec3{}) : m.emission;
      detail::store3(out.emission, i, e);
    }
  }
  return out;
}

inline GBufferPatch gbuffer_patch(const SceneInstance& scene, const PatchWindow& window) {
  return gbuffer_patch(SceneGeometry(scene), window);
}

/// Path-traced radiance of a window. Pixel (x, y) of the virtual image uses
/// streams keyed by (seed, y * R + x, sample), so any tiling gives the same
/// pixels.
inline RadiancePatch trace_patch(const SceneGeometry& g, const PatchWindow& window, int spp, std::uint64_t seed) {
  window.validate();
  if (spp < 1) throw RangeError("spp must be >= 1");
  RadiancePatch out{window, spp, seed, std::vector<float>(3 * static_cast<std::size_t>(window.pixel_count()), 0.f)};
  const Camera& cam = g.scene().camera;
  for (int y = 0; y < window.height; ++y) {
    for (int x = 0; x < window.width; ++x) {
      const int gx = window.x0 + x;
      const int gy = window.y0 + y;
      const auto pixel_index = static_cast<std::uint64_t>(gy) * window.image_res + gx;
      const Ray ray = camera_ray(cam, window.image_res, gx, gy);
      const auto first = g.intersect(ray);
      Vec3 sum{0.0};
      for (int s = 0; s < spp; ++s) {
        if (!first) {
          sum += g.scene().environment;
          continue;
        }
        Pcg32 rng = pixel_stream(seed, pixel_index, static_cast<std::uint64_t>(s));
        sum += trace_path(g, ray, rng, first);
      }
      detail::store3(out.rgb, static_cast<std::size_t>(y * window.width + x), sum / spp);
    }
  }
  return out;
}

inline RadiancePatch trace_patch(const SceneInstance& scene, const PatchWindow& window, int spp, std::uint64_t seed) {
  return trace_patch(SceneGeometry(scene), window, spp, seed);
}

struct RenderResult {
  ImageRGB radiance;
  GBufferPatch gbuffer;  // window covers the whole image
};

/// Tiles the image into kDefaultPatchSize windows (clipped at the border) and
/// renders them in parallel.
inline RenderResult render_image(const SceneInstance& scene, int resolution, int spp, std::uint64_t seed,
                                 bool with_radiance = true) {
  if (resolution < 1) throw RangeError("resolution must be >= 1");
  const SceneGeometry g(scene);
  const int tiles = (resolution + kDefaultPatchSize - 1) / kDefaultPatchSize;
  std::vector<PatchWindow> windows;
  for (int ty = 0; ty < tiles; ++ty)
    for (int tx = 0; tx < tiles; ++tx) {
      const int x0 = tx * kDefaultPatchSize;
      const int y0 = ty * kDefaultPatchSize;
      windows.push_back({resolution, x0, y0, std::min(kDefaultPatchSize, resolution - x0),
                         std::min(kDefaultPatchSize, resolution - y0)});
    }
  std::vector<GBufferPatch> gb(windows.size());
  std::vector<RadiancePatch> rad(windows.size());
  parallel_for(windows.size(), [&](std::size_t i) {
    gb[i] = gbuffer_patch(g, windows[i]);
    if (with_radiance) rad[i] = trace_patch(g, windows[i], spp, seed);
  });
  RenderResult out{ImageRGB(resolution, resolution), GBufferPatch(PatchWindow{resolution, 0, 0, resolution, resolution})};
  for (std::size_t t = 0; t < windows.size(); ++t) {
    const auto& w = windows[t];
    for (int y = 0; y < w.height; ++y)
      for (int x = 0; x < w.width; ++x) {
        const auto src = static_cast<std::size_t>(y * w.width + x);
        const auto dst = static_cast<std::size_t>((w.y0 + y) * resolution + w.x0 + x);
        for (int c = 0; c < 3; ++c) {
          if (with_radiance) out.radiance.data[3 * dst + c] = rad[t].rgb[3 * src + c];
          out.gbuffer.position[3 * dst + c] = gb[t].position[3 * src + c];
          out.gbuffer.normal[3 * dst + c] = gb[t].normal[3 * src + c];
          out.gbuffer.albedo[3 * dst + c] = gb[t].albedo[3 * src + c];
          out.gbuffer.wo[3 * dst + c] = gb[t].wo[3 * src + c];
          out.gbuffer.emission[3 * dst + c] = gb[t].emission[3 * src + c];
        }
        out.gbuffer.roughness[dst] = gb[t].roughness[src];
        out.gbuffer.mask[dst] = gb[t].mask[src];
      }
  }
  return out;
}

inline ImageRGB radiance_image(const RadiancePatch& p) {
  ImageRGB img(p.window.width, p.window.height);
  img.data = p.rgb;
  return img;
}

}  // namespace glint
