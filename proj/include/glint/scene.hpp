// Variable-scene parameter spaces, the normalized scene vector, and the
// built-in base scenes they drive.
#pragma once

#include <algorithm>
#include <array>
#include <cstddef>
#include <fstream>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <json.hpp>

#include "glint/core.hpp"

namespace glint {

// ---------------------------------------------------------------------------
// Concrete scene description
// ---------------------------------------------------------------------------

enum class MaterialType { Diffuse, Glossy, Mirror, Emitter };

/// Surface material. Emitters are one-sided (they radiate along the surface
/// normal), absorb everything and are the only primitives sampled by next
/// event estimation. Any other material may also carry `emission`, which is
/// picked up only when a path hits it.
struct Material {
  MaterialType type = MaterialType::Diffuse;
  Vec3 albedo{0.5};
  double roughness = 1.0;
  Vec3 emission{0.0};

  static Material diffuse(Vec3 albedo) { return {MaterialType::Diffuse, albedo, 1.0, {}}; }
  static Material glossy(Vec3 albedo, double roughness) {
    return {MaterialType::Glossy, albedo, roughness, {}};
  }
  static Material mirror(Vec3 reflectance = Vec3{0.95}) {
    return {MaterialType::Mirror, reflectance, 0.0, {}};
  }
  static Material emitter(Vec3 radiance) { return {MaterialType::Emitter, Vec3{0.0}, 1.0, radiance}; }

  friend bool operator==(const Material&, const Material&) = default;
};

enum class ShapeType { Sphere, Box, Quad };

/// A primitive in its local frame, placed by a rotation about +y followed by
/// a translation. Quads are centered at the local origin and spanned by
/// `edge_u`, `edge_v` (full edge lengths); their normal is edge_u x edge_v.
struct Primitive {
  std::string name;
  ShapeType shape = ShapeType::Sphere;
  double radius = 0.0;
  Vec3 half_extent{};
  Vec3 edge_u{}, edge_v{};
  Vec3 translation{};
  double rotation_y_deg = 0.0;
  Material material;

  friend bool operator==(const Primitive&, const Primitive&) = default;
};

struct Camera {
  Vec3 position{0, 0, 1};
  Vec3 lookat{0, 0, 0};
  double fov_deg = 90.0;

  friend bool operator==(const Camera&, const Camera&) = default;
};

struct SceneInstance {
  std::vector<Primitive> primitives;
  Camera camera;
  Vec3 environment{0.0};

  const Primitive* find(std::string_view name) const {
    for (const auto& p : primitives)
      if (p.name == name) return &p;
    return nullptr;
  }
  Primitive* find(std::string_view name) {
    for (auto& p : primitives)
      if (p.name == name) return &p;
    return nullptr;
  }

  friend bool operator==(const SceneInstance&, const SceneInstance&) = default;
};

inline Primitive make_quad(std::string name, Vec3 center, Vec3 edge_u, Vec3 edge_v, Material m) {
  Primitive p;
  p.name = std::move(name);
  p.shape = ShapeType::Quad;
  p.edge_u = edge_u;
  p.edge_v = edge_v;
  p.translation = center;
  p.material = m;
  return p;
}

inline Primitive make_sphere(std::string name, Vec3 center, double radius, Material m) {
  Primitive p;
  p.name = std::move(name);
  p.shape = ShapeType::Sphere;
  p.radius = radius;
  p.translation = center;
  p.material = m;
  return p;
}

inline Primitive make_box(std::string name, Vec3 center, Vec3 half_extent, double rotation_y_deg,
                          Material m) {
  Primitive p;
  p.name = std::move(name);
  p.shape = ShapeType::Box;
  p.half_extent = half_extent;
  p.translation = center;
  p.rotation_y_deg = rotation_y_deg;
  p.material = m;
  return p;
}

// ---------------------------------------------------------------------------
// Parameter space
// ---------------------------------------------------------------------------

enum class ParamKind {
  TranslationX,
  TranslationY,
  TranslationZ,
  RotationDeg,
  AlbedoChannel,
  Roughness,
  EmitterIntensity,
  CameraPosComponent,
  CameraLookatComponent,
};

inline constexpr std::array<std::pair<ParamKind, std::string_view>, 9> kParamKindNames{{
    {ParamKind::TranslationX, "translation-x"},
    {ParamKind::TranslationY, "translation-y"},
    {ParamKind::TranslationZ, "translation-z"},
    {ParamKind::RotationDeg, "rotation-deg"},
    {ParamKind::AlbedoChannel, "albedo-channel"},
    {ParamKind::Roughness, "roughness"},
    {ParamKind::EmitterIntensity, "emitter-intensity"},
    {ParamKind::CameraPosComponent, "camera-pos-component"},
    {ParamKind::CameraLookatComponent, "camera-lookat-component"},
}};

inline std::string_view to_string(ParamKind k) {
  for (const auto& [kind, name] : kParamKindNames)
    if (kind == k) return name;
  return "?";
}

inline std::optional<ParamKind> parse_param_kind(std::string_view s) {
  for (const auto& [kind, name] : kParamKindNames)
    if (name == s) return kind;
  return std::nullopt;
}

/// One variable parameter. `binding` names a primitive of the base scene;
/// albedo channels use "<primitive>.r|g|b" and camera components use
/// "camera.x|y|z".
struct ParamSpec {
  std::string name;
  ParamKind kind = ParamKind::TranslationX;
  double min = 0.0;
  double max = 1.0;
  std::string binding;

  friend bool operator==(const ParamSpec&, const ParamSpec&) = default;
};

/// Camera of a space: fixed, or varying inside a per-component box.
struct CameraSpec {
  bool variable = false;
  Vec3 position{0, 0, 1};
  Vec3 lookat{0, 0, 0};
  Vec3 position_min{}, position_max{};
  Vec3 lookat_min{}, lookat_max{};

  friend bool operator==(const CameraSpec&, const CameraSpec&) = default;
};

using CameraVector = std::array<double, 6>;

struct SceneSpace {
  std::string base_scene;
  CameraSpec camera;
  std::vector<ParamSpec> params;

  std::size_t dim() const { return params.size(); }
  std::size_t camera_dims() const { return camera.variable ? 6 : 0; }

  /// Raw camera (position, lookat) used when the space fixes the camera.
  CameraVector default_camera() const {
    return {camera.position.x, camera.position.y, camera.position.z,
            camera.lookat.x,   camera.lookat.y,   camera.lookat.z};
  }

  friend bool operator==(const SceneSpace&, const SceneSpace&) = default;
};

/// A point of the unit hypercube.
struct SceneVector {
  std::vector<double> values;

  SceneVector() = default;
  explicit SceneVector(std::vector<double> v) : values(std::move(v)) {
    for (std::size_t i = 0; i < values.size(); ++i)
      if (!(values[i] >= 0.0 && values[i] <= 1.0))
        throw RangeError("scene vector component " + std::to_string(i) + " = " +
                         std::to_string(values[i]) + " is outside [0,1]");
  }
  std::size_t size() const { return values.size(); }
  double operator[](std::size_t i) const { return values[i]; }

  friend bool operator==(const SceneVector&, const SceneVector&) = default;
};

inline SceneVector normalize(const SceneSpace& space, const std::vector<double>& raw) {
  if (raw.size() != space.dim())
    throw DimensionError("expected " + std::to_string(space.dim()) + " raw values, got " +
                         std::to_string(raw.size()));
  std::vector<double> out(raw.size());
  for (std::size_t i = 0; i < raw.size(); ++i) {
    const auto& p = space.params[i];
    if (!(raw[i] >= p.min && raw[i] <= p.max))
      throw RangeError("parameter '" + p.name + "' value " + std::to_string(raw[i]) +
                       " outside [" + std::to_string(p.min) + ", " + std::to_string(p.max) + "]");
    out[i] = std::clamp((raw[i] - p.min) / (p.max - p.min), 0.0, 1.0);
  }
  return SceneVector(std::move(out));
}

inline std::vector<double> denormalize(const SceneSpace& space, const SceneVector& v) {
  if (v.size() != space.dim())
    throw DimensionError("expected a " + std::to_string(space.dim()) + "-dim scene vector, got " +
                         std::to_string(v.size()));
  std::vector<double> out(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) {
    const auto& p = space.params[i];
    // Endpoint form keeps v=0 -> min and v=1 -> max exact.
    out[i] = v[i] == 1.0 ? p.max : p.min + v[i] * (p.max - p.min);
  }
  return out;
}

/// Camera raw values from its normalized components (variable spaces only).
inline CameraVector camera_from_unit(const SceneSpace& space, const double* unit6) {
  if (!space.camera.variable) return space.default_camera();
  const auto& c = space.camera;
  CameraVector out{};
  for (int i = 0; i < 3; ++i) {
    out[i] = c.position_min[i] + unit6[i] * (c.position_max[i] - c.position_min[i]);
    out[3 + i] = c.lookat_min[i] + unit6[3 + i] * (c.lookat_max[i] - c.lookat_min[i]);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Base scenes
// ---------------------------------------------------------------------------

namespace detail {

inline void add_room(SceneInstance& s, Vec3 lo, Vec3 hi, const Material& floor,
                     const Material& ceiling, const Material& back, const Material& left,
                     const Material& right, const Material* front) {
  const Vec3 c = (lo + hi) * 0.5;
  const Vec3 e = hi - lo;
  // Normals point into the room.
  s.primitives.push_back(make_quad("floor", {c.x, lo.y, c.z}, {0, 0, e.z}, {e.x, 0, 0}, floor));
  s.primitives.push_back(
      make_quad("ceiling", {c.x, hi.y, c.z}, {e.x, 0, 0}, {0, 0, e.z}, ceiling));
  s.primitives.push_back(
      make_quad("back_wall", {c.x, c.y, lo.z}, {e.x, 0, 0}, {0, e.y, 0}, back));
  s.primitives.push_back(
      make_quad("left_wall", {lo.x, c.y, c.z}, {0, e.y, 0}, {0, 0, e.z}, left));
  s.primitives.push_back(
      make_quad("right_wall", {hi.x, c.y, c.z}, {0, 0, e.z}, {0, e.y, 0}, right));
  if (front)
    s.primitives.push_back(
        make_quad("front_wall", {c.x, c.y, hi.z}, {0, e.y, 0}, {e.x, 0, 0}, *front));
}

inline SceneInstance cornell_shell(Vec3 left_albedo, Vec3 right_albedo) {
  SceneInstance s;
  const auto white = Material::diffuse({0.73, 0.73, 0.73});
  add_room(s, {-1, 0, -1}, {1, 2, 1}, white, white, white, Material::diffuse(left_albedo),
           Material::diffuse(right_albedo), nullptr);
  // Ceiling light, facing down.
  s.primitives.push_back(make_quad("light", {0, 1.98, 0}, {0.5, 0, 0}, {0, 0, 0.5},
                                   Material::emitter({14, 12.5, 10})));
  s.camera = {{0, 1, 2}, {0, 1, 0}, 90.0};
  return s;
}

}  // namespace detail

/// Cornell box: red/green side walls, two boxes, a movable ceiling light.
inline SceneInstance cornell_box_scene() {
  SceneInstance s = detail::cornell_shell({0.63, 0.065, 0.05}, {0.14, 0.45, 0.091});
  const auto white = Material::diffuse({0.73, 0.73, 0.73});
  s.primitives.push_back(make_box("tall_box", {-0.35, 0.6, -0.3}, {0.28, 0.6, 0.28}, 18, white));
  s.primitives.push_back(make_box("short_box", {0.35, 0.3, 0.3}, {0.28, 0.3, 0.28}, -17, white));
  return s;
}

/// Cornell box with a single large glossy sphere.
inline SceneInstance caustic_box_scene() {
  SceneInstance s = detail::cornell_shell({0.63, 0.065, 0.05}, {0.14, 0.45, 0.091});
  s.primitives.push_back(
      make_sphere("sphere", {0, 0.45, 0}, 0.45, Material::glossy({0.95, 0.95, 0.95}, 0.1)));
  return s;
}

/// Wide empty room whose back wall carries an off-center mirror; the fixed
/// camera looks into the mirror, and a diffuse sphere placed behind the camera
/// shows up only through the reflection.
inline SceneInstance mirror_room_scene() {
  SceneInstance s;
  const auto wall = Material::diffuse({0.7, 0.7, 0.7});
  const auto floor = Material::diffuse({0.45, 0.45, 0.5});
  detail::add_room(s, {-5, 0, -2}, {5, 2.5, 2}, floor, wall, wall, wall, wall, &wall);
  s.primitives.push_back(make_quad("mirror", {0, 1.2, -1.99}, {0.6, 0, 0}, {0, 2.2, 0},
                                   Material::mirror()));
  // Side lights stay out of the mirror's reflected view, so only the sphere
  // changes what the mirror shows.
  for (double x : {-3.0, 3.0})
    s.primitives.push_back(make_quad(x < 0 ? "light_left" : "light_right", {x, 2.48, 0}, {2.0, 0, 0},
                                     {0, 0, 2.0}, Material::emitter({8, 8, 8})));
  s.primitives.push_back(
      make_sphere("sphere", {0, 0.6, 0.5}, 0.6, Material::diffuse({0.85, 0.25, 0.1})));
  s.camera = {{0, 1.2, -1.0}, {0, 1.1, -2.0}, 90.0};
  return s;
}

inline std::vector<std::string> base_scene_names() {
  return {"cornell_box", "caustic_box", "mirror_room"};
}

inline SceneInstance base_scene(std::string_view name) {
  if (name == "cornell_box") return cornell_box_scene();
  if (name == "caustic_box") return caustic_box_scene();
  if (name == "mirror_room") return mirror_room_scene();
  throw ConfigError("unknown base scene '" + std::string(name) + "'");
}

// ---------------------------------------------------------------------------
// Binding resolution and instantiation
// ---------------------------------------------------------------------------

namespace detail {

inline std::pair<std::string, std::string> split_binding(const std::string& binding) {
  const auto dot_pos = binding.rfind('.');
  if (dot_pos == std::string::npos) return {binding, ""};
  return {binding.substr(0, dot_pos), binding.substr(dot_pos + 1)};
}

inline int axis_index(const std::string& s) {
  if (s == "x" || s == "r") return 0;
  if (s == "y" || s == "g") return 1;
  if (s == "z" || s == "b") return 2;
  return -1;
}

}  // namespace detail

/// Throws ConfigError if `p` cannot drive `base`.
inline void validate_binding(const ParamSpec& p, const SceneInstance& base) {
  const auto [element, component] = detail::split_binding(p.binding);
  const bool camera_kind =
      p.kind == ParamKind::CameraPosComponent || p.kind == ParamKind::CameraLookatComponent;
  const bool needs_component = camera_kind || p.kind == ParamKind::AlbedoChannel;
  auto fail = [&](const std::string& why) {
    throw ConfigError("parameter '" + p.name + "': binding '" + p.binding + "' " + why);
  };
  if (needs_component && detail::axis_index(component) < 0) fail("needs a .x/.y/.z or .r/.g/.b suffix");
  if (!needs_component && !component.empty()) fail("does not take a component suffix");
  if (camera_kind) {
    if (element != "camera") fail("must bind to 'camera'");
    return;
  }
  const Primitive* prim = base.find(element);
  if (!prim) fail("does not name an element of the base scene");
  switch (p.kind) {
    case ParamKind::AlbedoChannel:
      if (prim->material.type == MaterialType::Emitter) fail("binds an albedo to an emitter");
      break;
    case ParamKind::Roughness:
      if (prim->material.type != MaterialType::Glossy) fail("binds roughness to a non-glossy material");
      break;
    case ParamKind::EmitterIntensity:
      if (prim->material.type != MaterialType::Emitter) fail("binds intensity to a non-emitter");
      break;
    default:
      break;
  }
}

/// Base scene with every bound parameter set from `v`; camera is
/// (position xyz, lookat xyz) in world units.
inline SceneInstance instantiate(const SceneSpace& space, const SceneVector& v,
                                 const CameraVector& camera) {
  SceneInstance s = base_scene(space.base_scene);
  s.camera.position = {camera[0], camera[1], camera[2]};
  s.camera.lookat = {camera[3], camera[4], camera[5]};
  const std::vector<double> raw = denormalize(space, v);
  // Emitter intensity scales the base radiance.
  const SceneInstance base = s;
  for (std::size_t i = 0; i < raw.size(); ++i) {
    const auto& p = space.params[i];
    const auto [element, component] = detail::split_binding(p.binding);
    const int axis = detail::axis_index(component);
    if (p.kind == ParamKind::CameraPosComponent) {
      s.camera.position[axis] = raw[i];
      continue;
    }
    if (p.kind == ParamKind::CameraLookatComponent) {
      s.camera.lookat[axis] = raw[i];
      continue;
    }
    Primitive* prim = s.find(element);
    switch (p.kind) {
      case ParamKind::TranslationX: prim->translation.x = raw[i]; break;
      case ParamKind::TranslationY: prim->translation.y = raw[i]; break;
      case ParamKind::TranslationZ: prim->translation.z = raw[i]; break;
      case ParamKind::RotationDeg: prim->rotation_y_deg = raw[i]; break;
      case ParamKind::AlbedoChannel: prim->material.albedo[axis] = raw[i]; break;
      case ParamKind::Roughness: prim->material.roughness = raw[i]; break;
      case ParamKind::EmitterIntensity:
        prim->material.emission = base.find(element)->material.emission * raw[i];
        break;
      default: break;
    }
  }
  return s;
}

inline SceneInstance instantiate(const SceneSpace& space, const SceneVector& v) {
  return instantiate(space, v, space.default_camera());
}

// ---------------------------------------------------------------------------
// JSON scene-space files
// ---------------------------------------------------------------------------

namespace detail {

inline Vec3 vec3_from_json(const nlohmann::json& j, const std::string& field) {
  if (!j.is_array() || j.size() != 3)
    throw ConfigError("field '" + field + "' must be an array of 3 numbers");
  Vec3 v;
  for (int i = 0; i < 3; ++i) {
    if (!j[i].is_number()) throw ConfigError("field '" + field + "' must contain numbers");
    v[i] = j[i].get<double>();
  }
  return v;
}

inline nlohmann::json vec3_to_json(const Vec3& v) { return nlohmann::json::array({v.x, v.y, v.z}); }

}  // namespace detail

inline void validate_space(const SceneSpace& space) {
  const SceneInstance base = base_scene(space.base_scene);
  if (space.params.empty()) throw ConfigError("scene space declares no parameters");
  std::set<std::string> names;
  for (const auto& p : space.params) {
    if (!names.insert(p.name).second) throw ConfigError("duplicate parameter name '" + p.name + "'");
    if (!(p.min < p.max))
      throw ConfigError("parameter '" + p.name + "': min must be < max");
    validate_binding(p, base);
    if (p.kind == ParamKind::AlbedoChannel && (p.min < 0.0 || p.max > 0.97))
      throw ConfigError("parameter '" + p.name + "': albedo range must lie in [0, 0.97]");
    if (p.kind == ParamKind::Roughness && (p.min <= 0.0 || p.max > 1.0))
      throw ConfigError("parameter '" + p.name + "': roughness range must lie in (0, 1]");
    if (p.kind == ParamKind::EmitterIntensity && p.min < 0.0)
      throw ConfigError("parameter '" + p.name + "': emitter intensity must be >= 0");
  }
  if (space.camera.variable) {
    for (int i = 0; i < 3; ++i) {
      if (!(space.camera.position_min[i] < space.camera.position_max[i]) ||
          !(space.camera.lookat_min[i] < space.camera.lookat_max[i]))
        throw ConfigError("camera: every variable component needs min < max");
    }
  }
}

/// Parses a scene-space JSON document. Errors carry the offending field.
inline SceneSpace load_space(std::string_view config_text) {
  using nlohmann::json;
  json doc;
  try {
    doc = json::parse(config_text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("scene space parse error: ") + e.what());
  }
  if (!doc.is_object()) throw ConfigError("scene space must be a JSON object");
  SceneSpace space;
  try {
    if (!doc.contains("base_scene") || !doc["base_scene"].is_string())
      throw ConfigError("missing string field 'base_scene'");
    space.base_scene = doc["base_scene"].get<std::string>();
    const SceneInstance base = base_scene(space.base_scene);
    space.camera.position = base.camera.position;
    space.camera.lookat = base.camera.lookat;

    if (doc.contains("camera")) {
      const json& cam = doc["camera"];
      if (!cam.is_object()) throw ConfigError("field 'camera' must be an object");
      const std::string mode = cam.value("mode", "fixed");
      if (mode != "fixed" && mode != "variable")
        throw ConfigError("camera.mode must be \"fixed\" or \"variable\", got \"" + mode + "\"");
      space.camera.variable = mode == "variable";
      if (cam.contains("position")) space.camera.position = detail::vec3_from_json(cam["position"], "camera.position");
      if (cam.contains("lookat")) space.camera.lookat = detail::vec3_from_json(cam["lookat"], "camera.lookat");
      if (space.camera.variable) {
        const Vec3 spread{0.25};
        space.camera.position_min = cam.contains("position_min")
                                        ? detail::vec3_from_json(cam["position_min"], "camera.position_min")
                                        : space.camera.position - spread;
        space.camera.position_max = cam.contains("position_max")
                                        ? detail::vec3_from_json(cam["position_max"], "camera.position_max")
                                        : space.camera.position + spread;
        space.camera.lookat_min = cam.contains("lookat_min")
                                      ? detail::vec3_from_json(cam["lookat_min"], "camera.lookat_min")
                                      : space.camera.lookat - spread;
        space.camera.lookat_max = cam.contains("lookat_max")
                                      ? detail::vec3_from_json(cam["lookat_max"], "camera.lookat_max")
                                      : space.camera.lookat + spread;
      }
    }

    if (!doc.contains("params") || !doc["params"].is_array())
      throw ConfigError("missing array field 'params'");
    std::size_t index = 0;
    for (const json& jp : doc["params"]) {
      const std::string where = "params[" + std::to_string(index++) + "]";
      if (!jp.is_object()) throw ConfigError(where + " must be an object");
      for (const char* field : {"name", "kind", "binding"})
        if (!jp.contains(field) || !jp[field].is_string())
          throw ConfigError(where + ": missing string field '" + field + "'");
      for (const char* field : {"min", "max"})
        if (!jp.contains(field) || !jp[field].is_number())
          throw ConfigError(where + ": missing numeric field '" + field + "'");
      ParamSpec p;
      p.name = jp["name"].get<std::string>();
      const auto kind_text = jp["kind"].get<std::string>();
      const auto kind = parse_param_kind(kind_text);
      if (!kind) throw ConfigError(where + ": unknown kind '" + kind_text + "'");
      p.kind = *kind;
      p.min = jp["min"].get<double>();
      p.max = jp["max"].get<double>();
      p.binding = jp["binding"].get<std::string>();
      space.params.push_back(std::move(p));
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("scene space: ") + e.what());
  }
  validate_space(space);
  return space;
}

inline std::string save_space(const SceneSpace& space) {
  using nlohmann::json;
  json doc;
  doc["base_scene"] = space.base_scene;
  json cam;
  cam["mode"] = space.camera.variable ? "variable" : "fixed";
  cam["position"] = detail::vec3_to_json(space.camera.position);
  cam["lookat"] = detail::vec3_to_json(space.camera.lookat);
  if (space.camera.variable) {
    cam["position_min"] = detail::vec3_to_json(space.camera.position_min);
    cam["position_max"] = detail::vec3_to_json(space.camera.position_max);
    cam["lookat_min"] = detail::vec3_to_json(space.camera.lookat_min);
    cam["lookat_max"] = detail::vec3_to_json(space.camera.lookat_max);
  }
  doc["camera"] = cam;
  json params = json::array();
  for (const auto& p : space.params)
    params.push_back({{"name", p.name},
                      {"kind", std::string(to_string(p.kind))},
                      {"min", p.min},
                      {"max", p.max},
                      {"binding", p.binding}});
  doc["params"] = params;
  return doc.dump(2);
}

// ---------------------------------------------------------------------------
// Built-in spaces
// ---------------------------------------------------------------------------

inline std::vector<std::string> builtin_names() { return {"CornellVar", "MirrorRoom", "CausticBox"}; }

namespace detail {

inline void add_rgb(std::vector<ParamSpec>& params, const std::string& element, double lo, double hi) {
  for (const char* ch : {"r", "g", "b"})
    params.push_back({element + "_" + ch, ParamKind::AlbedoChannel, lo, hi, element + "." + ch});
}

}  // namespace detail

struct Builtin {
  SceneSpace space;
  SceneInstance base;
};

inline Builtin builtin(std::string_view name) {
  SceneSpace s;
  if (name == "CornellVar") {
    s.base_scene = "cornell_box";
    detail::add_rgb(s.params, "left_wall", 0.05, 0.9);
    detail::add_rgb(s.params, "right_wall", 0.05, 0.9);
    s.params.push_back({"tall_box_x", ParamKind::TranslationX, -0.6, 0.6, "tall_box"});
    s.params.push_back({"tall_box_z", ParamKind::TranslationZ, -0.6, 0.6, "tall_box"});
    s.params.push_back({"short_box_x", ParamKind::TranslationX, -0.6, 0.6, "short_box"});
    s.params.push_back({"short_box_z", ParamKind::TranslationZ, -0.6, 0.6, "short_box"});
    s.params.push_back({"light_x", ParamKind::TranslationX, -0.6, 0.6, "light"});
    s.params.push_back({"light_z", ParamKind::TranslationZ, -0.6, 0.6, "light"});
    s.camera.variable = true;
    s.camera.position = {0, 1, 2};
    s.camera.lookat = {0, 1, 0};
    s.camera.position_min = {-0.4, 0.7, 1.7};
    s.camera.position_max = {0.4, 1.3, 2.4};
    s.camera.lookat_min = {-0.3, 0.8, -0.5};
    s.camera.lookat_max = {0.3, 1.2, 0.5};
  } else if (name == "MirrorRoom") {
    s.base_scene = "mirror_room";
    s.params.push_back({"sphere_x", ParamKind::TranslationX, -4.3, 4.3, "sphere"});
    s.params.push_back({"sphere_z", ParamKind::TranslationZ, -0.3, 1.3, "sphere"});
  } else if (name == "CausticBox") {
    s.base_scene = "caustic_box";
    s.params.push_back({"sphere_x", ParamKind::TranslationX, -0.5, 0.5, "sphere"});
    s.params.push_back({"sphere_z", ParamKind::TranslationZ, -0.5, 0.5, "sphere"});
    s.params.push_back({"sphere_roughness", ParamKind::Roughness, 0.05, 0.6, "sphere"});
    detail::add_rgb(s.params, "left_wall", 0.05, 0.9);
    detail::add_rgb(s.params, "right_wall", 0.05, 0.9);
  } else {
    throw ConfigError("unknown built-in scene '" + std::string(name) +
                      "' (expected CornellVar, MirrorRoom or CausticBox)");
  }
  SceneInstance base = base_scene(s.base_scene);
  if (!s.camera.variable) {
    s.camera.position = base.camera.position;
    s.camera.lookat = base.camera.lookat;
  }
  validate_space(s);
  return {std::move(s), std::move(base)};
}

/// Resolves a built-in name or a path to a scene-space JSON file.
inline SceneSpace resolve_space(const std::string& name_or_path) {
  for (const auto& n : builtin_names())
    if (n == name_or_path) return builtin(n).space;
  std::ifstream in(name_or_path);
  if (!in) throw ConfigError("'" + name_or_path + "' is neither a built-in scene nor a readable file");
  std::stringstream ss;
  ss << in.rdbuf();
  return load_space(ss.str());
}

}  // namespace glint
