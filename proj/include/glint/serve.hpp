// HTTP inference service: scene-space metadata and PNG renders of any point.
#pragma once

#include <atomic>
#include <filesystem>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>

#include <json.hpp>

#include "glint/image.hpp"
#include "glint/infer.hpp"
#include "glint/net/checkpoint.hpp"
#include "glint/parallel.hpp"
#include "glint/scene.hpp"
#include "glint/tracer.hpp"

// After Eigen: <resolv.h> defines _res as a macro.
#include <httplib.h>

namespace glint {

inline constexpr int kServeMaxResolution = 1024;
inline constexpr int kServeMinResolution = 16;
inline constexpr int kServeMaxSpp = 256;

/// Client error tied to one request field.
struct FieldError : Error {
  std::string field;
  FieldError(std::string f, const std::string& msg) : Error(f + ": " + msg), field(std::move(f)) {}
};

enum class RenderMode { Net, PathTrace };

struct RenderRequest {
  std::vector<double> vector;
  CameraVector camera{};
  int resolution = 128;
  RenderMode mode = RenderMode::Net;
  int spp = 16;
  double exposure = 1.0;
  std::uint64_t seed = 0;
};

struct CheckpointInfo {
  std::string path;
  GeneratorShape shape;
  std::uint64_t adam_steps = 0;
};

namespace detail {

inline std::vector<double> number_array(const nlohmann::json& j, const std::string& field) {
  if (!j.is_array()) throw FieldError(field, "expected an array of numbers");
  std::vector<double> out;
  for (const auto& x : j) {
    if (!x.is_number()) throw FieldError(field, "expected an array of numbers");
    const double v = x.get<double>();
    if (!std::isfinite(v)) throw FieldError(field, "non-finite entry");
    out.push_back(v);
  }
  return out;
}

inline int int_field(const nlohmann::json& j, const std::string& field, int fallback) {
  if (!j.contains(field)) return fallback;
  if (!j[field].is_number_integer()) throw FieldError(field, "expected an integer");
  return j[field].get<int>();
}

}  // namespace detail

inline RenderRequest parse_render_request(const nlohmann::json& j, const SceneSpace& space) {
  if (!j.is_object()) throw FieldError("body", "expected a JSON object");
  RenderRequest r;
  if (!j.contains("vector")) throw FieldError("vector", "missing");
  r.vector = detail::number_array(j["vector"], "vector");
  if (r.vector.size() != space.dim())
    throw FieldError("vector", "expected " + std::to_string(space.dim()) + " entries, got " +
                                   std::to_string(r.vector.size()));
  for (std::size_t i = 0; i < r.vector.size(); ++i)
    if (r.vector[i] < 0.0 || r.vector[i] > 1.0)
      throw FieldError("vector", "entry " + std::to_string(i) + " is outside [0,1]");
  r.camera = space.default_camera();
  if (j.contains("camera") && !j["camera"].is_null()) {
    const auto cam = detail::number_array(j["camera"], "camera");
    if (cam.size() != 6) throw FieldError("camera", "expected 6 entries (position, lookat)");
    std::copy(cam.begin(), cam.end(), r.camera.begin());
    const Vec3 p{cam[0], cam[1], cam[2]}, l{cam[3], cam[4], cam[5]};
    if (length(p - l) == 0.0) throw FieldError("camera", "position equals lookat");
  }
  r.resolution = detail::int_field(j, "resolution", r.resolution);
  if (r.resolution < kServeMinResolution || r.resolution > kServeMaxResolution)
    throw FieldError("resolution", "must be in [" + std::to_string(kServeMinResolution) + ", " +
                                       std::to_string(kServeMaxResolution) + "]");
  const std::string mode = j.value("mode", std::string("net"));
  if (mode == "net")
    r.mode = RenderMode::Net;
  else if (mode == "pt")
    r.mode = RenderMode::PathTrace;
  else
    throw FieldError("mode", "expected \"net\" or \"pt\"");
  r.spp = detail::int_field(j, "spp", r.spp);
  if (r.spp < 1 || r.spp > kServeMaxSpp)
    throw FieldError("spp", "must be in [1, " + std::to_string(kServeMaxSpp) + "]");
  if (j.contains("exposure")) {
    if (!j["exposure"].is_number()) throw FieldError("exposure", "expected a number");
    r.exposure = j["exposure"].get<double>();
    if (!(r.exposure >= 0.0) || !std::isfinite(r.exposure)) throw FieldError("exposure", "must be >= 0");
  }
  if (j.contains("seed")) {
    if (!j["seed"].is_number_unsigned()) throw FieldError("seed", "expected a non-negative integer");
    r.seed = j["seed"].get<std::uint64_t>();
  }
  return r;
}

inline nlohmann::json space_json(const SceneSpace& space, const std::optional<CheckpointInfo>& ckpt) {
  using nlohmann::json;
  json params = json::array();
  for (const auto& p : space.params)
    params.push_back({{"name", p.name}, {"kind", std::string(to_string(p.kind))}, {"min", p.min}, {"max", p.max}});
  const auto& c = space.camera;
  json cam{{"mode", c.variable ? "variable" : "fixed"},
           {"position", detail::vec3_to_json(c.position)},
           {"lookat", detail::vec3_to_json(c.lookat)}};
  if (c.variable) {
    cam["position_min"] = detail::vec3_to_json(c.position_min);
    cam["position_max"] = detail::vec3_to_json(c.position_max);
    cam["lookat_min"] = detail::vec3_to_json(c.lookat_min);
    cam["lookat_max"] = detail::vec3_to_json(c.lookat_max);
  }
  json info = nullptr;
  if (ckpt)
    info = {{"path", ckpt->path},
            {"scene_dim", ckpt->shape.scene_dim},
            {"hidden_width", ckpt->shape.hidden_width},
            {"hidden_layers", ckpt->shape.hidden_layers},
            {"adam_steps", ckpt->adam_steps}};
  return {{"base_scene", space.base_scene},
          {"dim", space.dim()},
          {"params", params},
          {"camera", cam},
          {"checkpoint_info", info}};
}

/// Normalized -> physical -> normalized, for checking client-side slider math.
inline nlohmann::json roundtrip_json(const nlohmann::json& body, const SceneSpace& space) {
  if (!body.is_object()) throw FieldError("body", "expected a JSON object");
  if (body.contains("vector")) {
    const auto v = detail::number_array(body["vector"], "vector");
    if (v.size() != space.dim()) throw FieldError("vector", "expected " + std::to_string(space.dim()) + " entries");
    SceneVector sv;
    try {
      sv = SceneVector(v);
    } catch (const RangeError& e) {
      throw FieldError("vector", e.what());
    }
    const auto raw = denormalize(space, sv);
    return {{"vector", v}, {"raw", raw}, {"normalized", normalize(space, raw).values}};
  }
  if (body.contains("raw")) {
    const auto raw = detail::number_array(body["raw"], "raw");
    SceneVector sv;
    try {
      sv = normalize(space, raw);
    } catch (const Error& e) {
      throw FieldError("raw", e.what());
    }
    return {{"raw", raw}, {"normalized", sv.values}, {"denormalized", denormalize(space, sv)}};
  }
  throw FieldError("vector", "missing (send \"vector\" or \"raw\")");
}

/// Model and space behind the service. The model pointer is swapped in once
/// loading finishes; a published snapshot is never mutated.
class RenderService {
 public:
  explicit RenderService(SceneSpace space) : space_(std::move(space)) {}

  const SceneSpace& space() const { return space_; }

  void publish(PixelGenerator<float> net, CheckpointInfo info) {
    if (static_cast<std::size_t>(net.shape().scene_dim) != space_.dim())
      throw DimensionError("checkpoint scene dim " + std::to_string(net.shape().scene_dim) +
                           " does not match the served space (" + std::to_string(space_.dim()) + ")");
    auto snap = std::make_shared<const Snapshot>(Snapshot{std::move(net), std::move(info)});
    std::lock_guard lock(mutex_);
    snapshot_ = std::move(snap);
  }

  void load(const std::filesystem::path& checkpoint) {
    const auto ck = load_checkpoint(checkpoint.string(), static_cast<int>(space_.dim()));
    CheckpointInfo info{checkpoint.string(), ck.net.shape(), ck.adam.t};
    publish(ck.net, std::move(info));
  }

  bool ready() const { return current() != nullptr; }

  std::optional<CheckpointInfo> checkpoint_info() const {
    const auto s = current();
    if (!s) return std::nullopt;
    return s->info;
  }

  ImageRGB render(const RenderRequest& r) const {
    SceneSetup setup = make_setup(space_, r.vector, r.camera);
    if (r.mode == RenderMode::PathTrace) return render_image(setup.instance, r.resolution, r.spp, r.seed).radiance;
    const auto s = current();
    if (!s) throw NotReady();
    return predict_image(s->net, setup, r.resolution);
  }

  std::string render_png(const RenderRequest& r) const { return encode_png(render(r), r.exposure); }

  struct NotReady : Error {
    NotReady() : Error("checkpoint is still loading") {}
  };

 private:
  struct Snapshot {
    PixelGenerator<float> net;
    CheckpointInfo info;
  };

  std::shared_ptr<const Snapshot> current() const {
    std::lock_guard lock(mutex_);
    return snapshot_;
  }

  SceneSpace space_;
  mutable std::mutex mutex_;
  std::shared_ptr<const Snapshot> snapshot_;
};

namespace detail {

inline void json_error(httplib::Response& res, int status, const std::string& message, const std::string& field = "") {
  nlohmann::json body{{"error", message}};
  if (!field.empty()) body["field"] = field;
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

inline nlohmann::json parse_body(const httplib::Request& req) {
  try {
    return nlohmann::json::parse(req.body);
  } catch (const nlohmann::json::exception& e) {
    throw FieldError("body", std::string("invalid JSON: ") + e.what());
  }
}

}  // namespace detail

/// Installs the routes of `service` on `server`.
inline void install_routes(httplib::Server& server, RenderService& service, const std::string& cors_origin = "*") {
  server.set_default_headers({{"Access-Control-Allow-Origin", cors_origin},
                              {"Access-Control-Allow-Methods", "GET, POST, OPTIONS"},
                              {"Access-Control-Allow-Headers", "Content-Type"}});
  server.Options(R"(/.*)", [](const httplib::Request&, httplib::Response& res) { res.status = 204; });

  server.Get("/healthz", [](const httplib::Request&, httplib::Response& res) { res.set_content("ok", "text/plain"); });

  server.Get("/space", [&service](const httplib::Request&, httplib::Response& res) {
    res.set_content(space_json(service.space(), service.checkpoint_info()).dump(), "application/json");
  });

  server.Post("/render", [&service](const httplib::Request& req, httplib::Response& res) {
    try {
      const auto r = parse_render_request(detail::parse_body(req), service.space());
      if (r.mode == RenderMode::Net && !service.ready()) {
        res.set_header("Retry-After", "1");
        detail::json_error(res, 503, "checkpoint is still loading");
        return;
      }
      res.set_content(service.render_png(r), "image/png");
    } catch (const FieldError& e) {
      detail::json_error(res, 400, e.what(), e.field);
    } catch (const RenderService::NotReady& e) {
      detail::json_error(res, 503, e.what());
    } catch (const Error& e) {
      detail::json_error(res, 400, e.what());
    }
  });

  server.Post("/debug/roundtrip", [&service](const httplib::Request& req, httplib::Response& res) {
    try {
      res.set_content(roundtrip_json(detail::parse_body(req), service.space()).dump(), "application/json");
    } catch (const FieldError& e) {
      detail::json_error(res, 400, e.what(), e.field);
    }
  });
}

/// Serves until `server.stop()`. The checkpoint loads on a background thread
/// so /space and /healthz answer immediately.
inline int serve(RenderService& service, const std::filesystem::path& checkpoint, const std::string& host, int port,
                 httplib::Server& server) {
  const unsigned workers = worker_count();
  server.new_task_queue = [workers] { return new httplib::ThreadPool(workers); };
  install_routes(server, service);
  std::atomic<bool> load_failed{false};
  std::thread loader([&] {
    try {
      service.load(checkpoint);
    } catch (const std::exception& e) {
      std::fprintf(stderr, "glint serve: %s\n", e.what());
      load_failed = true;
      server.wait_until_ready();
      server.stop();
    }
  });
  const bool ok = server.listen(host, port);
  loader.join();
  if (load_failed) return 2;
  return ok ? 0 : 1;
}

}  // namespace glint
