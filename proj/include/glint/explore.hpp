// Active exploration of the training-data hypercube with parallel Markov
// chains. A chain state u packs the scene vector, the variable camera
// components (when the space has them) and the normalized patch origin.
#pragma once

#include <cmath>
#include <cstdint>
#include <fstream>
#include <iomanip>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "glint/core.hpp"
#include "glint/rng.hpp"
#include "glint/scene.hpp"
#include "glint/tracer.hpp"

namespace glint {

enum class Acceptance { Greedy, Metropolis, Always };
enum class TargetMode { LossTimesStepNorm, LossOnly };
enum class StepKind { Initial, Large, Small };

inline std::string to_string(Acceptance a) {
  switch (a) {
    case Acceptance::Greedy: return "greedy";
    case Acceptance::Metropolis: return "metropolis";
    case Acceptance::Always: return "always";
  }
  return "?";
}

inline Acceptance parse_acceptance(const std::string& s) {
  if (s == "greedy") return Acceptance::Greedy;
  if (s == "metropolis") return Acceptance::Metropolis;
  if (s == "always") return Acceptance::Always;
  throw ConfigError("acceptance must be greedy, metropolis or always (got '" + s + "')");
}

inline std::string to_string(TargetMode t) { return t == TargetMode::LossOnly ? "loss" : "loss-step"; }

inline TargetMode parse_target(const std::string& s) {
  if (s == "loss") return TargetMode::LossOnly;
  if (s == "loss-step") return TargetMode::LossTimesStepNorm;
  throw ConfigError("target must be loss or loss-step (got '" + s + "')");
}

inline const char* to_string(StepKind k) {
  switch (k) {
    case StepKind::Initial: return "init";
    case StepKind::Large: return "large";
    case StepKind::Small: return "small";
  }
  return "?";
}

struct ProposalConfig {
  double p_large = 0.3;
  double sigma = 0.05;

  void validate() const {
    if (!(p_large > 0.0 && p_large <= 1.0)) throw ConfigError("p_large must lie in (0,1]");
    if (!(sigma >= 0.0)) throw ConfigError("small-step sigma must be >= 0");
  }
};

/// Folds x back into [0,1] by mirroring at both bounds.
inline double reflect_unit(double x) {
  x = std::fmod(std::abs(x), 2.0);
  return x > 1.0 ? 2.0 - x : x;
}

struct ChainState {
  std::vector<double> u;
  double f = 0.0;
  bool evaluated = false;
};

struct Proposal {
  std::vector<double> u;
  StepKind kind = StepKind::Large;
};

inline std::vector<double> uniform_state(std::size_t dims, Engine& rng) {
  std::vector<double> u(dims);
  for (auto& x : u) x = uniform01(rng);
  return u;
}

inline std::vector<ChainState> init_chains(std::size_t dims, std::size_t n, Engine& rng) {
  std::vector<ChainState> chains(n);
  for (auto& c : chains) c.u = uniform_state(dims, rng);
  return chains;
}

inline Proposal propose(const ChainState& chain, const ProposalConfig& cfg, Engine& rng) {
  if (uniform01(rng) < cfg.p_large) return {uniform_state(chain.u.size(), rng), StepKind::Large};
  Proposal p{chain.u, StepKind::Small};
  std::normal_distribution<double> step(0.0, 1.0);
  for (auto& x : p.u) x = reflect_unit(x + cfg.sigma * step(rng));
  return p;
}

inline bool accept(double f_current, double f_proposed, Acceptance mode, Engine& rng) {
  switch (mode) {
    case Acceptance::Greedy: return f_proposed > f_current;
    case Acceptance::Always: return true;
    case Acceptance::Metropolis: {
      if (f_current <= 0.0) return true;
      const double ratio = f_proposed / f_current;
      if (ratio >= 1.0) return true;
      return uniform01(rng) < ratio;
    }
  }
  return false;
}

struct StepRecord {
  StepKind kind = StepKind::Initial;
  bool accepted = false;
  double f_proposed = 0.0;
};

/// One propose/evaluate/accept step against a target callable f(u) >= 0. The
/// first call on a chain only evaluates its initial state.
template <typename Target>
StepRecord chain_step(ChainState& chain, const ProposalConfig& cfg, Acceptance mode, Engine& rng, Target&& target) {
  if (!chain.evaluated) {
    chain.f = target(chain.u);
    chain.evaluated = true;
    return {StepKind::Initial, true, chain.f};
  }
  Proposal p = propose(chain, cfg, rng);
  const double f = target(p.u);
  const bool ok = accept(chain.f, f, mode, rng);
  if (ok) {
    chain.u = std::move(p.u);
    chain.f = f;
  }
  return {p.kind, ok, f};
}

/// How a chain state maps onto a renderable patch.
struct StateLayout {
  std::size_t scene_dims = 0;
  std::size_t camera_dims = 0;

  explicit StateLayout(const SceneSpace& space) : scene_dims(space.dim()), camera_dims(space.camera_dims()) {}
  StateLayout(std::size_t scene, std::size_t camera) : scene_dims(scene), camera_dims(camera) {}

  std::size_t dims() const { return scene_dims + camera_dims + 2; }
};

/// What a chain state asks the tracer to render.
struct PatchRequest {
  std::vector<double> scene;  // normalized
  CameraVector camera{};      // raw position and look-at
  PatchWindow window;
};

/// Patch origin along one axis: round(u * (R - P)).
inline int patch_origin(double u, int resolution, int patch) {
  return static_cast<int>(std::lround(u * (resolution - patch)));
}

inline PatchRequest request_for(const SceneSpace& space, const std::vector<double>& u, int resolution, int patch) {
  const StateLayout layout(space);
  if (u.size() != layout.dims())
    throw DimensionError("chain state has " + std::to_string(u.size()) + " components, expected " +
                         std::to_string(layout.dims()));
  if (patch > resolution) throw RangeError("patch size exceeds the image resolution");
  PatchRequest r;
  r.scene.assign(u.begin(), u.begin() + static_cast<std::ptrdiff_t>(layout.scene_dims));
  r.camera = layout.camera_dims ? camera_from_unit(space, u.data() + layout.scene_dims) : space.default_camera();
  const double px = u[layout.scene_dims + layout.camera_dims];
  const double py = u[layout.scene_dims + layout.camera_dims + 1];
  r.window = PatchWindow::square(resolution, patch_origin(px, resolution, patch), patch_origin(py, resolution, patch),
                                 patch);
  return r;
}

/// Per-step chain diagnostics: one CSV row per chain per generate iteration.
class ChainLog {
 public:
  ChainLog() = default;
  ChainLog(const std::string& path, std::size_t dims) : out_(path) {
    if (!out_) throw FormatError("cannot write '" + path + "'");
    out_ << std::setprecision(9) << "iteration,chain,step,accepted,f";
    for (std::size_t i = 0; i < dims; ++i) out_ << ",u" << i;
    out_ << "\n";
  }

  void row(std::uint64_t iteration, std::size_t chain, StepKind kind, bool accepted, double f,
           const std::vector<double>& state) {
    if (!out_.is_open()) return;
    out_ << iteration << ',' << chain << ',' << to_string(kind) << ',' << (accepted ? 1 : 0) << ',' << f;
    for (double x : state) out_ << ',' << x;
    out_ << '\n';
  }

  void flush() {
    if (out_.is_open()) out_.flush();
  }

 private:
  std::ofstream out_;
};

}  // namespace glint
