// Self-tuning sample reuse: a bounded store of rendered patches, the
// reuse/generate decision and loss-weighted replay.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <json.hpp>

#include "glint/core.hpp"
#include "glint/image.hpp"
#include "glint/rng.hpp"
#include "glint/scene.hpp"
#include "glint/tracer.hpp"

namespace glint {

inline constexpr double kReuseBeta = 4.6;
inline constexpr double kReuseEmaDecay = 0.99;
inline constexpr std::uint64_t kReuseWarmup = 100;
inline constexpr std::size_t kDefaultStoreCapacity = 20000;

/// One rendered training patch and the state that produced it.
struct TrainingSample {
  GBufferPatch gbuffer;
  RadiancePatch target;
  std::vector<double> scene;  // normalized scene vector
  CameraVector camera{};      // raw camera fed to the network
  std::vector<double> state;  // chain state, for diagnostics
  bool large_step = false;
  std::uint64_t created = 0;
};

using SamplePtr = std::shared_ptr<const TrainingSample>;

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

enum class ReuseDecision { Generate, Reuse };

inline const char* to_string(ReuseDecision d) { return d == ReuseDecision::Reuse ? "reuse" : "generate"; }

class ReuseTracker {
 public:
  explicit ReuseTracker(double beta = kReuseBeta, double decay = kReuseEmaDecay) : beta_(beta), decay_(decay) {}

  double beta() const { return beta_; }
  double decay() const { return decay_; }
  std::optional<double> ema_new() const { return ema_new_; }
  std::optional<double> ema_exist() const { return ema_exist_; }
  bool seeded() const { return ema_new_ && ema_exist_; }

  void observe_new(double loss) { update(ema_new_, loss); }
  void observe_exist(double loss) { update(ema_exist_, loss); }

  /// sigma(ema_exist - ema_new + beta). Throws until both EMAs are seeded.
  double probability() const {
    if (!seeded()) throw Error("reuse probability needs both loss averages to be seeded");
    return sigmoid(*ema_exist_ - *ema_new_ + beta_);
  }

  /// As probability(), but an unseeded tracker reports sigma(beta), the
  /// equal-loss value.
  double probability_or_default() const { return seeded() ? probability() : sigmoid(beta_); }

 private:
  void update(std::optional<double>& ema, double loss) {
    ema = ema ? decay_ * *ema + (1.0 - decay_) * loss : loss;
  }

  double beta_;
  double decay_;
  std::optional<double> ema_new_;
  std::optional<double> ema_exist_;
};

/// First `warmup` iterations always generate; afterwards Bernoulli(p).
inline ReuseDecision decide(double p_reuse, std::uint64_t iteration, Engine& rng,
                            std::uint64_t warmup = kReuseWarmup) {
  if (iteration < warmup) return ReuseDecision::Generate;
  return uniform01(rng) < p_reuse ? ReuseDecision::Reuse : ReuseDecision::Generate;
}

inline ReuseDecision decide(const ReuseTracker& tracker, std::uint64_t iteration, Engine& rng,
                            std::uint64_t warmup = kReuseWarmup) {
  if (iteration < warmup) return ReuseDecision::Generate;
  return decide(tracker.probability_or_default(), iteration, rng, warmup);
}

class SampleStore {
 public:
  explicit SampleStore(std::size_t capacity = kDefaultStoreCapacity) : capacity_(capacity) {
    if (capacity == 0) throw ConfigError("sample store capacity must be positive");
  }

  std::size_t size() const { return entries_.size(); }
  std::size_t capacity() const { return capacity_; }
  bool empty() const { return entries_.empty(); }
  const SamplePtr& sample(std::size_t i) const { return entries_.at(i).sample; }
  double weight(std::size_t i) const { return entries_.at(i).weight; }

  /// Inserts a sample, evicting the lowest-weight entry (oldest on ties)
  /// when full. Returns the index of the new entry.
  std::size_t insert(SamplePtr s, double weight) {
    if (!(weight >= 0.0) || !std::isfinite(weight)) throw RangeError("sample weight must be finite and >= 0");
    Entry e{std::move(s), weight, next_id_++};
    if (entries_.size() < capacity_) {
      entries_.push_back(std::move(e));
      return entries_.size() - 1;
    }
    std::size_t victim = 0;
    for (std::size_t i = 1; i < entries_.size(); ++i) {
      const auto& a = entries_[i];
      const auto& b = entries_[victim];
      if (a.weight < b.weight || (a.weight == b.weight && a.id < b.id)) victim = i;
    }
    entries_[victim] = std::move(e);
    return victim;
  }

  void set_weight(std::size_t i, double weight) {
    if (!(weight >= 0.0) || !std::isfinite(weight)) throw RangeError("sample weight must be finite and >= 0");
    entries_.at(i).weight = weight;
  }

  /// n independent draws with probability proportional to weight; uniform
  /// when every weight is zero.
  std::vector<std::size_t> sample_replay(std::size_t n, Engine& rng) const {
    if (entries_.empty()) throw Error("cannot replay from an empty sample store");
    std::vector<double> cdf(entries_.size());
    double total = 0;
    for (std::size_t i = 0; i < entries_.size(); ++i) cdf[i] = total += entries_[i].weight;
    std::vector<std::size_t> out(n);
    if (total <= 0.0) {
      std::uniform_int_distribution<std::size_t> pick(0, entries_.size() - 1);
      for (auto& i : out) i = pick(rng);
      return out;
    }
    for (auto& i : out) {
      const double r = uniform01(rng) * total;
      // First entry whose cumulative weight exceeds r; zero-weight entries
      // have an empty interval and are never chosen.
      i = static_cast<std::size_t>(std::upper_bound(cdf.begin(), cdf.end(), r) - cdf.begin());
      i = std::min(i, entries_.size() - 1);
    }
    return out;
  }

 private:
  struct Entry {
    SamplePtr sample;
    double weight = 0;
    std::uint64_t id = 0;
  };

  std::size_t capacity_;
  std::vector<Entry> entries_;
  std::uint64_t next_id_ = 0;
};

/// Stores a freshly rendered sample; only large-step samples move the
/// new-loss average.
inline std::size_t record_new(SampleStore& store, ReuseTracker& tracker, SamplePtr sample, double loss) {
  if (sample->large_step) tracker.observe_new(loss);
  return store.insert(std::move(sample), loss);
}

/// Updates a replayed sample's weight to its current loss.
inline void record_reused(SampleStore& store, ReuseTracker& tracker, std::size_t index, double loss) {
  store.set_weight(index, loss);
  if (store.sample(index)->large_step) tracker.observe_exist(loss);
}

// On-disk spill: per sample a radiance PFM, a G-buffer PFM stacking position,
// normal, albedo, wo, emission and (roughness, mask, 0) vertically, and one
// JSON index with metadata and weights.

namespace detail {

inline constexpr int kGBufferPlanes = 6;

inline ImageRGB stack_gbuffer(const GBufferPatch& g) {
  const int w = g.window.width, h = g.window.height;
  ImageRGB img(w, h * kGBufferPlanes);
  const std::vector<float>* planes[5] = {&g.position, &g.normal, &g.albedo, &g.wo, &g.emission};
  const std::size_t n = static_cast<std::size_t>(w) * h;
  for (int k = 0; k < 5; ++k) std::copy(planes[k]->begin(), planes[k]->end(), img.data.begin() + 3 * n * k);
  for (std::size_t i = 0; i < n; ++i) {
    img.data[3 * n * 5 + 3 * i] = g.roughness[i];
    img.data[3 * n * 5 + 3 * i + 1] = g.mask[i];
  }
  return img;
}

inline GBufferPatch unstack_gbuffer(const ImageRGB& img, const PatchWindow& window) {
  GBufferPatch g(window);
  const std::size_t n = static_cast<std::size_t>(window.width) * window.height;
  if (img.width != window.width || img.height != window.height * kGBufferPlanes)
    throw FormatError("stored G-buffer does not match its window");
  std::vector<float>* planes[5] = {&g.position, &g.normal, &g.albedo, &g.wo, &g.emission};
  for (int k = 0; k < 5; ++k)
    std::copy(img.data.begin() + 3 * n * k, img.data.begin() + 3 * n * (k + 1), planes[k]->begin());
  for (std::size_t i = 0; i < n; ++i) {
    g.roughness[i] = img.data[3 * n * 5 + 3 * i];
    g.mask[i] = img.data[3 * n * 5 + 3 * i + 1] > 0.5f ? 1 : 0;
  }
  return g;
}

}  // namespace detail

inline void save_store(const SampleStore& store, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  nlohmann::json index = nlohmann::json::array();
  for (std::size_t i = 0; i < store.size(); ++i) {
    const auto& s = *store.sample(i);
    const std::string stem = "sample_" + std::to_string(i);
    write_pfm((dir / (stem + "_radiance.pfm")).string(), radiance_image(s.target));
    write_pfm((dir / (stem + "_gbuffer.pfm")).string(), detail::stack_gbuffer(s.gbuffer));
    const auto& w = s.gbuffer.window;
    index.push_back({{"file", stem},
                     {"weight", store.weight(i)},
                     {"window", {w.image_res, w.x0, w.y0, w.width, w.height}},
                     {"spp", s.target.spp},
                     {"seed", s.target.seed},
                     {"scene", s.scene},
                     {"camera", s.camera},
                     {"state", s.state},
                     {"large_step", s.large_step},
                     {"created", s.created}});
  }
  detail::write_file((dir / "index.json").string(), index.dump(1));
}

inline SampleStore load_store(const std::filesystem::path& dir, std::size_t capacity = kDefaultStoreCapacity) {
  nlohmann::json index;
  try {
    index = nlohmann::json::parse(detail::read_file((dir / "index.json").string()));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("sample store index: ") + e.what());
  }
  SampleStore store(capacity);
  for (const auto& e : index) {
    auto s = std::make_shared<TrainingSample>();
    const auto win = e.at("window").get<std::vector<int>>();
    if (win.size() != 5) throw FormatError("sample store index: window needs 5 integers");
    const PatchWindow w{win[0], win[1], win[2], win[3], win[4]};
    const std::string stem = e.at("file").get<std::string>();
    s->gbuffer = detail::unstack_gbuffer(read_pfm((dir / (stem + "_gbuffer.pfm")).string()), w);
    const ImageRGB rad = read_pfm((dir / (stem + "_radiance.pfm")).string());
    if (rad.width != w.width || rad.height != w.height) throw FormatError("stored radiance does not match its window");
    s->target = RadiancePatch{w, e.at("spp").get<int>(), e.at("seed").get<std::uint64_t>(), rad.data};
    s->scene = e.at("scene").get<std::vector<double>>();
    s->camera = e.at("camera").get<CameraVector>();
    s->state = e.at("state").get<std::vector<double>>();
    s->large_step = e.at("large_step").get<bool>();
    s->created = e.at("created").get<std::uint64_t>();
    store.insert(std::move(s), e.at("weight").get<double>());
  }
  return store;
}

}  // namespace glint
