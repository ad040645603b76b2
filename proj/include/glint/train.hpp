// Interleaved training: chains pick patches, the tracer renders them, the
// generator takes one Adam step per iteration on fresh or replayed samples.
#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <memory>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "glint/core.hpp"
#include "glint/eval.hpp"
#include "glint/explore.hpp"
#include "glint/infer.hpp"
#include "glint/net/adam.hpp"
#include "glint/net/batch.hpp"
#include "glint/net/checkpoint.hpp"
#include "glint/net/generator.hpp"
#include "glint/net/loss.hpp"
#include "glint/parallel.hpp"
#include "glint/reuse.hpp"
#include "glint/rng.hpp"
#include "glint/scene.hpp"
#include "glint/tracer.hpp"

namespace glint {

enum class SamplerMode { Mcmc, Uniform };
enum class ResolutionMode { Adaptive, Fixed };

inline std::string to_string(SamplerMode m) { return m == SamplerMode::Uniform ? "uniform" : "mcmc"; }
inline SamplerMode parse_sampler(const std::string& s) {
  if (s == "mcmc") return SamplerMode::Mcmc;
  if (s == "uniform") return SamplerMode::Uniform;
  throw ConfigError("mode must be mcmc or uniform (got '" + s + "')");
}
inline std::string to_string(ResolutionMode m) { return m == ResolutionMode::Fixed ? "fixed" : "adaptive"; }
inline ResolutionMode parse_resolution_mode(const std::string& s) {
  if (s == "adaptive") return ResolutionMode::Adaptive;
  if (s == "fixed") return ResolutionMode::Fixed;
  throw ConfigError("resolution must be adaptive or fixed (got '" + s + "')");
}

struct ResolutionSchedule {
  int r0 = 64;
  int increment = 4;
  std::uint64_t period = 200;
  int r_max = 128;

  static ResolutionSchedule paper() { return {128, 4, 2000, 600}; }
  static ResolutionSchedule desk() { return {64, 4, 200, 128}; }

  int at(std::uint64_t iteration) const {
    const std::uint64_t steps = iteration / period;
    const std::uint64_t grown = static_cast<std::uint64_t>(r0) + static_cast<std::uint64_t>(increment) * steps;
    return static_cast<int>(std::min<std::uint64_t>(grown, static_cast<std::uint64_t>(r_max)));
  }

  void validate(int patch) const {
    if (r0 < patch) throw ConfigError("schedule R0 must be at least the patch size");
    if (r_max < r0) throw ConfigError("schedule R_max must be at least R0");
    if (period < 1) throw ConfigError("schedule period must be >= 1");
    if (increment < 0) throw ConfigError("schedule increment must be >= 0");
  }
};

/// Training spp per base scene: the mirror path is deterministic, caustics are
/// noisy.
inline int default_training_spp(const SceneSpace& space) {
  if (space.base_scene == "mirror_room") return 64;
  if (space.base_scene == "caustic_box") return 512;
  return 200;
}

struct TrainConfig {
  std::string scene = "MirrorRoom";
  std::uint64_t iterations = 1000;
  int chains = 16;
  int patch = kDefaultPatchSize;
  ResolutionSchedule schedule = ResolutionSchedule::desk();
  ResolutionMode resolution_mode = ResolutionMode::Adaptive;
  SamplerMode sampler = SamplerMode::Mcmc;
  Acceptance acceptance = Acceptance::Greedy;
  TargetMode target = TargetMode::LossTimesStepNorm;
  ProposalConfig proposal;
  bool reuse = true;
  std::size_t store_capacity = kDefaultStoreCapacity;
  int spp = 0;  // 0: per-scene default
  std::uint64_t seed = 1;
  int hidden = 64;
  int layers = 4;
  double lr = 1e-4;
  std::uint64_t validation_every = 250;
  int validation_frames = 16;
  int validation_resolution = 64;
  int validation_spp = 256;
  std::string validation_selection = "auto";
  std::string validation_cache;  // empty: <out>/validation
  std::uint64_t checkpoint_every = 0;  // 0: final checkpoint only
  std::string out_dir;

  /// Settings after applying the sampler mode: the uniform baseline is
  /// large steps only, always accepted, at the fixed resolution R0.
  TrainConfig effective() const {
    TrainConfig c = *this;
    if (c.sampler == SamplerMode::Uniform) {
      c.proposal.p_large = 1.0;
      c.acceptance = Acceptance::Always;
      c.resolution_mode = ResolutionMode::Fixed;
    }
    return c;
  }

  void validate() const {
    if (iterations < 1) throw ConfigError("iterations must be >= 1");
    if (chains < 1) throw ConfigError("chains must be >= 1");
    if (patch < 1) throw ConfigError("patch size must be >= 1");
    if (spp < 0) throw ConfigError("spp must be >= 1 (or 0 for the scene default)");
    if (hidden < 1 || layers < 2) throw ConfigError("network needs hidden >= 1 and layers >= 2");
    if (!(lr > 0)) throw ConfigError("learning rate must be positive");
    if (validation_frames < 0 || validation_resolution < 1 || validation_spp < 1)
      throw ConfigError("invalid validation settings");
    schedule.validate(patch);
    proposal.validate();
  }

  int resolution(std::uint64_t iteration) const {
    return resolution_mode == ResolutionMode::Fixed ? schedule.r0 : schedule.at(iteration);
  }
};

inline nlohmann::json to_json(const TrainConfig& c) {
  return {{"scene", c.scene},
          {"iterations", c.iterations},
          {"chains", c.chains},
          {"patch", c.patch},
          {"schedule", {{"r0", c.schedule.r0}, {"increment", c.schedule.increment},
                        {"period", c.schedule.period}, {"r_max", c.schedule.r_max}}},
          {"resolution_mode", to_string(c.resolution_mode)},
          {"sampler", to_string(c.sampler)},
          {"acceptance", to_string(c.acceptance)},
          {"target", to_string(c.target)},
          {"p_large", c.proposal.p_large},
          {"sigma", c.proposal.sigma},
          {"reuse", c.reuse},
          {"store_capacity", c.store_capacity},
          {"spp", c.spp},
          {"seed", c.seed},
          {"hidden", c.hidden},
          {"layers", c.layers},
          {"lr", c.lr},
          {"validation_every", c.validation_every},
          {"validation_frames", c.validation_frames},
          {"validation_resolution", c.validation_resolution},
          {"validation_spp", c.validation_spp},
          {"validation_selection", c.validation_selection},
          {"validation_cache", c.validation_cache},
          {"checkpoint_every", c.checkpoint_every},
          {"out_dir", c.out_dir}};
}

inline TrainConfig train_config_from_json(const nlohmann::json& j) {
  TrainConfig c;
  try {
    c.scene = j.at("scene").get<std::string>();
    c.iterations = j.at("iterations").get<std::uint64_t>();
    c.chains = j.at("chains").get<int>();
    c.patch = j.at("patch").get<int>();
    const auto& s = j.at("schedule");
    c.schedule = {s.at("r0").get<int>(), s.at("increment").get<int>(), s.at("period").get<std::uint64_t>(),
                  s.at("r_max").get<int>()};
    c.resolution_mode = parse_resolution_mode(j.at("resolution_mode").get<std::string>());
    c.sampler = parse_sampler(j.at("sampler").get<std::string>());
    c.acceptance = parse_acceptance(j.at("acceptance").get<std::string>());
    c.target = parse_target(j.at("target").get<std::string>());
    c.proposal.p_large = j.at("p_large").get<double>();
    c.proposal.sigma = j.at("sigma").get<double>();
    c.reuse = j.at("reuse").get<bool>();
    c.store_capacity = j.at("store_capacity").get<std::size_t>();
    c.spp = j.at("spp").get<int>();
    c.seed = j.at("seed").get<std::uint64_t>();
    c.hidden = j.at("hidden").get<int>();
    c.layers = j.at("layers").get<int>();
    c.lr = j.at("lr").get<double>();
    c.validation_every = j.at("validation_every").get<std::uint64_t>();
    c.validation_frames = j.at("validation_frames").get<int>();
    c.validation_resolution = j.at("validation_resolution").get<int>();
    c.validation_spp = j.at("validation_spp").get<int>();
    c.validation_selection = j.at("validation_selection").get<std::string>();
    c.validation_cache = j.at("validation_cache").get<std::string>();
    c.checkpoint_every = j.at("checkpoint_every").get<std::uint64_t>();
    c.out_dir = j.at("out_dir").get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("run config: ") + e.what());
  }
  return c;
}

struct LogRow {
  std::uint64_t iteration = 0;
  double wall_seconds = 0;
  double total = 0, l1 = 0, dssim = 0;
  double p_reuse = 0;
  ReuseDecision decision = ReuseDecision::Generate;
  int resolution = 0;
  double f_mean = 0, f_max = 0;
  int accepted = 0;
  std::optional<Metrics> validation;
};

inline std::string log_header() {
  return "iteration,wall_time,total,l1,dssim,p_s,decision,resolution,f_mean,f_max,accepted,"
         "val_loss,val_mape,val_mae,val_dssim";
}

/// One CSV line; wall time is left out when `with_time` is false so runs can
/// be compared for determinism.
inline std::string log_line(const LogRow& r, bool with_time = true) {
  std::ostringstream out;
  out << std::setprecision(9) << r.iteration << ',';
  if (with_time) out << r.wall_seconds;
  out << ',' << r.total << ',' << r.l1 << ',' << r.dssim << ',' << r.p_reuse << ',' << to_string(r.decision) << ','
      << r.resolution << ',' << r.f_mean << ',' << r.f_max << ',' << r.accepted << ',';
  if (r.validation)
    out << r.validation->loss << ',' << r.validation->mape << ',' << r.validation->mae << ',' << r.validation->dssim;
  else
    out << ",,,";
  return out.str();
}

/// Per-sample losses and gradients of the generator on a set of samples.
struct SampleEvaluation {
  std::vector<PatchLoss> loss;
  Eigen::MatrixXf grads;   // one column per sample (per-sample gradients)
  Eigen::VectorXf mean_grad;  // used when per-sample gradients were not requested
};

inline SampleEvaluation evaluate_samples(const PixelGenerator<float>& net, const std::vector<SamplePtr>& samples,
                                         double max_val, bool per_sample) {
  std::vector<PatchInputs> inputs;
  std::vector<const RadiancePatch*> targets;
  std::vector<PatchExtent> extents;
  Eigen::Index col = 0;
  for (const auto& s : samples) {
    inputs.push_back({&s->gbuffer, s->scene, s->camera});
    targets.push_back(&s->target);
    extents.push_back({col, s->gbuffer.window.width, s->gbuffer.window.height});
    col += s->gbuffer.window.pixel_count();
  }
  const auto batch = assemble_batch<float>(inputs);
  const auto target = assemble_targets<float>(targets);
  PixelGenerator<float>::Cache cache;
  const auto pred = net.forward(batch, &cache);
  Eigen::MatrixXf d_patch;
  const LossValue lv = batch_loss<float>(pred, target, extents, max_val, &d_patch);
  SampleEvaluation out;
  out.loss = lv.per_patch;
  if (per_sample) {
    std::vector<ColumnRange> groups;
    for (const auto& e : extents) groups.push_back(e.columns());
    out.grads = net.backward(cache, d_patch, groups);
  } else {
    out.mean_grad = net.backward(cache, Eigen::MatrixXf(d_patch / static_cast<float>(samples.size())));
  }
  return out;
}

class Trainer {
 public:
  explicit Trainer(TrainConfig config)
      : requested_(config),
        cfg_(config.effective()),
        space_(resolve_space(cfg_.scene)),
        layout_(space_),
        net_({static_cast<int>(space_.dim()), cfg_.hidden, cfg_.layers}, hash_keys(cfg_.seed, 3)),
        adam_(net_.parameter_count(), AdamConfig{cfg_.lr}),
        store_(cfg_.store_capacity),
        proposal_rng_(hash_keys(cfg_.seed, 1)),
        reuse_rng_(hash_keys(cfg_.seed, 2)) {
    if (cfg_.spp == 0) cfg_.spp = default_training_spp(space_);
    cfg_.validate();
    chains_ = init_chains(layout_.dims(), static_cast<std::size_t>(cfg_.chains), proposal_rng_);
    incumbents_.resize(chains_.size());
  }

  const TrainConfig& config() const { return cfg_; }
  const SceneSpace& space() const { return space_; }
  const PixelGenerator<float>& net() const { return net_; }
  const AdamState<float>& adam() const { return adam_; }
  const std::vector<ChainState>& chains() const { return chains_; }
  const SampleStore& store() const { return store_; }
  const ReuseTracker& tracker() const { return tracker_; }
  const std::vector<LogRow>& log() const { return log_; }
  std::uint64_t iteration() const { return iteration_; }

  /// Opens the run directory: config.json, log.csv, chains.csv.
  void open_run_dir() {
    if (cfg_.out_dir.empty()) return;
    const std::filesystem::path dir(cfg_.out_dir);
    std::filesystem::create_directories(dir / "checkpoints");
    auto j = to_json(requested_);
    j["effective"] = to_json(cfg_);
    detail::write_file((dir / "config.json").string(), j.dump(2) + "\n");
    log_file_.open(dir / "log.csv");
    if (!log_file_) throw FormatError("cannot write " + (dir / "log.csv").string());
    log_file_ << log_header() << '\n';
    chain_log_ = ChainLog((dir / "chains.csv").string(), layout_.dims());
  }

  void prepare_validation() {
    if (cfg_.validation_frames == 0 || validation_) return;
    std::filesystem::path cache = cfg_.validation_cache;
    if (cache.empty()) cache = cfg_.out_dir.empty() ? std::filesystem::path() : std::filesystem::path(cfg_.out_dir) / "validation";
    if (cache.empty()) {
      validation_ = build_validation(cfg_.scene, space_, cfg_.validation_frames, cfg_.validation_resolution,
                                     cfg_.validation_spp, cfg_.seed, cfg_.validation_selection);
    } else {
      validation_ = cached_validation(cache, cfg_.scene, space_, cfg_.validation_frames, cfg_.validation_resolution,
                                      cfg_.validation_spp, cfg_.seed, cfg_.validation_selection);
    }
  }

  const std::optional<ValidationSet>& validation_set() const { return validation_; }

  Metrics validate() {
    prepare_validation();
    return evaluate_net(net_, space_, *validation_).mean;
  }

  /// Runs every remaining iteration and writes the final checkpoint.
  void run(std::ostream* progress = nullptr) {
    open_run_dir();
    if (cfg_.validation_every > 0) prepare_validation();
    start_ = std::chrono::steady_clock::now();
    while (iteration_ < cfg_.iterations) {
      const LogRow& row = step();
      if (progress && (row.validation || iteration_ % 100 == 0)) {
        *progress << "iter " << row.iteration << "  R " << row.resolution << "  loss " << row.total;
        if (row.validation) *progress << "  val " << row.validation->loss;
        *progress << '\n';
      }
    }
    finish();
  }

  /// One training iteration.
  const LogRow& step() {
    if (iteration_ == 0 && start_ == std::chrono::steady_clock::time_point{}) start_ = std::chrono::steady_clock::now();
    LogRow row;
    row.iteration = iteration_;
    row.resolution = cfg_.resolution(iteration_);
    row.p_reuse = cfg_.reuse ? tracker_.probability_or_default() : 0.0;
    row.decision = cfg_.reuse && !store_.empty() ? decide(tracker_, iteration_, reuse_rng_) : ReuseDecision::Generate;

    if (row.decision == ReuseDecision::Generate)
      generate_step(row);
    else
      reuse_step(row);

    ++iteration_;
    const bool validate_now = cfg_.validation_every > 0 && cfg_.validation_frames > 0 &&
                              (iteration_ % cfg_.validation_every == 0 || iteration_ == cfg_.iterations);
    if (validate_now) row.validation = validate();
    row.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    if (cfg_.checkpoint_every > 0 && iteration_ % cfg_.checkpoint_every == 0) write_checkpoint();
    log_.push_back(row);
    if (log_file_.is_open()) {
      log_file_ << log_line(row) << '\n';
      if (iteration_ % 50 == 0) log_file_.flush();
    }
    return log_.back();
  }

  void finish() {
    if (cfg_.out_dir.empty()) return;
    write_checkpoint();
    log_file_.flush();
    chain_log_.flush();
    if (validation_) {
      std::vector<ImageRGB> preds;
      evaluate_net(net_, space_, *validation_, &preds);
      const auto dir = std::filesystem::path(cfg_.out_dir) / "validation";
      std::filesystem::create_directories(dir);
      for (std::size_t k = 0; k < preds.size(); ++k) {
        std::ostringstream name;
        name << "frame_" << std::setw(2) << std::setfill('0') << k << "_pred.pfm";
        write_pfm((dir / name.str()).string(), preds[k]);
      }
      if (!cfg_.validation_cache.empty()) save_validation(*validation_, dir);
    }
  }

  std::filesystem::path checkpoint_path() const {
    return std::filesystem::path(cfg_.out_dir) / "checkpoints" / ("ckpt_" + std::to_string(iteration_) + ".bin");
  }

  void write_checkpoint() const {
    if (cfg_.out_dir.empty()) return;
    save_checkpoint(checkpoint_path().string(), net_, adam_);
  }

 private:
  SamplePtr render_sample(const std::vector<double>& u, StepKind kind, int resolution, std::size_t chain) const {
    const PatchRequest req = request_for(space_, u, resolution, cfg_.patch);
    const SceneSetup setup = make_setup(space_, req.scene, req.camera);
    const SceneGeometry geometry(setup.instance);
    auto s = std::make_shared<TrainingSample>();
    s->gbuffer = gbuffer_patch(geometry, req.window);
    s->target = trace_patch(geometry, req.window, cfg_.spp, hash_keys(cfg_.seed, 0x72656eULL, iteration_, chain));
    s->scene = setup.scene;
    s->camera = setup.camera;
    s->state = u;
    s->large_step = kind == StepKind::Large;
    s->created = iteration_;
    return s;
  }

  double target_value(const PatchLoss& loss, const Eigen::Ref<const Eigen::VectorXf>& grad) const {
    if (cfg_.target == TargetMode::LossOnly) return loss.total();
    return loss.total() * step_norm_for_patch<float>(adam_, std::span<const float>(grad.data(), grad.size()));
  }

  void apply_update(const Eigen::VectorXf& grad) {
    adam_step<float>(adam_, net_.parameters(), std::span<const float>(grad.data(), grad.size()));
    for (float w : net_.parameters())
      if (!std::isfinite(w))
        throw DivergenceError("non-finite weight after iteration " + std::to_string(iteration_));
  }

  void generate_step(LogRow& row) {
    const std::size_t n = chains_.size();
    std::vector<Proposal> proposals(n);
    for (std::size_t c = 0; c < n; ++c)
      proposals[c] = chains_[c].evaluated ? propose(chains_[c], cfg_.proposal, proposal_rng_)
                                          : Proposal{chains_[c].u, StepKind::Initial};
    std::vector<SamplePtr> candidates(n);
    parallel_for(n, [&](std::size_t c) {
      candidates[c] = render_sample(proposals[c].u, proposals[c].kind, row.resolution, c);
    });
    for (const auto& s : candidates) {
      const Eigen::Map<const Eigen::MatrixXf> t(s->target.rgb.data(), 3, s->gbuffer.window.pixel_count());
      ssim_range_.observe(t);
    }

    // Candidates first, then incumbents that need a fresh f.
    std::vector<SamplePtr> evaluated = candidates;
    std::vector<std::optional<std::size_t>> incumbent_col(n);
    if (cfg_.acceptance != Acceptance::Always)
      for (std::size_t c = 0; c < n; ++c)
        if (proposals[c].kind != StepKind::Initial) {
          incumbent_col[c] = evaluated.size();
          evaluated.push_back(incumbents_[c]);
        }
    const SampleEvaluation ev = evaluate_samples(net_, evaluated, ssim_range_.max_val(), true);

    Eigen::VectorXf grad = Eigen::VectorXf::Zero(static_cast<Eigen::Index>(net_.parameter_count()));
    double f_sum = 0, f_max = 0;
    for (std::size_t c = 0; c < n; ++c) {
      const double f_new = target_value(ev.loss[c], ev.grads.col(static_cast<Eigen::Index>(c)));
      bool take = true;
      if (proposals[c].kind != StepKind::Initial) {
        double f_cur = chains_[c].f;
        if (incumbent_col[c]) f_cur = target_value(ev.loss[*incumbent_col[c]], ev.grads.col(*incumbent_col[c]));
        take = accept(f_cur, f_new, cfg_.acceptance, proposal_rng_);
        if (!take) chains_[c].f = f_cur;
      }
      const std::size_t used = take ? c : *incumbent_col[c];
      if (take) {
        chains_[c].u = proposals[c].u;
        chains_[c].f = f_new;
        chains_[c].evaluated = true;
        incumbents_[c] = candidates[c];
        ++row.accepted;
      }
      grad += ev.grads.col(static_cast<Eigen::Index>(used));
      row.total += ev.loss[used].total();
      row.l1 += ev.loss[used].l1;
      row.dssim += ev.loss[used].dssim;
      f_sum += chains_[c].f;
      f_max = std::max(f_max, chains_[c].f);
      chain_log_.row(iteration_, c, proposals[c].kind, take, chains_[c].f, chains_[c].u);
    }
    const double inv = 1.0 / static_cast<double>(n);
    grad *= static_cast<float>(inv);
    row.total *= inv;
    row.l1 *= inv;
    row.dssim *= inv;
    row.f_mean = f_sum * inv;
    row.f_max = f_max;
    apply_update(grad);
    for (std::size_t c = 0; c < n; ++c) record_new(store_, tracker_, candidates[c], ev.loss[c].total());
  }

  void reuse_step(LogRow& row) {
    const auto picks = store_.sample_replay(chains_.size(), reuse_rng_);
    std::vector<SamplePtr> batch;
    for (auto i : picks) batch.push_back(store_.sample(i));
    const SampleEvaluation ev = evaluate_samples(net_, batch, ssim_range_.max_val(), false);
    const double inv = 1.0 / static_cast<double>(batch.size());
    for (std::size_t k = 0; k < batch.size(); ++k) {
      row.total += ev.loss[k].total() * inv;
      row.l1 += ev.loss[k].l1 * inv;
      row.dssim += ev.loss[k].dssim * inv;
    }
    double f_sum = 0, f_max = 0;
    for (const auto& c : chains_) {
      f_sum += c.f;
      f_max = std::max(f_max, c.f);
    }
    row.f_mean = f_sum / static_cast<double>(chains_.size());
    row.f_max = f_max;
    apply_update(ev.mean_grad);
    for (std::size_t k = 0; k < picks.size(); ++k) record_reused(store_, tracker_, picks[k], ev.loss[k].total());
  }

  TrainConfig requested_;
  TrainConfig cfg_;
  SceneSpace space_;
  StateLayout layout_;
  PixelGenerator<float> net_;
  AdamState<float> adam_;
  SampleStore store_;
  ReuseTracker tracker_;
  SsimRange ssim_range_;
  Engine proposal_rng_;
  Engine reuse_rng_;
  std::vector<ChainState> chains_;
  std::vector<SamplePtr> incumbents_;
  std::optional<ValidationSet> validation_;
  std::vector<LogRow> log_;
  std::ofstream log_file_;
  ChainLog chain_log_;
  std::uint64_t iteration_ = 0;
  std::chrono::steady_clock::time_point start_{};
};

/// Log rows without wall time, for determinism comparisons.
inline std::vector<std::string> log_signature(const std::vector<LogRow>& rows) {
  std::vector<std::string> out;
  out.reserve(rows.size());
  for (const auto& r : rows) out.push_back(log_line(r, false));
  return out;
}

}  // namespace glint
