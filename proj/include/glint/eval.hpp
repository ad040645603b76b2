// Image metrics, validation sets, chain histograms and run comparisons.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>
#include <vector>

#include <boost/math/distributions/chi_squared.hpp>
#include <json.hpp>

#include "glint/core.hpp"
#include "glint/explore.hpp"
#include "glint/image.hpp"
#include "glint/infer.hpp"
#include "glint/net/checkpoint.hpp"
#include "glint/net/loss.hpp"
#include "glint/rng.hpp"
#include "glint/scene.hpp"
#include "glint/tracer.hpp"

namespace glint {

inline constexpr double kMapeEpsilon = 0.01;

inline void check_same_shape(const ImageRGB& a, const ImageRGB& b) {
  if (a.width != b.width || a.height != b.height) throw DimensionError("images differ in size");
}

inline double mape(const ImageRGB& pred, const ImageRGB& ref, double eps = kMapeEpsilon) {
  check_same_shape(pred, ref);
  double sum = 0;
  for (std::size_t i = 0; i < ref.data.size(); ++i)
    sum += std::abs(double(pred.data[i]) - double(ref.data[i])) / (std::abs(double(ref.data[i])) + eps);
  return ref.data.empty() ? 0.0 : sum / static_cast<double>(ref.data.size());
}

inline double mae(const ImageRGB& pred, const ImageRGB& ref) {
  check_same_shape(pred, ref);
  double sum = 0;
  for (std::size_t i = 0; i < ref.data.size(); ++i) sum += std::abs(double(pred.data[i]) - double(ref.data[i]));
  return ref.data.empty() ? 0.0 : sum / static_cast<double>(ref.data.size());
}

/// Max luminance of `ref`, clamped to at least 1 (the SSIM dynamic range).
inline double luminance_range(const ImageRGB& ref) {
  double m = 1.0;
  for (std::size_t i = 0; i + 2 < ref.data.size(); i += 3)
    m = std::max(m, 0.2126 * ref.data[i] + 0.7152 * ref.data[i + 1] + 0.0722 * ref.data[i + 2]);
  return m;
}

inline PatchLoss image_loss(const ImageRGB& pred, const ImageRGB& ref, double max_val) {
  check_same_shape(pred, ref);
  return patch_loss(pred.data.data(), ref.data.data(), pred.width, pred.height, max_val);
}

inline double dssim(const ImageRGB& pred, const ImageRGB& ref) {
  return image_loss(pred, ref, luminance_range(ref)).dssim;
}

struct Metrics {
  double mape = 0, mae = 0, dssim = 0, loss = 0;

  Metrics& operator+=(const Metrics& o) {
    mape += o.mape;
    mae += o.mae;
    dssim += o.dssim;
    loss += o.loss;
    return *this;
  }
  Metrics operator/(double k) const { return {mape / k, mae / k, dssim / k, loss / k}; }
};

inline Metrics measure(const ImageRGB& pred, const ImageRGB& ref) {
  const PatchLoss l = image_loss(pred, ref, luminance_range(ref));
  return {mape(pred, ref), l.l1, l.dssim, l.total()};
}

// ---------------------------------------------------------------------------
// Mirror visibility
// ---------------------------------------------------------------------------

/// Pixels of an R x R view where the primary ray hits `mirror` and the
/// mirrored ray then hits `object`.
inline int reflection_pixels(const SceneInstance& inst, int resolution, std::string_view mirror = "mirror",
                             std::string_view object = "sphere") {
  const SceneGeometry g(inst);
  int mirror_id = -1, object_id = -1;
  for (std::size_t i = 0; i < inst.primitives.size(); ++i) {
    if (inst.primitives[i].name == mirror) mirror_id = static_cast<int>(i);
    if (inst.primitives[i].name == object) object_id = static_cast<int>(i);
  }
  if (mirror_id < 0 || object_id < 0) throw ConfigError("scene lacks the mirror or the reflected object");
  int count = 0;
  for (int y = 0; y < resolution; ++y)
    for (int x = 0; x < resolution; ++x) {
      const Ray r = camera_ray(inst.camera, resolution, x, y);
      const auto h = g.intersect(r);
      if (!h || h->primitive != mirror_id) continue;
      Vec3 n = h->normal;
      if (dot(n, r.dir) > 0) n = -n;
      const Vec3 d = reflect(-r.dir, n);
      const auto h2 = g.intersect({detail::offset_origin(h->position, n, d), d});
      if (h2 && h2->primitive == object_id) ++count;
    }
  return count;
}

/// Bins of normalized parameter `dim` for which the object shows up in the
/// mirror for at least one sampled value of the other parameters.
inline std::vector<bool> mirror_visible_band(const SceneSpace& space, std::size_t dim, int bins, int resolution = 64,
                                             int other_samples = 9) {
  if (dim >= space.dim()) throw RangeError("band dimension out of range");
  std::vector<bool> band(static_cast<std::size_t>(bins), false);
  std::vector<double> v(space.dim(), 0.5);
  const int others = space.dim() > 1 ? other_samples : 1;
  for (int b = 0; b < bins; ++b) {
    v[dim] = (b + 0.5) / bins;
    for (int k = 0; k < others && !band[b]; ++k) {
      for (std::size_t d = 0; d < v.size(); ++d)
        if (d != dim) v[d] = others > 1 ? double(k) / (others - 1) : 0.5;
      if (reflection_pixels(instantiate(space, SceneVector(v)), resolution) > 0) band[b] = true;
    }
  }
  return band;
}

inline double band_fraction(const std::vector<bool>& band) {
  if (band.empty()) return 0.0;
  return static_cast<double>(std::count(band.begin(), band.end(), true)) / static_cast<double>(band.size());
}

// ---------------------------------------------------------------------------
// Chain diagnostics
// ---------------------------------------------------------------------------

struct ChainRow {
  std::uint64_t iteration = 0;
  std::size_t chain = 0;
  std::string step;
  bool accepted = false;
  double f = 0;
  std::vector<double> state;
};

inline std::vector<ChainRow> read_chain_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open chain log '" + path + "'");
  std::string line;
  if (!std::getline(in, line) || line.rfind("iteration,chain,step,accepted,f", 0) != 0)
    throw FormatError("'" + path + "' is not a chain log (bad header)");
  std::vector<ChainRow> rows;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string cell;
    std::vector<std::string> cells;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (cells.size() < 5) throw FormatError("chain log line " + std::to_string(lineno) + " has too few fields");
    try {
      ChainRow r;
      r.iteration = std::stoull(cells[0]);
      r.chain = std::stoul(cells[1]);
      r.step = cells[2];
      r.accepted = cells[3] == "1";
      r.f = std::stod(cells[4]);
      for (std::size_t i = 5; i < cells.size(); ++i) r.state.push_back(std::stod(cells[i]));
      rows.push_back(std::move(r));
    } catch (const std::exception&) {
      throw FormatError("chain log line " + std::to_string(lineno) + " is malformed");
    }
  }
  return rows;
}

struct Histogram2D {
  int bins = 0;
  std::vector<std::uint64_t> counts;  // counts[j * bins + i]
  std::uint64_t total = 0;

  std::uint64_t at(int i, int j) const { return counts[static_cast<std::size_t>(j) * bins + i]; }
};

inline int unit_bin(double x, int bins) { return std::clamp(static_cast<int>(x * bins), 0, bins - 1); }

/// Counts chain states with iteration >= warmup on components (i, j).
inline Histogram2D chain_histogram(const std::vector<ChainRow>& rows, std::size_t i, std::size_t j, int bins,
                                   std::uint64_t warmup = 0) {
  if (bins < 1) throw RangeError("histogram needs at least one bin");
  Histogram2D h{bins, std::vector<std::uint64_t>(static_cast<std::size_t>(bins) * bins, 0), 0};
  for (const auto& r : rows) {
    if (r.iteration < warmup) continue;
    if (i >= r.state.size() || j >= r.state.size()) throw RangeError("histogram dimension exceeds the chain state");
    ++h.counts[static_cast<std::size_t>(unit_bin(r.state[j], bins)) * bins + unit_bin(r.state[i], bins)];
    ++h.total;
  }
  return h;
}

/// Histogram as a PFM grid (counts replicated in all channels, row 0 = j bin 0).
inline ImageRGB histogram_image(const Histogram2D& h) {
  ImageRGB img(h.bins, h.bins);
  for (int j = 0; j < h.bins; ++j)
    for (int i = 0; i < h.bins; ++i)
      for (int c = 0; c < 3; ++c) img.at(i, j, c) = static_cast<float>(h.at(i, j));
  return img;
}

/// p-value of Pearson's chi-square test against a uniform histogram.
inline double uniformity_p_value(const Histogram2D& h) {
  const double cells = static_cast<double>(h.counts.size());
  const double expected = static_cast<double>(h.total) / cells;
  if (expected <= 0) return 0.0;
  double chi2 = 0;
  for (auto c : h.counts) chi2 += (c - expected) * (c - expected) / expected;
  boost::math::chi_squared dist(cells - 1);
  return boost::math::cdf(boost::math::complement(dist, chi2));
}

/// Fraction of post-warmup states whose component `dim` falls in a band bin.
inline double band_mass(const std::vector<ChainRow>& rows, std::size_t dim, const std::vector<bool>& band,
                        std::uint64_t warmup = 0) {
  std::uint64_t in = 0, total = 0;
  const int bins = static_cast<int>(band.size());
  for (const auto& r : rows) {
    if (r.iteration < warmup) continue;
    ++total;
    if (band[static_cast<std::size_t>(unit_bin(r.state.at(dim), bins))]) ++in;
  }
  return total ? static_cast<double>(in) / static_cast<double>(total) : 0.0;
}

// ---------------------------------------------------------------------------
// Validation sets
// ---------------------------------------------------------------------------

struct ValidationFrame {
  std::vector<double> scene;
  CameraVector camera{};
  ImageRGB reference;
};

struct ValidationSet {
  std::string scene;  // builtin name or space path
  int resolution = 64;
  int spp = 256;
  std::uint64_t seed = 0;
  std::string selection = "uniform";
  std::vector<ValidationFrame> frames;
};

/// "auto" picks mirror-visible frames for the mirror room, uniform otherwise.
inline std::string resolve_selection(const std::string& selection, const SceneSpace& space) {
  if (selection == "auto") return space.base_scene == "mirror_room" ? "mirror" : "uniform";
  if (selection != "uniform" && selection != "mirror")
    throw ConfigError("validation selection must be auto, uniform or mirror (got '" + selection + "')");
  return selection;
}

/// Draws frames (uniform, or rejection-sampled until the mirrored object
/// covers at least 2% of the view) and renders their references.
inline ValidationSet build_validation(const std::string& scene, const SceneSpace& space, int count, int resolution,
                                      int spp, std::uint64_t seed, const std::string& selection) {
  ValidationSet vs{scene, resolution, spp, seed, resolve_selection(selection, space), {}};
  Engine rng(hash_keys(seed, 0x7661ULL));
  const int min_pixels = std::max(1, resolution * resolution / 50);
  int attempts = 0;
  while (static_cast<int>(vs.frames.size()) < count) {
    if (++attempts > 100000) throw ConfigError("could not find enough validation frames");
    ValidationFrame f;
    f.scene = uniform_state(space.dim(), rng);
    const auto cam_u = uniform_state(space.camera_dims(), rng);
    f.camera = space.camera.variable ? camera_from_unit(space, cam_u.data()) : space.default_camera();
    const SceneSetup setup = make_setup(space, f.scene, f.camera);
    if (vs.selection == "mirror" && reflection_pixels(setup.instance, resolution) < min_pixels) continue;
    f.camera = setup.camera;
    vs.frames.push_back(std::move(f));
  }
  for (std::size_t k = 0; k < vs.frames.size(); ++k) {
    auto& f = vs.frames[k];
    f.reference = render_image(make_setup(space, f.scene, f.camera).instance, resolution, spp,
                               hash_keys(seed, 0x7672ULL, k))
                      .radiance;
  }
  return vs;
}

inline nlohmann::json validation_header(const ValidationSet& vs) {
  nlohmann::json frames = nlohmann::json::array();
  for (const auto& f : vs.frames) frames.push_back({{"scene", f.scene}, {"camera", f.camera}});
  return {{"scene", vs.scene},         {"resolution", vs.resolution}, {"spp", vs.spp},
          {"seed", vs.seed},           {"selection", vs.selection},   {"count", vs.frames.size()},
          {"frames", frames}};
}

inline void save_validation(const ValidationSet& vs, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  for (std::size_t k = 0; k < vs.frames.size(); ++k) {
    std::ostringstream name;
    name << "frame_" << std::setw(2) << std::setfill('0') << k << "_ref.pfm";
    write_pfm((dir / name.str()).string(), vs.frames[k].reference);
  }
  detail::write_file((dir / "frames.json").string(), validation_header(vs).dump(1));
}

inline ValidationSet load_validation(const std::filesystem::path& dir) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(detail::read_file((dir / "frames.json").string()));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("validation set: " + std::string(e.what()));
  }
  ValidationSet vs;
  try {
    vs.scene = j.at("scene").get<std::string>();
    vs.resolution = j.at("resolution").get<int>();
    vs.spp = j.at("spp").get<int>();
    vs.seed = j.at("seed").get<std::uint64_t>();
    vs.selection = j.at("selection").get<std::string>();
    for (const auto& f : j.at("frames"))
      vs.frames.push_back({f.at("scene").get<std::vector<double>>(), f.at("camera").get<CameraVector>(), {}});
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("validation set frames.json: " + std::string(e.what()));
  }
  for (std::size_t k = 0; k < vs.frames.size(); ++k) {
    std::ostringstream name;
    name << "frame_" << std::setw(2) << std::setfill('0') << k << "_ref.pfm";
    vs.frames[k].reference = read_pfm((dir / name.str()).string());
  }
  return vs;
}

/// Loads the set cached in `dir` when its header matches, otherwise builds
/// and saves it.
inline ValidationSet cached_validation(const std::filesystem::path& dir, const std::string& scene,
                                       const SceneSpace& space, int count, int resolution, int spp,
                                       std::uint64_t seed, const std::string& selection) {
  const std::string wanted = resolve_selection(selection, space);
  if (std::filesystem::exists(dir / "frames.json")) {
    try {
      ValidationSet vs = load_validation(dir);
      if (vs.scene == scene && vs.resolution == resolution && vs.spp == spp && vs.seed == seed &&
          vs.selection == wanted && static_cast<int>(vs.frames.size()) == count)
        return vs;
    } catch (const Error&) {
    }
  }
  ValidationSet vs = build_validation(scene, space, count, resolution, spp, seed, wanted);
  save_validation(vs, dir);
  return vs;
}

struct FrameMetrics {
  std::size_t frame = 0;
  Metrics metrics;
};

struct MetricReport {
  std::vector<FrameMetrics> frames;
  Metrics mean;
};

inline MetricReport evaluate_net(const PixelGenerator<float>& net, const SceneSpace& space, const ValidationSet& vs,
                                 std::vector<ImageRGB>* predictions = nullptr) {
  MetricReport r;
  if (predictions) predictions->clear();
  for (std::size_t k = 0; k < vs.frames.size(); ++k) {
    const auto& f = vs.frames[k];
    const ImageRGB pred = predict_image(net, make_setup(space, f.scene, f.camera), vs.resolution);
    r.frames.push_back({k, measure(pred, f.reference)});
    r.mean += r.frames.back().metrics;
    if (predictions) predictions->push_back(pred);
  }
  if (!vs.frames.empty()) r.mean = r.mean / static_cast<double>(vs.frames.size());
  return r;
}

inline std::string report_csv(const MetricReport& r, const std::string& label = "") {
  std::ostringstream out;
  out << std::setprecision(9) << "run,frame,mape,mae,dssim,loss\n";
  for (const auto& f : r.frames)
    out << label << ',' << f.frame << ',' << f.metrics.mape << ',' << f.metrics.mae << ',' << f.metrics.dssim << ','
        << f.metrics.loss << '\n';
  out << label << ",mean," << r.mean.mape << ',' << r.mean.mae << ',' << r.mean.dssim << ',' << r.mean.loss << '\n';
  return out.str();
}

/// Final checkpoint of a run directory (highest iteration number).
inline std::filesystem::path latest_checkpoint(const std::filesystem::path& run) {
  const auto dir = run / "checkpoints";
  if (!std::filesystem::is_directory(dir)) throw ConfigError("run '" + run.string() + "' has no checkpoints/");
  std::filesystem::path best;
  long long best_iter = -1;
  for (const auto& e : std::filesystem::directory_iterator(dir)) {
    const std::string name = e.path().filename().string();
    if (name.rfind("ckpt_", 0) != 0 || e.path().extension() != ".bin") continue;
    try {
      const long long it = std::stoll(name.substr(5));
      if (it > best_iter) {
        best_iter = it;
        best = e.path();
      }
    } catch (const std::exception&) {
    }
  }
  if (best.empty()) throw ConfigError("run '" + run.string() + "' has no ckpt_*.bin");
  return best;
}

struct RunComparison {
  MetricReport a, b;
  double relative_loss_gain = 0;  // (b - a) / b on mean loss; positive when a is better
};

inline RunComparison compare_runs(const std::filesystem::path& run_a, const std::filesystem::path& run_b,
                                  const SceneSpace& space, const ValidationSet& vs) {
  const int dim = static_cast<int>(space.dim());
  const auto a = load_checkpoint(latest_checkpoint(run_a).string(), dim);
  const auto b = load_checkpoint(latest_checkpoint(run_b).string(), dim);
  RunComparison c{evaluate_net(a.net, space, vs), evaluate_net(b.net, space, vs), 0};
  if (c.b.mean.loss > 0) c.relative_loss_gain = (c.b.mean.loss - c.a.mean.loss) / c.b.mean.loss;
  return c;
}

}  // namespace glint
