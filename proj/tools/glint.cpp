// glint: train, render, evaluate, inspect and serve variable-scene generators.
#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <sstream>

#include "glint/eval.hpp"
#include "glint/infer.hpp"
#include "glint/serve.hpp"
#include "glint/train.hpp"

namespace fs = std::filesystem;
using namespace glint;

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitDivergence = 3;

std::vector<double> parse_list(const std::string& text, const std::string& flag) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      out.push_back(std::stod(item, &used));
      if (item.find_first_not_of(" \t", used) != std::string::npos) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw ConfigError(flag + ": '" + item + "' is not a number");
    }
  }
  return out;
}

/// Scene of a run directory, read from its config.json.
std::optional<std::string> run_scene(const fs::path& run) {
  const auto cfg = run / "config.json";
  if (!fs::exists(cfg)) return std::nullopt;
  try {
    return nlohmann::json::parse(detail::read_file(cfg.string())).at("scene").get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(cfg.string() + ": " + e.what());
  }
}

/// --scene when given, otherwise the scene of the run owning the checkpoint.
std::string scene_for_checkpoint(const std::string& scene, const fs::path& ckpt) {
  if (!scene.empty()) return scene;
  const fs::path dir = ckpt.parent_path();
  if (dir.filename() == "checkpoints")
    if (auto s = run_scene(dir.parent_path())) return *s;
  throw ConfigError("cannot tell the scene of '" + ckpt.string() + "'; pass --scene");
}

void write_image(const fs::path& path, const ImageRGB& img, double exposure) {
  const auto ext = path.extension().string();
  if (!path.parent_path().empty()) fs::create_directories(path.parent_path());
  if (ext == ".pfm")
    write_pfm(path.string(), img);
  else if (ext == ".ppm")
    write_ppm(path.string(), img, exposure);
  else if (ext == ".png")
    detail::write_file(path.string(), encode_png(img, exposure));
  else
    throw ConfigError("output '" + path.string() + "' needs a .pfm, .ppm or .png extension");
}

struct TrainArgs {
  TrainConfig cfg;
  std::string mode = "mcmc", resolution = "adaptive", acceptance = "greedy", target = "loss-step";
  std::string schedule = "desk";
  int r0 = 0, increment = -1, r_max = 0;
  std::uint64_t period = 0;
  std::string reuse = "on";
  bool quiet = false;
};

int run_train(TrainArgs& a) {
  TrainConfig& c = a.cfg;
  if (a.schedule == "paper")
    c.schedule = ResolutionSchedule::paper();
  else if (a.schedule == "desk")
    c.schedule = ResolutionSchedule::desk();
  else
    throw ConfigError("--schedule must be desk or paper");
  if (a.r0 > 0) c.schedule.r0 = a.r0;
  if (a.increment >= 0) c.schedule.increment = a.increment;
  if (a.period > 0) c.schedule.period = a.period;
  if (a.r_max > 0) c.schedule.r_max = a.r_max;
  c.sampler = parse_sampler(a.mode);
  c.resolution_mode = parse_resolution_mode(a.resolution);
  c.acceptance = parse_acceptance(a.acceptance);
  c.target = parse_target(a.target);
  if (a.reuse != "on" && a.reuse != "off") throw ConfigError("--reuse must be on or off");
  c.reuse = a.reuse == "on";
  if (c.out_dir.empty()) throw ConfigError("--out is required");
  if (c.sampler == SamplerMode::Uniform && c.acceptance != Acceptance::Always)
    std::cerr << "warning: --mode uniform ignores --acceptance " << to_string(c.acceptance)
              << " (uniform sampling always accepts large steps)\n";
  Trainer trainer(c);
  trainer.run(a.quiet ? nullptr : &std::cerr);
  if (!a.quiet) std::cerr << "wrote " << trainer.checkpoint_path().string() << '\n';
  return 0;
}

struct RenderArgs {
  std::string checkpoint, scene, vector, camera, out;
  int res = 128, spp = 16;
  bool gt = false;
  double exposure = 1.0;
  std::uint64_t seed = 0;
};

int run_render(const RenderArgs& a) {
  if (a.res < 1) throw ConfigError("--res must be >= 1");
  if (a.spp < 1) throw ConfigError("--spp must be >= 1");
  std::string scene = a.scene;
  if (!a.gt || scene.empty()) {
    if (a.checkpoint.empty()) throw ConfigError("--checkpoint is required (or --gt with --scene)");
    scene = scene_for_checkpoint(a.scene, a.checkpoint);
  }
  const SceneSpace space = resolve_space(scene);
  const auto v = parse_list(a.vector, "--vector");
  if (v.size() != space.dim())
    throw DimensionError("--vector has " + std::to_string(v.size()) + " entries, scene '" + scene + "' has dim " +
                         std::to_string(space.dim()));
  CameraVector cam = space.default_camera();
  if (!a.camera.empty()) {
    const auto c = parse_list(a.camera, "--camera");
    if (c.size() != 6) throw DimensionError("--camera needs 6 values: px,py,pz,lx,ly,lz");
    std::copy(c.begin(), c.end(), cam.begin());
  }
  const SceneSetup setup = make_setup(space, v, cam);
  ImageRGB img;
  if (a.gt) {
    img = render_image(setup.instance, a.res, a.spp, a.seed).radiance;
  } else {
    const auto ck = load_checkpoint(a.checkpoint, static_cast<int>(space.dim()));
    img = predict_image(ck.net, setup, a.res);
  }
  write_image(a.out, img, a.exposure);
  return 0;
}

int run_eval(const std::string& run, const std::string& validation, const std::string& out,
             const std::string& checkpoint) {
  const auto scene = run_scene(run);
  if (!scene) throw ConfigError("'" + run + "' has no config.json");
  const SceneSpace space = resolve_space(*scene);
  if (!fs::exists(fs::path(validation) / "frames.json"))
    throw ConfigError("'" + validation + "' is not a validation directory (no frames.json)");
  const ValidationSet vs = load_validation(validation);
  const fs::path ckpt = checkpoint.empty() ? latest_checkpoint(run) : fs::path(checkpoint);
  const auto ck = load_checkpoint(ckpt.string(), static_cast<int>(space.dim()));
  const std::string csv = report_csv(evaluate_net(ck.net, space, vs), fs::path(run).filename().string());
  if (out.empty())
    std::cout << csv;
  else
    detail::write_file(out, csv);
  return 0;
}

int run_diag(const std::string& run, const std::string& dims, int bins, std::uint64_t warmup, const std::string& out) {
  const auto d = parse_list(dims, "--dims");
  if (d.size() != 2 || d[0] < 0 || d[1] < 0) throw ConfigError("--dims needs two indices i,j");
  if (bins < 1) throw ConfigError("--bins must be >= 1");
  const auto rows = read_chain_csv((fs::path(run) / "chains.csv").string());
  const auto i = static_cast<std::size_t>(d[0]), j = static_cast<std::size_t>(d[1]);
  if (!rows.empty() && (i >= rows.front().state.size() || j >= rows.front().state.size()))
    throw DimensionError("--dims out of range: chain state has " + std::to_string(rows.front().state.size()) + " dims");
  const Histogram2D h = chain_histogram(rows, i, j, bins, warmup);
  const fs::path path = out.empty() ? fs::path(run) / ("hist_" + std::to_string(i) + "_" + std::to_string(j) + ".pfm")
                                    : fs::path(out);
  write_image(path, histogram_image(h), 1.0);
  std::cout << "samples " << h.total << "\nuniformity_p " << uniformity_p_value(h) << "\nwrote " << path.string()
            << '\n';
  return 0;
}

int run_inspect(const std::string& scene) {
  const SceneSpace space = resolve_space(scene);
  std::cout << "scene " << scene << "\nbase " << space.base_scene << "\ndim " << space.dim() << "\ncamera "
            << (space.camera.variable ? "variable" : "fixed") << "\n\n";
  std::printf("%-4s %-20s %-24s %10s %10s  %s\n", "i", "name", "kind", "min", "max", "binding");
  for (std::size_t i = 0; i < space.params.size(); ++i) {
    const auto& p = space.params[i];
    std::printf("%-4zu %-20s %-24s %10.4g %10.4g  %s\n", i, p.name.c_str(), std::string(to_string(p.kind)).c_str(),
                p.min, p.max, p.binding.c_str());
  }
  return 0;
}

int run_serve(const std::string& checkpoint, const std::string& scene, const std::string& host, int port) {
  RenderService service(resolve_space(scene_for_checkpoint(scene, checkpoint)));
  if (!fs::exists(checkpoint)) throw ConfigError("checkpoint '" + checkpoint + "' does not exist");
  httplib::Server server;
  std::cerr << "serving on http://" << host << ':' << port << '\n';
  return serve(service, checkpoint, host, port, server);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"glint: neural global illumination for variable scenes"};
  app.require_subcommand(1);

  TrainArgs ta;
  auto* train = app.add_subcommand("train", "Train a generator with active exploration");
  train->add_option("--scene", ta.cfg.scene, "Built-in scene name or scene-space JSON path")->capture_default_str();
  train->add_option("--iters", ta.cfg.iterations, "Training iterations")->capture_default_str();
  train->add_option("--mode", ta.mode, "Sampler: mcmc or uniform")->capture_default_str();
  train->add_option("--resolution", ta.resolution, "Resolution mode: adaptive or fixed")->capture_default_str();
  train->add_option("--acceptance", ta.acceptance, "greedy, metropolis or always")->capture_default_str();
  train->add_option("--target", ta.target, "Chain target: loss-step or loss")->capture_default_str();
  train->add_option("--seed", ta.cfg.seed, "Master seed")->capture_default_str();
  train->add_option("--out", ta.cfg.out_dir, "Run directory")->required();
  train->add_option("--spp", ta.cfg.spp, "Samples per pixel of training targets (0: scene default)")->capture_default_str();
  train->add_option("--hidden", ta.cfg.hidden, "Hidden layer width")->capture_default_str();
  train->add_option("--layers", ta.cfg.layers, "Hidden layer count")->capture_default_str();
  train->add_option("--lr", ta.cfg.lr, "Adam learning rate")->capture_default_str();
  train->add_option("--chains", ta.cfg.chains, "Parallel chains (batch size)")->capture_default_str();
  train->add_option("--patch", ta.cfg.patch, "Patch edge in pixels")->capture_default_str();
  train->add_option("--schedule", ta.schedule, "Resolution schedule preset: desk or paper")->capture_default_str();
  train->add_option("--r0", ta.r0, "Override initial virtual resolution");
  train->add_option("--increment", ta.increment, "Override resolution increment");
  train->add_option("--period", ta.period, "Override iterations per increment");
  train->add_option("--rmax", ta.r_max, "Override resolution cap");
  train->add_option("--p-large", ta.cfg.proposal.p_large, "Large-step probability")->capture_default_str();
  train->add_option("--sigma", ta.cfg.proposal.sigma, "Small-step standard deviation")->capture_default_str();
  train->add_option("--reuse", ta.reuse, "Sample reuse: on or off")->capture_default_str();
  train->add_option("--store-capacity", ta.cfg.store_capacity, "Reuse store capacity")->capture_default_str();
  train->add_option("--validation-every", ta.cfg.validation_every, "Iterations between validations (0: off)")
      ->capture_default_str();
  train->add_option("--validation-frames", ta.cfg.validation_frames, "Validation frame count")->capture_default_str();
  train->add_option("--validation-res", ta.cfg.validation_resolution, "Validation resolution")->capture_default_str();
  train->add_option("--validation-spp", ta.cfg.validation_spp, "Validation reference spp")->capture_default_str();
  train->add_option("--validation-select", ta.cfg.validation_selection, "auto, uniform or mirror")
      ->capture_default_str();
  train->add_option("--validation-cache", ta.cfg.validation_cache, "Shared validation directory");
  train->add_option("--checkpoint-every", ta.cfg.checkpoint_every, "Iterations between checkpoints (0: final only)")
      ->capture_default_str();
  train->add_flag("--quiet", ta.quiet, "No progress output");

  RenderArgs ra;
  auto* render = app.add_subcommand("render", "Render one scene vector with the network or the path tracer");
  render->add_option("--checkpoint", ra.checkpoint, "Checkpoint file");
  render->add_option("--scene", ra.scene, "Scene (default: from the checkpoint's run directory)");
  render->add_option("--vector", ra.vector, "Normalized scene vector v1,...,vd")->required();
  render->add_option("--camera", ra.camera, "Camera px,py,pz,lx,ly,lz (default: scene camera)");
  render->add_option("--res", ra.res, "Image resolution")->capture_default_str();
  render->add_option("--out", ra.out, "Output image (.pfm, .ppm or .png)")->required();
  render->add_flag("--gt", ra.gt, "Path-trace the reference instead of running the network");
  render->add_option("--spp", ra.spp, "Samples per pixel for --gt")->capture_default_str();
  render->add_option("--seed", ra.seed, "Path tracer seed for --gt")->capture_default_str();
  render->add_option("--exposure", ra.exposure, "Exposure for 8-bit outputs")->capture_default_str();

  std::string eval_run, eval_validation, eval_out, eval_ckpt;
  auto* eval = app.add_subcommand("eval", "Score a run's final checkpoint on a validation set");
  eval->add_option("--run", eval_run, "Run directory")->required();
  eval->add_option("--validation", eval_validation, "Validation directory (frames.json + references)")->required();
  eval->add_option("--checkpoint", eval_ckpt, "Checkpoint to score (default: latest of the run)");
  eval->add_option("--out", eval_out, "CSV output (default: stdout)");

  std::string diag_run, diag_dims = "0,1", diag_out;
  int diag_bins = 32;
  std::uint64_t diag_warmup = 0;
  auto* diag = app.add_subcommand("diag-mcmc", "Histogram two chain dimensions of a run");
  diag->add_option("--run", diag_run, "Run directory")->required();
  diag->add_option("--dims", diag_dims, "Dimensions i,j of the chain state")->capture_default_str();
  diag->add_option("--bins", diag_bins, "Bins per axis")->capture_default_str();
  diag->add_option("--warmup", diag_warmup, "Skip iterations before this one")->capture_default_str();
  diag->add_option("--out", diag_out, "Histogram PFM (default: <run>/hist_i_j.pfm)");

  std::string inspect_scene;
  auto* inspect = app.add_subcommand("inspect-space", "Print a scene space's parameter table");
  inspect->add_option("--scene", inspect_scene, "Built-in scene name or scene-space JSON path")->required();

  std::string serve_ckpt, serve_scene, serve_host = "127.0.0.1";
  int serve_port = 8080;
  auto* srv = app.add_subcommand("serve", "Serve /space and /render over HTTP");
  srv->add_option("--checkpoint", serve_ckpt, "Checkpoint file")->required();
  srv->add_option("--scene", serve_scene, "Scene (default: from the checkpoint's run directory)");
  srv->add_option("--port", serve_port, "TCP port")->capture_default_str();
  srv->add_option("--host", serve_host, "Bind address")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  }

  try {
    if (*train) return run_train(ta);
    if (*render) return run_render(ra);
    if (*eval) return run_eval(eval_run, eval_validation, eval_out, eval_ckpt);
    if (*diag) return run_diag(diag_run, diag_dims, diag_bins, diag_warmup, diag_out);
    if (*inspect) return run_inspect(inspect_scene);
    if (*srv) return run_serve(serve_ckpt, serve_scene, serve_host, serve_port);
  } catch (const DivergenceError& e) {
    std::cerr << "glint: diverged: " << e.what() << '\n';
    return kExitDivergence;
  } catch (const Error& e) {
    std::cerr << "glint: " << e.what() << '\n';
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "glint: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
