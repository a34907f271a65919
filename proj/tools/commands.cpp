// SPDX-License-Identifier: Apache-2.0
#include "commands.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "neurtex/ablation.hpp"
#include "neurtex/binary_io.hpp"
#include "neurtex/errors.hpp"
#include "neurtex/metrics.hpp"
#include "neurtex/rng.hpp"
#include "neurtex/scene.hpp"
#include "neurtex/trainer.hpp"
#include "neurtex/views.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace neurtex::cli {
namespace {

struct GenScenes {
  int count = 7;
  std::uint64_t seed = 1;
  int first_id = 0;
  int objects = 5;
  std::string out;
} gen_scenes;

struct GenData {
  std::string scenes, size = "64x128", domain = "a", out;
  int views = 300;
  std::uint64_t seed = 1;
} gen_data;

struct GenSeq {
  std::string scene, out, size = "64x128";
  int length = 100;
  std::uint64_t seed = 1;
} gen_seq;

struct Train {
  std::string config, resume, out, variant = "full";
  std::optional<long long> iterations;
  std::optional<std::uint64_t> seed;
} train;

struct RenderSeq {
  std::string ckpt, scene, seq, out, renderer = "model";
  bool revisit = false;
} render_seq;

struct Eval {
  std::string frames, scene, seq, report, csv, flow_vis;
  bool revisit = false;
} eval;

struct Ablate {
  std::string config, variants = "no-tex,no-vc,full", out;
  int frames = 60;
  std::optional<std::uint64_t> seed;
} ablate;

std::pair<int, int> parse_size(const std::string& s) {
  int h = 0, w = 0;
  char x = 0, extra = 0;
  if (std::sscanf(s.c_str(), "%d%c%d%c", &h, &x, &w, &extra) != 3 || (x != 'x' && x != 'X') || h < 8 || w < 8)
    throw ConfigError("--size must look like HxW with both sides >= 8, got '" + s + "'");
  return {h, w};
}

std::vector<fs::path> scene_files(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw IoError(dir.string() + ": not a directory");
  std::vector<fs::path> out;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.is_regular_file() && e.path().extension() == ".json") out.push_back(e.path());
  std::sort(out.begin(), out.end());
  if (out.empty()) throw ConfigError(dir.string() + ": no scene files");
  return out;
}

void make_dirs(const fs::path& p) {
  std::error_code ec;
  fs::create_directories(p, ec);
  if (ec) throw IoError(p.string() + ": " + ec.message());
}

std::string index_name(const char* prefix, int k) {
  char b[64];
  std::snprintf(b, sizeof b, "%s_%04d", prefix, k);
  return b;
}

void run_gen_scenes() {
  if (gen_scenes.count < 1) throw ConfigError("--count must be >= 1");
  SceneGenConfig cfg;
  cfg.object_count = gen_scenes.objects;
  make_dirs(gen_scenes.out);
  for (int k = 0; k < gen_scenes.count; ++k) {
    const int id = gen_scenes.first_id + k;
    const Scene s = generate_scene(id, derive_seed(gen_scenes.seed, {0x5ce, static_cast<std::uint64_t>(k)}), cfg);
    save_scene(fs::path(gen_scenes.out) / (index_name("scene", id) + ".json"), s);
  }
}

void run_gen_data() {
  const auto [h, w] = parse_size(gen_data.size);
  if (gen_data.domain != "a" && gen_data.domain != "b") throw ConfigError("--domain must be a or b");
  if (gen_data.views < 1) throw ConfigError("--views must be >= 1");
  const auto files = scene_files(gen_data.scenes);
  ViewSamplingConfig vcfg;
  vcfg.height = h;
  vcfg.width = w;
  vcfg.focal = 100.0 * w / 128.0;
  for (const auto& f : files) {
    const Scene scene = load_scene(f);
    const fs::path dir = fs::path(gen_data.out) / f.stem();
    make_dirs(dir);
    const auto views = sample_random_views(
        scene, gen_data.views, derive_seed(gen_data.seed, {0xda7a, static_cast<std::uint64_t>(scene.scene_id())}), vcfg);
    save_cameras(dir / "cams.json", views);
    for (std::size_t v = 0; v < views.size(); ++v) {
      const RayBuffer buf = ray_cast(scene, views[v]);
      const std::string stem = index_name("view", static_cast<int>(v));
      if (gen_data.domain == "a") {
        write_ppm(dir / (stem + "_ref.ppm"), render_reference(scene, buf));
        write_ntimg(dir / (stem + "_buf.ntimg"), pack_ray_buffer(buf));
      } else {
        write_ppm(dir / (stem + "_real.ppm"), render_photoreal(scene, buf, views[v]));
      }
    }
  }
}

void run_gen_seq() {
  const auto [h, w] = parse_size(gen_seq.size);
  if (gen_seq.length < 2) throw ConfigError("--length must be >= 2");
  const Scene scene = load_scene(gen_seq.scene);
  PanConfig cfg;
  cfg.view.height = h;
  cfg.view.width = w;
  cfg.view.focal = 100.0 * w / 128.0;
  save_cameras(gen_seq.out, make_pan_sequence(scene, gen_seq.length, gen_seq.seed, cfg));
}

void run_train() {
  RunConfig cfg = apply_variant(load_run_config(train.config), train.variant);
  if (train.iterations) cfg.iterations = *train.iterations;
  if (train.seed) cfg.seed = *train.seed;
  cfg.validate();
  const fs::path out = train.out.empty() ? fs::path(train.config).parent_path() / ("run_" + train.variant) : fs::path(train.out);
  const auto data = std::make_shared<const TrainingData>(
      build_training_data(load_scenes(cfg.scenes_a), load_scenes(cfg.scenes_b), cfg));
  auto progress = [&](const StepRecord& r) {
    if ((r.step + 1) % 100 == 0 || r.step + 1 == cfg.iterations)
      std::printf("step %lld/%lld total %.4f dis %.4f vc %.4f\n", r.step + 1, cfg.iterations, r.total, r.dis, r.vc);
    std::fflush(stdout);
  };
  if (!train.resume.empty()) {
    RunOptions opts;
    opts.resume = train.resume;
    opts.on_step = progress;
    run_training(cfg, data, out, opts);
  } else {
    train_or_resume(cfg, data, out, progress);
  }
  std::printf("final checkpoint: %s\n", (out / "final").string().c_str());
}

std::vector<Image> read_frames(const fs::path& dir, const char* prefix, std::size_t count) {
  std::vector<Image> out;
  for (std::size_t t = 0; t < count; ++t) {
    const fs::path p = dir / (index_name(prefix, static_cast<int>(t)) + ".ppm");
    if (!fs::exists(p)) throw IoError(p.string() + ": missing frame (expected " + std::to_string(count) + ")");
    out.push_back(read_ppm(p));
  }
  return out;
}

void run_render_seq() {
  const Scene scene = load_scene(render_seq.scene);
  const auto cams = load_cameras(render_seq.seq);
  if (cams.size() < 2) throw ConfigError(render_seq.seq + ": need at least 2 cameras");
  std::function<Image(const RayBuffer&, const CameraView&)> render;
  std::optional<LoadedModel> model;
  if (render_seq.renderer == "model") {
    if (render_seq.ckpt.empty()) throw ConfigError("render-seq: --ckpt is required for the model renderer");
    model = load_model(render_seq.ckpt, {scene});
    render = [&](const RayBuffer& b, const CameraView&) { return model->translate(0, b, render_reference(scene, b)); };
  } else if (render_seq.renderer == "photoreal") {
    render = [&](const RayBuffer& b, const CameraView& v) { return render_photoreal(scene, b, v); };
  } else if (render_seq.renderer == "reference") {
    render = [&](const RayBuffer& b, const CameraView&) { return render_reference(scene, b); };
  } else {
    throw ConfigError("render-seq: --renderer must be model, photoreal or reference");
  }
  make_dirs(render_seq.out);
  std::vector<RayBuffer> bufs;
  for (std::size_t t = 0; t < cams.size(); ++t) {
    bufs.push_back(ray_cast(scene, cams[t]));
    write_ppm(fs::path(render_seq.out) / (index_name("frame", static_cast<int>(t)) + ".ppm"), render(bufs[t], cams[t]));
  }
  if (render_seq.revisit) {
    const auto order = revisit_order(static_cast<int>(cams.size()));
    for (std::size_t n = 0; n < order.size(); ++n) {
      const auto v = static_cast<std::size_t>(order[n]);
      write_ppm(fs::path(render_seq.out) / (index_name("revisit", static_cast<int>(n)) + ".ppm"), render(bufs[v], cams[v]));
    }
  }
}

void run_eval() {
  const Scene scene = load_scene(eval.scene);
  const auto cams = load_cameras(eval.seq);
  if (cams.size() < 2) throw ConfigError(eval.seq + ": need at least 2 cameras");
  const auto frames = read_frames(eval.frames, "frame", cams.size());
  std::vector<Image> extended;
  if (eval.revisit) extended = read_frames(eval.frames, "revisit", 2 * cams.size());
  const SequenceGeometry geo = sequence_geometry(scene, cams);
  const ConsistencyReport r =
      evaluate_sequence(fs::path(eval.seq).stem().string(), frames, geo, eval.revisit ? &extended : nullptr);
  const std::string text = json(r).dump(2) + "\n";
  if (eval.report.empty())
    std::fputs(text.c_str(), stdout);
  else
    write_text(eval.report, text);
  if (!eval.csv.empty()) write_text(eval.csv, report_csv(r));
  if (!eval.flow_vis.empty()) {
    make_dirs(eval.flow_vis);
    for (std::size_t t = 0; t + 1 < frames.size(); ++t) {
      const FlowField f = estimate_flow(to_grayscale(frames[t]), to_grayscale(frames[t + 1]));
      write_ppm(fs::path(eval.flow_vis) / (index_name("flow", static_cast<int>(t)) + ".ppm"), flow_to_color(f, 5.0));
    }
  }
}

void run_ablate() {
  RunConfig cfg = load_run_config(ablate.config);
  AblationEval ev;
  ev.frames = ablate.frames;
  if (ablate.seed) cfg.seed = ev.seed = *ablate.seed;
  cfg.validate();
  const auto variants = parse_variants(ablate.variants);
  const fs::path out = ablate.out.empty() ? fs::path(ablate.config).parent_path() / "ablation" : fs::path(ablate.out);
  const auto rows = run_ablation(cfg, variants, out, ev, [&](const std::string& v, const StepRecord& r) {
    if ((r.step + 1) % 500 == 0) {
      std::printf("[%s] step %lld/%lld total %.4f\n", v.c_str(), r.step + 1, cfg.iterations, r.total);
      std::fflush(stdout);
    }
  });
  for (const auto& row : rows) {
    json reports = json::array();
    for (const auto& r : row.reports) reports.push_back(r);
    write_text(out / row.variant / "report.json", reports.dump(2) + "\n");
  }
  const std::string table = ablation_csv(rows);
  write_text(out / "ablation.csv", table);
  std::fputs(table.c_str(), stdout);
}

}  // namespace

void register_commands(CLI::App& app) {
  auto* gs = app.add_subcommand("gen-scenes", "Write procedural scene JSON files");
  gs->add_option("--count", gen_scenes.count, "Number of scenes");
  gs->add_option("--seed", gen_scenes.seed, "Seed for the scene pool");
  gs->add_option("--first-id", gen_scenes.first_id, "Scene id of the first scene");
  gs->add_option("--objects", gen_scenes.objects, "Objects per scene");
  gs->add_option("--out", gen_scenes.out, "Output directory")->required();

  auto* gd = app.add_subcommand("gen-data", "Render random views of every scene in a directory");
  gd->add_option("--scenes", gen_data.scenes, "Directory of scene JSON files")->required();
  gd->add_option("--views", gen_data.views, "Views per scene");
  gd->add_option("--size", gen_data.size, "Image size HxW");
  gd->add_option("--domain", gen_data.domain, "a: reference renders + ray buffers, b: photoreal renders");
  gd->add_option("--seed", gen_data.seed, "View sampling seed");
  gd->add_option("--out", gen_data.out, "Output directory")->required();

  auto* sq = app.add_subcommand("gen-seq", "Write a panning camera sequence as JSON");
  sq->add_option("--scene", gen_seq.scene, "Scene JSON")->required();
  sq->add_option("--length", gen_seq.length, "Frames");
  sq->add_option("--size", gen_seq.size, "Image size HxW");
  sq->add_option("--seed", gen_seq.seed, "Path seed");
  sq->add_option("--out", gen_seq.out, "Output cams.json")->required();

  auto* tr = app.add_subcommand("train", "Train textures and translation networks");
  tr->add_option("--config", train.config, "Run config JSON")->required();
  tr->add_option("--resume", train.resume, "Checkpoint directory to resume from");
  tr->add_option("--out", train.out, "Run directory (default: run_<variant> next to the config)");
  tr->add_option("--variant", train.variant, "full, no-vc or no-tex");
  tr->add_option("--iterations", train.iterations, "Override the iteration count");
  tr->add_option("--seed", train.seed, "Override the run seed");

  auto* rs = app.add_subcommand("render-seq", "Render a camera sequence with a trained model");
  rs->add_option("--ckpt", render_seq.ckpt, "Checkpoint directory (final/ of a run)");
  rs->add_option("--scene", render_seq.scene, "Scene JSON")->required();
  rs->add_option("--seq", render_seq.seq, "Camera sequence JSON")->required();
  rs->add_option("--out", render_seq.out, "Output directory")->required();
  rs->add_option("--renderer", render_seq.renderer, "model, photoreal or reference");
  rs->add_flag("--revisit", render_seq.revisit, "Also render the extended sequence 1..T,T..1 as revisit_*.ppm");

  auto* ev = app.add_subcommand("eval", "Temporal-consistency report of a rendered sequence");
  ev->add_option("--frames", eval.frames, "Directory with frame_*.ppm")->required();
  ev->add_option("--scene", eval.scene, "Scene JSON")->required();
  ev->add_option("--seq", eval.seq, "Camera sequence JSON")->required();
  ev->add_option("--report", eval.report, "Output JSON (default: stdout)");
  ev->add_option("--csv", eval.csv, "Flat CSV export");
  ev->add_option("--flow-vis", eval.flow_vis, "Directory for estimated-flow PPMs");
  ev->add_flag("--revisit", eval.revisit, "Also score revisit_*.ppm with the revisit protocol");

  auto* ab = app.add_subcommand("ablate", "Train and compare the three ablation variants");
  ab->add_option("--config", ablate.config, "Run config JSON")->required();
  ab->add_option("--variants", ablate.variants, "Comma-separated subset of no-tex,no-vc,full");
  ab->add_option("--out", ablate.out, "Output directory (default: ablation/ next to the config)");
  ab->add_option("--frames", ablate.frames, "Pan length per scene for scoring");
  ab->add_option("--seed", ablate.seed, "Override the run seed (also seeds the scoring pans)");
}

void run(const std::string& name) {
  static const std::map<std::string, void (*)()> table = {
      {"gen-scenes", run_gen_scenes}, {"gen-data", run_gen_data}, {"gen-seq", run_gen_seq}, {"train", run_train},
      {"render-seq", run_render_seq}, {"eval", run_eval},     {"ablate", run_ablate}};
  table.at(name)();
}

}  // namespace neurtex::cli
