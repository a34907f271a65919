// SPDX-License-Identifier: Apache-2.0
#include "neurtex/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <random>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "neurtex/binary_io.hpp"
#include "neurtex/errors.hpp"
#include "neurtex/rng.hpp"
#include "neurtex/texture_op.hpp"
#include "neurtex/warp.hpp"

namespace neurtex {

using nlohmann::json;

namespace {

void reject_unknown(const json& j, const std::set<std::string>& known, const char* what) {
  if (!j.is_object()) throw ConfigError(std::string(what) + ": expected a JSON object");
  for (const auto& [key, _] : j.items())
    if (!known.count(key)) throw ConfigError(std::string(what) + ": unknown key '" + key + "'");
}

}  // namespace

void to_json(json& j, const ViewSamplingConfig& c) {
  j = {{"height", c.height},
       {"width", c.width},
       {"focal", c.focal},
       {"min_distance", c.min_distance},
       {"max_distance", c.max_distance},
       {"max_tilt_deg", c.max_tilt_deg},
       {"min_coverage", c.min_coverage},
       {"min_clearance", c.min_clearance},
       {"max_attempts", c.max_attempts}};
}

void from_json(const json& j, ViewSamplingConfig& c) {
  reject_unknown(j,
                 {"height", "width", "focal", "min_distance", "max_distance", "max_tilt_deg", "min_coverage",
                  "min_clearance", "max_attempts"},
                 "view");
  c.height = j.value("height", c.height);
  c.width = j.value("width", c.width);
  c.focal = j.value("focal", c.focal);
  c.min_distance = j.value("min_distance", c.min_distance);
  c.max_distance = j.value("max_distance", c.max_distance);
  c.max_tilt_deg = j.value("max_tilt_deg", c.max_tilt_deg);
  c.min_coverage = j.value("min_coverage", c.min_coverage);
  c.min_clearance = j.value("min_clearance", c.min_clearance);
  c.max_attempts = j.value("max_attempts", c.max_attempts);
  if (c.height < 8 || c.width < 8 || !(c.focal > 0) || !(c.min_distance > 0) || !(c.max_distance >= c.min_distance) ||
      !(c.max_tilt_deg >= 0 && c.max_tilt_deg < 90) || !(c.min_coverage >= 0 && c.min_coverage <= 1) ||
      c.max_attempts < 1)
    throw ConfigError("view: invalid view sampling configuration");
}

void to_json(json& j, const PoolConfig& c) {
  j = {{"views_per_scene", c.views_per_scene},
       {"cluster", c.cluster},
       {"near_radius", c.near_radius},
       {"min_overlap", c.min_overlap},
       {"max_retries", c.max_retries},
       {"real_views_per_scene", c.real_views_per_scene},
       {"view", c.view}};
}

void from_json(const json& j, PoolConfig& c) {
  reject_unknown(j, {"views_per_scene", "cluster", "near_radius", "min_overlap", "max_retries", "real_views_per_scene", "view"},
                 "pool");
  c.views_per_scene = j.value("views_per_scene", c.views_per_scene);
  c.cluster = j.value("cluster", c.cluster);
  c.near_radius = j.value("near_radius", c.near_radius);
  c.min_overlap = j.value("min_overlap", c.min_overlap);
  c.max_retries = j.value("max_retries", c.max_retries);
  c.real_views_per_scene = j.value("real_views_per_scene", c.real_views_per_scene);
  if (j.contains("view")) j.at("view").get_to(c.view);
}

RunConfig RunConfig::long_scale() {
  RunConfig c;
  c.iterations = 500'000;
  c.halving = 100'000;
  c.loss.vc_start = 10'000;
  return c;
}

double RunConfig::lr_net_at(long long step) const {
  return lr_net * std::pow(0.5, static_cast<double>(step / halving));
}

double RunConfig::lr_tex_at(long long step) const {
  return lr_tex * std::pow(0.5, static_cast<double>(step / halving));
}

void RunConfig::validate() const {
  if (iterations < 1) throw ConfigError("run: iterations must be >= 1");
  if (!(lr_net > 0) || !(lr_tex > 0)) throw ConfigError("run: learning rates must be > 0");
  if (halving < 1) throw ConfigError("run: halving period must be > 0");
  if (loss.vc_start < 0) throw ConfigError("run: vc_start must be >= 0");
  if (checkpoint_every < 1) throw ConfigError("run: checkpoint_every must be > 0");
  if (tex_height < 2 || tex_width < 2) throw ConfigError("run: texture planes must be at least 2x2");
  if (pool.cluster < 2) throw ConfigError("pool: cluster must be >= 2");
  if (pool.views_per_scene < pool.cluster || pool.views_per_scene % pool.cluster != 0)
    throw ConfigError("pool: views_per_scene must be a positive multiple of cluster");
  if (pool.real_views_per_scene < 1) throw ConfigError("pool: real_views_per_scene must be >= 1");
  if (!(pool.near_radius >= 0) || !(pool.min_overlap >= 0 && pool.min_overlap < 1) || pool.max_retries < 1)
    throw ConfigError("pool: invalid near-view settings");
}

void to_json(json& j, const RunConfig& c) {
  j = {{"iterations", c.iterations},
       {"lr_net", c.lr_net},
       {"lr_tex", c.lr_tex},
       {"halving", c.halving},
       {"arch", c.arch},
       {"loss", c.loss},
       {"tex_height", c.tex_height},
       {"tex_width", c.tex_width},
       {"seed", c.seed},
       {"scenes_a", c.scenes_a},
       {"scenes_b", c.scenes_b},
       {"pool", c.pool},
       {"checkpoint_every", c.checkpoint_every}};
}

void from_json(const json& j, RunConfig& c) {
  reject_unknown(j,
                 {"scale", "iterations", "lr_net", "lr_tex", "halving", "arch", "loss", "tex_height", "tex_width",
                  "seed", "scenes_a", "scenes_b", "pool", "checkpoint_every"},
                 "run");
  if (j.contains("scale")) {
    const auto scale = j.at("scale").get<std::string>();
    if (scale == "long")
      c = RunConfig::long_scale();
    else if (scale == "desk")
      c = RunConfig{};
    else
      throw ConfigError("run: scale must be 'desk' or 'long'");
  }
  c.iterations = j.value("iterations", c.iterations);
  c.lr_net = j.value("lr_net", c.lr_net);
  c.lr_tex = j.value("lr_tex", c.lr_tex);
  c.halving = j.value("halving", c.halving);
  if (j.contains("arch")) {
    json merged = c.arch;
    merged.update(j.at("arch"));
    merged.get_to(c.arch);
  }
  if (j.contains("loss")) {
    json merged = c.loss;
    merged.update(j.at("loss"));
    merged.get_to(c.loss);
  }
  c.tex_height = j.value("tex_height", c.tex_height);
  c.tex_width = j.value("tex_width", c.tex_width);
  c.seed = j.value("seed", c.seed);
  c.scenes_a = j.value("scenes_a", c.scenes_a);
  c.scenes_b = j.value("scenes_b", c.scenes_b);
  if (j.contains("pool")) j.at("pool").get_to(c.pool);
  c.checkpoint_every = j.value("checkpoint_every", c.checkpoint_every);
  c.validate();
}

RunConfig load_run_config(const std::filesystem::path& path) {
  json j;
  try {
    j = json::parse(read_text(path));
  } catch (const json::exception& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  RunConfig c;
  try {
    j.get_to(c);
  } catch (const json::exception& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  const auto base = path.parent_path();
  for (auto* list : {&c.scenes_a, &c.scenes_b})
    for (auto& p : *list)
      if (std::filesystem::path(p).is_relative()) p = (base / p).lexically_normal().string();
  if (c.scenes_a.empty() || c.scenes_b.empty()) throw ConfigError(path.string() + ": scenes_a and scenes_b are required");
  return c;
}

RunConfig apply_variant(RunConfig cfg, const std::string& variant) {
  if (variant == "full") return cfg;
  if (variant == "no-vc") {
    cfg.loss.vc = 0;
    return cfg;
  }
  if (variant == "no-tex") {
    cfg.loss.vc = 0;
    cfg.arch.tex_channels = 0;
    return cfg;
  }
  throw ConfigError("unknown variant '" + variant + "' (expected full, no-vc or no-tex)");
}

double overlap_fraction(const SimView& i, const SimView& j) {
  const WarpMap map = build_warp(i.view, i.buf, j.view, j.buf);
  return static_cast<double>(map.match_count()) / static_cast<double>(i.buf.size());
}

TrainingData build_training_data(const std::vector<Scene>& sim_scenes, const std::vector<Scene>& real_scenes,
                                 const RunConfig& cfg) {
  cfg.validate();
  if (sim_scenes.empty() || real_scenes.empty()) throw ConfigError("training data: both scene pools must be non-empty");
  for (const auto& a : sim_scenes)
    for (const auto& b : real_scenes)
      if (a.seed() == b.seed()) throw ConfigError("training data: domain A and B scene seeds must be disjoint");
  const PoolConfig& pc = cfg.pool;
  TrainingData data;
  data.cluster = pc.cluster;
  for (std::size_t k = 0; k < sim_scenes.size(); ++k) {
    const Scene& scene = sim_scenes[k];
    SimScene sim{scene, {}};
    const int clusters = pc.views_per_scene / pc.cluster;
    const auto anchors = sample_random_views(scene, clusters, derive_seed(cfg.seed, {0xa11, k}), pc.view);
    auto make = [&](const CameraView& v) {
      SimView s{v, ray_cast(scene, v), {}};
      s.reference = render_reference(scene, s.buf);
      return s;
    };
    for (int c = 0; c < clusters; ++c) {
      const std::size_t first = sim.views.size();
      sim.views.push_back(make(anchors[static_cast<std::size_t>(c)]));
      const auto target = look_at_point(scene, anchors[static_cast<std::size_t>(c)]);
      if (!target) throw SamplingError("training data: anchor view axis misses the scene");
      for (int m = 1; m < pc.cluster; ++m) {
        bool placed = false;
        for (int r = 0; r < pc.max_retries && !placed; ++r) {
          CameraView v;
          try {
            v = sample_view_near(scene, *target, pc.near_radius,
                                 derive_seed(cfg.seed, {0xb22, k, static_cast<std::uint64_t>(c),
                                                        static_cast<std::uint64_t>(m), static_cast<std::uint64_t>(r)}),
                                 pc.view);
          } catch (const ConfigError&) {
            continue;
          }
          SimView cand = make(v);
          bool ok = true;
          for (std::size_t q = first; q < sim.views.size() && ok; ++q)
            ok = overlap_fraction(sim.views[q], cand) >= pc.min_overlap &&
                 overlap_fraction(cand, sim.views[q]) >= pc.min_overlap;
          if (ok) {
            sim.views.push_back(std::move(cand));
            placed = true;
          }
        }
        if (!placed)
          throw SamplingError("training data: scene " + std::to_string(scene.scene_id()) + " cluster " +
                              std::to_string(c) + ": no overlapping near view after " +
                              std::to_string(pc.max_retries) + " retries");
      }
    }
    data.sim.push_back(std::move(sim));
  }
  for (std::size_t k = 0; k < real_scenes.size(); ++k) {
    const Scene& scene = real_scenes[k];
    data.real_keys.push_back({scene.scene_id(), scene.seed()});
    for (const auto& v : sample_random_views(scene, pc.real_views_per_scene, derive_seed(cfg.seed, {0xc33, k}), pc.view))
      data.real.push_back(render_photoreal(scene, ray_cast(scene, v), v));
  }
  return data;
}

Batch sample_batch(const TrainingData& data, std::uint64_t seed, long long step) {
  if (data.sim.empty() || data.real.empty()) throw SamplingError("sample_batch: empty training data");
  Rng rng(derive_seed(seed, {0xba7c, static_cast<std::uint64_t>(step)}));
  auto pick = [&](std::size_t n) { return static_cast<int>(std::uniform_int_distribution<std::size_t>(0, n - 1)(rng)); };
  Batch b;
  b.step = step;
  b.scene = pick(data.sim.size());
  const auto& views = data.sim[static_cast<std::size_t>(b.scene)].views;
  const int cl = data.cluster;
  const int clusters = static_cast<int>(views.size()) / cl;
  if (clusters < 1 || cl < 2) throw SamplingError("sample_batch: scene pool has no view pair");
  const int c = pick(static_cast<std::size_t>(clusters));
  const int i = pick(static_cast<std::size_t>(cl));
  int j = pick(static_cast<std::size_t>(cl - 1));
  if (j >= i) ++j;
  b.view_i = c * cl + i;
  b.view_j = c * cl + j;
  b.real = pick(data.real.size());
  return b;
}

bool StepRecord::finite() const {
  for (double v : {adv, cyc, rec, content, ssim_ab, ssim_ba, vc, total, dis})
    if (!std::isfinite(v)) return false;
  return true;
}

std::string StepRecord::csv_header() {
  return "step,adv,cyc,rec,content,ssim_ab,ssim_ba,vc,total,dis,lambda_vc,lr_net,lr_tex";
}

std::string StepRecord::csv_row() const {
  char buf[512];
  std::snprintf(buf, sizeof buf, "%lld,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g", step, adv, cyc, rec,
                content, ssim_ab, ssim_ba, vc, total, dis, lambda_vc, lr_net, lr_tex);
  return buf;
}

namespace {

Image translate_view(const TranslationCycle<float>& net, const NeuralTexture* tex, const RayBuffer& buf,
                     const Image& reference) {
  ad::NoGradGuard guard;
  ad::Tensorf a = image_to_tensor<float>(reference, 2.0, -1.0);
  if (tex) a = ad::concat_channels<float>({image_to_tensor<float>(project(*tex, buf)), a});
  const ad::Tensorf b_hat = net.decode_b(net.encode_a(a));
  Image out = tensor_to_image(b_hat, 0.5, 0.5);
  for (auto& v : out.data()) v = std::clamp(v, 0.0f, 1.0f);
  return out;
}

}  // namespace

Trainer::Trainer(RunConfig cfg, std::shared_ptr<const TrainingData> data)
    : cfg_(std::move(cfg)), data_(std::move(data)), net_(cfg_.arch, derive_seed(cfg_.seed, {0x4e7})) {
  cfg_.validate();
  if (!data_ || data_->sim.empty() || data_->real.empty()) throw ConfigError("trainer: empty training data");
  if (uses_texture())
    for (std::size_t k = 0; k < data_->sim.size(); ++k) {
      const Scene& scene = data_->sim[k].scene;
      NeuralTexture tex = NeuralTexture::for_scene(scene, cfg_.tex_height, cfg_.tex_width, cfg_.arch.tex_channels,
                                                   derive_seed(cfg_.seed, {0x7e4, k}));
      const TextureShape s = tex.shape();
      ad::ParamStore<float> store;
      store.add("tex", {s.objects * s.planes, s.height, s.width, s.features},
                std::vector<float>(tex.values().begin(), tex.values().end()));
      layouts_.push_back(std::move(tex));
      textures_.push_back(std::move(store));
    }
}

ad::Tensorf& Trainer::texture(int scene) {
  if (!uses_texture()) throw ContractViolation("trainer: this variant has no neural texture");
  return textures_.at(static_cast<std::size_t>(scene)).entries().at("tex").param;
}

NeuralTexture Trainer::texture_snapshot(int scene) const {
  NeuralTexture t = layouts_.at(static_cast<std::size_t>(scene));
  const auto& v = textures_.at(static_cast<std::size_t>(scene)).get("tex").value();
  std::copy(v.begin(), v.end(), t.values().begin());
  return t;
}

ad::Tensorf Trainer::domain_a_input(int scene, const RayBuffer& buf, const Image& reference) const {
  ad::Tensorf ref = image_to_tensor<float>(reference, 2.0, -1.0);
  if (!uses_texture()) return ref;
  const auto k = static_cast<std::size_t>(scene);
  return ad::concat_channels<float>({project_texture(textures_.at(k).get("tex"), layouts_.at(k), buf), ref});
}

Image Trainer::translate(int scene, const RayBuffer& buf, const Image& reference) const {
  if (!uses_texture()) return translate_view(net_, nullptr, buf, reference);
  const NeuralTexture tex = texture_snapshot(scene);
  return translate_view(net_, &tex, buf, reference);
}

StepRecord Trainer::train_step(long long step) {
  const Batch batch = sample_batch(*data_, cfg_.seed, step);
  const SimScene& sc = data_->sim.at(static_cast<std::size_t>(batch.scene));
  const SimView& vi = sc.views.at(static_cast<std::size_t>(batch.view_i));
  const SimView& vj = sc.views.at(static_cast<std::size_t>(batch.view_j));
  StepRecord rec;
  rec.step = step;
  rec.batch = batch;
  rec.lambda_vc = cfg_.lambda_vc(step);
  rec.lr_net = cfg_.lr_net_at(step);
  rec.lr_tex = cfg_.lr_tex_at(step);

  GeneratorInputs<float> in;
  in.a_i = domain_a_input(batch.scene, vi.buf, vi.reference);
  in.b = image_to_tensor<float>(data_->real.at(static_cast<std::size_t>(batch.real)), 2.0, -1.0);
  if (rec.lambda_vc > 0) {
    ad::NoGradGuard guard;
    const ad::Tensorf b_j = net_.decode_b(net_.encode_a(domain_a_input(batch.scene, vj.buf, vj.reference)));
    const WarpMap map = build_warp(vi.view, vi.buf, vj.view, vj.buf);
    in.warped_j = image_to_tensor<float>(warp_image(tensor_to_image(to_angle_range(b_j)), map));
    in.match.resize(map.winner.size());
    for (std::size_t p = 0; p < map.winner.size(); ++p) in.match[p] = map.matched(p) ? 1 : 0;
  }

  CycleA<float> ca;
  CycleB<float> cb;
  const GeneratorLosses<float> L = generator_losses(net_, in, cfg_.loss, rec.lambda_vc, &ca, &cb);
  rec.adv = L.adv.item();
  rec.cyc = L.cyc.item();
  rec.rec = L.rec.item();
  rec.content = L.content.item();
  rec.ssim_ab = L.ssim_ab.item();
  rec.ssim_ba = L.ssim_ba.item();
  rec.vc = L.vc.item();
  rec.total = L.total.item();
  ad::backward(L.total);
  net_.discriminator().zero_grad();
  const ad::Tensorf D = discriminator_loss(net_, in.a_i, in.b, cb.a_hat, ca.b_hat, cfg_.loss);
  rec.dis = D.item();
  if (!rec.finite()) {
    net_.generator().zero_grad();
    for (auto& t : textures_) t.zero_grad();
    throw NumericalError("non-finite loss at step " + std::to_string(step) + ": " + rec.csv_row());
  }
  net_.generator().adam_step(rec.lr_net);
  if (uses_texture()) textures_[static_cast<std::size_t>(batch.scene)].adam_step(rec.lr_tex);
  ad::backward(D);
  net_.discriminator().adam_step(rec.lr_net);
  return rec;
}

void Trainer::save_checkpoint(const std::filesystem::path& dir, long long step) const {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError(dir.string() + ": cannot create checkpoint directory: " + ec.message());
  std::vector<ad::NamedTensor> all;
  ad::append_store(all, net_.generator(), "G/");
  ad::append_store(all, net_.discriminator(), "D/");
  json keys = json::array();
  for (std::size_t k = 0; k < textures_.size(); ++k) {
    ad::append_store(all, textures_[k], "T" + std::to_string(k) + "/");
    write_texture(dir / ("texture_" + std::to_string(k) + ".nttex"), texture_snapshot(static_cast<int>(k)));
  }
  for (const auto& s : data_->sim) keys.push_back({{"scene_id", s.scene.scene_id()}, {"seed", s.scene.seed()}});
  all.push_back({"meta#step", {}, {static_cast<float>(step)}});
  ad::write_checkpoint(dir / "state.ckpt", all);
  write_text(dir / "run.json", json(cfg_).dump(2));
  write_text(dir / "scenes.json", keys.dump(2));
  json real = json::array();
  for (const auto& [id, seed] : data_->real_keys) real.push_back({{"scene_id", id}, {"seed", seed}});
  write_text(dir / "real_scenes.json", real.dump(2));
}

long long Trainer::load_checkpoint(const std::filesystem::path& dir) {
  const auto all = ad::read_checkpoint(dir / "state.ckpt");
  ad::restore_store(all, net_.generator(), "G/");
  ad::restore_store(all, net_.discriminator(), "D/");
  for (std::size_t k = 0; k < textures_.size(); ++k) ad::restore_store(all, textures_[k], "T" + std::to_string(k) + "/");
  for (const auto& t : all)
    if (t.name == "meta#step") return static_cast<long long>(t.values.at(0));
  throw IoError((dir / "state.ckpt").string() + ": missing meta#step");
}

Image LoadedModel::translate(int scene, const RayBuffer& buf, const Image& reference) const {
  if (textures.empty()) return translate_view(*net, nullptr, buf, reference);
  return translate_view(*net, &textures.at(static_cast<std::size_t>(scene)), buf, reference);
}

LoadedModel load_model(const std::filesystem::path& dir, const std::vector<Scene>& sim_scenes) {
  LoadedModel m;
  try {
    json::parse(read_text(dir / "run.json")).get_to(m.config);
  } catch (const json::exception& e) {
    throw IoError((dir / "run.json").string() + ": " + e.what());
  }
  m.net = std::make_unique<TranslationCycle<float>>(m.config.arch, derive_seed(m.config.seed, {0x4e7}));
  const auto all = ad::read_checkpoint(dir / "state.ckpt");
  ad::restore_store(all, m.net->generator(), "G/");
  if (m.config.arch.tex_channels > 0) {
    json keys;
    try {
      keys = json::parse(read_text(dir / "scenes.json"));
    } catch (const json::exception& e) {
      throw IoError((dir / "scenes.json").string() + ": " + e.what());
    }
    for (const Scene& s : sim_scenes) {
      std::size_t k = 0;
      while (k < keys.size() &&
             !(keys[k].at("scene_id").get<int>() == s.scene_id() && keys[k].at("seed").get<std::uint64_t>() == s.seed()))
        ++k;
      if (k == keys.size())
        throw ConfigError("checkpoint " + dir.string() + " has no texture for scene " + std::to_string(s.scene_id()));
      std::vector<Aabb> boxes;
      for (const auto& o : s.objects()) boxes.push_back(o.bounds);
      m.textures.push_back(read_texture(dir / ("texture_" + std::to_string(k) + ".nttex"), std::move(boxes)));
    }
  }
  return m;
}

namespace {

void rewrite_log_until(const std::filesystem::path& log, long long last_step) {
  std::string kept = StepRecord::csv_header() + "\n";
  if (std::filesystem::exists(log)) {
    std::istringstream in(read_text(log));
    std::string line;
    std::getline(in, line);
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      if (std::stoll(line.substr(0, line.find(','))) > last_step) break;
      kept += line + "\n";
    }
  }
  write_text(log, kept);
}

}  // namespace

void run_training(const RunConfig& cfg, std::shared_ptr<const TrainingData> data, const std::filesystem::path& out_dir,
                  const RunOptions& opts) {
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) throw IoError(out_dir.string() + ": cannot create output directory: " + ec.message());
  Trainer trainer(cfg, data);
  const auto log_path = out_dir / "loss.csv";
  long long start = 0;
  if (opts.resume) {
    start = trainer.load_checkpoint(*opts.resume) + 1;
    rewrite_log_until(log_path, start - 1);
  } else {
    write_text(log_path, StepRecord::csv_header() + "\n");
  }
  std::ofstream log(log_path, std::ios::app);
  if (!log) throw IoError(log_path.string() + ": cannot open for appending");
  auto pad = [](long long s) {
    char b[32];
    std::snprintf(b, sizeof b, "%07lld", s);
    return std::string(b);
  };
  for (long long step = start; step < cfg.iterations; ++step) {
    StepRecord rec;
    try {
      rec = trainer.train_step(step);
    } catch (const NumericalError& e) {
      const Batch b = sample_batch(*data, cfg.seed, step);
      auto nonfinite = [](const ad::ParamStore<float>& store) {
        std::size_t n = 0;
        for (const auto& [_, entry] : store.entries())
          for (float v : entry.param.value()) n += std::isfinite(v) ? 0 : 1;
        return n;
      };
      const json dump = {{"step", step},
                         {"error", e.what()},
                         {"batch", {{"scene", b.scene}, {"view_i", b.view_i}, {"view_j", b.view_j}, {"real", b.real}}},
                         {"lambda_vc", cfg.lambda_vc(step)},
                         {"lr_net", cfg.lr_net_at(step)},
                         {"nonfinite_generator_params", nonfinite(trainer.net().generator())},
                         {"nonfinite_discriminator_params", nonfinite(trainer.net().discriminator())}};
      const auto path = out_dir / ("nan_step_" + std::to_string(step) + ".json");
      write_text(path, dump.dump(2));
      throw NumericalError(std::string(e.what()) + " (diagnostics: " + path.string() + ")");
    }
    log << rec.csv_row() << '\n';
    log.flush();
    if (!log) throw IoError(log_path.string() + ": write failed");
    if (opts.on_step) opts.on_step(rec);
    if ((step + 1) % cfg.checkpoint_every == 0 && step + 1 < cfg.iterations)
      trainer.save_checkpoint(out_dir / ("ckpt_" + pad(step)), step);
  }
  trainer.save_checkpoint(out_dir / "final", cfg.iterations - 1);
}

namespace {

// A run is identified by its hyperparameters and the (id, seed) of its
// scenes; the scene file paths themselves may differ between invocations.
bool same_run(const std::filesystem::path& ckpt, const RunConfig& cfg, const TrainingData& data) {
  const auto p = ckpt / "run.json";
  if (!std::filesystem::exists(p) || !std::filesystem::exists(ckpt / "state.ckpt")) return false;
  auto strip = [](json j) {
    j.erase("scenes_a");
    j.erase("scenes_b");
    return j;
  };
  try {
    if (strip(json::parse(read_text(p))) != strip(json(cfg))) return false;
    json sim = json::array(), real = json::array();
    for (const auto& s : data.sim) sim.push_back({{"scene_id", s.scene.scene_id()}, {"seed", s.scene.seed()}});
    for (const auto& [id, seed] : data.real_keys) real.push_back({{"scene_id", id}, {"seed", seed}});
    if (json::parse(read_text(ckpt / "scenes.json")) != sim) return false;
    const auto real_path = ckpt / "real_scenes.json";
    if (std::filesystem::exists(real_path)) return json::parse(read_text(real_path)) == real;
    return json::parse(read_text(p)).at("scenes_b").size() == real.size();
  } catch (const json::exception&) {
    return false;
  }
}

}  // namespace

std::optional<std::filesystem::path> matching_checkpoint(const RunConfig& cfg, const TrainingData& data,
                                                        const std::filesystem::path& out_dir) {
  if (same_run(out_dir / "final", cfg, data)) return out_dir / "final";
  if (!std::filesystem::is_directory(out_dir)) return std::nullopt;
  std::vector<std::filesystem::path> ckpts;
  for (const auto& e : std::filesystem::directory_iterator(out_dir))
    if (e.is_directory() && e.path().filename().string().rfind("ckpt_", 0) == 0) ckpts.push_back(e.path());
  std::sort(ckpts.rbegin(), ckpts.rend());
  for (const auto& c : ckpts)
    if (same_run(c, cfg, data)) return c;
  return std::nullopt;
}

std::filesystem::path train_or_resume(const RunConfig& cfg, std::shared_ptr<const TrainingData> data,
                                      const std::filesystem::path& out_dir,
                                      std::function<void(const StepRecord&)> on_step) {
  const auto final_dir = out_dir / "final";
  RunOptions opts;
  opts.on_step = std::move(on_step);
  if (auto found = matching_checkpoint(cfg, *data, out_dir)) {
    if (*found == final_dir) return final_dir;
    opts.resume = *found;
  }
  run_training(cfg, std::move(data), out_dir, opts);
  return final_dir;
}

std::vector<Scene> load_scenes(const std::vector<std::string>& paths) {
  std::vector<Scene> out;
  for (const auto& p : paths) out.push_back(load_scene(p));
  return out;
}

}  // namespace neurtex
