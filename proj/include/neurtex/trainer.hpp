// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "neurtex/texture.hpp"
#include "neurtex/translation.hpp"
#include "neurtex/views.hpp"

namespace neurtex {

void to_json(nlohmann::json& j, const ViewSamplingConfig& c);
void from_json(const nlohmann::json& j, ViewSamplingConfig& c);

/// Cached training views of one simulated scene, grouped in clusters of
/// nearby cameras so that any ordered pair inside a cluster overlaps.
struct PoolConfig {
  int views_per_scene = 300;  // domain A, multiple of cluster
  int cluster = 3;
  double near_radius = 6.0;   // mm between look-at points inside a cluster
  double min_overlap = 0.1;   // matched fraction of the anchor frame, both directions
  int max_retries = 30;       // per near view
  int real_views_per_scene = 300;  // domain B
  ViewSamplingConfig view;
};
void to_json(nlohmann::json& j, const PoolConfig& c);
void from_json(const nlohmann::json& j, PoolConfig& c);

struct RunConfig {
  long long iterations = 20'000;
  double lr_net = 1e-4;  // generators, encoders and discriminators
  double lr_tex = 1e-3;
  long long halving = 10'000;  // both rates halve every `halving` steps
  ArchConfig arch;
  LossWeights loss;  // vc_start defaults to the desk-scale 1'000
  int tex_height = 32, tex_width = 32;
  std::uint64_t seed = 1;
  std::vector<std::string> scenes_a, scenes_b;  // scene JSON paths
  PoolConfig pool;
  long long checkpoint_every = 1'000;

  RunConfig() { loss.vc_start = 1'000; }
  /// Long schedule: 500k iterations, lambda_vc from 10k, halving every 100k.
  static RunConfig long_scale();

  double lambda_vc(long long step) const { return loss.lambda_vc(step); }
  double lr_net_at(long long step) const;
  double lr_tex_at(long long step) const;
  /// Throws ConfigError on out-of-contract values.
  void validate() const;
};
void to_json(nlohmann::json& j, const RunConfig& c);
void from_json(const nlohmann::json& j, RunConfig& c);
/// Loads a run config; relative scene paths resolve against the file's directory.
RunConfig load_run_config(const std::filesystem::path& path);

/// The three ablations: "full", "no-vc" (lambda_vc = 0) and "no-tex"
/// (additionally no neural texture input). Throws ConfigError otherwise.
RunConfig apply_variant(RunConfig cfg, const std::string& variant);

struct SimView {
  CameraView view;
  RayBuffer buf;
  Image reference;  // render_reference, [0, 1]
};

struct SimScene {
  Scene scene;
  std::vector<SimView> views;  // clusters of PoolConfig::cluster consecutive views
};

struct TrainingData {
  std::vector<SimScene> sim;
  std::vector<Image> real;  // render_photoreal of the domain-B scenes, [0, 1]
  std::vector<std::pair<int, std::uint64_t>> real_keys;  // (scene id, seed) of the domain-B scenes
  int cluster = 3;
};

/// Renders the view pools. Deterministic in (scenes, cfg.seed, cfg.pool);
/// throws SamplingError when a near view with enough overlap cannot be found.
TrainingData build_training_data(const std::vector<Scene>& sim_scenes, const std::vector<Scene>& real_scenes,
                                 const RunConfig& cfg);

/// Fraction of view-i pixels that receive a valid splat from view j.
double overlap_fraction(const SimView& i, const SimView& j);

struct Batch {
  long long step = 0;
  int scene = 0;
  int view_i = 0, view_j = 0;  // indices into the scene's pool, same cluster, i != j
  int real = 0;
};

/// Keyed by (seed, step) only, so a resumed run sees the same batches.
Batch sample_batch(const TrainingData& data, std::uint64_t seed, long long step);

struct StepRecord {
  long long step = 0;
  double adv = 0, cyc = 0, rec = 0, content = 0, ssim_ab = 0, ssim_ba = 0, vc = 0, total = 0, dis = 0;
  double lambda_vc = 0, lr_net = 0, lr_tex = 0;
  Batch batch;

  bool finite() const;
  static std::string csv_header();
  std::string csv_row() const;
};

class Trainer {
 public:
  Trainer(RunConfig cfg, std::shared_ptr<const TrainingData> data);

  const RunConfig& config() const { return cfg_; }
  TranslationCycle<float>& net() { return net_; }
  const TranslationCycle<float>& net() const { return net_; }
  bool uses_texture() const { return cfg_.arch.tex_channels > 0; }
  /// Texture values of one scene as a trainable (O*P, H, W, N) leaf.
  ad::Tensorf& texture(int scene);
  const NeuralTexture& texture_layout(int scene) const { return layouts_.at(static_cast<std::size_t>(scene)); }
  NeuralTexture texture_snapshot(int scene) const;

  /// One generator + texture Adam step, then one discriminator Adam step.
  /// Throws NumericalError when a loss is not finite (nothing is updated).
  StepRecord train_step(long long step);

  /// Domain-A network input (texture features first, reference in [-1, 1]).
  ad::Tensorf domain_a_input(int scene, const RayBuffer& buf, const Image& reference) const;
  /// b_hat for a simulated view, as an RGB image in [0, 1].
  Image translate(int scene, const RayBuffer& buf, const Image& reference) const;

  /// Checkpoint directory: state.ckpt (networks, textures, Adam state, step),
  /// texture_<k>.nttex per scene and run.json.
  void save_checkpoint(const std::filesystem::path& dir, long long step) const;
  /// Returns the step stored in the checkpoint.
  long long load_checkpoint(const std::filesystem::path& dir);

 private:
  RunConfig cfg_;
  std::shared_ptr<const TrainingData> data_;
  TranslationCycle<float> net_;
  std::vector<NeuralTexture> layouts_;
  std::vector<ad::ParamStore<float>> textures_;  // one store per scene
};

/// Model reloaded from a checkpoint directory for inference.
struct LoadedModel {
  RunConfig config;
  std::unique_ptr<TranslationCycle<float>> net;
  std::vector<NeuralTexture> textures;  // one per requested scene, empty without textures

  /// b_hat of a view of the `scene`-th requested scene, RGB in [0, 1].
  Image translate(int scene, const RayBuffer& buf, const Image& reference) const;
};
/// Loads the generator and the textures of `scenes` (matched by scene id and
/// seed against the training pool). Throws ConfigError for an unknown scene.
LoadedModel load_model(const std::filesystem::path& checkpoint_dir, const std::vector<Scene>& scenes);

struct RunOptions {
  std::optional<std::filesystem::path> resume;  // checkpoint directory
  std::function<void(const StepRecord&)> on_step;
};

/// Trains from step 0 (or the step after the resumed checkpoint) to
/// cfg.iterations - 1. Writes loss.csv (one row per step), ckpt_<step>/
/// every checkpoint_every steps and final/. On resume the log is cut back
/// to the checkpoint's step before appending. A non-finite loss writes
/// nan_step_<k>.json and rethrows.
void run_training(const RunConfig& cfg, std::shared_ptr<const TrainingData> data, const std::filesystem::path& out_dir,
                  const RunOptions& opts = {});

/// final/ when it holds the same run, else the newest matching ckpt_*.
std::optional<std::filesystem::path> matching_checkpoint(const RunConfig& cfg, const TrainingData& data,
                                                        const std::filesystem::path& out_dir);

/// Like run_training, but picks up earlier work in out_dir: returns at once
/// when final/ holds the same run (hyperparameters plus scene ids and seeds),
/// otherwise resumes from the newest matching ckpt_*, otherwise starts fresh.
/// Returns the final/ directory.
std::filesystem::path train_or_resume(const RunConfig& cfg, std::shared_ptr<const TrainingData> data,
                                      const std::filesystem::path& out_dir,
                                      std::function<void(const StepRecord&)> on_step = {});

std::vector<Scene> load_scenes(const std::vector<std::string>& paths);

}  // namespace neurtex
