// SPDX-License-Identifier: Apache-2.0
#include "neurtex/ablation.hpp"

#include <cstdio>
#include <set>
#include <sstream>

#include "neurtex/errors.hpp"
#include "neurtex/rng.hpp"
#include "neurtex/views.hpp"

namespace neurtex {

std::vector<Image> render_model_sequence(const LoadedModel& model, int scene_index, const Scene& scene,
                                         const std::vector<CameraView>& cams, const SequenceGeometry& geo) {
  if (geo.bufs.size() != cams.size()) throw ContractViolation("render_model_sequence: geometry does not match cameras");
  std::vector<Image> out;
  for (std::size_t t = 0; t < cams.size(); ++t)
    out.push_back(model.translate(scene_index, geo.bufs[t], render_reference(scene, geo.bufs[t])));
  return out;
}

std::vector<std::string> parse_variants(const std::string& list) {
  std::vector<std::string> out;
  std::set<std::string> seen;
  std::stringstream in(list);
  for (std::string v; std::getline(in, v, ',');) {
    if (v.empty()) continue;
    apply_variant(RunConfig{}, v);  // validates the name
    if (!seen.insert(v).second) throw ConfigError("variant '" + v + "' listed twice");
    out.push_back(v);
  }
  if (out.empty()) throw ConfigError("no variants given");
  return out;
}

std::vector<std::vector<CameraView>> ablation_sequences(const std::vector<Scene>& scenes, const AblationEval& eval) {
  if (eval.frames <= 10) throw ConfigError("ablation: need more than 10 frames per sequence");
  std::vector<std::vector<CameraView>> out;
  for (const auto& s : scenes)
    out.push_back(make_pan_sequence(s, eval.frames, derive_seed(eval.seed, {0xe7a1, static_cast<std::uint64_t>(s.scene_id())})));
  return out;
}

AblationRow score_checkpoint(const std::string& variant, const std::filesystem::path& checkpoint,
                             const std::vector<Scene>& scenes, const std::vector<std::vector<CameraView>>& seqs) {
  const LoadedModel model = load_model(checkpoint, scenes);
  AblationRow row;
  row.variant = variant;
  double acc1 = 0, acc10 = 0;
  int n1 = 0, n10 = 0;
  for (std::size_t k = 0; k < scenes.size(); ++k) {
    const SequenceGeometry geo = sequence_geometry(scenes[k], seqs[k]);
    const auto frames = render_model_sequence(model, static_cast<int>(k), scenes[k], seqs[k], geo);
    ConsistencyReport r = evaluate_sequence("scene_" + std::to_string(scenes[k].scene_id()), frames, geo);
    const OrbResult& o1 = r.per_k.at(0);
    const OrbResult& o10 = r.per_k.at(2);
    if (o1.accuracy) {
      acc1 += *o1.accuracy;
      ++n1;
    }
    if (o10.accuracy) {
      acc10 += *o10.accuracy;
      ++n10;
    }
    row.orb1_correct += o1.correct_per_pair;
    row.orb10_correct += o10.correct_per_pair;
    row.of_error += r.of_error;
    row.reports.push_back(std::move(r));
  }
  const double n = static_cast<double>(scenes.size());
  if (n1 > 0) row.orb1_accuracy = acc1 / n1;
  if (n10 > 0) row.orb10_accuracy = acc10 / n10;
  row.orb1_correct /= n;
  row.orb10_correct /= n;
  row.of_error /= n;
  return row;
}

std::vector<AblationRow> run_ablation(const RunConfig& base, const std::vector<std::string>& variants,
                                      const std::filesystem::path& out_dir, const AblationEval& eval,
                                      std::function<void(const std::string&, const StepRecord&)> on_step) {
  const auto sim = load_scenes(base.scenes_a);
  const auto data = std::make_shared<const TrainingData>(build_training_data(sim, load_scenes(base.scenes_b), base));
  const auto seqs = ablation_sequences(sim, eval);
  std::vector<AblationRow> rows;
  for (const auto& v : variants) {
    const RunConfig cfg = apply_variant(base, v);
    std::function<void(const StepRecord&)> cb;
    if (on_step) cb = [&](const StepRecord& r) { on_step(v, r); };
    const auto final_dir = train_or_resume(cfg, data, out_dir / v, cb);
    rows.push_back(score_checkpoint(v, final_dir, sim, seqs));
  }
  return rows;
}

std::string ablation_csv(const std::vector<AblationRow>& rows) {
  std::string out = "variant,orb1_accuracy,orb1_correct,orb10_accuracy,orb10_correct,of_error\n";
  auto opt = [](const std::optional<double>& v) {
    if (!v) return std::string();
    char b[32];
    std::snprintf(b, sizeof b, "%.6g", *v);
    return std::string(b);
  };
  for (const auto& r : rows) {
    char b[256];
    std::snprintf(b, sizeof b, ",%s,%.6g,%s,%.6g,%.6g\n", opt(r.orb1_accuracy).c_str(), r.orb1_correct,
                  opt(r.orb10_accuracy).c_str(), r.orb10_correct, r.of_error);
    out += r.variant + b;
  }
  return out;
}

}  // namespace neurtex
