// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "neurtex/metrics.hpp"
#include "neurtex/trainer.hpp"

namespace neurtex {

/// Translated frames of a camera sequence, one independent render per view.
std::vector<Image> render_model_sequence(const LoadedModel& model, int scene_index, const Scene& scene,
                                         const std::vector<CameraView>& cams, const SequenceGeometry& geo);

struct AblationEval {
  int frames = 60;        // pan length per domain-A scene
  std::uint64_t seed = 7; // pan paths
};

struct AblationRow {
  std::string variant;
  std::optional<double> orb1_accuracy, orb10_accuracy;  // mean over scenes with a defined value
  double orb1_correct = 0, orb10_correct = 0;           // mean correct matches per pair
  double of_error = 0;
  std::vector<ConsistencyReport> reports;               // one per domain-A scene
};

/// "no-tex,no-vc,full" -> list; rejects unknown or repeated names.
std::vector<std::string> parse_variants(const std::string& list);

/// Pan sequences used to score every variant (same cameras for all).
std::vector<std::vector<CameraView>> ablation_sequences(const std::vector<Scene>& scenes, const AblationEval& eval);

/// Trains each variant into out_dir/<variant> (reusing or resuming earlier
/// work there) and scores it on pans of the domain-A scenes.
std::vector<AblationRow> run_ablation(const RunConfig& base, const std::vector<std::string>& variants,
                                      const std::filesystem::path& out_dir, const AblationEval& eval = {},
                                      std::function<void(const std::string&, const StepRecord&)> on_step = {});

/// Scores a trained checkpoint directory on the given sequences.
AblationRow score_checkpoint(const std::string& variant, const std::filesystem::path& checkpoint,
                             const std::vector<Scene>& scenes, const std::vector<std::vector<CameraView>>& seqs);

/// variant,orb1_accuracy,orb1_correct,orb10_accuracy,orb10_correct,of_error
std::string ablation_csv(const std::vector<AblationRow>& rows);

}  // namespace neurtex
