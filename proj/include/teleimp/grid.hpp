#pragma once

// Prompt-configuration accuracy grid: every (config, phase, trial) is one
// model call on a labelled test scene, scored by phase classification.

#include <array>
#include <filesystem>
#include <optional>
#include <vector>

#include "teleimp/model.hpp"
#include "teleimp/prompt.hpp"

namespace teleimp::eval {

struct TestScene {
  TaskPhase phase = TaskPhase::Entrance;
  std::shared_ptr<const Image> image;
  double u = 0.0, v = 0.0;  // gaze pixel, already marked on the image
  std::string file;
};

/// Labelled test scenes per phase; kept apart from the few-shot exemplars.
class SceneStore {
 public:
  /// `per_phase` Lab renders per phase at centerline fractions away from the
  /// exemplars' midpoint, each with its own noise seed.
  static SceneStore simulated(const sim::GrooveGeometry& geom, int per_phase = 4);
  /// Directory with manifest.json: {"scenes": [{"phase", "file", "u", "v"}]}.
  static SceneStore load(const std::filesystem::path& dir);
  void save(const std::filesystem::path& dir) const;

  void add(TestScene scene);
  /// Error{Configuration} when the phase has no scenes.
  const std::vector<TestScene>& for_phase(TaskPhase phase) const;
  std::size_t size() const;

 private:
  std::array<std::vector<TestScene>, 4> scenes_;
};

struct TrialResult {
  vlm::PromptConfig config;
  TaskPhase phase = TaskPhase::Entrance;
  int trial = 0;
  std::optional<StiffnessMatrix> predicted;  // nullopt: model or parse failure
  bool correct = false;
  std::string error;
};

struct AccuracyCell {
  double mean = 0.0;
  double spread = 0.0;  // binomial standard error
  int correct = 0;
  int n = 0;
  bool operator==(const AccuracyCell&) const = default;
};

/// mean = correct / n, spread = sqrt(mean (1 - mean) / n).
AccuracyCell make_cell(int correct, int n);

struct GridRow {
  vlm::PromptConfig config;
  std::array<AccuracyCell, 4> phases;
  // Means are averages of the phase means; spreads are the binomial SE of the
  // pooled trials.
  AccuracyCell with_slant;
  AccuracyCell no_slant;
  bool operator==(const GridRow&) const = default;
};

struct GridTable {
  std::vector<GridRow> rows;
  int trials = 0;
  std::uint64_t seed = 0;
  double tol = kDefaultClassifyTol;
  bool operator==(const GridTable&) const = default;
};

struct GridOptions {
  int trials = 15;
  std::uint64_t seed = 1;
  double tol = kDefaultClassifyTol;
  unsigned parallelism = 0;  // 0: hardware concurrency; forced to 1 for clients that are not parallel-safe
  // Stratified draws u_i = (perm(i) + U_i) / n per cell, so a cell's correct
  // count matches its confusion rate as closely as n allows.
  bool stratified = true;
};

/// Row for one config from its trials (any order).
GridRow summarize(const vlm::PromptConfig& config, const std::vector<TrialResult>& trials);

/// Model failures and unusable replies are scored incorrect; configuration
/// errors (missing scenes or exemplars, no credential) abort the run.
GridTable run_grid(const std::vector<vlm::PromptConfig>& configs, const GridOptions& options,
                   vlm::ModelClient& client, const vlm::ExemplarStore& exemplars, const SceneStore& scenes,
                   std::vector<TrialResult>* trials_out = nullptr);

/// Overall(With Slant) descending, then Overall(No Slant), then enumeration
/// order. `keep` larger than the table returns every row.
std::vector<vlm::PromptConfig> rank_and_select(const GridTable& table, std::size_t keep);

/// Per-trial seed derived from the run seed and the trial coordinates.
std::uint64_t trial_seed(std::uint64_t seed, const vlm::PromptConfig& config, TaskPhase phase, int trial);

}  // namespace teleimp::eval
