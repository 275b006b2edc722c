#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "agpo/trainer.hpp"

namespace agpo {

// Mean metrics over the last 20% of steps (at least one row).
struct WindowStats {
  double reward = 0.0;
  double entropy = 0.0;
  double resp_len = 0.0;
  double masked_frac = 0.0;
  double clipped_frac = 0.0;
};
WindowStats final_window(const std::vector<MetricsRow>& rows);

struct RunSpec {
  Method method = Method::kGrpo;
  long long seed = 1;
  std::string label;     // filesystem-safe; defaults to "<method>_seed<seed>"
  std::string csv_path;  // resolved inside the output directory
};

struct RunOutcome {
  RunSpec spec;
  bool ok = false;
  std::string error;
  std::vector<MetricsRow> rows;
};

// Runs every (method, seed) pair of the matrix, each writing its own CSV
// and parameter snapshot under out_dir. Conflicting output paths are
// rejected before any compute. Pairs run on `jobs` worker threads; every
// run is a pure function of (config, seed), so the schedule cannot change
// the results.
std::vector<RunOutcome> run_matrix(const TrainConfig& base,
                                   const std::vector<Method>& methods,
                                   const std::vector<long long>& seeds,
                                   const std::string& out_dir, int jobs);

struct MethodSummary {
  Method method = Method::kGrpo;
  int seeds = 0;
  WindowStats mean;
  WindowStats stddev;  // population std over seeds
};

// Per-method final-window statistics over the successful runs, in the
// method order of the matrix.
std::vector<MethodSummary> summarize(const std::vector<RunOutcome>& outcomes);

void write_summary_csv(const std::vector<MethodSummary>& summaries,
                       const std::string& path);
std::string summary_table(const std::vector<MethodSummary>& summaries);

// --- gradient validation over the objective stack ---------------------------

struct GradcheckTarget {
  std::string name;
  double max_rel_err = 0.0;
  int instances = 0;
  bool pass = true;
};

struct GradcheckOutcome {
  std::vector<GradcheckTarget> targets;
  bool pass = true;
};

// Finite-difference validation of sequence_logprob, grpo_objective (both
// aggregations) and the adaptive batch loss on randomized small policies
// and rollout batches. Deterministic in `seed`.
GradcheckOutcome run_gradcheck(std::uint64_t seed, int instances_per_target = 24,
                               double tolerance = 1e-3);

}  // namespace agpo
