#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "agpo/objectives.hpp"

namespace agpo {

struct TrainConfig {
  int train_batch = 32;
  int mini_batch = 8;
  int group_size = 8;
  double lr = 1e-6;  // documented default; the reference config runs at 1e-3
  int steps = 600;
  int max_len = 24;
  double temperature = 1.0;
  long long seed = 1;
  Method method = Method::kAgpo;
  int difficulty = 2;
  ObjectiveConfig objective;

  // policy dimensions (vocabulary is fixed by the environment)
  int embed_dim = 16;
  int hidden_dim = 32;
  int window = 8;

  // task pool construction
  int pool_size = 512;
  double filter_lo = 0.1;
  double filter_hi = 0.9;
  int filter_samples = 8;

  void validate() const;  // throws std::invalid_argument naming the constraint

  // objective config with the shared fields (group size, method,
  // temperature) mirrored in
  ObjectiveConfig objective_for_run() const;
};

struct MetricsRow {
  int step = 0;
  double mean_reward = 0.0;
  double mean_entropy = 0.0;
  double mean_resp_len = 0.0;
  double loss = 0.0;
  double masked_frac = 0.0;
  double clipped_frac = 0.0;
  double grad_norm = 0.0;
};

// exact CSV schema: one row per step, floats with 6 decimal places
std::string metrics_csv_header();
std::string metrics_csv_row(const MetricsRow& row);

struct AdamState {
  std::vector<Tensor> m, v;  // field order: embedding, w1, b1, w2, b2
  long t = 0;
  static AdamState like(const PolicyParams& params);
};

// One Adam step (beta1 0.9, beta2 0.999, eps 1e-8) over the five parameter
// tensors; `grads` in the same field order.
void adam_update(PolicyParams& params, AdamState& state,
                 const std::vector<Tensor>& grads, double lr);

struct CollectedBatch {
  Batch batch;  // train_batch groups with advantages attached
  double mean_reward = 0.0;
  double mean_entropy = 0.0;
  double mean_resp_len = 0.0;
  int degenerate_groups = 0;
};

// Samples train_batch tasks with replacement and G responses each at the
// configured temperature; records sampling-time log-probs and rewards.
// Group g draws from an rng seeded by (step_seed, g), so collection order
// never changes the result.
CollectedBatch collect_batch(const PolicyParams& params, const std::vector<Task>& pool,
                             const TrainConfig& cfg, std::uint64_t step_seed);

struct StepResult {
  PolicyParams params;
  MetricsRow metrics;
};

// Minibatch updates under the configured method. pi_theta_old is the
// sampling-time log-probs carried by the batch and stays fixed across the
// step's minibatches.
StepResult train_step(const PolicyParams& params, const PolicyParams& ref_params,
                      const CollectedBatch& collected, const TrainConfig& cfg,
                      AdamState& adam, int step_index);

// Builds the task pool (generation then solve-rate filtering under the
// initial policy), trains for cfg.steps, streams MetricsRows to the CSV at
// out_path and writes the final parameter snapshot next to it.
std::vector<MetricsRow> run_experiment(const TrainConfig& cfg, const std::string& out_path);

std::string snapshot_path_for(const std::string& csv_path);

}  // namespace agpo
