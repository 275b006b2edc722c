#include "agpo/trainer.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <stdexcept>

namespace agpo {

void TrainConfig::validate() const {
  if (train_batch < 1) throw std::invalid_argument("train_batch must be >= 1");
  if (mini_batch < 1) throw std::invalid_argument("mini_batch must be >= 1");
  if (train_batch % mini_batch != 0)
    throw std::invalid_argument("mini_batch must divide train_batch (" +
                                std::to_string(mini_batch) + " does not divide " +
                                std::to_string(train_batch) + ")");
  if (group_size < 2) throw std::invalid_argument("group_size must be >= 2");
  if (!(lr > 0.0)) throw std::invalid_argument("lr must be > 0");
  if (steps < 0) throw std::invalid_argument("steps must be >= 0");
  if (max_len < 1) throw std::invalid_argument("max_len must be >= 1");
  if (!(temperature > 0.0)) throw std::invalid_argument("temperature must be > 0");
  if (difficulty < 1 || difficulty > 6)
    throw std::invalid_argument("difficulty must be in [1, 6]");
  if (embed_dim < 1 || hidden_dim < 1 || window < 1)
    throw std::invalid_argument("embed_dim, hidden_dim and window must be >= 1");
  if (pool_size < 1) throw std::invalid_argument("pool_size must be >= 1");
  if (!(0.0 <= filter_lo && filter_lo <= filter_hi && filter_hi <= 1.0))
    throw std::invalid_argument("filter bounds must satisfy 0 <= lo <= hi <= 1");
  if (filter_samples < 1) throw std::invalid_argument("filter_samples must be >= 1");
  objective_for_run().validate();
}

ObjectiveConfig TrainConfig::objective_for_run() const {
  ObjectiveConfig cfg = objective;
  cfg.group_size = group_size;
  cfg.method = method;
  cfg.temperature = temperature;
  return cfg;
}

std::string metrics_csv_header() {
  return "step,mean_reward,mean_entropy,mean_resp_len,loss,masked_frac,clipped_frac,"
         "grad_norm";
}

std::string metrics_csv_row(const MetricsRow& r) {
  char buf[256];
  std::snprintf(buf, sizeof(buf), "%d,%.6f,%.6f,%.6f,%.6f,%.6f,%.6f,%.6f", r.step,
                r.mean_reward, r.mean_entropy, r.mean_resp_len, r.loss, r.masked_frac,
                r.clipped_frac, r.grad_norm);
  return buf;
}

AdamState AdamState::like(const PolicyParams& p) {
  AdamState s;
  for (const Tensor* t : {&p.embedding, &p.w1, &p.b1, &p.w2, &p.b2}) {
    s.m.push_back(Tensor::zeros(t->shape));
    s.v.push_back(Tensor::zeros(t->shape));
  }
  return s;
}

void adam_update(PolicyParams& params, AdamState& state,
                 const std::vector<Tensor>& grads, double lr) {
  constexpr double kBeta1 = 0.9, kBeta2 = 0.999, kEps = 1e-8;
  Tensor* fields[5] = {&params.embedding, &params.w1, &params.b1, &params.w2,
                       &params.b2};
  if (grads.size() != 5) throw std::invalid_argument("adam_update: need 5 gradients");
  ++state.t;
  const double bc1 = 1.0 - std::pow(kBeta1, static_cast<double>(state.t));
  const double bc2 = 1.0 - std::pow(kBeta2, static_cast<double>(state.t));
  for (int f = 0; f < 5; ++f) {
    if (!fields[f]->same_shape(grads[f]))
      throw std::invalid_argument("adam_update: gradient shape mismatch");
    double* x = fields[f]->data.data();
    double* m = state.m[f].data.data();
    double* v = state.v[f].data.data();
    const double* g = grads[f].data.data();
    const int n = fields[f]->numel();
    for (int k = 0; k < n; ++k) {
      m[k] = kBeta1 * m[k] + (1.0 - kBeta1) * g[k];
      v[k] = kBeta2 * v[k] + (1.0 - kBeta2) * g[k] * g[k];
      const double mhat = m[k] / bc1;
      const double vhat = v[k] / bc2;
      x[k] -= lr * mhat / (std::sqrt(vhat) + kEps);
    }
  }
}

CollectedBatch collect_batch(const PolicyParams& params, const std::vector<Task>& pool,
                             const TrainConfig& cfg, std::uint64_t step_seed) {
  if (pool.empty()) throw std::invalid_argument("collect_batch: empty task pool");
  CollectedBatch out;
  Rng pick_rng(derive_seed(step_seed, {0x9a5e}));
  double reward_sum = 0.0, entropy_sum = 0.0, len_sum = 0.0;
  int responses = 0;
  for (int b = 0; b < cfg.train_batch; ++b) {
    const Task& task = pool[pick_rng.uniform_int(static_cast<int>(pool.size()))];
    ScoredGroup sg;
    sg.group.task = task;
    Rng group_rng(derive_seed(step_seed, {0x6706, static_cast<std::uint64_t>(b)}));
    for (int i = 0; i < cfg.group_size; ++i) {
      Generation gen = generate(params, task.prompt, cfg.max_len, cfg.temperature,
                                group_rng);
      std::vector<int> resp(gen.seq.tokens.begin() + gen.seq.prompt_len,
                            gen.seq.tokens.end());
      const double reward = verify(task, resp).reward;
      reward_sum += reward;
      entropy_sum += token_entropy(params, gen.seq);
      len_sum += gen.seq.response_len();
      ++responses;
      sg.group.rewards.push_back(reward);
      sg.group.responses.push_back(std::move(gen.seq));
      sg.group.old_logprobs.push_back(std::move(gen.logprobs));
    }
    sg.adv = normalize_advantages(sg.group.rewards);
    out.degenerate_groups += sg.adv.degenerate ? 1 : 0;
    out.batch.push_back(std::move(sg));
  }
  out.mean_reward = reward_sum / responses;
  out.mean_entropy = entropy_sum / responses;
  out.mean_resp_len = len_sum / responses;
  return out;
}

namespace {

struct MethodFlags {
  bool use_mask;
  bool use_clip;
};

MethodFlags flags_for(Method m) {
  switch (m) {
    case Method::kAgpo: return {true, true};
    case Method::kAgpoNoMask: return {false, true};
    case Method::kAgpoNoClip: return {true, false};
    case Method::kGrpo:
    case Method::kPpoGroup: return {false, false};
  }
  return {false, false};
}

}  // namespace

StepResult train_step(const PolicyParams& params, const PolicyParams& ref_params,
                      const CollectedBatch& collected, const TrainConfig& cfg,
                      AdamState& adam, int step_index) {
  if (static_cast<int>(collected.batch.size()) != cfg.train_batch)
    throw std::invalid_argument("train_step: batch size != train_batch");
  const MethodFlags flags = flags_for(cfg.method);
  ObjectiveConfig ocfg = cfg.objective_for_run();
  if (cfg.method == Method::kPpoGroup) ocfg.beta = 0.0;

  StepResult out;
  out.params = params;
  const int n_minibatches = cfg.train_batch / cfg.mini_batch;
  double loss_sum = 0.0, grad_norm_sum = 0.0;
  int executed = 0;
  long clip_hits = 0, clip_denominator = 0;

  for (int mb = 0; mb < n_minibatches; ++mb) {
    Batch minibatch(collected.batch.begin() + mb * cfg.mini_batch,
                    collected.batch.begin() + (mb + 1) * cfg.mini_batch);
    Graph g;
    ObjectiveBuilder builder(g, out.params, ref_params, ocfg);
    BatchLossGraph blg = build_batch_loss(g, builder, minibatch, flags.use_mask,
                                          flags.use_clip);
    if (blg.all_masked) continue;  // update skipped; visible via masked_frac

    g.set_root(blg.loss);
    Bindings binds(g);
    builder.bind(binds, out.params);
    Workspace ws;
    EvalResult res = g.gradient(ws, binds);

    for (std::size_t q = 0; q < minibatch.size(); ++q) {
      if (flags.use_mask && blg.masked[q]) continue;
      ++clip_denominator;
      if (flags.use_clip && g.scalar_of(ws, blg.group_J[q]) > 0.0) ++clip_hits;
    }

    double norm_sq = 0.0;
    for (const Tensor& t : res.grads)
      for (double v : t.data) norm_sq += v * v;
    if (!std::isfinite(norm_sq))
      throw std::runtime_error("train_step: non-finite gradient at step " +
                               std::to_string(step_index));

    adam_update(out.params, adam, res.grads, cfg.lr);
    loss_sum += res.value.value();
    grad_norm_sum += std::sqrt(norm_sq);
    ++executed;
  }

  MetricsRow& row = out.metrics;
  row.step = step_index;
  row.mean_reward = collected.mean_reward;
  row.mean_entropy = collected.mean_entropy;
  row.mean_resp_len = collected.mean_resp_len;
  row.loss = executed ? loss_sum / executed : 0.0;
  row.masked_frac = static_cast<double>(collected.degenerate_groups) / cfg.train_batch;
  row.clipped_frac =
      clip_denominator ? static_cast<double>(clip_hits) / clip_denominator : 0.0;
  row.grad_norm = executed ? grad_norm_sum / executed : 0.0;
  return out;
}

std::string snapshot_path_for(const std::string& csv_path) {
  if (csv_path.size() > 4 && csv_path.substr(csv_path.size() - 4) == ".csv")
    return csv_path.substr(0, csv_path.size() - 4) + ".params";
  return csv_path + ".params";
}

std::vector<MetricsRow> run_experiment(const TrainConfig& cfg, const std::string& out_path) {
  cfg.validate();
  std::ofstream csv(out_path, std::ios::binary);  // fail before any compute
  if (!csv) throw std::runtime_error("cannot open '" + out_path + "' for writing");
  csv << metrics_csv_header() << "\n";

  const std::uint64_t seed = static_cast<std::uint64_t>(cfg.seed);
  PolicyParams params = PolicyParams::init(tok::kVocabSize, cfg.embed_dim,
                                           cfg.hidden_dim, cfg.window,
                                           derive_seed(seed, {0x9d17}));
  const PolicyParams ref_params = params;

  std::vector<Task> pool;
  pool.reserve(cfg.pool_size);
  for (int i = 0; i < cfg.pool_size; ++i)
    pool.push_back(gen_task(derive_seed(seed, {0x7001, static_cast<std::uint64_t>(i)}),
                            cfg.difficulty));
  std::vector<Task> filtered =
      filter_tasks(params, pool, cfg.filter_lo, cfg.filter_hi, cfg.filter_samples,
                   derive_seed(seed, {0xf117}), cfg.max_len, cfg.temperature);
  if (filtered.empty()) {
    std::cerr << "note: solve-rate filter kept no tasks; training on the full pool\n";
    filtered = pool;
  }

  AdamState adam = AdamState::like(params);
  std::vector<MetricsRow> rows;
  rows.reserve(cfg.steps);
  for (int step = 1; step <= cfg.steps; ++step) {
    const std::uint64_t step_seed =
        derive_seed(seed, {0x57e9, static_cast<std::uint64_t>(step)});
    CollectedBatch collected = collect_batch(params, filtered, cfg, step_seed);
    StepResult result = train_step(params, ref_params, collected, cfg, adam, step);
    params = std::move(result.params);
    rows.push_back(result.metrics);
    csv << metrics_csv_row(result.metrics) << "\n";
  }
  csv.flush();
  if (!csv) throw std::runtime_error("write failed for '" + out_path + "'");
  params.save(snapshot_path_for(out_path));
  return rows;
}

}  // namespace agpo
