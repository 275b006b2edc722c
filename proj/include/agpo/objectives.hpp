#pragma once

#include <string>
#include <vector>

#include "agpo/env.hpp"
#include "agpo/graph.hpp"
#include "agpo/policy.hpp"

namespace agpo {

// How per-token quantities enter the clipped surrogate. kTokenMean clips
// each token's ratio and averages the per-token terms over the response.
// kSequenceSum forms the literal sequence-level ratio (exponential of the
// summed per-token log-prob deltas) and applies one clipped term per
// response, with the KL summed over tokens. Both satisfy J == 0 at
// theta == theta_old.
enum class Aggregation { kTokenMean, kSequenceSum };

enum class Method { kPpoGroup, kGrpo, kAgpo, kAgpoNoMask, kAgpoNoClip };

const char* aggregation_name(Aggregation a);
Aggregation aggregation_from_name(const std::string& name);
const char* method_name(Method m);
Method method_from_name(const std::string& name);

struct ObjectiveConfig {
  double epsilon = 0.2;  // ratio clip range, in (0, 1)
  double beta = 0.0;     // KL weight, >= 0
  int group_size = 8;
  Aggregation aggregation = Aggregation::kTokenMean;
  Method method = Method::kGrpo;
  double temperature = 1.0;  // log-prob evaluation temperature

  void validate() const;
};

// One question's G sampled responses with sampling-time log-probs and
// binary rewards.
struct RolloutGroup {
  Task task;
  std::vector<TokenSequence> responses;
  std::vector<std::vector<double>> old_logprobs;
  std::vector<double> rewards;

  int size() const { return static_cast<int>(responses.size()); }
};

struct AdvantageSet {
  std::vector<double> advantages;
  bool degenerate = false;  // all rewards equal; advantages are all zero
};

struct ScoredGroup {
  RolloutGroup group;
  AdvantageSet adv;
};
using Batch = std::vector<ScoredGroup>;

// --- value-level operations (also the oracles for the graph path) ----------

// A_i = (r_i - mean) / population std; zero-variance groups are flagged
// degenerate and get exactly-zero advantages.
AdvantageSet normalize_advantages(const std::vector<double>& rewards);

// r_t = exp(new_t - old_t)
std::vector<double> prob_ratio(const std::vector<double>& new_logprob,
                               const std::vector<double>& old_logprob);

// min(r_t * A, clip(r_t, 1-eps, 1+eps) * A)
std::vector<double> clipped_term(const std::vector<double>& ratio, double advantage,
                                 double epsilon);

// k3 estimator exp(ref - new) - (ref - new) - 1, elementwise; always >= 0
std::vector<double> kl_penalty(const std::vector<double>& new_logprob,
                               const std::vector<double>& ref_logprob);

// Pure batch-reduction core of the adaptive loss: per-question loss is
// -J (clipped at zero when use_clip); degenerate groups are dropped from
// numerator and denominator when use_mask. With both flags off this is
// exactly the negated mean of J over all groups (the GRPO/PPO baseline).
struct AdaptiveReduce {
  double loss = 0.0;
  std::vector<bool> masked;
  std::vector<bool> clipped;
  bool all_masked = false;
};
AdaptiveReduce adaptive_batch_reduce(const std::vector<double>& group_J,
                                     const std::vector<bool>& degenerate,
                                     bool use_mask, bool use_clip);

// --- differentiable path -----------------------------------------------------

// Builds objective graphs over one set of policy leaves bound to the new
// parameters. Reference log-probs are baked as constants (pi_ref is frozen),
// old log-probs come from the rollouts.
class ObjectiveBuilder {
 public:
  ObjectiveBuilder(Graph& g, const PolicyParams& new_params,
                   const PolicyParams& ref_params, const ObjectiveConfig& cfg);

  // J for one group: (1/G) sum_i aggregate(clipped term - beta * KL).
  Node group_objective(const RolloutGroup& group, const AdvantageSet& adv);

  void bind(Bindings& binds, const PolicyParams& new_params) const;
  const PolicyLeaves& leaves() const { return leaves_; }

 private:
  Graph* g_;
  ObjectiveConfig cfg_;
  PolicyLeaves leaves_;
  SequenceLogProbBuilder lp_builder_;
  const PolicyParams* ref_params_;
};

struct BatchLossGraph {
  Node loss;                  // scalar; set as the graph root by the builders
  std::vector<Node> group_J;  // per-group objective values
  std::vector<bool> masked;
  bool all_masked = false;
};

// use_mask/use_clip select the adaptive-loss variants:
//   (true, true)  adaptive loss; (true, false) mask only;
//   (false, true) clip only;     (false, false) negated-mean baseline.
BatchLossGraph build_batch_loss(Graph& g, ObjectiveBuilder& builder, const Batch& batch,
                                bool use_mask, bool use_clip);

// --- spec-shaped scalar wrappers --------------------------------------------

double grpo_objective(const RolloutGroup& group, const AdvantageSet& adv,
                      const PolicyParams& new_params, const PolicyParams& ref_params,
                      const ObjectiveConfig& cfg);

struct AdaptiveLossValue {
  double loss = 0.0;
  std::vector<bool> masked;
  std::vector<bool> clipped;
  bool all_masked = false;
};

AdaptiveLossValue agpo_loss(const Batch& batch, const PolicyParams& new_params,
                            const PolicyParams& ref_params, const ObjectiveConfig& cfg);

double baseline_loss(const Batch& batch, const PolicyParams& new_params,
                     const PolicyParams& ref_params, const ObjectiveConfig& cfg);

}  // namespace agpo
