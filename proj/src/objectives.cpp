#include "agpo/objectives.hpp"

#include <cmath>
#include <stdexcept>

namespace agpo {

const char* aggregation_name(Aggregation a) {
  return a == Aggregation::kTokenMean ? "token-mean" : "sequence-sum";
}

Aggregation aggregation_from_name(const std::string& name) {
  if (name == "token-mean") return Aggregation::kTokenMean;
  if (name == "sequence-sum") return Aggregation::kSequenceSum;
  throw std::invalid_argument("unknown aggregation '" + name +
                              "' (expected token-mean or sequence-sum)");
}

const char* method_name(Method m) {
  switch (m) {
    case Method::kPpoGroup: return "PPO-GROUP";
    case Method::kGrpo: return "GRPO";
    case Method::kAgpo: return "AGPO";
    case Method::kAgpoNoMask: return "AGPO-no-mask";
    case Method::kAgpoNoClip: return "AGPO-no-clip";
  }
  return "?";
}

Method method_from_name(const std::string& name) {
  if (name == "PPO-GROUP") return Method::kPpoGroup;
  if (name == "GRPO") return Method::kGrpo;
  if (name == "AGPO") return Method::kAgpo;
  if (name == "AGPO-no-mask") return Method::kAgpoNoMask;
  if (name == "AGPO-no-clip") return Method::kAgpoNoClip;
  throw std::invalid_argument(
      "unknown method '" + name +
      "' (expected PPO-GROUP, GRPO, AGPO, AGPO-no-mask or AGPO-no-clip)");
}

void ObjectiveConfig::validate() const {
  if (!(epsilon > 0.0 && epsilon < 1.0))
    throw std::invalid_argument("epsilon must satisfy 0 < epsilon < 1");
  if (beta < 0.0) throw std::invalid_argument("beta must be >= 0");
  if (group_size < 2) throw std::invalid_argument("group_size must be >= 2");
  if (!(temperature > 0.0)) throw std::invalid_argument("temperature must be > 0");
}

AdvantageSet normalize_advantages(const std::vector<double>& rewards) {
  const int g = static_cast<int>(rewards.size());
  if (g < 2) throw std::invalid_argument("normalize_advantages: need G >= 2");
  AdvantageSet out;
  out.advantages.assign(g, 0.0);

  double lo = rewards[0], hi = rewards[0], sum = 0.0;
  for (double r : rewards) {
    lo = std::min(lo, r);
    hi = std::max(hi, r);
    sum += r;
  }
  if (hi == lo) {  // binary rewards make exact equality the degeneracy test
    out.degenerate = true;
    return out;
  }
  const double mean = sum / g;
  double var = 0.0;
  for (double r : rewards) var += (r - mean) * (r - mean);
  const double std_dev = std::sqrt(var / g);  // population std
  if (std_dev < 1e-12) {                      // guard for near-equal non-binary input
    out.degenerate = true;
    return out;
  }
  for (int i = 0; i < g; ++i) out.advantages[i] = (rewards[i] - mean) / std_dev;
  return out;
}

std::vector<double> prob_ratio(const std::vector<double>& new_logprob,
                               const std::vector<double>& old_logprob) {
  if (new_logprob.size() != old_logprob.size())
    throw std::invalid_argument("prob_ratio: length mismatch");
  std::vector<double> r(new_logprob.size());
  for (std::size_t t = 0; t < r.size(); ++t)
    r[t] = std::exp(new_logprob[t] - old_logprob[t]);
  return r;
}

std::vector<double> clipped_term(const std::vector<double>& ratio, double advantage,
                                 double epsilon) {
  if (!(epsilon > 0.0 && epsilon < 1.0))
    throw std::invalid_argument("clipped_term: epsilon must be in (0, 1)");
  std::vector<double> out(ratio.size());
  for (std::size_t t = 0; t < ratio.size(); ++t) {
    const double r = ratio[t];
    const double clipped = r < 1.0 - epsilon ? 1.0 - epsilon
                          : r > 1.0 + epsilon ? 1.0 + epsilon
                                              : r;
    out[t] = std::min(r * advantage, clipped * advantage);
  }
  return out;
}

std::vector<double> kl_penalty(const std::vector<double>& new_logprob,
                               const std::vector<double>& ref_logprob) {
  if (new_logprob.size() != ref_logprob.size())
    throw std::invalid_argument("kl_penalty: length mismatch");
  std::vector<double> out(new_logprob.size());
  for (std::size_t t = 0; t < out.size(); ++t) {
    const double s = ref_logprob[t] - new_logprob[t];
    out[t] = std::exp(s) - s - 1.0;
  }
  return out;
}

AdaptiveReduce adaptive_batch_reduce(const std::vector<double>& group_J,
                                     const std::vector<bool>& degenerate,
                                     bool use_mask, bool use_clip) {
  if (group_J.size() != degenerate.size())
    throw std::invalid_argument("adaptive_batch_reduce: size mismatch");
  AdaptiveReduce out;
  const int n = static_cast<int>(group_J.size());
  out.masked.assign(n, false);
  out.clipped.assign(n, false);
  double acc = 0.0;
  int kept = 0;
  for (int q = 0; q < n; ++q) {
    if (use_mask && degenerate[q]) {
      out.masked[q] = true;
      continue;
    }
    double lq = -group_J[q];
    if (use_clip) {
      out.clipped[q] = group_J[q] > 0.0;  // strictly positive J is zeroed
      lq = std::max(0.0, lq);
    }
    acc += lq;
    ++kept;
  }
  if (kept == 0) {
    out.all_masked = true;
    out.loss = 0.0;
  } else {
    out.loss = acc / kept;
  }
  return out;
}

// ---------------------------------------------------------------------------
// differentiable path
// ---------------------------------------------------------------------------

namespace {

Node fold_add(Graph& g, const std::vector<Node>& terms) {
  Node acc = terms.front();
  for (std::size_t i = 1; i < terms.size(); ++i) acc = g.add(acc, terms[i]);
  return acc;
}

// min(x, y) = x - max(x - y, 0); at ties the boundary-as-interior rule
// picks the y branch, whose derivative agrees with x's there.
Node min_of(Graph& g, Node x, Node y) {
  return g.sub(x, g.max_with(g.sub(x, y), 0.0));
}

}  // namespace

ObjectiveBuilder::ObjectiveBuilder(Graph& g, const PolicyParams& new_params,
                                   const PolicyParams& ref_params,
                                   const ObjectiveConfig& cfg)
    : g_(&g),
      cfg_(cfg),
      leaves_(PolicyLeaves::declare(g, new_params)),
      lp_builder_(g, leaves_, new_params, cfg.temperature),
      ref_params_(&ref_params) {
  cfg.validate();
}

void ObjectiveBuilder::bind(Bindings& binds, const PolicyParams& new_params) const {
  leaves_.bind(binds, new_params);
}

Node ObjectiveBuilder::group_objective(const RolloutGroup& group, const AdvantageSet& adv) {
  Graph& g = *g_;
  const int G = group.size();
  if (G < 2) throw std::invalid_argument("group_objective: need G >= 2 responses");
  if (static_cast<int>(group.old_logprobs.size()) != G ||
      static_cast<int>(group.rewards.size()) != G ||
      static_cast<int>(adv.advantages.size()) != G)
    throw std::invalid_argument("group_objective: inconsistent group fields");

  // zero advantages and no KL term: identically zero with zero gradient
  if (adv.degenerate && cfg_.beta == 0.0) return g.constant(0.0);

  const double lo = 1.0 - cfg_.epsilon, hi = 1.0 + cfg_.epsilon;
  std::vector<Node> per_response;
  per_response.reserve(G);

  for (int i = 0; i < G; ++i) {
    const TokenSequence& seq = group.responses[i];
    const std::vector<double>& old_lp = group.old_logprobs[i];
    if (static_cast<int>(old_lp.size()) != seq.response_len())
      throw std::invalid_argument("group_objective: old_logprobs length mismatch");
    const double advantage = adv.advantages[i];

    std::vector<Node> lp = lp_builder_.build(seq);
    const int T = static_cast<int>(lp.size());

    std::vector<double> ref_lp;
    if (cfg_.beta > 0.0)
      ref_lp = sequence_logprob(*ref_params_, seq, cfg_.temperature);

    if (cfg_.aggregation == Aggregation::kTokenMean) {
      std::vector<Node> terms;
      terms.reserve(T);
      for (int t = 0; t < T; ++t) {
        Node ratio = g.exp(g.add(lp[t], -old_lp[t]));
        Node unclipped = g.mul(ratio, advantage);
        Node clipped = g.mul(g.clip(ratio, lo, hi), advantage);
        Node term = min_of(g, unclipped, clipped);
        if (cfg_.beta > 0.0) {
          Node s = g.add(g.neg(lp[t]), ref_lp[t]);  // ref - new
          Node k3 = g.add(g.sub(g.exp(s), s), -1.0);
          term = g.sub(term, g.mul(k3, cfg_.beta));
        }
        terms.push_back(term);
      }
      per_response.push_back(g.mul(fold_add(g, terms), 1.0 / T));
    } else {  // sequence-level ratio from the summed log-prob deltas
      std::vector<Node> deltas;
      deltas.reserve(T);
      for (int t = 0; t < T; ++t) deltas.push_back(g.add(lp[t], -old_lp[t]));
      Node ratio = g.exp(fold_add(g, deltas));
      Node unclipped = g.mul(ratio, advantage);
      Node clipped = g.mul(g.clip(ratio, lo, hi), advantage);
      Node term = min_of(g, unclipped, clipped);
      if (cfg_.beta > 0.0) {
        std::vector<Node> kls;
        kls.reserve(T);
        for (int t = 0; t < T; ++t) {
          Node s = g.add(g.neg(lp[t]), ref_lp[t]);
          kls.push_back(g.add(g.sub(g.exp(s), s), -1.0));
        }
        term = g.sub(term, g.mul(fold_add(g, kls), cfg_.beta));
      }
      per_response.push_back(term);
    }
  }
  return g.mul(fold_add(g, per_response), 1.0 / G);
}

BatchLossGraph build_batch_loss(Graph& g, ObjectiveBuilder& builder, const Batch& batch,
                                bool use_mask, bool use_clip) {
  if (batch.empty()) throw std::invalid_argument("build_batch_loss: empty batch");
  BatchLossGraph out;
  out.masked.assign(batch.size(), false);
  std::vector<Node> kept_losses;
  for (std::size_t q = 0; q < batch.size(); ++q) {
    Node J = builder.group_objective(batch[q].group, batch[q].adv);
    out.group_J.push_back(J);
    if (use_mask && batch[q].adv.degenerate) {
      out.masked[q] = true;
      continue;
    }
    Node lq = g.neg(J);
    if (use_clip) lq = g.max_with(lq, 0.0);
    kept_losses.push_back(lq);
  }
  if (kept_losses.empty()) {
    out.all_masked = true;
    out.loss = g.constant(0.0);
  } else {
    out.loss = g.mul(fold_add(g, kept_losses),
                     1.0 / static_cast<double>(kept_losses.size()));
  }
  return out;
}

// ---------------------------------------------------------------------------
// spec-shaped scalar wrappers
// ---------------------------------------------------------------------------

double grpo_objective(const RolloutGroup& group, const AdvantageSet& adv,
                      const PolicyParams& new_params, const PolicyParams& ref_params,
                      const ObjectiveConfig& cfg) {
  Graph g;
  ObjectiveBuilder builder(g, new_params, ref_params, cfg);
  g.set_root(builder.group_objective(group, adv));
  Bindings binds(g);
  builder.bind(binds, new_params);
  return g.forward(binds).value();
}

namespace {

AdaptiveLossValue batch_loss_value(const Batch& batch, const PolicyParams& new_params,
                                   const PolicyParams& ref_params,
                                   const ObjectiveConfig& cfg, bool use_mask,
                                   bool use_clip) {
  Graph g;
  ObjectiveBuilder builder(g, new_params, ref_params, cfg);
  BatchLossGraph blg = build_batch_loss(g, builder, batch, use_mask, use_clip);
  g.set_root(blg.loss);
  Bindings binds(g);
  builder.bind(binds, new_params);
  Workspace ws;
  g.forward(ws, binds);

  AdaptiveLossValue out;
  out.loss = g.scalar_of(ws, blg.loss);
  out.masked = blg.masked;
  out.all_masked = blg.all_masked;
  out.clipped.assign(batch.size(), false);
  for (std::size_t q = 0; q < batch.size(); ++q)
    if (use_clip && !blg.masked[q])
      out.clipped[q] = g.scalar_of(ws, blg.group_J[q]) > 0.0;
  return out;
}

}  // namespace

AdaptiveLossValue agpo_loss(const Batch& batch, const PolicyParams& new_params,
                            const PolicyParams& ref_params, const ObjectiveConfig& cfg) {
  if (cfg.method != Method::kAgpo)
    throw std::invalid_argument("agpo_loss: cfg.method must be AGPO");
  return batch_loss_value(batch, new_params, ref_params, cfg, true, true);
}

double baseline_loss(const Batch& batch, const PolicyParams& new_params,
                     const PolicyParams& ref_params, const ObjectiveConfig& cfg) {
  if (cfg.method != Method::kGrpo && cfg.method != Method::kPpoGroup)
    throw std::invalid_argument("baseline_loss: cfg.method must be GRPO or PPO-GROUP");
  ObjectiveConfig use = cfg;
  if (cfg.method == Method::kPpoGroup) use.beta = 0.0;  // plain clipped surrogate
  return batch_loss_value(batch, new_params, ref_params, use, false, false).loss;
}

}  // namespace agpo
