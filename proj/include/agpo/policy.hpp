#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "agpo/graph.hpp"
#include "agpo/rng.hpp"
#include "agpo/tensor.hpp"

namespace agpo {

// Prompt plus (possibly partial) response. The prompt is tokens[0..prompt_len),
// the response is everything after it.
struct TokenSequence {
  std::vector<int> tokens;
  int prompt_len = 0;

  int response_len() const { return static_cast<int>(tokens.size()) - prompt_len; }
  int response_token(int t) const { return tokens[prompt_len + t]; }
};

// Next-token distribution. Sampling and probabilities honor the stored
// temperature; the logits are taken as-is (any PAD masking has already
// been applied by the policy forward pass).
struct TokenDist {
  Tensor logits;  // rank-1 (vocab)
  double temperature = 1.0;

  std::vector<double> probs() const;  // softmax(logits / temperature)
};

// Shannon entropy of the distribution in nats. Zero-probability entries
// contribute nothing.
double entropy(const TokenDist& dist);

// Mean-pooled-embedding policy: the last `window` context tokens (left-padded
// with PAD) are embedded, averaged, passed through one tanh hidden layer and
// a linear output layer. By convention PAD is the last vocabulary index and
// EOS the one before it; PAD is excluded from every sampling distribution by
// a large negative logit mask.
struct PolicyParams {
  int vocab = 0;
  int embed_dim = 0;
  int hidden_dim = 0;
  int window = 0;
  Tensor embedding;  // (vocab, embed_dim)
  Tensor w1;         // (embed_dim, hidden_dim)
  Tensor b1;         // (1, hidden_dim)
  Tensor w2;         // (hidden_dim, vocab)
  Tensor b2;         // (1, vocab)

  int pad_token() const { return vocab - 1; }
  int eos_token() const { return vocab - 2; }

  // embeddings and weights uniform in [-0.1, 0.1], biases zero
  static PolicyParams init(int vocab, int embed_dim, int hidden_dim, int window,
                           std::uint64_t seed);

  long param_count() const;
  bool all_finite() const;

  // Flat binary format: header (vocab, embed_dim, hidden_dim, window) as
  // little-endian int32, then row-major float64 in field order
  // (embedding, w1, b1, w2, b2).
  void save(const std::string& path) const;
  static PolicyParams load(const std::string& path);
};

inline constexpr double kPadLogitMask = -1e9;

// Scratch-buffer forward evaluator for tight loops (generation, entropy,
// solve-rate estimation). Holds no state other than buffers.
class PolicyForward {
 public:
  explicit PolicyForward(const PolicyParams& params);

  // logits (PAD-masked, unscaled) for the token following ctx[0..len)
  const std::vector<double>& logits(const int* ctx, int len);

  // log softmax(logits / temperature)[token], numerically stable
  double log_prob(const int* ctx, int len, int token, double temperature);

  // entropy in nats of the next-token distribution at temperature 1
  double step_entropy(const int* ctx, int len);

  const PolicyParams& params() const { return *params_; }

 private:
  void window_of(const int* ctx, int len);

  const PolicyParams* params_;
  std::vector<int> win_;
  std::vector<double> pooled_, hidden_, logits_, probs_;
};

// --- spec-shaped operations -------------------------------------------------

TokenDist logits(const PolicyParams& params, const TokenSequence& ctx);

int sample_token(const TokenDist& dist, Rng& rng);

struct Generation {
  TokenSequence seq;
  std::vector<double> logprobs;  // per response token, at sampling time
};

Generation generate(const PolicyParams& params, const TokenSequence& prompt,
                    int max_len, double temperature, Rng& rng);

// Per-response-token log-probabilities under `params` given the true prefix.
std::vector<double> sequence_logprob(const PolicyParams& params,
                                     const TokenSequence& seq, double temperature);

// Mean per-position entropy (temperature 1) over the response.
double token_entropy(const PolicyParams& params, const TokenSequence& seq);

// --- differentiable path ----------------------------------------------------

// Leaf handles for one policy inside a graph.
struct PolicyLeaves {
  Node embedding, w1, b1, w2, b2;

  static PolicyLeaves declare(Graph& g, const PolicyParams& like,
                              const std::string& prefix = "");
  void bind(Bindings& binds, const PolicyParams& params) const;
};

// Builds per-response-token log-probability nodes. Identical context
// windows share one logits subgraph (a DAG), which keeps minibatch graphs
// small once the policy repeats itself. The log-softmax max-subtraction
// constants are computed from `stab` at build time; they cancel exactly,
// so evaluations at other nearby parameter values stay correct.
class SequenceLogProbBuilder {
 public:
  SequenceLogProbBuilder(Graph& g, PolicyLeaves leaves, const PolicyParams& stab,
                         double temperature);

  std::vector<Node> build(const TokenSequence& seq);

 private:
  struct WindowNodes {
    Node scaled;  // (1, vocab) masked logits / temperature
    Node lse;     // scalar log-sum-exp of (scaled - m)
    double m;
  };
  const WindowNodes& window_nodes(const std::vector<int>& window);

  Graph* g_;
  PolicyLeaves leaves_;
  PolicyForward plain_;
  double temperature_;
  Node pool_row_;  // (1, window) constant of 1/window
  Node mask_row_;  // (1, vocab) PAD mask
  std::map<std::vector<int>, WindowNodes> memo_;
};

}  // namespace agpo
