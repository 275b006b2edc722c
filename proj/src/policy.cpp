#include "agpo/policy.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <limits>
#include <stdexcept>

namespace agpo {

std::vector<double> TokenDist::probs() const {
  const int v = logits.numel();
  std::vector<double> p(v);
  double m = -std::numeric_limits<double>::infinity();
  for (int k = 0; k < v; ++k) m = std::max(m, logits.data[k] / temperature);
  double z = 0.0;
  for (int k = 0; k < v; ++k) {
    p[k] = std::exp(logits.data[k] / temperature - m);
    z += p[k];
  }
  for (int k = 0; k < v; ++k) p[k] /= z;
  return p;
}

double entropy(const TokenDist& dist) {
  double h = 0.0;
  for (double p : dist.probs())
    if (p > 0.0) h -= p * std::log(p);
  return h;
}

PolicyParams PolicyParams::init(int vocab, int embed_dim, int hidden_dim, int window,
                                std::uint64_t seed) {
  if (vocab < 3 || embed_dim < 1 || hidden_dim < 1 || window < 1)
    throw std::invalid_argument("PolicyParams::init: bad dimensions");
  PolicyParams p;
  p.vocab = vocab;
  p.embed_dim = embed_dim;
  p.hidden_dim = hidden_dim;
  p.window = window;
  p.embedding = Tensor::zeros({vocab, embed_dim});
  p.w1 = Tensor::zeros({embed_dim, hidden_dim});
  p.b1 = Tensor::zeros({1, hidden_dim});
  p.w2 = Tensor::zeros({hidden_dim, vocab});
  p.b2 = Tensor::zeros({1, vocab});
  Rng rng(derive_seed(seed, {0x1717}));
  for (double& x : p.embedding.data) x = rng.uniform_range(-0.1, 0.1);
  for (double& x : p.w1.data) x = rng.uniform_range(-0.1, 0.1);
  for (double& x : p.w2.data) x = rng.uniform_range(-0.1, 0.1);
  return p;
}

long PolicyParams::param_count() const {
  return static_cast<long>(vocab) * embed_dim + static_cast<long>(embed_dim) * hidden_dim +
         hidden_dim + static_cast<long>(hidden_dim) * vocab + vocab;
}

bool PolicyParams::all_finite() const {
  return embedding.all_finite() && w1.all_finite() && b1.all_finite() &&
         w2.all_finite() && b2.all_finite();
}

namespace {

void write_i32(std::ostream& out, std::int32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v & 0xff),
                        static_cast<unsigned char>((v >> 8) & 0xff),
                        static_cast<unsigned char>((v >> 16) & 0xff),
                        static_cast<unsigned char>((v >> 24) & 0xff)};
  out.write(reinterpret_cast<const char*>(b), 4);
}

std::int32_t read_i32(std::istream& in) {
  unsigned char b[4];
  in.read(reinterpret_cast<char*>(b), 4);
  return static_cast<std::int32_t>(b[0]) | (static_cast<std::int32_t>(b[1]) << 8) |
         (static_cast<std::int32_t>(b[2]) << 16) | (static_cast<std::int32_t>(b[3]) << 24);
}

void write_doubles(std::ostream& out, const Tensor& t) {
  out.write(reinterpret_cast<const char*>(t.data.data()),
            static_cast<std::streamsize>(t.data.size() * sizeof(double)));
}

void read_doubles(std::istream& in, Tensor& t) {
  in.read(reinterpret_cast<char*>(t.data.data()),
          static_cast<std::streamsize>(t.data.size() * sizeof(double)));
}

}  // namespace

void PolicyParams::save(const std::string& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open '" + path + "' for writing");
  write_i32(out, vocab);
  write_i32(out, embed_dim);
  write_i32(out, hidden_dim);
  write_i32(out, window);
  write_doubles(out, embedding);
  write_doubles(out, w1);
  write_doubles(out, b1);
  write_doubles(out, w2);
  write_doubles(out, b2);
  if (!out) throw std::runtime_error("write failed for '" + path + "'");
}

PolicyParams PolicyParams::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open '" + path + "'");
  const int vocab = read_i32(in);
  const int d = read_i32(in);
  const int dh = read_i32(in);
  const int w = read_i32(in);
  if (!in || vocab < 3 || d < 1 || dh < 1 || w < 1)
    throw std::runtime_error("corrupt parameter file '" + path + "'");
  PolicyParams p;
  p.vocab = vocab;
  p.embed_dim = d;
  p.hidden_dim = dh;
  p.window = w;
  p.embedding = Tensor::zeros({vocab, d});
  p.w1 = Tensor::zeros({d, dh});
  p.b1 = Tensor::zeros({1, dh});
  p.w2 = Tensor::zeros({dh, vocab});
  p.b2 = Tensor::zeros({1, vocab});
  read_doubles(in, p.embedding);
  read_doubles(in, p.w1);
  read_doubles(in, p.b1);
  read_doubles(in, p.w2);
  read_doubles(in, p.b2);
  if (!in) throw std::runtime_error("truncated parameter file '" + path + "'");
  return p;
}

// ---------------------------------------------------------------------------
// plain forward path
// ---------------------------------------------------------------------------

PolicyForward::PolicyForward(const PolicyParams& params) : params_(&params) {
  win_.resize(params.window);
  pooled_.resize(params.embed_dim);
  hidden_.resize(params.hidden_dim);
  logits_.resize(params.vocab);
  probs_.resize(params.vocab);
}

void PolicyForward::window_of(const int* ctx, int len) {
  const int w = params_->window;
  for (int i = 0; i < w; ++i) {
    const int src = len - w + i;
    win_[i] = src >= 0 ? ctx[src] : params_->pad_token();
  }
}

const std::vector<double>& PolicyForward::logits(const int* ctx, int len) {
  const PolicyParams& p = *params_;
  window_of(ctx, len);
  const int w = p.window, d = p.embed_dim, dh = p.hidden_dim, v = p.vocab;

  // mean-pooled window embeddings: sum rows scaled by 1/w, in window order
  // (matches the graph path's constant-row matmul term order)
  const double inv_w = 1.0 / w;
  std::fill(pooled_.begin(), pooled_.end(), 0.0);
  for (int i = 0; i < w; ++i) {
    const double* row = p.embedding.data.data() + static_cast<std::size_t>(win_[i]) * d;
    for (int j = 0; j < d; ++j) pooled_[j] += inv_w * row[j];
  }

  for (int k = 0; k < dh; ++k) {
    double s = 0.0;
    for (int j = 0; j < d; ++j) s += pooled_[j] * p.w1.data[static_cast<std::size_t>(j) * dh + k];
    hidden_[k] = std::tanh(s + p.b1.data[k]);
  }

  for (int t = 0; t < v; ++t) {
    double s = 0.0;
    for (int k = 0; k < dh; ++k) s += hidden_[k] * p.w2.data[static_cast<std::size_t>(k) * v + t];
    logits_[t] = s + p.b2.data[t];
  }
  logits_[p.pad_token()] += kPadLogitMask;
  return logits_;
}

double PolicyForward::log_prob(const int* ctx, int len, int token, double temperature) {
  const std::vector<double>& z = logits(ctx, len);
  const int v = params_->vocab;
  double m = -std::numeric_limits<double>::infinity();
  for (int k = 0; k < v; ++k) m = std::max(m, z[k] / temperature);
  double sum = 0.0;
  for (int k = 0; k < v; ++k) sum += std::exp(z[k] / temperature - m);
  return z[token] / temperature - m - std::log(sum);
}

double PolicyForward::step_entropy(const int* ctx, int len) {
  const std::vector<double>& z = logits(ctx, len);
  const int v = params_->vocab;
  double m = -std::numeric_limits<double>::infinity();
  for (int k = 0; k < v; ++k) m = std::max(m, z[k]);
  double sum = 0.0;
  for (int k = 0; k < v; ++k) {
    probs_[k] = std::exp(z[k] - m);
    sum += probs_[k];
  }
  double h = 0.0;
  for (int k = 0; k < v; ++k) {
    const double p = probs_[k] / sum;
    if (p > 0.0) h -= p * std::log(p);
  }
  return h;
}

// ---------------------------------------------------------------------------
// spec-shaped operations
// ---------------------------------------------------------------------------

TokenDist logits(const PolicyParams& params, const TokenSequence& ctx) {
  if (ctx.tokens.empty()) throw std::invalid_argument("logits: empty context");
  PolicyForward fwd(params);
  const std::vector<double>& z =
      fwd.logits(ctx.tokens.data(), static_cast<int>(ctx.tokens.size()));
  Tensor t = Tensor::zeros({params.vocab});
  t.data.assign(z.begin(), z.end());
  return TokenDist{std::move(t), 1.0};
}

namespace {

// Inverse-cdf walk over softmax(z / temperature). Writes the sampled
// token's log-probability to *logprob when given.
int sample_from_logits(const double* z, int v, double temperature, Rng& rng,
                       double* logprob) {
  double m = -std::numeric_limits<double>::infinity();
  for (int k = 0; k < v; ++k) m = std::max(m, z[k] / temperature);
  static thread_local std::vector<double> expz;
  expz.resize(v);
  double sum = 0.0;
  for (int k = 0; k < v; ++k) {
    expz[k] = std::exp(z[k] / temperature - m);
    sum += expz[k];
  }
  const double u = rng.uniform() * sum;
  int tok = -1;
  int last_positive = 0;
  double acc = 0.0;
  for (int k = 0; k < v; ++k) {
    if (expz[k] > 0.0) last_positive = k;
    acc += expz[k];
    if (u < acc) {
      tok = k;
      break;
    }
  }
  if (tok < 0) tok = last_positive;  // guards the acc < sum rounding edge
  if (logprob) *logprob = z[tok] / temperature - m - std::log(sum);
  return tok;
}

}  // namespace

int sample_token(const TokenDist& dist, Rng& rng) {
  if (!(dist.temperature > 0.0))
    throw std::invalid_argument("sample_token: temperature must be > 0");
  return sample_from_logits(dist.logits.data.data(), dist.logits.numel(),
                            dist.temperature, rng, nullptr);
}

Generation generate(const PolicyParams& params, const TokenSequence& prompt,
                    int max_len, double temperature, Rng& rng) {
  if (max_len < 1) throw std::invalid_argument("generate: max_len must be >= 1");
  if (!(temperature > 0.0))
    throw std::invalid_argument("generate: temperature must be > 0");
  Generation out;
  out.seq.tokens = prompt.tokens;
  out.seq.prompt_len = static_cast<int>(prompt.tokens.size());
  PolicyForward fwd(params);
  const int eos = params.eos_token();
  for (int t = 0; t < max_len; ++t) {
    const std::vector<double>& z =
        fwd.logits(out.seq.tokens.data(), static_cast<int>(out.seq.tokens.size()));
    double lp = 0.0;
    const int tok = sample_from_logits(z.data(), params.vocab, temperature, rng, &lp);
    out.logprobs.push_back(lp);
    out.seq.tokens.push_back(tok);
    if (tok == eos) break;
  }
  return out;
}

std::vector<double> sequence_logprob(const PolicyParams& params,
                                     const TokenSequence& seq, double temperature) {
  if (seq.response_len() < 1)
    throw std::invalid_argument("sequence_logprob: no response tokens");
  PolicyForward fwd(params);
  std::vector<double> lp;
  lp.reserve(seq.response_len());
  for (int t = 0; t < seq.response_len(); ++t) {
    const int pos = seq.prompt_len + t;
    lp.push_back(fwd.log_prob(seq.tokens.data(), pos, seq.tokens[pos], temperature));
  }
  return lp;
}

double token_entropy(const PolicyParams& params, const TokenSequence& seq) {
  if (seq.response_len() < 1)
    throw std::invalid_argument("token_entropy: no response tokens");
  PolicyForward fwd(params);
  double h = 0.0;
  for (int t = 0; t < seq.response_len(); ++t)
    h += fwd.step_entropy(seq.tokens.data(), seq.prompt_len + t);
  return h / seq.response_len();
}

// ---------------------------------------------------------------------------
// differentiable path
// ---------------------------------------------------------------------------

PolicyLeaves PolicyLeaves::declare(Graph& g, const PolicyParams& like,
                                   const std::string& prefix) {
  PolicyLeaves l;
  l.embedding = g.leaf(prefix + "embedding", {like.vocab, like.embed_dim}, true);
  l.w1 = g.leaf(prefix + "w1", {like.embed_dim, like.hidden_dim}, true);
  l.b1 = g.leaf(prefix + "b1", {1, like.hidden_dim}, true);
  l.w2 = g.leaf(prefix + "w2", {like.hidden_dim, like.vocab}, true);
  l.b2 = g.leaf(prefix + "b2", {1, like.vocab}, true);
  return l;
}

void PolicyLeaves::bind(Bindings& binds, const PolicyParams& params) const {
  binds.set(embedding, params.embedding);
  binds.set(w1, params.w1);
  binds.set(b1, params.b1);
  binds.set(w2, params.w2);
  binds.set(b2, params.b2);
}

SequenceLogProbBuilder::SequenceLogProbBuilder(Graph& g, PolicyLeaves leaves,
                                               const PolicyParams& stab,
                                               double temperature)
    : g_(&g), leaves_(leaves), plain_(stab), temperature_(temperature) {
  const int w = stab.window;
  pool_row_ = g.constant(Tensor::full({1, w}, 1.0 / w));
  Tensor mask = Tensor::zeros({1, stab.vocab});
  mask.data[stab.pad_token()] = kPadLogitMask;
  mask_row_ = g.constant(mask);
}

const SequenceLogProbBuilder::WindowNodes& SequenceLogProbBuilder::window_nodes(
    const std::vector<int>& window) {
  auto it = memo_.find(window);
  if (it != memo_.end()) return it->second;

  Graph& g = *g_;
  Node gemb = g.gather(leaves_.embedding, window);
  Node pooled = g.matmul(pool_row_, gemb);
  Node hid = g.tanh(g.add(g.matmul(pooled, leaves_.w1), leaves_.b1));
  Node raw = g.add(g.matmul(hid, leaves_.w2), leaves_.b2);
  Node masked = g.add(raw, mask_row_);
  Node scaled = temperature_ == 1.0 ? masked : g.mul(masked, 1.0 / temperature_);

  // max-subtraction constant from the build-time parameter values; it
  // cancels in (z_k - m) - log sum exp(z - m), so it only provides
  // numerical range, never bias
  const std::vector<double>& z =
      plain_.logits(window.data(), static_cast<int>(window.size()));
  double m = -std::numeric_limits<double>::infinity();
  for (double v : z) m = std::max(m, v / temperature_);

  Node lse = g.log(g.sum(g.exp(g.add(scaled, -m))));
  return memo_.emplace(window, WindowNodes{scaled, lse, m}).first->second;
}

std::vector<Node> SequenceLogProbBuilder::build(const TokenSequence& seq) {
  if (seq.response_len() < 1)
    throw std::invalid_argument("SequenceLogProbBuilder: no response tokens");
  Graph& g = *g_;
  const PolicyParams& p = plain_.params();
  std::vector<Node> out;
  out.reserve(seq.response_len());
  std::vector<int> window(p.window);
  for (int t = 0; t < seq.response_len(); ++t) {
    const int len = seq.prompt_len + t;
    for (int i = 0; i < p.window; ++i) {
      const int src = len - p.window + i;
      window[i] = src >= 0 ? seq.tokens[src] : p.pad_token();
    }
    const WindowNodes& wn = window_nodes(window);
    Node picked = g.gather(wn.scaled, {seq.tokens[len]});
    out.push_back(g.sub(g.add(picked, -wn.m), wn.lse));
  }
  return out;
}

}  // namespace agpo
