#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "agpo/policy.hpp"

namespace agpo {

// Token ids of the arithmetic environment. Digits occupy 0..9; the policy
// conventions (EOS = vocab-2, PAD = vocab-1) hold.
namespace tok {
inline constexpr int kPlus = 10;
inline constexpr int kMinus = 11;
inline constexpr int kTimes = 12;
inline constexpr int kEquals = 13;
inline constexpr int kThink = 14;
inline constexpr int kEos = 15;
inline constexpr int kPad = 16;
inline constexpr int kVocabSize = 17;
}  // namespace tok

std::string token_name(int token);
int token_from_name(const std::string& name);

// One question: a modular-arithmetic chain prompt ("d op d ... =") whose
// answer is a single digit. `difficulty` is the number of operations.
struct Task {
  TokenSequence prompt;
  std::vector<int> answer;
  int difficulty = 1;
};

struct Verdict {
  double reward = 0.0;  // 1 iff the stripped response equals the answer exactly
  std::vector<int> extracted;
};

// Builds the chain d0 op0 d1 op1 ... dk "=" with left-to-right evaluation
// reduced mod 10 at each step.
Task make_task(const std::vector<int>& digits, const std::vector<int>& op_tokens);

// Deterministic in (seed, difficulty); difficulty must be in [1, 6].
Task gen_task(std::uint64_t seed, int difficulty);

// Strips every THINK token and one trailing EOS, then compares with the
// answer token-for-token.
Verdict verify(const Task& task, const std::vector<int>& response);

// Per-task solve-rate estimate from `samples` seeded rollouts; keeps tasks
// whose rate lies in [lo, hi] inclusive. Rollout seeds come from
// filter_task_seed(seed, task_index), so the estimate for each task is
// independent of the others.
std::vector<Task> filter_tasks(const PolicyParams& params, const std::vector<Task>& tasks,
                               double lo, double hi, int samples, std::uint64_t seed,
                               int max_len, double temperature);

std::uint64_t filter_task_seed(std::uint64_t seed, int task_index);

// Line format: difficulty<TAB>prompt tokens<TAB>answer tokens, with tokens
// space-separated by symbolic name.
void save_tasks(const std::vector<Task>& tasks, const std::string& path);
std::vector<Task> load_tasks(const std::string& path);

}  // namespace agpo
