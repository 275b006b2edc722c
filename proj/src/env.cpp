#include "agpo/env.hpp"

#include <fstream>
#include <sstream>
#include <stdexcept>

namespace agpo {

std::string token_name(int token) {
  if (token >= 0 && token <= 9) return std::string(1, static_cast<char>('0' + token));
  switch (token) {
    case tok::kPlus: return "+";
    case tok::kMinus: return "-";
    case tok::kTimes: return "*";
    case tok::kEquals: return "=";
    case tok::kThink: return "THINK";
    case tok::kEos: return "EOS";
    case tok::kPad: return "PAD";
  }
  throw std::invalid_argument("token_name: unknown token " + std::to_string(token));
}

int token_from_name(const std::string& name) {
  if (name.size() == 1) {
    const char c = name[0];
    if (c >= '0' && c <= '9') return c - '0';
    if (c == '+') return tok::kPlus;
    if (c == '-') return tok::kMinus;
    if (c == '*') return tok::kTimes;
    if (c == '=') return tok::kEquals;
  }
  if (name == "THINK") return tok::kThink;
  if (name == "EOS") return tok::kEos;
  if (name == "PAD") return tok::kPad;
  throw std::invalid_argument("token_from_name: unknown token '" + name + "'");
}

namespace {

int apply_op(int acc, int op, int digit) {
  int r;
  switch (op) {
    case tok::kPlus: r = acc + digit; break;
    case tok::kMinus: r = acc - digit; break;
    case tok::kTimes: r = acc * digit; break;
    default:
      throw std::invalid_argument("apply_op: not an operator token");
  }
  return ((r % 10) + 10) % 10;
}

}  // namespace

Task make_task(const std::vector<int>& digits, const std::vector<int>& op_tokens) {
  if (digits.size() != op_tokens.size() + 1 || op_tokens.empty())
    throw std::invalid_argument("make_task: need k ops and k+1 digits, k >= 1");
  Task t;
  t.difficulty = static_cast<int>(op_tokens.size());
  int acc = digits[0];
  t.prompt.tokens.push_back(digits[0]);
  for (std::size_t k = 0; k < op_tokens.size(); ++k) {
    if (digits[k + 1] < 0 || digits[k + 1] > 9)
      throw std::invalid_argument("make_task: operands must be digits 0-9");
    t.prompt.tokens.push_back(op_tokens[k]);
    t.prompt.tokens.push_back(digits[k + 1]);
    acc = apply_op(acc, op_tokens[k], digits[k + 1]);
  }
  t.prompt.tokens.push_back(tok::kEquals);
  t.prompt.prompt_len = static_cast<int>(t.prompt.tokens.size());
  t.answer = {acc};
  return t;
}

Task gen_task(std::uint64_t seed, int difficulty) {
  if (difficulty < 1 || difficulty > 6)
    throw std::invalid_argument("gen_task: difficulty must be in [1, 6]");
  Rng rng(derive_seed(seed, {0x7a5c, static_cast<std::uint64_t>(difficulty)}));
  std::vector<int> digits, ops;
  digits.push_back(rng.uniform_int(10));
  for (int k = 0; k < difficulty; ++k) {
    ops.push_back(tok::kPlus + rng.uniform_int(3));
    digits.push_back(rng.uniform_int(10));
  }
  return make_task(digits, ops);
}

Verdict verify(const Task& task, const std::vector<int>& response) {
  Verdict v;
  v.extracted.reserve(response.size());
  for (int t : response)
    if (t != tok::kThink) v.extracted.push_back(t);
  if (!v.extracted.empty() && v.extracted.back() == tok::kEos) v.extracted.pop_back();
  v.reward = v.extracted == task.answer ? 1.0 : 0.0;
  return v;
}

std::uint64_t filter_task_seed(std::uint64_t seed, int task_index) {
  return derive_seed(seed, {0xf117e6, static_cast<std::uint64_t>(task_index)});
}

std::vector<Task> filter_tasks(const PolicyParams& params, const std::vector<Task>& tasks,
                               double lo, double hi, int samples, std::uint64_t seed,
                               int max_len, double temperature) {
  if (!(0.0 <= lo && lo <= hi && hi <= 1.0))
    throw std::invalid_argument("filter_tasks: need 0 <= lo <= hi <= 1");
  if (samples < 1) throw std::invalid_argument("filter_tasks: samples must be >= 1");
  std::vector<Task> kept;
  for (int i = 0; i < static_cast<int>(tasks.size()); ++i) {
    Rng rng(filter_task_seed(seed, i));
    int solved = 0;
    for (int s = 0; s < samples; ++s) {
      Generation g = generate(params, tasks[i].prompt, max_len, temperature, rng);
      std::vector<int> response(g.seq.tokens.begin() + g.seq.prompt_len,
                                g.seq.tokens.end());
      solved += verify(tasks[i], response).reward > 0.5 ? 1 : 0;
    }
    const double rate = static_cast<double>(solved) / samples;
    if (rate >= lo && rate <= hi) kept.push_back(tasks[i]);
  }
  return kept;
}

void save_tasks(const std::vector<Task>& tasks, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open '" + path + "' for writing");
  for (const Task& t : tasks) {
    out << t.difficulty << '\t';
    for (int i = 0; i < static_cast<int>(t.prompt.tokens.size()); ++i)
      out << (i ? " " : "") << token_name(t.prompt.tokens[i]);
    out << '\t';
    for (int i = 0; i < static_cast<int>(t.answer.size()); ++i)
      out << (i ? " " : "") << token_name(t.answer[i]);
    out << '\n';
  }
  if (!out) throw std::runtime_error("write failed for '" + path + "'");
}

std::vector<Task> load_tasks(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open '" + path + "'");
  std::vector<Task> tasks;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string diff_field, prompt_field, answer_field;
    if (!std::getline(ls, diff_field, '\t') || !std::getline(ls, prompt_field, '\t') ||
        !std::getline(ls, answer_field))
      throw std::runtime_error("malformed task record at line " + std::to_string(lineno));
    Task t;
    t.difficulty = std::stoi(diff_field);
    std::istringstream ps(prompt_field);
    std::string name;
    while (ps >> name) t.prompt.tokens.push_back(token_from_name(name));
    t.prompt.prompt_len = static_cast<int>(t.prompt.tokens.size());
    std::istringstream as(answer_field);
    while (as >> name) t.answer.push_back(token_from_name(name));
    if (t.prompt.tokens.empty() || t.answer.empty())
      throw std::runtime_error("empty task record at line " + std::to_string(lineno));
    tasks.push_back(std::move(t));
  }
  return tasks;
}

}  // namespace agpo
