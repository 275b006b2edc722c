#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <vector>

#include "agpo/env.hpp"
#include "agpo/rng.hpp"

using namespace agpo;

namespace {

// Independent oracle: left-to-right evaluation of the chain, mod 10.
int eval_chain(const std::vector<int>& digits, const std::vector<int>& ops) {
  long acc = digits[0];
  for (std::size_t k = 0; k < ops.size(); ++k) {
    if (ops[k] == tok::kPlus) acc += digits[k + 1];
    else if (ops[k] == tok::kMinus) acc -= digits[k + 1];
    else acc *= digits[k + 1];
    acc = ((acc % 10) + 10) % 10;
  }
  return static_cast<int>(acc);
}

}  // namespace

TEST_CASE("make_task: hand-checked chains") {
  Task a = make_task({3, 4}, {tok::kPlus});  // "3+4="
  CHECK(a.answer == std::vector<int>{7});
  CHECK(a.prompt.tokens == std::vector<int>{3, tok::kPlus, 4, tok::kEquals});
  CHECK(a.prompt.prompt_len == 4);
  CHECK(a.difficulty == 1);

  Task b = make_task({3, 4, 2}, {tok::kPlus, tok::kTimes});  // "3+4*2=" left-to-right
  CHECK(b.answer == std::vector<int>{eval_chain({3, 4, 2}, {tok::kPlus, tok::kTimes})});
  CHECK(b.answer == std::vector<int>{4});  // (3+4)*2 mod 10

  Task c = make_task({2, 9}, {tok::kMinus});  // negative result wraps
  CHECK(c.answer == std::vector<int>{3});
}

TEST_CASE("gen_task: deterministic, well-formed, matches the oracle") {
  Task a = gen_task(123, 2);
  Task b = gen_task(123, 2);
  CHECK(a.prompt.tokens == b.prompt.tokens);
  CHECK(a.answer == b.answer);

  for (std::uint64_t seed = 0; seed < 200; ++seed) {
    for (int difficulty : {1, 2, 4, 6}) {
      Task t = gen_task(seed, difficulty);
      REQUIRE(static_cast<int>(t.prompt.tokens.size()) == 2 * difficulty + 2);
      std::vector<int> digits, ops;
      for (std::size_t i = 0; i < t.prompt.tokens.size() - 1; ++i) {
        const int v = t.prompt.tokens[i];
        if (i % 2 == 0) {
          REQUIRE((v >= 0 && v <= 9));
          digits.push_back(v);
        } else {
          REQUIRE((v == tok::kPlus || v == tok::kMinus || v == tok::kTimes));
          ops.push_back(v);
        }
      }
      REQUIRE(t.prompt.tokens.back() == tok::kEquals);
      REQUIRE(t.answer.size() == 1);
      CHECK(t.answer[0] == eval_chain(digits, ops));
    }
  }
}

TEST_CASE("gen_task: difficulty out of range rejected") {
  CHECK_THROWS_AS(gen_task(1, 0), std::invalid_argument);
  CHECK_THROWS_AS(gen_task(1, 7), std::invalid_argument);
}

TEST_CASE("verify: filler stripped, exact match required") {
  Task t = make_task({3, 4}, {tok::kPlus});  // answer 7
  CHECK(verify(t, {tok::kThink, tok::kThink, 7, tok::kEos}).reward == 1.0);
  CHECK(verify(t, {7, 7, tok::kEos}).reward == 0.0);
  CHECK(verify(t, {tok::kEos}).reward == 0.0);  // empty extraction
  CHECK(verify(t, {7, tok::kEos}).reward == 1.0);
  CHECK(verify(t, {7}).reward == 1.0);  // max-len hit without EOS
  CHECK(verify(t, {8, tok::kEos}).reward == 0.0);
  CHECK(verify(t, {tok::kEos, 7, tok::kEos}).reward == 0.0);  // interior EOS remains
}

TEST_CASE("verify: pure function with binary reward") {
  Task t = make_task({5, 2, 8}, {tok::kTimes, tok::kMinus});
  Rng rng(77);
  for (int rep = 0; rep < 100; ++rep) {
    std::vector<int> response;
    const int len = 1 + rng.uniform_int(6);
    for (int i = 0; i < len; ++i) response.push_back(rng.uniform_int(tok::kVocabSize));
    Verdict v1 = verify(t, response);
    Verdict v2 = verify(t, response);
    CHECK(v1.reward == v2.reward);
    CHECK(v1.extracted == v2.extracted);
    CHECK((v1.reward == 0.0 || v1.reward == 1.0));
    CHECK((v1.reward == 1.0) == (v1.extracted == t.answer));
  }
}

TEST_CASE("verify: correct responses exist at every length") {
  Task t = make_task({6, 3}, {tok::kMinus});  // answer 3
  // shortest correct response: answer + EOS
  CHECK(verify(t, {3, tok::kEos}).reward == 1.0);
  // filler prefixes and infixes at any length stay correct
  Rng rng(5);
  for (int len = 2; len <= 24; ++len) {
    std::vector<int> response(len, tok::kThink);
    response[rng.uniform_int(len - 1)] = 3;  // answer somewhere before EOS
    response.back() = tok::kEos;
    CHECK(verify(t, response).reward == 1.0);
  }
}

TEST_CASE("filter_tasks: trivial bounds") {
  PolicyParams p = PolicyParams::init(tok::kVocabSize, 8, 12, 6, 21);
  std::vector<Task> tasks;
  for (int i = 0; i < 20; ++i) tasks.push_back(gen_task(1000 + i, 2));

  CHECK(filter_tasks(p, tasks, 0.0, 1.0, 4, 9, 16, 1.0).size() == tasks.size());

  PolicyParams failing = p;  // always emits EOS immediately -> never correct
  failing.b2.data[failing.eos_token()] = 100.0;
  CHECK(filter_tasks(failing, tasks, 1.0, 1.0, 4, 9, 16, 1.0).empty());
}

TEST_CASE("filter_tasks: matches the per-task Monte-Carlo oracle") {
  PolicyParams p = PolicyParams::init(tok::kVocabSize, 8, 12, 6, 22);
  // push the policy toward short digit-or-EOS responses so solve rates spread
  for (int d = 0; d <= 9; ++d) p.b2.data[d] = 1.2;
  p.b2.data[p.eos_token()] = 2.2;

  std::vector<Task> tasks;
  for (int i = 0; i < 40; ++i) tasks.push_back(gen_task(2000 + i, 1));
  const std::uint64_t seed = 33;
  const int samples = 8;

  // independent re-derivation of every per-task rate
  std::vector<double> rates;
  for (int i = 0; i < static_cast<int>(tasks.size()); ++i) {
    Rng rng(filter_task_seed(seed, i));
    int solved = 0;
    for (int s = 0; s < samples; ++s) {
      Generation g = generate(p, tasks[i].prompt, 16, 1.0, rng);
      std::vector<int> resp(g.seq.tokens.begin() + g.seq.prompt_len, g.seq.tokens.end());
      solved += verify(tasks[i], resp).reward > 0.5 ? 1 : 0;
    }
    rates.push_back(static_cast<double>(solved) / samples);
  }

  const double lo = 0.5, hi = 0.8;
  std::vector<Task> kept = filter_tasks(p, tasks, lo, hi, samples, seed, 16, 1.0);
  std::vector<const Task*> expected;
  for (std::size_t i = 0; i < tasks.size(); ++i)
    if (rates[i] >= lo && rates[i] <= hi) expected.push_back(&tasks[i]);
  REQUIRE(kept.size() == expected.size());
  for (std::size_t i = 0; i < kept.size(); ++i)
    CHECK(kept[i].prompt.tokens == expected[i]->prompt.tokens);

  // inclusive bounds: pin [lo, hi] to an observed rate and expect that task back
  double pivot = rates[0];
  std::vector<Task> only = filter_tasks(p, tasks, pivot, pivot, samples, seed, 16, 1.0);
  int matching = 0;
  for (double r : rates)
    if (r == pivot) ++matching;
  CHECK(static_cast<int>(only.size()) == matching);
}

TEST_CASE("task serialization round-trips") {
  std::vector<Task> tasks;
  for (int i = 0; i < 25; ++i) tasks.push_back(gen_task(3000 + i, 1 + i % 6));
  const std::string path = "tasks_roundtrip.tsv";
  save_tasks(tasks, path);
  std::vector<Task> back = load_tasks(path);
  REQUIRE(back.size() == tasks.size());
  for (std::size_t i = 0; i < tasks.size(); ++i) {
    CHECK(back[i].difficulty == tasks[i].difficulty);
    CHECK(back[i].prompt.tokens == tasks[i].prompt.tokens);
    CHECK(back[i].prompt.prompt_len == tasks[i].prompt.prompt_len);
    CHECK(back[i].answer == tasks[i].answer);
  }
  std::remove(path.c_str());
}

TEST_CASE("token names round-trip") {
  for (int t = 0; t < tok::kVocabSize; ++t) CHECK(token_from_name(token_name(t)) == t);
  CHECK_THROWS_AS(token_from_name("bogus"), std::invalid_argument);
}
