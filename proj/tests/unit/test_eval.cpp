#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <random>

#include "csd/errors.hpp"
#include "csd/eval.hpp"
#include "oracles/oracles.hpp"
#include "oracles/planted.hpp"
#include "support.hpp"

using namespace csd;

namespace {

using Units = std::vector<std::vector<std::optional<int>>>;
constexpr std::optional<int> kNone = std::nullopt;

const SystemPair kPair{"explicit", "gpt"};

}  // namespace

TEST_CASE("proportion test matches the normal approximation") {
  auto even = proportion_test(150, 300);
  CHECK(even.z == 0.0);
  CHECK(even.p == 1.0);
  CHECK_FALSE(even.significant);

  auto r = proportion_test(180, 300);
  CHECK(r.z == doctest::Approx(0.1 / std::sqrt(0.25 / 300)).epsilon(1e-12));
  CHECK(r.p == doctest::Approx(oracle::two_sided_p(180, 300)).epsilon(1e-12));
  CHECK(r.significant);

  CHECK(proportion_test(120, 300).p == doctest::Approx(r.p).epsilon(1e-12));
  CHECK(proportion_test(120, 300).z == doctest::Approx(-r.z).epsilon(1e-12));

  // 55% of 300 is not significant at 0.01, 58% is.
  CHECK_FALSE(proportion_test(165, 300).significant);
  CHECK(proportion_test(174, 300).significant);

  CHECK_THROWS_AS(proportion_test(0, 0), DomainError);
  CHECK_THROWS_AS(proportion_test(5, 4), DomainError);
}

TEST_CASE("p-value is monotone in distance from one half") {
  double last = 2.0;
  for (std::size_t w = 150; w <= 300; w += 5) {
    double p = proportion_test(w, 300).p;
    CHECK(p <= last);
    last = p;
  }
}

TEST_CASE("build_tasks is deterministic and covers every dialogue") {
  auto resp = planted::responses(kPair, 20);
  auto a = build_tasks(resp, kPair, 3, 42);
  auto b = build_tasks(resp, kPair, 3, 42);
  auto c = build_tasks(resp, kPair, 3, 43);
  CHECK(a == b);
  CHECK(a.size() == 20);
  CHECK(a != c);
  std::set<std::string> ids;
  int swapped = 0;
  for (const auto& t : a) {
    ids.insert(t.task_id);
    CHECK(t.judges_per_task == 3);
    CHECK(t.task_id.find("explicit") == std::string::npos);
    CHECK(t.task_id.find("gpt") == std::string::npos);
    CHECK(t.system_for(Choice::A) == (t.swapped ? "gpt" : "explicit"));
    CHECK(t.shown_a() == (t.swapped ? t.response_b : t.response_a));
    swapped += t.swapped ? 1 : 0;
  }
  CHECK(ids.size() == 20);
  CHECK(swapped > 0);
  CHECK(swapped < 20);
}

TEST_CASE("build_tasks rejects missing responses") {
  auto resp = planted::responses(kPair, 3);
  resp["gpt"].erase("d001");
  CHECK_THROWS_AS(build_tasks(resp, kPair), ValidationError);
  CHECK_THROWS_AS(build_tasks(resp, {"explicit", "explicit"}), ValidationError);
  CHECK_THROWS_AS(build_tasks(resp, {"explicit", "nobody"}), ValidationError);
}

TEST_CASE("aggregate reproduces planted counts") {
  std::map<QuestionId, int> wins = {{QuestionId::Naturalness, 180},
                                    {QuestionId::Engagingness, 210},
                                    {QuestionId::Specificity, 150},
                                    {QuestionId::Quality, 100}};
  auto study = planted::make(kPair, 100, 3, wins);
  auto r = aggregate(kPair, study.tasks, study.judgments);
  CHECK(r.n_judgments == 300);
  CHECK(r.n_tasks == 100);
  for (auto [q, w] : wins) {
    const auto& qr = r.questions.at(q);
    CHECK(qr.n == 300);
    CHECK(qr.wins_first == static_cast<std::size_t>(w));
    CHECK(qr.wins_second == static_cast<std::size_t>(300 - w));
    CHECK(qr.pct_first == 100.0 * w / 300.0);
    CHECK(qr.pct_first + qr.pct_second == doctest::Approx(100.0));
    CHECK(qr.test.p == doctest::Approx(oracle::two_sided_p(w, 300)).epsilon(1e-12));
  }
  CHECK_FALSE(r.questions.at(QuestionId::Specificity).test.significant);
  CHECK(r.questions.at(QuestionId::Quality).test.significant);

  // Same judgments viewed from the other side.
  auto flipped = aggregate({"gpt", "explicit"}, study.tasks, study.judgments);
  CHECK(flipped.questions.at(QuestionId::Naturalness).wins_first == 120);
}

TEST_CASE("aggregate rejects foreign and incomplete judgments") {
  auto study = planted::make(kPair, 4, 3, {{QuestionId::Naturalness, 1}, {QuestionId::Engagingness, 1},
                                           {QuestionId::Specificity, 1}, {QuestionId::Quality, 1}});
  auto bad = study.judgments;
  bad[0].task_id = "task-unknown";
  CHECK_THROWS_AS(aggregate(kPair, study.tasks, bad), ValidationError);
  bad = study.judgments;
  bad[1].answers.erase(QuestionId::Specificity);
  CHECK_THROWS_AS(aggregate(kPair, study.tasks, bad), ValidationError);
  bad = study.judgments;
  bad[2].explanation = "  ";
  CHECK_THROWS_AS(aggregate(kPair, study.tasks, bad), ValidationError);
  CHECK_THROWS_AS(aggregate(kPair, study.tasks, {}), DomainError);
}

TEST_CASE("question and choice names round-trip") {
  for (auto q : kAllQuestions) CHECK(question_from_string(to_string(q)) == q);
  CHECK(question_from_string("q4") == QuestionId::Quality);
  CHECK(choice_from_string("B") == Choice::B);
  CHECK_THROWS_AS(question_from_string("q5"), ValidationError);
  CHECK_THROWS_AS(choice_from_string("tie"), ValidationError);
}

TEST_CASE("Krippendorff alpha on hand-computed cases") {
  CHECK(krippendorff_alpha({{0, 0}, {0, 1}}) == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(krippendorff_alpha({{0, 0, 1}, {1, 1, 1}, {0, 1, kNone}}) == doctest::Approx(1.0 / 15.0).epsilon(1e-12));
  CHECK(krippendorff_alpha({{1, 1}, {2, 2}, {3, 3}, {1, 2}}) == doctest::Approx(2.0 / 3.0).epsilon(1e-12));
  CHECK(krippendorff_alpha({{0, 0, 0}, {1, 1, 1}}) == 1.0);
  CHECK(krippendorff_alpha({{0, 0}, {0, 0}}) == 1.0);
  CHECK_THROWS_AS(krippendorff_alpha({{0, kNone}, {kNone, 1}}), DomainError);
  CHECK_THROWS_AS(krippendorff_alpha({}), DomainError);
}

TEST_CASE("Krippendorff alpha agrees with the pairwise oracle") {
  std::mt19937_64 rng(8);
  for (int trial = 0; trial < 200; ++trial) {
    std::size_t units = 2 + rng() % 12, coders = 2 + rng() % 3, cats = 2 + rng() % 3;
    Units u(units, std::vector<std::optional<int>>(coders));
    for (auto& row : u) {
      for (auto& v : row) {
        if (rng() % 5 != 0) v = static_cast<int>(rng() % cats);
      }
    }
    double expect;
    try {
      expect = oracle::krippendorff_nominal(u);
    } catch (...) {
      CHECK_THROWS(krippendorff_alpha(u));
      continue;
    }
    CHECK(krippendorff_alpha(u) == doctest::Approx(expect).epsilon(1e-9));
  }
}

TEST_CASE("Krippendorff alpha is invariant to relabelling and permutation") {
  std::mt19937_64 rng(31);
  for (int trial = 0; trial < 50; ++trial) {
    Units u(15, std::vector<std::optional<int>>(3));
    for (auto& row : u) {
      for (auto& v : row) v = static_cast<int>(rng() % 3);
    }
    double base = krippendorff_alpha(u);
    Units relabel = u;
    for (auto& row : relabel) {
      for (auto& v : row) v = 10 * (2 - *v) + 7;
    }
    CHECK(krippendorff_alpha(relabel) == doctest::Approx(base).epsilon(1e-12));
    Units shuffled = u;
    std::shuffle(shuffled.begin(), shuffled.end(), rng);
    for (auto& row : shuffled) std::shuffle(row.begin(), row.end(), rng);
    CHECK(krippendorff_alpha(shuffled) == doctest::Approx(base).epsilon(1e-12));
    CHECK(base <= 1.0);
  }
}

TEST_CASE("agreement matrix follows the winning system, not the displayed slot") {
  auto study = planted::make(kPair, 10, 3, {{QuestionId::Naturalness, 30}, {QuestionId::Engagingness, 0},
                                            {QuestionId::Specificity, 15}, {QuestionId::Quality, 30}});
  auto m = agreement_matrix(kPair, study.tasks, study.judgments, QuestionId::Naturalness);
  CHECK(m.size() == 10);
  for (const auto& row : m) {
    CHECK(row.size() == 3);
    for (const auto& v : row) CHECK(v == 0);
  }
  CHECK(krippendorff_alpha(m) == 1.0);
  auto e = agreement_matrix(kPair, study.tasks, study.judgments, QuestionId::Engagingness);
  for (const auto& row : e) {
    for (const auto& v : row) CHECK(v == 1);
  }
}

TEST_CASE("decomposition groups quality wins by selected type") {
  auto study = planted::make(kPair, 20, 3, {{QuestionId::Naturalness, 0}, {QuestionId::Engagingness, 0},
                                            {QuestionId::Specificity, 0}, {QuestionId::Quality, 30}});
  std::map<std::string, ReasoningTrace> traces;
  auto set = testing::jan_inference_set();
  for (int i = 0; i < 20; ++i) {
    char id[16];
    std::snprintf(id, sizeof id, "d%03d", i);
    ReasoningTrace t;
    t.dialogue_id = id;
    t.selected = {set.at(i < 10 ? CommonsenseType::Cause : CommonsenseType::Desire)};
    traces[id] = t;
  }
  auto groups = decompose_by_type("explicit", study.tasks, study.judgments, traces);
  REQUIRE(groups.size() == 2);
  const auto& cause = groups.at(CommonsenseType::Cause);
  const auto& desire = groups.at(CommonsenseType::Desire);
  CHECK(cause.tasks + desire.tasks == 20);
  CHECK(cause.judgments == 30);
  // The first 30 judgments are tasks d000..d009 in task order.
  CHECK(cause.wins == 30);
  CHECK(cause.win_pct == 100.0);
  CHECK(desire.wins == 0);

  traces.erase("d005");
  CHECK_THROWS_AS(decompose_by_type("explicit", study.tasks, study.judgments, traces), NotFoundError);
}

TEST_CASE("judge screening requires every record to pass") {
  std::vector<ScreeningRecord> recs = {
      {"alice", "the first reply asks about the dog and shows real concern for her", true},
      {"alice", "it also follows up on what happened last night which is good", true},
      {"bob", "short", true},
      {"bob", "this one is long enough to pass the word count on its own", true},
      {"cara", "this explanation is long enough but was not approved by review", false},
      {"dan", "this explanation is long enough and it was approved by the reviewer", true},
  };
  auto q = screen_judges(recs);
  CHECK(q == std::set<std::string>{"alice", "dan"});
  ScreeningRule lax;
  lax.require_approval = false;
  CHECK(screen_judges(recs, lax) == std::set<std::string>{"alice", "cara", "dan"});
}

TEST_CASE("comparison table marks winners and non-significant wins") {
  auto study = planted::make(kPair, 100, 3, {{QuestionId::Naturalness, 180}, {QuestionId::Engagingness, 165},
                                             {QuestionId::Specificity, 120}, {QuestionId::Quality, 150}});
  auto r = aggregate(kPair, study.tasks, study.judgments);
  auto table = format_comparison_table({r});
  CHECK(table.find("| explicit | **60.0** | **<u>55.0</u>** | 40.0 | 50.0 | 300 |") != std::string::npos);
  CHECK(table.find("| gpt | 40.0 | 45.0 | **60.0** | 50.0 | 300 |") != std::string::npos);
}
