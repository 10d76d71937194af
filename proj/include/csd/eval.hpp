#pragma once

// Pairwise preference evaluation: blinded A/B task construction, judgment
// validation, pooled aggregation with a one-sample proportion test,
// Krippendorff's alpha for nominal labels, per-commonsense-type
// decomposition and judge screening.

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "csd/dialogue.hpp"

namespace csd {

enum class QuestionId { Naturalness, Engagingness, Specificity, Quality };

inline constexpr std::array<QuestionId, 4> kAllQuestions = {
    QuestionId::Naturalness, QuestionId::Engagingness, QuestionId::Specificity,
    QuestionId::Quality};

std::string_view to_string(QuestionId q);
// Accepts the lowercase names and the short forms q1..q4.
QuestionId question_from_string(std::string_view name);

// Which displayed response the judge picked. There is no tie option.
enum class Choice { A, B };

std::string_view to_string(Choice c);
Choice choice_from_string(std::string_view name);

struct SystemPair {
  std::string first;
  std::string second;

  bool operator==(const SystemPair&) const = default;
  auto operator<=>(const SystemPair&) const = default;
};

// system_a/system_b are the canonical pair order; `swapped` flips what the
// judge sees as Response A and Response B.
struct PairwiseTask {
  std::string task_id;
  std::string dialogue_id;
  std::string system_a;
  std::string system_b;
  std::string response_a;
  std::string response_b;
  std::uint64_t display_order_seed = 0;
  bool swapped = false;
  int judges_per_task = 3;

  const std::string& shown_a() const { return swapped ? response_b : response_a; }
  const std::string& shown_b() const { return swapped ? response_a : response_b; }
  const std::string& system_for(Choice displayed) const;
  SystemPair pair() const { return {system_a, system_b}; }

  bool operator==(const PairwiseTask&) const = default;
};

struct Judgment {
  std::string task_id;
  std::string judge_id;
  std::map<QuestionId, Choice> answers;
  std::string explanation;

  // All four questions answered and a non-empty explanation (it justifies the
  // Quality answer).
  void validate() const;

  bool operator==(const Judgment&) const = default;
};

// system -> dialogue id -> response text
using ResponsesBySystem = std::map<std::string, std::map<std::string, std::string>>;

// One task per dialogue answered by both systems, in dialogue-id order.
std::vector<PairwiseTask> build_tasks(const ResponsesBySystem& responses, const SystemPair& pair,
                                      int judges_per_task = 3, std::uint64_t seed = 0);

struct ProportionTest {
  double z = 0.0;
  double p = 1.0;
  bool significant = false;
};

// Two-sided one-sample z-test of wins/n against 0.5.
ProportionTest proportion_test(std::size_t wins, std::size_t n, double alpha = 0.01);

struct QuestionResult {
  std::size_t wins_first = 0;
  std::size_t wins_second = 0;
  std::size_t n = 0;
  double pct_first = 0.0;
  double pct_second = 0.0;
  ProportionTest test;  // on wins_first
};

struct ComparisonResult {
  SystemPair pair;
  std::map<QuestionId, QuestionResult> questions;
  std::size_t n_judgments = 0;
  std::size_t n_tasks = 0;
  double alpha = 0.01;
};

// Pools every judgment (n = tasks x judges). Every judgment must reference a
// task of `pair`.
ComparisonResult aggregate(const SystemPair& pair, const std::vector<PairwiseTask>& tasks,
                           const std::vector<Judgment>& judgments, double alpha = 0.01);

// Nominal-metric Krippendorff's alpha. Rows are units, columns coders;
// std::nullopt marks a missing label. Units with fewer than two labels are
// not pairable and are ignored.
double krippendorff_alpha(const std::vector<std::vector<std::optional<int>>>& units);

// Units x judges matrix of the winning system (0 = pair.first) for one
// question, ready for krippendorff_alpha.
std::vector<std::vector<std::optional<int>>> agreement_matrix(
    const SystemPair& pair, const std::vector<PairwiseTask>& tasks,
    const std::vector<Judgment>& judgments, QuestionId question);

struct TypeGroup {
  std::size_t tasks = 0;
  std::size_t judgments = 0;
  std::size_t wins = 0;
  double win_pct = 0.0;
};

// Quality win rate of `explicit_system`, grouped by the commonsense type of
// the inference its trace selected. Only tasks involving that system count.
std::map<CommonsenseType, TypeGroup> decompose_by_type(
    const std::string& explicit_system, const std::vector<PairwiseTask>& tasks,
    const std::vector<Judgment>& judgments,
    const std::map<std::string, ReasoningTrace>& traces_by_dialogue);

struct ScreeningRecord {
  std::string judge_id;
  std::string explanation;
  bool approved = false;
};

struct ScreeningRule {
  std::size_t min_words = 10;
  bool require_approval = true;
};

// A judge qualifies when every one of their screening records passes.
std::set<std::string> screen_judges(const std::vector<ScreeningRecord>& records,
                                    const ScreeningRule& rule = {});

// Markdown table, two rows per comparison. Winners in bold; a winner that is
// not significant is also underlined.
std::string format_comparison_table(const std::vector<ComparisonResult>& results);

}  // namespace csd
