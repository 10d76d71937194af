#include "csd/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <random>

#include "csd/errors.hpp"
#include "csd/util.hpp"

namespace csd {

std::string_view to_string(QuestionId q) {
  switch (q) {
    case QuestionId::Naturalness: return "naturalness";
    case QuestionId::Engagingness: return "engagingness";
    case QuestionId::Specificity: return "specificity";
    case QuestionId::Quality: return "quality";
  }
  return "quality";
}

QuestionId question_from_string(std::string_view name) {
  auto lower = to_lower(name);
  for (std::size_t i = 0; i < kAllQuestions.size(); ++i) {
    if (lower == to_string(kAllQuestions[i]) || lower == "q" + std::to_string(i + 1)) {
      return kAllQuestions[i];
    }
  }
  throw ValidationError("unknown question '" + std::string(name) + "'");
}

std::string_view to_string(Choice c) { return c == Choice::A ? "A" : "B"; }

Choice choice_from_string(std::string_view name) {
  if (name == "A" || name == "a") return Choice::A;
  if (name == "B" || name == "b") return Choice::B;
  throw ValidationError("answer must be A or B, got '" + std::string(name) + "'");
}

const std::string& PairwiseTask::system_for(Choice displayed) const {
  bool first = (displayed == Choice::A) != swapped;
  return first ? system_a : system_b;
}

void Judgment::validate() const {
  if (task_id.empty()) throw ValidationError("judgment without task_id");
  if (judge_id.empty()) throw ValidationError("judgment without judge_id");
  for (auto q : kAllQuestions) {
    if (!answers.contains(q)) {
      throw ValidationError("judgment for task " + task_id + " is missing " +
                            std::string(to_string(q)));
    }
  }
  if (trim_view(explanation).empty()) {
    throw ValidationError("judgment for task " + task_id + " needs an explanation");
  }
}

std::vector<PairwiseTask> build_tasks(const ResponsesBySystem& responses, const SystemPair& pair,
                                      int judges_per_task, std::uint64_t seed) {
  if (pair.first == pair.second) throw ValidationError("a system cannot be compared with itself");
  if (judges_per_task < 1) throw ValidationError("judges_per_task must be positive");
  auto lookup = [&](const std::string& system) -> const std::map<std::string, std::string>& {
    auto it = responses.find(system);
    if (it == responses.end()) throw ValidationError("no responses for system " + system);
    return it->second;
  };
  const auto& a = lookup(pair.first);
  const auto& b = lookup(pair.second);

  std::set<std::string> dialogues;
  for (const auto& [id, _] : a) dialogues.insert(id);
  for (const auto& [id, _] : b) dialogues.insert(id);

  std::mt19937_64 rng(seed);
  std::vector<PairwiseTask> tasks;
  for (const auto& id : dialogues) {
    auto ra = a.find(id);
    auto rb = b.find(id);
    if (ra == a.end() || rb == b.end()) {
      throw ValidationError("dialogue " + id + " has no response from system " +
                            (ra == a.end() ? pair.first : pair.second));
    }
    PairwiseTask t;
    // Opaque so the id shown to judges does not name the systems.
    t.task_id = "task-" + hex64(fnv1a64(pair.first + '\0' + pair.second + '\0' + id));
    t.dialogue_id = id;
    t.system_a = pair.first;
    t.system_b = pair.second;
    t.response_a = ra->second;
    t.response_b = rb->second;
    t.display_order_seed = rng();
    t.swapped = (t.display_order_seed >> 63) != 0;
    t.judges_per_task = judges_per_task;
    tasks.push_back(std::move(t));
  }
  return tasks;
}

ProportionTest proportion_test(std::size_t wins, std::size_t n, double alpha) {
  if (n == 0) throw DomainError("proportion test needs at least one observation");
  if (wins > n) throw DomainError("more wins than observations");
  ProportionTest r;
  double phat = static_cast<double>(wins) / static_cast<double>(n);
  r.z = (phat - 0.5) / std::sqrt(0.25 / static_cast<double>(n));
  r.p = std::erfc(std::fabs(r.z) / std::sqrt(2.0));
  r.significant = r.p < alpha;
  return r;
}

namespace {

std::map<std::string, const PairwiseTask*> index_tasks(const SystemPair& pair,
                                                       const std::vector<PairwiseTask>& tasks) {
  std::map<std::string, const PairwiseTask*> by_id;
  for (const auto& t : tasks) {
    bool same = (t.system_a == pair.first && t.system_b == pair.second) ||
                (t.system_a == pair.second && t.system_b == pair.first);
    if (same) by_id[t.task_id] = &t;
  }
  return by_id;
}

}  // namespace

ComparisonResult aggregate(const SystemPair& pair, const std::vector<PairwiseTask>& tasks,
                           const std::vector<Judgment>& judgments, double alpha) {
  if (judgments.empty()) throw DomainError("no judgments to aggregate");
  auto by_id = index_tasks(pair, tasks);

  ComparisonResult result;
  result.pair = pair;
  result.alpha = alpha;
  std::set<std::string> seen_tasks;
  for (const auto& j : judgments) {
    j.validate();
    auto it = by_id.find(j.task_id);
    if (it == by_id.end()) {
      throw ValidationError("judgment references task " + j.task_id + " outside " + pair.first +
                            " vs " + pair.second);
    }
    seen_tasks.insert(j.task_id);
    for (auto q : kAllQuestions) {
      auto& qr = result.questions[q];
      if (it->second->system_for(j.answers.at(q)) == pair.first) {
        ++qr.wins_first;
      } else {
        ++qr.wins_second;
      }
      ++qr.n;
    }
  }
  for (auto& [q, qr] : result.questions) {
    qr.pct_first = 100.0 * static_cast<double>(qr.wins_first) / static_cast<double>(qr.n);
    qr.pct_second = 100.0 * static_cast<double>(qr.wins_second) / static_cast<double>(qr.n);
    qr.test = proportion_test(qr.wins_first, qr.n, alpha);
  }
  result.n_judgments = judgments.size();
  result.n_tasks = seen_tasks.size();
  return result;
}

double krippendorff_alpha(const std::vector<std::vector<std::optional<int>>>& units) {
  // Coincidence matrix over the categories that occur in pairable units.
  std::map<int, std::size_t> category_index;
  for (const auto& u : units) {
    std::size_t m = std::count_if(u.begin(), u.end(), [](const auto& v) { return v.has_value(); });
    if (m < 2) continue;
    for (const auto& v : u) {
      if (v) category_index.try_emplace(*v, 0);
    }
  }
  if (category_index.empty()) {
    throw DomainError("Krippendorff's alpha needs at least one unit with two labels");
  }
  std::size_t next = 0;
  for (auto& [label, idx] : category_index) idx = next++;
  const std::size_t c = category_index.size();

  std::vector<double> coincidence(c * c, 0.0);
  for (const auto& u : units) {
    std::size_t m = std::count_if(u.begin(), u.end(), [](const auto& v) { return v.has_value(); });
    if (m < 2) continue;
    std::vector<std::size_t> counts(c, 0);
    for (const auto& v : u) {
      if (v) ++counts[category_index.at(*v)];
    }
    const double w = 1.0 / static_cast<double>(m - 1);
    for (std::size_t i = 0; i < c; ++i) {
      for (std::size_t k = 0; k < c; ++k) {
        double pairs = i == k ? static_cast<double>(counts[i]) * static_cast<double>(counts[i] - (counts[i] > 0 ? 1 : 0))
                              : static_cast<double>(counts[i]) * static_cast<double>(counts[k]);
        coincidence[i * c + k] += pairs * w;
      }
    }
  }

  std::vector<double> marginal(c, 0.0);
  double n = 0.0;
  for (std::size_t i = 0; i < c; ++i) {
    for (std::size_t k = 0; k < c; ++k) marginal[i] += coincidence[i * c + k];
    n += marginal[i];
  }
  double observed = 0.0;
  double expected = 0.0;
  for (std::size_t i = 0; i < c; ++i) {
    for (std::size_t k = 0; k < c; ++k) {
      if (i == k) continue;
      observed += coincidence[i * c + k];
      expected += marginal[i] * marginal[k];
    }
  }
  if (observed == 0.0) return 1.0;  // no disagreement at all
  // alpha = 1 - D_o / D_e with D_o = observed / n, D_e = expected / (n (n - 1)).
  return 1.0 - (n - 1.0) * observed / expected;
}

std::vector<std::vector<std::optional<int>>> agreement_matrix(
    const SystemPair& pair, const std::vector<PairwiseTask>& tasks,
    const std::vector<Judgment>& judgments, QuestionId question) {
  auto by_id = index_tasks(pair, tasks);
  std::map<std::string, std::size_t> judge_col;
  std::map<std::string, std::size_t> task_row;
  for (const auto& j : judgments) {
    if (!by_id.contains(j.task_id)) continue;
    judge_col.try_emplace(j.judge_id, judge_col.size());
    task_row.try_emplace(j.task_id, task_row.size());
  }
  std::vector<std::vector<std::optional<int>>> m(task_row.size(),
                                                 std::vector<std::optional<int>>(judge_col.size()));
  for (const auto& j : judgments) {
    auto it = by_id.find(j.task_id);
    if (it == by_id.end()) continue;
    auto answer = j.answers.find(question);
    if (answer == j.answers.end()) continue;
    int winner = it->second->system_for(answer->second) == pair.first ? 0 : 1;
    m[task_row.at(j.task_id)][judge_col.at(j.judge_id)] = winner;
  }
  return m;
}

std::map<CommonsenseType, TypeGroup> decompose_by_type(
    const std::string& explicit_system, const std::vector<PairwiseTask>& tasks,
    const std::vector<Judgment>& judgments,
    const std::map<std::string, ReasoningTrace>& traces_by_dialogue) {
  std::map<std::string, const PairwiseTask*> by_id;
  std::map<std::string, CommonsenseType> task_type;
  std::map<CommonsenseType, TypeGroup> groups;
  for (const auto& t : tasks) {
    if (t.system_a != explicit_system && t.system_b != explicit_system) continue;
    auto tr = traces_by_dialogue.find(t.dialogue_id);
    if (tr == traces_by_dialogue.end()) {
      throw NotFoundError("no " + explicit_system + " trace for dialogue " + t.dialogue_id);
    }
    if (tr->second.selected.empty()) {
      throw IntegrityError("trace for dialogue " + t.dialogue_id + " has no selected inference");
    }
    auto type = tr->second.selected.front().type;
    by_id[t.task_id] = &t;
    task_type[t.task_id] = type;
    ++groups[type].tasks;
  }
  for (const auto& j : judgments) {
    auto it = by_id.find(j.task_id);
    if (it == by_id.end()) continue;
    auto answer = j.answers.find(QuestionId::Quality);
    if (answer == j.answers.end()) throw ValidationError("judgment without a Quality answer");
    auto& g = groups[task_type.at(j.task_id)];
    ++g.judgments;
    if (it->second->system_for(answer->second) == explicit_system) ++g.wins;
  }
  for (auto& [type, g] : groups) {
    g.win_pct = g.judgments == 0 ? 0.0
                                 : 100.0 * static_cast<double>(g.wins) / static_cast<double>(g.judgments);
  }
  return groups;
}

std::set<std::string> screen_judges(const std::vector<ScreeningRecord>& records,
                                    const ScreeningRule& rule) {
  std::map<std::string, bool> passed;
  for (const auto& r : records) {
    bool ok = word_count(r.explanation) >= rule.min_words && (!rule.require_approval || r.approved);
    auto [it, inserted] = passed.try_emplace(r.judge_id, ok);
    if (!inserted) it->second = it->second && ok;
  }
  std::set<std::string> qualified;
  for (const auto& [id, ok] : passed) {
    if (ok) qualified.insert(id);
  }
  return qualified;
}

std::string format_comparison_table(const std::vector<ComparisonResult>& results) {
  auto cell = [](double pct, bool winner, bool significant) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.1f", pct);
    std::string s = buf;
    if (winner && !significant) s = "<u>" + s + "</u>";
    if (winner) s = "**" + s + "**";
    return s;
  };
  std::string out = "| System | Natural | Engaging | Specific | Quality | n |\n";
  out += "|---|---|---|---|---|---|\n";
  for (const auto& r : results) {
    for (int side = 0; side < 2; ++side) {
      out += "| " + (side == 0 ? r.pair.first : r.pair.second) + " |";
      for (auto q : kAllQuestions) {
        auto it = r.questions.find(q);
        if (it == r.questions.end()) {
          out += " - |";
          continue;
        }
        const auto& qr = it->second;
        double pct = side == 0 ? qr.pct_first : qr.pct_second;
        std::size_t mine = side == 0 ? qr.wins_first : qr.wins_second;
        std::size_t theirs = side == 0 ? qr.wins_second : qr.wins_first;
        out += " " + cell(pct, mine > theirs, qr.test.significant) + " |";
      }
      out += " " + std::to_string(r.n_judgments) + " |\n";
    }
  }
  return out;
}

}  // namespace csd
