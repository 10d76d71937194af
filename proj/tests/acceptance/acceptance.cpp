// One line per acceptance criterion; exits non-zero when any fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <random>
#include <string>

#include "csd/aspects.hpp"
#include "csd/eval.hpp"
#include "csd/experiment.hpp"
#include "csd/inference_engine.hpp"
#include "csd/prompts.hpp"
#include "oracles/oracles.hpp"
#include "oracles/planted.hpp"
#include "unit/fixture_rig.hpp"

using namespace csd;
using nlohmann::json;

namespace {

struct Outcome {
  bool ok = true;
  std::string detail;
};

// Records the first failed expectation.
struct Check {
  Outcome& out;
  void operator()(bool cond, const std::string& what) {
    if (!cond && out.ok) {
      out.ok = false;
      out.detail = what;
    }
  }
};

int failures = 0;

void run(const std::string& name, const std::function<void(Outcome&)>& body, double limit_s = 0) {
  Outcome out;
  auto start = std::chrono::steady_clock::now();
  try {
    body(out);
  } catch (const std::exception& e) {
    out.ok = false;
    out.detail = std::string("exception: ") + e.what();
  }
  double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  if (out.ok && limit_s > 0 && secs >= limit_s) {
    out.ok = false;
    out.detail = "took " + std::to_string(secs) + "s, limit " + std::to_string(limit_s) + "s";
  }
  if (!out.ok) ++failures;
  std::printf("%s %s (%.3fs)%s%s\n", out.ok ? "PASS" : "FAIL", name.c_str(), secs,
              out.detail.empty() ? "" : ": ", out.detail.c_str());
  std::fflush(stdout);
}

std::string slurp(const std::filesystem::path& p) { return testing::read_file(p); }

void significance_pattern(Outcome& out) {
  Check check{out};
  auto doc = json::parse(slurp(testing::source_path("tests/acceptance/reported_preferences.json")));
  auto n = doc.at("judgments_per_comparison").get<std::size_t>();
  std::size_t cells = 0, not_significant = 0;
  for (const auto& c : doc.at("comparisons")) {
    for (std::size_t q = 0; q < 4; ++q) {
      double first = c["first_pct"][q].get<double>();
      double second = c["second_pct"][q].get<double>();
      double winner = std::max(first, second);
      auto wins = static_cast<std::size_t>(std::lround(winner * static_cast<double>(n) / 100.0));
      auto test = proportion_test(wins, n);
      bool expected = c["significant"][q].get<bool>();
      ++cells;
      if (!test.significant) ++not_significant;
      check(test.significant == expected,
            c["first"].get<std::string>() + " vs " + c["second"].get<std::string>() + " " +
                doc["questions"][q].get<std::string>() + " at " + std::to_string(winner) + "%: p=" +
                std::to_string(test.p));
    }
  }
  check(cells == 28, "expected 28 cells, read " + std::to_string(cells));
  check(not_significant == 2, "expected 2 non-significant cells, got " + std::to_string(not_significant));
  if (out.ok) out.detail = std::to_string(cells) + " cells, " + std::to_string(not_significant) + " not significant as reported";
}

void selection_oracle(Outcome& out) {
  Check check{out};
  std::mt19937_64 rng(1000);
  for (int i = 0; i < 1000 && out.ok; ++i) {
    auto groups = oracle::random_groups(rng, 2 + rng() % 3, 2 + rng() % 3, 8);
    auto best = oracle::brute_force(groups);
    auto got = select_diverse_indices(groups, 1'000'000);
    check(oracle::objective(groups, got.indices) == best.objective, "slate " + std::to_string(i) + " misses the optimum");
  }
  for (int i = 0; i < 200 && out.ok; ++i) {
    auto groups = oracle::random_groups(rng, 10, 5, 16);
    auto greedy = greedy_selection(groups);
    auto full = select_diverse_indices(groups, 1'000'000);
    check(full.objective <= greedy.objective, "10x5 slate " + std::to_string(i) + " worse than greedy");
  }
  if (out.ok) out.detail = "1000 exhaustive slates exact, 200 heuristic slates <= greedy";
}

void krippendorff(Outcome& out) {
  Check check{out};
  using Units = std::vector<std::vector<std::optional<int>>>;
  const std::optional<int> none;
  const std::vector<std::pair<Units, double>> cases = {
      {{{0, 0}, {0, 1}}, 0.0},
      {{{0, 0, 1}, {1, 1, 1}, {0, 1, none}}, 1.0 / 15.0},
      {{{1, 1}, {2, 2}, {3, 3}, {1, 2}}, 2.0 / 3.0},
  };
  for (const auto& [units, expect] : cases) {
    double got = krippendorff_alpha(units);
    check(std::fabs(got - expect) < 1e-9, "hand case expected " + std::to_string(expect) + " got " + std::to_string(got));
    check(std::fabs(got - oracle::krippendorff_nominal(units)) < 1e-9, "disagrees with the pairwise oracle");
  }
  std::mt19937_64 rng(99);
  Units random(10'000, std::vector<std::optional<int>>(3));
  for (auto& row : random) {
    for (auto& v : row) v = static_cast<int>(rng() & 1);
  }
  double noise = krippendorff_alpha(random);
  check(std::fabs(noise) < 0.05, "random labels gave " + std::to_string(noise));
  Units perfect(50, std::vector<std::optional<int>>(3));
  for (std::size_t i = 0; i < perfect.size(); ++i) {
    for (auto& v : perfect[i]) v = static_cast<int>(i % 2);
  }
  check(krippendorff_alpha(perfect) == 1.0, "perfect agreement is not exactly 1");
  if (out.ok) out.detail = "3 hand cases, random alpha " + std::to_string(noise) + ", perfect 1.0";
}

void prompt_goldens(Outcome& out) {
  Check check{out};
  auto golden = [](const std::string& n) { return slurp(testing::source_path("tests/golden/" + n)); };
  auto ctx = testing::jan_context();
  auto set = testing::jan_inference_set();
  std::vector<Inference> picked = {set.at(CommonsenseType::Motivation)};
  const std::vector<std::string> explanations = {
      "Response A is better overall choice.it shows empathy towards speaker 1's situation,acknowledges the "
      "importance of a peaceful environment for both humans and animals ,and expresses concern for the "
      "well-being os speaker 1's dog.",
      "Response B is better as it shows more concern, expresses understanding and empathy for their situation.",
      "The given response is more relevance to the conversation and make more comprehensive",
  };
  std::vector<std::pair<std::string, std::string>> rendered = {
      {"implicit_prompt.txt", render_implicit_prompt(ctx, set, {})},
      {"selection_prompt_k1.txt", render_selection_prompt(ctx, set, 1, {})},
      {"explicit_response_prompt.txt", render_response_prompt_explicit(ctx, picked, {})},
      {"baseline_prompt.txt", render_baseline_prompt(ctx)},
      {"aspect_prompt.txt", render_aspect_prompt(explanations)},
  };
  for (const auto& [file, text] : rendered) check(text == golden(file), file + " differs");
  check(rendered[1].second.find("select the best 1 idea") != std::string::npos, "selection literal missing");
  check(rendered[2].second.find("sufficiently answer all questions posed") != std::string::npos, "response literal missing");
  check(rendered[3].second.find("casual yet engaging") != std::string::npos, "baseline literal missing");
  if (out.ok) out.detail = "5 prompts byte-identical";
}

void scripted_run(Outcome& out) {
  Check check{out};
  testing::TempDir tmp;

  auto only = [&](const std::string& system, const std::filesystem::path& dir) {
    auto m = testing::fixture_manifest(dir);
    m.systems = {m.system(system)};
    return m;
  };
  {
    testing::FixtureRig rig;
    run_experiment(only("explicit", tmp / "e"), rig.backends());
    check(rig.chat.calls() == 6, "explicit made " + std::to_string(rig.chat.calls()) + " completions for 3 dialogues");
    auto bundle = load_bundle(tmp / "e");
    for (const auto& [id, t] : bundle.traces.at("explicit")) {
      check(t.candidates.size() == 10, id + ": candidate types != 10");
      check(t.selected.size() == 1, id + ": selected != 1");
      check(t.raw_outputs.size() == 2, id + ": completions != 2");
    }
  }
  {
    testing::FixtureRig rig;
    run_experiment(only("implicit", tmp / "i"), rig.backends());
    check(rig.chat.calls() == 3, "implicit made " + std::to_string(rig.chat.calls()) + " completions");
    auto bundle = load_bundle(tmp / "i");
    for (const auto& [id, t] : bundle.traces.at("implicit")) check(t.raw_outputs.size() == 1, id + ": implicit completions != 1");
  }
  {
    testing::FixtureRig rig;
    run_experiment(only("gpt", tmp / "g"), rig.backends());
    check(rig.generation.calls() == 0 && rig.embed.calls() == 0, "baseline touched the generation backend");
    check(rig.chat.calls() == 3, "baseline made " + std::to_string(rig.chat.calls()) + " completions");
  }
  std::string digests[2];
  for (int i = 0; i < 2; ++i) {
    testing::FixtureRig rig;
    auto m = testing::fixture_manifest(tmp / ("run" + std::to_string(i)));
    auto s = run_experiment(m, rig.backends());
    check(s.failures.empty() && s.cells_total == 12, "full run incomplete");
    digests[i] = bundle_digest(m.output_dir);
  }
  check(digests[0] == digests[1], "bundles differ between runs");
  if (out.ok) out.detail = "bundle digest " + digests[0];
}

void bookkeeping(Outcome& out) {
  Check check{out};
  testing::TempDir tmp;
  auto m = ExperimentManifest::load(testing::source_path("data/manifests/synthetic.json"));
  m.output_dir = tmp.path();
  m.systems = {m.system("explicit"), m.system("gpt")};
  testing::FixtureRig rig;
  auto summary = run_experiment(m, rig.backends());
  check(summary.failures.empty(), "synthetic run had failures");
  auto bundle = load_bundle(tmp.path());

  const SystemPair pair{"explicit", "gpt"};
  auto tasks = build_tasks(bundle.responses, pair, 3, m.seed);
  check(tasks.size() == 100, "expected 100 tasks");
  const std::map<QuestionId, int> planted_wins = {{QuestionId::Naturalness, 227},
                                                  {QuestionId::Engagingness, 248},
                                                  {QuestionId::Specificity, 259},
                                                  {QuestionId::Quality, 253}};
  planted::Study study;
  study.tasks = tasks;
  int j = 0;
  for (const auto& t : tasks) {
    for (int k = 0; k < 3; ++k, ++j) {
      Judgment jd{t.task_id, "judge-" + std::to_string(k), {}, "planted preference"};
      for (auto [q, w] : planted_wins) jd.answers[q] = ((j < w) != t.swapped) ? Choice::A : Choice::B;
      study.judgments.push_back(jd);
    }
  }
  auto result = aggregate(pair, study.tasks, study.judgments);
  for (auto [q, w] : planted_wins) {
    const auto& qr = result.questions.at(q);
    check(qr.n == 300, "n != 300");
    check(qr.pct_first == 100.0 * w / 300.0, std::string(to_string(q)) + " percentage differs from planted");
  }
  auto groups = decompose_by_type("explicit", study.tasks, study.judgments, bundle.traces.at("explicit"));
  std::size_t total = 0, judged = 0;
  for (const auto& [type, g] : groups) {
    total += g.tasks;
    judged += g.judgments;
  }
  check(total == 100, "group sizes sum to " + std::to_string(total));
  check(judged == 300, "grouped judgments sum to " + std::to_string(judged));
  if (out.ok) out.detail = "300 judgments, " + std::to_string(groups.size()) + " type groups over 100 tasks";
}

void aspect_pipeline(Outcome& out) {
  Check check{out};
  auto cmap = CategoryMap::load(testing::source_path("data/categories.json"));
  using P = std::vector<std::string>;
  auto lists = parse_aspect_lists(
      "1. empathy, acknowledge, concern\n2. concern, understanding, empathy\n3. relevance, comprehensive", 3);
  check(map_to_categories(lists[0], cmap) == P{"empathy", "specific", "support"}, "first explanation");
  P per_phrase;
  for (const auto& p : lists[1]) per_phrase.push_back(cmap.category_of(p));
  check(per_phrase == P{"support", "support", "empathy"}, "second explanation");
  check(map_to_categories(lists[2], cmap) == P{"relevant", "detailed"}, "third explanation");
  using S = std::set<std::string>;
  auto a = precision_recall(S{"a", "b"}, S{"a", "b"});
  auto b = precision_recall(S{"a", "b"}, S{"a", "c"});
  auto c = precision_recall(S{"a"}, S{"a", "b", "c"});
  check(a.precision == 1.0 && a.recall == 1.0, "identical sets");
  check(b.precision == 0.5 && b.recall == 0.5, "half overlap");
  check(c.precision == 1.0 && c.recall == 1.0 / 3.0, "one of three");
  if (out.ok) out.detail = "worked example and unit cases exact";
}

}  // namespace

int main() {
  run("significance-pattern", significance_pattern, 1.0);
  run("selection-oracle", selection_oracle, 30.0);
  run("krippendorff-alpha", krippendorff);
  run("prompt-goldens", prompt_goldens);
  run("scripted-end-to-end", scripted_run, 5.0);
  run("evaluation-bookkeeping", bookkeeping);
  run("aspect-pipeline", aspect_pipeline);
  std::printf("NOTE headline-human-results: preference percentages from human judges over live model output "
              "cannot be reproduced offline; the checks above cover the machinery that produces them\n");
  std::printf("%s: %d failed\n", failures == 0 ? "ACCEPTANCE PASSED" : "ACCEPTANCE FAILED", failures);
  return failures == 0 ? 0 : 1;
}
