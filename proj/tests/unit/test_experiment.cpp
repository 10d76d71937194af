#include "doctest.h"

#include <fstream>

#include "csd/errors.hpp"
#include "csd/serialization.hpp"
#include "fixture_rig.hpp"

using namespace csd;

namespace {

using Rig = testing::FixtureRig;
using testing::fixture_manifest;

ExperimentManifest two_systems(const std::filesystem::path& out) {
  auto m = fixture_manifest(out);
  m.systems = {m.system("explicit"), m.system("gpt")};
  return m;
}

std::size_t line_count(const std::filesystem::path& p) {
  std::ifstream in(p);
  std::size_t n = 0;
  for (std::string line; std::getline(in, line);) n += line.empty() ? 0 : 1;
  return n;
}

}  // namespace

TEST_CASE("ingest computes corpus statistics") {
  auto c = ingest_corpus(testing::source_path("data/corpus/fixture3.jsonl"));
  CHECK(c.stats.count == 3);
  CHECK(c.stats.mean_turns == doctest::Approx(7.0 / 3.0));
  CHECK(c.find("lost-keys").turns().size() == 3);
  CHECK_THROWS_AS(c.find("nope"), NotFoundError);

  auto big = ingest_corpus(testing::source_path("data/corpus/synthetic100.jsonl"));
  CHECK(big.stats.count == 100);
  CHECK(big.stats.mean_turns == 3.1);
  CHECK(big.stats.mean_words_per_utterance == doctest::Approx(3185.0 / 310.0).epsilon(1e-12));
}

TEST_CASE("ingest rejects bad corpora with a location") {
  testing::TempDir dir;
  auto good = R"({"dialogue_id": "a", "turns": [{"role": "Other", "text": "hi there"}]})";
  auto check_error = [&](const std::string& body, const std::string& needle) {
    testing::write_file(dir / "c.jsonl", body);
    try {
      ingest_corpus(dir / "c.jsonl");
      FAIL("expected a validation error for: " << needle);
    } catch (const ValidationError& e) {
      CHECK(std::string(e.what()).find(needle) != std::string::npos);
    }
  };
  check_error(std::string(good) + "\n{broken\n", "c.jsonl:2");
  check_error(std::string(good) + "\n" + good + "\n", "duplicate");
  check_error(R"({"dialogue_id": "b", "turns": [{"role": "Other", "text": "x"}, {"role": "You", "text": "y"}]})"
              "\n",
              "'b'");
  check_error("\n", "no dialogues");
  CHECK_THROWS_AS(ingest_corpus(dir / "missing.jsonl"), NotFoundError);
}

TEST_CASE("manifest validation and round trip") {
  auto m = ExperimentManifest::load(testing::source_path("data/manifests/fixture.json"));
  CHECK(m.systems.size() == 4);
  CHECK(m.corpus.is_absolute());
  CHECK(m.system("doctor").responses_file.has_value());
  CHECK_THROWS_AS(m.system("nobody"), NotFoundError);

  auto again = ExperimentManifest::from_json(m.to_json());
  CHECK(again.to_json() == m.to_json());
  CHECK_FALSE(m.to_json().contains("output_dir"));

  auto dup = m;
  dup.systems.push_back(dup.systems.front());
  CHECK_THROWS_AS(dup.validate(), ValidationError);
  auto slash = m;
  slash.systems[0].name = "a/b";
  CHECK_THROWS_AS(slash.validate(), ValidationError);
  auto both = m;
  both.systems[0].responses_file = "x.jsonl";
  CHECK_THROWS_AS(both.validate(), ValidationError);
}

TEST_CASE("pipeline config serializes losslessly") {
  PipelineConfig cfg;
  cfg.approach = Approach::Implicit;
  cfg.k = 2;
  cfg.llm.temperature = 0.3;
  cfg.engine.candidates_per_type = 4;
  cfg.alternate_baseline_prompt = true;
  cfg.record_timing = false;
  auto j = pipeline_config_to_json(cfg);
  CHECK(pipeline_config_to_json(pipeline_config_from_json(j)) == j);
}

TEST_CASE("two systems over three dialogues fill six cells") {
  testing::TempDir out;
  Rig rig;
  auto summary = run_experiment(two_systems(out.path()), rig.backends());
  CHECK(summary.cells_total == 6);
  CHECK(summary.computed == 6);
  CHECK(summary.failures.empty());
  CHECK(line_count(out / "responses/explicit.jsonl") == 3);
  CHECK(line_count(out / "responses/gpt.jsonl") == 3);
  CHECK(line_count(out / "traces.jsonl") == 6);
  // explicit: 2 completions per dialogue, gpt: 1.
  CHECK(rig.chat.calls() == 9);

  auto bundle = load_bundle(out.path());
  CHECK(bundle.system_names() == std::vector<std::string>{"explicit", "gpt"});
  const auto& ex = bundle.traces.at("explicit");
  REQUIRE(ex.size() == 3);
  for (const auto& [id, t] : ex) {
    CHECK(t.candidates.size() == 10);
    CHECK(t.selected.size() == 1);
    CHECK(t.rendered_prompts.size() == 2);
    CHECK(bundle.responses.at("explicit").at(id) == t.response);
  }
  CHECK(ex.at("jan-dog").selected[0].type == CommonsenseType::Motivation);
  CHECK(bundle.traces.at("gpt").at("jan-dog").candidates.empty());
}

TEST_CASE("resume recomputes only the missing cell") {
  testing::TempDir out;
  {
    Rig rig;
    run_experiment(two_systems(out.path()), rig.backends());
  }
  auto before = bundle_digest(out.path());
  auto path = out / "responses/explicit.jsonl";
  auto lines = testing::read_file(path);
  auto first_end = lines.find('\n');
  auto second_end = lines.find('\n', first_end + 1);
  testing::write_file(path, lines.substr(0, first_end + 1) + lines.substr(second_end + 1));

  Rig rig;
  auto summary = run_experiment(two_systems(out.path()), rig.backends());
  CHECK(summary.computed == 1);
  CHECK(summary.skipped == 5);
  CHECK(rig.chat.calls() == 2);
  CHECK(bundle_digest(out.path()) == before);
}

TEST_CASE("an interrupted trace file is tolerated and completed") {
  testing::TempDir out;
  {
    Rig rig;
    run_experiment(two_systems(out.path()), rig.backends());
  }
  auto before = bundle_digest(out.path());
  auto traces = testing::read_file(out / "traces.jsonl");
  auto last = traces.rfind('\n', traces.size() - 2);
  testing::write_file(out / "traces.jsonl", traces.substr(0, last + 1) + "{\"system\": \"gpt\", \"tra");
  Rig rig;
  auto summary = run_experiment(two_systems(out.path()), rig.backends());
  CHECK(summary.computed == 1);
  CHECK(bundle_digest(out.path()) == before);
}

TEST_CASE("external responses load verbatim without model calls") {
  testing::TempDir out;
  Rig rig;
  auto m = fixture_manifest(out.path());
  m.systems = {m.system("doctor")};
  auto summary = run_experiment(m, rig.backends());
  CHECK(summary.loaded_external == 3);
  CHECK(rig.chat.calls() == 0);
  CHECK(rig.generation.calls() == 0);
  auto bundle = load_bundle(out.path());
  CHECK(bundle.responses.at("doctor").at("lost-keys") == "Maybe you should get a hook by the door.");
  CHECK(bundle.traces.count("doctor") == 0);
}

TEST_CASE("missing external responses are reported as failures") {
  testing::TempDir out;
  testing::write_file(out / "partial.jsonl", R"({"dialogue_id": "jan-dog", "response": "ok"})" "\n");
  Rig rig;
  auto m = fixture_manifest(out / "bundle");
  m.systems = {SystemSpec{"partial", std::nullopt, out / "partial.jsonl"}};
  auto summary = run_experiment(m, rig.backends());
  CHECK(summary.loaded_external == 1);
  CHECK(summary.failures.size() == 2);
  CHECK(summary.completed() == 1);
  CHECK(line_count(out / "bundle/failures.jsonl") == 2);
}

TEST_CASE("failed cells are recorded and retried") {
  testing::TempDir out;
  {
    Rig rig;
    rig.chat.fail_always(400);
    auto summary = run_experiment(two_systems(out.path()), rig.backends());
    CHECK(summary.failures.size() == 6);
    CHECK(summary.computed == 0);
    CHECK(summary.failures.front().stage == "selection");
  }
  Rig rig;
  auto summary = run_experiment(two_systems(out.path()), rig.backends());
  CHECK(summary.computed == 6);
  CHECK(summary.failures.empty());
  CHECK(line_count(out / "failures.jsonl") == 0);
}

TEST_CASE("bundles are byte-reproducible across directories and worker counts") {
  testing::TempDir a, b;
  {
    Rig rig;
    run_experiment(fixture_manifest(a.path()), rig.backends());
  }
  {
    Rig rig;
    auto m = fixture_manifest(b.path());
    m.workers = 1;
    run_experiment(m, rig.backends());
  }
  CHECK(bundle_digest(a.path()) == bundle_digest(b.path()));
  CHECK(testing::read_file(a / "traces.jsonl") == testing::read_file(b / "traces.jsonl"));
}

TEST_CASE("traces round-trip through JSON") {
  testing::TempDir out;
  Rig rig;
  run_experiment(two_systems(out.path()), rig.backends());
  auto bundle = load_bundle(out.path());
  for (const auto& [sys, by_dialogue] : bundle.traces) {
    for (const auto& [id, t] : by_dialogue) {
      auto j = to_json(t);
      CHECK(trace_from_json(j) == t);
      CHECK(to_json(trace_from_json(j)).dump() == j.dump());
    }
  }
  CHECK(trace_id("explicit", "jan-dog") == "explicit/jan-dog");
}
