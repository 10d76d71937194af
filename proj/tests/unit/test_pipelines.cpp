#include "doctest.h"

#include "csd/errors.hpp"
#include "csd/fake_backends.hpp"
#include "csd/pipelines.hpp"
#include "support.hpp"

using namespace csd;

namespace {

struct Rig {
  FakeChatBackend chat;
  FakeEmbeddingProvider embed{64};
  LlmGateway gateway;
  FixtureGenerationBackend generation;
  FewShotStore store = FewShotStore::load(testing::source_path("data/fewshot"));

  Rig() : gateway(chat, embed, options()) {
    generation.load(testing::source_path("data/fixtures/generation.jsonl"));
    auto ctx = testing::jan_context();
    std::map<std::string, CommonsenseType> script;
    script[render_context(ctx)] = CommonsenseType::Motivation;
    chat.set_responder(fixture_chat_responder(script));
  }

  static GatewayOptions options() {
    GatewayOptions o;
    o.sleep = [](std::chrono::milliseconds) {};
    o.record_latency = false;
    return o;
  }
};

PipelineConfig config(Approach a) {
  PipelineConfig cfg;
  cfg.approach = a;
  cfg.record_timing = false;
  return cfg;
}

}  // namespace

TEST_CASE("parse_selection handles labels, bullets and echoes") {
  auto set = testing::jan_inference_set();
  const auto& motivation = set.at(CommonsenseType::Motivation);

  auto a = parse_selection("Selection:\n- " + motivation.prefixed_text, set);
  REQUIRE(a.size() == 1);
  CHECK(a[0].type == CommonsenseType::Motivation);

  auto b = parse_selection(motivation.prefixed_text, set);
  REQUIRE(b.size() == 1);
  CHECK(b[0] == motivation);

  auto c = parse_selection("Selection: \"" + set.at(CommonsenseType::Cause).prefixed_text + "\"", set);
  CHECK(c.at(0).type == CommonsenseType::Cause);

  auto d = parse_selection("∗ " + set.at(CommonsenseType::React).raw_text, set);
  CHECK(d.at(0).type == CommonsenseType::React);

  CHECK_THROWS_AS(parse_selection("the weather is nice", set), ParseError);
  CHECK_THROWS_AS(parse_selection("Selection:\n", set), ParseError);
}

TEST_CASE("parse_selection keeps k distinct picks in output order") {
  auto set = testing::jan_inference_set();
  std::string raw = "Selection:\n- " + set.at(CommonsenseType::Desire).prefixed_text + "\n- " +
                    set.at(CommonsenseType::Desire).prefixed_text + "\n- " +
                    set.at(CommonsenseType::Cause).prefixed_text;
  auto two = parse_selection(raw, set, 2);
  REQUIRE(two.size() == 2);
  CHECK(two[0].type == CommonsenseType::Desire);
  CHECK(two[1].type == CommonsenseType::Cause);
}

TEST_CASE("parse_selection falls back to embedding similarity") {
  auto set = testing::jan_inference_set();
  Embedding target{1, 0, 0};
  std::map<CommonsenseType, Inference> by_type;
  for (auto t : kAllCommonsenseTypes) {
    auto inf = set.at(t);
    inf.embedding = t == CommonsenseType::Prerequisite ? target : Embedding{0, 1, 0};
    by_type.emplace(t, inf);
  }
  InferenceSet embedded(by_type);
  TextEmbedder close = [](const std::string&) { return Embedding{0.99, 0.1, 0}; };
  TextEmbedder far = [](const std::string&) { return Embedding{0, 0, 1}; };
  auto picked = parse_selection("Jan could get to where the dog lives.", embedded, 1, close, 0.85);
  CHECK(picked.at(0).type == CommonsenseType::Prerequisite);
  CHECK_THROWS_AS(parse_selection("Jan could get to where the dog lives.", embedded, 1, far, 0.85), ParseError);
}

TEST_CASE("parse_response strips the label and quotes") {
  CHECK(parse_response("Listener's Response: \"Oh no, is the dog okay?\"") == "Oh no, is the dog okay?");
  CHECK(parse_response("  plain reply  ") == "plain reply");
  CHECK_THROWS_AS(parse_response("Listener's Response:   "), ParseError);
}

TEST_CASE("explicit pipeline makes two completions and records the selection") {
  Rig rig;
  auto r = run_explicit(testing::jan_context(), config(Approach::Explicit), rig.generation, rig.gateway, rig.store);
  CHECK(rig.chat.calls() == 2);
  CHECK(rig.generation.calls() == 10);
  const auto& t = r.trace;
  CHECK(t.approach == Approach::Explicit);
  CHECK(t.candidates.size() == 10);
  REQUIRE(t.diverse_set.has_value());
  REQUIRE(t.selected.size() == 1);
  CHECK(t.selected[0].type == CommonsenseType::Motivation);
  CHECK(t.rendered_prompts.size() == 2);
  CHECK(t.raw_outputs.size() == 2);
  CHECK(t.prompt("selection") != nullptr);
  CHECK(t.prompt("response") != nullptr);
  std::vector<std::string> stages;
  for (const auto& st : t.timings) {
    stages.push_back(st.stage);
    CHECK(st.millis == 0.0);
  }
  CHECK(stages == std::vector<std::string>{"input", "generation", "diversity", "selection", "response"});
  CHECK_FALSE(r.response.empty());
  CHECK(r.response == t.response);
  CHECK(t.prompt("response")->find(t.selected[0].prefixed_text) != std::string::npos);
}

TEST_CASE("implicit pipeline makes one completion over the whole set") {
  Rig rig;
  auto r = run_implicit(testing::jan_context(), config(Approach::Implicit), rig.generation, rig.gateway, rig.store);
  CHECK(rig.chat.calls() == 1);
  CHECK(r.trace.selected.empty());
  CHECK(r.trace.rendered_prompts.size() == 1);
  for (const auto& inf : *r.trace.diverse_set) {
    CHECK(r.trace.prompt("response")->find(inf.prefixed_text) != std::string::npos);
  }
}

TEST_CASE("baseline pipeline never touches generation") {
  Rig rig;
  auto r = run_pipeline(testing::jan_context(), config(Approach::Baseline), nullptr, rig.gateway, nullptr);
  CHECK(rig.chat.calls() == 1);
  CHECK(rig.generation.calls() == 0);
  CHECK(rig.embed.calls() == 0);
  CHECK(r.trace.candidates.empty());
  CHECK_FALSE(r.trace.diverse_set.has_value());
  CHECK(*r.trace.prompt("response") == render_baseline_prompt(testing::jan_context()));

  auto alt = config(Approach::Baseline);
  alt.alternate_baseline_prompt = true;
  auto r2 = run_baseline(testing::jan_context(), alt, rig.gateway);
  CHECK(r2.trace.alternate_baseline_prompt);
  CHECK(*r2.trace.prompt("response") == render_baseline_prompt(testing::jan_context(), templates::kAlternateBaseline));
}

TEST_CASE("pipelines are deterministic under fixture backends") {
  Rig a, b;
  auto ra = run_explicit(testing::jan_context(), config(Approach::Explicit), a.generation, a.gateway, a.store);
  auto rb = run_explicit(testing::jan_context(), config(Approach::Explicit), b.generation, b.gateway, b.store);
  CHECK(ra.trace == rb.trace);
}

TEST_CASE("a failing stage is named and keeps the partial trace") {
  SUBCASE("generation") {
    Rig rig;
    FixtureGenerationBackend empty;
    try {
      run_explicit(testing::jan_context(), config(Approach::Explicit), empty, rig.gateway, rig.store);
      FAIL("expected failure");
    } catch (const PipelineError& e) {
      CHECK(e.stage() == "generation");
      CHECK(e.trace().failed_stage == "generation");
      CHECK(e.trace().candidates.empty());
    }
  }
  SUBCASE("selection") {
    Rig rig;
    rig.chat.set_responder([](std::string_view) { return std::string("Selection:\nthe weather is nice"); });
    try {
      run_explicit(testing::jan_context(), config(Approach::Explicit), rig.generation, rig.gateway, rig.store);
      FAIL("expected failure");
    } catch (const PipelineError& e) {
      CHECK(e.stage() == "selection");
      CHECK(e.trace().candidates.size() == 10);
      CHECK(e.trace().raw_outputs.size() == 1);
    }
  }
  SUBCASE("response") {
    Rig rig;
    rig.chat.fail_always(400);
    try {
      run_baseline(testing::jan_context(), config(Approach::Baseline), rig.gateway);
      FAIL("expected failure");
    } catch (const PipelineError& e) {
      CHECK(e.stage() == "response");
      CHECK(rig.chat.calls() == 1);
    }
  }
  SUBCASE("input") {
    Rig rig;
    DialogueContext bad("bad", {{SpeakerRole::You, "hello"}});
    CHECK_THROWS_AS(run_baseline(bad, config(Approach::Baseline), rig.gateway), PipelineError);
    CHECK(rig.chat.calls() == 0);
  }
}

TEST_CASE("mismatched approach is a validation error") {
  Rig rig;
  CHECK_THROWS_AS(run_baseline(testing::jan_context(), config(Approach::Explicit), rig.gateway), ValidationError);
  auto cfg = config(Approach::Explicit);
  cfg.k = 0;
  CHECK_THROWS_AS(cfg.validate(), ValidationError);
}

TEST_CASE("recorded prompts replay from the trace") {
  Rig rig;
  for (auto a : {Approach::Explicit, Approach::Implicit, Approach::Baseline}) {
    auto cfg = config(a);
    auto r = run_pipeline(testing::jan_context(), cfg, &rig.generation, rig.gateway, &rig.store);
    CHECK(replay_prompts(r.trace, &rig.store, cfg) == r.trace.rendered_prompts);
  }
}
