#include "csd/pipelines.hpp"

#include <algorithm>
#include <chrono>
#include <cctype>

#include "csd/util.hpp"

namespace csd {

void PipelineConfig::validate() const {
  if (approach == Approach::Explicit && k < 1) throw ValidationError("k must be at least 1");
  llm.validate();
  if (approach != Approach::Baseline) engine.validate();
}

// ---------------------------------------------------------------------------
// Output parsing

namespace {

constexpr std::string_view kResponseLabel = "Listener's Response:";

// Leading list markers: unicode asterisk, ascii bullets, "1." / "1)".
std::string_view strip_bullet(std::string_view s) {
  s = trim_view(s);
  for (bool changed = true; changed && !s.empty();) {
    changed = false;
    for (std::string_view b : {"∗", "•", "·", "*", "-"}) {
      if (s.substr(0, b.size()) == b) {
        s = trim_view(s.substr(b.size()));
        changed = true;
      }
    }
    std::size_t digits = 0;
    while (digits < s.size() && std::isdigit(static_cast<unsigned char>(s[digits]))) ++digits;
    if (digits > 0 && digits < s.size() && (s[digits] == '.' || s[digits] == ')')) {
      s = trim_view(s.substr(digits + 1));
      changed = true;
    }
  }
  return s;
}

bool has_bullet(std::string_view s) { return strip_bullet(s).size() != trim_view(s).size(); }

std::string_view strip_quotes(std::string_view s) {
  s = trim_view(s);
  for (bool changed = true; changed;) {
    changed = false;
    for (auto [open, close] : {std::pair<std::string_view, std::string_view>{"\"", "\""},
                               {"'", "'"}, {"“", "”"}}) {
      if (s.size() >= open.size() + close.size() && s.substr(0, open.size()) == open &&
          s.substr(s.size() - close.size()) == close) {
        s = trim_view(s.substr(open.size(), s.size() - open.size() - close.size()));
        changed = true;
      }
    }
  }
  return s;
}

std::string normalize_point(std::string_view s) {
  auto core = strip_quotes(strip_bullet(s));
  std::string out;
  bool space = false;
  for (unsigned char c : core) {
    if (std::isspace(c)) {
      space = !out.empty();
      continue;
    }
    if (space) out += ' ';
    space = false;
    out += static_cast<char>(std::tolower(c));
  }
  while (!out.empty() && (out.back() == '.' || out.back() == '!' || out.back() == ' ')) out.pop_back();
  return out;
}

std::vector<std::string> selection_items(const std::string& raw) {
  auto lines = split_lines(raw);
  std::vector<std::string> region;
  bool labelled = false;
  for (std::size_t i = 0; i < lines.size(); ++i) {
    auto t = strip_bullet(lines[i]);
    auto t2 = trim_view(t);
    if (starts_with_ci(t2, "selection") && t2.find(':') != std::string_view::npos &&
        trim_view(t2.substr(9, t2.find(':') - 9)).empty()) {
      labelled = true;
      auto rest = trim_view(t2.substr(t2.find(':') + 1));
      if (!rest.empty()) region.emplace_back(rest);
      region.insert(region.end(), lines.begin() + static_cast<std::ptrdiff_t>(i) + 1, lines.end());
      break;
    }
  }
  if (!labelled) region = lines;

  std::vector<std::string> items;
  bool any_bullet = false;
  for (const auto& l : region) any_bullet = any_bullet || has_bullet(l);
  for (const auto& l : region) {
    if (trim_view(l).empty()) continue;
    if (any_bullet && !has_bullet(l)) continue;
    items.emplace_back(strip_quotes(strip_bullet(l)));
  }
  return items;
}

}  // namespace

std::vector<Inference> parse_selection(const std::string& raw, const InferenceSet& set,
                                       std::size_t k, const TextEmbedder& embed,
                                       double threshold) {
  auto items = selection_items(raw);
  if (items.empty()) throw ParseError("selection output lists no talking point", raw);

  std::vector<Inference> chosen;
  for (const auto& item : items) {
    if (chosen.size() == k) break;
    const auto key = normalize_point(item);
    const Inference* match = nullptr;
    for (const auto& member : set) {
      if (normalize_point(member.prefixed_text) == key || normalize_point(member.raw_text) == key) {
        match = &member;
        break;
      }
    }
    if (match == nullptr && embed) {
      auto probe = embed(item);
      double best = -2.0;
      for (const auto& member : set) {
        if (!member.embedding) continue;
        double s = cosine_similarity(probe, *member.embedding);
        if (s > best) {
          best = s;
          match = &member;
        }
      }
      if (best < threshold) match = nullptr;
    }
    if (match == nullptr) {
      throw ParseError("selected talking point matches no candidate: '" + item + "'", raw);
    }
    bool dup = std::any_of(chosen.begin(), chosen.end(),
                           [&](const Inference& c) { return c.type == match->type; });
    if (!dup) chosen.push_back(*match);
  }
  return chosen;
}

std::string parse_response(const std::string& raw) {
  auto s = trim_view(raw);
  if (starts_with_ci(s, kResponseLabel)) s = trim_view(s.substr(kResponseLabel.size()));
  s = strip_quotes(s);
  if (s.empty()) throw ParseError("empty response", raw);
  return std::string(s);
}

// ---------------------------------------------------------------------------
// Pipelines

namespace {

class StageClock {
 public:
  StageClock(ReasoningTrace& trace, std::string stage, bool enabled)
      : trace_(trace), stage_(std::move(stage)), enabled_(enabled),
        start_(std::chrono::steady_clock::now()) {}
  ~StageClock() {
    double ms = 0.0;
    if (enabled_) {
      ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start_).count();
    }
    trace_.timings.push_back({stage_, ms});
  }

 private:
  ReasoningTrace& trace_;
  std::string stage_;
  bool enabled_;
  std::chrono::steady_clock::time_point start_;
};

ReasoningTrace start_trace(const DialogueContext& ctx, const PipelineConfig& cfg, Approach approach) {
  ReasoningTrace trace;
  trace.dialogue_id = ctx.id();
  trace.approach = approach;
  trace.context = ctx.turns();
  trace.model_id = cfg.llm.model_id;
  trace.k = approach == Approach::Explicit ? static_cast<int>(cfg.k) : 0;
  trace.alternate_baseline_prompt = approach == Approach::Baseline && cfg.alternate_baseline_prompt;
  return trace;
}

template <typename Fn>
auto stage(ReasoningTrace& trace, const PipelineConfig& cfg, const std::string& name, Fn&& fn)
    -> decltype(fn()) {
  try {
    StageClock clock(trace, name, cfg.record_timing);
    return fn();
  } catch (const PipelineError&) {
    throw;
  } catch (const std::exception& e) {
    trace.failed_stage = name;
    trace.error = e.what();
    throw PipelineError(name, e.what(), trace);
  }
}

void check_approach(const PipelineConfig& cfg, Approach expected) {
  if (cfg.approach != expected) {
    throw ValidationError("pipeline configured for " + std::string(to_string(cfg.approach)) +
                          " cannot run " + std::string(to_string(expected)));
  }
  cfg.validate();
}

// Shared front half of the explicit and implicit pipelines.
InferenceSet generate_and_diversify(const DialogueContext& ctx, const PipelineConfig& cfg,
                                    GenerationBackend& backend, LlmGateway& gateway,
                                    ReasoningTrace& trace) {
  auto slate = stage(trace, cfg, "generation", [&] {
    return generate_candidates(ctx, cfg.engine, backend, gateway);
  });
  trace.candidates = slate.by_type;
  auto chosen = stage(trace, cfg, "diversity", [&] { return select_diverse(slate, cfg.engine); });
  trace.diverse_set = chosen.set;
  trace.diversity_objective = chosen.detail.objective;
  return chosen.set;
}

std::string respond(const std::string& name, const std::string& prompt, const PipelineConfig& cfg,
                    LlmGateway& gateway, ReasoningTrace& trace) {
  trace.rendered_prompts.push_back({name, prompt});
  return stage(trace, cfg, name, [&] {
    auto rec = gateway.chat_complete(prompt, cfg.llm);
    trace.raw_outputs.push_back({name, rec.output});
    return parse_response(rec.output);
  });
}

}  // namespace

PipelineResult run_explicit(const DialogueContext& ctx, const PipelineConfig& cfg,
                            GenerationBackend& backend, LlmGateway& gateway,
                            const FewShotStore& store) {
  check_approach(cfg, Approach::Explicit);
  auto trace = start_trace(ctx, cfg, Approach::Explicit);
  stage(trace, cfg, "input", [&] { ctx.require_pipeline_ready(); });

  auto set = generate_and_diversify(ctx, cfg, backend, gateway, trace);

  trace.selected = stage(trace, cfg, "selection", [&] {
    auto selection_prompt = render_selection_prompt(ctx, set, cfg.k, store.selection());
    trace.rendered_prompts.push_back({"selection", selection_prompt});
    auto rec = gateway.chat_complete(selection_prompt, cfg.llm);
    trace.raw_outputs.push_back({"selection", rec.output});
    TextEmbedder embedder = [&](const std::string& text) {
      return gateway.embed({text}, cfg.engine.embedding).front();
    };
    auto picked = parse_selection(rec.output, set, cfg.k, embedder, cfg.selection_match_threshold);
    if (picked.size() != cfg.k) {
      throw ParseError("expected " + std::to_string(cfg.k) + " selected talking point(s), got " +
                           std::to_string(picked.size()),
                       rec.output);
    }
    return picked;
  });

  const auto& shots = store.response_explicit(trace.selected.front().type);
  auto prompt = render_response_prompt_explicit(ctx, trace.selected, shots);
  trace.response = respond("response", prompt, cfg, gateway, trace);
  return PipelineResult{trace.response, std::move(trace)};
}

PipelineResult run_implicit(const DialogueContext& ctx, const PipelineConfig& cfg,
                            GenerationBackend& backend, LlmGateway& gateway,
                            const FewShotStore& store) {
  check_approach(cfg, Approach::Implicit);
  auto trace = start_trace(ctx, cfg, Approach::Implicit);
  stage(trace, cfg, "input", [&] { ctx.require_pipeline_ready(); });

  auto set = generate_and_diversify(ctx, cfg, backend, gateway, trace);
  auto prompt = render_implicit_prompt(ctx, set, store.response_implicit());
  trace.response = respond("response", prompt, cfg, gateway, trace);
  return PipelineResult{trace.response, std::move(trace)};
}

PipelineResult run_baseline(const DialogueContext& ctx, const PipelineConfig& cfg,
                            LlmGateway& gateway) {
  check_approach(cfg, Approach::Baseline);
  auto trace = start_trace(ctx, cfg, Approach::Baseline);
  stage(trace, cfg, "input", [&] { ctx.require_pipeline_ready(); });

  auto prompt = cfg.alternate_baseline_prompt
                    ? render_baseline_prompt(ctx, cfg.alternate_baseline_template)
                    : render_baseline_prompt(ctx);
  trace.response = respond("response", prompt, cfg, gateway, trace);
  return PipelineResult{trace.response, std::move(trace)};
}

PipelineResult run_pipeline(const DialogueContext& ctx, const PipelineConfig& cfg,
                            GenerationBackend* backend, LlmGateway& gateway,
                            const FewShotStore* store) {
  if (cfg.approach == Approach::Baseline) return run_baseline(ctx, cfg, gateway);
  if (backend == nullptr || store == nullptr) {
    throw ValidationError(std::string(to_string(cfg.approach)) +
                          " pipeline needs a generation backend and a few-shot store");
  }
  if (cfg.approach == Approach::Explicit) return run_explicit(ctx, cfg, *backend, gateway, *store);
  return run_implicit(ctx, cfg, *backend, gateway, *store);
}

std::vector<NamedText> replay_prompts(const ReasoningTrace& trace, const FewShotStore* store,
                                      const PipelineConfig& cfg) {
  DialogueContext ctx(trace.dialogue_id, trace.context);
  std::vector<NamedText> out;
  switch (trace.approach) {
    case Approach::Baseline:
      out.push_back({"response", trace.alternate_baseline_prompt
                                     ? render_baseline_prompt(ctx, cfg.alternate_baseline_template)
                                     : render_baseline_prompt(ctx)});
      break;
    case Approach::Implicit:
      if (store == nullptr || !trace.diverse_set) throw IntegrityError("trace cannot be replayed");
      out.push_back({"response", render_implicit_prompt(ctx, *trace.diverse_set, store->response_implicit())});
      break;
    case Approach::Explicit:
      if (store == nullptr || !trace.diverse_set) throw IntegrityError("trace cannot be replayed");
      out.push_back({"selection", render_selection_prompt(ctx, *trace.diverse_set,
                                                          static_cast<std::size_t>(trace.k),
                                                          store->selection())});
      if (!trace.selected.empty()) {
        out.push_back({"response", render_response_prompt_explicit(
                                       ctx, trace.selected,
                                       store->response_explicit(trace.selected.front().type))});
      }
      break;
  }
  return out;
}

}  // namespace csd
