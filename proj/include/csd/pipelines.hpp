#pragma once

// The three response-generation approaches:
//   explicit  generate -> diversity-select -> LLM select k -> LLM respond
//   implicit  generate -> diversity-select -> LLM respond over all ten
//   baseline  LLM respond, no commonsense

#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "csd/dialogue.hpp"
#include "csd/errors.hpp"
#include "csd/inference_engine.hpp"
#include "csd/llm_gateway.hpp"
#include "csd/prompts.hpp"

namespace csd {

struct PipelineConfig {
  Approach approach = Approach::Explicit;
  std::size_t k = 1;
  LlmConfig llm;
  EngineConfig engine;
  bool alternate_baseline_prompt = false;
  std::string alternate_baseline_template{templates::kAlternateBaseline};
  // Minimum cosine for tying a paraphrased selection back to a talking point.
  double selection_match_threshold = 0.85;
  bool record_timing = true;

  void validate() const;
};

struct PipelineResult {
  std::string response;
  ReasoningTrace trace;
};

// A stage failed. Carries the stage name and the trace built so far.
class PipelineError : public Error {
 public:
  PipelineError(std::string stage, const std::string& cause, ReasoningTrace partial)
      : Error("stage '" + stage + "' failed: " + cause),
        stage_(std::move(stage)),
        trace_(std::move(partial)) {}

  const std::string& stage() const noexcept { return stage_; }
  const ReasoningTrace& trace() const noexcept { return trace_; }

 private:
  std::string stage_;
  ReasoningTrace trace_;
};

using TextEmbedder = std::function<Embedding(const std::string&)>;

// Pulls the selected talking point(s) out of a selection completion and ties
// each back to a member of `set`: normalized exact match first, then the
// closest member by embedding cosine if it reaches `threshold`. Returns at
// most `k` distinct members in output order.
std::vector<Inference> parse_selection(const std::string& raw, const InferenceSet& set,
                                       std::size_t k = 1, const TextEmbedder& embed = {},
                                       double threshold = 0.85);

// Drops a leading "Listener's Response:" label plus surrounding whitespace
// and quotes.
std::string parse_response(const std::string& raw);

PipelineResult run_explicit(const DialogueContext& ctx, const PipelineConfig& cfg,
                            GenerationBackend& backend, LlmGateway& gateway,
                            const FewShotStore& store);
PipelineResult run_implicit(const DialogueContext& ctx, const PipelineConfig& cfg,
                            GenerationBackend& backend, LlmGateway& gateway,
                            const FewShotStore& store);
PipelineResult run_baseline(const DialogueContext& ctx, const PipelineConfig& cfg,
                            LlmGateway& gateway);

// Dispatches on cfg.approach. `backend` and `store` may be null for baseline.
PipelineResult run_pipeline(const DialogueContext& ctx, const PipelineConfig& cfg,
                            GenerationBackend* backend, LlmGateway& gateway,
                            const FewShotStore* store);

// Re-renders every prompt recorded in `trace` from the trace's own inputs.
std::vector<NamedText> replay_prompts(const ReasoningTrace& trace, const FewShotStore* store,
                                      const PipelineConfig& cfg);

}  // namespace csd
