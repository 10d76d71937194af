#pragma once

// Prompt templates, few-shot example storage and deterministic rendering for
// the selection, response and baseline prompts.

#include <array>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "csd/dialogue.hpp"

namespace csd {

namespace templates {

extern const std::string_view kImplicitResponse;
extern const std::string_view kSelection;
extern const std::string_view kExplicitResponse;
extern const std::string_view kBaseline;
// Stand-in for an externally released comparison prompt; replace through
// PipelineConfig::alternate_baseline_template.
extern const std::string_view kAlternateBaseline;

}  // namespace templates

// Replaces every "{name}" whose name is a key of `slots`; other braces are
// left alone. Single pass, so substituted text is never rescanned.
std::string fill_template(std::string_view tmpl, const std::map<std::string, std::string>& slots);

enum class FewShotKind { Selection, ResponseExplicit, ResponseImplicit };

std::string_view to_string(FewShotKind kind);
FewShotKind few_shot_kind_from_string(std::string_view name);

struct FewShotExample {
  FewShotKind kind;
  std::optional<CommonsenseType> type;
  std::string context_text;              // already speaker-labelled
  std::vector<std::string> inferences;   // complete sentences
  std::string answer_text;
};

// 10 selection examples (one per type), 100 explicit response examples (ten
// per type) and 10 implicit response examples (one per type). Read-only once
// loaded.
class FewShotStore {
 public:
  explicit FewShotStore(std::vector<FewShotExample> examples);

  // Reads every *.jsonl file in `dir`; each line is
  // {"kind", "type", "context", "inferences": [...], "answer"}.
  static FewShotStore load(const std::filesystem::path& dir);

  const std::vector<FewShotExample>& selection() const noexcept { return selection_; }
  const std::vector<FewShotExample>& response_implicit() const noexcept { return implicit_; }
  const std::vector<FewShotExample>& response_explicit(CommonsenseType t) const {
    return explicit_[type_index(t)];
  }

 private:
  std::vector<FewShotExample> selection_;
  std::vector<FewShotExample> implicit_;
  std::array<std::vector<FewShotExample>, kNumCommonsenseTypes> explicit_;
};

// Talking-point bullet used in every inference listing.
inline constexpr std::string_view kTalkingPointBullet = "∗ ";

std::string render_talking_points(std::span<const Inference> inferences);
std::string render_talking_points(const InferenceSet& set);
std::string render_few_shot(const FewShotExample& example);
std::string render_few_shots(std::span<const FewShotExample> examples);

std::string render_implicit_prompt(const DialogueContext& ctx, const InferenceSet& set,
                                   std::span<const FewShotExample> shots);
std::string render_selection_prompt(const DialogueContext& ctx, const InferenceSet& set,
                                    std::size_t k, std::span<const FewShotExample> shots);
std::string render_response_prompt_explicit(const DialogueContext& ctx,
                                            std::span<const Inference> selected,
                                            std::span<const FewShotExample> shots);
std::string render_baseline_prompt(const DialogueContext& ctx);
std::string render_baseline_prompt(const DialogueContext& ctx, std::string_view tmpl);

}  // namespace csd
