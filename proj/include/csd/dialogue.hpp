#pragma once

// Dialogue domain types shared by every pipeline: speaker roles, contexts,
// the ten commonsense types with their sentence prefixes, inferences and the
// per-response reasoning trace.

#include <array>
#include <cstddef>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace csd {

enum class SpeakerRole { Other, You };

// "Speaker (Other)" / "Listener (You)".
std::string_view speaker_label(SpeakerRole role);
std::string_view to_string(SpeakerRole role);
SpeakerRole speaker_role_from_string(std::string_view name);

struct Turn {
  SpeakerRole role;
  std::string text;

  bool operator==(const Turn&) const = default;
};

// Ordered, speaker-labelled turns. Construction rejects an empty turn list and
// empty turn texts; trailing newlines are stripped, nothing else is touched.
// Speaker alternation is not enforced.
class DialogueContext {
 public:
  DialogueContext(std::string dialogue_id, std::vector<Turn> turns);

  const std::string& id() const noexcept { return id_; }
  const std::vector<Turn>& turns() const noexcept { return turns_; }

  // Pipelines answer as the listener, so the last turn must be the other
  // speaker's. Throws ValidationError otherwise.
  void require_pipeline_ready() const;

  DialogueContext with_turn(Turn turn) const;

  bool operator==(const DialogueContext&) const = default;

 private:
  std::string id_;
  std::vector<Turn> turns_;
};

// One "<label>: <text>" line per turn, newline separated, no trailing newline.
std::string render_context(const DialogueContext& ctx);

enum class CommonsenseType {
  Cause,
  ReactO,
  React,
  Subsequent,
  Attribute,
  DesireO,
  Desire,
  Motivation,
  Constituent,
  Prerequisite,
};

inline constexpr std::size_t kNumCommonsenseTypes = 10;

// Canonical ordering used for prompt listings, tie-breaking and iteration.
inline constexpr std::array<CommonsenseType, kNumCommonsenseTypes> kAllCommonsenseTypes = {
    CommonsenseType::Cause,      CommonsenseType::ReactO,     CommonsenseType::React,
    CommonsenseType::Subsequent, CommonsenseType::Attribute,  CommonsenseType::DesireO,
    CommonsenseType::Desire,     CommonsenseType::Motivation, CommonsenseType::Constituent,
    CommonsenseType::Prerequisite,
};

constexpr std::size_t type_index(CommonsenseType t) noexcept { return static_cast<std::size_t>(t); }

std::string_view prefix(CommonsenseType t);
std::string_view type_name(CommonsenseType t);
CommonsenseType commonsense_type_from_name(std::string_view name);

std::string attach_prefix(CommonsenseType t, std::string_view raw);

using Embedding = std::vector<double>;

struct Inference {
  CommonsenseType type;
  std::string raw_text;
  std::string prefixed_text;
  std::optional<Embedding> embedding;

  static Inference make(CommonsenseType t, std::string raw);

  bool operator==(const Inference&) const = default;
};

// Exactly one inference per commonsense type, iterated in canonical order.
class InferenceSet {
 public:
  explicit InferenceSet(const std::map<CommonsenseType, Inference>& by_type);

  const Inference& at(CommonsenseType t) const { return items_[type_index(t)]; }
  const std::vector<Inference>& items() const noexcept { return items_; }
  std::size_t size() const noexcept { return items_.size(); }

  auto begin() const noexcept { return items_.begin(); }
  auto end() const noexcept { return items_.end(); }

  bool operator==(const InferenceSet&) const = default;

 private:
  std::vector<Inference> items_;
};

enum class Approach { Explicit, Implicit, Baseline };

std::string_view to_string(Approach a);
Approach approach_from_string(std::string_view name);

struct NamedText {
  std::string name;
  std::string text;

  bool operator==(const NamedText&) const = default;
};

struct StageTiming {
  std::string stage;
  double millis = 0.0;

  bool operator==(const StageTiming&) const = default;
};

// Provenance of one response. Candidates are empty for the baseline; the
// diverse set is absent for the baseline; `selected` is only filled by the
// explicit pipeline. A trace produced by a failed run carries the failing
// stage in `failed_stage` and whatever was produced up to that point.
struct ReasoningTrace {
  std::string dialogue_id;
  Approach approach = Approach::Baseline;
  std::vector<Turn> context;
  std::map<CommonsenseType, std::vector<Inference>> candidates;
  std::optional<InferenceSet> diverse_set;
  std::optional<double> diversity_objective;
  std::vector<Inference> selected;
  std::vector<NamedText> rendered_prompts;
  std::vector<NamedText> raw_outputs;
  std::string response;
  std::string model_id;
  int k = 0;
  bool alternate_baseline_prompt = false;
  std::vector<StageTiming> timings;
  std::string failed_stage;
  std::string error;

  const std::string* prompt(std::string_view name) const;

  bool operator==(const ReasoningTrace&) const = default;
};

}  // namespace csd
