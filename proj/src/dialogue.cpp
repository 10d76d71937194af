#include "csd/dialogue.hpp"

#include <algorithm>

#include "csd/errors.hpp"

namespace csd {

namespace {

struct TypeInfo {
  std::string_view name;
  std::string_view prefix;
};

constexpr std::array<TypeInfo, kNumCommonsenseTypes> kTypeInfo = {{
    {"Cause", "I think it is possible the previous dialogue turn was caused by"},
    {"ReactO", "The Listener (You) feels"},
    {"React", "I think the Speaker (Other) feels"},
    {"Subsequent", "Next, I predict"},
    {"Attribute", "I think the Speaker (Other) is"},
    {"DesireO", "The Listener (You) wants"},
    {"Desire", "I think the Speaker (Other) wants"},
    {"Motivation", "I think the Speaker (Other) is motivated"},
    {"Constituent", "I think it is possible the previous dialogue turn depends on"},
    {"Prerequisite", "I think it is possible the previous dialogue turn requires"},
}};

std::string strip_trailing_newlines(std::string s) {
  while (!s.empty() && (s.back() == '\n' || s.back() == '\r')) s.pop_back();
  return s;
}

}  // namespace

std::string_view speaker_label(SpeakerRole role) {
  return role == SpeakerRole::Other ? "Speaker (Other)" : "Listener (You)";
}

std::string_view to_string(SpeakerRole role) { return role == SpeakerRole::Other ? "Other" : "You"; }

SpeakerRole speaker_role_from_string(std::string_view name) {
  if (name == "Other") return SpeakerRole::Other;
  if (name == "You") return SpeakerRole::You;
  throw ValidationError("unknown speaker role '" + std::string(name) + "'");
}

DialogueContext::DialogueContext(std::string dialogue_id, std::vector<Turn> turns)
    : id_(std::move(dialogue_id)), turns_(std::move(turns)) {
  if (turns_.empty()) throw ValidationError("dialogue '" + id_ + "' has no turns");
  for (std::size_t i = 0; i < turns_.size(); ++i) {
    turns_[i].text = strip_trailing_newlines(std::move(turns_[i].text));
    if (turns_[i].text.empty()) {
      throw ValidationError("dialogue '" + id_ + "' turn " + std::to_string(i) + " is empty");
    }
  }
}

void DialogueContext::require_pipeline_ready() const {
  if (turns_.back().role != SpeakerRole::Other) {
    throw ValidationError("dialogue '" + id_ + "' must end with a Speaker (Other) turn");
  }
}

DialogueContext DialogueContext::with_turn(Turn turn) const {
  auto turns = turns_;
  turns.push_back(std::move(turn));
  return DialogueContext(id_, std::move(turns));
}

std::string render_context(const DialogueContext& ctx) {
  std::string out;
  for (const auto& turn : ctx.turns()) {
    if (!out.empty()) out += '\n';
    out += speaker_label(turn.role);
    out += ": ";
    out += turn.text;
  }
  return out;
}

std::string_view prefix(CommonsenseType t) { return kTypeInfo.at(type_index(t)).prefix; }

std::string_view type_name(CommonsenseType t) { return kTypeInfo.at(type_index(t)).name; }

CommonsenseType commonsense_type_from_name(std::string_view name) {
  for (auto t : kAllCommonsenseTypes) {
    if (type_name(t) == name) return t;
  }
  throw ValidationError("unknown commonsense type '" + std::string(name) + "'");
}

std::string attach_prefix(CommonsenseType t, std::string_view raw) {
  if (raw.empty()) throw ValidationError("cannot prefix an empty inference");
  std::string out(prefix(t));
  out += ' ';
  out += raw;
  return out;
}

Inference Inference::make(CommonsenseType t, std::string raw) {
  auto prefixed = attach_prefix(t, raw);
  return Inference{t, std::move(raw), std::move(prefixed), std::nullopt};
}

InferenceSet::InferenceSet(const std::map<CommonsenseType, Inference>& by_type) {
  items_.reserve(kNumCommonsenseTypes);
  for (auto t : kAllCommonsenseTypes) {
    auto it = by_type.find(t);
    if (it == by_type.end()) {
      throw IntegrityError("inference set is missing type " + std::string(type_name(t)));
    }
    if (it->second.type != t) {
      throw IntegrityError("inference set entry for " + std::string(type_name(t)) +
                           " holds a " + std::string(type_name(it->second.type)) + " inference");
    }
    items_.push_back(it->second);
  }
}

std::string_view to_string(Approach a) {
  switch (a) {
    case Approach::Explicit: return "explicit";
    case Approach::Implicit: return "implicit";
    case Approach::Baseline: return "baseline";
  }
  return "baseline";
}

Approach approach_from_string(std::string_view name) {
  if (name == "explicit") return Approach::Explicit;
  if (name == "implicit") return Approach::Implicit;
  if (name == "baseline") return Approach::Baseline;
  throw ValidationError("unknown approach '" + std::string(name) + "'");
}

const std::string* ReasoningTrace::prompt(std::string_view name) const {
  auto it = std::find_if(rendered_prompts.begin(), rendered_prompts.end(),
                         [&](const NamedText& p) { return p.name == name; });
  return it == rendered_prompts.end() ? nullptr : &it->text;
}

}  // namespace csd
