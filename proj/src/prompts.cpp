#include "csd/prompts.hpp"

#include <algorithm>
#include <fstream>

#include "csd/errors.hpp"
#include "csd/util.hpp"
#include "json.hpp"

namespace csd {

namespace templates {

const std::string_view kImplicitResponse =
    "You are the Listener in a conversation shown in \"Dialogue History\".\n"
    "\n"
    "Your goal is write a casual yet engaging and appropriate next response for the Listener "
    "(You) in the provided dialogue. You will consider a list of possible \"Talking Points\" to "
    "include as you think about the best response to give, being careful to ignore any talking "
    "points that are irrelevant or unlikely predictions for the shown conversation.\n"
    "\n"
    "Based on the talking points, write the best response you can think of in the following "
    "format:\n"
    "\n"
    "Listener's Response:\n"
    "___\n"
    "\n"
    "Review the following examples to understand how to write a response given a \"Dialogue "
    "History\" and set of possible \"Talking Points\".\n"
    "\n"
    "{examples}\n"
    "\n"
    "Now, construct the best response from the Listener for the following dialogue, based on "
    "the possible talking points:\n"
    "\n"
    "# Dialogue History\n"
    "{context}\n"
    "\n"
    "# Talking Points\n"
    "{inferences}\n"
    "\n"
    "Listener's Response:";

const std::string_view kSelection =
    "You find yourself in the role of a conversational architect, who is responsible for "
    "setting up the next exchange in the ongoing dialogue presented in \"Dialogue History.\" "
    "Specifically, your task is to review the series of talking points provided in \"Talking "
    "Points\" and select the best {k} {idea} that will craft an engaging and cohesive response "
    "for the Listener to say. Write your selected talking point into a list titled "
    "\"Selection\".\n"
    "\n"
    "Review the following examples of good selections for different pairs of \"Dialogue "
    "History\" and \"Talking Points\".\n"
    "\n"
    "{examples}\n"
    "\n"
    "Now, select the best talking point for the following pair:\n"
    "\n"
    "# Dialogue History\n"
    "{context}\n"
    "\n"
    "# Talking Points\n"
    "{inferences}\n"
    "\n"
    "Selection:";

const std::string_view kExplicitResponse =
    "You are the Listener in a conversation shown in \"Dialogue History\".\n"
    "\n"
    "Your goal is write a casual yet engaging and appropriate next response for the Listener "
    "(You) in the provided dialogue. First, sufficiently answer all questions posed by Speaker "
    "(Other) in their preceding turn. Then, continue your response by including the talking "
    "points shown in \"Talking Points\" since you want to cover them in your next response "
    "too.\n"
    "\n"
    "Write the response in the following format:\n"
    "\n"
    "Listener's Response:\n"
    "___\n"
    "\n"
    "Review the following examples to understand how to write a response given a \"Dialogue "
    "History\" and set of \"Talking Points\".\n"
    "\n"
    "{examples}\n"
    "\n"
    "Now, complete the tasks for the following situation:\n"
    "\n"
    "# Dialogue History\n"
    "{context}\n"
    "\n"
    "# Talking Points\n"
    "{inferences}\n"
    "\n"
    "Listener's Response:";

const std::string_view kBaseline =
    "# Dialogue History\n"
    "{context}\n"
    "\n"
    "You are the Listener in a conversation shown in \"Dialogue History\".\n"
    "\n"
    "Your goal is write a casual yet engaging and appropriate next response for the Listener "
    "(You) in the provided dialogue.\n"
    "\n"
    "Write the response in the following format:\n"
    "\n"
    "Listener's Response:\n"
    "___\n"
    "\n"
    "Listener's Response:";

const std::string_view kAlternateBaseline =
    "The following is a conversation between two people.\n"
    "\n"
    "{context}\n"
    "\n"
    "Write the next response of the Listener (You).\n"
    "\n"
    "Listener's Response:";

}  // namespace templates

std::string fill_template(std::string_view tmpl, const std::map<std::string, std::string>& slots) {
  std::string out;
  out.reserve(tmpl.size() * 2);
  std::size_t i = 0;
  while (i < tmpl.size()) {
    if (tmpl[i] == '{') {
      auto close = tmpl.find('}', i + 1);
      if (close != std::string_view::npos) {
        auto it = slots.find(std::string(tmpl.substr(i + 1, close - i - 1)));
        if (it != slots.end()) {
          out += it->second;
          i = close + 1;
          continue;
        }
      }
    }
    out += tmpl[i++];
  }
  return out;
}

std::string_view to_string(FewShotKind kind) {
  switch (kind) {
    case FewShotKind::Selection: return "selection";
    case FewShotKind::ResponseExplicit: return "response_explicit";
    case FewShotKind::ResponseImplicit: return "response_implicit";
  }
  return "selection";
}

FewShotKind few_shot_kind_from_string(std::string_view name) {
  if (name == "selection") return FewShotKind::Selection;
  if (name == "response_explicit") return FewShotKind::ResponseExplicit;
  if (name == "response_implicit") return FewShotKind::ResponseImplicit;
  throw ValidationError("unknown few-shot kind '" + std::string(name) + "'");
}

namespace {

void require_one_per_type(const std::vector<FewShotExample>& v, std::string_view what) {
  std::array<int, kNumCommonsenseTypes> seen{};
  for (const auto& ex : v) {
    if (!ex.type) throw ValidationError(std::string(what) + " example without a type");
    ++seen[type_index(*ex.type)];
  }
  for (auto t : kAllCommonsenseTypes) {
    if (seen[type_index(t)] != 1) {
      throw ValidationError(std::string(what) + " examples need exactly one " +
                            std::string(type_name(t)) + " example, found " +
                            std::to_string(seen[type_index(t)]));
    }
  }
}

}  // namespace

FewShotStore::FewShotStore(std::vector<FewShotExample> examples) {
  for (auto& ex : examples) {
    switch (ex.kind) {
      case FewShotKind::Selection: selection_.push_back(std::move(ex)); break;
      case FewShotKind::ResponseImplicit: implicit_.push_back(std::move(ex)); break;
      case FewShotKind::ResponseExplicit:
        if (!ex.type) throw ValidationError("explicit response example without a type");
        explicit_[type_index(*ex.type)].push_back(std::move(ex));
        break;
    }
  }
  require_one_per_type(selection_, "selection");
  require_one_per_type(implicit_, "implicit response");
  for (auto t : kAllCommonsenseTypes) {
    if (explicit_[type_index(t)].size() != 10) {
      throw ValidationError("explicit response examples need ten " + std::string(type_name(t)) +
                            " examples, found " + std::to_string(explicit_[type_index(t)].size()));
    }
  }
  // Canonical type order keeps rendered prompts independent of file order.
  auto by_type = [](const FewShotExample& a, const FewShotExample& b) {
    return type_index(*a.type) < type_index(*b.type);
  };
  std::stable_sort(selection_.begin(), selection_.end(), by_type);
  std::stable_sort(implicit_.begin(), implicit_.end(), by_type);
}

FewShotStore FewShotStore::load(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) {
    throw ValidationError("few-shot directory " + dir.string() + " does not exist");
  }
  std::vector<std::filesystem::path> files;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".jsonl") files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());

  std::vector<FewShotExample> examples;
  for (const auto& file : files) {
    std::ifstream in(file);
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
      ++line_no;
      if (trim_view(line).empty()) continue;
      try {
        auto rec = nlohmann::json::parse(line);
        FewShotExample ex;
        ex.kind = few_shot_kind_from_string(rec.at("kind").get<std::string>());
        if (rec.contains("type") && !rec["type"].is_null()) {
          ex.type = commonsense_type_from_name(rec["type"].get<std::string>());
        }
        ex.context_text = rec.at("context").get<std::string>();
        ex.inferences = rec.at("inferences").get<std::vector<std::string>>();
        ex.answer_text = rec.at("answer").get<std::string>();
        examples.push_back(std::move(ex));
      } catch (const nlohmann::json::exception& e) {
        throw ValidationError(file.string() + ":" + std::to_string(line_no) + ": " + e.what());
      }
    }
  }
  return FewShotStore(std::move(examples));
}

std::string render_talking_points(std::span<const Inference> inferences) {
  std::string out;
  for (const auto& inf : inferences) {
    if (!out.empty()) out += '\n';
    out += kTalkingPointBullet;
    out += inf.prefixed_text;
  }
  return out;
}

std::string render_talking_points(const InferenceSet& set) {
  return render_talking_points(std::span<const Inference>(set.items()));
}

std::string render_few_shot(const FewShotExample& example) {
  std::string out = "# Dialogue History\n" + example.context_text + "\n\n# Talking Points\n";
  for (std::size_t i = 0; i < example.inferences.size(); ++i) {
    if (i != 0) out += '\n';
    out += kTalkingPointBullet;
    out += example.inferences[i];
  }
  if (example.kind == FewShotKind::Selection) {
    out += "\n\nSelection:\n";
    out += kTalkingPointBullet;
    out += example.answer_text;
  } else {
    out += "\n\nListener's Response:\n" + example.answer_text;
  }
  return out;
}

std::string render_few_shots(std::span<const FewShotExample> examples) {
  std::string out;
  for (const auto& ex : examples) {
    if (!out.empty()) out += "\n\n";
    out += render_few_shot(ex);
  }
  return out;
}

std::string render_implicit_prompt(const DialogueContext& ctx, const InferenceSet& set,
                                   std::span<const FewShotExample> shots) {
  if (set.size() != kNumCommonsenseTypes) throw IntegrityError("incomplete inference set");
  return fill_template(templates::kImplicitResponse, {{"examples", render_few_shots(shots)},
                                                      {"context", render_context(ctx)},
                                                      {"inferences", render_talking_points(set)}});
}

std::string render_selection_prompt(const DialogueContext& ctx, const InferenceSet& set,
                                    std::size_t k, std::span<const FewShotExample> shots) {
  if (k < 1) throw ValidationError("k must be at least 1");
  if (set.size() != kNumCommonsenseTypes) throw IntegrityError("incomplete inference set");
  return fill_template(templates::kSelection, {{"k", std::to_string(k)},
                                               {"idea", k == 1 ? "idea" : "ideas"},
                                               {"examples", render_few_shots(shots)},
                                               {"context", render_context(ctx)},
                                               {"inferences", render_talking_points(set)}});
}

std::string render_response_prompt_explicit(const DialogueContext& ctx,
                                            std::span<const Inference> selected,
                                            std::span<const FewShotExample> shots) {
  if (selected.empty()) throw ValidationError("no selected inference to respond with");
  return fill_template(templates::kExplicitResponse,
                       {{"examples", render_few_shots(shots)},
                        {"context", render_context(ctx)},
                        {"inferences", render_talking_points(selected)}});
}

std::string render_baseline_prompt(const DialogueContext& ctx) {
  return render_baseline_prompt(ctx, templates::kBaseline);
}

std::string render_baseline_prompt(const DialogueContext& ctx, std::string_view tmpl) {
  return fill_template(tmpl, {{"context", render_context(ctx)}});
}

}  // namespace csd
