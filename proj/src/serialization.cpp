#include "csd/serialization.hpp"

#include "csd/errors.hpp"
#include "csd/util.hpp"

namespace csd {

json to_json(const DialogueContext& ctx) {
  json turns = json::array();
  for (const auto& t : ctx.turns()) {
    turns.push_back({{"role", std::string(to_string(t.role))}, {"text", t.text}});
  }
  return {{"dialogue_id", ctx.id()}, {"turns", std::move(turns)}};
}

namespace {

std::vector<Turn> turns_from_json(const json& arr) {
  std::vector<Turn> turns;
  for (const auto& t : arr) {
    turns.push_back({speaker_role_from_string(t.at("role").get<std::string>()),
                     t.at("text").get<std::string>()});
  }
  return turns;
}

json turns_to_json(const std::vector<Turn>& turns) {
  json arr = json::array();
  for (const auto& t : turns) arr.push_back({{"role", std::string(to_string(t.role))}, {"text", t.text}});
  return arr;
}

json named_to_json(const std::vector<NamedText>& items) {
  json arr = json::array();
  for (const auto& n : items) arr.push_back({{"name", n.name}, {"text", n.text}});
  return arr;
}

std::vector<NamedText> named_from_json(const json& arr) {
  std::vector<NamedText> out;
  for (const auto& n : arr) out.push_back({n.at("name").get<std::string>(), n.at("text").get<std::string>()});
  return out;
}

}  // namespace

DialogueContext context_from_json(const json& j) {
  if (!j.is_object()) throw ValidationError("dialogue record must be an object");
  return DialogueContext(j.at("dialogue_id").get<std::string>(), turns_from_json(j.at("turns")));
}

json to_json(const Inference& inf, bool with_embedding) {
  json j = {{"type", std::string(type_name(inf.type))},
            {"raw_text", inf.raw_text},
            {"prefixed_text", inf.prefixed_text}};
  if (with_embedding && inf.embedding) j["embedding"] = *inf.embedding;
  return j;
}

Inference inference_from_json(const json& j) {
  Inference inf{commonsense_type_from_name(j.at("type").get<std::string>()),
                j.at("raw_text").get<std::string>(), j.at("prefixed_text").get<std::string>(),
                std::nullopt};
  if (j.contains("embedding")) inf.embedding = j["embedding"].get<Embedding>();
  return inf;
}

json to_json(const ReasoningTrace& trace, bool with_embeddings) {
  json candidates = json::object();
  for (const auto& [type, list] : trace.candidates) {
    json arr = json::array();
    for (const auto& inf : list) arr.push_back(to_json(inf, with_embeddings));
    candidates[std::string(type_name(type))] = std::move(arr);
  }
  json j = {{"dialogue_id", trace.dialogue_id},
            {"approach", std::string(to_string(trace.approach))},
            {"context", turns_to_json(trace.context)},
            {"candidates", std::move(candidates)},
            {"rendered_prompts", named_to_json(trace.rendered_prompts)},
            {"raw_outputs", named_to_json(trace.raw_outputs)},
            {"response", trace.response},
            {"model_id", trace.model_id},
            {"k", trace.k},
            {"alternate_baseline_prompt", trace.alternate_baseline_prompt}};
  if (trace.diverse_set) {
    json arr = json::array();
    for (const auto& inf : *trace.diverse_set) arr.push_back(to_json(inf, with_embeddings));
    j["diverse_set"] = std::move(arr);
  } else {
    j["diverse_set"] = nullptr;
  }
  j["diversity_objective"] = trace.diversity_objective ? json(*trace.diversity_objective) : json(nullptr);
  json selected = json::array();
  for (const auto& inf : trace.selected) selected.push_back(to_json(inf, with_embeddings));
  j["selected"] = std::move(selected);
  json timings = json::array();
  for (const auto& t : trace.timings) timings.push_back({{"stage", t.stage}, {"millis", t.millis}});
  j["timings"] = std::move(timings);
  if (!trace.failed_stage.empty()) {
    j["failed_stage"] = trace.failed_stage;
    j["error"] = trace.error;
  }
  return j;
}

ReasoningTrace trace_from_json(const json& j) {
  ReasoningTrace t;
  t.dialogue_id = j.at("dialogue_id").get<std::string>();
  t.approach = approach_from_string(j.at("approach").get<std::string>());
  t.context = turns_from_json(j.at("context"));
  for (const auto& [name, arr] : j.at("candidates").items()) {
    auto& list = t.candidates[commonsense_type_from_name(name)];
    for (const auto& inf : arr) list.push_back(inference_from_json(inf));
  }
  if (j.contains("diverse_set") && !j["diverse_set"].is_null()) {
    std::map<CommonsenseType, Inference> by_type;
    for (const auto& inf : j["diverse_set"]) {
      auto parsed = inference_from_json(inf);
      by_type.emplace(parsed.type, parsed);
    }
    t.diverse_set = InferenceSet(by_type);
  }
  if (j.contains("diversity_objective") && !j["diversity_objective"].is_null()) {
    t.diversity_objective = j["diversity_objective"].get<double>();
  }
  for (const auto& inf : j.at("selected")) t.selected.push_back(inference_from_json(inf));
  t.rendered_prompts = named_from_json(j.at("rendered_prompts"));
  t.raw_outputs = named_from_json(j.at("raw_outputs"));
  t.response = j.at("response").get<std::string>();
  t.model_id = j.value("model_id", "");
  t.k = j.value("k", 0);
  t.alternate_baseline_prompt = j.value("alternate_baseline_prompt", false);
  if (j.contains("timings")) {
    for (const auto& s : j["timings"]) {
      t.timings.push_back({s.at("stage").get<std::string>(), s.at("millis").get<double>()});
    }
  }
  t.failed_stage = j.value("failed_stage", "");
  t.error = j.value("error", "");
  return t;
}

json to_json(const PairwiseTask& task) {
  return {{"task_id", task.task_id},
          {"dialogue_id", task.dialogue_id},
          {"system_a", task.system_a},
          {"system_b", task.system_b},
          {"response_a", task.response_a},
          {"response_b", task.response_b},
          {"display_order_seed", task.display_order_seed},
          {"swapped", task.swapped},
          {"judges_per_task", task.judges_per_task}};
}

PairwiseTask task_from_json(const json& j) {
  PairwiseTask t;
  t.task_id = j.at("task_id").get<std::string>();
  t.dialogue_id = j.at("dialogue_id").get<std::string>();
  t.system_a = j.at("system_a").get<std::string>();
  t.system_b = j.at("system_b").get<std::string>();
  t.response_a = j.at("response_a").get<std::string>();
  t.response_b = j.at("response_b").get<std::string>();
  t.display_order_seed = j.at("display_order_seed").get<std::uint64_t>();
  t.swapped = j.at("swapped").get<bool>();
  t.judges_per_task = j.value("judges_per_task", 3);
  return t;
}

json blinded_task_json(const PairwiseTask& task) {
  return {{"task_id", task.task_id},
          {"dialogue_id", task.dialogue_id},
          {"response_a", task.shown_a()},
          {"response_b", task.shown_b()}};
}

json to_json(const Judgment& judgment) {
  json answers = json::object();
  for (const auto& [q, c] : judgment.answers) answers[std::string(to_string(q))] = std::string(to_string(c));
  return {{"task_id", judgment.task_id},
          {"judge_id", judgment.judge_id},
          {"answers", std::move(answers)},
          {"explanation", judgment.explanation}};
}

Judgment judgment_from_json(const json& j) {
  if (!j.is_object()) throw ValidationError("judgment must be a JSON object");
  Judgment out;
  out.task_id = j.value("task_id", "");
  out.judge_id = j.value("judge_id", "");
  out.explanation = j.value("explanation", "");
  if (j.contains("answers")) {
    if (!j["answers"].is_object()) throw ValidationError("answers must be an object");
    for (const auto& [q, c] : j["answers"].items()) {
      if (!c.is_string()) throw ValidationError("answer for " + q + " must be \"A\" or \"B\"");
      out.answers[question_from_string(q)] = choice_from_string(c.get<std::string>());
    }
  }
  return out;
}

json to_json(const ComparisonResult& result) {
  json questions = json::object();
  for (const auto& [q, r] : result.questions) {
    questions[std::string(to_string(q))] = {{"wins_first", r.wins_first},
                                            {"wins_second", r.wins_second},
                                            {"n", r.n},
                                            {"pct_first", r.pct_first},
                                            {"pct_second", r.pct_second},
                                            {"z", r.test.z},
                                            {"p", r.test.p},
                                            {"significant", r.test.significant}};
  }
  return {{"first", result.pair.first},
          {"second", result.pair.second},
          {"n_judgments", result.n_judgments},
          {"n_tasks", result.n_tasks},
          {"alpha", result.alpha},
          {"questions", std::move(questions)}};
}

json to_json(const AspectRecord& record) {
  return {{"explanation_id", record.explanation_id},
          {"winning_system", record.winning_system},
          {"predicted_aspects", record.predicted_aspects},
          {"mapped_categories", record.mapped_categories}};
}

AspectRecord aspect_record_from_json(const json& j) {
  return {j.at("explanation_id").get<std::string>(), j.at("winning_system").get<std::string>(),
          j.at("predicted_aspects").get<std::vector<std::string>>(),
          j.at("mapped_categories").get<std::vector<std::string>>()};
}

std::vector<json> read_jsonl(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw NotFoundError("cannot open " + path.string());
  std::vector<json> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim_view(line).empty()) continue;
    try {
      out.push_back(json::parse(line));
    } catch (const json::parse_error& e) {
      throw ValidationError(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

void write_text_atomic(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IntegrityError("cannot write " + tmp.string());
    out << text;
    out.flush();
    if (!out) throw IntegrityError("short write to " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

void write_jsonl_atomic(const std::filesystem::path& path, const std::vector<json>& records) {
  std::string text;
  for (const auto& r : records) {
    text += r.dump();
    text += '\n';
  }
  write_text_atomic(path, text);
}

JsonlAppender::JsonlAppender(std::filesystem::path path) : path_(std::move(path)) {
  if (path_.has_parent_path()) std::filesystem::create_directories(path_.parent_path());
  out_.open(path_, std::ios::app | std::ios::binary);
  if (!out_) throw IntegrityError("cannot open " + path_.string() + " for appending");
}

void JsonlAppender::append(const json& record) {
  std::lock_guard lock(mu_);
  out_ << record.dump() << '\n';
  out_.flush();
  if (!out_) throw IntegrityError("append to " + path_.string() + " failed");
}

}  // namespace csd
