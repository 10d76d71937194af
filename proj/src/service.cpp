#include "csd/service.hpp"

#include <algorithm>
#include <set>

#include "csd/errors.hpp"
#include "csd/util.hpp"

namespace csd {

namespace fs = std::filesystem;

namespace {

ApiResponse error_response(int status, const std::string& message) {
  return {status, {{"error", message}}};
}

}  // namespace

Service::Service(const fs::path& bundle_dir, std::optional<ChatRuntime> chat)
    : bundle_(load_bundle(bundle_dir)), chat_(std::move(chat)) {
  if (chat_ && (chat_->gateway == nullptr || chat_->systems.empty())) {
    throw ValidationError("chat runtime needs a gateway and at least one system");
  }
  if (chat_ && !chat_->systems.count(chat_->default_system)) {
    throw ValidationError("default chat system '" + chat_->default_system + "' is not configured");
  }
  for (const auto& [system, traces] : bundle_.traces) {
    for (const auto& [id, trace] : traces) contexts_.try_emplace(id, trace.context);
  }
  if (auto corpus = bundle_.manifest.value("corpus", std::string()); !corpus.empty() && fs::exists(corpus)) {
    for (const auto& d : ingest_corpus(corpus).dialogues) contexts_[d.id()] = d.turns();
  }
  auto eval_dir = bundle_dir / "eval";
  if (fs::exists(eval_dir / "tasks.jsonl")) {
    for (const auto& t : read_jsonl(eval_dir / "tasks.jsonl")) tasks_.push_back(task_from_json(t));
  }
  if (fs::exists(eval_dir / "judgments.jsonl")) {
    for (const auto& j : read_jsonl(eval_dir / "judgments.jsonl")) judgments_.push_back(judgment_from_json(j));
  }
  judgment_log_ = std::make_unique<JsonlAppender>(eval_dir / "judgments.jsonl");
}

ApiResponse Service::handle(const std::string& method, const std::string& path,
                            const std::map<std::string, std::string>& query, const std::string& body) {
  auto param = [&](const std::string& name) {
    auto it = query.find(name);
    return it == query.end() ? std::string() : it->second;
  };
  auto parse_body = [&]() {
    try {
      return json::parse(body);
    } catch (const json::parse_error& e) {
      throw ValidationError(std::string("request body is not JSON: ") + e.what());
    }
  };
  try {
    if (method == "POST" && path.rfind("/chat/", 0) == 0) {
      auto rest = path.substr(6);
      auto slash = rest.find('/');
      if (slash != std::string::npos && rest.substr(slash) == "/message" && slash > 0) {
        return chat_message(rest.substr(0, slash), parse_body());
      }
    } else if (method == "GET" && path.rfind("/traces/", 0) == 0 && path.size() > 8) {
      return get_trace(path.substr(8));
    } else if (method == "GET" && path == "/eval/tasks/next") {
      return next_task(param("judge"));
    } else if (method == "POST" && path == "/eval/judgments") {
      return post_judgment(parse_body());
    } else if (method == "GET" && path == "/eval/results") {
      return results();
    } else if (method == "GET" && path == "/eval/decomposition") {
      return decomposition(param("system"));
    }
    return error_response(404, "no route for " + method + " " + path);
  } catch (const ValidationError& e) {
    return error_response(400, e.what());
  } catch (const ParseError& e) {
    return error_response(400, e.what());
  } catch (const NotFoundError& e) {
    return error_response(404, e.what());
  } catch (const std::exception& e) {
    return error_response(500, e.what());
  }
}

ApiResponse Service::chat_message(const std::string& session_id, const json& request) {
  if (!chat_) return error_response(503, "live chat is not configured for this service");
  if (!request.is_object() || !request.contains("text") || !request["text"].is_string()) {
    throw ValidationError("message needs a \"text\" string");
  }
  auto text = trim(request["text"].get<std::string>());
  if (text.empty()) throw ValidationError("message text must not be empty");
  auto requested = request.value("system", std::string());

  std::string system;
  std::vector<Turn> turns;
  {
    std::lock_guard lock(mu_);
    auto it = sessions_.find(session_id);
    if (it == sessions_.end()) {
      system = requested.empty() ? chat_->default_system : requested;
    } else {
      system = it->second.system;
      if (!requested.empty() && requested != system) {
        throw ValidationError("session '" + session_id + "' already uses system '" + system + "'");
      }
      turns = it->second.turns;
    }
  }
  auto cfg_it = chat_->systems.find(system);
  if (cfg_it == chat_->systems.end()) throw NotFoundError("unknown chat system '" + system + "'");

  auto prior = turns.size();
  turns.push_back({SpeakerRole::Other, text});
  DialogueContext ctx("chat/" + session_id, turns);
  PipelineResult result;
  try {
    result = run_pipeline(ctx, cfg_it->second, chat_->generation, *chat_->gateway, chat_->store);
  } catch (const PipelineError& e) {
    return {502, {{"error", e.what()}, {"stage", e.stage()}}};
  }

  std::lock_guard lock(mu_);
  auto& session = sessions_[session_id];
  if (session.turns.size() != prior) {
    return error_response(409, "session '" + session_id + "' changed while this message was running");
  }
  session.system = system;
  session.turns = std::move(turns);
  session.turns.push_back({SpeakerRole::You, result.response});
  auto id = "chat/" + session_id + "/" + std::to_string(session.trace_ids.size() + 1);
  session.trace_ids.push_back(id);
  chat_traces_.emplace(id, std::move(result.trace));

  json turns_json = json::array();
  for (const auto& t : session.turns) turns_json.push_back({{"role", std::string(to_string(t.role))}, {"text", t.text}});
  return {200, {{"response", result.response}, {"trace_id", id}, {"system", system}, {"turns", std::move(turns_json)}}};
}

ApiResponse Service::get_trace(const std::string& id) const {
  std::lock_guard lock(mu_);
  if (auto it = chat_traces_.find(id); it != chat_traces_.end()) {
    return {200, {{"trace_id", id}, {"trace", to_json(it->second)}}};
  }
  auto slash = id.find('/');
  if (slash != std::string::npos) {
    auto sys = bundle_.traces.find(id.substr(0, slash));
    if (sys != bundle_.traces.end()) {
      auto tr = sys->second.find(id.substr(slash + 1));
      if (tr != sys->second.end()) {
        return {200, {{"trace_id", id}, {"system", sys->first}, {"trace", to_json(tr->second)}}};
      }
    }
  }
  throw NotFoundError("no trace '" + id + "'");
}

const PairwiseTask* Service::find_task(const std::string& task_id) const {
  for (const auto& t : tasks_) {
    if (t.task_id == task_id) return &t;
  }
  return nullptr;
}

ApiResponse Service::next_task(const std::string& judge) const {
  if (judge.empty()) throw ValidationError("query parameter 'judge' is required");
  std::lock_guard lock(mu_);
  for (const auto& task : tasks_) {
    int taken = 0;
    bool mine = false;
    for (const auto& j : judgments_) {
      if (j.task_id != task.task_id) continue;
      ++taken;
      mine = mine || j.judge_id == judge;
    }
    if (mine || taken >= task.judges_per_task) continue;
    json questions = json::array();
    for (auto q : kAllQuestions) questions.push_back(std::string(to_string(q)));
    json context = json::array();
    if (auto it = contexts_.find(task.dialogue_id); it != contexts_.end()) {
      for (const auto& t : it->second) context.push_back({{"role", std::string(to_string(t.role))}, {"text", t.text}});
    }
    return {200, {{"done", false},
                  {"task", blinded_task_json(task)},
                  {"context", std::move(context)},
                  {"questions", std::move(questions)}}};
  }
  return {200, {{"done", true}}};
}

ApiResponse Service::post_judgment(const json& request) {
  auto judgment = judgment_from_json(request);
  if (judgment.judge_id.empty()) throw ValidationError("judge_id is required");
  if (judgment.task_id.empty()) throw ValidationError("task_id is required");
  judgment.validate();

  std::lock_guard lock(mu_);
  const auto* task = find_task(judgment.task_id);
  if (task == nullptr) throw NotFoundError("no task '" + judgment.task_id + "'");
  int taken = 0;
  for (const auto& j : judgments_) {
    if (j.task_id != judgment.task_id) continue;
    ++taken;
    if (j.judge_id != judgment.judge_id) continue;
    if (j == judgment) return {200, {{"duplicate", true}, {"judgment", to_json(j)}}};
    return error_response(409, "judge '" + judgment.judge_id + "' already judged task '" +
                                   judgment.task_id + "' differently");
  }
  if (taken >= task->judges_per_task) {
    return error_response(409, "task '" + judgment.task_id + "' already has all its judgments");
  }
  judgment_log_->append(to_json(judgment));
  judgments_.push_back(judgment);
  return {201, {{"duplicate", false}, {"judgment", to_json(judgment)}}};
}

ApiResponse Service::results() const {
  std::lock_guard lock(mu_);
  std::vector<SystemPair> pairs;
  for (const auto& t : tasks_) {
    if (std::find(pairs.begin(), pairs.end(), t.pair()) == pairs.end()) pairs.push_back(t.pair());
  }
  json comparisons = json::array();
  std::vector<ComparisonResult> judged;
  for (const auto& pair : pairs) {
    std::vector<PairwiseTask> tasks;
    std::set<std::string> ids;
    for (const auto& t : tasks_) {
      if (t.pair() == pair) {
        tasks.push_back(t);
        ids.insert(t.task_id);
      }
    }
    std::vector<Judgment> judgments;
    for (const auto& j : judgments_) {
      if (ids.count(j.task_id)) judgments.push_back(j);
    }
    if (judgments.empty()) {
      comparisons.push_back({{"first", pair.first}, {"second", pair.second}, {"n_tasks", tasks.size()}, {"n_judgments", 0}});
      continue;
    }
    auto result = aggregate(pair, tasks, judgments);
    auto j = to_json(result);
    json agreement = json::object();
    for (auto q : kAllQuestions) {
      try {
        agreement[std::string(to_string(q))] = krippendorff_alpha(agreement_matrix(pair, tasks, judgments, q));
      } catch (const DomainError&) {
        agreement[std::string(to_string(q))] = nullptr;
      }
    }
    j["krippendorff_alpha"] = std::move(agreement);
    comparisons.push_back(std::move(j));
    judged.push_back(std::move(result));
  }
  return {200, {{"comparisons", std::move(comparisons)},
                {"table", judged.empty() ? std::string() : format_comparison_table(judged)}}};
}

ApiResponse Service::decomposition(const std::string& system) const {
  std::string name = system;
  if (name.empty()) {
    for (const auto& s : bundle_.manifest.at("systems")) {
      if (s.contains("pipeline") && s["pipeline"].value("approach", "") == "explicit") {
        name = s.at("name").get<std::string>();
        break;
      }
    }
    if (name.empty()) throw NotFoundError("bundle has no explicit-approach system");
  }
  auto traces = bundle_.traces.find(name);
  if (traces == bundle_.traces.end()) throw NotFoundError("no traces for system '" + name + "'");
  std::lock_guard lock(mu_);
  auto groups = decompose_by_type(name, tasks_, judgments_, traces->second);
  json rows = json::array();
  for (auto type : kAllCommonsenseTypes) {
    TypeGroup g;
    if (auto it = groups.find(type); it != groups.end()) g = it->second;
    rows.push_back({{"type", std::string(type_name(type))},
                    {"tasks", g.tasks},
                    {"judgments", g.judgments},
                    {"wins", g.wins},
                    {"win_pct", g.win_pct}});
  }
  return {200, {{"system", name}, {"groups", std::move(rows)}}};
}

std::size_t Service::judgment_count() const {
  std::lock_guard lock(mu_);
  return judgments_.size();
}

}  // namespace csd
