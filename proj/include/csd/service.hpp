#pragma once

// The HTTP+JSON API over a result bundle and, optionally, live pipelines.
// Service holds all state and answers requests as (status, JSON body); the
// httplib binding in service_http.hpp only moves bytes.
//
//   POST /chat/{session}/message    {"text", "system"?} -> {response, trace_id, turns}
//   GET  /traces/{id}
//   GET  /eval/tasks/next?judge=J   blinded task and its dialogue, or {"done": true}
//   POST /eval/judgments            201 new, 200 identical resubmission
//   GET  /eval/results
//   GET  /eval/decomposition?system=S

#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "csd/eval.hpp"
#include "csd/experiment.hpp"
#include "csd/pipelines.hpp"
#include "csd/serialization.hpp"

namespace csd {

struct ApiResponse {
  int status = 200;
  json body;
};

// Backends and per-system configs for the chat endpoint. Without one, chat
// requests are refused.
struct ChatRuntime {
  GenerationBackend* generation = nullptr;
  LlmGateway* gateway = nullptr;
  const FewShotStore* store = nullptr;
  std::map<std::string, PipelineConfig> systems;
  std::string default_system;
};

class Service {
 public:
  // Reads the bundle plus eval/tasks.jsonl and eval/judgments.jsonl when they
  // exist. New judgments are appended to eval/judgments.jsonl.
  explicit Service(const std::filesystem::path& bundle_dir, std::optional<ChatRuntime> chat = std::nullopt);

  ApiResponse handle(const std::string& method, const std::string& path,
                     const std::map<std::string, std::string>& query, const std::string& body);

  ApiResponse chat_message(const std::string& session, const json& request);
  ApiResponse get_trace(const std::string& id) const;
  ApiResponse next_task(const std::string& judge) const;
  ApiResponse post_judgment(const json& request);
  ApiResponse results() const;
  ApiResponse decomposition(const std::string& system) const;

  std::size_t judgment_count() const;

 private:
  struct Session {
    std::string system;
    std::vector<Turn> turns;
    std::vector<std::string> trace_ids;
  };

  const PairwiseTask* find_task(const std::string& task_id) const;

  ResultBundle bundle_;
  std::optional<ChatRuntime> chat_;
  std::vector<PairwiseTask> tasks_;
  std::vector<Judgment> judgments_;
  // Dialogue turns shown to judges with each task.
  std::map<std::string, std::vector<Turn>> contexts_;
  std::unique_ptr<JsonlAppender> judgment_log_;
  std::map<std::string, Session> sessions_;
  std::map<std::string, ReasoningTrace> chat_traces_;
  mutable std::mutex mu_;
};

}  // namespace csd
