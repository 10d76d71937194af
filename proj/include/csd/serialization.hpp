#pragma once

// JSON encodings of the persisted records and line-delimited file helpers.

#include <filesystem>
#include <fstream>
#include <mutex>
#include <string>
#include <vector>

#include "csd/aspects.hpp"
#include "csd/dialogue.hpp"
#include "csd/eval.hpp"
#include "json.hpp"

namespace csd {

using json = nlohmann::json;

json to_json(const DialogueContext& ctx);
DialogueContext context_from_json(const json& j);

json to_json(const Inference& inf, bool with_embedding = false);
Inference inference_from_json(const json& j);

// Embeddings are left out unless asked for; replay only needs texts.
json to_json(const ReasoningTrace& trace, bool with_embeddings = false);
ReasoningTrace trace_from_json(const json& j);

json to_json(const PairwiseTask& task);
PairwiseTask task_from_json(const json& j);
// What a judge may see: ids and the two responses in display order.
json blinded_task_json(const PairwiseTask& task);

json to_json(const Judgment& judgment);
// Structural decoding only; call Judgment::validate() for completeness.
Judgment judgment_from_json(const json& j);

json to_json(const ComparisonResult& result);
json to_json(const AspectRecord& record);
AspectRecord aspect_record_from_json(const json& j);

// Parses every non-blank line. Errors name the file and line number.
std::vector<json> read_jsonl(const std::filesystem::path& path);
// Writes to a sibling temp file and renames it into place.
void write_jsonl_atomic(const std::filesystem::path& path, const std::vector<json>& records);
void write_text_atomic(const std::filesystem::path& path, const std::string& text);

// Serialized appends to one line-delimited file; each record is flushed
// before append() returns.
class JsonlAppender {
 public:
  explicit JsonlAppender(std::filesystem::path path);
  void append(const json& record);
  const std::filesystem::path& path() const noexcept { return path_; }

 private:
  std::filesystem::path path_;
  std::ofstream out_;
  std::mutex mu_;
};

}  // namespace csd
