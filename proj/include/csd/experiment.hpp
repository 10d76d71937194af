#pragma once

// Corpus ingestion, experiment orchestration across systems and the on-disk
// result bundle.
//
// Bundle layout:
//   manifest.json            snapshot of the manifest that produced it
//   responses/<system>.jsonl {dialogue_id, system, response}
//   traces.jsonl             {system, trace_id, trace}
//   failures.jsonl           {system, dialogue_id, stage, error}
//   summary.json             cell counts and the incomplete cells
//   eval/tasks.jsonl, eval/judgments.jsonl   written by the eval commands

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "csd/dialogue.hpp"
#include "csd/eval.hpp"
#include "csd/pipelines.hpp"
#include "json.hpp"

namespace csd {

struct CorpusStats {
  std::size_t count = 0;
  double mean_turns = 0.0;
  double mean_words_per_utterance = 0.0;
};

CorpusStats compute_stats(const std::vector<DialogueContext>& dialogues);

struct Corpus {
  std::string source;
  std::vector<DialogueContext> dialogues;
  CorpusStats stats;

  const DialogueContext& find(const std::string& dialogue_id) const;
};

// One {dialogue_id, turns: [{role, text}]} record per line. Every dialogue
// must end on a Speaker (Other) turn and ids must be unique.
Corpus ingest_corpus(const std::filesystem::path& path);

nlohmann::json pipeline_config_to_json(const PipelineConfig& cfg);
PipelineConfig pipeline_config_from_json(const nlohmann::json& j);

// A system is either run in process or read from a responses file of
// {dialogue_id, response} lines.
struct SystemSpec {
  std::string name;
  std::optional<PipelineConfig> pipeline;
  std::optional<std::filesystem::path> responses_file;
};

struct ExperimentManifest {
  std::filesystem::path corpus;
  std::vector<SystemSpec> systems;
  std::uint64_t seed = 0;
  std::filesystem::path output_dir;
  std::size_t workers = 4;

  void validate() const;
  const SystemSpec& system(const std::string& name) const;

  // The output directory and worker count are not part of the snapshot, so
  // identical runs produce identical bundles wherever and however they run. Relative paths in a
  // loaded manifest resolve against the manifest's directory.
  nlohmann::json to_json() const;
  static ExperimentManifest from_json(const nlohmann::json& j,
                                      const std::filesystem::path& base_dir = {});
  static ExperimentManifest load(const std::filesystem::path& path);
};

// What in-process systems run against. `store` may be null when every
// pipeline system is a baseline.
struct ExperimentBackends {
  GenerationBackend& generation;
  LlmGateway& gateway;
  const FewShotStore* store = nullptr;
};

struct CellFailure {
  std::string system;
  std::string dialogue_id;
  std::string stage;
  std::string error;
};

struct ExperimentSummary {
  std::size_t cells_total = 0;
  std::size_t computed = 0;         // run in process this time
  std::size_t loaded_external = 0;  // copied from a responses file this time
  std::size_t skipped = 0;          // already present in the bundle
  std::vector<CellFailure> failures;

  std::size_t completed() const { return cells_total - failures.size(); }
};

// Fills every missing (system, dialogue) cell. Cells already present in the
// bundle are kept as they are. Failures do not stop the run; they are listed
// in failures.jsonl and summary.json and retried by the next run.
ExperimentSummary run_experiment(const ExperimentManifest& manifest, ExperimentBackends backends);

struct ResultBundle {
  std::filesystem::path dir;
  nlohmann::json manifest;
  ResponsesBySystem responses;
  // system -> dialogue id -> trace
  std::map<std::string, std::map<std::string, ReasoningTrace>> traces;

  std::vector<std::string> system_names() const;
};

ResultBundle load_bundle(const std::filesystem::path& dir);

std::string trace_id(const std::string& system, const std::string& dialogue_id);

// FNV-1a over every bundle file's relative path and bytes, in path order.
std::string bundle_digest(const std::filesystem::path& dir);

}  // namespace csd
