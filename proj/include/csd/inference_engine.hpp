#pragma once

// Candidate inference generation and diverse-set selection.
//
// The selection objective is the sum of pairwise cosine similarity over all
// unordered pairs of chosen inferences (one per commonsense type). Small
// search spaces are solved exhaustively; larger ones use greedy construction
// followed by best-improvement single-swap local search.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <mutex>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "csd/dialogue.hpp"
#include "csd/llm_gateway.hpp"

namespace csd {

struct EngineConfig {
  std::size_t candidates_per_type = 5;
  // Exhaustive search is used when the product of per-type candidate counts
  // does not exceed this many combinations.
  std::uint64_t exact_search_budget = 1'000'000;
  EmbeddingConfig embedding;
  // Issue the ten per-type backend calls concurrently.
  bool concurrent = true;

  void validate() const;
};

// Backend contract: (rendered context, type, n) -> up to n ranked candidates.
class GenerationBackend {
 public:
  virtual ~GenerationBackend() = default;
  virtual std::vector<std::string> generate(const std::string& rendered_context,
                                            CommonsenseType type, std::size_t n) = 0;
  virtual std::string name() const = 0;
};

// Canned candidates read from line-delimited records
// {"context": ..., "type": ..., "candidates": [...]}. Lookups that miss go to
// the fallback backend when one is set.
class FixtureGenerationBackend : public GenerationBackend {
 public:
  FixtureGenerationBackend() = default;
  explicit FixtureGenerationBackend(const std::filesystem::path& path) { load(path); }

  void load(const std::filesystem::path& path);

  void add(std::string rendered_context, CommonsenseType type, std::vector<std::string> candidates);
  void set_fallback(GenerationBackend* fallback) { fallback_ = fallback; }

  std::vector<std::string> generate(const std::string& rendered_context, CommonsenseType type,
                                    std::size_t n) override;
  std::string name() const override { return "fixture"; }

  std::size_t calls() const;

 private:
  std::map<std::pair<std::string, CommonsenseType>, std::vector<std::string>> table_;
  GenerationBackend* fallback_ = nullptr;
  mutable std::mutex mu_;
  std::size_t calls_ = 0;
};

// Deterministic template-driven candidates built from the final turn. Lets the
// fixture mode run over any corpus.
class TemplateGenerationBackend : public GenerationBackend {
 public:
  std::vector<std::string> generate(const std::string& rendered_context, CommonsenseType type,
                                    std::size_t n) override;
  std::string name() const override { return "template"; }
};

struct CandidateSlate {
  // Every type present, candidates in backend rank order, embeddings attached.
  std::map<CommonsenseType, std::vector<Inference>> by_type;

  void validate() const;
};

CandidateSlate generate_candidates(const DialogueContext& ctx, const EngineConfig& cfg,
                                   GenerationBackend& backend, LlmGateway& gateway);

double cosine_similarity(std::span<const double> a, std::span<const double> b);

// Sum of cosine similarity over the 45 unordered type pairs.
double diversity_objective(const InferenceSet& selection);

// Candidate embeddings per group; one candidate is chosen from each group.
using SelectionGroups = std::vector<std::vector<Embedding>>;

struct SelectionResult {
  std::vector<std::size_t> indices;
  double objective = 0.0;
  bool exhaustive = false;
  // Heuristic mode only: greedy objective first, then one entry per accepted
  // swap. Strictly decreasing.
  std::vector<double> descent;
  std::uint64_t combinations = 0;
};

// Objective of a concrete choice, pairs summed in (i < j) group order.
double selection_objective(const SelectionGroups& groups, std::span<const std::size_t> indices);

SelectionResult select_diverse_indices(const SelectionGroups& groups, std::uint64_t exact_search_budget);
SelectionResult greedy_selection(const SelectionGroups& groups);

struct DiverseSelection {
  InferenceSet set;
  SelectionResult detail;
};

DiverseSelection select_diverse(const CandidateSlate& slate, const EngineConfig& cfg);
InferenceSet select_diverse_set(const CandidateSlate& slate, const EngineConfig& cfg);

}  // namespace csd
