#pragma once

// Aspect identification over judges' free-text explanations: prompt
// rendering, parsing of the numbered aspect lists, synonym mapping onto a
// fixed category set, per-system distributions and precision/recall scoring
// against human annotation.

#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "csd/llm_gateway.hpp"

namespace csd {

extern const std::string_view kAspectPromptTemplate;

inline constexpr std::size_t kMaxAspectBatch = 10;
inline constexpr std::string_view kOtherCategory = "other";

// Twelve named categories and a phrase -> category mapping. Phrases that map
// nowhere fall into "other".
class CategoryMap {
 public:
  CategoryMap(std::vector<std::string> categories, const std::map<std::string, std::string>& mapping);

  // {"categories": [...12 names...], "mapping": {"phrase": "category", ...}}
  static CategoryMap load(const std::filesystem::path& path);

  // Lowercase, trim, collapse inner whitespace, drop a plural 's'.
  static std::string normalize(std::string_view phrase);

  const std::vector<std::string>& categories() const noexcept { return categories_; }
  bool is_category(std::string_view name) const;
  // Named category, or "other".
  std::string category_of(std::string_view phrase) const;
  // Unit used when comparing aspect sets: the named category when one
  // applies, otherwise the normalized phrase itself.
  std::string match_unit(std::string_view phrase) const;

 private:
  std::vector<std::string> categories_;
  std::map<std::string, std::string> mapping_;
};

struct AspectRecord {
  std::string explanation_id;
  std::string winning_system;
  std::vector<std::string> predicted_aspects;
  std::vector<std::string> mapped_categories;
};

std::string render_aspect_prompt(std::span<const std::string> explanations);

// One phrase list per numbered item; items must be numbered 1..batch_size.
std::vector<std::vector<std::string>> parse_aspect_lists(const std::string& raw,
                                                         std::size_t batch_size);

// Deduplicated, first-occurrence order.
std::vector<std::string> map_to_categories(std::span<const std::string> phrases,
                                           const CategoryMap& cmap);

// system -> category -> fraction of that system's explanations mentioning it.
std::map<std::string, std::map<std::string, double>> category_distribution(
    const std::vector<AspectRecord>& records);

struct PrecisionRecall {
  std::optional<double> precision;  // absent when nothing was predicted
  std::optional<double> recall;     // absent when gold is empty
};

PrecisionRecall precision_recall(const std::set<std::string>& predicted,
                                 const std::set<std::string>& gold);
// Compares match units, so synonyms of one category count as the same aspect.
PrecisionRecall precision_recall(std::span<const std::string> predicted,
                                 std::span<const std::string> gold, const CategoryMap& cmap);

struct AnnotatedSample {
  std::string explanation;
  std::vector<std::string> gold;
  std::vector<std::string> predicted;
};

struct CorpusScore {
  PrecisionRecall micro;
  std::size_t matched = 0;
  std::size_t predicted = 0;
  std::size_t gold = 0;
  std::size_t items = 0;
};

CorpusScore score_annotated(const std::vector<AnnotatedSample>& samples, const CategoryMap& cmap);

struct ExplanationItem {
  std::string explanation_id;
  std::string winning_system;
  std::string text;
};

// Batches of at most kMaxAspectBatch explanations, one completion per batch.
std::vector<AspectRecord> extract_aspects(const std::vector<ExplanationItem>& items,
                                          LlmGateway& gateway, const LlmConfig& cfg,
                                          const CategoryMap& cmap,
                                          std::size_t batch_size = kMaxAspectBatch);

}  // namespace csd
