#include "csd/aspects.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>

#include "csd/errors.hpp"
#include "csd/prompts.hpp"
#include "csd/util.hpp"
#include "json.hpp"

namespace csd {

const std::string_view kAspectPromptTemplate =
    "I have received feedback from human judges explaining their preference for a certain "
    "dialogue response from the options displayed to them. For each of the following "
    "explanations, please list the positive aspects identified. Aspects should be one word "
    "only, so please summarize the positive traits identified into one word if needed. Examples "
    "of aspects that could be mentioned are empathy, engagement, curiosity, acknowledgement, "
    "support, naturalness, and more.\n"
    "\n"
    "Output a list of aspects for each explanation below.\n"
    "\n"
    "{explanations}";

CategoryMap::CategoryMap(std::vector<std::string> categories,
                         const std::map<std::string, std::string>& mapping)
    : categories_(std::move(categories)) {
  if (categories_.size() != 12) {
    throw ValidationError("category map needs exactly 12 categories, got " +
                          std::to_string(categories_.size()));
  }
  for (auto& c : categories_) {
    c = normalize(c);
    if (c == kOtherCategory) throw ValidationError("'other' is reserved for unmapped phrases");
  }
  for (const auto& [phrase, category] : mapping) {
    auto target = normalize(category);
    if (!is_category(target)) {
      throw ValidationError("phrase '" + phrase + "' maps to unknown category '" + category + "'");
    }
    mapping_[normalize(phrase)] = target;
  }
}

CategoryMap CategoryMap::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open category map " + path.string());
  try {
    auto doc = nlohmann::json::parse(in);
    return CategoryMap(doc.at("categories").get<std::vector<std::string>>(),
                       doc.at("mapping").get<std::map<std::string, std::string>>());
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(path.string() + ": " + e.what());
  }
}

std::string CategoryMap::normalize(std::string_view phrase) {
  std::string out;
  bool space = false;
  for (unsigned char c : trim_view(phrase)) {
    if (std::isspace(c)) {
      space = true;
      continue;
    }
    if (space && !out.empty()) out += ' ';
    space = false;
    out += static_cast<char>(std::tolower(c));
  }
  auto ends = [&](std::string_view suffix) {
    return out.size() >= suffix.size() && out.compare(out.size() - suffix.size(), suffix.size(), suffix) == 0;
  };
  if (out.size() > 3 && ends("s") && !ends("ss") && !ends("us") && !ends("is")) out.pop_back();
  return out;
}

bool CategoryMap::is_category(std::string_view name) const {
  return std::find(categories_.begin(), categories_.end(), name) != categories_.end();
}

std::string CategoryMap::category_of(std::string_view phrase) const {
  auto key = normalize(phrase);
  if (auto it = mapping_.find(key); it != mapping_.end()) return it->second;
  if (is_category(key)) return key;
  return std::string(kOtherCategory);
}

std::string CategoryMap::match_unit(std::string_view phrase) const {
  auto category = category_of(phrase);
  return category == kOtherCategory ? normalize(phrase) : category;
}

std::string render_aspect_prompt(std::span<const std::string> explanations) {
  if (explanations.empty()) throw ValidationError("aspect batch is empty");
  if (explanations.size() > kMaxAspectBatch) {
    throw ValidationError("aspect batch holds at most " + std::to_string(kMaxAspectBatch) +
                          " explanations");
  }
  std::string list;
  for (std::size_t i = 0; i < explanations.size(); ++i) {
    if (i != 0) list += '\n';
    list += std::to_string(i + 1) + ". " + trim(explanations[i]);
  }
  return fill_template(kAspectPromptTemplate, {{"explanations", list}});
}

namespace {

// "12. rest" / "12) rest" / "12: rest" -> (12, "rest").
std::optional<std::pair<std::size_t, std::string>> numbered_item(std::string_view line) {
  line = trim_view(line);
  std::size_t digits = 0;
  while (digits < line.size() && std::isdigit(static_cast<unsigned char>(line[digits]))) ++digits;
  if (digits == 0 || digits > 3 || digits >= line.size()) return std::nullopt;
  char sep = line[digits];
  if (sep != '.' && sep != ')' && sep != ':') return std::nullopt;
  return std::make_pair(static_cast<std::size_t>(std::stoul(std::string(line.substr(0, digits)))),
                        std::string(trim_view(line.substr(digits + 1))));
}

void append_phrases(std::string_view text, std::vector<std::string>& out) {
  std::string cleaned(text);
  std::replace(cleaned.begin(), cleaned.end(), ';', ',');
  for (auto& part : split(cleaned, ',')) {
    auto p = trim_view(part);
    while (!p.empty() && (p.front() == '-' || p.front() == '*')) p = trim_view(p.substr(1));
    while (!p.empty() && (p.back() == '.' || p.back() == ',')) p.remove_suffix(1);
    p = trim_view(p);
    if (!p.empty()) out.push_back(to_lower(p));
  }
}

}  // namespace

std::vector<std::vector<std::string>> parse_aspect_lists(const std::string& raw,
                                                         std::size_t batch_size) {
  std::vector<std::vector<std::string>> lists;
  bool in_item = false;
  for (const auto& line : split_lines(raw)) {
    if (trim_view(line).empty()) continue;
    if (auto item = numbered_item(line)) {
      if (item->first != lists.size() + 1) {
        throw ParseError("aspect list item " + std::to_string(item->first) + " out of order", raw);
      }
      lists.emplace_back();
      append_phrases(item->second, lists.back());
      in_item = true;
    } else if (in_item) {
      // Continuation lines ("- engagement") belong to the latest item.
      append_phrases(line, lists.back());
    }
  }
  if (lists.size() != batch_size) {
    throw ParseError("expected " + std::to_string(batch_size) + " aspect lists, found " +
                         std::to_string(lists.size()),
                     raw);
  }
  return lists;
}

std::vector<std::string> map_to_categories(std::span<const std::string> phrases,
                                           const CategoryMap& cmap) {
  std::vector<std::string> out;
  for (const auto& p : phrases) {
    auto c = cmap.category_of(p);
    if (std::find(out.begin(), out.end(), c) == out.end()) out.push_back(std::move(c));
  }
  return out;
}

std::map<std::string, std::map<std::string, double>> category_distribution(
    const std::vector<AspectRecord>& records) {
  std::map<std::string, std::size_t> totals;
  std::map<std::string, std::map<std::string, std::size_t>> hits;
  for (const auto& r : records) {
    ++totals[r.winning_system];
    std::set<std::string> unique(r.mapped_categories.begin(), r.mapped_categories.end());
    for (const auto& c : unique) ++hits[r.winning_system][c];
  }
  std::map<std::string, std::map<std::string, double>> dist;
  for (const auto& [system, n] : totals) {
    auto& row = dist[system];
    for (const auto& [category, count] : hits[system]) {
      row[category] = static_cast<double>(count) / static_cast<double>(n);
    }
  }
  return dist;
}

PrecisionRecall precision_recall(const std::set<std::string>& predicted,
                                 const std::set<std::string>& gold) {
  std::size_t matched = 0;
  for (const auto& p : predicted) matched += gold.count(p);
  PrecisionRecall r;
  if (!predicted.empty()) r.precision = static_cast<double>(matched) / static_cast<double>(predicted.size());
  if (!gold.empty()) r.recall = static_cast<double>(matched) / static_cast<double>(gold.size());
  return r;
}

namespace {

std::set<std::string> units_of(std::span<const std::string> phrases, const CategoryMap& cmap) {
  std::set<std::string> units;
  for (const auto& p : phrases) {
    if (!trim_view(p).empty()) units.insert(cmap.match_unit(p));
  }
  return units;
}

}  // namespace

PrecisionRecall precision_recall(std::span<const std::string> predicted,
                                 std::span<const std::string> gold, const CategoryMap& cmap) {
  return precision_recall(units_of(predicted, cmap), units_of(gold, cmap));
}

CorpusScore score_annotated(const std::vector<AnnotatedSample>& samples, const CategoryMap& cmap) {
  CorpusScore score;
  for (const auto& s : samples) {
    auto p = units_of(s.predicted, cmap);
    auto g = units_of(s.gold, cmap);
    for (const auto& u : p) score.matched += g.count(u);
    score.predicted += p.size();
    score.gold += g.size();
    ++score.items;
  }
  if (score.predicted > 0) {
    score.micro.precision = static_cast<double>(score.matched) / static_cast<double>(score.predicted);
  }
  if (score.gold > 0) {
    score.micro.recall = static_cast<double>(score.matched) / static_cast<double>(score.gold);
  }
  return score;
}

std::vector<AspectRecord> extract_aspects(const std::vector<ExplanationItem>& items,
                                          LlmGateway& gateway, const LlmConfig& cfg,
                                          const CategoryMap& cmap, std::size_t batch_size) {
  if (batch_size < 1 || batch_size > kMaxAspectBatch) {
    throw ValidationError("aspect batch size must lie in [1, 10]");
  }
  std::vector<AspectRecord> records;
  for (std::size_t start = 0; start < items.size(); start += batch_size) {
    auto end = std::min(items.size(), start + batch_size);
    std::vector<std::string> texts;
    for (auto i = start; i < end; ++i) texts.push_back(items[i].text);
    auto rec = gateway.chat_complete(render_aspect_prompt(texts), cfg);
    auto lists = parse_aspect_lists(rec.output, texts.size());
    for (auto i = start; i < end; ++i) {
      AspectRecord r;
      r.explanation_id = items[i].explanation_id;
      r.winning_system = items[i].winning_system;
      r.predicted_aspects = std::move(lists[i - start]);
      r.mapped_categories = map_to_categories(r.predicted_aspects, cmap);
      records.push_back(std::move(r));
    }
  }
  return records;
}

}  // namespace csd
