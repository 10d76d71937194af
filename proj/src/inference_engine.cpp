#include "csd/inference_engine.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <future>

#include "csd/errors.hpp"
#include "csd/util.hpp"
#include "json.hpp"

namespace csd {

using json = nlohmann::json;

void EngineConfig::validate() const {
  if (candidates_per_type < 1) throw ValidationError("candidates_per_type must be at least 1");
  if (exact_search_budget < 1) throw ValidationError("exact_search_budget must be at least 1");
}

// ---------------------------------------------------------------------------
// Backends

void FixtureGenerationBackend::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open generation fixture " + path.string());
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim_view(line).empty()) continue;
    try {
      auto rec = json::parse(line);
      add(rec.at("context").get<std::string>(),
          commonsense_type_from_name(rec.at("type").get<std::string>()),
          rec.at("candidates").get<std::vector<std::string>>());
    } catch (const json::exception& e) {
      throw ValidationError(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
}

void FixtureGenerationBackend::add(std::string rendered_context, CommonsenseType type,
                                   std::vector<std::string> candidates) {
  std::lock_guard lock(mu_);
  table_[{std::move(rendered_context), type}] = std::move(candidates);
}

std::vector<std::string> FixtureGenerationBackend::generate(const std::string& rendered_context,
                                                            CommonsenseType type, std::size_t n) {
  {
    std::lock_guard lock(mu_);
    ++calls_;
    auto it = table_.find({rendered_context, type});
    if (it != table_.end()) {
      std::vector<std::string> out(it->second.begin(),
                                   it->second.begin() + std::min(n, it->second.size()));
      return out;
    }
  }
  if (fallback_ != nullptr) return fallback_->generate(rendered_context, type, n);
  return {};
}

std::size_t FixtureGenerationBackend::calls() const {
  std::lock_guard lock(mu_);
  return calls_;
}

namespace {

// Five phrasings per type; {t} is replaced by the topic phrase.
constexpr std::array<std::array<std::string_view, 5>, kNumCommonsenseTypes> kTemplates = {{
    {{"something stressful that happened right before {t}.",
      "a long build-up of frustration about {t}.",
      "an unexpected change in plans involving {t}.",
      "a conversation earlier in the day about {t}.",
      "feeling overwhelmed by everything around {t}."}},
    {{"curious to hear more about {t}.",
      "concerned about how the speaker is handling {t}.",
      "a bit surprised by {t}.",
      "sympathetic about {t}.",
      "interested in what comes after {t}."}},
    {{"frustrated about {t}.",
      "relieved to finally talk about {t}.",
      "anxious about {t}.",
      "a little embarrassed about {t}.",
      "proud of how they handled {t}."}},
    {{"the speaker will explain more about {t}.",
      "the listener will ask how {t} turned out.",
      "the speaker will ask for advice about {t}.",
      "the two of them will make plans related to {t}.",
      "the speaker will share how they feel about {t}."}},
    {{"someone who cares a lot about {t}.",
      "a person who speaks their mind about {t}.",
      "someone who has dealt with {t} before.",
      "a practical person when it comes to {t}.",
      "someone who gets worked up over {t}."}},
    {{"to know more details about {t}.",
      "to offer help with {t}.",
      "to reassure the speaker about {t}.",
      "to share a similar story about {t}.",
      "to change the subject away from {t}."}},
    {{"to get some support about {t}.",
      "to put {t} behind them.",
      "to hear what the listener thinks about {t}.",
      "to fix things related to {t}.",
      "to vent about {t}."}},
    {{"by a wish to be understood about {t}.",
      "by a need to get {t} off their chest.",
      "by wanting advice on {t}.",
      "by a desire to keep the peace around {t}.",
      "by excitement about {t}."}},
    {{"how long {t} has been going on.",
      "who else was involved in {t}.",
      "what the speaker expected from {t}.",
      "the speaker's history with {t}.",
      "the place where {t} happened."}},
    {{"the speaker having time to deal with {t}.",
      "someone noticing {t} in the first place.",
      "the speaker being directly involved in {t}.",
      "a reason to bring up {t} now.",
      "the speaker remembering the details of {t}."}},
}};

std::string topic_of(const std::string& rendered_context) {
  auto lines = split_lines(rendered_context);
  std::string last = lines.empty() ? rendered_context : lines.back();
  if (auto colon = last.find(": "); colon != std::string::npos) last = last.substr(colon + 2);
  auto words = split(trim(last), ' ');
  std::string topic;
  std::size_t kept = 0;
  for (auto it = words.rbegin(); it != words.rend() && kept < 4; ++it) {
    std::string w;
    for (char c : *it) {
      if (std::isalnum(static_cast<unsigned char>(c)) || c == '\'') w.push_back(c);
    }
    if (w.empty()) continue;
    topic = topic.empty() ? to_lower(w) : to_lower(w) + " " + topic;
    ++kept;
  }
  return topic.empty() ? "what happened" : "\"" + topic + "\"";
}

}  // namespace

std::vector<std::string> TemplateGenerationBackend::generate(const std::string& rendered_context,
                                                             CommonsenseType type, std::size_t n) {
  const auto topic = topic_of(rendered_context);
  const auto& templates = kTemplates[type_index(type)];
  std::vector<std::string> out;
  for (std::size_t i = 0; i < n; ++i) {
    std::string s(templates[i % templates.size()]);
    s.replace(s.find("{t}"), 3, topic);
    if (i >= templates.size()) s.insert(s.size() - 1, " (" + std::to_string(i + 1) + ")");
    out.push_back(std::move(s));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Candidate generation

void CandidateSlate::validate() const {
  for (auto t : kAllCommonsenseTypes) {
    auto it = by_type.find(t);
    if (it == by_type.end() || it->second.empty()) {
      throw IntegrityError("candidate slate has no candidates for " + std::string(type_name(t)));
    }
    for (const auto& inf : it->second) {
      if (inf.type != t) throw IntegrityError("candidate filed under the wrong type");
      if (!inf.embedding) {
        throw IntegrityError("candidate for " + std::string(type_name(t)) + " has no embedding");
      }
    }
  }
}

CandidateSlate generate_candidates(const DialogueContext& ctx, const EngineConfig& cfg,
                                   GenerationBackend& backend, LlmGateway& gateway) {
  cfg.validate();
  const auto rendered = render_context(ctx);
  const auto n = cfg.candidates_per_type;

  std::array<std::vector<std::string>, kNumCommonsenseTypes> raw;
  if (cfg.concurrent) {
    std::array<std::future<std::vector<std::string>>, kNumCommonsenseTypes> pending;
    for (auto t : kAllCommonsenseTypes) {
      pending[type_index(t)] = std::async(std::launch::async, [&backend, &rendered, t, n] {
        return backend.generate(rendered, t, n);
      });
    }
    for (auto t : kAllCommonsenseTypes) raw[type_index(t)] = pending[type_index(t)].get();
  } else {
    for (auto t : kAllCommonsenseTypes) raw[type_index(t)] = backend.generate(rendered, t, n);
  }

  CandidateSlate slate;
  std::vector<std::string> texts;
  for (auto t : kAllCommonsenseTypes) {
    auto& list = slate.by_type[t];
    for (auto& s : raw[type_index(t)]) {
      auto text = trim(s);
      if (text.empty()) continue;
      if (list.size() == n) break;
      list.push_back(Inference::make(t, std::move(text)));
      texts.push_back(list.back().prefixed_text);
    }
    if (list.empty()) {
      throw IntegrityError("generation backend '" + backend.name() +
                           "' returned no candidates for type " + std::string(type_name(t)));
    }
  }

  auto vectors = gateway.embed(texts, cfg.embedding);
  std::size_t next = 0;
  for (auto t : kAllCommonsenseTypes) {
    for (auto& inf : slate.by_type[t]) inf.embedding = std::move(vectors[next++]);
  }
  return slate;
}

// ---------------------------------------------------------------------------
// Selection

double cosine_similarity(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) {
    throw IntegrityError("cosine similarity of vectors with dimensions " +
                         std::to_string(a.size()) + " and " + std::to_string(b.size()));
  }
  double dot = 0.0;
  double na = 0.0;
  double nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  if (na == 0.0 || nb == 0.0) throw DomainError("cosine similarity of a zero vector");
  return std::clamp(dot / (std::sqrt(na) * std::sqrt(nb)), -1.0, 1.0);
}

double diversity_objective(const InferenceSet& selection) {
  const auto& items = selection.items();
  for (const auto& inf : items) {
    if (!inf.embedding) {
      throw IntegrityError("inference for " + std::string(type_name(inf.type)) +
                           " has no embedding");
    }
  }
  double total = 0.0;
  for (std::size_t i = 0; i < items.size(); ++i) {
    for (std::size_t j = i + 1; j < items.size(); ++j) {
      total += cosine_similarity(*items[i].embedding, *items[j].embedding);
    }
  }
  return total;
}

namespace {

// Pairwise similarities between every candidate of every group, addressed by
// flattened candidate offsets.
class SimilarityTable {
 public:
  explicit SimilarityTable(const SelectionGroups& groups) {
    offsets_.reserve(groups.size());
    std::size_t total = 0;
    for (const auto& g : groups) {
      if (g.empty()) throw IntegrityError("selection group without candidates");
      offsets_.push_back(total);
      total += g.size();
    }
    width_ = total;
    sims_.assign(total * total, 0.0);
    for (std::size_t g = 0; g < groups.size(); ++g) {
      for (std::size_t h = g + 1; h < groups.size(); ++h) {
        for (std::size_t c = 0; c < groups[g].size(); ++c) {
          for (std::size_t d = 0; d < groups[h].size(); ++d) {
            double s = cosine_similarity(groups[g][c], groups[h][d]);
            sims_[(offsets_[g] + c) * width_ + offsets_[h] + d] = s;
            sims_[(offsets_[h] + d) * width_ + offsets_[g] + c] = s;
          }
        }
      }
    }
  }

  double sim(std::size_t g, std::size_t c, std::size_t h, std::size_t d) const {
    return sims_[(offsets_[g] + c) * width_ + offsets_[h] + d];
  }

  double objective(std::span<const std::size_t> idx) const {
    double total = 0.0;
    for (std::size_t i = 0; i < idx.size(); ++i) {
      for (std::size_t j = i + 1; j < idx.size(); ++j) total += sim(i, idx[i], j, idx[j]);
    }
    return total;
  }

 private:
  std::vector<std::size_t> offsets_;
  std::size_t width_ = 0;
  std::vector<double> sims_;
};

std::uint64_t combination_count(const SelectionGroups& groups, std::uint64_t cap) {
  std::uint64_t product = 1;
  for (const auto& g : groups) {
    if (g.empty()) return 0;
    if (product > cap / g.size()) return cap + 1;
    product *= g.size();
  }
  return product;
}

SelectionResult exhaustive(const SelectionGroups& groups, const SimilarityTable& table) {
  SelectionResult best;
  best.exhaustive = true;
  std::vector<std::size_t> idx(groups.size(), 0);
  bool first = true;
  while (true) {
    ++best.combinations;
    double obj = table.objective(idx);
    if (first || obj < best.objective) {
      best.objective = obj;
      best.indices = idx;
      first = false;
    }
    // Odometer, last group fastest: visits index vectors in lexicographic
    // order, so the first optimum seen is the tie-break winner.
    std::size_t g = groups.size();
    while (g > 0) {
      --g;
      if (++idx[g] < groups[g].size()) break;
      idx[g] = 0;
      if (g == 0) return best;
    }
    if (groups.empty()) return best;
  }
}

SelectionResult greedy(const SelectionGroups& groups, const SimilarityTable& table) {
  SelectionResult r;
  r.indices.assign(groups.size(), 0);
  for (std::size_t g = 0; g < groups.size(); ++g) {
    double best = 0.0;
    for (std::size_t c = 0; c < groups[g].size(); ++c) {
      double partial = 0.0;
      for (std::size_t h = 0; h < g; ++h) partial += table.sim(g, c, h, r.indices[h]);
      if (c == 0 || partial < best) {
        best = partial;
        r.indices[g] = c;
      }
    }
  }
  r.objective = table.objective(r.indices);
  r.descent.push_back(r.objective);
  return r;
}

void local_search(const SelectionGroups& groups, const SimilarityTable& table, SelectionResult& r) {
  while (true) {
    bool found = false;
    double best_delta = 0.0;
    std::size_t best_g = 0;
    std::size_t best_c = 0;
    for (std::size_t g = 0; g < groups.size(); ++g) {
      const auto cur = r.indices[g];
      for (std::size_t c = 0; c < groups[g].size(); ++c) {
        if (c == cur) continue;
        double delta = 0.0;
        for (std::size_t h = 0; h < groups.size(); ++h) {
          if (h == g) continue;
          delta += table.sim(g, c, h, r.indices[h]) - table.sim(g, cur, h, r.indices[h]);
        }
        // Ties: lowest candidate index, then earliest type.
        bool better = !found || delta < best_delta ||
                      (delta == best_delta && (c < best_c || (c == best_c && g < best_g)));
        if (better) {
          found = true;
          best_delta = delta;
          best_g = g;
          best_c = c;
        }
      }
    }
    if (!found || !(best_delta < 0.0)) return;
    auto trial = r.indices;
    trial[best_g] = best_c;
    double obj = table.objective(trial);
    // Recomputed in canonical order; rounding must not let it creep upward.
    if (!(obj < r.objective)) return;
    r.indices = std::move(trial);
    r.objective = obj;
    r.descent.push_back(obj);
  }
}

}  // namespace

double selection_objective(const SelectionGroups& groups, std::span<const std::size_t> indices) {
  if (indices.size() != groups.size()) throw IntegrityError("one index per group required");
  double total = 0.0;
  for (std::size_t i = 0; i < groups.size(); ++i) {
    for (std::size_t j = i + 1; j < groups.size(); ++j) {
      total += cosine_similarity(groups[i].at(indices[i]), groups[j].at(indices[j]));
    }
  }
  return total;
}

SelectionResult greedy_selection(const SelectionGroups& groups) {
  SimilarityTable table(groups);
  return greedy(groups, table);
}

SelectionResult select_diverse_indices(const SelectionGroups& groups,
                                       std::uint64_t exact_search_budget) {
  SimilarityTable table(groups);
  auto count = combination_count(groups, exact_search_budget);
  if (count <= exact_search_budget) return exhaustive(groups, table);
  auto r = greedy(groups, table);
  local_search(groups, table, r);
  return r;
}

DiverseSelection select_diverse(const CandidateSlate& slate, const EngineConfig& cfg) {
  slate.validate();
  SelectionGroups groups;
  for (auto t : kAllCommonsenseTypes) {
    auto& g = groups.emplace_back();
    for (const auto& inf : slate.by_type.at(t)) g.push_back(*inf.embedding);
  }
  auto detail = select_diverse_indices(groups, cfg.exact_search_budget);
  std::map<CommonsenseType, Inference> chosen;
  for (auto t : kAllCommonsenseTypes) {
    chosen.emplace(t, slate.by_type.at(t)[detail.indices[type_index(t)]]);
  }
  return DiverseSelection{InferenceSet(chosen), std::move(detail)};
}

InferenceSet select_diverse_set(const CandidateSlate& slate, const EngineConfig& cfg) {
  return select_diverse(slate, cfg).set;
}

}  // namespace csd
