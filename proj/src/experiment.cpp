#include "csd/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <fstream>
#include <mutex>
#include <set>
#include <thread>

#include "csd/errors.hpp"
#include "csd/serialization.hpp"
#include "csd/util.hpp"

namespace csd {

namespace fs = std::filesystem;

CorpusStats compute_stats(const std::vector<DialogueContext>& dialogues) {
  CorpusStats stats;
  stats.count = dialogues.size();
  if (dialogues.empty()) return stats;
  std::size_t turns = 0;
  std::size_t words = 0;
  for (const auto& d : dialogues) {
    turns += d.turns().size();
    for (const auto& t : d.turns()) words += word_count(t.text);
  }
  stats.mean_turns = static_cast<double>(turns) / static_cast<double>(dialogues.size());
  stats.mean_words_per_utterance = static_cast<double>(words) / static_cast<double>(turns);
  return stats;
}

const DialogueContext& Corpus::find(const std::string& dialogue_id) const {
  for (const auto& d : dialogues) {
    if (d.id() == dialogue_id) return d;
  }
  throw NotFoundError("no dialogue '" + dialogue_id + "' in corpus " + source);
}

Corpus ingest_corpus(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw NotFoundError("cannot open corpus " + path.string());
  Corpus corpus;
  corpus.source = path.filename().string();
  std::set<std::string> seen;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim_view(line).empty()) continue;
    auto where = path.string() + ":" + std::to_string(line_no);
    std::optional<DialogueContext> ctx;
    try {
      ctx.emplace(context_from_json(json::parse(line)));
    } catch (const json::exception& e) {
      throw ValidationError(where + ": malformed record: " + e.what());
    } catch (const ValidationError& e) {
      throw ValidationError(where + ": " + e.what());
    }
    if (ctx->turns().back().role != SpeakerRole::Other) {
      throw ValidationError(where + ": dialogue '" + ctx->id() +
                            "' must end on a Speaker (Other) turn");
    }
    if (!seen.insert(ctx->id()).second) {
      throw ValidationError(where + ": duplicate dialogue_id '" + ctx->id() + "'");
    }
    corpus.dialogues.push_back(std::move(*ctx));
  }
  if (corpus.dialogues.empty()) throw ValidationError("corpus " + path.string() + " has no dialogues");
  corpus.stats = compute_stats(corpus.dialogues);
  return corpus;
}

json pipeline_config_to_json(const PipelineConfig& cfg) {
  json j = {{"approach", std::string(to_string(cfg.approach))},
            {"k", cfg.k},
            {"llm",
             {{"model_id", cfg.llm.model_id},
              {"temperature", cfg.llm.temperature},
              {"max_output_tokens", cfg.llm.max_output_tokens},
              {"endpoint", cfg.llm.endpoint}}},
            {"engine",
             {{"candidates_per_type", cfg.engine.candidates_per_type},
              {"exact_search_budget", cfg.engine.exact_search_budget},
              {"embedding_model_id", cfg.engine.embedding.model_id},
              {"embedding_endpoint", cfg.engine.embedding.endpoint}}},
            {"alternate_baseline_prompt", cfg.alternate_baseline_prompt},
            {"selection_match_threshold", cfg.selection_match_threshold},
            {"record_timing", cfg.record_timing}};
  if (cfg.alternate_baseline_prompt) j["alternate_baseline_template"] = cfg.alternate_baseline_template;
  return j;
}

PipelineConfig pipeline_config_from_json(const json& j) {
  PipelineConfig cfg;
  cfg.approach = approach_from_string(j.at("approach").get<std::string>());
  cfg.k = j.value("k", cfg.k);
  if (j.contains("llm")) {
    const auto& l = j["llm"];
    cfg.llm.model_id = l.value("model_id", cfg.llm.model_id);
    cfg.llm.temperature = l.value("temperature", cfg.llm.temperature);
    cfg.llm.max_output_tokens = l.value("max_output_tokens", cfg.llm.max_output_tokens);
    cfg.llm.endpoint = l.value("endpoint", cfg.llm.endpoint);
  }
  if (j.contains("engine")) {
    const auto& e = j["engine"];
    cfg.engine.candidates_per_type = e.value("candidates_per_type", cfg.engine.candidates_per_type);
    cfg.engine.exact_search_budget = e.value("exact_search_budget", cfg.engine.exact_search_budget);
    cfg.engine.embedding.model_id = e.value("embedding_model_id", cfg.engine.embedding.model_id);
    cfg.engine.embedding.endpoint = e.value("embedding_endpoint", cfg.engine.embedding.endpoint);
  }
  cfg.alternate_baseline_prompt = j.value("alternate_baseline_prompt", false);
  cfg.alternate_baseline_template = j.value("alternate_baseline_template", cfg.alternate_baseline_template);
  cfg.selection_match_threshold = j.value("selection_match_threshold", cfg.selection_match_threshold);
  cfg.record_timing = j.value("record_timing", cfg.record_timing);
  cfg.validate();
  return cfg;
}

void ExperimentManifest::validate() const {
  if (systems.empty()) throw ValidationError("manifest lists no systems");
  if (workers == 0) throw ValidationError("workers must be at least 1");
  std::set<std::string> names;
  for (const auto& s : systems) {
    if (s.name.empty()) throw ValidationError("system name must not be empty");
    if (s.name.find_first_of("/\\") != std::string::npos) {
      throw ValidationError("system name '" + s.name + "' must not contain path separators");
    }
    if (!names.insert(s.name).second) throw ValidationError("duplicate system name '" + s.name + "'");
    if (s.pipeline.has_value() == s.responses_file.has_value()) {
      throw ValidationError("system '" + s.name + "' needs exactly one of pipeline or responses_file");
    }
    if (s.pipeline) s.pipeline->validate();
  }
}

const SystemSpec& ExperimentManifest::system(const std::string& name) const {
  for (const auto& s : systems) {
    if (s.name == name) return s;
  }
  throw NotFoundError("no system named '" + name + "'");
}

json ExperimentManifest::to_json() const {
  json systems_json = json::array();
  for (const auto& s : systems) {
    json sj = {{"name", s.name}};
    if (s.pipeline) sj["pipeline"] = pipeline_config_to_json(*s.pipeline);
    if (s.responses_file) sj["responses_file"] = s.responses_file->generic_string();
    systems_json.push_back(std::move(sj));
  }
  return {{"corpus", corpus.generic_string()},
          {"seed", seed},
          {"systems", std::move(systems_json)}};
}

ExperimentManifest ExperimentManifest::from_json(const json& j, const fs::path& base_dir) {
  auto resolve = [&](const std::string& p) {
    fs::path path(p);
    return path.is_relative() && !base_dir.empty() ? base_dir / path : path;
  };
  ExperimentManifest m;
  m.corpus = resolve(j.at("corpus").get<std::string>());
  m.seed = j.value("seed", std::uint64_t{0});
  m.workers = j.value("workers", std::size_t{4});
  if (j.contains("output_dir")) m.output_dir = resolve(j["output_dir"].get<std::string>());
  for (const auto& sj : j.at("systems")) {
    SystemSpec s;
    s.name = sj.at("name").get<std::string>();
    if (sj.contains("pipeline")) s.pipeline = pipeline_config_from_json(sj["pipeline"]);
    if (sj.contains("responses_file")) s.responses_file = resolve(sj["responses_file"].get<std::string>());
    m.systems.push_back(std::move(s));
  }
  m.validate();
  return m;
}

ExperimentManifest ExperimentManifest::load(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw NotFoundError("cannot open manifest " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ValidationError(path.string() + ": " + e.what());
  }
  return from_json(j, path.parent_path());
}

std::string trace_id(const std::string& system, const std::string& dialogue_id) {
  return system + "/" + dialogue_id;
}

namespace {

// Like read_jsonl, but a missing file is empty and an unparsable final line
// (an interrupted append) is dropped.
std::vector<json> read_partial_jsonl(const fs::path& path) {
  std::vector<json> out;
  std::ifstream in(path);
  if (!in) return out;
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!trim_view(line).empty()) lines.push_back(line);
  }
  for (std::size_t i = 0; i < lines.size(); ++i) {
    try {
      out.push_back(json::parse(lines[i]));
    } catch (const json::parse_error& e) {
      if (i + 1 == lines.size()) break;
      throw IntegrityError(path.string() + ": corrupt record: " + e.what());
    }
  }
  return out;
}

fs::path responses_path(const fs::path& dir, const std::string& system) {
  return dir / "responses" / (system + ".jsonl");
}

struct Job {
  const SystemSpec* system;
  const DialogueContext* dialogue;
};

}  // namespace

ExperimentSummary run_experiment(const ExperimentManifest& manifest, ExperimentBackends backends) {
  manifest.validate();
  if (manifest.output_dir.empty()) throw ValidationError("manifest has no output directory");
  auto corpus = ingest_corpus(manifest.corpus);
  const auto& dir = manifest.output_dir;
  fs::create_directories(dir / "responses");

  // Existing state. A cell is complete once its response line exists; traces
  // are appended before responses, so a complete cell always has its trace.
  std::map<std::string, std::map<std::string, std::string>> responses;
  std::map<std::string, std::map<std::string, json>> traces;
  for (const auto& s : manifest.systems) {
    auto& by_dialogue = responses[s.name];
    for (const auto& r : read_partial_jsonl(responses_path(dir, s.name))) {
      by_dialogue.emplace(r.at("dialogue_id").get<std::string>(), r.at("response").get<std::string>());
    }
  }
  for (const auto& t : read_partial_jsonl(dir / "traces.jsonl")) {
    traces[t.at("system").get<std::string>()].emplace(t.at("trace").at("dialogue_id").get<std::string>(), t);
  }

  ExperimentSummary summary;
  summary.cells_total = manifest.systems.size() * corpus.dialogues.size();
  std::vector<Job> jobs;
  std::vector<CellFailure> failures;

  for (const auto& s : manifest.systems) {
    auto& done = responses[s.name];
    if (s.responses_file) {
      std::map<std::string, std::string> external;
      for (const auto& r : read_jsonl(*s.responses_file)) {
        external.emplace(r.at("dialogue_id").get<std::string>(), r.at("response").get<std::string>());
      }
      for (const auto& d : corpus.dialogues) {
        if (done.count(d.id())) {
          ++summary.skipped;
          continue;
        }
        auto it = external.find(d.id());
        if (it == external.end()) {
          failures.push_back({s.name, d.id(), "load", "no response in " + s.responses_file->string()});
          continue;
        }
        done.emplace(d.id(), it->second);
        ++summary.loaded_external;
      }
      continue;
    }
    for (const auto& d : corpus.dialogues) {
      if (done.count(d.id()) && traces[s.name].count(d.id())) {
        ++summary.skipped;
      } else {
        done.erase(d.id());
        jobs.push_back({&s, &d});
      }
    }
  }

  if (!jobs.empty()) {
    JsonlAppender trace_log(dir / "traces.jsonl");
    std::map<std::string, std::unique_ptr<JsonlAppender>> response_logs;
    for (const auto& s : manifest.systems) {
      response_logs.emplace(s.name, std::make_unique<JsonlAppender>(responses_path(dir, s.name)));
    }
    std::mutex mu;
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
      for (std::size_t i = next++; i < jobs.size(); i = next++) {
        const auto& job = jobs[i];
        const auto& name = job.system->name;
        const auto& id = job.dialogue->id();
        try {
          auto result = run_pipeline(*job.dialogue, *job.system->pipeline, &backends.generation,
                                     backends.gateway, backends.store);
          json trace_rec = {{"system", name}, {"trace_id", trace_id(name, id)}, {"trace", to_json(result.trace)}};
          json response_rec = {{"dialogue_id", id}, {"system", name}, {"response", result.response}};
          trace_log.append(trace_rec);
          response_logs.at(name)->append(response_rec);
          std::lock_guard lock(mu);
          traces[name][id] = std::move(trace_rec);
          responses[name][id] = result.response;
          ++summary.computed;
        } catch (const PipelineError& e) {
          std::lock_guard lock(mu);
          failures.push_back({name, id, e.stage(), e.what()});
        } catch (const std::exception& e) {
          std::lock_guard lock(mu);
          failures.push_back({name, id, "run", e.what()});
        }
      }
    };
    std::size_t n_workers = std::min(manifest.workers, jobs.size());
    std::vector<std::thread> pool;
    for (std::size_t w = 1; w < n_workers; ++w) pool.emplace_back(worker);
    worker();
    for (auto& t : pool) t.join();
  }

  // Canonical rewrite: systems in manifest order, dialogues in corpus order.
  std::vector<json> trace_records;
  for (const auto& s : manifest.systems) {
    std::vector<json> records;
    for (const auto& d : corpus.dialogues) {
      auto it = responses[s.name].find(d.id());
      if (it == responses[s.name].end()) continue;
      records.push_back({{"dialogue_id", d.id()}, {"system", s.name}, {"response", it->second}});
      if (s.pipeline) trace_records.push_back(traces[s.name].at(d.id()));
    }
    write_jsonl_atomic(responses_path(dir, s.name), records);
  }
  write_jsonl_atomic(dir / "traces.jsonl", trace_records);

  std::map<std::pair<std::size_t, std::size_t>, CellFailure> ordered;
  auto system_pos = [&](const std::string& name) {
    for (std::size_t i = 0; i < manifest.systems.size(); ++i) {
      if (manifest.systems[i].name == name) return i;
    }
    return manifest.systems.size();
  };
  auto dialogue_pos = [&](const std::string& id) {
    for (std::size_t i = 0; i < corpus.dialogues.size(); ++i) {
      if (corpus.dialogues[i].id() == id) return i;
    }
    return corpus.dialogues.size();
  };
  for (auto& f : failures) ordered.emplace(std::pair{system_pos(f.system), dialogue_pos(f.dialogue_id)}, f);
  std::vector<json> failure_records;
  json incomplete = json::array();
  for (auto& [pos, f] : ordered) {
    failure_records.push_back({{"system", f.system}, {"dialogue_id", f.dialogue_id}, {"stage", f.stage}, {"error", f.error}});
    incomplete.push_back(trace_id(f.system, f.dialogue_id));
    summary.failures.push_back(std::move(f));
  }
  write_jsonl_atomic(dir / "failures.jsonl", failure_records);
  write_text_atomic(dir / "manifest.json", manifest.to_json().dump(2) + "\n");
  json summary_json = {{"corpus", corpus.source},
                       {"dialogues", corpus.dialogues.size()},
                       {"mean_turns", corpus.stats.mean_turns},
                       {"mean_words_per_utterance", corpus.stats.mean_words_per_utterance},
                       {"cells_total", summary.cells_total},
                       {"cells_complete", summary.completed()},
                       {"incomplete", std::move(incomplete)}};
  write_text_atomic(dir / "summary.json", summary_json.dump(2) + "\n");
  return summary;
}

std::vector<std::string> ResultBundle::system_names() const {
  std::vector<std::string> names;
  for (const auto& s : manifest.at("systems")) names.push_back(s.at("name").get<std::string>());
  return names;
}

ResultBundle load_bundle(const fs::path& dir) {
  ResultBundle bundle;
  bundle.dir = dir;
  std::ifstream in(dir / "manifest.json");
  if (!in) throw NotFoundError("no manifest.json in " + dir.string());
  bundle.manifest = json::parse(in);
  for (const auto& name : bundle.system_names()) {
    auto& by_dialogue = bundle.responses[name];
    auto path = responses_path(dir, name);
    if (!fs::exists(path)) continue;
    for (const auto& r : read_jsonl(path)) {
      by_dialogue.emplace(r.at("dialogue_id").get<std::string>(), r.at("response").get<std::string>());
    }
  }
  if (fs::exists(dir / "traces.jsonl")) {
    for (const auto& t : read_jsonl(dir / "traces.jsonl")) {
      auto trace = trace_from_json(t.at("trace"));
      auto id = trace.dialogue_id;
      bundle.traces[t.at("system").get<std::string>()].emplace(id, std::move(trace));
    }
  }
  return bundle;
}

std::string bundle_digest(const fs::path& dir) {
  std::vector<fs::path> files;
  for (const auto& entry : fs::recursive_directory_iterator(dir)) {
    if (entry.is_regular_file()) files.push_back(fs::relative(entry.path(), dir));
  }
  std::sort(files.begin(), files.end());
  std::uint64_t h = fnv1a64("");
  for (const auto& rel : files) {
    std::ifstream in(dir / rel, std::ios::binary);
    std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    h = fnv1a64(rel.generic_string(), h);
    h = fnv1a64(std::string_view("\0", 1), h);
    h = fnv1a64(bytes, h);
  }
  return hex64(h);
}

}  // namespace csd
