// Command-line front end: corpus ingestion, experiment runs, evaluation
// bookkeeping, aspect analysis and the HTTP service.

#include <filesystem>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "csd/aspects.hpp"
#include "csd/errors.hpp"
#include "csd/eval.hpp"
#include "csd/experiment.hpp"
#include "csd/runtime.hpp"
#include "csd/serialization.hpp"
#include "csd/service.hpp"
#include "csd/service_http.hpp"

namespace fs = std::filesystem;
using namespace csd;

namespace {

struct BackendFlags {
  bool fixture = false;
  std::string generation_fixture = "data/fixtures/generation.jsonl";
  std::string selection_script = "data/fixtures/selections.jsonl";
  std::string generation_endpoint = "http://127.0.0.1:8080/generate";
  std::string chat_key_env = "OPENAI_API_KEY";
  std::string embedding_key_env = "EMBEDDING_API_KEY";
  std::size_t max_in_flight = 5;
  double rps = 0.0;

  void add_to(CLI::App* cmd) {
    cmd->add_flag("--fixture", fixture, "Use the deterministic in-process backends");
    cmd->add_option("--generation-fixture", generation_fixture, "Canned candidates (fixture mode)");
    cmd->add_option("--selection-script", selection_script, "Scripted selections (fixture mode)");
    cmd->add_option("--generation-endpoint", generation_endpoint, "Inference generation service URL");
    cmd->add_option("--chat-key-env", chat_key_env, "Env var holding the chat API key");
    cmd->add_option("--embedding-key-env", embedding_key_env, "Env var holding the embedding API key");
    cmd->add_option("--max-in-flight", max_in_flight, "Concurrent provider requests");
    cmd->add_option("--rps", rps, "Provider requests per second (0 = unlimited)");
  }

  RuntimeOptions options() const {
    RuntimeOptions o;
    o.fixture = fixture;
    if (fixture && fs::exists(generation_fixture)) o.generation_fixture = generation_fixture;
    if (fixture && fs::exists(selection_script)) o.selection_script = selection_script;
    o.generation_endpoint = generation_endpoint;
    o.chat_api_key_env = chat_key_env;
    o.embedding_api_key_env = embedding_key_env;
    o.max_in_flight = max_in_flight;
    o.requests_per_second = rps;
    return o;
  }
};

struct ModelFlags {
  std::optional<std::string> llm_endpoint;
  std::optional<std::string> embedding_endpoint;
  std::optional<std::string> model;
  std::optional<double> temperature;
  std::optional<std::size_t> k;

  void add_to(CLI::App* cmd) {
    cmd->add_option("--llm-endpoint", llm_endpoint, "Chat-completions URL");
    cmd->add_option("--embedding-endpoint", embedding_endpoint, "Embeddings URL");
    cmd->add_option("--model", model, "Chat model id");
    cmd->add_option("--temperature", temperature, "Sampling temperature");
    cmd->add_option("--k", k, "Inferences selected by the explicit pipeline");
  }

  void apply(PipelineConfig& cfg, bool fixture) const {
    if (llm_endpoint) cfg.llm.endpoint = *llm_endpoint;
    if (embedding_endpoint) cfg.engine.embedding.endpoint = *embedding_endpoint;
    if (model) cfg.llm.model_id = *model;
    if (temperature) cfg.llm.temperature = *temperature;
    if (k) cfg.k = *k;
    // Wall-clock timings would make fixture bundles differ run to run.
    if (fixture) cfg.record_timing = false;
    cfg.validate();
  }
};

std::string fixed3(double v) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(3) << v;
  return os.str();
}

std::string pct(double v) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(1) << v;
  return os.str();
}

std::vector<PairwiseTask> load_tasks(const fs::path& path) {
  std::vector<PairwiseTask> tasks;
  if (!fs::exists(path)) return tasks;
  for (const auto& j : read_jsonl(path)) tasks.push_back(task_from_json(j));
  return tasks;
}

std::vector<Judgment> load_judgments(const fs::path& path) {
  std::vector<Judgment> out;
  if (!fs::exists(path)) return out;
  for (const auto& j : read_jsonl(path)) {
    auto judgment = judgment_from_json(j);
    judgment.validate();
    out.push_back(std::move(judgment));
  }
  return out;
}

int cmd_ingest(const std::string& path) {
  auto corpus = ingest_corpus(path);
  json out = {{"source", corpus.source},
              {"count", corpus.stats.count},
              {"mean_turns", corpus.stats.mean_turns},
              {"mean_words_per_utterance", corpus.stats.mean_words_per_utterance}};
  std::cout << out.dump(2) << "\n";
  return 0;
}

int cmd_run(const std::string& manifest_path, const std::string& output,
            std::optional<std::uint64_t> seed, std::optional<std::size_t> workers,
            const std::string& fewshot_dir, const BackendFlags& backend, const ModelFlags& model) {
  auto manifest = ExperimentManifest::load(manifest_path);
  if (!output.empty()) manifest.output_dir = output;
  if (seed) manifest.seed = *seed;
  if (workers) manifest.workers = *workers;
  bool needs_store = false;
  for (auto& s : manifest.systems) {
    if (!s.pipeline) continue;
    model.apply(*s.pipeline, backend.fixture);
    needs_store = needs_store || s.pipeline->approach != Approach::Baseline;
  }
  std::optional<FewShotStore> store;
  if (needs_store) store.emplace(FewShotStore::load(fewshot_dir));
  Runtime runtime(backend.options());
  auto summary = run_experiment(manifest, {runtime.generation(), runtime.gateway(), store ? &*store : nullptr});
  std::cout << "cells: " << summary.cells_total << "  computed: " << summary.computed
            << "  external: " << summary.loaded_external << "  skipped: " << summary.skipped
            << "  failed: " << summary.failures.size() << "\n";
  for (const auto& f : summary.failures) {
    std::cout << "  failed " << f.system << "/" << f.dialogue_id << " [" << f.stage << "]: " << f.error << "\n";
  }
  std::cout << "bundle: " << manifest.output_dir.string() << "  digest: " << bundle_digest(manifest.output_dir) << "\n";
  return summary.failures.empty() ? 0 : 3;
}

int cmd_build_tasks(const fs::path& bundle_dir, const std::string& first, const std::string& second,
                    int judges, std::optional<std::uint64_t> seed) {
  auto bundle = load_bundle(bundle_dir);
  std::uint64_t s = seed ? *seed : bundle.manifest.value("seed", std::uint64_t{0});
  SystemPair pair{first, second};
  auto fresh = build_tasks(bundle.responses, pair, judges, s);
  auto path = bundle_dir / "eval" / "tasks.jsonl";
  std::vector<json> records;
  for (const auto& t : load_tasks(path)) {
    if (t.pair() != pair) records.push_back(to_json(t));
  }
  for (const auto& t : fresh) records.push_back(to_json(t));
  write_jsonl_atomic(path, records);
  std::cout << "wrote " << fresh.size() << " tasks for " << first << " vs " << second << " to " << path.string() << "\n";
  return 0;
}

int cmd_report(const fs::path& bundle_dir, const std::string& judgments_path,
               const std::string& explicit_system, bool as_json) {
  auto tasks = load_tasks(bundle_dir / "eval" / "tasks.jsonl");
  auto judgments = load_judgments(judgments_path.empty() ? bundle_dir / "eval" / "judgments.jsonl"
                                                         : fs::path(judgments_path));
  std::vector<SystemPair> pairs;
  for (const auto& t : tasks) {
    if (std::find(pairs.begin(), pairs.end(), t.pair()) == pairs.end()) pairs.push_back(t.pair());
  }
  std::vector<ComparisonResult> results;
  json out = json::array();
  for (const auto& pair : pairs) {
    std::vector<PairwiseTask> pt;
    std::set<std::string> ids;
    for (const auto& t : tasks) {
      if (t.pair() == pair) {
        pt.push_back(t);
        ids.insert(t.task_id);
      }
    }
    std::vector<Judgment> pj;
    for (const auto& j : judgments) {
      if (ids.count(j.task_id)) pj.push_back(j);
    }
    if (pj.empty()) continue;
    auto result = aggregate(pair, pt, pj);
    auto rj = to_json(result);
    for (auto q : kAllQuestions) {
      try {
        rj["krippendorff_alpha"][std::string(to_string(q))] =
            krippendorff_alpha(agreement_matrix(pair, pt, pj, q));
      } catch (const DomainError&) {
        rj["krippendorff_alpha"][std::string(to_string(q))] = nullptr;
      }
    }
    out.push_back(rj);
    results.push_back(std::move(result));
  }
  if (results.empty()) throw ValidationError("no judgments match the bundle's tasks");

  auto bundle = load_bundle(bundle_dir);
  std::string system = explicit_system;
  if (system.empty()) {
    for (const auto& s : bundle.manifest.at("systems")) {
      if (s.contains("pipeline") && s["pipeline"].value("approach", "") == "explicit") {
        system = s["name"].get<std::string>();
        break;
      }
    }
  }
  std::map<CommonsenseType, TypeGroup> groups;
  if (!system.empty() && bundle.traces.count(system)) {
    groups = decompose_by_type(system, tasks, judgments, bundle.traces.at(system));
  }
  if (as_json) {
    json dec = json::object();
    for (const auto& [type, g] : groups) {
      dec[std::string(type_name(type))] = {{"tasks", g.tasks}, {"judgments", g.judgments}, {"wins", g.wins}, {"win_pct", g.win_pct}};
    }
    std::cout << json{{"comparisons", out}, {"decomposition", {{"system", system}, {"groups", dec}}}}.dump(2) << "\n";
    return 0;
  }
  std::cout << format_comparison_table(results) << "\n";
  for (const auto& r : out) {
    std::cout << "alpha " << r["first"].get<std::string>() << " vs " << r["second"].get<std::string>() << ":";
    for (const auto& [q, a] : r["krippendorff_alpha"].items()) {
      std::cout << " " << q << "=" << (a.is_null() ? std::string("n/a") : fixed3(a.get<double>()));
    }
    std::cout << "\n";
  }
  if (!groups.empty()) {
    std::cout << "\nquality win rate of " << system << " by selected type\n";
    for (const auto& [type, g] : groups) {
      std::cout << "  " << std::left << std::setw(13) << type_name(type) << " tasks " << std::setw(4) << g.tasks
                << " win " << pct(g.win_pct) << "%\n";
    }
  }
  return 0;
}

std::vector<ExplanationItem> explanations_from_bundle(const fs::path& bundle_dir, const std::string& judgments_path) {
  auto tasks = load_tasks(bundle_dir / "eval" / "tasks.jsonl");
  auto judgments = load_judgments(judgments_path.empty() ? bundle_dir / "eval" / "judgments.jsonl"
                                                         : fs::path(judgments_path));
  std::map<std::string, const PairwiseTask*> by_id;
  for (const auto& t : tasks) by_id[t.task_id] = &t;
  std::vector<ExplanationItem> items;
  for (const auto& j : judgments) {
    auto it = by_id.find(j.task_id);
    if (it == by_id.end()) throw NotFoundError("judgment references unknown task '" + j.task_id + "'");
    items.push_back({j.task_id + "#" + j.judge_id, it->second->system_for(j.answers.at(QuestionId::Quality)), j.explanation});
  }
  return items;
}

LlmConfig aspect_llm(const ModelFlags& model) {
  LlmConfig cfg;
  if (model.llm_endpoint) cfg.endpoint = *model.llm_endpoint;
  if (model.model) cfg.model_id = *model.model;
  if (model.temperature) cfg.temperature = *model.temperature;
  return cfg;
}

int cmd_aspects_extract(const fs::path& bundle_dir, const std::string& judgments_path,
                        const std::string& categories, const std::string& out_path, std::size_t batch,
                        const BackendFlags& backend, const ModelFlags& model) {
  auto cmap = CategoryMap::load(categories);
  auto items = explanations_from_bundle(bundle_dir, judgments_path);
  Runtime runtime(backend.options());
  auto records = extract_aspects(items, runtime.gateway(), aspect_llm(model), cmap, batch);
  std::vector<json> lines;
  for (const auto& r : records) lines.push_back(to_json(r));
  fs::path out = out_path.empty() ? bundle_dir / "eval" / "aspects.jsonl" : fs::path(out_path);
  write_jsonl_atomic(out, lines);
  std::cout << "wrote " << records.size() << " aspect records to " << out.string() << "\n";
  return 0;
}

int cmd_aspects_report(const std::string& records_path, bool as_json) {
  std::vector<AspectRecord> records;
  for (const auto& j : read_jsonl(records_path)) records.push_back(aspect_record_from_json(j));
  auto dist = category_distribution(records);
  if (as_json) {
    std::cout << json(dist).dump(2) << "\n";
    return 0;
  }
  for (const auto& [system, cats] : dist) {
    std::cout << system << "\n";
    std::vector<std::pair<std::string, double>> sorted(cats.begin(), cats.end());
    std::stable_sort(sorted.begin(), sorted.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
    for (const auto& [cat, share] : sorted) {
      std::cout << "  " << std::left << std::setw(12) << cat << " " << pct(share * 100.0) << "%\n";
    }
  }
  return 0;
}

int cmd_aspects_score(const std::string& sample_path, const std::string& categories, std::size_t batch,
                      const BackendFlags& backend, const ModelFlags& model) {
  auto cmap = CategoryMap::load(categories);
  std::vector<ExplanationItem> items;
  std::vector<AnnotatedSample> samples;
  for (const auto& j : read_jsonl(sample_path)) {
    items.push_back({j.value("explanation_id", std::to_string(items.size() + 1)), "", j.at("explanation").get<std::string>()});
    samples.push_back({j.at("explanation").get<std::string>(), j.at("gold").get<std::vector<std::string>>(), {}});
  }
  Runtime runtime(backend.options());
  auto records = extract_aspects(items, runtime.gateway(), aspect_llm(model), cmap, batch);
  for (std::size_t i = 0; i < records.size(); ++i) samples[i].predicted = records[i].predicted_aspects;
  auto score = score_annotated(samples, cmap);
  auto show = [](const std::optional<double>& v) { return v ? pct(*v * 100.0) + "%" : std::string("n/a"); };
  std::cout << "items " << score.items << "  matched " << score.matched << "  predicted " << score.predicted
            << "  gold " << score.gold << "\nprecision " << show(score.micro.precision) << "  recall "
            << show(score.micro.recall) << "\n";
  return 0;
}

int cmd_serve(const fs::path& bundle_dir, const std::string& host, int port, bool chat,
              const std::string& chat_system, const std::string& fewshot_dir,
              const BackendFlags& backend, const ModelFlags& model) {
  std::optional<Runtime> runtime;
  std::optional<FewShotStore> store;
  std::optional<ChatRuntime> chat_rt;
  if (chat) {
    runtime.emplace(backend.options());
    store.emplace(FewShotStore::load(fewshot_dir));
    ChatRuntime rt{&runtime->generation(), &runtime->gateway(), &*store, {}, chat_system};
    json manifest = json::parse(std::ifstream(bundle_dir / "manifest.json"));
    for (const auto& s : manifest.at("systems")) {
      if (!s.contains("pipeline")) continue;
      auto cfg = pipeline_config_from_json(s["pipeline"]);
      model.apply(cfg, backend.fixture);
      rt.systems.emplace(s["name"].get<std::string>(), cfg);
    }
    if (rt.default_system.empty() && !rt.systems.empty()) rt.default_system = rt.systems.begin()->first;
    chat_rt = std::move(rt);
  }
  Service service(bundle_dir, std::move(chat_rt));
  std::cout << "serving " << bundle_dir.string() << " on http://" << host << ":" << port << std::endl;
  serve(service, host, port);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Commonsense-grounded dialogue response experiments"};
  app.require_subcommand(1);

  std::string corpus_path;
  auto* ingest = app.add_subcommand("ingest", "Validate a corpus and print its statistics");
  ingest->add_option("corpus", corpus_path, "Line-delimited dialogue file")->required();

  std::string manifest_path, output_dir, fewshot_dir = "data/fewshot";
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> workers;
  BackendFlags backend;
  ModelFlags model;
  auto* run = app.add_subcommand("run", "Produce responses and traces for every system and dialogue");
  run->add_option("--manifest", manifest_path, "Experiment manifest (JSON)")->required();
  run->add_option("--output", output_dir, "Bundle directory");
  run->add_option("--seed", seed, "Override the manifest seed");
  run->add_option("--workers", workers, "Concurrent pipeline jobs");
  run->add_option("--fewshot", fewshot_dir, "Few-shot example directory");
  backend.add_to(run);
  model.add_to(run);

  auto* eval = app.add_subcommand("eval", "Pairwise evaluation bookkeeping");
  eval->require_subcommand(1);
  std::string bundle_dir, first, second, judgments_path, explicit_system;
  int judges = 3;
  bool as_json = false;
  auto* build = eval->add_subcommand("build-tasks", "Create blinded A/B tasks for one system pair");
  build->add_option("--bundle", bundle_dir, "Result bundle")->required();
  build->add_option("--first", first, "First system")->required();
  build->add_option("--second", second, "Second system")->required();
  build->add_option("--judges", judges, "Judges per task");
  build->add_option("--seed", seed, "Display-order seed (defaults to the manifest seed)");
  auto* report = eval->add_subcommand("report", "Aggregate judgments into preference tables");
  report->add_option("--bundle", bundle_dir, "Result bundle")->required();
  report->add_option("--judgments", judgments_path, "Judgment file (defaults to the bundle's)");
  report->add_option("--explicit-system", explicit_system, "System to decompose by selected type");
  report->add_flag("--json", as_json, "Emit JSON");

  auto* aspects = app.add_subcommand("aspects", "Aspect identification over judge explanations");
  aspects->require_subcommand(1);
  std::string categories = "data/categories.json", out_path, records_path, sample_path;
  std::size_t batch = kMaxAspectBatch;
  auto* extract = aspects->add_subcommand("extract", "Extract and map aspects from explanations");
  extract->add_option("--bundle", bundle_dir, "Result bundle")->required();
  extract->add_option("--judgments", judgments_path, "Judgment file (defaults to the bundle's)");
  extract->add_option("--categories", categories, "Category map");
  extract->add_option("--out", out_path, "Output file (defaults to eval/aspects.jsonl)");
  extract->add_option("--batch", batch, "Explanations per request");
  backend.add_to(extract);
  model.add_to(extract);
  auto* areport = aspects->add_subcommand("report", "Per-system category distribution");
  areport->add_option("--records", records_path, "Aspect records file")->required();
  areport->add_flag("--json", as_json, "Emit JSON");
  auto* score = aspects->add_subcommand("score", "Precision and recall against annotated explanations");
  score->add_option("--sample", sample_path, "Annotated sample file")->required();
  score->add_option("--categories", categories, "Category map");
  score->add_option("--batch", batch, "Explanations per request");
  backend.add_to(score);
  model.add_to(score);

  std::string host = "127.0.0.1", chat_system;
  int port = 8000;
  bool chat = false;
  auto* srv = app.add_subcommand("serve", "Serve the HTTP API over a bundle");
  srv->add_option("--bundle", bundle_dir, "Result bundle")->required();
  srv->add_option("--host", host, "Bind address");
  srv->add_option("--port", port, "Port");
  srv->add_flag("--chat", chat, "Enable live chat with the bundle's pipeline systems");
  srv->add_option("--chat-system", chat_system, "Default chat system");
  srv->add_option("--fewshot", fewshot_dir, "Few-shot example directory");
  backend.add_to(srv);
  model.add_to(srv);

  CLI11_PARSE(app, argc, argv);

  try {
    if (*ingest) return cmd_ingest(corpus_path);
    if (*run) return cmd_run(manifest_path, output_dir, seed, workers, fewshot_dir, backend, model);
    if (*build) return cmd_build_tasks(bundle_dir, first, second, judges, seed);
    if (*report) return cmd_report(bundle_dir, judgments_path, explicit_system, as_json);
    if (*extract) return cmd_aspects_extract(bundle_dir, judgments_path, categories, out_path, batch, backend, model);
    if (*areport) return cmd_aspects_report(records_path, as_json);
    if (*score) return cmd_aspects_score(sample_path, categories, batch, backend, model);
    if (*srv) return cmd_serve(bundle_dir, host, port, chat, chat_system, fewshot_dir, backend, model);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
