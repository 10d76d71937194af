#include "csd/runtime.hpp"

#include "csd/serialization.hpp"

namespace csd {

std::map<std::string, CommonsenseType> load_selection_script(const std::filesystem::path& path) {
  std::map<std::string, CommonsenseType> script;
  for (const auto& r : read_jsonl(path)) {
    script.emplace(r.at("context").get<std::string>(),
                   commonsense_type_from_name(r.at("type").get<std::string>()));
  }
  return script;
}

Runtime::Runtime(const RuntimeOptions& opts) : fixture_(opts.fixture) {
  GatewayOptions gw;
  gw.max_in_flight = opts.max_in_flight;
  gw.requests_per_second = opts.requests_per_second;
  if (fixture_) {
    std::map<std::string, CommonsenseType> script;
    if (opts.selection_script) script = load_selection_script(*opts.selection_script);
    chat_ = std::make_unique<FakeChatBackend>(fixture_chat_responder(std::move(script)));
    embedder_ = std::make_unique<FakeEmbeddingProvider>(opts.embedding_dimension);
    fallback_ = std::make_unique<TemplateGenerationBackend>();
    auto gen = std::make_unique<FixtureGenerationBackend>();
    if (opts.generation_fixture) gen->load(*opts.generation_fixture);
    gen->set_fallback(fallback_.get());
    generation_ = std::move(gen);
    gw.record_latency = false;
  } else {
    chat_ = std::make_unique<HttpChatBackend>(opts.chat_api_key_env);
    embedder_ = std::make_unique<HttpEmbeddingProvider>(opts.embedding_api_key_env);
    generation_ = std::make_unique<HttpGenerationBackend>(opts.generation_endpoint);
  }
  gateway_ = std::make_unique<LlmGateway>(*chat_, *embedder_, std::move(gw));
}

}  // namespace csd
