#pragma once

// Wires concrete backends together for the CLI, the service and scripted
// runs: fixture mode uses the in-process fakes, live mode the HTTP clients.

#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>

#include "csd/fake_backends.hpp"
#include "csd/http_backends.hpp"
#include "csd/inference_engine.hpp"
#include "csd/llm_gateway.hpp"

namespace csd {

struct RuntimeOptions {
  bool fixture = true;
  // Fixture mode: canned candidates (misses fall back to templates) and
  // scripted selections {context, type}.
  std::optional<std::filesystem::path> generation_fixture;
  std::optional<std::filesystem::path> selection_script;
  std::size_t embedding_dimension = 64;
  // Live mode.
  std::string generation_endpoint = "http://127.0.0.1:8080/generate";
  std::string chat_api_key_env = "OPENAI_API_KEY";
  std::string embedding_api_key_env = "EMBEDDING_API_KEY";
  std::size_t max_in_flight = 5;
  double requests_per_second = 0.0;
};

std::map<std::string, CommonsenseType> load_selection_script(const std::filesystem::path& path);

class Runtime {
 public:
  explicit Runtime(const RuntimeOptions& opts);

  GenerationBackend& generation() { return *generation_; }
  LlmGateway& gateway() { return *gateway_; }
  bool fixture() const noexcept { return fixture_; }

 private:
  bool fixture_;
  std::unique_ptr<ChatBackend> chat_;
  std::unique_ptr<EmbeddingProvider> embedder_;
  std::unique_ptr<GenerationBackend> fallback_;
  std::unique_ptr<GenerationBackend> generation_;
  std::unique_ptr<LlmGateway> gateway_;
};

}  // namespace csd
