#pragma once

// Wire clients for hosted providers. Each call is a single attempt; retries
// and admission control belong to the gateway.

#include <string>
#include <string_view>
#include <vector>

#include "csd/inference_engine.hpp"
#include "csd/llm_gateway.hpp"

namespace csd {

struct Url {
  std::string origin;  // scheme://host[:port]
  std::string path;    // starts with '/'
};

Url split_url(std::string_view url);

// True when `status` is worth another attempt (429 and 5xx).
bool retryable_status(int status);

// POST result of one JSON request. Throws TransportError for connection
// failures and non-2xx statuses, ParseError for a non-JSON body.
std::string post_json(const std::string& url, const std::string& body,
                      const std::vector<std::pair<std::string, std::string>>& headers,
                      std::chrono::milliseconds timeout);

// Chat-completions protocol: {model, messages, temperature, max_tokens} ->
// choices[0].message.content. The bearer token is read from `api_key_env`.
class HttpChatBackend : public ChatBackend {
 public:
  explicit HttpChatBackend(std::string api_key_env = "OPENAI_API_KEY")
      : api_key_env_(std::move(api_key_env)) {}

  std::string complete(const std::string& prompt, const LlmConfig& cfg) override;

  static std::string request_body(const std::string& prompt, const LlmConfig& cfg);
  static std::string parse_reply(const std::string& body);

 private:
  std::string api_key_env_;
};

// Embeddings protocol: {model, input: [...]} -> data[i].embedding.
class HttpEmbeddingProvider : public EmbeddingProvider {
 public:
  explicit HttpEmbeddingProvider(std::string api_key_env = "EMBEDDING_API_KEY")
      : api_key_env_(std::move(api_key_env)) {}

  std::vector<Embedding> embed(const std::vector<std::string>& texts,
                               const EmbeddingConfig& cfg) override;

  static std::vector<Embedding> parse_reply(const std::string& body, std::size_t expected);

 private:
  std::string api_key_env_;
};

// Inference-generation service: {context, type, n} -> {candidates: [...]}.
// Transient failures are retried with the given policy.
class HttpGenerationBackend : public GenerationBackend {
 public:
  HttpGenerationBackend(std::string endpoint, RetryPolicy retry = {},
                        std::chrono::milliseconds timeout = std::chrono::milliseconds{60'000});

  std::vector<std::string> generate(const std::string& rendered_context, CommonsenseType type,
                                    std::size_t n) override;
  std::string name() const override { return "http:" + endpoint_; }

 private:
  std::string endpoint_;
  RetryPolicy retry_;
  std::chrono::milliseconds timeout_;
};

}  // namespace csd
