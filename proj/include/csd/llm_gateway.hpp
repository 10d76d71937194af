#pragma once

// Uniform access to chat-completion and embedding providers. The gateway owns
// retrying, admission control and the embedding cache; backends only speak
// their wire protocol.

#include <chrono>
#include <condition_variable>
#include <cstddef>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "csd/dialogue.hpp"

namespace csd {

struct RetryPolicy {
  int max_attempts = 3;
  std::chrono::milliseconds backoff_base{500};
  std::chrono::milliseconds backoff_cap{30'000};

  // Delay before attempt `attempt + 1`, given `attempt` failures so far.
  std::chrono::milliseconds delay_after(int attempt) const;
};

struct LlmConfig {
  std::string model_id = "gpt-3.5-turbo-0125";
  double temperature = 0.7;
  int max_output_tokens = 256;
  std::string endpoint = "https://api.openai.com/v1/chat/completions";
  std::chrono::milliseconds timeout{60'000};
  RetryPolicy retry;

  void validate() const;
};

struct EmbeddingConfig {
  std::string model_id = "sentence-transformers/all-mpnet-base-v2";
  std::string endpoint = "http://127.0.0.1:8081/v1/embeddings";
  // Discovered from the first response when unset.
  std::optional<std::size_t> dimensionality;
  bool cache_enabled = true;
  // Append-only persistence for the cache; in-memory only when unset.
  std::optional<std::filesystem::path> cache_path;
  std::chrono::milliseconds timeout{60'000};
  RetryPolicy retry;
};

struct CompletionRecord {
  std::string prompt;
  std::string output;
  std::string model_id;
  std::chrono::duration<double, std::milli> latency{0};
  int attempt_count = 1;
};

class ChatBackend {
 public:
  virtual ~ChatBackend() = default;
  // One attempt. Throws TransportError on failure.
  virtual std::string complete(const std::string& prompt, const LlmConfig& cfg) = 0;
};

class EmbeddingProvider {
 public:
  virtual ~EmbeddingProvider() = default;
  // One attempt; vectors need not be normalized. Throws TransportError.
  virtual std::vector<Embedding> embed(const std::vector<std::string>& texts,
                                       const EmbeddingConfig& cfg) = 0;
};

// Caps concurrent in-flight requests and, optionally, the request rate with a
// token bucket.
class RateLimiter {
 public:
  explicit RateLimiter(std::size_t max_in_flight = 5, double requests_per_second = 0.0,
                       double burst = 1.0);

  class Permit {
   public:
    explicit Permit(RateLimiter* owner) : owner_(owner) {}
    Permit(Permit&& other) noexcept : owner_(std::exchange(other.owner_, nullptr)) {}
    Permit& operator=(Permit&&) = delete;
    Permit(const Permit&) = delete;
    ~Permit();

   private:
    RateLimiter* owner_;
  };

  Permit acquire();

  std::size_t in_flight() const;
  std::size_t peak_in_flight() const;

 private:
  void release();

  std::size_t max_in_flight_;
  double rate_;
  double burst_;
  double tokens_;
  std::chrono::steady_clock::time_point last_refill_;
  std::size_t in_flight_ = 0;
  std::size_t peak_ = 0;
  mutable std::mutex mu_;
  std::condition_variable cv_;
};

// Embedding cache keyed by (model id, exact text). With a path, every new
// entry is appended as one JSON line {model_id, text_hash, text, vector} and
// the file is replayed on construction.
class EmbeddingCache {
 public:
  explicit EmbeddingCache(std::optional<std::filesystem::path> path = std::nullopt);

  std::optional<Embedding> get(const std::string& model_id, const std::string& text) const;
  void put(const std::string& model_id, const std::string& text, const Embedding& vec);
  std::size_t size() const;

 private:
  std::optional<std::filesystem::path> path_;
  std::map<std::pair<std::string, std::string>, Embedding> entries_;
  std::ofstream out_;
  mutable std::mutex mu_;
};

struct GatewayOptions {
  std::size_t max_in_flight = 5;
  double requests_per_second = 0.0;
  // Injected so tests can observe backoff without waiting.
  std::function<void(std::chrono::milliseconds)> sleep;
  // Fixture runs pin latencies to zero so traces are byte-reproducible.
  bool record_latency = true;
};

struct GatewayStats {
  std::size_t completions = 0;      // successful chat_complete calls
  std::size_t chat_attempts = 0;    // backend invocations, failures included
  std::size_t embed_requests = 0;   // successful embed() calls
  std::size_t provider_calls = 0;   // embedding provider invocations
  std::size_t texts_embedded = 0;   // texts sent to the provider
};

class LlmGateway {
 public:
  LlmGateway(ChatBackend& chat, EmbeddingProvider& embedder, GatewayOptions opts = {});

  CompletionRecord chat_complete(const std::string& prompt, const LlmConfig& cfg);

  // One unit-norm vector per input, in input order.
  std::vector<Embedding> embed(const std::vector<std::string>& texts, const EmbeddingConfig& cfg);

  GatewayStats stats() const;
  const RateLimiter& limiter() const { return limiter_; }

 private:
  template <typename Fn>
  auto with_retries(const RetryPolicy& policy, Fn&& fn, int& attempts) -> decltype(fn());

  EmbeddingCache& cache_for(const EmbeddingConfig& cfg);
  void check_dimension(const EmbeddingConfig& cfg, std::size_t dim);

  ChatBackend& chat_;
  EmbeddingProvider& embedder_;
  GatewayOptions opts_;
  RateLimiter limiter_;

  mutable std::mutex mu_;
  GatewayStats stats_;
  std::map<std::string, std::size_t> dimensions_;
  std::map<std::string, std::unique_ptr<EmbeddingCache>> caches_;
};

// Returns v / ||v||. Throws DomainError for a zero or non-finite vector.
Embedding l2_normalize(Embedding v);

}  // namespace csd
