#include "csd/llm_gateway.hpp"

#include <algorithm>
#include <cmath>
#include <thread>

#include "csd/errors.hpp"
#include "csd/util.hpp"
#include "json.hpp"

namespace csd {

using json = nlohmann::json;

std::chrono::milliseconds RetryPolicy::delay_after(int attempt) const {
  if (attempt < 1) return std::chrono::milliseconds{0};
  auto delay = backoff_base.count();
  for (int i = 1; i < attempt && delay < backoff_cap.count(); ++i) delay *= 2;
  return std::chrono::milliseconds{std::min<long long>(delay, backoff_cap.count())};
}

void LlmConfig::validate() const {
  if (model_id.empty()) throw ValidationError("model id must be set");
  if (!(temperature >= 0.0 && temperature <= 2.0)) {
    throw ValidationError("temperature must lie in [0, 2]");
  }
  if (max_output_tokens < 1) throw ValidationError("max_output_tokens must be positive");
  if (retry.max_attempts < 1) throw ValidationError("retry.max_attempts must be at least 1");
}

// ---------------------------------------------------------------------------
// RateLimiter

RateLimiter::RateLimiter(std::size_t max_in_flight, double requests_per_second, double burst)
    : max_in_flight_(std::max<std::size_t>(1, max_in_flight)),
      rate_(requests_per_second),
      burst_(std::max(1.0, burst)),
      tokens_(std::max(1.0, burst)),
      last_refill_(std::chrono::steady_clock::now()) {}

RateLimiter::Permit::~Permit() {
  if (owner_ != nullptr) owner_->release();
}

RateLimiter::Permit RateLimiter::acquire() {
  std::unique_lock lock(mu_);
  cv_.wait(lock, [&] { return in_flight_ < max_in_flight_; });
  if (rate_ > 0.0) {
    while (true) {
      auto now = std::chrono::steady_clock::now();
      std::chrono::duration<double> elapsed = now - last_refill_;
      tokens_ = std::min(burst_, tokens_ + elapsed.count() * rate_);
      last_refill_ = now;
      if (tokens_ >= 1.0) break;
      auto wait = std::chrono::duration<double>((1.0 - tokens_) / rate_);
      cv_.wait_for(lock, wait);
    }
    tokens_ -= 1.0;
  }
  ++in_flight_;
  peak_ = std::max(peak_, in_flight_);
  return Permit(this);
}

void RateLimiter::release() {
  {
    std::lock_guard lock(mu_);
    --in_flight_;
  }
  cv_.notify_one();
}

std::size_t RateLimiter::in_flight() const {
  std::lock_guard lock(mu_);
  return in_flight_;
}

std::size_t RateLimiter::peak_in_flight() const {
  std::lock_guard lock(mu_);
  return peak_;
}

// ---------------------------------------------------------------------------
// EmbeddingCache

EmbeddingCache::EmbeddingCache(std::optional<std::filesystem::path> path) : path_(std::move(path)) {
  if (!path_) return;
  bool torn = false;
  if (std::ifstream in(*path_); in) {
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
      ++line_no;
      if (trim_view(line).empty()) continue;
      try {
        auto rec = json::parse(line);
        entries_[{rec.at("model_id").get<std::string>(), rec.at("text").get<std::string>()}] =
            rec.at("vector").get<Embedding>();
      } catch (const json::exception& e) {
        // A torn final line from an interrupted run is dropped; anything
        // else means the file is not ours.
        if (in.peek() != std::char_traits<char>::eof()) {
          throw IntegrityError("embedding cache " + path_->string() + " line " +
                               std::to_string(line_no) + ": " + e.what());
        }
        torn = true;
      }
    }
  }
  if (path_->has_parent_path()) std::filesystem::create_directories(path_->parent_path());
  if (torn) {
    // Rewrite without the torn line so later appends start on a fresh line.
    std::ofstream rewrite(*path_, std::ios::trunc);
    for (const auto& [key, vec] : entries_) {
      rewrite << json{{"model_id", key.first}, {"text_hash", hex64(fnv1a64(key.second))},
                      {"text", key.second}, {"vector", vec}}.dump()
              << '\n';
    }
  }
  out_.open(*path_, std::ios::app);
  if (!out_) throw IntegrityError("cannot open embedding cache " + path_->string());
}

std::optional<Embedding> EmbeddingCache::get(const std::string& model_id,
                                             const std::string& text) const {
  std::lock_guard lock(mu_);
  auto it = entries_.find({model_id, text});
  if (it == entries_.end()) return std::nullopt;
  return it->second;
}

void EmbeddingCache::put(const std::string& model_id, const std::string& text,
                         const Embedding& vec) {
  std::lock_guard lock(mu_);
  auto [it, inserted] = entries_.try_emplace({model_id, text}, vec);
  if (!inserted || !out_.is_open()) return;
  json rec = {{"model_id", model_id},
              {"text_hash", hex64(fnv1a64(text))},
              {"text", text},
              {"vector", vec}};
  out_ << rec.dump() << '\n';
  out_.flush();
}

std::size_t EmbeddingCache::size() const {
  std::lock_guard lock(mu_);
  return entries_.size();
}

// ---------------------------------------------------------------------------
// LlmGateway

Embedding l2_normalize(Embedding v) {
  double sq = 0.0;
  for (double x : v) sq += x * x;
  double norm = std::sqrt(sq);
  if (!(norm > 0.0) || !std::isfinite(norm)) throw DomainError("cannot normalize a zero vector");
  for (auto& x : v) x /= norm;
  return v;
}

LlmGateway::LlmGateway(ChatBackend& chat, EmbeddingProvider& embedder, GatewayOptions opts)
    : chat_(chat),
      embedder_(embedder),
      opts_(std::move(opts)),
      limiter_(opts_.max_in_flight, opts_.requests_per_second) {
  if (!opts_.sleep) {
    opts_.sleep = [](std::chrono::milliseconds d) { std::this_thread::sleep_for(d); };
  }
}

template <typename Fn>
auto LlmGateway::with_retries(const RetryPolicy& policy, Fn&& fn, int& attempts)
    -> decltype(fn()) {
  const int max_attempts = std::max(1, policy.max_attempts);
  for (attempts = 1;; ++attempts) {
    try {
      auto permit = limiter_.acquire();
      return fn();
    } catch (const TransportError& e) {
      if (!e.retryable()) throw;
      if (attempts >= max_attempts) {
        throw TransportError("giving up after " + std::to_string(attempts) +
                                 " attempt(s): " + e.what(),
                             e.status(), false);
      }
    }
    opts_.sleep(policy.delay_after(attempts));
  }
}

CompletionRecord LlmGateway::chat_complete(const std::string& prompt, const LlmConfig& cfg) {
  if (prompt.empty()) throw ValidationError("prompt must not be empty");
  cfg.validate();

  CompletionRecord rec;
  rec.prompt = prompt;
  rec.model_id = cfg.model_id;
  auto start = std::chrono::steady_clock::now();
  rec.output = with_retries(
      cfg.retry,
      [&] {
        {
          std::lock_guard lock(mu_);
          ++stats_.chat_attempts;
        }
        return chat_.complete(prompt, cfg);
      },
      rec.attempt_count);
  if (opts_.record_latency) rec.latency = std::chrono::steady_clock::now() - start;

  std::lock_guard lock(mu_);
  ++stats_.completions;
  return rec;
}

EmbeddingCache& LlmGateway::cache_for(const EmbeddingConfig& cfg) {
  std::lock_guard lock(mu_);
  auto key = cfg.cache_path ? cfg.cache_path->string() : std::string{};
  auto& slot = caches_[key];
  if (!slot) slot = std::make_unique<EmbeddingCache>(cfg.cache_path);
  return *slot;
}

void LlmGateway::check_dimension(const EmbeddingConfig& cfg, std::size_t dim) {
  std::lock_guard lock(mu_);
  if (cfg.dimensionality && *cfg.dimensionality != dim) {
    throw IntegrityError("embedding model " + cfg.model_id + " returned dimension " +
                         std::to_string(dim) + ", configured " +
                         std::to_string(*cfg.dimensionality));
  }
  auto [it, inserted] = dimensions_.try_emplace(cfg.model_id, dim);
  if (!inserted && it->second != dim) {
    throw IntegrityError("embedding model " + cfg.model_id + " changed dimension from " +
                         std::to_string(it->second) + " to " + std::to_string(dim));
  }
}

std::vector<Embedding> LlmGateway::embed(const std::vector<std::string>& texts,
                                         const EmbeddingConfig& cfg) {
  if (texts.empty()) throw ValidationError("nothing to embed");
  for (const auto& t : texts) {
    if (t.empty()) throw ValidationError("cannot embed an empty text");
  }

  std::vector<std::optional<Embedding>> out(texts.size());
  std::vector<std::string> missing;
  EmbeddingCache* cache = cfg.cache_enabled ? &cache_for(cfg) : nullptr;
  if (cache != nullptr) {
    std::map<std::string, bool> queued;
    for (std::size_t i = 0; i < texts.size(); ++i) {
      out[i] = cache->get(cfg.model_id, texts[i]);
      if (!out[i] && !queued[texts[i]]) {
        queued[texts[i]] = true;
        missing.push_back(texts[i]);
      }
    }
  } else {
    missing = texts;
  }

  if (!missing.empty()) {
    int attempts = 0;
    auto fresh = with_retries(
        cfg.retry,
        [&] {
          {
            std::lock_guard lock(mu_);
            ++stats_.provider_calls;
          }
          return embedder_.embed(missing, cfg);
        },
        attempts);
    if (fresh.size() != missing.size()) {
      throw IntegrityError("embedding provider returned " + std::to_string(fresh.size()) +
                           " vectors for " + std::to_string(missing.size()) + " texts");
    }
    {
      std::lock_guard lock(mu_);
      stats_.texts_embedded += missing.size();
    }
    std::map<std::string, Embedding> by_text;
    for (std::size_t i = 0; i < missing.size(); ++i) {
      check_dimension(cfg, fresh[i].size());
      auto unit = l2_normalize(std::move(fresh[i]));
      if (cache != nullptr) cache->put(cfg.model_id, missing[i], unit);
      by_text.emplace(missing[i], std::move(unit));
    }
    if (cache != nullptr) {
      for (std::size_t i = 0; i < texts.size(); ++i) {
        if (!out[i]) out[i] = by_text.at(texts[i]);
      }
    } else {
      for (std::size_t i = 0; i < texts.size(); ++i) out[i] = by_text.at(texts[i]);
    }
  }

  std::vector<Embedding> result;
  result.reserve(texts.size());
  for (auto& v : out) {
    check_dimension(cfg, v->size());
    result.push_back(std::move(*v));
  }
  std::lock_guard lock(mu_);
  ++stats_.embed_requests;
  return result;
}

GatewayStats LlmGateway::stats() const {
  std::lock_guard lock(mu_);
  return stats_;
}

}  // namespace csd
