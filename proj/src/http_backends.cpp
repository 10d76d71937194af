#include "csd/http_backends.hpp"

#include <algorithm>
#include <cstdlib>
#include <thread>

#include "csd/errors.hpp"
#include "httplib.h"
#include "json.hpp"

namespace csd {

using json = nlohmann::json;

Url split_url(std::string_view url) {
  auto scheme = url.find("://");
  if (scheme == std::string_view::npos || scheme == 0) {
    throw ValidationError("endpoint must be an absolute URL: " + std::string(url));
  }
  auto slash = url.find('/', scheme + 3);
  if (slash == scheme + 3) throw ValidationError("endpoint has no host: " + std::string(url));
  if (slash == std::string_view::npos) return {std::string(url), "/"};
  return {std::string(url.substr(0, slash)), std::string(url.substr(slash))};
}

bool retryable_status(int status) { return status == 429 || status >= 500; }

namespace {

std::vector<std::pair<std::string, std::string>> auth_headers(const std::string& env) {
  std::vector<std::pair<std::string, std::string>> headers;
  if (env.empty()) return headers;
  if (const char* key = std::getenv(env.c_str()); key != nullptr && *key != '\0') {
    headers.emplace_back("Authorization", std::string("Bearer ") + key);
  }
  return headers;
}

json parse_body(const std::string& body) {
  try {
    return json::parse(body);
  } catch (const json::parse_error&) {
    throw ParseError("provider returned a non-JSON body", body);
  }
}

}  // namespace

std::string post_json(const std::string& url, const std::string& body,
                      const std::vector<std::pair<std::string, std::string>>& headers,
                      std::chrono::milliseconds timeout) {
  auto [origin, path] = split_url(url);
#ifndef CPPHTTPLIB_OPENSSL_SUPPORT
  if (origin.rfind("https://", 0) == 0) {
    throw TransportError("built without TLS support; cannot reach " + origin, std::nullopt, false);
  }
#endif
  httplib::Client client(origin);
  auto secs = timeout.count() / 1000;
  auto usecs = (timeout.count() % 1000) * 1000;
  client.set_connection_timeout(secs, usecs);
  client.set_read_timeout(secs, usecs);
  client.set_write_timeout(secs, usecs);
  httplib::Headers h;
  for (const auto& [k, v] : headers) h.emplace(k, v);
  auto res = client.Post(path, h, body, "application/json");
  if (!res) {
    throw TransportError("request to " + url + " failed: " + httplib::to_string(res.error()),
                         std::nullopt, true);
  }
  if (res->status < 200 || res->status >= 300) {
    throw TransportError("HTTP " + std::to_string(res->status) + " from " + url + ": " +
                             res->body.substr(0, 200),
                         res->status, retryable_status(res->status));
  }
  return res->body;
}

std::string HttpChatBackend::request_body(const std::string& prompt, const LlmConfig& cfg) {
  json body = {{"model", cfg.model_id},
               {"messages", json::array({{{"role", "user"}, {"content", prompt}}})},
               {"temperature", cfg.temperature},
               {"max_tokens", cfg.max_output_tokens}};
  return body.dump();
}

std::string HttpChatBackend::parse_reply(const std::string& body) {
  auto j = parse_body(body);
  try {
    return j.at("choices").at(0).at("message").at("content").get<std::string>();
  } catch (const json::exception&) {
    throw ParseError("chat reply has no choices[0].message.content", body);
  }
}

std::string HttpChatBackend::complete(const std::string& prompt, const LlmConfig& cfg) {
  auto reply = post_json(cfg.endpoint, request_body(prompt, cfg), auth_headers(api_key_env_), cfg.timeout);
  return parse_reply(reply);
}

std::vector<Embedding> HttpEmbeddingProvider::parse_reply(const std::string& body,
                                                          std::size_t expected) {
  auto j = parse_body(body);
  std::vector<std::pair<std::size_t, Embedding>> rows;
  try {
    const auto& data = j.at("data");
    for (std::size_t i = 0; i < data.size(); ++i) {
      rows.emplace_back(data[i].value("index", i), data[i].at("embedding").get<Embedding>());
    }
  } catch (const json::exception&) {
    throw ParseError("embedding reply has no data[].embedding", body);
  }
  if (rows.size() != expected) {
    throw IntegrityError("embedding reply has " + std::to_string(rows.size()) + " vectors for " +
                         std::to_string(expected) + " inputs");
  }
  std::sort(rows.begin(), rows.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
  std::vector<Embedding> out;
  for (auto& r : rows) out.push_back(std::move(r.second));
  return out;
}

std::vector<Embedding> HttpEmbeddingProvider::embed(const std::vector<std::string>& texts,
                                                    const EmbeddingConfig& cfg) {
  json body = {{"model", cfg.model_id}, {"input", texts}};
  auto reply = post_json(cfg.endpoint, body.dump(), auth_headers(api_key_env_), cfg.timeout);
  return parse_reply(reply, texts.size());
}

HttpGenerationBackend::HttpGenerationBackend(std::string endpoint, RetryPolicy retry,
                                             std::chrono::milliseconds timeout)
    : endpoint_(std::move(endpoint)), retry_(retry), timeout_(timeout) {
  split_url(endpoint_);
}

std::vector<std::string> HttpGenerationBackend::generate(const std::string& rendered_context,
                                                         CommonsenseType type, std::size_t n) {
  json body = {{"context", rendered_context}, {"type", std::string(type_name(type))}, {"n", n}};
  for (int attempt = 1;; ++attempt) {
    try {
      auto reply = parse_body(post_json(endpoint_, body.dump(), {}, timeout_));
      return reply.at("candidates").get<std::vector<std::string>>();
    } catch (const TransportError& e) {
      if (!e.retryable() || attempt >= retry_.max_attempts) throw;
    } catch (const json::exception&) {
      throw ParseError("generation reply has no candidates list");
    }
    std::this_thread::sleep_for(retry_.delay_after(attempt));
  }
}

}  // namespace csd
