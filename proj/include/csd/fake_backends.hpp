#pragma once

// Deterministic in-process stand-ins for the chat and embedding providers.
// Every scripted acceptance run and the CLI's fixture mode use these.

#include <cstdint>
#include <deque>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "csd/llm_gateway.hpp"

namespace csd {

// Resolution order per call: pending scripted failure, exact prompt table
// (keyed by FNV-1a of the prompt), responder, echo.
class FakeChatBackend : public ChatBackend {
 public:
  using Responder = std::function<std::string(std::string_view prompt)>;

  FakeChatBackend() = default;
  explicit FakeChatBackend(Responder responder) : responder_(std::move(responder)) {}

  // Return the prompt itself when nothing else answers.
  void set_echo(bool on);

  void set_output(std::string_view prompt, std::string output);
  void set_responder(Responder responder);
  // The next `n` calls fail. A status of 429/5xx or no status is transient.
  void fail_next(int n, std::optional<int> status = 503);
  void fail_always(std::optional<int> status);

  std::string complete(const std::string& prompt, const LlmConfig& cfg) override;

  std::size_t calls() const;
  std::vector<std::string> prompts() const;

 private:
  mutable std::mutex mu_;
  std::map<std::uint64_t, std::string> outputs_;
  Responder responder_;
  bool echo_ = false;
  std::deque<std::optional<int>> failures_;
  std::optional<std::optional<int>> permanent_failure_;
  std::size_t calls_ = 0;
  std::vector<std::string> prompts_;
};

// Scripted vectors for known texts; everything else gets a hashed
// bag-of-words vector so lexically similar texts land close together.
class FakeEmbeddingProvider : public EmbeddingProvider {
 public:
  explicit FakeEmbeddingProvider(std::size_t dimension = 64) : dimension_(dimension) {}

  void set_vector(std::string text, Embedding vec);
  void fail_next(int n, std::optional<int> status = 503);

  std::vector<Embedding> embed(const std::vector<std::string>& texts,
                               const EmbeddingConfig& cfg) override;

  Embedding hashed_vector(std::string_view text) const;

  std::size_t calls() const;
  std::size_t texts_seen() const;

 private:
  std::size_t dimension_;
  mutable std::mutex mu_;
  std::map<std::string, Embedding> scripted_;
  std::deque<std::optional<int>> failures_;
  std::size_t calls_ = 0;
  std::size_t texts_seen_ = 0;
};

// Responder that plays the language model in fixture mode. It recognises the
// selection, response and aspect prompts by their closing lines and answers
// each deterministically from the prompt bytes. `scripted_selections` maps a
// rendered dialogue history to the type of talking point to pick for it.
FakeChatBackend::Responder fixture_chat_responder(
    std::map<std::string, CommonsenseType> scripted_selections = {});

}  // namespace csd
