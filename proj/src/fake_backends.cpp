#include "csd/fake_backends.hpp"

#include <algorithm>
#include <array>
#include <cctype>

#include "csd/errors.hpp"
#include "csd/util.hpp"

namespace csd {

namespace {

bool transient(std::optional<int> status) {
  return !status || *status == 429 || *status >= 500;
}

[[noreturn]] void raise_scripted(std::optional<int> status) {
  std::string what = status ? "scripted failure with HTTP status " + std::to_string(*status)
                            : std::string("scripted connection failure");
  throw TransportError(what, status, transient(status));
}

}  // namespace

void FakeChatBackend::set_echo(bool on) {
  std::lock_guard lock(mu_);
  echo_ = on;
}

void FakeChatBackend::set_output(std::string_view prompt, std::string output) {
  std::lock_guard lock(mu_);
  outputs_[fnv1a64(prompt)] = std::move(output);
}

void FakeChatBackend::set_responder(Responder responder) {
  std::lock_guard lock(mu_);
  responder_ = std::move(responder);
}

void FakeChatBackend::fail_next(int n, std::optional<int> status) {
  std::lock_guard lock(mu_);
  for (int i = 0; i < n; ++i) failures_.push_back(status);
}

void FakeChatBackend::fail_always(std::optional<int> status) {
  std::lock_guard lock(mu_);
  permanent_failure_ = status;
}

std::string FakeChatBackend::complete(const std::string& prompt, const LlmConfig&) {
  Responder responder;
  {
    std::lock_guard lock(mu_);
    ++calls_;
    prompts_.push_back(prompt);
    if (permanent_failure_) raise_scripted(*permanent_failure_);
    if (!failures_.empty()) {
      auto status = failures_.front();
      failures_.pop_front();
      raise_scripted(status);
    }
    if (auto it = outputs_.find(fnv1a64(prompt)); it != outputs_.end()) return it->second;
    responder = responder_;
  }
  if (responder) return responder(prompt);
  if (echo_) return prompt;
  throw TransportError("fake chat backend has no output for prompt " + hex64(fnv1a64(prompt)),
                       404, false);
}

std::size_t FakeChatBackend::calls() const {
  std::lock_guard lock(mu_);
  return calls_;
}

std::vector<std::string> FakeChatBackend::prompts() const {
  std::lock_guard lock(mu_);
  return prompts_;
}

void FakeEmbeddingProvider::set_vector(std::string text, Embedding vec) {
  std::lock_guard lock(mu_);
  scripted_[std::move(text)] = std::move(vec);
}

void FakeEmbeddingProvider::fail_next(int n, std::optional<int> status) {
  std::lock_guard lock(mu_);
  for (int i = 0; i < n; ++i) failures_.push_back(status);
}

Embedding FakeEmbeddingProvider::hashed_vector(std::string_view text) const {
  Embedding v(dimension_, 0.0);
  std::string token;
  bool any = false;
  auto flush = [&] {
    if (token.empty()) return;
    auto h = fnv1a64(token);
    v[h % dimension_] += (h >> 63) != 0 ? -1.0 : 1.0;
    any = true;
    token.clear();
  };
  for (unsigned char c : text) {
    if (std::isalnum(c)) {
      token.push_back(static_cast<char>(std::tolower(c)));
    } else {
      flush();
    }
  }
  flush();
  // Cancellation can zero the vector; fall back to a whole-text bucket.
  bool zero = true;
  for (double x : v) zero = zero && x == 0.0;
  if (!any || zero) v[fnv1a64(text) % dimension_] = 1.0;
  return v;
}

std::vector<Embedding> FakeEmbeddingProvider::embed(const std::vector<std::string>& texts,
                                                    const EmbeddingConfig&) {
  std::lock_guard lock(mu_);
  ++calls_;
  if (!failures_.empty()) {
    auto status = failures_.front();
    failures_.pop_front();
    raise_scripted(status);
  }
  texts_seen_ += texts.size();
  std::vector<Embedding> out;
  out.reserve(texts.size());
  for (const auto& t : texts) {
    auto it = scripted_.find(t);
    out.push_back(it != scripted_.end() ? it->second : hashed_vector(t));
  }
  return out;
}

std::size_t FakeEmbeddingProvider::calls() const {
  std::lock_guard lock(mu_);
  return calls_;
}

std::size_t FakeEmbeddingProvider::texts_seen() const {
  std::lock_guard lock(mu_);
  return texts_seen_;
}

// ---------------------------------------------------------------------------
// Fixture responder

namespace {

// Lines of the last "# <header>" block, up to the next blank line.
std::vector<std::string> last_section(std::string_view prompt, std::string_view header) {
  auto lines = split_lines(prompt);
  std::vector<std::string> section;
  for (std::size_t i = lines.size(); i-- > 0;) {
    if (lines[i] != header) continue;
    for (std::size_t j = i + 1; j < lines.size() && !trim_view(lines[j]).empty(); ++j) {
      section.push_back(lines[j]);
    }
    break;
  }
  return section;
}

bool ends_with(std::string_view s, std::string_view suffix) {
  s = trim_view(s);
  return s.size() >= suffix.size() && s.substr(s.size() - suffix.size()) == suffix;
}

constexpr std::array<std::string_view, 6> kOpeners = {
    "Oh no, that sounds really rough.",
    "Wow, I did not see that coming.",
    "That makes a lot of sense to me.",
    "I can see why that would stick with you.",
    "Honestly, I would feel the same way.",
    "That is a lot to deal with at once.",
};

constexpr std::array<std::string_view, 6> kClosers = {
    "How are you feeling about it now?",
    "What do you think you will do next?",
    "Has anything like this happened before?",
    "Is there anything I can do to help?",
    "Did you get a chance to talk it through?",
    "What was the hardest part for you?",
};

struct AspectCue {
  std::string_view cue;
  std::string_view aspect;
};

constexpr std::array<AspectCue, 17> kAspectCues = {{
    {"empath", "empathy"},       {"concern", "concern"},      {"support", "support"},
    {"specific", "specificity"}, {"detail", "detail"},        {"engag", "engagement"},
    {"natural", "naturalness"},  {"question", "curiosity"},   {"curio", "curiosity"},
    {"relevan", "relevance"},    {"help", "helpfulness"},     {"interest", "interest"},
    {"polite", "politeness"},    {"understand", "understanding"}, {"acknowledg", "acknowledge"},
    {"advice", "advice"},        {"comprehensive", "comprehensive"},
}};

std::string aspect_answer(std::string_view prompt) {
  std::string out;
  int item = 0;
  for (const auto& line : split_lines(prompt)) {
    auto dot = line.find(". ");
    if (dot == std::string::npos || dot == 0) continue;
    bool numbered = true;
    for (std::size_t i = 0; i < dot; ++i) numbered = numbered && std::isdigit(static_cast<unsigned char>(line[i]));
    if (!numbered || std::stoi(line.substr(0, dot)) != item + 1) continue;
    ++item;
    auto lower = to_lower(line.substr(dot + 2));
    // Aspects in the order the text raises them.
    std::vector<std::pair<std::size_t, std::string_view>> hits;
    for (const auto& cue : kAspectCues) {
      auto at = lower.find(cue.cue);
      if (at != std::string::npos) hits.emplace_back(at, cue.aspect);
    }
    std::stable_sort(hits.begin(), hits.end(),
                     [](const auto& x, const auto& y) { return x.first < y.first; });
    std::vector<std::string_view> found;
    for (const auto& [at, aspect] : hits) {
      if (std::find(found.begin(), found.end(), aspect) == found.end()) found.push_back(aspect);
    }
    if (found.empty()) found.push_back("engagement");
    if (!out.empty()) out += '\n';
    out += std::to_string(item) + ". ";
    for (std::size_t i = 0; i < found.size(); ++i) {
      if (i != 0) out += ", ";
      out += found[i];
    }
  }
  return out;
}

}  // namespace

FakeChatBackend::Responder fixture_chat_responder(
    std::map<std::string, CommonsenseType> scripted_selections) {
  return [scripted = std::move(scripted_selections)](std::string_view prompt) -> std::string {
    auto h = fnv1a64(prompt);
    if (prompt.find("Output a list of aspects for each explanation below.") != std::string_view::npos) {
      return aspect_answer(prompt);
    }
    auto points = last_section(prompt, "# Talking Points");
    if (ends_with(prompt, "Selection:")) {
      if (points.empty()) return "Selection:\n(none)";
      auto history = last_section(prompt, "# Dialogue History");
      std::string hist;
      for (const auto& l : history) {
        if (!hist.empty()) hist += '\n';
        hist += l;
      }
      // Talking points are listed in canonical type order.
      if (auto it = scripted.find(hist); it != scripted.end() && points.size() == kNumCommonsenseTypes) {
        return "Selection:\n" + points[type_index(it->second)];
      }
      return "Selection:\n" + points[fnv1a64(hist) % points.size()];
    }
    std::string response(kOpeners[h % kOpeners.size()]);
    response += ' ';
    response += kClosers[(h >> 8) % kClosers.size()];
    return "Listener's Response: " + response;
  };
}

}  // namespace csd
