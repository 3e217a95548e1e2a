#pragma once

#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "multilink/errors.hpp"
#include "multilink/value.hpp"

namespace multilink {

struct ChatRequest {
  std::string role;  // "translator", "sketch", "linker", "generator", "augmenter"
  std::string system;
  std::string user;
  double temperature = 0.0;
};

struct ProviderError : Error {
  std::string role;
  ProviderError(std::string role_, const std::string& message)
      : Error("provider \"" + role_ + "\": " + message), role(std::move(role_)) {}
};

/// Chat-completion contract every model sits behind. Implementations must be
/// safe to share across concurrent callers.
class ChatProvider {
 public:
  virtual ~ChatProvider() = default;
  virtual std::string complete(const ChatRequest& request) = 0;
};

/// Wraps a pure function; the standard mock for tests.
class FunctionChatProvider : public ChatProvider {
 public:
  explicit FunctionChatProvider(std::function<std::string(const ChatRequest&)> fn)
      : fn_(std::move(fn)) {}
  std::string complete(const ChatRequest& request) override { return fn_(request); }

 private:
  std::function<std::string(const ChatRequest&)> fn_;
};

/// Deterministic offline provider driven by a rule file:
///   [{"role": "generator", "contains": "...", "response": "..."}, ...]
/// The first rule whose role matches (absent role = any) and whose
/// "contains" text appears in the user prompt (absent = always) answers.
/// No matching rule raises ProviderError.
class ScriptedChatProvider : public ChatProvider {
 public:
  explicit ScriptedChatProvider(const Value& rules);
  static ScriptedChatProvider from_file(const std::filesystem::path& path);
  std::string complete(const ChatRequest& request) override;

 private:
  struct Rule {
    std::string role;      // empty = any
    std::string contains;  // empty = always
    std::string response;
  };
  std::vector<Rule> rules_;
};

/// OpenAI-compatible chat endpoint. The API key is read from the named
/// environment variable; it never appears in config files.
class HttpChatProvider : public ChatProvider {
 public:
  struct Options {
    std::string base_url;                            // e.g. https://api.example.com
    std::string path = "/v1/chat/completions";
    std::string model;
    std::string api_key_env = "MULTILINK_API_KEY";
  };
  explicit HttpChatProvider(Options options) : options_(std::move(options)) {}
  std::string complete(const ChatRequest& request) override;

  static Value build_request_body(const Options& options, const ChatRequest& request);
  static std::string extract_content(const Value& response_body);

 private:
  Options options_;
};

}  // namespace multilink
