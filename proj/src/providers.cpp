#include "multilink/providers.hpp"

#include <cstdlib>
#include <fstream>
#include <sstream>

#include <httplib.h>

namespace multilink {

ScriptedChatProvider::ScriptedChatProvider(const Value& rules) {
  if (!rules.is_array()) throw Error("provider script must be a JSON array of rules");
  for (const auto& rule : rules) {
    if (!rule.is_object() || !rule.contains("response") || !rule["response"].is_string()) {
      throw Error("each provider script rule needs a string \"response\"");
    }
    rules_.push_back({rule.value("role", ""), rule.value("contains", ""),
                      rule["response"].get<std::string>()});
  }
}

ScriptedChatProvider ScriptedChatProvider::from_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open provider script " + path.string());
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return ScriptedChatProvider(json_read(buffer.str(), path.filename().string()));
}

std::string ScriptedChatProvider::complete(const ChatRequest& request) {
  for (const auto& rule : rules_) {
    if (!rule.role.empty() && rule.role != request.role) continue;
    if (!rule.contains.empty() && request.user.find(rule.contains) == std::string::npos) {
      continue;
    }
    return rule.response;
  }
  throw ProviderError(request.role, "no scripted response matches the prompt");
}

Value HttpChatProvider::build_request_body(const Options& options, const ChatRequest& request) {
  Value body = Value::object();
  body["model"] = options.model;
  body["temperature"] = request.temperature;
  Value messages = Value::array();
  Value system = Value::object();
  system["role"] = "system";
  system["content"] = request.system;
  Value user = Value::object();
  user["role"] = "user";
  user["content"] = request.user;
  messages.push_back(std::move(system));
  messages.push_back(std::move(user));
  body["messages"] = std::move(messages);
  return body;
}

std::string HttpChatProvider::extract_content(const Value& response_body) {
  if (!response_body.is_object() || !response_body.contains("choices") ||
      !response_body["choices"].is_array() || response_body["choices"].empty()) {
    throw Error("chat response carries no choices");
  }
  const Value& message = response_body["choices"][0].at("message");
  return message.at("content").get<std::string>();
}

std::string HttpChatProvider::complete(const ChatRequest& request) {
  const char* key = options_.api_key_env.empty() ? nullptr
                                                 : std::getenv(options_.api_key_env.c_str());
  httplib::Client client(options_.base_url);
  client.set_read_timeout(120, 0);
  httplib::Headers headers;
  if (key && *key) headers.emplace("Authorization", std::string("Bearer ") + key);
  auto result = client.Post(options_.path, headers,
                            build_request_body(options_, request).dump(), "application/json");
  if (!result) {
    throw ProviderError(request.role, "http request failed: " + httplib::to_string(result.error()));
  }
  if (result->status < 200 || result->status >= 300) {
    throw ProviderError(request.role, "http status " + std::to_string(result->status));
  }
  try {
    return extract_content(json_read(result->body));
  } catch (const Error& e) {
    throw ProviderError(request.role, e.what());
  }
}

}  // namespace multilink
