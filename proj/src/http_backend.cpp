#include <cstdlib>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "elucid/cote.hpp"

namespace elucid::cote {

namespace {

struct Endpoint {
  std::string origin;  // scheme://host[:port]
  std::string path;    // prefix + /chat/completions
};

Endpoint split_url(const std::string& base) {
  const auto scheme_end = base.find("://");
  if (scheme_end == std::string::npos) throw RequestError("base URL lacks a scheme: " + base);
  const auto path_start = base.find('/', scheme_end + 3);
  Endpoint e;
  e.origin = base.substr(0, path_start);
  std::string prefix = path_start == std::string::npos ? "" : base.substr(path_start);
  while (!prefix.empty() && prefix.back() == '/') prefix.pop_back();
  e.path = prefix + "/chat/completions";
  return e;
}

bool retryable_status(int status) { return status == 408 || status == 429 || status >= 500; }

}  // namespace

std::string HttpChatBackend::request_body(const Prompt& prompt, const ChatEndpointConfig& cfg) {
  nlohmann::json body = {{"model", cfg.model},
                         {"messages", nlohmann::json::array({{{"role", "user"}, {"content", prompt.text}}})},
                         {"temperature", cfg.temperature},
                         {"max_tokens", cfg.max_tokens}};
  return body.dump();
}

ChatReply HttpChatBackend::parse_response(const std::string& body) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(body);
  } catch (const nlohmann::json::exception& e) {
    throw RequestError(std::string("response is not JSON: ") + e.what());
  }
  ChatReply r;
  try {
    const auto& choice = j.at("choices").at(0);
    const auto& content = choice.at("message").at("content");
    r.content = content.is_null() ? "" : content.get<std::string>();
    if (choice.contains("finish_reason") && choice["finish_reason"].is_string())
      r.finish_reason = choice["finish_reason"].get<std::string>();
    if (j.contains("usage") && j["usage"].contains("completion_tokens"))
      r.completion_tokens = j["usage"]["completion_tokens"].get<std::size_t>();
    if (j.contains("model") && j["model"].is_string()) r.model = j["model"].get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    throw RequestError(std::string("unexpected response shape: ") + e.what());
  }
  return r;
}

ChatReply HttpChatBackend::complete(const Prompt& prompt, const ChatEndpointConfig& cfg) {
  const Endpoint ep = split_url(cfg.base_url);
  httplib::Client client(ep.origin);
  const auto secs = std::chrono::duration_cast<std::chrono::seconds>(cfg.timeout).count();
  const auto usecs = std::chrono::duration_cast<std::chrono::microseconds>(cfg.timeout).count() % 1000000;
  client.set_connection_timeout(secs, usecs);
  client.set_read_timeout(secs, usecs);
  client.set_write_timeout(secs, usecs);

  httplib::Headers headers;
  std::string key = cfg.api_key;
  if (key.empty()) {
    if (const char* env = std::getenv("COTE_API_KEY")) key = env;
  }
  if (!key.empty()) headers.emplace("Authorization", "Bearer " + key);

  auto res = client.Post(ep.path, headers, request_body(prompt, cfg), "application/json");
  if (!res) throw TransientError("request to " + cfg.base_url + " failed: " + httplib::to_string(res.error()));
  if (retryable_status(res->status)) throw TransientError("endpoint returned HTTP " + std::to_string(res->status));
  if (res->status < 200 || res->status >= 300)
    throw RequestError("endpoint returned HTTP " + std::to_string(res->status) + ": " + res->body.substr(0, 200));
  return parse_response(res->body);
}

}  // namespace elucid::cote
