#include <chrono>
#include <cstdlib>
#include <thread>

#include "httplib.h"
#include "json.hpp"
#include "milpevo/evolve.hpp"

namespace milpevo {

namespace {

std::string env_or(const char* name, const std::string& fallback, bool required) {
  const char* v = std::getenv(name);
  if (v && *v) return v;
  if (required) throw Error("config", std::string("environment variable ") + name + " is not set");
  return fallback;
}

}  // namespace

HttpLlmConfig HttpLlmConfig::from_env() {
  HttpLlmConfig c;
  c.endpoint = env_or("LLM_ENDPOINT", "", true);
  c.api_key = env_or("LLM_API_KEY", "", true);
  c.model = env_or("LLM_MODEL", "", true);
  try {
    c.timeout_seconds = std::stod(env_or("LLM_TIMEOUT", "120", false));
    c.retries = std::stoi(env_or("LLM_RETRIES", "3", false));
  } catch (const std::exception&) {
    throw Error("config", "LLM_TIMEOUT and LLM_RETRIES must be numbers");
  }
  return c;
}

HttpLlm::HttpLlm(HttpLlmConfig config) : config_(std::move(config)) {
  const auto scheme = config_.endpoint.find("://");
  if (scheme == std::string::npos) throw Error("config", "endpoint must be an http(s) URL");
#ifndef CPPHTTPLIB_OPENSSL_SUPPORT
  if (config_.endpoint.rfind("https://", 0) == 0) {
    throw Error("config", "this build has no TLS support; use an http:// endpoint");
  }
#endif
}

std::string HttpLlm::complete(const std::string& prompt) {
  const auto scheme_end = config_.endpoint.find("://") + 3;
  const auto path_at = config_.endpoint.find('/', scheme_end);
  const std::string host = config_.endpoint.substr(0, path_at);
  const std::string path =
      path_at == std::string::npos ? "/" : config_.endpoint.substr(path_at);

  nlohmann::json body = {
      {"model", config_.model},
      {"messages", {{{"role", "user"}, {"content", prompt}}}},
      {"temperature", 0},
  };
  const std::string payload = body.dump();
  std::string last_error;
  for (int attempt = 0; attempt <= config_.retries; ++attempt) {
    if (attempt > 0) std::this_thread::sleep_for(std::chrono::milliseconds(500 << (attempt - 1)));
    httplib::Client client(host);
    const auto timeout = std::chrono::duration<double>(config_.timeout_seconds);
    client.set_read_timeout(std::chrono::duration_cast<std::chrono::microseconds>(timeout));
    client.set_connection_timeout(std::chrono::seconds(10));
    client.set_bearer_token_auth(config_.api_key);
    auto res = client.Post(path, payload, "application/json");
    if (!res) {
      last_error = httplib::to_string(res.error());
      continue;
    }
    if (res->status != 200) {
      last_error = "HTTP " + std::to_string(res->status);
      if (res->status < 500 && res->status != 429) break;
      continue;
    }
    try {
      const auto j = nlohmann::json::parse(res->body);
      return j.at("choices").at(0).at("message").at("content").get<std::string>();
    } catch (const std::exception& e) {
      last_error = std::string("malformed response: ") + e.what();
    }
  }
  throw Error("llm", last_error);
}

}  // namespace milpevo
