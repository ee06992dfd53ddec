// Eigen must come before httplib: <resolv.h> defines a _res macro.
#include "fcca/llm.hpp"

#define CPPHTTPLIB_OPENSSL_SUPPORT
#include <httplib.h>

#include <chrono>
#include <cstdlib>
#include <regex>
#include <thread>

namespace fcca::llm {
namespace {

struct Endpoint {
  std::string origin;  // scheme://host[:port]
  std::string path;
};

Endpoint split_url(const std::string& url) {
  static const std::regex re(R"(^(https?://[^/]+)(/.*)?$)");
  std::smatch m;
  if (!std::regex_match(url, m, re)) throw ConfigError("backend url must be http(s)://host[:port]/path, got '" + url + "'");
  return {m[1].str(), m[2].matched ? m[2].str() : "/"};
}

class HttpBackend : public Backend {
 public:
  HttpBackend(HttpConfig config, std::string token)
      : config_(std::move(config)), token_(std::move(token)), endpoint_(split_url(config_.url)) {}

  std::string complete(const std::vector<Message>& messages) override {
    nlohmann::json body;
    body["model"] = config_.model;
    body["temperature"] = config_.temperature;
    body["messages"] = messages_to_json(messages);
    const std::string payload = body.dump();

    std::string last_error;
    for (std::size_t attempt = 0; attempt <= config_.max_retries; ++attempt) {
      if (attempt > 0) std::this_thread::sleep_for(std::chrono::milliseconds(250) * (1 << std::min<std::size_t>(attempt, 5)));
      httplib::Client client(endpoint_.origin);
      const auto timeout = std::chrono::duration<double>(config_.timeout_s);
      const auto secs = static_cast<time_t>(config_.timeout_s);
      const auto usecs = static_cast<time_t>((timeout.count() - static_cast<double>(secs)) * 1e6);
      client.set_connection_timeout(secs, usecs);
      client.set_read_timeout(secs, usecs);
      client.set_write_timeout(secs, usecs);
      httplib::Headers headers;
      if (!token_.empty()) headers.emplace("Authorization", "Bearer " + token_);
      auto res = client.Post(endpoint_.path, headers, payload, "application/json");
      if (!res) {
        last_error = "transport failure: " + httplib::to_string(res.error());
        continue;
      }
      if (res->status == 429 || res->status >= 500) {
        last_error = "server returned HTTP " + std::to_string(res->status);
        continue;
      }
      if (res->status != 200)
        throw BackendError("server returned HTTP " + std::to_string(res->status) + ": " + res->body.substr(0, 200));
      try {
        const auto j = nlohmann::json::parse(res->body);
        return j.at("choices").at(0).at("message").at("content").get<std::string>();
      } catch (const nlohmann::json::exception& e) {
        throw BackendError(std::string("malformed completion response: ") + e.what());
      }
    }
    throw TransportError("backend unreachable after " + std::to_string(config_.max_retries + 1) + " attempts (" +
                         last_error + ")");
  }

 private:
  HttpConfig config_;
  std::string token_;
  Endpoint endpoint_;
};

}  // namespace

std::unique_ptr<Backend> make_http_backend(const HttpConfig& config) {
  if (!(config.timeout_s > 0.0)) throw ConfigError("backend: timeout_s must be positive");
  std::string token;
  if (!config.token_env.empty()) {
    const char* v = std::getenv(config.token_env.c_str());
    if (!v || !*v) throw ConfigError("backend: environment variable " + config.token_env + " is not set");
    token = v;
  }
  return std::make_unique<HttpBackend>(config, std::move(token));
}

}  // namespace fcca::llm
