#pragma once

// Optional client for an OpenAI-compatible chat/completions endpoint, used
// to score prompts against an externally hosted model. Config-gated; nothing
// else in the library depends on it.

#include <atomic>
#include <chrono>
#include <cstdlib>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include <httplib.h>
#include <json.hpp>

#include "graphre/errors.hpp"

namespace graphre {

struct EndpointConfig {
  std::string base_url;        // e.g. http://localhost:8000
  std::string model;
  std::string api_key_env = "GRAPHRE_API_KEY";
  int max_concurrent = 4;
  int timeout_seconds = 60;
  int max_retries = 3;         // on HTTP 429
  double temperature = 0.0;

  void validate() const {
    if (base_url.empty() || model.empty())
      throw config_error("endpoint: base_url and model are required");
    if (max_concurrent < 1 || timeout_seconds < 1 || max_retries < 0)
      throw config_error("endpoint: invalid concurrency/timeout settings");
  }
};

struct CompletionResult {
  bool ok = false;
  std::string text;
  std::string error;
};

class EndpointClient {
 public:
  explicit EndpointClient(EndpointConfig cfg) : cfg_(std::move(cfg)) {
    cfg_.validate();
    if (const char* key = std::getenv(cfg_.api_key_env.c_str())) api_key_ = key;
  }

  CompletionResult complete(const std::string& prompt) const {
    httplib::Client client(cfg_.base_url);
    client.set_connection_timeout(cfg_.timeout_seconds);
    client.set_read_timeout(cfg_.timeout_seconds);
    nlohmann::json body;
    body["model"] = cfg_.model;
    body["temperature"] = cfg_.temperature;
    body["messages"] = {{{"role", "user"}, {"content", prompt}}};
    httplib::Headers headers;
    if (!api_key_.empty())
      headers.emplace("Authorization", "Bearer " + api_key_);

    CompletionResult out;
    for (int attempt = 0; attempt <= cfg_.max_retries; ++attempt) {
      auto res = client.Post("/v1/chat/completions", headers, body.dump(),
                             "application/json");
      if (!res) {
        out.error = "transport error: " + httplib::to_string(res.error());
        continue;
      }
      if (res->status == 429) {
        out.error = "rate limited";
        std::this_thread::sleep_for(std::chrono::milliseconds(250 * (attempt + 1)));
        continue;
      }
      if (res->status != 200) {
        out.error = "http " + std::to_string(res->status) + ": " + res->body;
        return out;
      }
      nlohmann::json j = nlohmann::json::parse(res->body, nullptr, false);
      if (j.is_discarded() || !j.contains("choices") || j["choices"].empty()) {
        out.error = "malformed response body";
        return out;
      }
      const auto& choice = j["choices"][0];
      if (choice.contains("message"))
        out.text = choice["message"].value("content", "");
      else
        out.text = choice.value("text", "");
      out.ok = true;
      out.error.clear();
      return out;
    }
    return out;
  }

  // bounded-concurrency fan-out; results come back in input order
  std::vector<CompletionResult> complete_all(
      const std::vector<std::string>& prompts) const {
    std::vector<CompletionResult> results(prompts.size());
    std::atomic<size_t> next{0};
    const int workers =
        std::min<int>(cfg_.max_concurrent, static_cast<int>(prompts.size()));
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (int w = 0; w < workers; ++w) {
      pool.emplace_back([&]() {
        while (true) {
          const size_t i = next.fetch_add(1);
          if (i >= prompts.size()) return;
          results[i] = complete(prompts[i]);
        }
      });
    }
    for (auto& t : pool) t.join();
    return results;
  }

 private:
  EndpointConfig cfg_;
  std::string api_key_;
};

}  // namespace graphre
