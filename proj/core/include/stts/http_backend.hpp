#pragma once

#include <chrono>
#include <memory>
#include <string>

#include "stts/backend.hpp"

namespace stts {

struct HttpBackendConfig {
  // Full endpoint URL, e.g. http://localhost:8000/v1/completions
  std::string url = "http://127.0.0.1:8000/v1/completions";
  // Name of the environment variable holding the bearer credential.
  std::string api_key_env = "STTS_API_KEY";
  // Sent as "model" when non-empty; most OpenAI-compatible servers need it.
  std::string model;
  std::size_t max_concurrency = 8;
  int max_retries = 3;
  std::chrono::milliseconds retry_backoff{500};
  std::chrono::seconds connect_timeout{10};
  std::chrono::seconds read_timeout{600};
};

/// Client for a text-completion HTTP endpoint.
///
/// Wire format: POST {prompt, stop, max_tokens, temperature, seed} and read
/// {text, finish_reason, usage.completion_tokens}. An OpenAI-style
/// choices[0] object is accepted in place of the top-level text/finish_reason.
/// At most max_concurrency requests are outstanding at once across all
/// callers. Retryable failures are retried up to max_retries times with
/// exponential backoff.
class HttpBackend final : public Backend {
 public:
  explicit HttpBackend(HttpBackendConfig config);
  ~HttpBackend() override;

  HttpBackend(const HttpBackend&) = delete;
  HttpBackend& operator=(const HttpBackend&) = delete;

  CompletionResponse complete(const CompletionRequest& request) override;
  std::size_t max_concurrency() const override { return config_.max_concurrency; }

  const HttpBackendConfig& config() const { return config_; }

 private:
  CompletionResponse complete_once(const CompletionRequest& request);

  struct Impl;
  HttpBackendConfig config_;
  std::unique_ptr<Impl> impl_;
};

/// Maps a parsed response body onto CompletionResponse. Exposed for tests.
CompletionResponse parse_completion_body(const std::string& body, const CompletionRequest& request);

/// Serializes the wire body for a request. Exposed for tests.
std::string completion_body(const CompletionRequest& request, const std::string& model);

}  // namespace stts
