#include "stts/http_backend.hpp"

#include <algorithm>
#include <cctype>
#include <cstdlib>
#include <semaphore>
#include <thread>

#include <httplib.h>
#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

namespace stts {

using nlohmann::json;

namespace {

struct ParsedUrl {
  std::string origin;  // scheme://host[:port]
  std::string path;
};

ParsedUrl parse_url(const std::string& url) {
  const auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos) throw std::invalid_argument("backend url lacks a scheme: " + url);
  const auto path_begin = url.find('/', scheme_end + 3);
  if (path_begin == std::string::npos) return {url, "/"};
  return {url.substr(0, path_begin), url.substr(path_begin)};
}

std::string lowercase(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return s;
}

bool looks_like_context_overflow(int status, const std::string& body) {
  if (status != 400 && status != 413 && status != 422) return false;
  const auto b = lowercase(body);
  if (b.find("context_length_exceeded") != std::string::npos) return true;
  return b.find("context") != std::string::npos &&
         (b.find("length") != std::string::npos || b.find("too long") != std::string::npos ||
          b.find("exceed") != std::string::npos);
}

}  // namespace

struct HttpBackend::Impl {
  explicit Impl(std::size_t permits) : limiter(static_cast<std::ptrdiff_t>(permits)) {}

  std::counting_semaphore<> limiter;
  ParsedUrl url;
  std::string api_key;
};

HttpBackend::HttpBackend(HttpBackendConfig config) : config_(std::move(config)) {
  if (config_.max_concurrency == 0) throw std::invalid_argument("backend max_concurrency must be >= 1");
  if (config_.max_retries < 0) throw std::invalid_argument("backend max_retries must be >= 0");
  impl_ = std::make_unique<Impl>(config_.max_concurrency);
  impl_->url = parse_url(config_.url);
  if (!config_.api_key_env.empty()) {
    if (const char* key = std::getenv(config_.api_key_env.c_str())) impl_->api_key = key;
  }
}

HttpBackend::~HttpBackend() = default;

std::string completion_body(const CompletionRequest& request, const std::string& model) {
  json body{{"prompt", request.prompt},
            {"stop", request.stop_sequences},
            {"max_tokens", request.max_tokens},
            {"temperature", request.temperature}};
  body["seed"] = request.seed ? json(*request.seed) : json(nullptr);
  if (!model.empty()) body["model"] = model;
  return body.dump();
}

CompletionResponse parse_completion_body(const std::string& body, const CompletionRequest& request) {
  json j;
  try {
    j = json::parse(body);
  } catch (const json::exception& e) {
    throw BackendError(BackendError::Kind::Status, std::string("malformed completion response: ") + e.what(), 200);
  }
  const json* choice = &j;
  if (!j.contains("text") && j.contains("choices") && j["choices"].is_array() && !j["choices"].empty()) {
    choice = &j["choices"][0];
  }
  if (!choice->contains("text") || !(*choice)["text"].is_string()) {
    throw BackendError(BackendError::Kind::Status, "completion response lacks a text field", 200);
  }

  CompletionResponse out;
  out.text = (*choice)["text"].get<std::string>();
  const auto finish = choice->value("finish_reason", std::string{});
  // vLLM reports the matched stop string as stop_reason; others use matched_stop.
  std::optional<std::string> matched;
  for (const char* key : {"stop_reason", "matched_stop"}) {
    if (choice->contains(key) && (*choice)[key].is_string()) matched = (*choice)[key].get<std::string>();
  }
  if (finish == "length" || finish == "max_tokens") {
    out.stop_reason = StopReason::MaxTokens;
  } else if (finish == "stop_sequence" || (finish == "stop" && matched)) {
    out.stop_reason = StopReason::StopSequence;
    out.matched_stop = matched;
  } else if (finish == "stop" && request.stop_sequences.size() == 1) {
    // Servers that do not say which stop fired are unambiguous with one stop.
    out.stop_reason = StopReason::StopSequence;
    out.matched_stop = request.stop_sequences.front();
  } else {
    out.stop_reason = StopReason::EndOfSequence;
  }
  if (out.stop_reason == StopReason::StopSequence && !out.matched_stop && !request.stop_sequences.empty()) {
    out.matched_stop = request.stop_sequences.front();
  }
  // Some servers echo the stop string; the contract excludes it.
  if (out.matched_stop && out.text.ends_with(*out.matched_stop)) {
    out.text.resize(out.text.size() - out.matched_stop->size());
  }
  if (j.contains("usage") && j["usage"].contains("completion_tokens")) {
    out.token_count = j["usage"]["completion_tokens"].get<std::int64_t>();
  }
  return out;
}

CompletionResponse HttpBackend::complete_once(const CompletionRequest& request) {
  httplib::Client client(impl_->url.origin);
  client.set_connection_timeout(config_.connect_timeout);
  client.set_read_timeout(config_.read_timeout);
  client.set_write_timeout(config_.read_timeout);
  httplib::Headers headers;
  if (!impl_->api_key.empty()) headers.emplace("Authorization", "Bearer " + impl_->api_key);

  auto result = client.Post(impl_->url.path, headers, completion_body(request, config_.model), "application/json");
  if (!result) {
    throw BackendError(BackendError::Kind::Transport,
                       "request to " + config_.url + " failed: " + httplib::to_string(result.error()));
  }
  const int status = result->status;
  if (status != 200) {
    if (looks_like_context_overflow(status, result->body)) {
      throw BackendError(BackendError::Kind::ContextOverflow, "context length exceeded: " + result->body, status);
    }
    throw BackendError(BackendError::Kind::Status, "backend returned HTTP " + std::to_string(status) + ": " + result->body,
                       status);
  }
  return parse_completion_body(result->body, request);
}

CompletionResponse HttpBackend::complete(const CompletionRequest& request) {
  if (request.max_tokens <= 0) throw std::invalid_argument("max_tokens must be > 0");
  if (request.temperature < 0) throw std::invalid_argument("temperature must be >= 0");

  for (int attempt = 0;; ++attempt) {
    try {
      impl_->limiter.acquire();
      struct Release {
        std::counting_semaphore<>& s;
        ~Release() { s.release(); }
      } release{impl_->limiter};
      return complete_once(request);
    } catch (const BackendError& e) {
      if (!e.retryable() || attempt >= config_.max_retries) throw;
      const auto delay = config_.retry_backoff * (1LL << std::min(attempt, 10));
      spdlog::warn("completion request failed ({}); retry {}/{} in {} ms", e.what(), attempt + 1,
                   config_.max_retries, delay.count());
      std::this_thread::sleep_for(delay);
    }
  }
}

}  // namespace stts
