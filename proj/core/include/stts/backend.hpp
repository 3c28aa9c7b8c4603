#pragma once

#include <cstdint>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace stts {

enum class StopReason : std::uint8_t { StopSequence, MaxTokens, EndOfSequence };

std::string_view to_string(StopReason r);

enum class RequestPhase : std::uint8_t { Think, Finalize };

/// Bookkeeping carried alongside a request. Not sent on the wire; the scripted
/// backend uses it to look up its script.
struct RequestContext {
  std::string instance_id;
  int attempt_index = 1;
  RequestPhase phase = RequestPhase::Think;
};

inline constexpr std::int64_t kDefaultMaxTokens = 8192;

struct CompletionRequest {
  std::string prompt;
  std::vector<std::string> stop_sequences;
  std::int64_t max_tokens = kDefaultMaxTokens;  // bounds one segment, not a whole episode
  double temperature = 0.0;
  std::optional<std::uint64_t> seed;
  RequestContext context;
};

struct CompletionResponse {
  std::string text;  // never includes the matched stop sequence
  StopReason stop_reason = StopReason::EndOfSequence;
  std::optional<std::string> matched_stop;
  std::int64_t token_count = 0;
};

class BackendError : public std::runtime_error {
 public:
  enum class Kind : std::uint8_t { Transport, Status, ContextOverflow };

  BackendError(Kind kind, const std::string& what, int http_status = 0)
      : std::runtime_error(what), kind_(kind), http_status_(http_status) {}

  Kind kind() const { return kind_; }
  int http_status() const { return http_status_; }

  /// Transport failures, 429 and 5xx responses are worth retrying.
  bool retryable() const {
    return kind_ == Kind::Transport || (kind_ == Kind::Status && (http_status_ == 429 || http_status_ >= 500));
  }

 private:
  Kind kind_;
  int http_status_;
};

/// Text-completion contract: prompt in, raw continuation out, halting at the
/// first stop sequence. Implementations must be safe to call concurrently.
class Backend {
 public:
  virtual ~Backend() = default;

  virtual CompletionResponse complete(const CompletionRequest& request) = 0;

  /// Upper bound on useful concurrent callers.
  virtual std::size_t max_concurrency() const { return std::numeric_limits<std::size_t>::max(); }
};

/// Continues a generation after splicing `injection` onto the text produced
/// so far. `base` supplies every request field except the prompt. Returns
/// only the new segment.
CompletionResponse continue_with(Backend& backend, std::string_view previous_prompt, std::string_view accumulated,
                                 std::string_view injection, CompletionRequest base);

}  // namespace stts
