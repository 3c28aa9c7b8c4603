#pragma once

#include <filesystem>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "stts/backend.hpp"

namespace stts {

/// What the scripted model "would generate" at one attempt of one instance.
///
/// `text` is the whole continuation from the request point: the think phase
/// returns it up to the first stop sequence, the finalize phase returns what
/// follows the think-close marker (or `final_text` when set). Tokens are
/// whitespace-separated words unless a count override is given.
struct ScriptEntry {
  std::string text;
  std::optional<std::string> final_text;
  std::optional<std::int64_t> think_tokens;
  std::optional<std::int64_t> final_tokens;
  StopReason natural_end = StopReason::EndOfSequence;
  // Fails every think-phase request for this key with this error kind.
  std::optional<BackendError::Kind> error;
};

/// Deterministic mock keyed by (instance_id, attempt_index). Identical
/// requests always produce identical responses. Every request is kept in a
/// transcript for inspection.
class ScriptedBackend final : public Backend {
 public:
  using Key = std::pair<std::string, int>;

  explicit ScriptedBackend(std::map<Key, ScriptEntry> script = {}, std::string think_close = "</think>");

  /// JSONL lines: {instance_id, attempt_index, text, [final, think_tokens,
  /// final_tokens, stop_reason, error]}.
  static std::map<Key, ScriptEntry> load_script(const std::filesystem::path& path);

  void set(const std::string& instance_id, int attempt_index, ScriptEntry entry);

  CompletionResponse complete(const CompletionRequest& request) override;

  std::vector<CompletionRequest> transcript() const;
  void clear_transcript();

 private:
  std::map<Key, ScriptEntry> script_;
  std::string think_close_;
  mutable std::mutex mutex_;
  std::vector<CompletionRequest> transcript_;
};

/// Applies stop sequences and a token cap to `text` the way a real server
/// would, counting whitespace-separated words as tokens.
CompletionResponse simulate_generation(std::string_view text, const CompletionRequest& request,
                                       StopReason natural_end, std::optional<std::int64_t> token_override);

std::size_t count_whitespace_tokens(std::string_view text);

}  // namespace stts
