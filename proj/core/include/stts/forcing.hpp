#pragma once

#include <optional>
#include <string>
#include <vector>

#include "stts/backend.hpp"
#include "stts/model.hpp"
#include "stts/trace.hpp"

namespace stts {

struct ForcingConfig {
  int budget = 4;                  // attempts per instance; attempt 1 is un-forced
  std::string injection = "Wait,";  // replaces the think-close marker between attempts
  MarkerConfig markers;
  std::string finalize_suffix;  // appended after the think-close marker when asking for the answer
  std::int64_t max_tokens = kDefaultMaxTokens;
  std::int64_t finalize_max_tokens = kDefaultMaxTokens;
  double temperature = 0.0;
  std::optional<std::uint64_t> seed;

  void validate() const;

  /// The exact string spliced onto the wire: the injection with a single
  /// leading space unless it is empty or already starts with whitespace.
  std::string wire_injection() const;
};

struct FinalizedAnswer {
  std::string final_text;
  Verdict verdict = Verdict::Unparseable;
  std::int64_t token_count = 0;
};

/// Asks the backend for the answer that follows a closed think block.
/// `prompt_with_think` is the judge prompt plus all think text so far, without
/// the closing marker.
FinalizedAnswer finalize_attempt(const std::string& prompt_with_think, Backend& backend, const ForcingConfig& cfg,
                                 const RequestContext& context);

/// One budget-forced episode, advanced one attempt at a time.
///
/// Attempt 1 generates until the think-close marker and snapshots the
/// verdict. Every later attempt splices the injection where the marker was,
/// generates until the next marker and snapshots again. Snapshots are
/// finalized and then discarded, so the think text of attempt k is a prefix
/// of attempt k+1's.
class Episode {
 public:
  Episode(const PreferenceInstance& instance, const JudgePrompt& prompt, Backend& backend, const ForcingConfig& cfg,
          const ReflectiveLexicon& lexicon);

  /// Runs the next attempt. A context overflow marks this and every later
  /// attempt Unparseable without further requests; any other BackendError
  /// propagates and leaves the episode unchanged.
  AttemptRecord step();

  int attempts_done() const { return attempts_done_; }
  bool overflowed() const { return overflowed_; }

  /// Think text including injections, without think markers.
  std::string think_text() const;

 private:
  AttemptRecord overflow_record(int attempt_index) const;
  CompletionRequest think_request(int attempt_index) const;

  const PreferenceInstance& instance_;
  const JudgePrompt& prompt_;
  Backend& backend_;
  const ForcingConfig& cfg_;
  const ReflectiveLexicon& lexicon_;

  int attempts_done_ = 0;
  bool overflowed_ = false;
  std::string accumulated_;  // raw generated text, exactly as sent back on the wire
  std::vector<std::string> segments_;
  std::int64_t think_tokens_ = 0;
  TraceStatus last_status_ = TraceStatus::Closed;
};

struct EpisodeResult {
  std::vector<AttemptRecord> records;
  // Set when a non-overflow backend failure ended the episode early.
  std::optional<std::string> error;

  bool complete(int budget) const { return !error && static_cast<int>(records.size()) == budget; }
};

EpisodeResult run_stts(const PreferenceInstance& instance, const JudgePrompt& prompt, Backend& backend,
                       const ForcingConfig& cfg, const ReflectiveLexicon& lexicon = ReflectiveLexicon::standard());

}  // namespace stts
