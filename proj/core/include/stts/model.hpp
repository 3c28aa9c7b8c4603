#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

namespace stts {

/// Raised when a value violates a domain-type invariant at construction or
/// deserialization time.
class InvariantError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Ground-truth preference. The numeric encoding (A = 0, B = 1) is the one
/// used everywhere a binary label is exchanged.
enum class Preference : std::uint8_t { A = 0, B = 1 };

std::optional<Preference> preference_from_int(std::int64_t v);
int to_int(Preference p);

/// One pairwise evaluation unit: a query, two candidate answers and the
/// preferred one.
struct PreferenceInstance {
  std::string id;
  std::string query;
  std::string answer_a;
  std::string answer_b;
  Preference label = Preference::A;
  std::string source_tag;

  /// Throws InvariantError on empty id/query/answers.
  void validate() const;

  friend bool operator==(const PreferenceInstance&, const PreferenceInstance&) = default;
};

struct JudgePrompt {
  std::string template_id;
  std::string rendered_text;
  std::pair<std::string, std::string> verdict_markers;

  friend bool operator==(const JudgePrompt&, const JudgePrompt&) = default;
};

enum class Verdict : std::uint8_t { A, B, Unparseable };

/// A -> 0, B -> 1, Unparseable -> nullopt.
std::optional<int> verdict_to_label(Verdict v);
std::string_view to_string(Verdict v);
Verdict verdict_from_string(std::string_view s);

enum class TraceStatus : std::uint8_t { Closed, Unterminated };

std::string_view to_string(TraceStatus s);
TraceStatus trace_status_from_string(std::string_view s);

struct ReasoningTrace {
  std::vector<std::string> think_segments;
  std::string final_text;
  TraceStatus status = TraceStatus::Closed;
  std::int64_t token_count = 0;

  /// Concatenation of all think segments in generation order.
  std::string think_text() const;

  friend bool operator==(const ReasoningTrace&, const ReasoningTrace&) = default;
};

using ReflectiveCounts = std::map<std::string, std::int64_t>;

std::int64_t total_reflective(const ReflectiveCounts& counts);

struct AttemptRecord {
  std::string instance_id;
  int attempt_index = 1;
  ReasoningTrace trace;
  Verdict verdict = Verdict::Unparseable;
  std::int64_t cumulative_tokens = 0;
  ReflectiveCounts reflective_counts;
  // Set when the attempt could not run because the backend context filled up.
  bool context_overflow = false;

  friend bool operator==(const AttemptRecord&, const AttemptRecord&) = default;
};

/// Correct / incorrect / unparseable tally for one attempt.
struct OutcomeCounts {
  std::int64_t correct = 0;
  std::int64_t incorrect = 0;
  std::int64_t unparseable = 0;

  std::int64_t total() const { return correct + incorrect + unparseable; }

  friend bool operator==(const OutcomeCounts&, const OutcomeCounts&) = default;
};

struct EvaluationReport {
  std::vector<double> per_attempt_accuracy;
  // One entry per attempt >= 2; nullopt when attempt-1 accuracy is already 1.
  std::vector<std::optional<double>> delta_relative;
  std::optional<double> trend_r;
  std::vector<double> avg_tokens_per_attempt;
  std::vector<OutcomeCounts> counts;

  friend bool operator==(const EvaluationReport&, const EvaluationReport&) = default;
};

/// Checks that every instance's attempts are 1..n without gaps and that
/// cumulative_tokens never decreases. Throws InvariantError otherwise.
void validate_attempt_sequence(const std::vector<AttemptRecord>& records);

// JSON (JSONL line) serialization. Field names are part of the on-disk
// contract and must not change.
void to_json(nlohmann::json& j, const PreferenceInstance& v);
void from_json(const nlohmann::json& j, PreferenceInstance& v);
void to_json(nlohmann::json& j, const AttemptRecord& v);
void from_json(const nlohmann::json& j, AttemptRecord& v);
void to_json(nlohmann::json& j, const OutcomeCounts& v);
void from_json(const nlohmann::json& j, OutcomeCounts& v);
void to_json(nlohmann::json& j, const EvaluationReport& v);
void from_json(const nlohmann::json& j, EvaluationReport& v);

}  // namespace stts
