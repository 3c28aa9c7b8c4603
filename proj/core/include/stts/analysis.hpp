#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "stts/evaluate.hpp"
#include "stts/model.hpp"

namespace stts::analysis {

enum class State : std::uint8_t { Correct = 0, Incorrect = 1, Unparseable = 2 };

std::string_view to_string(State s);
State classify(Verdict v, Preference label);

/// counts[from][to] for one adjacent attempt pair.
using TransitionCounts = std::array<std::array<std::int64_t, 3>, 3>;

struct TransitionTable {
  int attempts = 0;
  std::vector<TransitionCounts> steps;  // steps[k] is attempt k+1 -> k+2
  std::int64_t instances = 0;
  std::vector<std::string> excluded;  // instances without a full 1..attempts range or label

  /// Instances in `state` at attempt `attempt_index` (1-based).
  std::int64_t state_count(int attempt_index, State state) const;

  /// Edge list rows: from_state,to_state,step,count. step is 1-based.
  std::string edge_list_csv() const;
  nlohmann::json to_json() const;
};

/// Counts decision changes between consecutive attempts. The attempt count
/// is the largest index seen unless given.
TransitionTable transitions(const std::vector<AttemptRecord>& log, const LabelMap& labels,
                            std::optional<int> attempts = std::nullopt);

/// Reflective-count bins given by ascending lower bounds starting at 0; the
/// last bin is open-ended. {0, 1, 5} -> "0", "1-4", "5+".
class Bins {
 public:
  explicit Bins(std::vector<std::int64_t> lower_bounds);
  static Bins standard();  // {0, 1, 5, 10}

  std::size_t size() const { return lower_.size(); }
  std::size_t index_of(std::int64_t count) const;
  std::string label(std::size_t i) const;

 private:
  std::vector<std::int64_t> lower_;
};

struct FrequencyRow {
  std::string bin;
  std::int64_t correct = 0;
  std::int64_t incorrect = 0;
  std::optional<double> correct_share;    // of all correct traces
  std::optional<double> incorrect_share;  // of all incorrect (and unparseable) traces
};

struct FrequencyTable {
  std::vector<FrequencyRow> rows;  // empty when the log has no usable traces

  std::string csv() const;
  nlohmann::json to_json() const;
};

/// Share of correct and of incorrect traces falling in each bin of total
/// reflective-phrase count, at one attempt (default 1).
FrequencyTable reflective_frequency_table(const std::vector<AttemptRecord>& log, const LabelMap& labels,
                                          const Bins& bins, int attempt = 1);

struct BinAccuracy {
  std::string bin;
  std::int64_t instances = 0;
  std::optional<double> accuracy;  // absent for empty bins
};

std::vector<BinAccuracy> accuracy_by_reflection(const std::vector<AttemptRecord>& log, const LabelMap& labels,
                                                const Bins& bins, int attempt = 1);

std::string accuracy_by_reflection_csv(const std::vector<BinAccuracy>& rows);

struct LengthSummary {
  std::int64_t n = 0;
  double mean = 0;
  double median = 0;  // nearest-rank
  double p95 = 0;     // nearest-rank
  std::map<std::int64_t, std::int64_t> histogram;  // bin start -> count
};

struct LengthStats {
  std::int64_t bin_width = 0;
  std::map<std::string, LengthSummary> splits;  // "correct", "incorrect", or "all"

  std::string csv() const;
  nlohmann::json to_json() const;
};

/// Trace token counts at one attempt. With by_correctness the incorrect split
/// holds unparseable traces too.
LengthStats length_stats(const std::vector<AttemptRecord>& log, const LabelMap& labels, bool by_correctness,
                         std::int64_t bin_width = 256, int attempt = 1);

LengthSummary summarize_lengths(const std::vector<std::int64_t>& counts, std::int64_t bin_width);

/// Lower-cased ASCII word counts over think text at one attempt, stopwords
/// removed, sorted by count then word.
std::vector<std::pair<std::string, std::int64_t>> word_frequency(const std::vector<AttemptRecord>& log,
                                                                 const std::set<std::string>& stopwords,
                                                                 int attempt = 1, std::size_t top_n = 200);

std::set<std::string> default_stopwords();

}  // namespace stts::analysis
