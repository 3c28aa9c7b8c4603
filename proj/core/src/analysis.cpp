#include "stts/analysis.hpp"

#include <algorithm>
#include <cctype>
#include <unordered_map>

#include <fmt/format.h>

#include "stts/stats.hpp"

namespace stts::analysis {

using nlohmann::json;

std::string_view to_string(State s) {
  switch (s) {
    case State::Correct:
      return "correct";
    case State::Incorrect:
      return "incorrect";
    case State::Unparseable:
      break;
  }
  return "unparseable";
}

State classify(Verdict v, Preference label) {
  const auto predicted = verdict_to_label(v);
  if (!predicted) return State::Unparseable;
  return *predicted == to_int(label) ? State::Correct : State::Incorrect;
}

namespace {

std::string fmt_optional(const std::optional<double>& v) { return v ? fmt::format("{}", *v) : std::string{}; }

json json_optional(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

// Records at `attempt` whose instance has a label, in instance-id order.
std::vector<std::pair<const AttemptRecord*, Preference>> at_attempt(const std::vector<AttemptRecord>& log,
                                                                     const LabelMap& labels, int attempt) {
  std::vector<std::pair<const AttemptRecord*, Preference>> out;
  for (const auto& r : log) {
    if (r.attempt_index != attempt) continue;
    auto it = labels.find(r.instance_id);
    if (it != labels.end()) out.emplace_back(&r, it->second);
  }
  std::sort(out.begin(), out.end(),
            [](const auto& a, const auto& b) { return a.first->instance_id < b.first->instance_id; });
  return out;
}

}  // namespace

std::int64_t TransitionTable::state_count(int attempt_index, State state) const {
  if (attempt_index < 1 || attempt_index > attempts) throw std::out_of_range("attempt index out of range");
  const auto s = static_cast<std::size_t>(state);
  std::int64_t n = 0;
  if (attempt_index <= static_cast<int>(steps.size())) {
    for (std::size_t to = 0; to < 3; ++to) n += steps[static_cast<std::size_t>(attempt_index) - 1][s][to];
  } else {
    for (std::size_t from = 0; from < 3; ++from) n += steps[static_cast<std::size_t>(attempt_index) - 2][from][s];
  }
  return n;
}

std::string TransitionTable::edge_list_csv() const {
  std::string out = "from_state,to_state,step,count\n";
  for (std::size_t k = 0; k < steps.size(); ++k) {
    for (std::size_t from = 0; from < 3; ++from) {
      for (std::size_t to = 0; to < 3; ++to) {
        out += fmt::format("{},{},{},{}\n", to_string(static_cast<State>(from)), to_string(static_cast<State>(to)),
                           k + 1, steps[k][from][to]);
      }
    }
  }
  return out;
}

json TransitionTable::to_json() const {
  json edges = json::array();
  for (std::size_t k = 0; k < steps.size(); ++k) {
    for (std::size_t from = 0; from < 3; ++from) {
      for (std::size_t to = 0; to < 3; ++to) {
        edges.push_back({{"from_state", to_string(static_cast<State>(from))},
                         {"to_state", to_string(static_cast<State>(to))},
                         {"step", k + 1},
                         {"count", steps[k][from][to]}});
      }
    }
  }
  return {{"attempts", attempts}, {"instances", instances}, {"excluded", excluded}, {"edges", edges}};
}

TransitionTable transitions(const std::vector<AttemptRecord>& log, const LabelMap& labels,
                            std::optional<int> attempts) {
  std::map<std::string, std::map<int, Verdict>> by_instance;
  int max_attempt = 0;
  for (const auto& r : log) {
    by_instance[r.instance_id][r.attempt_index] = r.verdict;
    max_attempt = std::max(max_attempt, r.attempt_index);
  }
  TransitionTable table;
  table.attempts = attempts.value_or(max_attempt);
  if (table.attempts < 1) return table;
  table.steps.assign(static_cast<std::size_t>(table.attempts - 1), TransitionCounts{});

  for (const auto& [id, verdicts] : by_instance) {
    auto label = labels.find(id);
    bool complete = label != labels.end() && static_cast<int>(verdicts.size()) >= table.attempts;
    for (int k = 1; complete && k <= table.attempts; ++k) complete = verdicts.contains(k);
    if (!complete) {
      table.excluded.push_back(id);
      continue;
    }
    ++table.instances;
    for (int k = 1; k < table.attempts; ++k) {
      const auto from = classify(verdicts.at(k), label->second);
      const auto to = classify(verdicts.at(k + 1), label->second);
      ++table.steps[static_cast<std::size_t>(k) - 1][static_cast<std::size_t>(from)][static_cast<std::size_t>(to)];
    }
  }
  return table;
}

Bins::Bins(std::vector<std::int64_t> lower_bounds) : lower_(std::move(lower_bounds)) {
  if (lower_.empty() || lower_.front() != 0) throw std::invalid_argument("bins must start at 0");
  for (std::size_t i = 1; i < lower_.size(); ++i) {
    if (lower_[i] <= lower_[i - 1]) throw std::invalid_argument("bin lower bounds must be strictly increasing");
  }
}

Bins Bins::standard() { return Bins({0, 1, 5, 10}); }

std::size_t Bins::index_of(std::int64_t count) const {
  const auto it = std::upper_bound(lower_.begin(), lower_.end(), count);
  return static_cast<std::size_t>(std::distance(lower_.begin(), it)) - 1;
}

std::string Bins::label(std::size_t i) const {
  if (i + 1 == lower_.size()) return fmt::format("{}+", lower_[i]);
  if (lower_[i + 1] - 1 == lower_[i]) return std::to_string(lower_[i]);
  return fmt::format("{}-{}", lower_[i], lower_[i + 1] - 1);
}

std::string FrequencyTable::csv() const {
  std::string out = "bin,correct,incorrect,correct_share,incorrect_share\n";
  for (const auto& r : rows) {
    out += fmt::format("{},{},{},{},{}\n", r.bin, r.correct, r.incorrect, fmt_optional(r.correct_share),
                       fmt_optional(r.incorrect_share));
  }
  return out;
}

json FrequencyTable::to_json() const {
  json out = json::array();
  for (const auto& r : rows) {
    out.push_back({{"bin", r.bin},
                   {"correct", r.correct},
                   {"incorrect", r.incorrect},
                   {"correct_share", json_optional(r.correct_share)},
                   {"incorrect_share", json_optional(r.incorrect_share)}});
  }
  return out;
}

FrequencyTable reflective_frequency_table(const std::vector<AttemptRecord>& log, const LabelMap& labels,
                                          const Bins& bins, int attempt) {
  FrequencyTable table;
  const auto records = at_attempt(log, labels, attempt);
  if (records.empty()) return table;
  table.rows.resize(bins.size());
  std::int64_t correct = 0;
  std::int64_t incorrect = 0;
  for (std::size_t i = 0; i < bins.size(); ++i) table.rows[i].bin = bins.label(i);
  for (const auto& [r, label] : records) {
    auto& row = table.rows[bins.index_of(total_reflective(r->reflective_counts))];
    if (classify(r->verdict, label) == State::Correct) {
      ++row.correct;
      ++correct;
    } else {
      ++row.incorrect;
      ++incorrect;
    }
  }
  for (auto& row : table.rows) {
    if (correct > 0) row.correct_share = static_cast<double>(row.correct) / static_cast<double>(correct);
    if (incorrect > 0) row.incorrect_share = static_cast<double>(row.incorrect) / static_cast<double>(incorrect);
  }
  return table;
}

std::vector<BinAccuracy> accuracy_by_reflection(const std::vector<AttemptRecord>& log, const LabelMap& labels,
                                                const Bins& bins, int attempt) {
  std::vector<BinAccuracy> out(bins.size());
  std::vector<std::int64_t> correct(bins.size(), 0);
  for (std::size_t i = 0; i < bins.size(); ++i) out[i].bin = bins.label(i);
  for (const auto& [r, label] : at_attempt(log, labels, attempt)) {
    const auto b = bins.index_of(total_reflective(r->reflective_counts));
    ++out[b].instances;
    if (classify(r->verdict, label) == State::Correct) ++correct[b];
  }
  for (std::size_t i = 0; i < bins.size(); ++i) {
    if (out[i].instances > 0) {
      out[i].accuracy = static_cast<double>(correct[i]) / static_cast<double>(out[i].instances);
    }
  }
  return out;
}

std::string accuracy_by_reflection_csv(const std::vector<BinAccuracy>& rows) {
  std::string out = "bin,instances,accuracy\n";
  for (const auto& r : rows) out += fmt::format("{},{},{}\n", r.bin, r.instances, fmt_optional(r.accuracy));
  return out;
}

LengthSummary summarize_lengths(const std::vector<std::int64_t>& counts, std::int64_t bin_width) {
  if (bin_width < 1) throw std::invalid_argument("histogram bin width must be >= 1");
  LengthSummary s;
  s.n = static_cast<std::int64_t>(counts.size());
  if (counts.empty()) return s;
  std::vector<double> xs(counts.begin(), counts.end());
  s.mean = stats::mean(xs);
  s.median = stats::nearest_rank_percentile(xs, 50);
  s.p95 = stats::nearest_rank_percentile(xs, 95);
  for (auto c : counts) {
    const auto start = (c >= 0 ? c / bin_width : (c - bin_width + 1) / bin_width) * bin_width;
    ++s.histogram[start];
  }
  return s;
}

std::string LengthStats::csv() const {
  std::string out = "split,n,mean,median,p95,bin_start,bin_count\n";
  for (const auto& [split, s] : splits) {
    if (s.histogram.empty()) {
      out += fmt::format("{},{},{},{},{},,\n", split, s.n, s.mean, s.median, s.p95);
      continue;
    }
    for (const auto& [start, count] : s.histogram) {
      out += fmt::format("{},{},{},{},{},{},{}\n", split, s.n, s.mean, s.median, s.p95, start, count);
    }
  }
  return out;
}

json LengthStats::to_json() const {
  json out{{"bin_width", bin_width}, {"splits", json::object()}};
  for (const auto& [split, s] : splits) {
    json hist = json::array();
    for (const auto& [start, count] : s.histogram) hist.push_back({{"bin_start", start}, {"count", count}});
    out["splits"][split] = {{"n", s.n}, {"mean", s.mean}, {"median", s.median}, {"p95", s.p95}, {"histogram", hist}};
  }
  return out;
}

LengthStats length_stats(const std::vector<AttemptRecord>& log, const LabelMap& labels, bool by_correctness,
                         std::int64_t bin_width, int attempt) {
  LengthStats out;
  out.bin_width = bin_width;
  std::map<std::string, std::vector<std::int64_t>> groups;
  if (by_correctness) {
    groups["correct"];
    groups["incorrect"];
  } else {
    groups["all"];
  }
  for (const auto& [r, label] : at_attempt(log, labels, attempt)) {
    const auto key = !by_correctness ? "all" : (classify(r->verdict, label) == State::Correct ? "correct" : "incorrect");
    groups[key].push_back(r->trace.token_count);
  }
  for (const auto& [key, counts] : groups) out.splits.emplace(key, summarize_lengths(counts, bin_width));
  return out;
}

std::set<std::string> default_stopwords() {
  return {"a",    "an",   "and",  "are",  "as",    "at",   "be",   "but",  "by",   "for",  "from", "has",
          "have", "he",   "her",  "his",  "i",     "if",   "in",   "is",   "it",   "its",  "me",   "my",
          "not",  "of",   "on",   "or",   "our",   "she",  "so",   "that", "the",  "their", "them", "then",
          "there", "these", "they", "this", "to",  "was",  "we",   "were", "what", "which", "will", "with",
          "would", "you",  "your", "s",    "t",    "let",  "do",   "does", "can",  "should", "also", "than"};
}

std::vector<std::pair<std::string, std::int64_t>> word_frequency(const std::vector<AttemptRecord>& log,
                                                                 const std::set<std::string>& stopwords, int attempt,
                                                                 std::size_t top_n) {
  std::unordered_map<std::string, std::int64_t> counts;
  for (const auto& r : log) {
    if (r.attempt_index != attempt) continue;
    const auto text = r.trace.think_text();
    std::string word;
    auto flush = [&] {
      if (!word.empty() && !stopwords.contains(word)) ++counts[word];
      word.clear();
    };
    for (char c : text) {
      const auto u = static_cast<unsigned char>(c);
      if (u < 0x80 && std::isalpha(u)) {
        word.push_back(static_cast<char>(std::tolower(u)));
      } else {
        flush();
      }
    }
    flush();
  }
  std::vector<std::pair<std::string, std::int64_t>> out(counts.begin(), counts.end());
  std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) {
    return a.second != b.second ? a.second > b.second : a.first < b.first;
  });
  if (out.size() > top_n) out.resize(top_n);
  return out;
}

}  // namespace stts::analysis
