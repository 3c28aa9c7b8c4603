#include "stts/model.hpp"

#include <numeric>
#include <unordered_map>

namespace stts {

using nlohmann::json;

std::optional<Preference> preference_from_int(std::int64_t v) {
  if (v == 0) return Preference::A;
  if (v == 1) return Preference::B;
  return std::nullopt;
}

int to_int(Preference p) { return p == Preference::A ? 0 : 1; }

void PreferenceInstance::validate() const {
  if (id.empty()) throw InvariantError("instance id is empty");
  if (query.empty()) throw InvariantError("instance '" + id + "': query is empty");
  if (answer_a.empty()) throw InvariantError("instance '" + id + "': answer_a is empty");
  if (answer_b.empty()) throw InvariantError("instance '" + id + "': answer_b is empty");
}

std::optional<int> verdict_to_label(Verdict v) {
  switch (v) {
    case Verdict::A:
      return 0;
    case Verdict::B:
      return 1;
    case Verdict::Unparseable:
      break;
  }
  return std::nullopt;
}

std::string_view to_string(Verdict v) {
  switch (v) {
    case Verdict::A:
      return "A";
    case Verdict::B:
      return "B";
    case Verdict::Unparseable:
      break;
  }
  return "unparseable";
}

Verdict verdict_from_string(std::string_view s) {
  if (s == "A") return Verdict::A;
  if (s == "B") return Verdict::B;
  if (s == "unparseable") return Verdict::Unparseable;
  throw InvariantError("unknown verdict '" + std::string(s) + "'");
}

std::string_view to_string(TraceStatus s) {
  return s == TraceStatus::Closed ? "closed" : "unterminated";
}

TraceStatus trace_status_from_string(std::string_view s) {
  if (s == "closed") return TraceStatus::Closed;
  if (s == "unterminated") return TraceStatus::Unterminated;
  throw InvariantError("unknown trace status '" + std::string(s) + "'");
}

std::string ReasoningTrace::think_text() const {
  std::string out;
  for (const auto& s : think_segments) out += s;
  return out;
}

std::int64_t total_reflective(const ReflectiveCounts& counts) {
  return std::accumulate(counts.begin(), counts.end(), std::int64_t{0},
                         [](std::int64_t acc, const auto& kv) { return acc + kv.second; });
}

void validate_attempt_sequence(const std::vector<AttemptRecord>& records) {
  struct Seen {
    int last_index = 0;
    std::int64_t last_tokens = 0;
  };
  std::unordered_map<std::string, Seen> seen;
  for (const auto& r : records) {
    auto& s = seen[r.instance_id];
    if (r.attempt_index != s.last_index + 1) {
      throw InvariantError("instance '" + r.instance_id + "': attempt " +
                           std::to_string(r.attempt_index) + " follows attempt " +
                           std::to_string(s.last_index));
    }
    if (r.cumulative_tokens < s.last_tokens) {
      throw InvariantError("instance '" + r.instance_id + "': cumulative_tokens decreased at attempt " +
                           std::to_string(r.attempt_index));
    }
    s.last_index = r.attempt_index;
    s.last_tokens = r.cumulative_tokens;
  }
}

void to_json(json& j, const PreferenceInstance& v) {
  j = json{{"id", v.id},
           {"query", v.query},
           {"answer_a", v.answer_a},
           {"answer_b", v.answer_b},
           {"label", to_int(v.label)},
           {"source_tag", v.source_tag}};
}

void from_json(const json& j, PreferenceInstance& v) {
  j.at("id").get_to(v.id);
  j.at("query").get_to(v.query);
  j.at("answer_a").get_to(v.answer_a);
  j.at("answer_b").get_to(v.answer_b);
  const auto& label = j.at("label");
  if (!label.is_number_integer()) throw InvariantError("label must be an integer");
  auto p = preference_from_int(label.get<std::int64_t>());
  if (!p) throw InvariantError("label must be 0 or 1, got " + label.dump());
  v.label = *p;
  v.source_tag = j.value("source_tag", std::string{});
}

void to_json(json& j, const AttemptRecord& v) {
  j = json{{"instance_id", v.instance_id},
           {"attempt_index", v.attempt_index},
           {"think_segments", v.trace.think_segments},
           {"final_text", v.trace.final_text},
           {"status", to_string(v.trace.status)},
           {"token_count", v.trace.token_count},
           {"verdict", to_string(v.verdict)},
           {"cumulative_tokens", v.cumulative_tokens},
           {"reflective_counts", v.reflective_counts}};
  if (v.context_overflow) j["context_overflow"] = true;
}

void from_json(const json& j, AttemptRecord& v) {
  j.at("instance_id").get_to(v.instance_id);
  j.at("attempt_index").get_to(v.attempt_index);
  if (v.attempt_index < 1) throw InvariantError("attempt_index must be >= 1");
  j.at("think_segments").get_to(v.trace.think_segments);
  j.at("final_text").get_to(v.trace.final_text);
  v.trace.status = trace_status_from_string(j.at("status").get<std::string>());
  v.trace.token_count = j.value("token_count", std::int64_t{0});
  v.verdict = verdict_from_string(j.at("verdict").get<std::string>());
  j.at("cumulative_tokens").get_to(v.cumulative_tokens);
  if (v.cumulative_tokens < 0) throw InvariantError("cumulative_tokens must be >= 0");
  j.at("reflective_counts").get_to(v.reflective_counts);
  v.context_overflow = j.value("context_overflow", false);
}

void to_json(json& j, const OutcomeCounts& v) {
  j = json{{"correct", v.correct}, {"incorrect", v.incorrect}, {"unparseable", v.unparseable}};
}

void from_json(const json& j, OutcomeCounts& v) {
  j.at("correct").get_to(v.correct);
  j.at("incorrect").get_to(v.incorrect);
  j.at("unparseable").get_to(v.unparseable);
}

namespace {

json optional_number(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

std::optional<double> number_or_null(const json& j) {
  if (j.is_null()) return std::nullopt;
  return j.get<double>();
}

}  // namespace

void to_json(json& j, const EvaluationReport& v) {
  json deltas = json::array();
  for (const auto& d : v.delta_relative) deltas.push_back(optional_number(d));
  j = json{{"per_attempt_accuracy", v.per_attempt_accuracy},
           {"delta_relative", deltas},
           {"trend_r", optional_number(v.trend_r)},
           {"avg_tokens_per_attempt", v.avg_tokens_per_attempt},
           {"counts", v.counts}};
}

void from_json(const json& j, EvaluationReport& v) {
  j.at("per_attempt_accuracy").get_to(v.per_attempt_accuracy);
  v.delta_relative.clear();
  for (const auto& d : j.at("delta_relative")) v.delta_relative.push_back(number_or_null(d));
  v.trend_r = number_or_null(j.at("trend_r"));
  j.at("avg_tokens_per_attempt").get_to(v.avg_tokens_per_attempt);
  j.at("counts").get_to(v.counts);
}

}  // namespace stts
