#include "stts/trace.hpp"

#include <algorithm>
#include <array>
#include <fstream>
#include <set>

namespace stts {

namespace {

// Only ASCII letters form words; UTF-8 continuation bytes and punctuation
// (including typographic dashes) are boundaries.
bool is_word_char(char c) {
  return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z');
}

char ascii_lower(char c) { return (c >= 'A' && c <= 'Z') ? static_cast<char>(c - 'A' + 'a') : c; }

bool iequals_at(std::string_view text, std::size_t pos, std::string_view phrase) {
  if (pos + phrase.size() > text.size()) return false;
  for (std::size_t i = 0; i < phrase.size(); ++i) {
    if (ascii_lower(text[pos + i]) != ascii_lower(phrase[i])) return false;
  }
  return true;
}

std::string_view trim(std::string_view s) {
  constexpr std::string_view ws = " \t\r\n";
  const auto b = s.find_first_not_of(ws);
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(ws);
  return s.substr(b, e - b + 1);
}

}  // namespace

void MarkerConfig::validate() const {
  const std::array<const std::string*, 4> all{&think_open, &think_close, &verdict_a, &verdict_b};
  std::set<std::string> distinct;
  for (const auto* m : all) {
    if (m->empty()) throw InvariantError("marker strings must be non-empty");
    distinct.insert(*m);
  }
  if (distinct.size() != all.size()) throw InvariantError("marker strings must be pairwise distinct");
}

ReflectiveLexicon ReflectiveLexicon::standard() {
  return ReflectiveLexicon({"Wait", "Alternatively", "But", "However", "Hold on", "On the other hand",
                            "On the contrary", "In contrast"});
}

ReflectiveLexicon ReflectiveLexicon::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open lexicon file " + path.string());
  std::vector<std::string> phrases;
  std::string line;
  while (std::getline(in, line)) {
    auto t = trim(line);
    if (!t.empty()) phrases.emplace_back(t);
  }
  return ReflectiveLexicon(std::move(phrases));
}

ReflectiveLexicon::ReflectiveLexicon(std::vector<std::string> phrases) : phrases_(std::move(phrases)) {
  if (phrases_.empty()) throw InvariantError("reflective lexicon must not be empty");
  for (const auto& p : phrases_) {
    if (p.empty()) throw InvariantError("reflective lexicon contains an empty phrase");
  }
  by_length_ = phrases_;
  std::stable_sort(by_length_.begin(), by_length_.end(),
                   [](const std::string& a, const std::string& b) { return a.size() > b.size(); });
}

ReasoningTrace segment_trace(std::string_view raw, const MarkerConfig& markers) {
  ReasoningTrace trace;
  const auto open = raw.find(markers.think_open);
  if (open == std::string_view::npos) {
    trace.final_text = std::string(raw);
    return trace;
  }
  const auto body_begin = open + markers.think_open.size();
  const auto close = raw.find(markers.think_close, body_begin);
  if (close == std::string_view::npos) {
    trace.think_segments.emplace_back(raw.substr(body_begin));
    trace.status = TraceStatus::Unterminated;
    return trace;
  }
  trace.think_segments.emplace_back(raw.substr(body_begin, close - body_begin));
  trace.final_text = std::string(raw.substr(close + markers.think_close.size()));
  return trace;
}

Verdict extract_verdict(std::string_view final_text, const MarkerConfig& markers) {
  const auto a = final_text.rfind(markers.verdict_a);
  const auto b = final_text.rfind(markers.verdict_b);
  if (a == std::string_view::npos && b == std::string_view::npos) return Verdict::Unparseable;
  if (a == std::string_view::npos) return Verdict::B;
  if (b == std::string_view::npos) return Verdict::A;
  return a > b ? Verdict::A : Verdict::B;
}

ReflectiveCounts count_reflective(std::string_view text, const ReflectiveLexicon& lexicon) {
  ReflectiveCounts counts;
  for (const auto& p : lexicon.phrases()) counts[p] = 0;

  std::size_t i = 0;
  while (i < text.size()) {
    const bool at_word_start = i == 0 || !is_word_char(text[i - 1]);
    bool matched = false;
    if (at_word_start) {
      for (const auto& phrase : lexicon.match_order()) {
        const auto end = i + phrase.size();
        if (!iequals_at(text, i, phrase)) continue;
        if (end < text.size() && is_word_char(text[end])) continue;
        ++counts[phrase];
        i = end;
        matched = true;
        break;
      }
    }
    if (!matched) ++i;
  }
  return counts;
}

}  // namespace stts
