#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "stts/model.hpp"

namespace stts {

struct MarkerConfig {
  std::string think_open = "<think>";
  std::string think_close = "</think>";
  std::string verdict_a = "[[A]]";
  std::string verdict_b = "[[B]]";

  /// Throws InvariantError when a marker is empty or two markers coincide.
  void validate() const;
};

/// Phrases counted as reflection. Matching always tries longer phrases first;
/// phrases() keeps the caller's order for reporting.
class ReflectiveLexicon {
 public:
  /// The eight phrases of the reference reflective-word table.
  static ReflectiveLexicon standard();
  /// One phrase per line; blank lines are skipped, surrounding whitespace trimmed.
  static ReflectiveLexicon load(const std::filesystem::path& path);

  explicit ReflectiveLexicon(std::vector<std::string> phrases);

  const std::vector<std::string>& phrases() const { return phrases_; }
  const std::vector<std::string>& match_order() const { return by_length_; }

 private:
  std::vector<std::string> phrases_;
  std::vector<std::string> by_length_;
};

/// Splits a raw generation into think segments and the final answer text.
/// Never throws; missing markers degrade to the Unterminated or marker-free cases.
ReasoningTrace segment_trace(std::string_view raw, const MarkerConfig& markers);

/// The candidate whose marker occurs last in final_text wins.
Verdict extract_verdict(std::string_view final_text, const MarkerConfig& markers);

/// Case-insensitive, whole-word, leftmost-longest phrase counts. Every
/// lexicon phrase appears in the result, with zero when absent.
ReflectiveCounts count_reflective(std::string_view text, const ReflectiveLexicon& lexicon);

}  // namespace stts
