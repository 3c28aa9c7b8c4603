#pragma once

#include <filesystem>
#include <string>
#include <utility>

#include "stts/model.hpp"

namespace stts {

/// A pairwise judge template. The body holds the {query}, {answer_a} and
/// {answer_b} slots exactly once each and may hold one {instruction} slot.
class TemplateSpec {
 public:
  /// Validates and builds a template; throws InvariantError on a bad body,
  /// an instruction that does not name both markers, or bad markers.
  static TemplateSpec make(std::string template_id, std::string body, std::string instruction,
                           std::pair<std::string, std::string> markers = {"[[A]]", "[[B]]"});

  /// The built-in pairwise template in the RewardBench judging style.
  static TemplateSpec default_pairwise();

  /// Reads the body from a UTF-8 file. The default instruction is used and
  /// the template id is the file stem unless given.
  static TemplateSpec load(const std::filesystem::path& path, std::string template_id = {});

  const std::string& id() const { return id_; }
  const std::string& body() const { return body_; }
  const std::string& instruction() const { return instruction_; }
  const std::pair<std::string, std::string>& markers() const { return markers_; }

 private:
  TemplateSpec() = default;

  std::string id_;
  std::string body_;
  std::string instruction_;
  std::pair<std::string, std::string> markers_;
};

std::string default_verdict_instruction(const std::pair<std::string, std::string>& markers);

/// Single-pass placeholder substitution: values are copied verbatim and never
/// re-expanded.
JudgePrompt render(const TemplateSpec& tmpl, const PreferenceInstance& instance);

}  // namespace stts
