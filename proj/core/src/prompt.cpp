#include "stts/prompt.hpp"

#include <array>
#include <fstream>
#include <sstream>
#include <string_view>

namespace stts {

namespace {

constexpr std::string_view kQuery = "{query}";
constexpr std::string_view kAnswerA = "{answer_a}";
constexpr std::string_view kAnswerB = "{answer_b}";
constexpr std::string_view kInstruction = "{instruction}";

std::size_t count_occurrences(std::string_view haystack, std::string_view needle) {
  std::size_t n = 0;
  for (auto pos = haystack.find(needle); pos != std::string_view::npos;
       pos = haystack.find(needle, pos + needle.size())) {
    ++n;
  }
  return n;
}

constexpr std::string_view kDefaultBody =
    "Please act as an impartial judge and evaluate the quality of the responses provided by two AI "
    "assistants to the user question displayed below. You should choose the assistant that follows "
    "the user's instructions and answers the user's question better. Your evaluation should consider "
    "factors such as the helpfulness, relevance, accuracy, depth, creativity, and level of detail of "
    "their responses. Begin your evaluation by comparing the two responses and provide a short "
    "explanation. Avoid any position biases and ensure that the order in which the responses were "
    "presented does not influence your decision. Do not allow the length of the responses to "
    "influence your evaluation. Do not favor certain names of the assistants. Be as objective as "
    "possible. {instruction}\n\n"
    "[User Question]\n{query}\n\n"
    "[The Start of Assistant A's Answer]\n{answer_a}\n[The End of Assistant A's Answer]\n\n"
    "[The Start of Assistant B's Answer]\n{answer_b}\n[The End of Assistant B's Answer]\n";

}  // namespace

std::string default_verdict_instruction(const std::pair<std::string, std::string>& markers) {
  return "After providing your explanation, output your final verdict by strictly following this "
         "format: \"" +
         markers.first + "\" if assistant A is better, \"" + markers.second +
         "\" if assistant B is better.";
}

TemplateSpec TemplateSpec::make(std::string template_id, std::string body, std::string instruction,
                                std::pair<std::string, std::string> markers) {
  if (template_id.empty()) throw InvariantError("template id must not be empty");
  for (auto slot : {kQuery, kAnswerA, kAnswerB}) {
    const auto n = count_occurrences(body, slot);
    if (n != 1) {
      throw InvariantError("template '" + template_id + "': placeholder " + std::string(slot) +
                           " must appear exactly once, found " + std::to_string(n));
    }
  }
  if (count_occurrences(body, kInstruction) > 1) {
    throw InvariantError("template '" + template_id + "': {instruction} appears more than once");
  }
  if (markers.first.empty() || markers.second.empty() || markers.first == markers.second) {
    throw InvariantError("template '" + template_id + "': verdict markers must be distinct and non-empty");
  }
  if (instruction.find(markers.first) == std::string::npos ||
      instruction.find(markers.second) == std::string::npos) {
    throw InvariantError("template '" + template_id + "': instruction must name both verdict markers");
  }
  TemplateSpec t;
  t.id_ = std::move(template_id);
  t.body_ = std::move(body);
  t.instruction_ = std::move(instruction);
  t.markers_ = std::move(markers);
  return t;
}

TemplateSpec TemplateSpec::default_pairwise() {
  std::pair<std::string, std::string> markers{"[[A]]", "[[B]]"};
  return make("pairwise-default", std::string(kDefaultBody), default_verdict_instruction(markers), markers);
}

TemplateSpec TemplateSpec::load(const std::filesystem::path& path, std::string template_id) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open template file " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  if (template_id.empty()) template_id = path.stem().string();
  std::pair<std::string, std::string> markers{"[[A]]", "[[B]]"};
  return make(std::move(template_id), ss.str(), default_verdict_instruction(markers), markers);
}

JudgePrompt render(const TemplateSpec& tmpl, const PreferenceInstance& instance) {
  const std::array<std::pair<std::string_view, std::string_view>, 4> slots{{
      {kQuery, instance.query},
      {kAnswerA, instance.answer_a},
      {kAnswerB, instance.answer_b},
      {kInstruction, tmpl.instruction()},
  }};
  const std::string_view body = tmpl.body();
  std::string out;
  out.reserve(body.size() + instance.query.size() + instance.answer_a.size() + instance.answer_b.size() +
              tmpl.instruction().size());
  std::size_t i = 0;
  while (i < body.size()) {
    bool replaced = false;
    if (body[i] == '{') {
      for (const auto& [slot, value] : slots) {
        if (body.compare(i, slot.size(), slot) == 0) {
          out.append(value);
          i += slot.size();
          replaced = true;
          break;
        }
      }
    }
    if (!replaced) out.push_back(body[i++]);
  }
  return JudgePrompt{tmpl.id(), std::move(out), tmpl.markers()};
}

}  // namespace stts
