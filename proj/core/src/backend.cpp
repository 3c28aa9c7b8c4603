#include "stts/backend.hpp"

namespace stts {

std::string_view to_string(StopReason r) {
  switch (r) {
    case StopReason::StopSequence:
      return "stop_sequence";
    case StopReason::MaxTokens:
      return "max_tokens";
    case StopReason::EndOfSequence:
      break;
  }
  return "end_of_sequence";
}

CompletionResponse continue_with(Backend& backend, std::string_view previous_prompt, std::string_view accumulated,
                                 std::string_view injection, CompletionRequest base) {
  base.prompt.clear();
  base.prompt.reserve(previous_prompt.size() + accumulated.size() + injection.size());
  base.prompt.append(previous_prompt).append(accumulated).append(injection);
  return backend.complete(base);
}

}  // namespace stts
