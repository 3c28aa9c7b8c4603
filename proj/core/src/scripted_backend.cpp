#include "stts/scripted_backend.hpp"

#include <cctype>

#include <nlohmann/json.hpp>

#include "stts/jsonl.hpp"

namespace stts {

using nlohmann::json;

namespace {

bool is_space(char c) { return std::isspace(static_cast<unsigned char>(c)) != 0; }

// Byte offset just past the n-th whitespace-separated token.
std::size_t end_of_token(std::string_view text, std::size_t n) {
  std::size_t seen = 0;
  std::size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && is_space(text[i])) ++i;
    if (i == text.size()) break;
    while (i < text.size() && !is_space(text[i])) ++i;
    if (++seen == n) return i;
  }
  return text.size();
}

StopReason parse_stop_reason(const std::string& s) {
  if (s == "eos" || s == "end_of_sequence") return StopReason::EndOfSequence;
  if (s == "max_tokens" || s == "length") return StopReason::MaxTokens;
  throw std::invalid_argument("unknown scripted stop_reason '" + s + "'");
}

BackendError::Kind parse_error_kind(const std::string& s) {
  if (s == "transport") return BackendError::Kind::Transport;
  if (s == "status") return BackendError::Kind::Status;
  if (s == "overflow") return BackendError::Kind::ContextOverflow;
  throw std::invalid_argument("unknown scripted error '" + s + "'");
}

}  // namespace

std::size_t count_whitespace_tokens(std::string_view text) {
  std::size_t n = 0;
  std::size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && is_space(text[i])) ++i;
    if (i == text.size()) break;
    ++n;
    while (i < text.size() && !is_space(text[i])) ++i;
  }
  return n;
}

CompletionResponse simulate_generation(std::string_view text, const CompletionRequest& request,
                                       StopReason natural_end, std::optional<std::int64_t> token_override) {
  CompletionResponse out;
  std::size_t cut = text.size();
  for (const auto& stop : request.stop_sequences) {
    if (stop.empty()) continue;
    const auto pos = text.find(stop);
    if (pos != std::string_view::npos && pos < cut) {
      cut = pos;
      out.matched_stop = stop;
    }
  }
  std::string_view emitted = text.substr(0, cut);
  const auto words = static_cast<std::int64_t>(count_whitespace_tokens(emitted));
  if (words > request.max_tokens) {
    out.text = std::string(emitted.substr(0, end_of_token(emitted, static_cast<std::size_t>(request.max_tokens))));
    out.stop_reason = StopReason::MaxTokens;
    out.matched_stop.reset();
    out.token_count = request.max_tokens;
    return out;
  }
  out.text = std::string(emitted);
  out.stop_reason = out.matched_stop ? StopReason::StopSequence : natural_end;
  out.token_count = token_override.value_or(words);
  return out;
}

ScriptedBackend::ScriptedBackend(std::map<Key, ScriptEntry> script, std::string think_close)
    : script_(std::move(script)), think_close_(std::move(think_close)) {}

std::map<ScriptedBackend::Key, ScriptEntry> ScriptedBackend::load_script(const std::filesystem::path& path) {
  std::map<Key, ScriptEntry> script;
  for (const auto& line : read_jsonl(path)) {
    const auto& j = line.value;
    try {
      ScriptEntry e;
      e.text = j.at("text").get<std::string>();
      if (j.contains("final")) e.final_text = j["final"].get<std::string>();
      if (j.contains("think_tokens")) e.think_tokens = j["think_tokens"].get<std::int64_t>();
      if (j.contains("final_tokens")) e.final_tokens = j["final_tokens"].get<std::int64_t>();
      if (j.contains("stop_reason")) e.natural_end = parse_stop_reason(j["stop_reason"].get<std::string>());
      if (j.contains("error")) e.error = parse_error_kind(j["error"].get<std::string>());
      Key key{j.at("instance_id").get<std::string>(), j.at("attempt_index").get<int>()};
      script.insert_or_assign(std::move(key), std::move(e));
    } catch (const std::exception& ex) {
      throw JsonlError(path.string() + ":" + std::to_string(line.line_number) + ": " + ex.what(), line.line_number);
    }
  }
  return script;
}

void ScriptedBackend::set(const std::string& instance_id, int attempt_index, ScriptEntry entry) {
  std::lock_guard lock(mutex_);
  script_.insert_or_assign(Key{instance_id, attempt_index}, std::move(entry));
}

CompletionResponse ScriptedBackend::complete(const CompletionRequest& request) {
  std::optional<ScriptEntry> entry;
  {
    std::lock_guard lock(mutex_);
    transcript_.push_back(request);
    auto it = script_.find(Key{request.context.instance_id, request.context.attempt_index});
    if (it != script_.end()) entry = it->second;
  }
  if (!entry) {
    throw BackendError(BackendError::Kind::Status,
                       "no script entry for (" + request.context.instance_id + ", " +
                           std::to_string(request.context.attempt_index) + ")",
                       404);
  }

  if (request.context.phase == RequestPhase::Think) {
    if (entry->error) {
      throw BackendError(*entry->error, "scripted failure for " + request.context.instance_id,
                         *entry->error == BackendError::Kind::Status ? 500 : 0);
    }
    return simulate_generation(entry->text, request, entry->natural_end, entry->think_tokens);
  }

  std::string_view final_part;
  if (entry->final_text) {
    final_part = *entry->final_text;
  } else if (const auto pos = entry->text.find(think_close_); pos != std::string::npos) {
    final_part = std::string_view(entry->text).substr(pos + think_close_.size());
  }
  return simulate_generation(final_part, request, StopReason::EndOfSequence, entry->final_tokens);
}

std::vector<CompletionRequest> ScriptedBackend::transcript() const {
  std::lock_guard lock(mutex_);
  return transcript_;
}

void ScriptedBackend::clear_transcript() {
  std::lock_guard lock(mutex_);
  transcript_.clear();
}

}  // namespace stts
