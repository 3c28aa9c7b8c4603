#include "stts/forcing.hpp"

#include <cctype>

namespace stts {

void ForcingConfig::validate() const {
  if (budget < 1) throw InvariantError("forcing budget must be >= 1");
  if (budget > 1 && injection.empty()) throw InvariantError("injection must be non-empty when budget > 1");
  if (max_tokens <= 0 || finalize_max_tokens <= 0) throw InvariantError("max_tokens must be > 0");
  if (temperature < 0) throw InvariantError("temperature must be >= 0");
  markers.validate();
}

std::string ForcingConfig::wire_injection() const {
  if (injection.empty() || std::isspace(static_cast<unsigned char>(injection.front()))) return injection;
  return " " + injection;
}

FinalizedAnswer finalize_attempt(const std::string& prompt_with_think, Backend& backend, const ForcingConfig& cfg,
                                 const RequestContext& context) {
  CompletionRequest req;
  req.prompt = prompt_with_think + cfg.markers.think_close + cfg.finalize_suffix;
  req.max_tokens = cfg.finalize_max_tokens;
  req.temperature = cfg.temperature;
  req.seed = cfg.seed;
  req.context = context;
  req.context.phase = RequestPhase::Finalize;
  auto resp = backend.complete(req);
  FinalizedAnswer out;
  out.verdict = extract_verdict(resp.text, cfg.markers);
  out.final_text = std::move(resp.text);
  out.token_count = resp.token_count;
  return out;
}

Episode::Episode(const PreferenceInstance& instance, const JudgePrompt& prompt, Backend& backend,
                 const ForcingConfig& cfg, const ReflectiveLexicon& lexicon)
    : instance_(instance), prompt_(prompt), backend_(backend), cfg_(cfg), lexicon_(lexicon) {}

std::string Episode::think_text() const {
  std::string out;
  for (const auto& s : segments_) out += s;
  return out;
}

CompletionRequest Episode::think_request(int attempt_index) const {
  CompletionRequest req;
  req.prompt = prompt_.rendered_text;
  req.stop_sequences = {cfg_.markers.think_close};
  req.max_tokens = cfg_.max_tokens;
  req.temperature = cfg_.temperature;
  req.seed = cfg_.seed;
  req.context = {instance_.id, attempt_index, RequestPhase::Think};
  return req;
}

AttemptRecord Episode::overflow_record(int attempt_index) const {
  AttemptRecord r;
  r.instance_id = instance_.id;
  r.attempt_index = attempt_index;
  r.trace.think_segments = segments_;
  r.trace.status = last_status_;
  r.trace.token_count = think_tokens_;
  r.verdict = Verdict::Unparseable;
  r.cumulative_tokens = think_tokens_;
  r.reflective_counts = count_reflective(think_text(), lexicon_);
  r.context_overflow = true;
  return r;
}

AttemptRecord Episode::step() {
  const int k = attempts_done_ + 1;
  if (overflowed_) {
    attempts_done_ = k;
    return overflow_record(k);
  }

  const auto wire = cfg_.wire_injection();
  CompletionResponse segment;
  try {
    auto req = think_request(k);
    segment = k == 1 ? backend_.complete(req)
                     : continue_with(backend_, prompt_.rendered_text, accumulated_, wire, std::move(req));
  } catch (const BackendError& e) {
    if (e.kind() != BackendError::Kind::ContextOverflow) throw;
    overflowed_ = true;
    attempts_done_ = k;
    return overflow_record(k);
  }

  auto next_accumulated = accumulated_;
  auto next_segments = segments_;
  if (k == 1) {
    next_accumulated += segment.text;
    // The model usually opens its own think block; the trace keeps only its body.
    std::string_view body = segment.text;
    const auto first = body.find_first_not_of(" \t\r\n");
    if (first != std::string_view::npos && body.substr(first).starts_with(cfg_.markers.think_open)) {
      body.remove_prefix(first + cfg_.markers.think_open.size());
    }
    next_segments.emplace_back(body);
  } else {
    next_accumulated += wire;
    next_accumulated += segment.text;
    next_segments.push_back(wire + segment.text);
  }

  FinalizedAnswer answer;
  try {
    answer = finalize_attempt(prompt_.rendered_text + next_accumulated, backend_, cfg_, {instance_.id, k});
  } catch (const BackendError& e) {
    if (e.kind() != BackendError::Kind::ContextOverflow) throw;
    accumulated_ = std::move(next_accumulated);
    segments_ = std::move(next_segments);
    think_tokens_ += segment.token_count;
    last_status_ = segment.stop_reason == StopReason::StopSequence ? TraceStatus::Closed : TraceStatus::Unterminated;
    overflowed_ = true;
    attempts_done_ = k;
    return overflow_record(k);
  }

  accumulated_ = std::move(next_accumulated);
  segments_ = std::move(next_segments);
  think_tokens_ += segment.token_count;
  last_status_ = segment.stop_reason == StopReason::StopSequence ? TraceStatus::Closed : TraceStatus::Unterminated;
  attempts_done_ = k;

  AttemptRecord r;
  r.instance_id = instance_.id;
  r.attempt_index = k;
  r.trace.think_segments = segments_;
  r.trace.final_text = std::move(answer.final_text);
  r.trace.status = last_status_;
  r.trace.token_count = think_tokens_ + answer.token_count;
  r.verdict = answer.verdict;
  r.cumulative_tokens = think_tokens_;
  r.reflective_counts = count_reflective(think_text(), lexicon_);
  return r;
}

EpisodeResult run_stts(const PreferenceInstance& instance, const JudgePrompt& prompt, Backend& backend,
                       const ForcingConfig& cfg, const ReflectiveLexicon& lexicon) {
  cfg.validate();
  EpisodeResult result;
  Episode episode(instance, prompt, backend, cfg, lexicon);
  try {
    while (episode.attempts_done() < cfg.budget) result.records.push_back(episode.step());
  } catch (const BackendError& e) {
    result.error = e.what();
  }
  return result;
}

}  // namespace stts
