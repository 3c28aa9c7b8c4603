#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "stts/backend.hpp"
#include "stts/forcing.hpp"
#include "stts/model.hpp"
#include "stts/prompt.hpp"
#include "stts/trace.hpp"

namespace stts {

/// A trajectory kept for supervised fine-tuning.
struct CurationRecord {
  std::string instance_id;
  int accepted_at_cycle = 0;  // 0 = first pass, k = after k forced reflections
  std::string trajectory;     // think text including injected reflections, without think markers
  std::string final_text;
  Verdict verdict = Verdict::Unparseable;

  friend bool operator==(const CurationRecord&, const CurationRecord&) = default;
};

struct PersistentFailure {
  std::string instance_id;
  Verdict last_verdict = Verdict::Unparseable;
  bool context_overflow = false;
};

struct IoFailure {
  std::string instance_id;
  int cycle = 0;
  std::string error;
};

/// One cell of the curation table: newly correct out of the pool entering the cycle.
struct CycleStats {
  std::int64_t newly_correct = 0;
  std::int64_t pool = 0;
  std::int64_t unparseable = 0;  // pool members whose verdict could not be parsed this cycle

  friend bool operator==(const CycleStats&, const CycleStats&) = default;
};

struct SourceStats {
  std::int64_t original = 0;  // instances entering cycle 0 (clean I/O only)
  std::int64_t failed_io = 0;
  std::vector<CycleStats> cycles;

  friend bool operator==(const SourceStats&, const SourceStats&) = default;
};

/// Ledger keyed by source tag. Instances that failed on I/O are left out of
/// every pool, so pool[k+1] == pool[k] - newly_correct[k] holds exactly.
struct CurationStats {
  std::map<std::string, SourceStats> by_source;

  /// Columns: Dataset, Original Number, Attempt 0..K; cells "correct/total".
  std::string table() const;
  nlohmann::json to_json() const;
};

struct CurationResult {
  std::vector<CurationRecord> accepted;
  std::vector<PersistentFailure> persistent_failures;
  std::vector<IoFailure> failed_io;
  CurationStats stats;
};

/// Rejection-sampling curation. Cycle 0 is plain generation; each of the
/// `cycles` later cycles forces one more reflection on instances still
/// incorrect and accepts those that turn correct. Instances run concurrently
/// up to `parallelism`; results are reduced in instance-id order.
CurationResult curate(const std::vector<PreferenceInstance>& instances, const TemplateSpec& tmpl, Backend& backend,
                      int cycles, const ForcingConfig& forcing, int parallelism = 1,
                      const ReflectiveLexicon& lexicon = ReflectiveLexicon::standard());

/// Writes one JSONL line per accepted record, sorted by instance id, with
/// query, answers, the full trajectory wrapped in think markers, the final
/// answer and the cycle. Throws std::invalid_argument when `accepted` is
/// empty and std::runtime_error on write failure.
void emit_sft_dataset(const std::vector<CurationRecord>& accepted, const std::vector<PreferenceInstance>& instances,
                      const MarkerConfig& markers, const std::filesystem::path& path);

}  // namespace stts
