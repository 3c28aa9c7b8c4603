#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "stts/backend.hpp"
#include "stts/forcing.hpp"
#include "stts/model.hpp"
#include "stts/prompt.hpp"
#include "stts/trace.hpp"

namespace stts {

using LabelMap = std::unordered_map<std::string, Preference>;

LabelMap labels_of(const std::vector<PreferenceInstance>& dataset);

/// Fraction of verdicts equal to their label; Unparseable never matches.
/// Throws std::invalid_argument on empty input or a size mismatch.
double accuracy(std::span<const Verdict> verdicts, std::span<const Preference> labels);

/// Same, for records taken at one fixed attempt. Every record needs a label.
double accuracy(const std::vector<AttemptRecord>& records, const LabelMap& labels);

/// Improvement as a percentage of the remaining headroom:
/// (acc_stts - acc_init) / (1 - acc_init) * 100. nullopt when acc_init is 1.
/// Throws std::invalid_argument for accuracies outside [0, 1].
std::optional<double> delta_relative(double acc_init, double acc_stts);

/// Pearson correlation of attempt index against accuracy. Throws on fewer
/// than two points or repeated indices; nullopt when accuracy is constant.
std::optional<double> trend_r(std::span<const std::pair<int, double>> points);

/// Reduces complete episodes (attempts 1..budget per instance) into a report.
/// Records are sorted by instance id first, so the result does not depend on
/// completion order.
EvaluationReport aggregate(std::vector<AttemptRecord> records, const LabelMap& labels, int budget);

struct RunConfig {
  ForcingConfig forcing;
  int parallelism = 1;
  std::filesystem::path output_dir = "runs";
  bool resume = false;
  // The run aborts once more than this fraction of instances failed on I/O.
  double max_failure_fraction = 0.1;

  void validate() const;
};

struct InstanceFailure {
  std::string instance_id;
  std::string error;
  int attempts_completed = 0;
};

class RunAborted : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct RunResult {
  EvaluationReport report;
  std::map<std::string, EvaluationReport> by_source;
  std::vector<InstanceFailure> failures;
  std::size_t instances = 0;  // dataset size
  std::size_t resumed = 0;    // episodes reused from an existing log
  nlohmann::json report_json;
};

inline constexpr const char* kAttemptLogName = "attempts.jsonl";
inline constexpr const char* kReportJsonName = "report.json";
inline constexpr const char* kReportCsvName = "report.csv";

/// Runs every instance through budget forcing under bounded parallelism,
/// appending each finished episode to output_dir/attempts.jsonl, then writes
/// report.json and report.csv. With resume set, episodes already complete in
/// the log are reused and not re-run. Instances whose episode fails on I/O are
/// reported and excluded from the metrics. Throws RunAborted past the failure
/// threshold and std::invalid_argument for an empty dataset.
RunResult evaluate_run(const std::vector<PreferenceInstance>& dataset, const TemplateSpec& tmpl, Backend& backend,
                       const RunConfig& cfg, const ReflectiveLexicon& lexicon = ReflectiveLexicon::standard(),
                       const nlohmann::json& config_echo = nlohmann::json::object());

/// attempt_index,accuracy,delta_relative,avg_tokens
std::string report_csv(const EvaluationReport& report);

/// Loads an attempt log written by evaluate_run.
std::vector<AttemptRecord> read_attempt_log(const std::filesystem::path& path);

std::string harness_version();

}  // namespace stts
