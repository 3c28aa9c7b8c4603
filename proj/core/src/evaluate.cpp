#include "stts/evaluate.hpp"

#include <algorithm>
#include <atomic>
#include <fstream>
#include <mutex>
#include <set>
#include <thread>

#include <fmt/format.h>

#include "stts/jsonl.hpp"
#include "stts/stats.hpp"

#ifndef STTS_VERSION
#define STTS_VERSION "0.0.0"
#endif

namespace stts {

using nlohmann::json;

std::string harness_version() { return STTS_VERSION; }

LabelMap labels_of(const std::vector<PreferenceInstance>& dataset) {
  LabelMap out;
  out.reserve(dataset.size());
  for (const auto& inst : dataset) out.emplace(inst.id, inst.label);
  return out;
}

double accuracy(std::span<const Verdict> verdicts, std::span<const Preference> labels) {
  if (verdicts.empty()) throw std::invalid_argument("accuracy of an empty set");
  if (verdicts.size() != labels.size()) throw std::invalid_argument("accuracy: verdict/label count mismatch");
  std::size_t correct = 0;
  for (std::size_t i = 0; i < verdicts.size(); ++i) {
    const auto predicted = verdict_to_label(verdicts[i]);
    if (predicted && *predicted == to_int(labels[i])) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(verdicts.size());
}

double accuracy(const std::vector<AttemptRecord>& records, const LabelMap& labels) {
  std::vector<Verdict> verdicts;
  std::vector<Preference> truth;
  verdicts.reserve(records.size());
  truth.reserve(records.size());
  for (const auto& r : records) {
    auto it = labels.find(r.instance_id);
    if (it == labels.end()) throw std::invalid_argument("no label for instance '" + r.instance_id + "'");
    verdicts.push_back(r.verdict);
    truth.push_back(it->second);
  }
  return accuracy(verdicts, truth);
}

std::optional<double> delta_relative(double acc_init, double acc_stts) {
  if (!(acc_init >= 0 && acc_init <= 1) || !(acc_stts >= 0 && acc_stts <= 1)) {
    throw std::invalid_argument("delta_relative: accuracies must lie in [0, 1]");
  }
  if (acc_init == 1.0) return std::nullopt;
  return (acc_stts - acc_init) / (1.0 - acc_init) * 100.0;
}

std::optional<double> trend_r(std::span<const std::pair<int, double>> points) {
  if (points.size() < 2) throw std::invalid_argument("trend_r needs at least two points");
  std::set<int> seen;
  std::vector<double> xs;
  std::vector<double> ys;
  for (const auto& [index, acc] : points) {
    if (!seen.insert(index).second) throw std::invalid_argument("trend_r: repeated attempt index");
    xs.push_back(index);
    ys.push_back(acc);
  }
  return stats::pearson(xs, ys);
}

EvaluationReport aggregate(std::vector<AttemptRecord> records, const LabelMap& labels, int budget) {
  if (budget < 1) throw std::invalid_argument("aggregate: budget must be >= 1");
  if (records.empty()) throw std::invalid_argument("aggregate: no records");
  std::stable_sort(records.begin(), records.end(), [](const AttemptRecord& a, const AttemptRecord& b) {
    return std::tie(a.instance_id, a.attempt_index) < std::tie(b.instance_id, b.attempt_index);
  });
  validate_attempt_sequence(records);

  const auto b = static_cast<std::size_t>(budget);
  EvaluationReport report;
  report.counts.assign(b, {});
  std::vector<std::int64_t> token_sums(b, 0);
  std::size_t instances = 0;

  for (std::size_t i = 0; i < records.size();) {
    const auto& id = records[i].instance_id;
    std::size_t j = i;
    while (j < records.size() && records[j].instance_id == id) ++j;
    if (j - i != b) {
      throw InvariantError("instance '" + id + "' has " + std::to_string(j - i) + " attempts, expected " +
                           std::to_string(budget));
    }
    auto label = labels.find(id);
    if (label == labels.end()) throw std::invalid_argument("no label for instance '" + id + "'");
    for (std::size_t k = 0; k < b; ++k) {
      const auto& r = records[i + k];
      const auto predicted = verdict_to_label(r.verdict);
      auto& c = report.counts[k];
      if (!predicted) {
        ++c.unparseable;
      } else if (*predicted == to_int(label->second)) {
        ++c.correct;
      } else {
        ++c.incorrect;
      }
      token_sums[k] += r.cumulative_tokens;
    }
    ++instances;
    i = j;
  }

  const auto n = static_cast<double>(instances);
  std::vector<std::pair<int, double>> points;
  for (std::size_t k = 0; k < b; ++k) {
    report.per_attempt_accuracy.push_back(static_cast<double>(report.counts[k].correct) / n);
    report.avg_tokens_per_attempt.push_back(static_cast<double>(token_sums[k]) / n);
    points.emplace_back(static_cast<int>(k) + 1, report.per_attempt_accuracy.back());
  }
  for (std::size_t k = 1; k < b; ++k) {
    report.delta_relative.push_back(delta_relative(report.per_attempt_accuracy[0], report.per_attempt_accuracy[k]));
  }
  if (b >= 2) report.trend_r = trend_r(points);
  return report;
}

void RunConfig::validate() const {
  forcing.validate();
  if (parallelism < 1) throw InvariantError("parallelism must be >= 1");
  if (!(max_failure_fraction >= 0 && max_failure_fraction <= 1)) {
    throw InvariantError("max_failure_fraction must lie in [0, 1]");
  }
}

std::string report_csv(const EvaluationReport& report) {
  std::string out = "attempt_index,accuracy,delta_relative,avg_tokens\n";
  for (std::size_t k = 0; k < report.per_attempt_accuracy.size(); ++k) {
    std::string delta;
    if (k > 0 && report.delta_relative[k - 1]) delta = fmt::format("{}", *report.delta_relative[k - 1]);
    out += fmt::format("{},{},{},{}\n", k + 1, report.per_attempt_accuracy[k], delta,
                       report.avg_tokens_per_attempt[k]);
  }
  return out;
}

namespace {

AttemptRecord record_from_line(const json& j, const std::string& where, std::size_t line) {
  try {
    return j.get<AttemptRecord>();
  } catch (const std::exception& e) {
    throw JsonlError(where + ":" + std::to_string(line) + ": " + e.what(), line);
  }
}

// Reads an existing log for resumption. A torn final line (interrupted write)
// is dropped; corruption anywhere else is an error.
std::vector<AttemptRecord> read_log_for_resume(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) return {};
  std::vector<std::string> lines;
  for (std::string line; std::getline(in, line);) lines.push_back(std::move(line));
  std::vector<AttemptRecord> out;
  for (std::size_t i = 0; i < lines.size(); ++i) {
    if (lines[i].find_first_not_of(" \t\r") == std::string::npos) continue;
    json j;
    try {
      j = json::parse(lines[i]);
    } catch (const json::parse_error&) {
      if (i + 1 == lines.size()) break;
      throw JsonlError(path.string() + ":" + std::to_string(i + 1) + ": malformed attempt record", i + 1);
    }
    out.push_back(record_from_line(j, path.string(), i + 1));
  }
  return out;
}

}  // namespace

std::vector<AttemptRecord> read_attempt_log(const std::filesystem::path& path) {
  std::vector<AttemptRecord> out;
  for (const auto& line : read_jsonl(path)) out.push_back(record_from_line(line.value, path.string(), line.line_number));
  return out;
}

RunResult evaluate_run(const std::vector<PreferenceInstance>& dataset, const TemplateSpec& tmpl, Backend& backend,
                       const RunConfig& cfg, const ReflectiveLexicon& lexicon, const json& config_echo) {
  cfg.validate();
  if (dataset.empty()) throw std::invalid_argument("evaluate_run: dataset is empty");
  ensure_writable_dir(cfg.output_dir);

  const int budget = cfg.forcing.budget;
  const auto labels = labels_of(dataset);
  const auto log_path = cfg.output_dir / kAttemptLogName;

  // Episodes that are already complete in the log, keyed by instance id.
  std::map<std::string, std::vector<AttemptRecord>> done;
  if (cfg.resume) {
    std::map<std::string, std::vector<AttemptRecord>> partial;
    for (auto& r : read_log_for_resume(log_path)) {
      if (labels.contains(r.instance_id)) partial[r.instance_id].push_back(std::move(r));
    }
    for (auto& [id, recs] : partial) {
      bool contiguous = static_cast<int>(recs.size()) == budget;
      for (std::size_t k = 0; contiguous && k < recs.size(); ++k) {
        contiguous = recs[k].attempt_index == static_cast<int>(k) + 1;
      }
      if (contiguous) done.emplace(id, std::move(recs));
    }
  }

  RunResult result;
  result.instances = dataset.size();
  result.resumed = done.size();

  {
    JsonlWriter log(log_path, JsonlWriter::Mode::Truncate);
    for (const auto& inst : dataset) {
      auto it = done.find(inst.id);
      if (it == done.end()) continue;
      std::vector<json> lines(it->second.begin(), it->second.end());
      log.write_all(lines);
    }
  }

  std::vector<const PreferenceInstance*> pending;
  for (const auto& inst : dataset) {
    if (!done.contains(inst.id)) pending.push_back(&inst);
  }

  JsonlWriter log(log_path, JsonlWriter::Mode::Append);
  std::mutex results_mutex;
  std::vector<InstanceFailure> failures;
  std::atomic<std::size_t> next{0};
  std::atomic<std::size_t> failed{0};
  std::atomic<bool> aborted{false};
  const auto allowed_failures =
      static_cast<std::size_t>(cfg.max_failure_fraction * static_cast<double>(dataset.size()));

  auto worker = [&] {
    while (!aborted.load()) {
      const auto i = next.fetch_add(1);
      if (i >= pending.size()) return;
      const auto& inst = *pending[i];
      const auto prompt = render(tmpl, inst);
      auto episode = run_stts(inst, prompt, backend, cfg.forcing, lexicon);
      if (episode.complete(budget)) {
        std::vector<json> lines(episode.records.begin(), episode.records.end());
        log.write_all(lines);
        std::lock_guard lock(results_mutex);
        done.emplace(inst.id, std::move(episode.records));
      } else {
        {
          std::lock_guard lock(results_mutex);
          failures.push_back({inst.id, episode.error.value_or("incomplete episode"),
                              static_cast<int>(episode.records.size())});
        }
        if (failed.fetch_add(1) + 1 > allowed_failures) aborted.store(true);
      }
    }
  };

  const auto workers = std::min({static_cast<std::size_t>(cfg.parallelism), backend.max_concurrency(),
                                 std::max<std::size_t>(pending.size(), 1)});
  {
    std::vector<std::jthread> pool;
    pool.reserve(workers);
    for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(worker);
  }

  std::sort(failures.begin(), failures.end(),
            [](const InstanceFailure& a, const InstanceFailure& b) { return a.instance_id < b.instance_id; });
  if (aborted.load()) {
    throw RunAborted(fmt::format("run aborted: {} of {} instances failed (limit {}); first failure: {}: {}",
                                 failed.load(), dataset.size(), allowed_failures, failures.front().instance_id,
                                 failures.front().error));
  }
  if (done.empty()) throw RunAborted("run aborted: no instance completed");
  result.failures = std::move(failures);

  // Workers append in completion order; settle the log into dataset order so
  // reruns are byte-identical regardless of parallelism.
  {
    std::string settled;
    for (const auto& inst : dataset) {
      auto it = done.find(inst.id);
      if (it == done.end()) continue;
      for (const auto& r : it->second) settled += json(r).dump() + "\n";
    }
    write_file_atomic(log_path, settled);
  }

  std::vector<AttemptRecord> all;
  std::map<std::string, std::vector<AttemptRecord>> by_tag;
  for (const auto& inst : dataset) {
    auto it = done.find(inst.id);
    if (it == done.end()) continue;
    for (const auto& r : it->second) {
      all.push_back(r);
      by_tag[inst.source_tag].push_back(r);
    }
  }
  result.report = aggregate(std::move(all), labels, budget);
  for (auto& [tag, recs] : by_tag) result.by_source.emplace(tag, aggregate(std::move(recs), labels, budget));

  json forcing{{"budget", budget},
               {"injection", cfg.forcing.injection},
               {"wire_injection", cfg.forcing.wire_injection()},
               {"finalize_suffix", cfg.forcing.finalize_suffix},
               {"think_open", cfg.forcing.markers.think_open},
               {"think_close", cfg.forcing.markers.think_close},
               {"verdict_a", cfg.forcing.markers.verdict_a},
               {"verdict_b", cfg.forcing.markers.verdict_b},
               {"max_tokens", cfg.forcing.max_tokens},
               {"finalize_max_tokens", cfg.forcing.finalize_max_tokens},
               {"temperature", cfg.forcing.temperature},
               {"seed", cfg.forcing.seed ? json(*cfg.forcing.seed) : json(nullptr)},
               {"template_id", tmpl.id()}};
  json failed_json = json::array();
  for (const auto& f : result.failures) {
    failed_json.push_back({{"instance_id", f.instance_id}, {"error", f.error}, {"attempts_completed", f.attempts_completed}});
  }
  json report = result.report;
  report["harness_version"] = harness_version();
  report["forcing"] = forcing;
  report["config"] = config_echo;
  report["instances"] = dataset.size();
  report["evaluated"] = dataset.size() - result.failures.size();
  report["failed"] = failed_json;
  report["by_source"] = json::object();
  for (const auto& [tag, rep] : result.by_source) report["by_source"][tag] = rep;
  result.report_json = report;

  write_file_atomic(cfg.output_dir / kReportJsonName, report.dump(2) + "\n");
  write_file_atomic(cfg.output_dir / kReportCsvName, report_csv(result.report));
  return result;
}

}  // namespace stts
