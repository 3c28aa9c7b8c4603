#include "cli.hpp"

#include <algorithm>
#include <cstdlib>
#include <memory>
#include <set>
#include <sstream>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "config.hpp"
#include "stts/analysis.hpp"
#include "stts/curate.hpp"
#include "stts/evaluate.hpp"
#include "stts/jsonl.hpp"
#include "stts/rl_selfcheck.hpp"
#include "stts/scripted_backend.hpp"

namespace stts::cli {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

struct Flags {
  std::string config;
  std::vector<std::string> datasets;
  int budget = 0;
  std::string injection;
  int parallelism = 0;
  int cycles = 0;
  std::string output;
  std::uint64_t seed = 0;
  bool resume = false;
  std::string script;

  // analyze
  std::string log;
  int attempt = 1;
  std::vector<std::int64_t> bins{0, 1, 5, 10};
  std::int64_t bin_width = 256;
  std::size_t words = 0;
  bool json_tables = false;

  // rl-check
  int seeds = 10;
  double tolerance = 1e-5;
  std::vector<std::string> fixtures;

  CLI::Option* budget_opt = nullptr;
  CLI::Option* injection_opt = nullptr;
  CLI::Option* parallelism_opt = nullptr;
  CLI::Option* cycles_opt = nullptr;
  CLI::Option* output_opt = nullptr;
  CLI::Option* seed_opt = nullptr;
};

// Merges command-line overrides onto the file config.
AppConfig effective_config(const Flags& f) {
  AppConfig c = f.config.empty() ? AppConfig{} : load_config(f.config);
  if (!f.datasets.empty()) {
    c.datasets.clear();
    for (const auto& d : f.datasets) c.datasets.push_back(dataset_from_flag(d));
  }
  if (f.budget_opt && f.budget_opt->count()) c.forcing.budget = f.budget;
  if (f.injection_opt && f.injection_opt->count()) c.forcing.injection = f.injection;
  if (f.parallelism_opt && f.parallelism_opt->count()) c.run.parallelism = f.parallelism;
  if (f.cycles_opt && f.cycles_opt->count()) c.curation.cycles = f.cycles;
  if (f.output_opt && f.output_opt->count()) c.run.output = f.output;
  if (f.seed_opt && f.seed_opt->count()) c.forcing.seed = f.seed;
  if (f.resume) c.run.resume = true;
  if (!f.script.empty()) {
    c.backend.kind = "scripted";
    c.backend.script = f.script;
  }
  if (const char* url = std::getenv("STTS_BASE_URL"); url && *url) c.backend.http.url = url;
  return c;
}

std::unique_ptr<Backend> make_backend(const AppConfig& c) {
  if (c.backend.kind == "scripted") {
    if (c.backend.script.empty()) throw ConfigError("scripted backend needs backend.script or --script");
    if (!fs::is_regular_file(c.backend.script)) throw ConfigError("script file not found: " + c.backend.script.string());
    try {
      return std::make_unique<ScriptedBackend>(ScriptedBackend::load_script(c.backend.script),
                                               c.forcing.markers.think_close);
    } catch (const std::exception& e) {
      throw ConfigError(std::string("script: ") + e.what());
    }
  }
  try {
    return std::make_unique<HttpBackend>(c.backend.http);
  } catch (const std::exception& e) {
    throw ConfigError(std::string("backend: ") + e.what());
  }
}

TemplateSpec make_template(const AppConfig& c) {
  try {
    auto t = c.template_path ? TemplateSpec::load(*c.template_path, c.template_id) : TemplateSpec::default_pairwise();
    if (t.markers() != std::pair{c.forcing.markers.verdict_a, c.forcing.markers.verdict_b}) {
      throw ConfigError(fmt::format("template markers {} / {} differ from forcing.markers verdicts {} / {}",
                                    t.markers().first, t.markers().second, c.forcing.markers.verdict_a,
                                    c.forcing.markers.verdict_b));
    }
    return t;
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    throw ConfigError(std::string("template: ") + e.what());
  }
}

ReflectiveLexicon make_lexicon(const AppConfig& c) {
  if (!c.lexicon_path) return ReflectiveLexicon::standard();
  try {
    return ReflectiveLexicon::load(*c.lexicon_path);
  } catch (const std::exception& e) {
    throw ConfigError(std::string("lexicon: ") + e.what());
  }
}

void require_datasets(const AppConfig& c) {
  if (c.datasets.empty()) throw ConfigError("no dataset given; use --dataset or the config 'datasets' section");
  for (const auto& d : c.datasets) {
    try {
      d.validate();
    } catch (const std::exception& e) {
      throw ConfigError(e.what());
    }
  }
}

LoadResult load_checked(const DatasetSpec& spec) {
  try {
    auto r = load_dataset(spec);
    for (const auto& rej : r.rejected) {
      spdlog::warn("{}: line {} rejected: {}", spec.path.string(), rej.line_number, rej.reason);
    }
    if (r.instances.empty()) throw ConfigError("dataset has no usable instances: " + spec.path.string());
    return r;
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    throw ConfigError(e.what());
  }
}

void prepare_output(const fs::path& dir) {
  try {
    ensure_writable_dir(dir);
  } catch (const std::exception& e) {
    throw ConfigError(e.what());
  }
}

void write_provenance(const fs::path& dir, const std::string& command, const AppConfig& c, const TemplateSpec* tmpl,
                      const ForcingConfig& forcing) {
  json p{{"harness_version", harness_version()},
         {"command", command},
         {"seed", forcing.seed ? json(*forcing.seed) : json(nullptr)},
         {"injection", forcing.injection},
         {"wire_injection", forcing.wire_injection()},
         {"temperature", forcing.temperature},
         {"template_id", tmpl ? json(tmpl->id()) : json(nullptr)},
         {"config", c.echo()}};
  write_file_atomic(dir / "provenance.json", p.dump(2) + "\n");
}

std::string fmt_opt(const std::optional<double>& v, const char* spec = "{:.4f}") {
  return v ? fmt::format(fmt::runtime(spec), *v) : std::string("-");
}

std::string render_table(const std::vector<std::vector<std::string>>& rows) {
  std::vector<std::size_t> width(rows.front().size(), 0);
  for (const auto& row : rows) {
    for (std::size_t c = 0; c < row.size(); ++c) width[c] = std::max(width[c], row[c].size());
  }
  std::string out;
  for (std::size_t r = 0; r < rows.size(); ++r) {
    std::string line;
    for (std::size_t c = 0; c < rows[r].size(); ++c) {
      if (c > 0) line += " | ";
      line += fmt::format("{:<{}}", rows[r][c], width[c]);
    }
    while (!line.empty() && line.back() == ' ') line.pop_back();
    out += line + '\n';
    if (r == 0) {
      std::string sep;
      for (std::size_t c = 0; c < width.size(); ++c) {
        if (c > 0) sep += "-|-";
        sep += std::string(width[c], '-');
      }
      out += sep + '\n';
    }
  }
  return out;
}

std::vector<std::string> summary_row(const std::string& tag, const EvaluationReport& r) {
  const auto& acc = r.per_attempt_accuracy;
  const auto best = std::max_element(acc.begin(), acc.end());
  const auto best_index = static_cast<std::size_t>(best - acc.begin());
  std::optional<double> delta;
  if (best_index > 0 && best_index - 1 < r.delta_relative.size()) delta = r.delta_relative[best_index - 1];
  return {tag,
          fmt::format("{:.4f}", acc.front()),
          fmt::format("{:.4f}", *best),
          std::to_string(best_index + 1),
          fmt_opt(delta, "{:.2f}"),
          fmt_opt(r.trend_r)};
}

int cmd_eval(const Flags& f, std::ostream& out) {
  auto c = effective_config(f);
  require_datasets(c);
  std::set<std::string> tags;
  for (const auto& d : c.datasets) {
    if (!tags.insert(d.source_tag).second) throw ConfigError("duplicate dataset tag '" + d.source_tag + "'");
  }
  RunConfig run;
  run.forcing = c.forcing;
  run.parallelism = c.run.parallelism;
  run.resume = c.run.resume;
  run.max_failure_fraction = c.run.max_failure_fraction;
  try {
    run.validate();
  } catch (const std::exception& e) {
    throw ConfigError(e.what());
  }
  const auto tmpl = make_template(c);
  const auto lexicon = make_lexicon(c);
  prepare_output(c.run.output);
  for (const auto& d : c.datasets) prepare_output(c.run.output / d.source_tag);
  auto backend = make_backend(c);

  std::vector<std::pair<DatasetSpec, std::vector<PreferenceInstance>>> loaded;
  for (const auto& d : c.datasets) loaded.emplace_back(d, load_checked(d).instances);

  write_provenance(c.run.output, "eval", c, &tmpl, c.forcing);

  std::vector<std::vector<std::string>> rows{
      {"Dataset", "Attempt-1 Acc", "Best Acc", "Best Attempt", "Delta-relative", "Trend r"}};
  for (const auto& [spec, instances] : loaded) {
    run.output_dir = c.run.output / spec.source_tag;
    RunResult result;
    try {
      result = evaluate_run(instances, tmpl, *backend, run, lexicon, c.echo());
    } catch (const RunAborted& e) {
      spdlog::error("{}: {}", spec.source_tag, e.what());
      return kExitFailure;
    }
    if (result.resumed > 0) spdlog::info("{}: reused {} finished episodes", spec.source_tag, result.resumed);
    for (const auto& fail : result.failures) {
      spdlog::warn("{}: instance {} failed: {}", spec.source_tag, fail.instance_id, fail.error);
    }
    for (const auto& [tag, rep] : result.by_source) rows.push_back(summary_row(tag, rep));
  }
  out << render_table(rows);
  return kExitOk;
}

int cmd_curate(const Flags& f, std::ostream& out) {
  auto c = effective_config(f);
  require_datasets(c);
  if (c.curation.cycles < 0) throw ConfigError("cycles must be >= 0");
  if (c.run.parallelism < 1) throw ConfigError("parallelism must be >= 1");
  ForcingConfig forcing = c.forcing;
  forcing.temperature = c.curation.temperature;
  forcing.budget = c.curation.cycles + 1;
  try {
    forcing.validate();
  } catch (const std::exception& e) {
    throw ConfigError(e.what());
  }
  const auto tmpl = make_template(c);
  const auto lexicon = make_lexicon(c);
  prepare_output(c.run.output);
  auto backend = make_backend(c);

  std::vector<PreferenceInstance> instances;
  std::set<std::string> ids;
  for (const auto& d : c.datasets) {
    for (auto& inst : load_checked(d).instances) {
      if (!ids.insert(inst.id).second) throw ConfigError("instance id '" + inst.id + "' appears in two datasets");
      instances.push_back(std::move(inst));
    }
  }

  write_provenance(c.run.output, "curate", c, &tmpl, forcing);
  const auto result = curate(instances, tmpl, *backend, c.curation.cycles, forcing, c.run.parallelism, lexicon);

  const auto& dir = c.run.output;
  if (result.accepted.empty()) {
    spdlog::warn("no trajectory was accepted; sft.jsonl is empty");
    write_file_atomic(dir / "sft.jsonl", "");
  } else {
    emit_sft_dataset(result.accepted, instances, c.forcing.markers, dir / "sft.jsonl");
  }
  std::string persistent;
  for (const auto& p : result.persistent_failures) {
    persistent += json{{"instance_id", p.instance_id},
                       {"last_verdict", to_string(p.last_verdict)},
                       {"context_overflow", p.context_overflow}}
                      .dump() +
                  "\n";
  }
  write_file_atomic(dir / "persistent_failures.jsonl", persistent);
  std::string failed;
  for (const auto& fl : result.failed_io) {
    failed += json{{"instance_id", fl.instance_id}, {"cycle", fl.cycle}, {"error", fl.error}}.dump() + "\n";
  }
  write_file_atomic(dir / "failed_io.jsonl", failed);
  const auto table = result.stats.table();
  write_file_atomic(dir / "stats.json", result.stats.to_json().dump(2) + "\n");
  write_file_atomic(dir / "stats.txt", table);
  out << table;
  out << fmt::format("accepted {}, persistent {}, failed on I/O {}\n", result.accepted.size(),
                     result.persistent_failures.size(), result.failed_io.size());
  return kExitOk;
}

int cmd_analyze(const Flags& f, std::ostream& out, std::ostream& err) {
  auto c = effective_config(f);
  if (f.log.empty()) throw ConfigError("analyze needs an attempt log path");
  const fs::path log_path = f.log;
  if (!fs::is_regular_file(log_path)) throw ConfigError("attempt log not found: " + log_path.string());
  require_datasets(c);
  if (f.attempt < 1) throw ConfigError("--attempt must be >= 1");
  std::optional<analysis::Bins> bins;
  try {
    bins.emplace(f.bins);
  } catch (const std::exception& e) {
    throw ConfigError(e.what());
  }
  if (f.bin_width < 1) throw ConfigError("--bin-width must be >= 1");
  const fs::path dir = f.output_opt->count() ? fs::path(f.output) : log_path.parent_path() / "analysis";
  prepare_output(dir);

  LabelMap labels;
  for (const auto& d : c.datasets) {
    for (const auto& inst : load_checked(d).instances) labels.emplace(inst.id, inst.label);
  }

  std::vector<AttemptRecord> log;
  try {
    log = read_attempt_log(log_path);
  } catch (const JsonlError& e) {
    err << fmt::format("error: malformed attempt log at line {}: {}\n", e.line(), e.what());
    return kExitFailure;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitFailure;
  }
  if (log.empty()) {
    err << "error: attempt log is empty: " << log_path.string() << '\n';
    return kExitFailure;
  }
  const auto unlabeled = std::count_if(log.begin(), log.end(), [&](const auto& r) { return !labels.contains(r.instance_id); });
  if (unlabeled == static_cast<std::ptrdiff_t>(log.size())) {
    err << "error: no record in the log matches an instance of the given datasets\n";
    return kExitFailure;
  }
  if (unlabeled > 0) spdlog::warn("{} log records have no label in the given datasets and are ignored", unlabeled);

  const auto trans = analysis::transitions(log, labels);
  const auto freq = analysis::reflective_frequency_table(log, labels, *bins, f.attempt);
  const auto by_refl = analysis::accuracy_by_reflection(log, labels, *bins, f.attempt);
  const auto lengths = analysis::length_stats(log, labels, true, f.bin_width, f.attempt);
  write_file_atomic(dir / "transitions.csv", trans.edge_list_csv());
  write_file_atomic(dir / "reflective_frequency.csv", freq.csv());
  write_file_atomic(dir / "accuracy_by_reflection.csv", analysis::accuracy_by_reflection_csv(by_refl));
  write_file_atomic(dir / "length_stats.csv", lengths.csv());
  if (f.json_tables) {
    json rows = json::array();
    for (const auto& r : by_refl) {
      rows.push_back({{"bin", r.bin}, {"instances", r.instances}, {"accuracy", r.accuracy ? json(*r.accuracy) : json(nullptr)}});
    }
    json all{{"transitions", trans.to_json()},
             {"reflective_frequency", freq.to_json()},
             {"accuracy_by_reflection", rows},
             {"length_stats", lengths.to_json()}};
    write_file_atomic(dir / "analysis.json", all.dump(2) + "\n");
  }
  if (f.words > 0) {
    std::string words = "word,count\n";
    for (const auto& [w, n] : analysis::word_frequency(log, analysis::default_stopwords(), f.attempt, f.words)) {
      words += fmt::format("{},{}\n", w, n);
    }
    write_file_atomic(dir / "word_frequency.csv", words);
  }

  out << fmt::format("{} instances analysed over {} attempts", trans.instances, trans.attempts);
  if (!trans.excluded.empty()) out << fmt::format(" ({} incomplete, excluded from transitions)", trans.excluded.size());
  out << '\n';
  std::vector<std::vector<std::string>> rows{{"Reflective words", "Instances", "Accuracy"}};
  for (const auto& r : by_refl) rows.push_back({r.bin, std::to_string(r.instances), fmt_opt(r.accuracy)});
  out << render_table(rows);
  out << "wrote " << dir.string() << '\n';
  return kExitOk;
}

int cmd_rlcheck(const Flags& f, std::ostream& out, std::ostream& err) {
  auto c = effective_config(f);
  rl::SelfCheckOptions opts;
  opts.seeds = f.seeds;
  opts.grad_tolerance = f.tolerance;
  opts.config = c.rl;
  if (f.seed_opt->count()) opts.base_seed = f.seed;
  if (opts.seeds < 0) throw ConfigError("--seeds must be >= 0");
  if (!(opts.grad_tolerance > 0)) throw ConfigError("--tolerance must be > 0");
  try {
    opts.config.validate();
  } catch (const std::exception& e) {
    throw ConfigError(std::string("rl: ") + e.what());
  }
  std::vector<rl::FixtureBatch> fixtures;
  for (const auto& path : f.fixtures) {
    try {
      auto batches = rl::load_fixture(path);
      fixtures.insert(fixtures.end(), batches.begin(), batches.end());
    } catch (const std::exception& e) {
      throw ConfigError(path + ": " + e.what());
    }
  }

  const auto results = rl::run_selfcheck(opts, fixtures);
  std::vector<std::vector<std::string>> rows{{"Check", "Max error", "Tolerance", "Result"}};
  for (const auto& r : results) {
    rows.push_back({r.name, fmt::format("{:.3e}", r.max_error), fmt::format("{:.0e}", r.tolerance),
                    r.passed ? "pass" : "FAIL"});
  }
  out << render_table(rows);
  out << fmt::format("{} seeds, {} fixture batches\n", opts.seeds, fixtures.size());
  bool ok = true;
  for (const auto& r : results) {
    if (!r.passed) {
      err << fmt::format("FAIL {}: {}\n", r.name, r.detail);
      ok = false;
    }
  }
  return ok ? kExitOk : kExitFailure;
}

void add_common(CLI::App* sub, Flags& f) {
  sub->add_option("--config", f.config, "JSON config file")->check(CLI::ExistingFile);
  sub->add_option("--dataset", f.datasets, "Dataset file or 'path=...,format=...,tag=...' (repeatable)");
  sub->add_option("--script", f.script, "Use the scripted backend with this JSONL script");
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Budget-forced LLM-as-a-judge evaluation, curation and analysis", "stts"};
  app.set_version_flag("--version", harness_version());
  app.require_subcommand(1);
  Flags f;

  auto* eval = app.add_subcommand("eval", "Run budget forcing over datasets and write accuracy reports");
  add_common(eval, f);
  f.budget_opt = eval->add_option("--budget", f.budget, "Attempts per instance (attempt 1 is unforced)");
  f.injection_opt = eval->add_option("--injection", f.injection, "Reflective string spliced in place of the think-close marker");
  f.parallelism_opt = eval->add_option("--parallelism", f.parallelism, "Concurrent episodes");
  f.output_opt = eval->add_option("--output", f.output, "Output directory");
  f.seed_opt = eval->add_option("--seed", f.seed, "Sampling seed passed to the backend");
  eval->add_flag("--resume", f.resume, "Reuse finished episodes from an existing attempt log");

  auto* cur = app.add_subcommand("curate", "Rejection-sample reasoning trajectories with forced reflection cycles");
  add_common(cur, f);
  auto* cur_cycles = cur->add_option("--cycles", f.cycles, "Forced reflection cycles after the first pass");
  auto* cur_injection = cur->add_option("--injection", f.injection, "Reflective string spliced in place of the think-close marker");
  auto* cur_par = cur->add_option("--parallelism", f.parallelism, "Concurrent instances");
  auto* cur_output = cur->add_option("--output", f.output, "Output directory");
  auto* cur_seed = cur->add_option("--seed", f.seed, "Sampling seed passed to the backend");

  auto* ana = app.add_subcommand("analyze", "Transition, reflection and length statistics over an attempt log");
  add_common(ana, f);
  ana->add_option("log", f.log, "Attempt log (attempts.jsonl)")->required();
  auto* ana_output = ana->add_option("--output", f.output, "Output directory (default: <log dir>/analysis)");
  ana->add_option("--attempt", f.attempt, "Attempt used for per-trace tables")->capture_default_str();
  ana->add_option("--bins", f.bins, "Reflective-count bin lower bounds")->delimiter(',')->capture_default_str();
  ana->add_option("--bin-width", f.bin_width, "Token-length histogram bin width")->capture_default_str();
  ana->add_flag("--json", f.json_tables, "Also write every table to analysis.json");
  ana->add_option("--words", f.words, "Also write the N most frequent think-text words");

  auto* rlc = app.add_subcommand("rl-check", "Run the policy-gradient kernel self-checks");
  rlc->add_option("--config", f.config, "JSON config file (rl section)")->check(CLI::ExistingFile);
  rlc->add_option("--seeds", f.seeds, "Seeded random repetitions")->capture_default_str();
  rlc->add_option("--tolerance", f.tolerance, "Max relative gradient error")->capture_default_str();
  rlc->add_option("--fixture", f.fixtures, "Columnar batch fixture (repeatable)")->check(CLI::ExistingFile);
  auto* rlc_seed = rlc->add_option("--seed", f.seed, "Base seed");

  std::vector<std::string> storage{"stts"};
  storage.insert(storage.end(), args.begin(), args.end());
  std::vector<char*> argv;
  for (auto& s : storage) argv.push_back(s.data());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (eval->parsed()) return cmd_eval(f, out);
    if (cur->parsed()) {
      f.cycles_opt = cur_cycles;
      f.injection_opt = cur_injection;
      f.parallelism_opt = cur_par;
      f.output_opt = cur_output;
      f.seed_opt = cur_seed;
      return cmd_curate(f, out);
    }
    if (ana->parsed()) {
      f.output_opt = ana_output;
      return cmd_analyze(f, out, err);
    }
    f.seed_opt = rlc_seed;
    return cmd_rlcheck(f, out, err);
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitFailure;
  }
}

}  // namespace stts::cli
