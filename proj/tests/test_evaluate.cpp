#include <cmath>
#include <fstream>
#include <random>

#include <gtest/gtest.h>

#include "support.hpp"
#include "stts/bench.hpp"
#include "stts/evaluate.hpp"
#include "stts/scripted_backend.hpp"

namespace stts {
namespace {

TEST(Accuracy, CountsMatchesAndTreatsUnparseableAsWrong) {
  const std::vector<Verdict> v{Verdict::A, Verdict::B, Verdict::Unparseable, Verdict::A};
  const std::vector<Preference> l{Preference::A, Preference::A, Preference::A, Preference::A};
  EXPECT_DOUBLE_EQ(accuracy(v, l), 0.5);
  EXPECT_THROW(accuracy(std::vector<Verdict>{}, std::vector<Preference>{}), std::invalid_argument);
  EXPECT_THROW(accuracy(v, std::vector<Preference>{Preference::A}), std::invalid_argument);
}

TEST(DeltaRelative, Examples) {
  EXPECT_DOUBLE_EQ(*delta_relative(0.80, 0.90), 50.0);
  EXPECT_DOUBLE_EQ(*delta_relative(0.5, 1.0), 100.0);
  EXPECT_DOUBLE_EQ(*delta_relative(0.5, 0.25), -50.0);
  EXPECT_DOUBLE_EQ(*delta_relative(0.0, 0.3), 30.0);
  EXPECT_FALSE(delta_relative(1.0, 1.0));
  EXPECT_THROW(delta_relative(1.2, 0.5), std::invalid_argument);
  EXPECT_THROW(delta_relative(0.5, -0.1), std::invalid_argument);
}

TEST(DeltaRelative, SignAndFullHeadroomProperties) {
  std::mt19937_64 rng(12);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int i = 0; i < 1000; ++i) {
    const double a = u(rng);
    const double b = u(rng);
    const auto d = *delta_relative(a, b);
    EXPECT_EQ(d > 0, b > a);
    EXPECT_LE(d, 100.0 + 1e-9);
    EXPECT_NEAR(*delta_relative(a, 1.0), 100.0, 1e-9);
    EXPECT_EQ(*delta_relative(a, a), 0.0);
  }
}

TEST(TrendR, KnownSeries) {
  const std::vector<std::pair<int, double>> p{{1, .80}, {2, .85}, {3, .87}, {4, .88}};
  EXPECT_NEAR(*trend_r(p), 0.9431191251430151736, 1e-12);
  const std::vector<std::pair<int, double>> flat{{1, .5}, {2, .5}};
  EXPECT_FALSE(trend_r(flat));
  const std::vector<std::pair<int, double>> one{{1, .5}};
  EXPECT_THROW(trend_r(one), std::invalid_argument);
  const std::vector<std::pair<int, double>> dup{{1, .5}, {1, .6}};
  EXPECT_THROW(trend_r(dup), std::invalid_argument);
}

TEST(TrendR, InvariantUnderPositiveAffineMaps) {
  std::mt19937_64 rng(13);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int i = 0; i < 500; ++i) {
    std::vector<std::pair<int, double>> p;
    std::vector<std::pair<int, double>> q;
    const double scale = 0.01 + u(rng);
    const double shift = u(rng) - 0.5;
    for (int k = 1; k <= 2 + static_cast<int>(rng() % 8); ++k) {
      const double y = u(rng);
      p.emplace_back(k, y);
      q.emplace_back(k, scale * y + shift);
    }
    const auto r = trend_r(p);
    ASSERT_TRUE(r);
    EXPECT_NEAR(*trend_r(q), *r, 1e-9);
    EXPECT_LE(std::abs(*r), 1.0);
  }
}

struct Stts8 {
  std::vector<PreferenceInstance> dataset;
  ScriptedBackend backend;

  Stts8() : backend(ScriptedBackend::load_script(testing::fixture("stts8_script.jsonl"))) {
    DatasetSpec spec;
    spec.path = testing::fixture("stts8.jsonl");
    spec.source_tag = "stts8";
    dataset = load_pairwise(spec).instances;
  }
};

RunConfig run_config(const std::filesystem::path& out, int budget = 4) {
  RunConfig cfg;
  cfg.forcing.budget = budget;
  cfg.output_dir = out;
  return cfg;
}

TEST(EvaluateRun, ScriptedEightInstances) {
  Stts8 s;
  testing::TempDir dir;
  const auto res = evaluate_run(s.dataset, TemplateSpec::default_pairwise(), s.backend, run_config(dir.path()));
  EXPECT_EQ(res.report.per_attempt_accuracy, (std::vector<double>{0.5, 0.75, 0.75, 1.0}));
  ASSERT_EQ(res.report.delta_relative.size(), 3u);
  EXPECT_DOUBLE_EQ(*res.report.delta_relative[0], 50.0);
  EXPECT_DOUBLE_EQ(*res.report.delta_relative[1], 50.0);
  EXPECT_DOUBLE_EQ(*res.report.delta_relative[2], 100.0);
  EXPECT_NEAR(*res.report.trend_r, 0.9486832980505137996, 1e-12);
  EXPECT_EQ(res.report.counts[0].unparseable, 1);
  EXPECT_EQ(res.report.avg_tokens_per_attempt.size(), 4u);
  EXPECT_TRUE(std::filesystem::exists(dir / kReportJsonName));
  EXPECT_EQ(read_attempt_log(dir / kAttemptLogName).size(), 32u);
  EXPECT_TRUE(testing::read_file(dir / kReportCsvName)
                  .starts_with("attempt_index,accuracy,delta_relative,avg_tokens\n1,0.5,,"));
}

TEST(EvaluateRun, ParallelRunMatchesSerialByteForByte) {
  Stts8 s;
  testing::TempDir a;
  testing::TempDir b;
  evaluate_run(s.dataset, TemplateSpec::default_pairwise(), s.backend, run_config(a.path()));
  auto cfg = run_config(b.path());
  cfg.parallelism = 4;
  evaluate_run(s.dataset, TemplateSpec::default_pairwise(), s.backend, cfg);
  EXPECT_EQ(testing::read_file(a / kAttemptLogName), testing::read_file(b / kAttemptLogName));
  EXPECT_EQ(testing::read_file(a / kReportJsonName), testing::read_file(b / kReportJsonName));
}

TEST(EvaluateRun, ResumeAfterInterruptionIsByteIdentical) {
  Stts8 s;
  testing::TempDir dir;
  const auto tmpl = TemplateSpec::default_pairwise();
  evaluate_run(s.dataset, tmpl, s.backend, run_config(dir.path()));
  const auto log = testing::read_file(dir / kAttemptLogName);
  const auto report = testing::read_file(dir / kReportJsonName);

  // Keep three complete episodes plus half a line, as if killed mid-write.
  std::size_t cut = 0;
  for (int i = 0; i < 12; ++i) cut = log.find('\n', cut) + 1;
  testing::write_file(dir / kAttemptLogName, log.substr(0, cut + 40));
  std::filesystem::remove(dir / kReportJsonName);

  s.backend.clear_transcript();
  auto cfg = run_config(dir.path());
  cfg.resume = true;
  const auto res = evaluate_run(s.dataset, tmpl, s.backend, cfg);
  EXPECT_EQ(res.resumed, 3u);
  EXPECT_EQ(testing::read_file(dir / kAttemptLogName), log);
  EXPECT_EQ(testing::read_file(dir / kReportJsonName), report);
  for (const auto& r : s.backend.transcript()) {
    EXPECT_TRUE(r.context.instance_id != "s0" && r.context.instance_id != "s1" && r.context.instance_id != "s2");
  }
}

TEST(EvaluateRun, BudgetOneHasNoDeltas) {
  Stts8 s;
  testing::TempDir dir;
  const auto res = evaluate_run(s.dataset, TemplateSpec::default_pairwise(), s.backend, run_config(dir.path(), 1));
  EXPECT_EQ(res.report.per_attempt_accuracy, std::vector<double>{0.5});
  EXPECT_TRUE(res.report.delta_relative.empty());
  EXPECT_FALSE(res.report.trend_r);
}

TEST(EvaluateRun, EmptyDatasetIsRejected) {
  ScriptedBackend b;
  testing::TempDir dir;
  EXPECT_THROW(evaluate_run({}, TemplateSpec::default_pairwise(), b, run_config(dir.path())), std::invalid_argument);
}

TEST(EvaluateRun, IoFailuresAreExcludedThenAbortPastThreshold) {
  Stts8 s;
  ScriptEntry boom{"x"};
  boom.error = BackendError::Kind::Transport;
  s.backend.set("s7", 2, boom);
  testing::TempDir dir;
  auto cfg = run_config(dir.path());
  cfg.max_failure_fraction = 0.2;
  const auto res = evaluate_run(s.dataset, TemplateSpec::default_pairwise(), s.backend, cfg);
  ASSERT_EQ(res.failures.size(), 1u);
  EXPECT_EQ(res.failures[0].instance_id, "s7");
  EXPECT_EQ(res.failures[0].attempts_completed, 1);
  EXPECT_EQ(res.report.counts[0].total(), 7);

  s.backend.set("s6", 1, boom);
  cfg.max_failure_fraction = 0.1;
  EXPECT_THROW(evaluate_run(s.dataset, TemplateSpec::default_pairwise(), s.backend, cfg), RunAborted);
}

TEST(Aggregate, IndependentOfRecordOrder) {
  std::mt19937_64 rng(14);
  std::vector<AttemptRecord> recs;
  LabelMap labels;
  for (int i = 0; i < 20; ++i) {
    const auto id = "i" + std::to_string(i);
    labels[id] = rng() % 2 ? Preference::A : Preference::B;
    std::int64_t tokens = 0;
    for (int k = 1; k <= 3; ++k) {
      AttemptRecord r;
      r.instance_id = id;
      r.attempt_index = k;
      r.verdict = static_cast<Verdict>(rng() % 3);
      tokens += static_cast<std::int64_t>(rng() % 50);
      r.cumulative_tokens = tokens;
      recs.push_back(r);
    }
  }
  const auto base = aggregate(recs, labels, 3);
  for (int t = 0; t < 20; ++t) {
    std::shuffle(recs.begin(), recs.end(), rng);
    EXPECT_EQ(aggregate(recs, labels, 3), base);
  }
  recs.pop_back();
  EXPECT_THROW(aggregate(recs, labels, 3), InvariantError);
}

}  // namespace
}  // namespace stts
