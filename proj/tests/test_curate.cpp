#include <random>

#include <gtest/gtest.h>

#include "scenarios.hpp"
#include "support.hpp"
#include "stts/curate.hpp"
#include "stts/jsonl.hpp"

namespace stts {
namespace {

const char* const kCuration100Table =
    "Dataset     | Original Number | Attempt 0 | Attempt 1 | Attempt 2 | Attempt 3\n"
    "------------|-----------------|-----------|-----------|-----------|----------\n"
    "curation100 | 100             | 60/100    | 4/40      | 2/36      | 1/34\n";

CurationResult run_curation100(int parallelism = 1) {
  const auto data = testing::load_fixture_dataset("curation100");
  auto backend = testing::load_fixture_backend("curation100");
  ForcingConfig f;
  f.temperature = 1.0;
  return curate(data, TemplateSpec::default_pairwise(), backend, 3, f, parallelism);
}

TEST(Curate, Curation100Table) {
  const auto r = run_curation100();
  EXPECT_EQ(r.stats.table(), kCuration100Table);
  EXPECT_EQ(r.accepted.size(), 67u);
  EXPECT_EQ(r.persistent_failures.size(), 33u);
  EXPECT_TRUE(r.failed_io.empty());
  EXPECT_EQ(testing::curation_conservation_violation(r, 100), "");
}

TEST(Curate, RerunsAreByteIdentical) {
  const auto data = testing::load_fixture_dataset("curation100");
  testing::TempDir dir;
  const auto a = run_curation100(1);
  const auto b = run_curation100(4);
  EXPECT_EQ(a.stats.table(), b.stats.table());
  emit_sft_dataset(a.accepted, data, MarkerConfig{}, dir / "a.jsonl");
  emit_sft_dataset(b.accepted, data, MarkerConfig{}, dir / "b.jsonl");
  EXPECT_EQ(testing::read_file(dir / "a.jsonl"), testing::read_file(dir / "b.jsonl"));
}

TEST(Curate, AcceptedTrajectoryCarriesOneInjectionPerCycle) {
  const auto r = run_curation100();
  for (const auto& rec : r.accepted) {
    // Scripted segments say "Wait," themselves; a spliced injection is the one
    // directly followed by the next segment's opening word.
    std::size_t injections = 0;
    for (auto p = rec.trajectory.find(" Wait,Reviewing"); p != std::string::npos;
         p = rec.trajectory.find(" Wait,Reviewing", p + 1)) {
      ++injections;
    }
    EXPECT_EQ(injections, static_cast<std::size_t>(rec.accepted_at_cycle)) << rec.instance_id;
    EXPECT_EQ(rec.trajectory.find("</think>"), std::string::npos);
  }
}

TEST(Curate, PersistentUnparseableKeepsLastVerdict) {
  const auto r = run_curation100();
  std::size_t unparseable = 0;
  for (const auto& f : r.persistent_failures) unparseable += f.last_verdict == Verdict::Unparseable;
  // Persistent instances are c067..c099; those with index divisible by 11 never parse: 77, 88, 99.
  EXPECT_EQ(unparseable, 3u);
}

TEST(Curate, ConservationOverRandomRuns) {
  std::mt19937_64 rng(21);
  for (int i = 0; i < 200; ++i) {
    auto c = testing::random_curation_case(rng);
    const auto r = curate(c.instances, TemplateSpec::default_pairwise(), *c.backend, c.cycles, ForcingConfig{});
    EXPECT_EQ(testing::curation_conservation_violation(r, c.instances.size()), "") << "case " << i;
  }
}

TEST(Curate, ZeroCyclesIsPlainRejectionSampling) {
  const auto data = testing::load_fixture_dataset("curation100");
  auto backend = testing::load_fixture_backend("curation100");
  const auto r = curate(data, TemplateSpec::default_pairwise(), backend, 0, ForcingConfig{});
  EXPECT_EQ(r.accepted.size(), 60u);
  for (const auto& rec : r.accepted) EXPECT_EQ(rec.accepted_at_cycle, 0);
  for (const auto& req : backend.transcript()) EXPECT_EQ(req.context.attempt_index, 1);
  EXPECT_THROW(curate(data, TemplateSpec::default_pairwise(), backend, -1, ForcingConfig{}), std::invalid_argument);
}

TEST(Curate, IoFailuresLeaveThePools) {
  std::vector<PreferenceInstance> data{{"a", "q", "x", "y", Preference::A, "t"}, {"b", "q", "x", "y", Preference::A, "t"}};
  ScriptedBackend backend;
  backend.set("a", 1, {"<think>t</think>[[B]]"});
  backend.set("a", 2, {"u</think>[[A]]"});
  ScriptEntry boom{"x"};
  boom.error = BackendError::Kind::Transport;
  backend.set("b", 1, {"<think>t</think>[[B]]"});
  backend.set("b", 2, boom);
  const auto r = curate(data, TemplateSpec::default_pairwise(), backend, 1, ForcingConfig{});
  const auto& s = r.stats.by_source.at("t");
  EXPECT_EQ(s.original, 1);
  EXPECT_EQ(s.failed_io, 1);
  EXPECT_EQ(s.cycles[0], (CycleStats{0, 1, 0}));
  EXPECT_EQ(s.cycles[1], (CycleStats{1, 1, 0}));
  ASSERT_EQ(r.failed_io.size(), 1u);
  EXPECT_EQ(r.failed_io[0].cycle, 1);
}

TEST(EmitSft, WritesSortedRecordsAndRejectsEmpty) {
  std::vector<PreferenceInstance> data{{"b", "q2", "x", "y", Preference::B, "t"}, {"a", "q1", "x", "y", Preference::A, "t"}};
  std::vector<CurationRecord> acc{{"b", 1, "think Wait, more", "[[B]]", Verdict::B}, {"a", 0, "t", "[[A]]", Verdict::A}};
  testing::TempDir dir;
  emit_sft_dataset(acc, data, MarkerConfig{}, dir / "sft.jsonl");
  const auto lines = read_jsonl(dir / "sft.jsonl");
  ASSERT_EQ(lines.size(), 2u);
  EXPECT_EQ(lines[0].value.at("id"), "a");
  EXPECT_EQ(lines[1].value.at("trajectory"), "<think>think Wait, more</think>");
  EXPECT_EQ(lines[1].value.at("accepted_at_cycle"), 1);
  EXPECT_THROW(emit_sft_dataset({}, data, MarkerConfig{}, dir / "empty.jsonl"), std::invalid_argument);
}

}  // namespace
}  // namespace stts
