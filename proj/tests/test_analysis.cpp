#include <algorithm>
#include <random>

#include <gtest/gtest.h>

#include "scenarios.hpp"
#include "stts/analysis.hpp"
#include "stts/stats.hpp"

namespace stts::analysis {
namespace {

AttemptRecord rec(const std::string& id, int k, Verdict v, std::int64_t reflective = 0, std::int64_t tokens = 0) {
  AttemptRecord r;
  r.instance_id = id;
  r.attempt_index = k;
  r.verdict = v;
  r.reflective_counts = {{"Wait", reflective}};
  r.trace.token_count = tokens;
  return r;
}

const LabelMap kAllA{{"a", Preference::A}, {"b", Preference::A}, {"c", Preference::A}, {"d", Preference::A}};

TEST(Classify, ThreeStates) {
  EXPECT_EQ(classify(Verdict::A, Preference::A), State::Correct);
  EXPECT_EQ(classify(Verdict::B, Preference::A), State::Incorrect);
  EXPECT_EQ(classify(Verdict::Unparseable, Preference::B), State::Unparseable);
}

TEST(Transitions, SwapPair) {
  const auto t = transitions({rec("a", 1, Verdict::A), rec("a", 2, Verdict::B), rec("b", 1, Verdict::B),
                              rec("b", 2, Verdict::A)},
                             kAllA);
  ASSERT_EQ(t.steps.size(), 1u);
  const auto& s = t.steps[0];
  EXPECT_EQ(s[0][1], 1);
  EXPECT_EQ(s[1][0], 1);
  EXPECT_EQ(s[0][0] + s[1][1] + s[0][2] + s[1][2] + s[2][0] + s[2][1] + s[2][2], 0);
  EXPECT_EQ(t.instances, 2);
}

TEST(Transitions, UnparseableIsItsOwnState) {
  const auto t = transitions({rec("a", 1, Verdict::A), rec("a", 2, Verdict::Unparseable)}, kAllA);
  EXPECT_EQ(t.steps[0][0][2], 1);
  EXPECT_EQ(t.state_count(2, State::Unparseable), 1);
}

TEST(Transitions, IncompleteInstancesAreExcludedAndReported) {
  const auto t = transitions({rec("a", 1, Verdict::A), rec("a", 2, Verdict::A), rec("b", 1, Verdict::A),
                              rec("z", 1, Verdict::A), rec("z", 2, Verdict::A)},
                             kAllA);
  EXPECT_EQ(t.instances, 1);
  EXPECT_EQ(t.excluded, (std::vector<std::string>{"b", "z"}));
}

TEST(Transitions, EdgeListIsFlat) {
  const auto t = transitions({rec("a", 1, Verdict::A), rec("a", 2, Verdict::B)}, kAllA);
  const auto csv = t.edge_list_csv();
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "from_state,to_state,step,count");
  EXPECT_NE(csv.find("correct,incorrect,1,1\n"), std::string::npos);
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 10);
  EXPECT_EQ(t.to_json().at("edges").size(), 9u);
}

TEST(Transitions, ConservationOnRandomLogs) {
  std::mt19937_64 rng(41);
  for (int i = 0; i < 300; ++i) {
    const auto data = testing::random_attempt_log(rng);
    const auto t = transitions(data.log, data.labels);
    EXPECT_EQ(testing::transition_conservation_violation(t, data), "") << "case " << i;
  }
}

TEST(Bins, LabelsAndLookup) {
  const auto b = Bins::standard();
  EXPECT_EQ(b.label(0), "0");
  EXPECT_EQ(b.label(1), "1-4");
  EXPECT_EQ(b.label(2), "5-9");
  EXPECT_EQ(b.label(3), "10+");
  EXPECT_EQ(b.index_of(0), 0u);
  EXPECT_EQ(b.index_of(4), 1u);
  EXPECT_EQ(b.index_of(5), 2u);
  EXPECT_EQ(b.index_of(1000), 3u);
  EXPECT_THROW(Bins({1, 2}), std::invalid_argument);
  EXPECT_THROW(Bins({0, 3, 3}), std::invalid_argument);
}

TEST(ReflectiveFrequency, ExampleSplit) {
  const auto table = reflective_frequency_table(
      {rec("a", 1, Verdict::A, 0), rec("b", 1, Verdict::A, 0), rec("c", 1, Verdict::B, 5)}, kAllA, Bins({0, 1, 5}));
  ASSERT_EQ(table.rows.size(), 3u);
  EXPECT_EQ(table.rows[0].correct_share, 1.0);
  EXPECT_EQ(table.rows[0].incorrect_share, 0.0);
  EXPECT_EQ(table.rows[2].bin, "5+");
  EXPECT_EQ(table.rows[2].incorrect_share, 1.0);
  EXPECT_EQ(table.rows[2].correct_share, 0.0);
}

TEST(ReflectiveFrequency, EmptyLogGivesEmptyTable) {
  EXPECT_TRUE(reflective_frequency_table({}, kAllA, Bins::standard()).rows.empty());
}

TEST(ReflectiveFrequency, SharesSumToOne) {
  std::mt19937_64 rng(42);
  for (int i = 0; i < 200; ++i) {
    auto data = testing::random_attempt_log(rng);
    for (auto& r : data.log) r.reflective_counts = {{"Wait", static_cast<std::int64_t>(rng() % 15)}};
    const auto t = reflective_frequency_table(data.log, data.labels, Bins::standard());
    double c = 0;
    double w = 0;
    bool any_c = false;
    bool any_w = false;
    for (const auto& row : t.rows) {
      if (row.correct_share) any_c = true, c += *row.correct_share;
      if (row.incorrect_share) any_w = true, w += *row.incorrect_share;
    }
    if (any_c) EXPECT_NEAR(c, 1.0, 1e-12);
    if (any_w) EXPECT_NEAR(w, 1.0, 1e-12);
  }
}

TEST(AccuracyByReflection, Examples) {
  const auto rows = accuracy_by_reflection({rec("a", 1, Verdict::A, 0), rec("b", 1, Verdict::A, 0),
                                            rec("a", 2, Verdict::B, 0), rec("c", 1, Verdict::A, 6),
                                            rec("d", 1, Verdict::A, 7), rec("x", 1, Verdict::A, 7)},
                                           kAllA, Bins::standard());
  EXPECT_EQ(rows[0].accuracy, 1.0);
  EXPECT_EQ(rows[0].instances, 2);
  EXPECT_FALSE(rows[1].accuracy);
  EXPECT_EQ(rows[2].instances, 2);

  const LabelMap mixed{{"a", Preference::A}, {"b", Preference::A}, {"c", Preference::A}, {"d", Preference::B}};
  const auto m = accuracy_by_reflection({rec("a", 1, Verdict::A, 2), rec("b", 1, Verdict::A, 2),
                                         rec("c", 1, Verdict::A, 3), rec("d", 1, Verdict::A, 1)},
                                        mixed, Bins::standard());
  EXPECT_EQ(m[1].accuracy, 0.75);
  EXPECT_EQ(accuracy_by_reflection_csv(m).substr(0, 22), "bin,instances,accuracy");
}

TEST(LengthStats, Examples) {
  EXPECT_EQ(summarize_lengths({10, 20}, 256).mean, 15.0);
  const auto one = summarize_lengths({777}, 256);
  EXPECT_EQ(one.p95, 777.0);
  EXPECT_EQ(one.histogram.at(768), 1);
  EXPECT_EQ(summarize_lengths({}, 10).n, 0);
  EXPECT_THROW(summarize_lengths({1}, 0), std::invalid_argument);
}

TEST(LengthStats, SummaryMatchesSortOracle) {
  std::mt19937_64 rng(43);
  std::vector<std::int64_t> counts(1000);
  for (auto& c : counts) c = static_cast<std::int64_t>(rng() % 5000);
  const auto s = summarize_lengths(counts, 100);
  auto sorted = counts;
  std::sort(sorted.begin(), sorted.end());
  EXPECT_EQ(s.median, static_cast<double>(sorted[499]));
  EXPECT_EQ(s.p95, static_cast<double>(sorted[949]));
  std::int64_t total = 0;
  for (const auto& [start, n] : s.histogram) total += n;
  EXPECT_EQ(total, 1000);
}

TEST(LengthStats, SplitsByCorrectness) {
  const auto ls = length_stats({rec("a", 1, Verdict::A, 0, 100), rec("b", 1, Verdict::B, 0, 300),
                                rec("c", 1, Verdict::Unparseable, 0, 500)},
                               kAllA, true, 256);
  EXPECT_EQ(ls.splits.at("correct").n, 1);
  EXPECT_EQ(ls.splits.at("incorrect").n, 2);
  EXPECT_EQ(ls.splits.at("incorrect").mean, 400.0);
  const auto all = length_stats({rec("a", 1, Verdict::A, 0, 100)}, kAllA, false);
  EXPECT_TRUE(all.splits.contains("all"));
  EXPECT_EQ(ls.csv().substr(0, ls.csv().find('\n')), "split,n,mean,median,p95,bin_start,bin_count");
}

TEST(WordFrequency, CountsLowercasedWordsWithoutStopwords) {
  auto r = rec("a", 1, Verdict::A);
  r.trace.think_segments = {"Wait, the answer", " Wait, THE answer is B."};
  const auto words = word_frequency({r}, {"the", "is"});
  ASSERT_GE(words.size(), 3u);
  EXPECT_EQ(words[0], (std::pair<std::string, std::int64_t>{"answer", 2}));
  EXPECT_EQ(words[1], (std::pair<std::string, std::int64_t>{"wait", 2}));
  EXPECT_EQ(words[2], (std::pair<std::string, std::int64_t>{"b", 1}));
}

}  // namespace
}  // namespace stts::analysis
