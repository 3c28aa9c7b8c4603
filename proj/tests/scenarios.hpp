#pragma once

// Randomized scripted scenarios shared by the unit tests and the acceptance binary.

#include <memory>
#include <random>
#include <string>
#include <vector>

#include "stts/analysis.hpp"
#include "stts/bench.hpp"
#include "stts/curate.hpp"
#include "stts/scripted_backend.hpp"
#include "support.hpp"

namespace stts::testing {

inline std::vector<PreferenceInstance> load_fixture_dataset(const std::string& name) {
  DatasetSpec spec;
  spec.path = fixture(name + ".jsonl");
  spec.source_tag = name;
  return load_pairwise(spec).instances;
}

inline ScriptedBackend load_fixture_backend(const std::string& name) {
  return ScriptedBackend(ScriptedBackend::load_script(fixture(name + "_script.jsonl")));
}

struct CurationCase {
  std::vector<PreferenceInstance> instances;
  std::unique_ptr<ScriptedBackend> backend = std::make_unique<ScriptedBackend>();
  int cycles = 0;
};

/// Random instances over a few source tags. Each cycle's verdict is drawn as
/// correct, wrong or unparseable, and some instances fail on I/O at a random
/// cycle.
inline CurationCase random_curation_case(std::mt19937_64& rng) {
  CurationCase c;
  c.cycles = static_cast<int>(rng() % 5);
  const auto n = 1 + rng() % 25;
  for (std::size_t i = 0; i < n; ++i) {
    const auto id = "r" + std::to_string(i);
    const auto label = rng() % 2 ? Preference::A : Preference::B;
    c.instances.push_back({id, "q", "a", "b", label, "tag" + std::to_string(rng() % 3)});
    for (int k = 1; k <= c.cycles + 1; ++k) {
      const auto draw = rng() % 10;
      std::string verdict;
      if (draw < 3) {
        verdict = label == Preference::A ? "[[A]]" : "[[B]]";
      } else if (draw < 8) {
        verdict = label == Preference::A ? "[[B]]" : "[[A]]";
      } else {
        verdict = "no idea";
      }
      ScriptEntry e{(k == 1 ? "<think>t" : "more") + std::to_string(k) + "</think>" + verdict};
      if (rng() % 40 == 0) e.error = BackendError::Kind::Transport;
      c.backend->set(id, k, std::move(e));
    }
  }
  return c;
}

/// Ledger conservation: returns an empty string when every invariant holds,
/// otherwise a description of the first violation.
inline std::string curation_conservation_violation(const CurationResult& r, std::size_t instances) {
  if (r.accepted.size() + r.persistent_failures.size() + r.failed_io.size() != instances) {
    return "accepted + persistent + failed_io != instances";
  }
  std::int64_t original = 0;
  std::int64_t failed = 0;
  std::int64_t newly = 0;
  for (const auto& [tag, s] : r.stats.by_source) {
    original += s.original;
    failed += s.failed_io;
    if (s.cycles.empty() || s.cycles[0].pool != s.original) return tag + ": pool[0] != original";
    for (std::size_t k = 0; k < s.cycles.size(); ++k) {
      newly += s.cycles[k].newly_correct;
      if (s.cycles[k].newly_correct > s.cycles[k].pool) return tag + ": newly_correct > pool";
      if (k + 1 < s.cycles.size() && s.cycles[k + 1].pool != s.cycles[k].pool - s.cycles[k].newly_correct) {
        return tag + ": pool[k+1] != pool[k] - newly_correct[k] at k=" + std::to_string(k);
      }
    }
  }
  if (original + failed != static_cast<std::int64_t>(instances)) return "original + failed_io != instances";
  if (failed != static_cast<std::int64_t>(r.failed_io.size())) return "failed_io count mismatch";
  if (newly != static_cast<std::int64_t>(r.accepted.size())) return "sum of newly_correct != accepted";
  std::int64_t persistent = 0;
  for (const auto& [tag, s] : r.stats.by_source) persistent += s.cycles.back().pool - s.cycles.back().newly_correct;
  if (persistent != static_cast<std::int64_t>(r.persistent_failures.size())) return "persistent count mismatch";
  return {};
}


struct RandomLog {
  std::vector<AttemptRecord> log;
  LabelMap labels;
  int attempts = 0;
};

/// Random verdict trajectories; about a fifth of the verdicts are unparseable.
inline RandomLog random_attempt_log(std::mt19937_64& rng) {
  RandomLog out;
  out.attempts = 1 + static_cast<int>(rng() % 6);
  const auto n = 1 + rng() % 40;
  for (std::size_t i = 0; i < n; ++i) {
    const auto id = "x" + std::to_string(i);
    out.labels[id] = rng() % 2 ? Preference::A : Preference::B;
    for (int k = 1; k <= out.attempts; ++k) {
      AttemptRecord r;
      r.instance_id = id;
      r.attempt_index = k;
      const auto draw = rng() % 5;
      r.verdict = draw == 0 ? Verdict::Unparseable : (draw % 2 ? Verdict::A : Verdict::B);
      out.log.push_back(std::move(r));
    }
  }
  return out;
}

/// Flow conservation of a transition table against a direct recount. Empty
/// when every invariant holds.
inline std::string transition_conservation_violation(const analysis::TransitionTable& t, const RandomLog& data) {
  using analysis::State;
  if (t.instances != static_cast<std::int64_t>(data.labels.size())) return "instance count mismatch";
  for (std::size_t k = 0; k < t.steps.size(); ++k) {
    std::int64_t total = 0;
    for (const auto& row : t.steps[k]) {
      for (auto c : row) total += c;
    }
    if (total != t.instances) return "step " + std::to_string(k + 1) + " does not sum to the instance count";
  }
  for (int k = 1; k <= t.attempts && t.attempts > 1; ++k) {
    for (int s = 0; s < 3; ++s) {
      std::int64_t direct = 0;
      for (const auto& r : data.log) {
        if (r.attempt_index == k &&
            analysis::classify(r.verdict, data.labels.at(r.instance_id)) == static_cast<State>(s)) {
          ++direct;
        }
      }
      if (t.state_count(k, static_cast<State>(s)) != direct) {
        return "state count mismatch at attempt " + std::to_string(k);
      }
      // In-flow into attempt k equals out-flow from it.
      if (k > 1 && k < t.attempts) {
        std::int64_t in = 0;
        std::int64_t out = 0;
        for (int o = 0; o < 3; ++o) {
          in += t.steps[static_cast<std::size_t>(k) - 2][static_cast<std::size_t>(o)][static_cast<std::size_t>(s)];
          out += t.steps[static_cast<std::size_t>(k) - 1][static_cast<std::size_t>(s)][static_cast<std::size_t>(o)];
        }
        if (in != out) return "flow mismatch at attempt " + std::to_string(k);
      }
    }
  }
  return {};
}

}  // namespace stts::testing
