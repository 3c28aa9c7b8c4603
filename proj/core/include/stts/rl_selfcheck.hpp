#pragma once

#include <cstdint>
#include <filesystem>
#include <istream>
#include <string>
#include <vector>

#include "stts/rlmath.hpp"

namespace stts::rl {

/// One batch from a columnar fixture: per-token log-probs plus per-step
/// rewards and values sharing the same mask.
struct FixtureBatch {
  TokenLogProbs logprobs;
  TrajectoryBatch trajectory;
};

class FixtureError : public std::runtime_error {
 public:
  FixtureError(const std::string& what, std::size_t line);
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

/// Whitespace-separated columns per token row:
///   token_index logp_new logp_old logp_ref reward value mask
/// token_index counts from 0 within a batch. Directive lines `bootstrap <V>`
/// (tail value, default 0) and `outcome <r>` (sequence reward, default 0)
/// apply to the current batch; `---` ends it. '#' starts a comment.
/// Numeric fields accept nan and inf so corrupted batches can be expressed.
std::vector<FixtureBatch> parse_fixture(std::istream& in);
std::vector<FixtureBatch> load_fixture(const std::filesystem::path& path);

struct CheckResult {
  std::string name;
  double max_error = 0.0;
  double tolerance = 0.0;
  bool passed = true;
  std::string detail;  // first failure message, if any
};

struct SelfCheckOptions {
  int seeds = 10;
  std::uint64_t base_seed = 0x5eed;
  double grad_tolerance = 1e-5;  // max relative gradient error
  double grad_step = 1e-5;
  RlConfig config;
};

/// Runs every kernel against naive oracles and the stated invariants over
/// `seeds` random batches, then over each fixture batch. Never throws for a
/// failing check; the failure lands in the result.
std::vector<CheckResult> run_selfcheck(const SelfCheckOptions& opts, const std::vector<FixtureBatch>& fixtures = {});

bool all_passed(const std::vector<CheckResult>& results);

}  // namespace stts::rl
