#include "stts/rl_selfcheck.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <random>
#include <sstream>

#include <fmt/format.h>

namespace stts::rl {

FixtureError::FixtureError(const std::string& what, std::size_t line)
    : std::runtime_error(fmt::format("fixture line {}: {}", line, what)), line_(line) {}

namespace {

double parse_number(const std::string& field, std::size_t line) {
  std::size_t used = 0;
  double v = 0;
  try {
    v = std::stod(field, &used);
  } catch (const std::exception&) {
    throw FixtureError("not a number: '" + field + "'", line);
  }
  if (used != field.size()) throw FixtureError("not a number: '" + field + "'", line);
  return v;
}

struct PendingBatch {
  FixtureBatch batch;
  double bootstrap = 0.0;
  bool any_masked = false;
  bool touched = false;
};

void finish(PendingBatch& p, std::vector<FixtureBatch>& out) {
  if (p.touched) {
    if (p.batch.trajectory.rewards.empty()) throw FixtureError("batch has no token rows", 0);
    p.batch.trajectory.values.push_back(p.bootstrap);
    if (!p.any_masked) {
      p.batch.logprobs.mask.clear();
      p.batch.trajectory.mask.clear();
    }
    out.push_back(std::move(p.batch));
  }
  p = PendingBatch{};
}

}  // namespace

std::vector<FixtureBatch> parse_fixture(std::istream& in) {
  std::vector<FixtureBatch> out;
  PendingBatch pending;
  std::string raw;
  for (std::size_t line = 1; std::getline(in, raw); ++line) {
    if (auto hash = raw.find('#'); hash != std::string::npos) raw.erase(hash);
    std::istringstream fields(raw);
    std::vector<std::string> cols;
    for (std::string f; fields >> f;) cols.push_back(f);
    if (cols.empty()) continue;

    if (cols.size() == 1 && cols[0] == "---") {
      finish(pending, out);
      continue;
    }
    pending.touched = true;
    if (cols[0] == "bootstrap" || cols[0] == "outcome") {
      if (cols.size() != 2) throw FixtureError(cols[0] + " takes one value", line);
      const double v = parse_number(cols[1], line);
      (cols[0] == "bootstrap" ? pending.bootstrap : pending.batch.trajectory.outcome_reward) = v;
      continue;
    }
    if (cols.size() != 7) throw FixtureError(fmt::format("expected 7 columns, got {}", cols.size()), line);
    const auto expected = pending.batch.trajectory.rewards.size();
    if (cols[0] != std::to_string(expected)) {
      throw FixtureError(fmt::format("token index '{}' out of sequence, expected {}", cols[0], expected), line);
    }
    auto& lp = pending.batch.logprobs;
    auto& tr = pending.batch.trajectory;
    lp.current.push_back(parse_number(cols[1], line));
    lp.old.push_back(parse_number(cols[2], line));
    lp.reference.push_back(parse_number(cols[3], line));
    tr.rewards.push_back(parse_number(cols[4], line));
    tr.values.push_back(parse_number(cols[5], line));
    if (cols[6] != "0" && cols[6] != "1") throw FixtureError("mask must be 0 or 1", line);
    const std::uint8_t m = cols[6] == "1" ? 1 : 0;
    pending.any_masked |= m == 0;
    lp.mask.push_back(m);
    tr.mask.push_back(m);
  }
  finish(pending, out);
  return out;
}

std::vector<FixtureBatch> load_fixture(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open fixture: " + path.string());
  return parse_fixture(in);
}

namespace {

bool on(const std::vector<std::uint8_t>& mask, std::size_t i) { return mask.empty() || mask[i] != 0; }

// Naive oracles, written from the defining sums rather than the recursions.

std::vector<double> naive_gae(const TrajectoryBatch& b, double gamma, double lambda) {
  std::vector<std::size_t> steps;
  for (std::size_t t = 0; t < b.rewards.size(); ++t) {
    if (on(b.mask, t)) steps.push_back(t);
  }
  std::vector<double> delta(steps.size());
  for (std::size_t k = 0; k < steps.size(); ++k) {
    const double next = k + 1 < steps.size() ? b.values[steps[k + 1]] : b.values.back();
    delta[k] = b.rewards[steps[k]] + gamma * next - b.values[steps[k]];
  }
  std::vector<double> out(b.rewards.size(), 0.0);
  for (std::size_t k = 0; k < steps.size(); ++k) {
    double sum = 0.0;
    for (std::size_t l = 0; k + l < steps.size(); ++l) sum += std::pow(gamma * lambda, static_cast<double>(l)) * delta[k + l];
    out[steps[k]] = sum;
  }
  return out;
}

std::vector<double> naive_reinforcepp(double outcome, const std::vector<double>& kl, double beta,
                                      const std::vector<std::uint8_t>& mask) {
  std::vector<double> out(kl.size(), 0.0);
  for (std::size_t t = 0; t < kl.size(); ++t) {
    if (!on(mask, t)) continue;
    double suffix = 0.0;
    for (std::size_t i = t; i < kl.size(); ++i) {
      if (on(mask, i)) suffix += kl[i];
    }
    out[t] = outcome - beta * suffix;
  }
  return out;
}

struct MomentError {
  double mean = 0.0;
  double stddev = 0.0;
};

MomentError moments_error(const std::vector<double>& xs, const std::vector<std::uint8_t>& mask) {
  double n = 0.0;
  double sum = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    if (on(mask, i)) {
      sum += xs[i];
      n += 1.0;
    }
  }
  const double mean = sum / n;
  double sq = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    if (on(mask, i)) sq += (xs[i] - mean) * (xs[i] - mean);
  }
  return {std::abs(mean), std::abs(std::sqrt(sq / n) - 1.0)};
}

double rel_diff(double a, double b) { return std::abs(a - b) / std::max(1.0, std::abs(b)); }

// max() that keeps NaN instead of dropping it.
double worse(double a, double b) {
  if (std::isnan(a) || std::isnan(b)) return std::numeric_limits<double>::quiet_NaN();
  return std::max(a, b);
}

double max_rel_diff(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size()) return std::numeric_limits<double>::infinity();
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = rel_diff(a[i], b[i]);
    if (!(d <= worst)) worst = d;  // NaN propagates as the worst error
  }
  return worst;
}

class Ledger {
 public:
  void record(const std::string& name, double error, double tolerance, const std::string& where) {
    auto& r = entry(name, tolerance);
    if (!(error <= r.max_error) || std::isnan(error)) r.max_error = error;
    if (!(error <= tolerance) && r.passed) {
      r.passed = false;
      r.detail = fmt::format("{}: error {} exceeds {}", where, error, tolerance);
    }
  }

  void fail(const std::string& name, double tolerance, const std::string& where, const std::string& why) {
    auto& r = entry(name, tolerance);
    if (r.passed) {
      r.passed = false;
      r.detail = where + ": " + why;
    }
  }

  std::vector<CheckResult> results() const {
    std::vector<CheckResult> out;
    for (const auto& name : order_) out.push_back(by_name_.at(name));
    return out;
  }

 private:
  CheckResult& entry(const std::string& name, double tolerance) {
    auto [it, inserted] = by_name_.try_emplace(name);
    if (inserted) {
      it->second.name = name;
      it->second.tolerance = tolerance;
      order_.push_back(name);
    }
    return it->second;
  }

  std::map<std::string, CheckResult> by_name_;
  std::vector<std::string> order_;
};

constexpr double kOracleTol = 1e-10;
constexpr double kCompositionTol = 1e-12;
constexpr double kMomentTol = 1e-9;

// Guards one check so that a throwing kernel is reported, not propagated.
template <typename F>
void guarded(Ledger& ledger, const std::string& name, double tol, const std::string& where, F&& f) {
  try {
    f();
  } catch (const std::exception& e) {
    ledger.fail(name, tol, where, e.what());
  }
}

FixtureBatch with_padding(const FixtureBatch& b, std::size_t at) {
  FixtureBatch p = b;
  const auto n = b.trajectory.rewards.size();
  auto fill_mask = [n](std::vector<std::uint8_t>& m) {
    if (m.empty()) m.assign(n, 1);
  };
  fill_mask(p.logprobs.mask);
  fill_mask(p.trajectory.mask);
  const auto pos = static_cast<std::ptrdiff_t>(at);
  p.logprobs.current.insert(p.logprobs.current.begin() + pos, 7.0);
  p.logprobs.old.insert(p.logprobs.old.begin() + pos, -7.0);
  p.logprobs.reference.insert(p.logprobs.reference.begin() + pos, 3.0);
  p.logprobs.mask.insert(p.logprobs.mask.begin() + pos, 0);
  p.trajectory.rewards.insert(p.trajectory.rewards.begin() + pos, 99.0);
  p.trajectory.values.insert(p.trajectory.values.begin() + pos, -99.0);
  p.trajectory.mask.insert(p.trajectory.mask.begin() + pos, 0);
  return p;
}

std::vector<double> drop_at(std::vector<double> v, std::size_t at) {
  v.erase(v.begin() + static_cast<std::ptrdiff_t>(at));
  return v;
}

std::size_t valid_count(const std::vector<std::uint8_t>& mask, std::size_t n) {
  return mask.empty() ? n : static_cast<std::size_t>(std::count(mask.begin(), mask.end(), std::uint8_t{1}));
}

void check_batch(Ledger& L, const FixtureBatch& b, const std::vector<double>& advantages, const SelfCheckOptions& o,
                 const std::string& where, std::mt19937_64& rng) {
  const auto& lp = b.logprobs;
  const auto& tr = b.trajectory;
  const auto& cfg = o.config;
  const auto n = lp.size();

  guarded(L, "policy_ratio", kCompositionTol, where, [&] {
    const auto got = policy_ratio(lp.current, lp.old, cfg.log_ratio_cap, lp.mask).ratios;
    std::vector<double> want(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      if (on(lp.mask, i)) {
        want[i] = std::exp(std::clamp(lp.current[i] - lp.old[i], -cfg.log_ratio_cap, cfg.log_ratio_cap));
      }
    }
    L.record("policy_ratio", max_rel_diff(got, want), kCompositionTol, where);
  });

  guarded(L, "gae_oracle", kOracleTol, where, [&] {
    L.record("gae_oracle", max_rel_diff(gae_advantages(tr, cfg.gae_gamma, cfg.gae_lambda),
                                        naive_gae(tr, cfg.gae_gamma, cfg.gae_lambda)),
             kOracleTol, where);
  });

  guarded(L, "gae_collapse", 0.0, where, [&] {
    // lambda = 0 leaves exactly the TD residuals.
    const auto got = gae_advantages(tr, cfg.gae_gamma, 0.0);
    std::vector<double> want(n, 0.0);
    double next = tr.values.back();
    for (std::size_t t = n; t-- > 0;) {
      if (!on(tr.mask, t)) continue;
      want[t] = tr.rewards[t] + cfg.gae_gamma * next - tr.values[t];
      next = tr.values[t];
    }
    double err = max_rel_diff(got, want);
    // gamma = lambda = 1 with zero values: reversed cumulative reward sums.
    TrajectoryBatch zero = tr;
    std::fill(zero.values.begin(), zero.values.end(), 0.0);
    const auto cum = gae_advantages(zero, 1.0, 1.0);
    double acc = 0.0;
    for (std::size_t t = n; t-- > 0;) {
      if (!on(tr.mask, t)) continue;
      acc += tr.rewards[t];
      err = std::max(err, std::abs(cum[t] - acc));
      if (std::isnan(cum[t] - acc)) err = std::numeric_limits<double>::quiet_NaN();
    }
    L.record("gae_collapse", err, 0.0, where);
  });

  guarded(L, "token_kl", 0.0, where, [&] {
    const auto got = token_kl(lp.current, lp.reference, KlEstimator::LogRatio, lp.mask);
    std::vector<double> want(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      if (on(lp.mask, i)) want[i] = lp.current[i] - lp.reference[i];
    }
    L.record("token_kl", max_rel_diff(got, want), 0.0, where);
  });

  guarded(L, "reinforcepp_oracle", kOracleTol, where, [&] {
    const auto kl = token_kl(lp.current, lp.reference, cfg.kl_estimator, lp.mask);
    const double beta = std::uniform_real_distribution<double>(0.0, 2.0)(rng);
    L.record("reinforcepp_oracle",
             max_rel_diff(reinforcepp_advantages(tr.outcome_reward, kl, beta, lp.mask),
                          naive_reinforcepp(tr.outcome_reward, kl, beta, lp.mask)),
             kOracleTol, where);
  });

  guarded(L, "batch_normalize_moments", kMomentTol, where, [&] {
    if (valid_count(lp.mask, n) < 2) return;
    std::vector<double> raw = advantages;
    try {
      const auto normed = batch_normalize(raw, lp.mask);
      const auto m = moments_error(normed, lp.mask);
      L.record("batch_normalize_moments", std::max(m.mean, m.stddev), kMomentTol, where);
    } catch (const DegenerateBatchError&) {
      // degenerate input is covered by its own check
    }
  });

  guarded(L, "dual_clip_bounds", 0.0, where, [&] {
    const auto ratios = policy_ratio(lp.current, lp.old, cfg.log_ratio_cap).ratios;
    double worst = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double a = advantages[i];
      const double s = dual_clip_surrogate(ratios[i], a, cfg);
      double violation = 0.0;
      if (a < 0) violation = cfg.dual_clip_c * a - s;
      if (a > 0 && !cfg.strict_literal) violation = s - (1.0 + cfg.eps_high) * a;
      if (std::isnan(s)) violation = std::numeric_limits<double>::quiet_NaN();
      if (!(violation <= worst)) worst = violation;
    }
    L.record("dual_clip_bounds", worst, 0.0, where);
  });

  guarded(L, "vanilla_reduction", kCompositionTol, where, [&] {
    RlConfig open = cfg;
    open.eps_low = open.eps_high = std::numeric_limits<double>::infinity();
    open.dual_clip_c = std::numeric_limits<double>::infinity();
    open.strict_literal = false;
    const auto ratios = policy_ratio(lp.current, lp.old, cfg.log_ratio_cap).ratios;
    double sum = 0.0;
    double count = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      if (!on(lp.mask, i)) continue;
      sum += ratios[i] * advantages[i];
      count += 1.0;
    }
    if (count == 0) return;
    L.record("vanilla_reduction", rel_diff(dual_clip_loss(ratios, advantages, open, lp.mask), -sum / count),
             kCompositionTol, where);
  });

  guarded(L, "grpo_composition", kCompositionTol, where, [&] {
    if (valid_count(lp.mask, n) == 0) return;
    const auto ratios = policy_ratio(lp.current, lp.old, cfg.log_ratio_cap).ratios;
    const auto kl = token_kl(lp.current, lp.reference, cfg.kl_estimator, lp.mask);
    double kl_sum = 0.0;
    double count = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      if (!on(lp.mask, i)) continue;
      kl_sum += kl[i];
      count += 1.0;
    }
    const double want = dual_clip_loss(ratios, advantages, cfg, lp.mask) + cfg.kl_beta * kl_sum / count;
    L.record("grpo_composition", rel_diff(grpo_loss(ratios, advantages, kl, cfg, lp.mask), want), kCompositionTol,
             where);
  });

  guarded(L, "mask_consistency", 0.0, where, [&] {
    const auto at = std::uniform_int_distribution<std::size_t>(0, n)(rng);
    const auto p = with_padding(b, at);
    std::vector<double> padv = advantages;
    padv.insert(padv.begin() + static_cast<std::ptrdiff_t>(at), 5.0);
    double err = 0.0;
    auto cmp = [&](const std::vector<double>& padded, const std::vector<double>& plain) {
      err = worse(err, max_rel_diff(drop_at(padded, at), plain));
    };
    cmp(policy_ratio(p.logprobs.current, p.logprobs.old, cfg.log_ratio_cap, p.logprobs.mask).ratios,
        policy_ratio(lp.current, lp.old, cfg.log_ratio_cap, lp.mask).ratios);
    cmp(gae_advantages(p.trajectory, cfg.gae_gamma, cfg.gae_lambda),
        gae_advantages(tr, cfg.gae_gamma, cfg.gae_lambda));
    const auto kl_p = token_kl(p.logprobs.current, p.logprobs.reference, cfg.kl_estimator, p.logprobs.mask);
    const auto kl = token_kl(lp.current, lp.reference, cfg.kl_estimator, lp.mask);
    cmp(kl_p, kl);
    cmp(reinforcepp_advantages(tr.outcome_reward, kl_p, cfg.kl_beta, p.logprobs.mask),
        reinforcepp_advantages(tr.outcome_reward, kl, cfg.kl_beta, lp.mask));
    if (valid_count(lp.mask, n) >= 1) {
      const auto r_p = policy_ratio(p.logprobs.current, p.logprobs.old, cfg.log_ratio_cap).ratios;
      const auto r = policy_ratio(lp.current, lp.old, cfg.log_ratio_cap).ratios;
      err = worse(err, rel_diff(dual_clip_loss(r_p, padv, cfg, p.logprobs.mask),
                                   dual_clip_loss(r, advantages, cfg, lp.mask)));
      err = worse(err, rel_diff(grpo_loss(r_p, padv, kl_p, cfg, p.logprobs.mask),
                                   grpo_loss(r, advantages, kl, cfg, lp.mask)));
      for (auto kind : {LossKind::DualClip, LossKind::Grpo}) {
        const auto g_p = loss_and_grad(kind, p.logprobs, padv, cfg);
        const auto g = loss_and_grad(kind, lp, advantages, cfg);
        err = worse(err, rel_diff(g_p.loss, g.loss));
        cmp(g_p.grad, g.grad);
      }
    }
    if (valid_count(lp.mask, n) >= 2) {
      try {
        cmp(batch_normalize(padv, p.logprobs.mask), batch_normalize(advantages, lp.mask));
      } catch (const DegenerateBatchError&) {
      }
    }
    L.record("mask_consistency", err, 0.0, where);
  });

  for (auto [kind, name] : {std::pair{LossKind::DualClip, "grad_dual_clip"}, std::pair{LossKind::Grpo, "grad_grpo"}}) {
    guarded(L, name, o.grad_tolerance, where, [&] {
      const auto r = grad_check(kind, lp, advantages, cfg, o.grad_step);
      L.record(name, r.max_rel_error, o.grad_tolerance, where);
    });
  }
}

FixtureBatch random_batch(std::mt19937_64& rng, std::size_t n, bool with_mask) {
  std::normal_distribution<double> noise(0.0, 1.0);
  std::uniform_real_distribution<double> logp(-4.0, -0.05);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  FixtureBatch b;
  for (std::size_t i = 0; i < n; ++i) {
    const double old = logp(rng);
    b.logprobs.old.push_back(old);
    b.logprobs.current.push_back(old + 0.3 * noise(rng));
    b.logprobs.reference.push_back(old + 0.1 * noise(rng));
    b.trajectory.rewards.push_back(unit(rng) < 0.3 ? noise(rng) : 0.0);
    b.trajectory.values.push_back(noise(rng));
  }
  b.trajectory.values.push_back(noise(rng));
  b.trajectory.outcome_reward = unit(rng) < 0.5 ? 1.0 : 0.0;
  if (with_mask) {
    for (std::size_t i = 0; i < n; ++i) b.logprobs.mask.push_back(unit(rng) < 0.15 ? 0 : 1);
    b.trajectory.mask = b.logprobs.mask;
  }
  return b;
}

void check_groups(Ledger& L, std::mt19937_64& rng, const std::string& where) {
  std::uniform_int_distribution<int> groups(1, 6);
  std::uniform_int_distribution<std::size_t> size(2, 8);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<std::vector<double>> rewards(static_cast<std::size_t>(groups(rng)));
  for (auto& g : rewards) {
    const auto n = size(rng);
    const bool binary = unit(rng) < 0.5;
    const bool constant = unit(rng) < 0.2;
    const double c = unit(rng);
    for (std::size_t i = 0; i < n; ++i) {
      g.push_back(constant ? c : (binary ? (unit(rng) < 0.5 ? 1.0 : 0.0) : unit(rng)));
    }
  }
  guarded(L, "grpo_group_moments", kMomentTol, where, [&] {
    const auto out = grpo_advantages(rewards);
    for (std::size_t g = 0; g < rewards.size(); ++g) {
      const bool flagged = std::find(out.degenerate_groups.begin(), out.degenerate_groups.end(), g) !=
                           out.degenerate_groups.end();
      const bool identical = std::all_of(rewards[g].begin(), rewards[g].end(),
                                         [&](double r) { return r == rewards[g].front(); });
      if (identical) {
        const bool zeroed =
            std::all_of(out.advantages[g].begin(), out.advantages[g].end(), [](double a) { return a == 0.0; });
        if (!flagged || !zeroed) {
          L.fail("grpo_group_moments", kMomentTol, where, "identical-reward group not zeroed and flagged");
        }
        continue;
      }
      if (flagged) L.fail("grpo_group_moments", kMomentTol, where, "varied group flagged degenerate");
      const auto m = moments_error(out.advantages[g], {});
      L.record("grpo_group_moments", std::max(m.mean, m.stddev), kMomentTol, where);
    }
  });

  guarded(L, "degenerate_detection", 0.0, where, [&] {
    const std::vector<double> flat(size(rng), unit(rng));
    try {
      (void)batch_normalize(flat);
      L.fail("degenerate_detection", 0.0, where, "constant batch was normalized");
    } catch (const DegenerateBatchError&) {
      L.record("degenerate_detection", 0.0, 0.0, where);
    }
  });
}

}  // namespace

std::vector<CheckResult> run_selfcheck(const SelfCheckOptions& opts, const std::vector<FixtureBatch>& fixtures) {
  if (opts.seeds < 0) throw std::invalid_argument("seeds must be >= 0");
  opts.config.validate();
  Ledger ledger;
  for (int s = 0; s < opts.seeds; ++s) {
    const auto where = fmt::format("seed {}", s);
    std::mt19937_64 rng(opts.base_seed + static_cast<std::uint64_t>(s));
    // One full 32-token batch for the gradient checks plus a masked batch of random length.
    for (const bool masked : {false, true}) {
      const std::size_t n = masked ? std::uniform_int_distribution<std::size_t>(1, 64)(rng) : 32;
      const auto batch = random_batch(rng, n, masked);
      std::normal_distribution<double> noise(0.0, 1.0);
      std::vector<double> adv(n);
      for (auto& a : adv) a = noise(rng);
      check_batch(ledger, batch, adv, opts, where, rng);
    }
    check_groups(ledger, rng, where);
  }
  for (std::size_t i = 0; i < fixtures.size(); ++i) {
    const auto where = fmt::format("fixture batch {}", i);
    std::mt19937_64 rng(opts.base_seed ^ (0x9e3779b97f4a7c15ULL * (i + 1)));
    const auto& f = fixtures[i];
    std::vector<double> adv;
    try {
      adv = gae_advantages(f.trajectory, opts.config.gae_gamma, opts.config.gae_lambda);
    } catch (const std::exception& e) {
      ledger.fail("fixture_shape", 0.0, where, e.what());
      continue;
    }
    if (adv.size() != f.logprobs.size()) {
      ledger.fail("fixture_shape", 0.0, where, "log-prob and reward columns differ in length");
      continue;
    }
    check_batch(ledger, f, adv, opts, where, rng);
  }
  return ledger.results();
}

bool all_passed(const std::vector<CheckResult>& results) {
  return std::all_of(results.begin(), results.end(), [](const CheckResult& r) { return r.passed; });
}

}  // namespace stts::rl
