#pragma once

#include <optional>
#include <span>
#include <vector>

namespace stts::stats {

double mean(std::span<const double> xs);

/// Population (divide-by-n) standard deviation, two-pass.
double population_stddev(std::span<const double> xs);

/// Two-pass Pearson correlation. nullopt when either side has zero variance
/// or fewer than two points. Throws std::invalid_argument on size mismatch.
std::optional<double> pearson(std::span<const double> xs, std::span<const double> ys);

/// Nearest-rank percentile (p in (0, 100]) of unsorted data. Throws on empty input.
double nearest_rank_percentile(std::vector<double> xs, double p);

}  // namespace stts::stats
