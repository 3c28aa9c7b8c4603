#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "stts/model.hpp"

namespace stts {

enum class DatasetFormat : std::uint8_t { Pairwise, OneToMany };

std::string_view to_string(DatasetFormat f);
DatasetFormat dataset_format_from_string(std::string_view s);

struct DatasetSpec {
  std::filesystem::path path;
  DatasetFormat format = DatasetFormat::Pairwise;
  std::string source_tag;
  std::optional<std::int64_t> limit;
  std::optional<std::uint64_t> shuffle_seed;

  /// Parses "path=...,format=pairwise|one_to_many,tag=...,limit=N,shuffle_seed=S".
  static DatasetSpec parse(std::string_view text);
  void validate() const;
};

struct RejectedLine {
  std::size_t line_number = 0;
  std::string reason;
};

struct LoadResult {
  std::vector<PreferenceInstance> instances;
  std::vector<RejectedLine> rejected;
};

/// A problem with one preferred solution and several rejected ones.
struct OneToManyProblem {
  std::string id;
  std::string query;
  std::string chosen;
  std::vector<std::string> rejected;
};

/// Reads pairwise JSONL. Syntactically broken lines throw JsonlError with the
/// line number; lines that parse but violate instance invariants (label not in
/// {0,1}, empty fields, duplicate id) are skipped and listed in `rejected`.
LoadResult load_pairwise(const DatasetSpec& spec);

/// One instance per rejected solution, chosen alternating between the A and B
/// slots by rejected index parity. Ids are "<id>#<j>". Throws InvariantError
/// when `rejected` is empty.
std::vector<PreferenceInstance> expand_one_to_many(const OneToManyProblem& problem, const std::string& source_tag = {});

/// Reads OneToMany JSONL ({id, query, chosen, rejected[]}) and expands it.
LoadResult load_one_to_many(const DatasetSpec& spec);

/// Dispatches on spec.format.
LoadResult load_dataset(const DatasetSpec& spec);

/// Fisher-Yates with a portable bounded draw so that orders are identical
/// across standard libraries.
void seeded_shuffle(std::vector<PreferenceInstance>& items, std::uint64_t seed);

}  // namespace stts
