#include "stts/bench.hpp"

#include <algorithm>
#include <charconv>
#include <limits>
#include <random>
#include <unordered_set>

#include "stts/jsonl.hpp"

namespace stts {

using nlohmann::json;

std::string_view to_string(DatasetFormat f) {
  return f == DatasetFormat::Pairwise ? "pairwise" : "one_to_many";
}

DatasetFormat dataset_format_from_string(std::string_view s) {
  if (s == "pairwise") return DatasetFormat::Pairwise;
  if (s == "one_to_many" || s == "onetomany" || s == "one-to-many") return DatasetFormat::OneToMany;
  throw std::invalid_argument("unknown dataset format '" + std::string(s) + "'");
}

namespace {

template <typename T>
T parse_number(std::string_view key, std::string_view value) {
  T out{};
  auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), out);
  if (ec != std::errc{} || ptr != value.data() + value.size()) {
    throw std::invalid_argument("dataset spec: bad value for " + std::string(key) + ": '" + std::string(value) + "'");
  }
  return out;
}

void finish(LoadResult& result, const DatasetSpec& spec) {
  if (spec.shuffle_seed) seeded_shuffle(result.instances, *spec.shuffle_seed);
  if (spec.limit && static_cast<std::int64_t>(result.instances.size()) > *spec.limit) {
    result.instances.resize(static_cast<std::size_t>(*spec.limit));
  }
}

}  // namespace

DatasetSpec DatasetSpec::parse(std::string_view text) {
  DatasetSpec spec;
  bool has_path = false;
  while (!text.empty()) {
    const auto comma = text.find(',');
    auto item = text.substr(0, comma);
    text = comma == std::string_view::npos ? std::string_view{} : text.substr(comma + 1);
    if (item.empty()) continue;
    const auto eq = item.find('=');
    if (eq == std::string_view::npos) {
      throw std::invalid_argument("dataset spec: expected key=value, got '" + std::string(item) + "'");
    }
    const auto key = item.substr(0, eq);
    const auto value = item.substr(eq + 1);
    if (key == "path") {
      spec.path = std::string(value);
      has_path = true;
    } else if (key == "format") {
      spec.format = dataset_format_from_string(value);
    } else if (key == "tag" || key == "source_tag") {
      spec.source_tag = std::string(value);
    } else if (key == "limit") {
      spec.limit = parse_number<std::int64_t>(key, value);
    } else if (key == "shuffle_seed" || key == "seed") {
      spec.shuffle_seed = parse_number<std::uint64_t>(key, value);
    } else {
      throw std::invalid_argument("dataset spec: unknown key '" + std::string(key) + "'");
    }
  }
  if (!has_path) throw std::invalid_argument("dataset spec: path is required");
  if (spec.source_tag.empty()) spec.source_tag = spec.path.stem().string();
  return spec;
}

void DatasetSpec::validate() const {
  if (limit && *limit < 1) throw InvariantError("dataset limit must be >= 1");
  std::error_code ec;
  if (!std::filesystem::is_regular_file(path, ec)) {
    throw std::runtime_error("dataset file not found: " + path.string());
  }
}

void seeded_shuffle(std::vector<PreferenceInstance>& items, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  for (std::size_t i = items.size(); i > 1; --i) {
    // Rejection sampling for an unbiased draw in [0, i).
    const std::uint64_t bound = i;
    const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() - std::numeric_limits<std::uint64_t>::max() % bound;
    std::uint64_t x = rng();
    while (x >= limit) x = rng();
    std::swap(items[i - 1], items[static_cast<std::size_t>(x % bound)]);
  }
}

LoadResult load_pairwise(const DatasetSpec& spec) {
  spec.validate();
  LoadResult result;
  std::unordered_set<std::string> ids;
  for (const auto& line : read_jsonl(spec.path)) {
    PreferenceInstance inst;
    try {
      from_json(line.value, inst);
      if (inst.source_tag.empty()) inst.source_tag = spec.source_tag;
      inst.validate();
    } catch (const std::exception& e) {
      result.rejected.push_back({line.line_number, e.what()});
      continue;
    }
    if (!ids.insert(inst.id).second) {
      result.rejected.push_back({line.line_number, "duplicate id '" + inst.id + "'"});
      continue;
    }
    result.instances.push_back(std::move(inst));
  }
  finish(result, spec);
  return result;
}

std::vector<PreferenceInstance> expand_one_to_many(const OneToManyProblem& problem, const std::string& source_tag) {
  if (problem.rejected.empty()) throw InvariantError("problem '" + problem.id + "' has no rejected solutions");
  std::vector<PreferenceInstance> out;
  out.reserve(problem.rejected.size());
  for (std::size_t j = 0; j < problem.rejected.size(); ++j) {
    PreferenceInstance inst;
    inst.id = problem.id + "#" + std::to_string(j);
    inst.query = problem.query;
    inst.source_tag = source_tag;
    if (j % 2 == 0) {
      inst.answer_a = problem.chosen;
      inst.answer_b = problem.rejected[j];
      inst.label = Preference::A;
    } else {
      inst.answer_a = problem.rejected[j];
      inst.answer_b = problem.chosen;
      inst.label = Preference::B;
    }
    inst.validate();
    out.push_back(std::move(inst));
  }
  return out;
}

LoadResult load_one_to_many(const DatasetSpec& spec) {
  spec.validate();
  LoadResult result;
  std::unordered_set<std::string> ids;
  for (const auto& line : read_jsonl(spec.path)) {
    std::vector<PreferenceInstance> expanded;
    try {
      OneToManyProblem p;
      line.value.at("id").get_to(p.id);
      line.value.at("query").get_to(p.query);
      line.value.at("chosen").get_to(p.chosen);
      line.value.at("rejected").get_to(p.rejected);
      expanded = expand_one_to_many(p, line.value.value("source_tag", spec.source_tag));
    } catch (const std::exception& e) {
      result.rejected.push_back({line.line_number, e.what()});
      continue;
    }
    const auto clash = std::find_if(expanded.begin(), expanded.end(),
                                    [&](const PreferenceInstance& inst) { return ids.contains(inst.id); });
    if (clash != expanded.end()) {
      result.rejected.push_back({line.line_number, "duplicate id '" + clash->id + "'"});
      continue;
    }
    for (auto& inst : expanded) {
      ids.insert(inst.id);
      result.instances.push_back(std::move(inst));
    }
  }
  finish(result, spec);
  return result;
}

LoadResult load_dataset(const DatasetSpec& spec) {
  return spec.format == DatasetFormat::Pairwise ? load_pairwise(spec) : load_one_to_many(spec);
}

}  // namespace stts
