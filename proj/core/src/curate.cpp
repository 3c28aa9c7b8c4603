#include "stts/curate.hpp"

#include <algorithm>
#include <atomic>
#include <mutex>
#include <thread>
#include <unordered_map>
#include <variant>

#include <fmt/format.h>

#include "stts/jsonl.hpp"

namespace stts {

using nlohmann::json;

namespace {

struct Accepted {
  CurationRecord record;
};
struct Persistent {
  PersistentFailure failure;
};
struct Failed {
  IoFailure failure;
};

struct InstanceOutcome {
  std::variant<Accepted, Persistent, Failed> outcome;
  std::vector<Verdict> verdicts;  // one per cycle reached
};

bool matches(Verdict v, Preference label) {
  const auto l = verdict_to_label(v);
  return l && *l == to_int(label);
}

InstanceOutcome run_instance(const PreferenceInstance& inst, const TemplateSpec& tmpl, Backend& backend, int cycles,
                             const ForcingConfig& forcing, const ReflectiveLexicon& lexicon) {
  const auto prompt = render(tmpl, inst);
  Episode episode(inst, prompt, backend, forcing, lexicon);
  InstanceOutcome out;
  AttemptRecord last;
  for (int cycle = 0; cycle <= cycles; ++cycle) {
    try {
      last = episode.step();
    } catch (const BackendError& e) {
      out.outcome = Failed{{inst.id, cycle, e.what()}};
      return out;
    }
    out.verdicts.push_back(last.verdict);
    if (matches(last.verdict, inst.label)) {
      out.outcome = Accepted{{inst.id, cycle, episode.think_text(), last.trace.final_text, last.verdict}};
      return out;
    }
  }
  out.outcome = Persistent{{inst.id, last.verdict, last.context_overflow}};
  return out;
}

}  // namespace

CurationResult curate(const std::vector<PreferenceInstance>& instances, const TemplateSpec& tmpl, Backend& backend,
                      int cycles, const ForcingConfig& forcing, int parallelism, const ReflectiveLexicon& lexicon) {
  if (cycles < 0) throw std::invalid_argument("curate: cycles must be >= 0");
  if (parallelism < 1) throw std::invalid_argument("curate: parallelism must be >= 1");
  ForcingConfig cfg = forcing;
  cfg.budget = cycles + 1;
  cfg.validate();

  std::vector<InstanceOutcome> outcomes(instances.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (auto i = next.fetch_add(1); i < instances.size(); i = next.fetch_add(1)) {
      outcomes[i] = run_instance(instances[i], tmpl, backend, cycles, cfg, lexicon);
    }
  };
  {
    const auto workers = std::min({static_cast<std::size_t>(parallelism), backend.max_concurrency(),
                                   std::max<std::size_t>(instances.size(), 1)});
    std::vector<std::jthread> pool;
    for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(worker);
  }

  std::vector<std::size_t> order(instances.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return instances[a].id < instances[b].id; });

  CurationResult result;
  for (const auto i : order) {
    const auto& inst = instances[i];
    auto& src = result.stats.by_source[inst.source_tag];
    if (src.cycles.empty()) src.cycles.assign(static_cast<std::size_t>(cycles) + 1, {});
    auto& o = outcomes[i];
    if (auto* f = std::get_if<Failed>(&o.outcome)) {
      ++src.failed_io;
      result.failed_io.push_back(std::move(f->failure));
      continue;
    }
    ++src.original;
    for (std::size_t c = 0; c < o.verdicts.size(); ++c) {
      auto& cell = src.cycles[c];
      ++cell.pool;
      if (o.verdicts[c] == Verdict::Unparseable) ++cell.unparseable;
      if (matches(o.verdicts[c], inst.label)) ++cell.newly_correct;
    }
    if (auto* a = std::get_if<Accepted>(&o.outcome)) {
      result.accepted.push_back(std::move(a->record));
    } else {
      result.persistent_failures.push_back(std::move(std::get<Persistent>(o.outcome).failure));
    }
  }
  return result;
}

std::string CurationStats::table() const {
  std::size_t columns = 0;
  for (const auto& [tag, s] : by_source) columns = std::max(columns, s.cycles.size());

  std::vector<std::vector<std::string>> rows;
  std::vector<std::string> header{"Dataset", "Original Number"};
  for (std::size_t c = 0; c < columns; ++c) header.push_back(fmt::format("Attempt {}", c));
  rows.push_back(header);
  for (const auto& [tag, s] : by_source) {
    std::vector<std::string> row{tag, std::to_string(s.original)};
    for (const auto& cell : s.cycles) row.push_back(fmt::format("{}/{}", cell.newly_correct, cell.pool));
    row.resize(header.size());
    rows.push_back(std::move(row));
  }

  std::vector<std::size_t> width(header.size(), 0);
  for (const auto& row : rows) {
    for (std::size_t c = 0; c < row.size(); ++c) width[c] = std::max(width[c], row[c].size());
  }
  std::string out;
  for (std::size_t r = 0; r < rows.size(); ++r) {
    for (std::size_t c = 0; c < rows[r].size(); ++c) {
      if (c > 0) out += " | ";
      out += fmt::format("{:<{}}", rows[r][c], width[c]);
    }
    while (!out.empty() && out.back() == ' ') out.pop_back();
    out += '\n';
    if (r == 0) {
      for (std::size_t c = 0; c < width.size(); ++c) {
        if (c > 0) out += "-|-";
        out += std::string(width[c], '-');
      }
      out += '\n';
    }
  }
  return out;
}

json CurationStats::to_json() const {
  json out = json::object();
  for (const auto& [tag, s] : by_source) {
    json cycles = json::array();
    for (const auto& cell : s.cycles) {
      cycles.push_back({{"newly_correct", cell.newly_correct}, {"pool", cell.pool}, {"unparseable", cell.unparseable}});
    }
    out[tag] = {{"original", s.original}, {"failed_io", s.failed_io}, {"cycles", cycles}};
  }
  return out;
}

void emit_sft_dataset(const std::vector<CurationRecord>& accepted, const std::vector<PreferenceInstance>& instances,
                      const MarkerConfig& markers, const std::filesystem::path& path) {
  if (accepted.empty()) throw std::invalid_argument("emit_sft_dataset: no accepted records");
  std::unordered_map<std::string, const PreferenceInstance*> by_id;
  for (const auto& inst : instances) by_id.emplace(inst.id, &inst);

  std::vector<const CurationRecord*> sorted;
  for (const auto& r : accepted) sorted.push_back(&r);
  std::sort(sorted.begin(), sorted.end(),
            [](const CurationRecord* a, const CurationRecord* b) { return a->instance_id < b->instance_id; });

  std::string content;
  for (const auto* r : sorted) {
    auto it = by_id.find(r->instance_id);
    if (it == by_id.end()) throw std::invalid_argument("emit_sft_dataset: unknown instance '" + r->instance_id + "'");
    const auto& inst = *it->second;
    json line{{"id", inst.id},
              {"query", inst.query},
              {"answer_a", inst.answer_a},
              {"answer_b", inst.answer_b},
              {"label", to_int(inst.label)},
              {"trajectory", markers.think_open + r->trajectory + markers.think_close},
              {"final_answer", r->final_text},
              {"verdict", to_string(r->verdict)},
              {"accepted_at_cycle", r->accepted_at_cycle}};
    content += line.dump();
    content += '\n';
  }
  write_file_atomic(path, content);
}

}  // namespace stts
