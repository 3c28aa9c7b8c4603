#include "config.hpp"

#include <fstream>
#include <set>

#include <fmt/format.h>

namespace stts::cli {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

// Reads typed keys from one object and rejects the ones nobody asked for.
class Section {
 public:
  Section(const json& j, std::string name) : j_(j), name_(std::move(name)) {
    if (!j_.is_object()) throw ConfigError(fmt::format("config: '{}' must be an object", name_));
  }

  template <typename T>
  void get(const char* key, T& out) {
    seen_.insert(key);
    auto it = j_.find(key);
    if (it == j_.end() || it->is_null()) return;
    try {
      out = it->get<T>();
    } catch (const json::exception&) {
      throw ConfigError(fmt::format("config: {}.{} has the wrong type", name_, key));
    }
  }

  template <typename T>
  void get(const char* key, std::optional<T>& out) {
    seen_.insert(key);
    auto it = j_.find(key);
    if (it == j_.end() || it->is_null()) return;
    try {
      out = it->get<T>();
    } catch (const json::exception&) {
      throw ConfigError(fmt::format("config: {}.{} has the wrong type", name_, key));
    }
  }

  void path(const char* key, fs::path& out, const fs::path& base) {
    std::optional<std::string> s;
    get(key, s);
    if (s) out = resolve(*s, base);
  }

  const json* child(const char* key) {
    seen_.insert(key);
    auto it = j_.find(key);
    return it == j_.end() || it->is_null() ? nullptr : &*it;
  }

  void finish() const {
    for (const auto& [key, value] : j_.items()) {
      if (!key.empty() && key[0] == '_') continue;
      if (!seen_.contains(key)) throw ConfigError(fmt::format("config: unknown key '{}.{}'", name_, key));
    }
  }

  static fs::path resolve(const std::string& p, const fs::path& base) {
    fs::path path(p);
    return path.is_absolute() || base.empty() ? path : base / path;
  }

 private:
  const json& j_;
  std::string name_;
  std::set<std::string> seen_;
};

void read_backend(const json& j, BackendSettings& b, const fs::path& base) {
  Section s(j, "backend");
  s.get("kind", b.kind);
  s.get("url", b.http.url);
  s.get("model", b.http.model);
  s.get("api_key_env", b.http.api_key_env);
  s.get("max_concurrency", b.http.max_concurrency);
  s.get("max_retries", b.http.max_retries);
  std::int64_t backoff_ms = b.http.retry_backoff.count();
  std::int64_t connect_s = b.http.connect_timeout.count();
  std::int64_t read_s = b.http.read_timeout.count();
  s.get("retry_backoff_ms", backoff_ms);
  s.get("connect_timeout_s", connect_s);
  s.get("read_timeout_s", read_s);
  b.http.retry_backoff = std::chrono::milliseconds(backoff_ms);
  b.http.connect_timeout = std::chrono::seconds(connect_s);
  b.http.read_timeout = std::chrono::seconds(read_s);
  s.path("script", b.script, base);
  s.finish();
  if (b.kind != "http" && b.kind != "scripted") {
    throw ConfigError("config: backend.kind must be 'http' or 'scripted', got '" + b.kind + "'");
  }
}

void read_forcing(const json& j, ForcingConfig& f) {
  Section s(j, "forcing");
  s.get("budget", f.budget);
  s.get("injection", f.injection);
  s.get("finalize_suffix", f.finalize_suffix);
  s.get("max_tokens", f.max_tokens);
  s.get("finalize_max_tokens", f.finalize_max_tokens);
  s.get("temperature", f.temperature);
  s.get("seed", f.seed);
  if (const auto* m = s.child("markers")) {
    Section ms(*m, "forcing.markers");
    ms.get("think_open", f.markers.think_open);
    ms.get("think_close", f.markers.think_close);
    ms.get("verdict_a", f.markers.verdict_a);
    ms.get("verdict_b", f.markers.verdict_b);
    ms.finish();
  }
  s.finish();
}

void read_rl(const json& j, rl::RlConfig& r) {
  Section s(j, "rl");
  s.get("eps_low", r.eps_low);
  s.get("eps_high", r.eps_high);
  s.get("dual_clip_c", r.dual_clip_c);
  s.get("kl_beta", r.kl_beta);
  s.get("gae_gamma", r.gae_gamma);
  s.get("gae_lambda", r.gae_lambda);
  s.get("log_ratio_cap", r.log_ratio_cap);
  s.get("strict_literal", r.strict_literal);
  std::string kl = r.kl_estimator == rl::KlEstimator::LogRatio ? "k1" : "k3";
  s.get("kl_estimator", kl);
  if (kl == "k1") {
    r.kl_estimator = rl::KlEstimator::LogRatio;
  } else if (kl == "k3") {
    r.kl_estimator = rl::KlEstimator::Unbiased;
  } else {
    throw ConfigError("config: rl.kl_estimator must be 'k1' or 'k3'");
  }
  s.finish();
}

DatasetSpec read_dataset(const json& j, const fs::path& base) {
  if (j.is_string()) {
    auto spec = dataset_from_flag(j.get<std::string>());
    spec.path = Section::resolve(spec.path.string(), base);
    return spec;
  }
  Section s(j, "datasets[]");
  DatasetSpec spec;
  s.path("path", spec.path, base);
  std::string format(to_string(spec.format));
  s.get("format", format);
  s.get("tag", spec.source_tag);
  s.get("limit", spec.limit);
  s.get("shuffle_seed", spec.shuffle_seed);
  s.finish();
  if (spec.path.empty()) throw ConfigError("config: every dataset needs a path");
  try {
    spec.format = dataset_format_from_string(format);
  } catch (const std::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  if (spec.source_tag.empty()) spec.source_tag = spec.path.stem().string();
  return spec;
}

}  // namespace

DatasetSpec dataset_from_flag(const std::string& text) {
  try {
    if (text.find('=') == std::string::npos) {
      DatasetSpec spec;
      spec.path = text;
      spec.source_tag = spec.path.stem().string();
      return spec;
    }
    return DatasetSpec::parse(text);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
}

AppConfig config_from_json(const json& j, const fs::path& base_dir) {
  AppConfig c;
  Section top(j, "config");
  if (const auto* b = top.child("backend")) read_backend(*b, c.backend, base_dir);
  if (const auto* f = top.child("forcing")) read_forcing(*f, c.forcing);
  if (const auto* cur = top.child("curation")) {
    Section s(*cur, "curation");
    s.get("cycles", c.curation.cycles);
    s.get("temperature", c.curation.temperature);
    s.finish();
  }
  if (const auto* ds = top.child("datasets")) {
    if (!ds->is_array()) throw ConfigError("config: 'datasets' must be an array");
    for (const auto& d : *ds) c.datasets.push_back(read_dataset(d, base_dir));
  }
  if (const auto* p = top.child("prompt")) {
    Section s(*p, "prompt");
    fs::path tmpl;
    s.path("template", tmpl, base_dir);
    if (!tmpl.empty()) c.template_path = tmpl;
    s.get("template_id", c.template_id);
    s.finish();
  }
  if (const auto* l = top.child("lexicon")) {
    if (!l->is_string()) throw ConfigError("config: 'lexicon' must be a file path");
    c.lexicon_path = Section::resolve(l->get<std::string>(), base_dir);
  }
  if (const auto* r = top.child("rl")) read_rl(*r, c.rl);
  if (const auto* r = top.child("run")) {
    Section s(*r, "run");
    s.get("parallelism", c.run.parallelism);
    s.path("output", c.run.output, base_dir);
    s.get("resume", c.run.resume);
    s.get("max_failure_fraction", c.run.max_failure_fraction);
    s.finish();
  }
  top.finish();
  return c;
}

AppConfig load_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config file not found: " + path.string());
  json j;
  try {
    j = json::parse(in, nullptr, true, /*ignore_comments=*/true);
  } catch (const json::parse_error& e) {
    throw ConfigError("config " + path.string() + ": " + e.what());
  }
  return config_from_json(j, path.parent_path());
}

json AppConfig::echo() const {
  json datasets_j = json::array();
  for (const auto& d : datasets) {
    datasets_j.push_back({{"path", d.path.string()},
                          {"format", to_string(d.format)},
                          {"tag", d.source_tag},
                          {"limit", d.limit ? json(*d.limit) : json(nullptr)},
                          {"shuffle_seed", d.shuffle_seed ? json(*d.shuffle_seed) : json(nullptr)}});
  }
  json backend_j{{"kind", backend.kind}};
  if (backend.kind == "http") {
    backend_j.update({{"url", backend.http.url},
                      {"model", backend.http.model},
                      {"api_key_env", backend.http.api_key_env},
                      {"max_concurrency", backend.http.max_concurrency},
                      {"max_retries", backend.http.max_retries}});
  } else {
    backend_j["script"] = backend.script.string();
  }
  return {
      {"backend", backend_j},
      {"forcing",
       {{"budget", forcing.budget},
        {"injection", forcing.injection},
        {"finalize_suffix", forcing.finalize_suffix},
        {"max_tokens", forcing.max_tokens},
        {"finalize_max_tokens", forcing.finalize_max_tokens},
        {"temperature", forcing.temperature},
        {"seed", forcing.seed ? json(*forcing.seed) : json(nullptr)},
        {"markers",
         {{"think_open", forcing.markers.think_open},
          {"think_close", forcing.markers.think_close},
          {"verdict_a", forcing.markers.verdict_a},
          {"verdict_b", forcing.markers.verdict_b}}}}},
      {"curation", {{"cycles", curation.cycles}, {"temperature", curation.temperature}}},
      {"datasets", datasets_j},
      {"prompt",
       {{"template", template_path ? json(template_path->string()) : json(nullptr)}, {"template_id", template_id}}},
      {"lexicon", lexicon_path ? json(lexicon_path->string()) : json(nullptr)},
      {"rl",
       {{"eps_low", rl.eps_low},
        {"eps_high", rl.eps_high},
        {"dual_clip_c", rl.dual_clip_c},
        {"kl_beta", rl.kl_beta},
        {"gae_gamma", rl.gae_gamma},
        {"gae_lambda", rl.gae_lambda},
        {"log_ratio_cap", rl.log_ratio_cap},
        {"kl_estimator", rl.kl_estimator == rl::KlEstimator::LogRatio ? "k1" : "k3"},
        {"strict_literal", rl.strict_literal}}},
      {"run",
       {{"parallelism", run.parallelism},
        {"output", run.output.string()},
        {"resume", run.resume},
        {"max_failure_fraction", run.max_failure_fraction}}},
  };
}

}  // namespace stts::cli
