#pragma once

#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "stts/bench.hpp"
#include "stts/forcing.hpp"
#include "stts/http_backend.hpp"
#include "stts/rlmath.hpp"

namespace stts::cli {

/// Anything wrong with the configuration or the environment it names:
/// unknown keys, bad values, missing dataset files, unwritable outputs.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct BackendSettings {
  std::string kind = "http";  // "http" or "scripted"
  HttpBackendConfig http;
  std::filesystem::path script;  // scripted backend JSONL
};

struct CurationSettings {
  int cycles = 3;
  double temperature = 1.0;
};

struct RunSettings {
  int parallelism = 1;
  std::filesystem::path output = "runs";
  bool resume = false;
  double max_failure_fraction = 0.1;
};

struct AppConfig {
  BackendSettings backend;
  ForcingConfig forcing;
  CurationSettings curation;
  std::vector<DatasetSpec> datasets;
  std::optional<std::filesystem::path> template_path;
  std::string template_id;
  std::optional<std::filesystem::path> lexicon_path;
  rl::RlConfig rl;
  RunSettings run;

  /// The effective configuration, as written into provenance headers.
  nlohmann::json echo() const;
};

/// Sections: backend, forcing, curation, datasets, prompt, lexicon, rl, run.
/// Keys starting with '_' are comments. Unknown keys are errors. Relative
/// paths resolve against `base_dir`.
AppConfig config_from_json(const nlohmann::json& j, const std::filesystem::path& base_dir);
AppConfig load_config(const std::filesystem::path& path);

/// "path=...,format=...,tag=..." or a bare file path.
DatasetSpec dataset_from_flag(const std::string& text);

}  // namespace stts::cli
