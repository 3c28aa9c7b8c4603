#pragma once

#include <cstddef>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

namespace stts {

/// Malformed JSONL input. line() is 1-based.
class JsonlError : public std::runtime_error {
 public:
  JsonlError(const std::string& what, std::size_t line) : std::runtime_error(what), line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

struct JsonlLine {
  std::size_t line_number = 0;
  nlohmann::json value;
};

/// Parses every non-blank line. Throws JsonlError naming the first bad line,
/// or std::runtime_error when the file cannot be opened.
std::vector<JsonlLine> read_jsonl(const std::filesystem::path& path);

/// Appends one JSON document per line. Writes from concurrent threads are
/// serialized; each write_all() batch lands contiguously and is flushed.
class JsonlWriter {
 public:
  enum class Mode { Truncate, Append };

  JsonlWriter(const std::filesystem::path& path, Mode mode);

  void write(const nlohmann::json& value);
  void write_all(const std::vector<nlohmann::json>& values);

 private:
  std::mutex mutex_;
  std::ofstream out_;
  std::filesystem::path path_;
};

/// Writes `content` to a sibling temp file then renames it into place.
void write_file_atomic(const std::filesystem::path& path, std::string_view content);

/// Creates `dir` if needed and checks that a file can be created inside it.
/// Throws std::runtime_error otherwise.
void ensure_writable_dir(const std::filesystem::path& dir);

}  // namespace stts
