#include "stts/jsonl.hpp"

#include <system_error>

namespace stts {

std::vector<JsonlLine> read_jsonl(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::vector<JsonlLine> lines;
  std::string line;
  std::size_t number = 0;
  while (std::getline(in, line)) {
    ++number;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    try {
      lines.push_back({number, nlohmann::json::parse(line)});
    } catch (const nlohmann::json::parse_error& e) {
      throw JsonlError(path.string() + ":" + std::to_string(number) + ": " + e.what(), number);
    }
    if (!lines.back().value.is_object()) {
      throw JsonlError(path.string() + ":" + std::to_string(number) + ": expected a JSON object", number);
    }
  }
  return lines;
}

JsonlWriter::JsonlWriter(const std::filesystem::path& path, Mode mode)
    : out_(path, std::ios::binary | (mode == Mode::Append ? std::ios::app : std::ios::trunc)), path_(path) {
  if (!out_) throw std::runtime_error("cannot open " + path.string() + " for writing");
}

void JsonlWriter::write(const nlohmann::json& value) { write_all({value}); }

void JsonlWriter::write_all(const std::vector<nlohmann::json>& values) {
  std::string block;
  for (const auto& v : values) {
    block += v.dump();
    block += '\n';
  }
  std::lock_guard lock(mutex_);
  out_.write(block.data(), static_cast<std::streamsize>(block.size()));
  out_.flush();
  if (!out_) throw std::runtime_error("write to " + path_.string() + " failed");
}

void write_file_atomic(const std::filesystem::path& path, std::string_view content) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open " + tmp.string() + " for writing");
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!out) throw std::runtime_error("write to " + tmp.string() + " failed");
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw std::runtime_error("cannot move " + tmp.string() + " to " + path.string() + ": " + ec.message());
}

void ensure_writable_dir(const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw std::runtime_error("cannot create output directory " + dir.string() + ": " + ec.message());
  const auto probe = dir / ".stts-write-probe";
  {
    std::ofstream out(probe, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("output directory " + dir.string() + " is not writable");
  }
  std::filesystem::remove(probe, ec);
}

}  // namespace stts
