#pragma once

#include <charconv>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <utility>
#include <vector>

#include "nnfuse/error.hpp"

namespace nnfuse {

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::kIo, "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

/// Shortest decimal text that round-trips to the same double.
inline std::string format_double(double v) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, end);
}

/// Strict full-string number parse; nullopt if `text` is not a number.
inline std::optional<double> parse_double(std::string_view text) {
  while (!text.empty() && text.front() == ' ') text.remove_prefix(1);
  while (!text.empty() && text.back() == ' ') text.remove_suffix(1);
  if (!text.empty() && text.front() == '+') text.remove_prefix(1);
  if (text.empty()) return std::nullopt;
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc{} || ptr != text.data() + text.size()) return std::nullopt;
  return v;
}

/// Collects output files and publishes them together: every file is first
/// written to a temporary sibling, and only when all writes succeed are they
/// renamed into place. Nothing is published if commit() is never reached.
class OutputBatch {
 public:
  void add(std::filesystem::path path, std::string content) {
    files_.emplace_back(std::move(path), std::move(content));
  }

  bool empty() const noexcept { return files_.empty(); }

  void commit() {
    std::vector<std::pair<std::filesystem::path, std::filesystem::path>> staged;
    try {
      for (const auto& [path, content] : files_) {
        auto tmp = path;
        tmp += ".tmp-nnfuse";
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) fail(ErrorKind::kIo, "cannot write " + tmp.string());
        staged.emplace_back(tmp, path);
        out.write(content.data(), static_cast<std::streamsize>(content.size()));
        out.close();
        if (!out) fail(ErrorKind::kIo, "write failed for " + tmp.string());
      }
    } catch (...) {
      for (const auto& [tmp, _] : staged) {
        std::error_code ec;
        std::filesystem::remove(tmp, ec);
      }
      throw;
    }
    for (const auto& [tmp, path] : staged) {
      std::filesystem::rename(tmp, path);
    }
    files_.clear();
  }

 private:
  std::vector<std::pair<std::filesystem::path, std::string>> files_;
};

// ---------------------------------------------------------------------------
// CSV (RFC 4180 quoting, comma delimiter, header row required)

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
  std::string source;  // file name, for error messages

  /// Column index or nullopt.
  std::optional<std::size_t> find_column(std::string_view name) const {
    for (std::size_t i = 0; i < header.size(); ++i) {
      if (header[i] == name) return i;
    }
    return std::nullopt;
  }

  std::size_t column(std::string_view name) const {
    auto idx = find_column(name);
    if (!idx) {
      fail(ErrorKind::kParse,
           source + ": missing column '" + std::string(name) + "'");
    }
    return *idx;
  }
};

/// Parses CSV text. Row numbers in errors are 1-based physical record
/// numbers, counting the header as row 1.
inline CsvTable parse_csv(std::string_view text, std::string source = "<csv>") {
  CsvTable table;
  table.source = std::move(source);
  if (text.starts_with("\xEF\xBB\xBF")) text.remove_prefix(3);

  std::vector<std::string> record;
  std::string field;
  bool in_quotes = false;
  bool field_quoted = false;
  bool have_header = false;
  std::size_t record_no = 1;

  auto end_record = [&] {
    record.push_back(std::move(field));
    field.clear();
    field_quoted = false;
    const bool blank = record.size() == 1 && record[0].empty();
    if (!have_header) {
      if (blank) fail(ErrorKind::kParse, table.source + ": missing header row");
      table.header = std::move(record);
      have_header = true;
    } else if (!blank) {
      if (record.size() != table.header.size()) {
        fail(ErrorKind::kParse,
             table.source + ": row " + std::to_string(record_no) + " has " +
                 std::to_string(record.size()) + " fields, expected " +
                 std::to_string(table.header.size()));
      }
      table.rows.push_back(std::move(record));
    }
    record.clear();
    ++record_no;
  };

  for (std::size_t i = 0; i < text.size(); ++i) {
    const char c = text[i];
    if (in_quotes) {
      if (c == '"') {
        if (i + 1 < text.size() && text[i + 1] == '"') {
          field.push_back('"');
          ++i;
        } else {
          in_quotes = false;
        }
      } else {
        field.push_back(c);
      }
      continue;
    }
    switch (c) {
      case '"':
        if (!field.empty() || field_quoted) {
          fail(ErrorKind::kParse, table.source + ": row " +
                                      std::to_string(record_no) +
                                      " has a stray quote");
        }
        in_quotes = true;
        field_quoted = true;
        break;
      case ',':
        record.push_back(std::move(field));
        field.clear();
        field_quoted = false;
        break;
      case '\r':
        if (i + 1 < text.size() && text[i + 1] == '\n') break;
        end_record();
        break;
      case '\n':
        end_record();
        break;
      default:
        field.push_back(c);
    }
  }
  if (in_quotes) {
    fail(ErrorKind::kParse, table.source + ": unterminated quote in row " +
                                std::to_string(record_no));
  }
  if (!field.empty() || !record.empty() || field_quoted) end_record();
  if (!have_header) fail(ErrorKind::kParse, table.source + ": missing header row");
  return table;
}

inline CsvTable read_csv(const std::filesystem::path& path) {
  return parse_csv(read_file(path), path.string());
}

inline std::string csv_escape(std::string_view field) {
  if (field.find_first_of(",\"\r\n") == std::string_view::npos) {
    return std::string(field);
  }
  std::string out = "\"";
  for (char c : field) {
    if (c == '"') out.push_back('"');
    out.push_back(c);
  }
  out.push_back('"');
  return out;
}

}  // namespace nnfuse
