#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace xaudit::csv {

/// Splits one CSV record. Handles double-quoted fields with "" escapes.
std::vector<std::string> split_record(std::string_view line);

struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  /// First column with this header name, or npos.
  std::size_t column(std::string_view name) const;
};

/// Reads a whole CSV file. Blank lines are skipped; a trailing '\r' is stripped.
Table read(const std::filesystem::path& path);

/// Writes `content` to `path` through a temporary file and a rename.
void write_atomic(const std::filesystem::path& path, const std::string& content);

}  // namespace xaudit::csv
