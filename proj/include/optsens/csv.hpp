#pragma once

#include <filesystem>
#include <string>
#include <vector>

namespace optsens {

/// Shortest text that reads back to the same double (17 significant digits).
[[nodiscard]] std::string format_real(double value);

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  /// Column position by name; throws Error when absent.
  [[nodiscard]] std::size_t column(const std::string& name) const;
};

/// Writes ',' separated values with LF line endings. Fields are not quoted, so
/// they must not contain commas or newlines.
void write_csv(const std::filesystem::path& path, const CsvTable& table);
[[nodiscard]] CsvTable read_csv(const std::filesystem::path& path);

}  // namespace optsens
