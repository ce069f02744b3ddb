#include "optsens/csv.hpp"

#include "optsens/linalg.hpp"

#include <fmt/format.h>

#include <fstream>
#include <sstream>

namespace optsens {

std::string format_real(double value) { return fmt::format("{:.17g}", value); }

std::size_t CsvTable::column(const std::string& name) const {
  for (std::size_t i = 0; i < header.size(); ++i) {
    if (header[i] == name) return i;
  }
  throw Error(fmt::format("CSV column '{}' not found", name));
}

void write_csv(const std::filesystem::path& path, const CsvTable& table) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(fmt::format("cannot write '{}'", path.string()));
  auto write_row = [&](const std::vector<std::string>& fields) {
    for (std::size_t i = 0; i < fields.size(); ++i) {
      if (fields[i].find_first_of(",\n\r") != std::string::npos) {
        throw Error(fmt::format("CSV field '{}' contains a separator", fields[i]));
      }
      if (i > 0) out << ',';
      out << fields[i];
    }
    out << '\n';
  };
  write_row(table.header);
  for (const auto& row : table.rows) {
    if (row.size() != table.header.size()) throw Error(fmt::format("CSV row width mismatch in '{}'", path.string()));
    write_row(row);
  }
  if (!out) throw Error(fmt::format("failed writing '{}'", path.string()));
}

CsvTable read_csv(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(fmt::format("cannot read '{}'", path.string()));
  auto split = [](const std::string& line) {
    std::vector<std::string> fields;
    std::stringstream ss(line);
    std::string field;
    while (std::getline(ss, field, ',')) fields.push_back(field);
    if (!line.empty() && line.back() == ',') fields.emplace_back();
    return fields;
  };
  CsvTable table;
  std::string line;
  if (!std::getline(in, line)) throw Error(fmt::format("'{}' is empty", path.string()));
  table.header = split(line);
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    auto fields = split(line);
    if (fields.size() != table.header.size()) {
      throw Error(fmt::format("{}:{}: expected {} fields, found {}", path.string(), line_no, table.header.size(),
                              fields.size()));
    }
    table.rows.push_back(std::move(fields));
  }
  return table;
}

}  // namespace optsens
