#include "plab/util/csv.hpp"

#include <fmt/format.h>

#include <sstream>

#include "plab/util/error.hpp"

namespace plab {

CsvWriter::CsvWriter(std::string_view schema, int version, std::vector<std::string> columns)
    : width_(columns.size()) {
  out_ = fmt::format("# schema={} version={}\n", schema, version);
  for (std::size_t i = 0; i < columns.size(); ++i) {
    if (i) out_ += ',';
    out_ += columns[i];
  }
  out_ += '\n';
}

void CsvWriter::sep() {
  if (in_row_++) out_ += ',';
}

CsvWriter& CsvWriter::cell(std::string_view s) {
  PLAB_REQUIRE(s.find_first_of(",\n") == std::string_view::npos, "csv: cell contains a separator");
  sep();
  out_ += s;
  return *this;
}

CsvWriter& CsvWriter::cell(double v) {
  sep();
  out_ += fmt::format("{}", v);
  return *this;
}

CsvWriter& CsvWriter::cell(long long v) {
  sep();
  out_ += fmt::format("{}", v);
  return *this;
}

CsvWriter& CsvWriter::cell(unsigned long long v) {
  sep();
  out_ += fmt::format("{}", v);
  return *this;
}

void CsvWriter::end_row() {
  PLAB_REQUIRE(in_row_ == width_, "csv: row has " + std::to_string(in_row_) + " cells, header has " + std::to_string(width_));
  out_ += '\n';
  in_row_ = 0;
}

std::size_t CsvTable::column(std::string_view name) const {
  for (std::size_t i = 0; i < columns.size(); ++i)
    if (columns[i] == name) return i;
  throw DataError("csv: missing column '" + std::string(name) + "'");
}

namespace {

std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream in(line);
  while (std::getline(in, cur, ',')) out.push_back(cur);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

}  // namespace

CsvTable parse_csv(const std::string& text) {
  CsvTable t;
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line.rfind("# schema=", 0) != 0) throw DataError("csv: missing schema line");
  const auto vpos = line.find(" version=");
  if (vpos == std::string::npos) throw DataError("csv: missing schema version");
  t.schema = line.substr(9, vpos - 9);
  t.version = std::stoi(line.substr(vpos + 9));
  if (!std::getline(in, line)) throw DataError("csv: missing header");
  t.columns = split(line);
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    auto row = split(line);
    if (row.size() != t.columns.size()) throw DataError("csv: ragged row");
    t.rows.push_back(std::move(row));
  }
  return t;
}

}  // namespace plab
