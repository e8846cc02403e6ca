#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace plab {

// Comma-separated table with a leading "# schema=<name> version=<v>" line.
// Doubles are written in shortest round-trip form.
class CsvWriter {
 public:
  CsvWriter(std::string_view schema, int version, std::vector<std::string> columns);

  CsvWriter& cell(std::string_view s);
  CsvWriter& cell(double v);
  CsvWriter& cell(long long v);
  CsvWriter& cell(unsigned long long v);
  CsvWriter& cell(int v) { return cell(static_cast<long long>(v)); }
  CsvWriter& cell(unsigned v) { return cell(static_cast<unsigned long long>(v)); }
  CsvWriter& cell(unsigned long v) { return cell(static_cast<unsigned long long>(v)); }
  CsvWriter& cell(long v) { return cell(static_cast<long long>(v)); }
  // Throws ContractError when the row width differs from the header.
  void end_row();

  const std::string& str() const { return out_; }

 private:
  void sep();
  std::string out_;
  std::size_t width_;
  std::size_t in_row_ = 0;
};

struct CsvTable {
  std::string schema;
  int version = 0;
  std::vector<std::string> columns;
  std::vector<std::vector<std::string>> rows;

  // Throws DataError when the column is absent.
  std::size_t column(std::string_view name) const;
};

// Parses what CsvWriter emits (no quoting).
CsvTable parse_csv(const std::string& text);

}  // namespace plab
