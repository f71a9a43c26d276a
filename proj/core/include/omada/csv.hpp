#pragma once

#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

namespace omada {

/// 17 significant digits, enough to round-trip any double.
std::string format_real(double v);

/// Comma-separated line writer. Fields never contain commas in this project,
/// so no quoting is performed.
class CsvWriter {
 public:
  explicit CsvWriter(std::ostream& out) : out_(out) {}
  void header(const std::vector<std::string>& columns);
  CsvWriter& field(std::string_view text);
  CsvWriter& field(double v);
  CsvWriter& field(long long v);
  CsvWriter& field(std::size_t v) { return field(static_cast<long long>(v)); }
  CsvWriter& field(int v) { return field(static_cast<long long>(v)); }
  void end_row();

 private:
  std::ostream& out_;
  bool first_ = true;
};

std::vector<std::string> split_csv_line(std::string_view line);
double parse_real(std::string_view text);

}  // namespace omada
