#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace pead::csv {

/// A parsed CSV file with a mandatory header row. Lines starting with '#'
/// are treated as comments.
class Table {
 public:
  static Table read_file(const std::string& path);
  static Table parse(std::string_view text, std::string source_name = "<memory>");

  [[nodiscard]] const std::vector<std::string>& header() const { return header_; }
  [[nodiscard]] std::size_t size() const { return rows_.size(); }
  [[nodiscard]] const std::vector<std::string>& row(std::size_t i) const { return rows_[i]; }
  /// 1-based line number in the source file for data row i.
  [[nodiscard]] std::size_t line_of(std::size_t i) const { return lines_[i]; }
  [[nodiscard]] std::optional<std::size_t> column(std::string_view name) const;
  /// Column index or DataError naming the missing column.
  [[nodiscard]] std::size_t require_column(std::string_view name) const;
  [[nodiscard]] const std::string& source() const { return source_; }

 private:
  std::string source_;
  std::vector<std::string> header_;
  std::unordered_map<std::string, std::size_t> index_;
  std::vector<std::vector<std::string>> rows_;
  std::vector<std::size_t> lines_;
};

std::vector<std::string> split_line(std::string_view line);

/// Blank -> nullopt; otherwise a finite double or DataError.
std::optional<double> parse_optional_double(std::string_view cell);

/// Shortest round-trip decimal representation; empty string for NaN.
std::string format_double(double value);

}  // namespace pead::csv
