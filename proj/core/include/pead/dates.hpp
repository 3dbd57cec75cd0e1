#pragma once

#include <chrono>
#include <compare>
#include <string>
#include <string_view>

namespace pead {

using Date = std::chrono::sys_days;

/// Parses an ISO-8601 calendar date (YYYY-MM-DD). Throws DataError.
Date parse_date(std::string_view text);
std::string format_date(Date date);

/// Fiscal quarter tag such as 2018Q3.
struct FiscalQuarter {
  int year = 0;
  int quarter = 1;  // 1..4

  /// Quarter shifted back by `lag` quarters.
  [[nodiscard]] FiscalQuarter minus(int lag) const;
  [[nodiscard]] int ordinal() const { return year * 4 + (quarter - 1); }
  [[nodiscard]] std::string to_string() const;

  static FiscalQuarter parse(std::string_view text);

  friend auto operator<=>(const FiscalQuarter&, const FiscalQuarter&) = default;
  friend bool operator==(const FiscalQuarter&, const FiscalQuarter&) = default;
};

}  // namespace pead
