#include "pead/dates.hpp"

#include <charconv>
#include <cstdio>

#include "pead/error.hpp"

namespace pead {
namespace {

bool parse_int(std::string_view text, int& out) {
  if (text.empty()) return false;
  const auto* end = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(text.data(), end, out);
  return ec == std::errc{} && ptr == end;
}

}  // namespace

Date parse_date(std::string_view text) {
  int y = 0;
  int m = 0;
  int d = 0;
  if (text.size() != 10 || text[4] != '-' || text[7] != '-' || !parse_int(text.substr(0, 4), y) ||
      !parse_int(text.substr(5, 2), m) || !parse_int(text.substr(8, 2), d)) {
    throw DataError("invalid ISO date '" + std::string(text) + "'");
  }
  const std::chrono::year_month_day ymd{std::chrono::year{y}, std::chrono::month{static_cast<unsigned>(m)},
                                        std::chrono::day{static_cast<unsigned>(d)}};
  if (!ymd.ok()) throw DataError("invalid calendar date '" + std::string(text) + "'");
  return Date{ymd};
}

std::string format_date(Date date) {
  const std::chrono::year_month_day ymd{date};
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%04d-%02u-%02u", static_cast<int>(ymd.year()),
                static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()));
  return buf;
}

FiscalQuarter FiscalQuarter::minus(int lag) const {
  const int ord = ordinal() - lag;
  // floor division so negative ordinals stay consistent
  const int y = ord >= 0 ? ord / 4 : -((-ord + 3) / 4);
  return FiscalQuarter{y, ord - y * 4 + 1};
}

std::string FiscalQuarter::to_string() const { return std::to_string(year) + "Q" + std::to_string(quarter); }

FiscalQuarter FiscalQuarter::parse(std::string_view text) {
  FiscalQuarter q;
  if (text.size() != 6 || (text[4] != 'Q' && text[4] != 'q') || !parse_int(text.substr(0, 4), q.year) ||
      !parse_int(text.substr(5, 1), q.quarter) || q.quarter < 1 || q.quarter > 4) {
    throw DataError("invalid fiscal quarter '" + std::string(text) + "' (expected e.g. 2018Q3)");
  }
  return q;
}

}  // namespace pead
