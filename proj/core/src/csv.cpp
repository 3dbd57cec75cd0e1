#include "pead/csv.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include "pead/error.hpp"

namespace pead::csv {

std::vector<std::string> split_line(std::string_view line) {
  std::vector<std::string> out;
  std::string cell;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        cell.push_back('"');
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        cell.push_back(c);
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      out.push_back(std::move(cell));
      cell.clear();
    } else {
      cell.push_back(c);
    }
  }
  out.push_back(std::move(cell));
  for (auto& s : out) {
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t')) s.pop_back();
    std::size_t b = 0;
    while (b < s.size() && (s[b] == ' ' || s[b] == '\t')) ++b;
    s.erase(0, b);
  }
  return out;
}

Table Table::read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read file '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse(ss.str(), path);
}

Table Table::parse(std::string_view text, std::string source_name) {
  Table t;
  t.source_ = std::move(source_name);
  std::size_t pos = 0;
  std::size_t line_no = 0;
  bool have_header = false;
  if (text.substr(0, 3) == "\xEF\xBB\xBF") pos = 3;
  while (pos <= text.size()) {
    const std::size_t nl = text.find('\n', pos);
    std::string_view line = text.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
    pos = nl == std::string_view::npos ? text.size() + 1 : nl + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.empty() || line.front() == '#') continue;
    auto cells = split_line(line);
    if (!have_header) {
      t.header_ = std::move(cells);
      for (std::size_t i = 0; i < t.header_.size(); ++i) {
        if (t.header_[i].empty() || !t.index_.emplace(t.header_[i], i).second) {
          throw DataError(t.source_ + ": malformed header (empty or duplicate column '" + t.header_[i] + "')");
        }
      }
      have_header = true;
      continue;
    }
    if (cells.size() != t.header_.size()) {
      throw DataError(t.source_ + ": line " + std::to_string(line_no) + " has " + std::to_string(cells.size()) +
                      " cells, header has " + std::to_string(t.header_.size()));
    }
    t.rows_.push_back(std::move(cells));
    t.lines_.push_back(line_no);
  }
  if (!have_header) throw DataError(t.source_ + ": missing header row");
  return t;
}

std::optional<std::size_t> Table::column(std::string_view name) const {
  auto it = index_.find(std::string(name));
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

std::size_t Table::require_column(std::string_view name) const {
  if (auto c = column(name)) return *c;
  throw DataError(source_ + ": malformed header, missing column '" + std::string(name) + "'");
}

std::optional<double> parse_optional_double(std::string_view cell) {
  if (cell.empty()) return std::nullopt;
  double v = 0.0;
  const auto* end = cell.data() + cell.size();
  auto [ptr, ec] = std::from_chars(cell.data(), end, v);
  if (ec != std::errc{} || ptr != end || !std::isfinite(v)) {
    throw DataError("invalid number '" + std::string(cell) + "'");
  }
  return v;
}

std::string format_double(double value) {
  if (std::isnan(value)) return {};
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), value);
  return std::string(buf, ptr);
}

}  // namespace pead::csv
