#include "gridcox/csv.hpp"

#include <charconv>
#include <cstdio>

#include "gridcox/error.hpp"

namespace gridcox::csv {

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

}  // namespace

std::vector<std::string_view> split(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    if (comma == std::string_view::npos) {
      out.push_back(trim(line.substr(start)));
      break;
    }
    out.push_back(trim(line.substr(start, comma - start)));
    start = comma + 1;
  }
  return out;
}

bool parse_double(std::string_view field, double& out) {
  field = trim(field);
  if (field.empty()) return false;
  if (field.front() == '+') field.remove_prefix(1);
  const auto* end = field.data() + field.size();
  const auto res = std::from_chars(field.data(), end, out);
  return res.ec == std::errc{} && res.ptr == end;
}

bool parse_int(std::string_view field, long long& out) {
  field = trim(field);
  if (field.empty()) return false;
  const auto* end = field.data() + field.size();
  const auto res = std::from_chars(field.data(), end, out);
  return res.ec == std::errc{} && res.ptr == end;
}

std::string format_double(double x) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), x);
  return std::string(buf, res.ptr);
}

std::ifstream open_input(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open " + path.string());
  return in;
}

std::ofstream open_output(const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw ValidationError("cannot write " + path.string());
  return out;
}

}  // namespace gridcox::csv
