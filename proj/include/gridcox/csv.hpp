#pragma once

#include <filesystem>
#include <fstream>
#include <string>
#include <string_view>
#include <vector>

namespace gridcox::csv {

/// Split one line on commas. No quoting support; the data plane is numeric.
std::vector<std::string_view> split(std::string_view line);

/// Strict floating-point parse of a whole field (surrounding blanks allowed).
bool parse_double(std::string_view field, double& out);
bool parse_int(std::string_view field, long long& out);

/// Shortest round-trip decimal representation of x.
std::string format_double(double x);

std::ifstream open_input(const std::filesystem::path& path);
std::ofstream open_output(const std::filesystem::path& path);

}  // namespace gridcox::csv
