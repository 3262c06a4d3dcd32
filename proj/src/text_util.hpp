#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace hiertmle {

std::string fmt_double(double v);
std::string trim(std::string_view s);
std::vector<std::string> split_csv_line(const std::string& line);
double parse_number(const std::string& field, std::size_t line_no, const std::string& column);
std::vector<std::string> split_lines(const std::string& text);

std::string read_text_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, const std::string& text);

}  // namespace hiertmle
