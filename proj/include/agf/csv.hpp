#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace agf {

// 17 significant digits, enough to round-trip any double.
std::string format_real(double value);
// Shortest text that round-trips; for console output.
std::string format_short(double value);
// Strict parse of a whole field; throws InputError on trailing garbage.
double parse_real(std::string_view field);
std::size_t parse_index(std::string_view field);

std::vector<std::string_view> split_csv_line(std::string_view line);

// Row-oriented CSV writer, buffered in memory and written in one shot.
class CsvWriter {
  public:
    explicit CsvWriter(std::vector<std::string> header);
    CsvWriter& row(std::vector<std::string> fields);
    std::string str() const;
    void write(const std::filesystem::path& path) const;

  private:
    std::size_t columns_;
    std::string buffer_;
};

struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;

    std::size_t column(std::string_view name) const;
};

// Reads a header + rows CSV file (no quoting). FormatError carries line numbers.
CsvTable read_csv_table(const std::filesystem::path& path);

void write_text_file(const std::filesystem::path& path, std::string_view contents);
std::string read_text_file(const std::filesystem::path& path);

}  // namespace agf
