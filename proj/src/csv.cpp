#include "agf/csv.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

#include "agf/errors.hpp"

namespace agf {

std::string format_real(double value) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof buf, value, std::chars_format::general, 17);
    return std::string(buf, res.ptr);
}

std::string format_short(double value) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof buf, value);
    return std::string(buf, res.ptr);
}

double parse_real(std::string_view field) {
    double v = 0.0;
    const auto* end = field.data() + field.size();
    const auto res = std::from_chars(field.data(), end, v);
    if (res.ec != std::errc{} || res.ptr != end) throw InputError("not a number: '" + std::string(field) + "'");
    return v;
}

std::size_t parse_index(std::string_view field) {
    std::size_t v = 0;
    const auto* end = field.data() + field.size();
    const auto res = std::from_chars(field.data(), end, v);
    if (res.ec != std::errc{} || res.ptr != end) {
        throw InputError("not a non-negative integer: '" + std::string(field) + "'");
    }
    return v;
}

std::vector<std::string_view> split_csv_line(std::string_view line) {
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    std::vector<std::string_view> out;
    std::size_t start = 0;
    while (true) {
        const std::size_t comma = line.find(',', start);
        if (comma == std::string_view::npos) {
            out.push_back(line.substr(start));
            return out;
        }
        out.push_back(line.substr(start, comma - start));
        start = comma + 1;
    }
}

CsvWriter::CsvWriter(std::vector<std::string> header) : columns_(header.size()) {
    for (std::size_t i = 0; i < header.size(); ++i) buffer_ += (i ? "," : "") + header[i];
    buffer_ += '\n';
}

CsvWriter& CsvWriter::row(std::vector<std::string> fields) {
    if (fields.size() != columns_) {
        throw InputError("CSV row has " + std::to_string(fields.size()) + " fields, header has " +
                         std::to_string(columns_));
    }
    for (std::size_t i = 0; i < fields.size(); ++i) buffer_ += (i ? "," : "") + fields[i];
    buffer_ += '\n';
    return *this;
}

std::string CsvWriter::str() const { return buffer_; }

void CsvWriter::write(const std::filesystem::path& path) const { write_text_file(path, buffer_); }

std::size_t CsvTable::column(std::string_view name) const {
    for (std::size_t i = 0; i < header.size(); ++i)
        if (header[i] == name) return i;
    throw FormatError("missing CSV column '" + std::string(name) + "'", 1, FormatError::Unit::Line);
}

CsvTable read_csv_table(const std::filesystem::path& path) {
    const std::string text = read_text_file(path);
    std::istringstream in(text);
    CsvTable table;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty() || line == "\r") continue;
        std::vector<std::string> fields;
        for (auto f : split_csv_line(line)) fields.emplace_back(f);
        if (table.header.empty()) {
            table.header = std::move(fields);
            continue;
        }
        if (fields.size() != table.header.size()) {
            throw FormatError(path.string() + ": expected " + std::to_string(table.header.size()) + " fields, got " +
                                  std::to_string(fields.size()),
                              line_no, FormatError::Unit::Line);
        }
        table.rows.push_back(std::move(fields));
    }
    if (table.header.empty()) throw FormatError(path.string() + ": empty CSV file", 1, FormatError::Unit::Line);
    return table;
}

void write_text_file(const std::filesystem::path& path, std::string_view contents) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open " + path.string() + " for writing");
    out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
    if (!out) throw IoError("failed writing " + path.string());
}

std::string read_text_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

}  // namespace agf
