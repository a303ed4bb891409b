#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace squeezelab
{
// Comma-separated records under a '#' header. Empty cells are absent values.
struct Table
{
    std::vector<std::string> comments; // written as "# ..." before the column line
    std::vector<std::string> columns;
    std::vector<std::vector<std::optional<double>>> rows;

    void add_row(std::vector<std::optional<double>> row);
    std::optional<double> at(std::size_t row, const std::string &column) const;
};

// Shortest representation that parses back to the same double.
std::string format_double(double v);

void write_table(const std::filesystem::path &path, const Table &table);
Table read_table(const std::filesystem::path &path);

} // namespace squeezelab
