#include "squeezelab/io.hpp"

#include "squeezelab/errors.hpp"

#include <array>
#include <charconv>
#include <fstream>
#include <sstream>

namespace squeezelab
{
void Table::add_row(std::vector<std::optional<double>> row)
{
    if (row.size() != columns.size())
    {
        throw ParameterError("table: row has " + std::to_string(row.size()) + " cells, expected " +
                             std::to_string(columns.size()));
    }
    rows.push_back(std::move(row));
}

std::optional<double> Table::at(std::size_t row, const std::string &column) const
{
    for (std::size_t c = 0; c < columns.size(); ++c)
    {
        if (columns[c] == column)
        {
            return rows.at(row).at(c);
        }
    }
    throw ParameterError("table: no column " + column);
}

std::string format_double(double v)
{
    std::array<char, 32> buf{};
    const auto res = std::to_chars(buf.data(), buf.data() + buf.size(), v);
    return std::string(buf.data(), res.ptr);
}

void write_table(const std::filesystem::path &path, const Table &table)
{
    std::ofstream os(path, std::ios::binary);
    if (!os)
    {
        throw ParameterError("cannot write " + path.string());
    }
    for (const auto &c : table.comments)
    {
        os << "# " << c << '\n';
    }
    os << '#';
    for (std::size_t c = 0; c < table.columns.size(); ++c)
    {
        os << (c ? "," : " ") << table.columns[c];
    }
    os << '\n';
    for (const auto &row : table.rows)
    {
        for (std::size_t c = 0; c < row.size(); ++c)
        {
            if (c)
            {
                os << ',';
            }
            if (row[c])
            {
                os << format_double(*row[c]);
            }
        }
        os << '\n';
    }
    if (!os)
    {
        throw ParameterError("write failed for " + path.string());
    }
}

Table read_table(const std::filesystem::path &path)
{
    std::ifstream is(path, std::ios::binary);
    if (!is)
    {
        throw ParameterError("cannot read " + path.string());
    }
    Table t;
    std::vector<std::string> header;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(is, line))
    {
        ++lineno;
        if (!line.empty() && line.front() == '#')
        {
            header.push_back(line.size() > 2 ? line.substr(2) : std::string{});
            continue;
        }
        if (t.columns.empty())
        {
            if (header.empty())
            {
                throw ParameterError(path.string() + ": missing column header");
            }
            std::stringstream ss(header.back());
            std::string name;
            while (std::getline(ss, name, ','))
            {
                t.columns.push_back(name);
            }
            header.pop_back();
            t.comments = header;
        }
        std::vector<std::optional<double>> row;
        std::size_t start = 0;
        while (true)
        {
            const auto end = line.find(',', start);
            const std::string cell = line.substr(start, end == std::string::npos ? std::string::npos : end - start);
            if (cell.empty())
            {
                row.emplace_back();
            }
            else
            {
                double v = 0.0;
                const auto res = std::from_chars(cell.data(), cell.data() + cell.size(), v);
                if (res.ec != std::errc{} || res.ptr != cell.data() + cell.size())
                {
                    throw ParameterError(path.string() + ":" + std::to_string(lineno) + ": bad number '" + cell + "'");
                }
                row.emplace_back(v);
            }
            if (end == std::string::npos)
            {
                break;
            }
            start = end + 1;
        }
        t.add_row(std::move(row));
    }
    if (t.columns.empty() && !header.empty())
    {
        std::stringstream ss(header.back());
        std::string name;
        while (std::getline(ss, name, ','))
        {
            t.columns.push_back(name);
        }
        header.pop_back();
        t.comments = header;
    }
    return t;
}

} // namespace squeezelab
