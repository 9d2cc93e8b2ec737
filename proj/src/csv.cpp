#include "stresskit/csv.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "stresskit/errors.hpp"

namespace stresskit::csv {

int Table::col_index(const std::string& name) const {
    for (std::size_t i = 0; i < columns.size(); ++i)
        if (columns[i] == name) return static_cast<int>(i);
    return -1;
}

std::vector<std::string> split_line(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : line) {
        if (c == ',') {
            out.push_back(cur);
            cur.clear();
        } else if (c != '\r') {
            cur.push_back(c);
        }
    }
    out.push_back(cur);
    return out;
}

Table read_numeric(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path);
    Table t;
    std::string line;
    if (!std::getline(in, line)) throw SchemaError(path + ": empty file, expected header row");
    t.columns = split_line(line);
    std::size_t ncols = t.columns.size();
    std::size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        auto cells = split_line(line);
        if (cells.size() != ncols)
            throw SchemaError(path + ":" + std::to_string(lineno) + ": expected " +
                              std::to_string(ncols) + " cells, got " + std::to_string(cells.size()));
        std::vector<double> row(ncols);
        for (std::size_t i = 0; i < ncols; ++i) {
            const std::string& cell = cells[i];
            double v = 0.0;
            auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), v);
            if (ec != std::errc() || ptr != cell.data() + cell.size())
                throw SchemaError(path + ":" + std::to_string(lineno) + ": non-numeric cell '" +
                                  cell + "' in column " + t.columns[i]);
            row[i] = v;
        }
        t.rows.push_back(std::move(row));
    }
    return t;
}

std::string format_double(double v) {
    char buf[32];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    if (ec != std::errc()) return "nan";
    return std::string(buf, ptr);
}

void write_rows(const std::string& path, const std::vector<std::string>& header,
                const std::vector<std::vector<std::string>>& rows) {
    std::ofstream out(path, std::ios::binary);  // binary: stable newlines
    if (!out) throw IoError("cannot write " + path);
    for (std::size_t i = 0; i < header.size(); ++i) {
        if (i) out << ',';
        out << header[i];
    }
    out << '\n';
    for (const auto& row : rows) {
        if (row.size() != header.size()) throw SchemaError("csv row width mismatch writing " + path);
        for (std::size_t i = 0; i < row.size(); ++i) {
            if (i) out << ',';
            out << row[i];
        }
        out << '\n';
    }
    if (!out) throw IoError("write failed for " + path);
}

}  // namespace stresskit::csv
