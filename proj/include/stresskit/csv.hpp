#pragma once

#include <string>
#include <vector>

namespace stresskit::csv {

// Strict numeric CSV: UTF-8, comma separated, '.' decimal, exactly one header
// row. Cells are parsed with std::from_chars (non-finite tokens like nan/inf
// are accepted; ingestion cleaning handles them downstream).
struct Table {
    std::vector<std::string> columns;
    std::vector<std::vector<double>> rows;

    int col_index(const std::string& name) const;  // -1 when absent
};

Table read_numeric(const std::string& path);

// Shortest round-trip formatting (std::to_chars), so written values reparse
// bit-exactly and exports are byte-stable.
std::string format_double(double v);

void write_rows(const std::string& path, const std::vector<std::string>& header,
                const std::vector<std::vector<std::string>>& rows);

std::vector<std::string> split_line(const std::string& line);

}  // namespace stresskit::csv
