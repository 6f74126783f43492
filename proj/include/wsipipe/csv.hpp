#pragma once

#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "wsipipe/common.hpp"

namespace wsipipe {

// Shortest decimal that round-trips the double exactly.
inline std::string format_double(double x) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof(buf), x);
    return std::string(buf, res.ptr);
}

// Fixed 17 significant digits (also round-trip exact).
inline std::string format_double_17(double x) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", x);
    return std::string(buf);
}

inline double parse_double(const std::string& s) {
    try {
        std::size_t pos = 0;
        const double v = std::stod(s, &pos);
        if (pos != s.size()) throw Error("trailing characters");
        return v;
    } catch (const std::exception&) {
        throw Error("csv: cannot parse number '" + s + "'");
    }
}

inline long parse_long(const std::string& s) {
    try {
        std::size_t pos = 0;
        const long v = std::stol(s, &pos);
        if (pos != s.size()) throw Error("trailing characters");
        return v;
    } catch (const std::exception&) {
        throw Error("csv: cannot parse integer '" + s + "'");
    }
}

// Plain comma-separated values, no quoting. None of the pipeline's fields
// may contain commas; writers enforce that.
class CsvWriter {
public:
    explicit CsvWriter(const std::string& path) : out_(path, std::ios::binary) {
        if (!out_) throw Error("csv: cannot open '" + path + "' for writing");
        path_ = path;
    }

    void row(const std::vector<std::string>& fields) {
        for (std::size_t i = 0; i < fields.size(); ++i) {
            if (fields[i].find(',') != std::string::npos || fields[i].find('\n') != std::string::npos)
                throw Error("csv: field contains separator: '" + fields[i] + "'");
            if (i) out_ << ',';
            out_ << fields[i];
        }
        out_ << '\n';
    }

    void close() {
        out_.close();
        if (!out_) throw Error("csv: write failure on '" + path_ + "'");
    }

private:
    std::ofstream out_;
    std::string path_;
};

struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;

    int column(const std::string& name) const {
        for (std::size_t i = 0; i < header.size(); ++i)
            if (header[i] == name) return static_cast<int>(i);
        throw Error("csv: missing column '" + name + "'");
    }
};

inline CsvTable read_csv(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("csv: cannot open '" + path + "'");
    CsvTable table;
    std::string line;
    bool first = true;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        std::vector<std::string> fields;
        std::string field;
        std::stringstream ss(line);
        while (std::getline(ss, field, ',')) fields.push_back(field);
        if (line.back() == ',') fields.push_back("");
        if (first) {
            table.header = std::move(fields);
            first = false;
        } else {
            if (fields.size() != table.header.size())
                throw Error("csv: row with " + std::to_string(fields.size()) + " fields, expected " +
                            std::to_string(table.header.size()) + " in '" + path + "'");
            table.rows.push_back(std::move(fields));
        }
    }
    if (first) throw Error("csv: empty file '" + path + "'");
    return table;
}

} // namespace wsipipe
