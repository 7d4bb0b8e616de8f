#pragma once

#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "causalprobe/error.hpp"

namespace causalprobe {

/// Parsed CSV contents: one header row plus data rows of equal width.
struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;

    std::size_t column(const std::string& name) const {
        for (std::size_t j = 0; j < header.size(); ++j)
            if (header[j] == name) return j;
        throw LookupError("no such column: " + name);
    }
};

namespace detail {

// RFC 4180 record reader: handles quoted fields, doubled quotes, and
// newlines inside quotes. Returns false at end of input.
inline bool read_record(std::istream& in, std::vector<std::string>& fields) {
    fields.clear();
    std::string field;
    bool in_quotes = false, any = false;
    int ch;
    while ((ch = in.get()) != EOF) {
        any = true;
        char c = static_cast<char>(ch);
        if (in_quotes) {
            if (c == '"') {
                if (in.peek() == '"') {
                    field.push_back('"');
                    in.get();
                } else {
                    in_quotes = false;
                }
            } else {
                field.push_back(c);
            }
        } else if (c == '"') {
            in_quotes = true;
        } else if (c == ',') {
            fields.push_back(std::move(field));
            field.clear();
        } else if (c == '\r') {
            // swallow; CRLF handled at '\n'
        } else if (c == '\n') {
            fields.push_back(std::move(field));
            return true;
        } else {
            field.push_back(c);
        }
    }
    if (in_quotes) throw IoError("unterminated quoted CSV field");
    if (!any) return false;
    fields.push_back(std::move(field));
    return true;
}

}  // namespace detail

inline CsvTable read_csv(std::istream& in) {
    CsvTable t;
    if (!detail::read_record(in, t.header) || t.header.empty())
        throw IoError("CSV input is empty");
    std::vector<std::string> rec;
    while (detail::read_record(in, rec)) {
        if (rec.size() == 1 && rec[0].empty()) continue;  // trailing blank line
        if (rec.size() != t.header.size())
            throw IoError("CSV row has " + std::to_string(rec.size()) + " fields, expected " +
                          std::to_string(t.header.size()));
        t.rows.push_back(rec);
    }
    return t;
}

inline CsvTable read_csv_file(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open " + path);
    return read_csv(f);
}

inline double parse_double(const std::string& s) {
    const char* b = s.data();
    const char* e = b + s.size();
    while (b < e && (*b == ' ' || *b == '\t')) ++b;
    double v = 0.0;
    auto [p, ec] = std::from_chars(b, e, v);
    while (p < e && (*p == ' ' || *p == '\t')) ++p;
    if (ec != std::errc() || p != e) throw IoError("not a number: '" + s + "'");
    return v;
}

/// Shortest round-trip decimal rendering; keeps file output byte-stable.
inline std::string format_double(double v) {
    char buf[32];
    auto r = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, r.ptr);
}

inline std::string csv_escape(const std::string& s) {
    if (s.find_first_of(",\"\r\n") == std::string::npos) return s;
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += "\"\"";
        else out.push_back(c);
    }
    out += '"';
    return out;
}

inline void write_csv_row(std::ostream& out, const std::vector<std::string>& fields) {
    for (std::size_t j = 0; j < fields.size(); ++j) {
        if (j) out << ',';
        out << csv_escape(fields[j]);
    }
    out << '\n';
}

}  // namespace causalprobe
