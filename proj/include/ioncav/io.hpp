#pragma once

// File plumbing for experiment artifacts: shortest round-trip number
// formatting, FNV-1a checksums, atomic file replacement, and the CSV dialect
// used by every runner (comment lines open with '#', first data line is the
// header, numeric cells only).

#include <charconv>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include "ioncav/errors.hpp"

namespace ioncav {

// Shortest decimal string that parses back to exactly the same double.
inline std::string format_double(double x) {
    char buf[40];
    const auto res = std::to_chars(buf, buf + sizeof(buf), x);
    return std::string(buf, res.ptr);
}

inline std::uint64_t fnv1a64(std::string_view s) {
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (const unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ull;
    }
    return h;
}

inline std::string hex16(std::uint64_t v) {
    const char* digits = "0123456789abcdef";
    std::string s(16, '0');
    for (int i = 15; i >= 0; --i) {
        s[std::size_t(i)] = digits[v & 0xf];
        v >>= 4;
    }
    return s;
}

inline std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw validation_error("cannot read file: " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

// Write through a sibling temp file and rename into place so a reader never
// observes a torn file.
inline void atomic_write_file(const std::string& path, std::string_view content) {
    namespace fs = std::filesystem;
    const fs::path target(path);
    const fs::path tmp = target.parent_path() / (target.filename().string() + ".tmp");
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw validation_error("cannot write file: " + tmp.string());
        out.write(content.data(), std::streamsize(content.size()));
        out.flush();
        if (!out) {
            out.close();
            std::error_code ignored;
            fs::remove(tmp, ignored);
            throw validation_error("short write: " + tmp.string());
        }
    }
    std::error_code ec;
    fs::rename(tmp, target, ec);
    if (ec) {
        std::error_code ignored;
        fs::remove(tmp, ignored);
        throw validation_error("cannot replace file: " + path);
    }
}

struct csv_table {
    std::vector<std::string> columns;
    std::vector<std::vector<double>> rows;
};

namespace detail {
inline std::vector<std::string> split_line(const std::string& line) {
    std::vector<std::string> out;
    std::size_t start = 0;
    for (;;) {
        const std::size_t comma = line.find(',', start);
        out.push_back(line.substr(start, comma - start));
        if (comma == std::string::npos) break;
        start = comma + 1;
    }
    return out;
}
} // namespace detail

inline csv_table parse_csv(const std::string& body) {
    csv_table t;
    std::istringstream in(body);
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty() || line.front() == '#') continue;
        const auto cells = detail::split_line(line);
        if (t.columns.empty()) {
            t.columns = cells;
            continue;
        }
        if (cells.size() != t.columns.size())
            throw validation_error("csv row width does not match the header");
        std::vector<double> row;
        row.reserve(cells.size());
        for (const auto& c : cells) {
            double x = 0.0;
            const auto res = std::from_chars(c.data(), c.data() + c.size(), x);
            if (res.ec != std::errc{} || res.ptr != c.data() + c.size())
                throw validation_error("csv cell is not a number: " + c);
            row.push_back(x);
        }
        t.rows.push_back(std::move(row));
    }
    if (t.columns.empty()) throw validation_error("csv body has no header");
    return t;
}

// Builds a CSV body that opens with a pointer to the run manifest.
struct csv_builder {
    std::string body;

    explicit csv_builder(const std::vector<std::string>& columns,
                         const std::string& manifest = "manifest.json") {
        body = "# manifest: " + manifest + "\n";
        for (std::size_t i = 0; i < columns.size(); ++i) {
            if (i) body += ',';
            body += columns[i];
        }
        body += '\n';
    }

    void row(const std::vector<double>& cells) {
        for (std::size_t i = 0; i < cells.size(); ++i) {
            if (i) body += ',';
            body += format_double(cells[i]);
        }
        body += '\n';
    }
};

} // namespace ioncav
