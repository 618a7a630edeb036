#pragma once

#include <charconv>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <initializer_list>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include "sysrisk/errors.hpp"

namespace sysrisk {

/// Shortest round-trip decimal form of a double; '.' decimal separator,
/// byte-stable across runs.
inline std::string format_double(double v) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

inline std::string format_u64(std::uint64_t v) {
    char buf[32];
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

inline std::string hex_u64(std::uint64_t v) {
    char buf[32];
    const auto res = std::to_chars(buf, buf + sizeof buf, v, 16);
    return "0x" + std::string(buf, res.ptr);
}

/// Cell value for CSV rows.
struct CsvCell {
    std::string text;
    CsvCell(double v) : text(format_double(v)) {}
    CsvCell(int v) : text(std::to_string(v)) {}
    CsvCell(std::uint64_t v) : text(format_u64(v)) {}
    CsvCell(bool v) : text(v ? "true" : "false") {}
    CsvCell(const char* s) : text(s) {}
    CsvCell(std::string s) : text(std::move(s)) {}
};

/// Accumulates a CSV document: mandatory header, '\n' newlines.
class Csv {
public:
    explicit Csv(std::initializer_list<std::string_view> header) {
        append_joined(header.begin(), header.end(), [](std::string_view s) { return s; });
    }
    explicit Csv(const std::vector<std::string>& header) {
        append_joined(header.begin(), header.end(), [](const std::string& s) { return std::string_view(s); });
    }

    void row(std::initializer_list<CsvCell> cells) {
        append_joined(cells.begin(), cells.end(),
                      [](const CsvCell& c) { return std::string_view(c.text); });
    }
    void row(const std::vector<CsvCell>& cells) {
        append_joined(cells.begin(), cells.end(),
                      [](const CsvCell& c) { return std::string_view(c.text); });
    }

    const std::string& str() const { return buf_; }

private:
    template <class It, class Get>
    void append_joined(It begin, It end, Get get) {
        for (It it = begin; it != end; ++it) {
            if (it != begin) buf_ += ',';
            buf_ += get(*it);
        }
        buf_ += '\n';
    }

    std::string buf_;
};

inline std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ValidationError("cannot open file: " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline void write_file(const std::filesystem::path& path, std::string_view content) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw ValidationError("cannot write file: " + path.string());
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!out) throw ValidationError("write failed: " + path.string());
}

/// Writes to a sibling temp file and renames into place.
inline void write_file_atomic(const std::filesystem::path& path, std::string_view content) {
    const std::filesystem::path tmp = path.string() + ".tmp";
    write_file(tmp, content);
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) throw ValidationError("atomic rename failed: " + path.string() + ": " + ec.message());
}

} // namespace sysrisk
