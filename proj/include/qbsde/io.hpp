#pragma once

#include <cstdint>
#include <cstdio>
#include <fstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace qbsde {

/// Shortest text form that round-trips a double exactly (17 significant
/// digits). All numeric artifact output goes through here.
inline std::string fmt17(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

inline std::uint64_t fnv1a64(std::string_view s) {
    std::uint64_t h = 0xCBF29CE484222325ULL;
    for (const char c : s) {
        h ^= static_cast<unsigned char>(c);
        h *= 0x100000001B3ULL;
    }
    return h;
}

inline std::string hex64(std::uint64_t v) {
    char buf[20];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

/// CSV with one header row. Provenance (config hash, seed) is carried on a
/// leading '#' comment line so the data block stays plain CSV.
class CsvWriter {
public:
    CsvWriter(const std::string& path, const std::string& meta_comment,
              const std::vector<std::string>& header) {
        out_.open(path);
        if (!out_) throw std::runtime_error("cannot open for write: " + path);
        if (!meta_comment.empty()) out_ << "# " << meta_comment << "\n";
        write_row(header);
    }

    void write_row(const std::vector<std::string>& cells) {
        for (std::size_t i = 0; i < cells.size(); ++i) {
            if (i) out_ << ",";
            out_ << cells[i];
        }
        out_ << "\n";
    }

private:
    std::ofstream out_;
};

inline void write_text_file(const std::string& path, const std::string& body) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open for write: " + path);
    out << body;
}

} // namespace qbsde
