#pragma once

#include <cstdint>
#include <cstdio>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

namespace d2dgain {

constexpr std::string_view kToolName = "d2dgain";
constexpr std::string_view kToolVersion = "0.1.0";

// %.17g: shortest text that round-trips an IEEE double here
inline std::string format_g17(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

inline std::uint64_t fnv1a64(std::string_view s) {
    std::uint64_t h = 0xCBF29CE484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001B3ULL;
    }
    return h;
}

// First line of every output file: tool version, config hash, seed.
inline std::string manifest_line(std::uint64_t config_hash, std::uint64_t seed) {
    char buf[128];
    std::snprintf(buf, sizeof buf, "# %s %s config_hash=%016llx seed=%llu",
                  std::string(kToolName).c_str(), std::string(kToolVersion).c_str(),
                  static_cast<unsigned long long>(config_hash),
                  static_cast<unsigned long long>(seed));
    return buf;
}

struct CsvTable {
    std::vector<std::string> columns;
    std::vector<std::vector<std::string>> rows;
};

inline void write_csv(std::ostream& out, const CsvTable& t, const std::string& manifest) {
    if (!manifest.empty()) out << manifest << "\n";
    for (std::size_t c = 0; c < t.columns.size(); ++c)
        out << t.columns[c] << (c + 1 < t.columns.size() ? "," : "");
    out << "\n";
    for (const auto& r : t.rows) {
        for (std::size_t c = 0; c < r.size(); ++c)
            out << r[c] << (c + 1 < r.size() ? "," : "");
        out << "\n";
    }
}

}  // namespace d2dgain
