#pragma once

// Shortest round-trip decimal formatting shared by every text writer, so that
// identical values always produce identical bytes.

#include <charconv>
#include <string>

namespace sbfem {

inline void append_number(std::string& out, double v) {
    char buf[32];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    out.append(buf, ptr);
}

inline std::string format_number(double v) {
    std::string s;
    append_number(s, v);
    return s;
}

}  // namespace sbfem
