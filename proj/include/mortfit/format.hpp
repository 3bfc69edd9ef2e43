#pragma once

#include <cmath>
#include <cstdio>
#include <string>

namespace mortfit {

/// Lossless decimal form of a double: 17 significant digits, "nan"/"inf" for
/// non-finite values.
inline std::string fmt17(double value) {
    if (std::isnan(value)) {
        return "nan";
    }
    if (std::isinf(value)) {
        return value > 0 ? "inf" : "-inf";
    }
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", value);
    return buf;
}

} // namespace mortfit
