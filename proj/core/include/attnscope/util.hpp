#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <string>
#include <string_view>

namespace attnscope::util {

// FNV-1a; stable across platforms, used for config hashes and manifest ids.
inline std::uint64_t fnv1a64(std::string_view s) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::string hex64(std::uint64_t v);

// Deterministic float formatting for CSV/SVG output (snprintf "%.9g";
// std::format is unavailable on this toolchain baseline).
std::string fmt_double(double v);
std::string fmt_double(double v, int precision);

// Worker cap: min(hardware_concurrency, ATTNSCOPE_THREADS). At least 1.
std::size_t worker_count();

// Runs fn(0..n-1) across worker_count() threads. Each index must write only
// its own output slot; results are therefore independent of scheduling.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

}  // namespace attnscope::util
