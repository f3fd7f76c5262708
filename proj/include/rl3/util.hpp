#pragma once

#include <cstdint>
#include <cstdio>
#include <functional>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace rl3 {

/// FNV-1a, used for content hashes of generated tasks and checkpoints.
class Fnv1a {
public:
    void add_bytes(const void* data, size_t n) {
        const auto* p = static_cast<const unsigned char*>(data);
        for (size_t i = 0; i < n; ++i) {
            h_ ^= p[i];
            h_ *= 0x100000001b3ULL;
        }
    }
    void add_u64(uint64_t v) { add_bytes(&v, sizeof(v)); }
    void add_i32(int32_t v) { add_bytes(&v, sizeof(v)); }
    void add_f64(double v) { add_bytes(&v, sizeof(v)); }
    void add_f64s(const std::vector<double>& v) {
        if (!v.empty()) add_bytes(v.data(), v.size() * sizeof(double));
    }
    uint64_t value() const { return h_; }

private:
    uint64_t h_ = 0xcbf29ce484222325ULL;
};

/// Runs fn(i) for i in [0, n). Work is split into fixed chunks so results
/// written per-index never depend on how many threads actually ran.
void parallel_for(int n, int num_threads, const std::function<void(int)>& fn);

/// Formats a double so it round-trips exactly; used by all CSV/log output.
inline std::string format_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

inline std::string format_double_short(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.6g", v);
    return buf;
}

[[noreturn]] inline void fail(const std::string& msg) { throw std::runtime_error(msg); }

}  // namespace rl3
