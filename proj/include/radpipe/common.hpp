#pragma once

#include <algorithm>
#include <array>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

namespace radpipe {

static_assert(std::endian::native == std::endian::little,
              "raw volume I/O assumes a little-endian host");

// Thrown for bad user input (config files, CLI arguments, malformed headers).
// Everything else surfaces as std::runtime_error.
struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

struct GridDims {
    int nx = 0, ny = 0, nz = 0;

    std::size_t size() const {
        return static_cast<std::size_t>(nx) * static_cast<std::size_t>(ny) *
               static_cast<std::size_t>(nz);
    }
    // x-fastest layout
    std::size_t index(int x, int y, int z) const {
        return static_cast<std::size_t>(z) * ny * nx +
               static_cast<std::size_t>(y) * nx + static_cast<std::size_t>(x);
    }
    bool contains(int x, int y, int z) const {
        return x >= 0 && x < nx && y >= 0 && y < ny && z >= 0 && z < nz;
    }
    bool operator==(const GridDims&) const = default;
};

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

inline std::uint64_t seed_mix(std::uint64_t a, std::uint64_t b) {
    return splitmix64(a ^ splitmix64(b));
}

template <typename... Rest>
std::uint64_t seed_mix(std::uint64_t a, std::uint64_t b, Rest... rest) {
    return seed_mix(seed_mix(a, b), static_cast<std::uint64_t>(rest)...);
}

inline std::uint64_t hash_str(std::string_view s) {
    std::uint64_t h = 0xcbf29ce484222325ULL;  // FNV-1a
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

// Shortest round-trip decimal form, locale-independent.
inline std::string fmt_double(double v) {
    std::array<char, 64> buf{};
    auto [ptr, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v);
    if (ec != std::errc{}) throw std::runtime_error("fmt_double: to_chars failed");
    return std::string(buf.data(), ptr);
}

inline double parse_double(std::string_view s) {
    double v = 0.0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || ptr != s.data() + s.size())
        throw std::runtime_error("not a number: '" + std::string(s) + "'");
    return v;
}

// Static block partition over [0, n). fn(i) must touch only its own slot so
// results are independent of the schedule.
inline void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn) {
    if (n == 0) return;
    unsigned hw = std::thread::hardware_concurrency();
    std::size_t n_threads = std::min<std::size_t>(hw == 0 ? 1 : hw, n);
    if (n_threads <= 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::vector<std::thread> pool;
    pool.reserve(n_threads);
    std::size_t chunk = (n + n_threads - 1) / n_threads;
    for (std::size_t t = 0; t < n_threads; ++t) {
        std::size_t lo = t * chunk, hi = std::min(n, lo + chunk);
        if (lo >= hi) break;
        pool.emplace_back([lo, hi, &fn] {
            for (std::size_t i = lo; i < hi; ++i) fn(i);
        });
    }
    for (auto& th : pool) th.join();
}

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : line) {
        if (c == ',') {
            out.push_back(cur);
            cur.clear();
        } else if (c != '\r') {
            cur.push_back(c);
        }
    }
    out.push_back(cur);
    return out;
}

}  // namespace detail

inline double vec_mean(const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x;
    return v.empty() ? 0.0 : s / static_cast<double>(v.size());
}

// Population standard deviation.
inline double vec_std(const std::vector<double>& v) {
    if (v.empty()) return 0.0;
    double m = vec_mean(v), s = 0.0;
    for (double x : v) s += (x - m) * (x - m);
    return std::sqrt(s / static_cast<double>(v.size()));
}

}  // namespace radpipe
