#pragma once

#include <array>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace nimbus {

// ---------------------------------------------------------------------------
// Errors. Every failure is assigned to the phase that raised it so the CLI
// can map it to a stable exit code.
// ---------------------------------------------------------------------------

enum class Phase { config = 2, hypotheses = 3, horizon = 4, solve = 5 };

class Error : public std::runtime_error {
public:
    Error(Phase phase, const std::string& what) : std::runtime_error(what), phase_(phase) {}
    Phase phase() const { return phase_; }

private:
    Phase phase_;
};

[[noreturn]] inline void fail(Phase phase, const std::string& msg) { throw Error(phase, msg); }

// ---------------------------------------------------------------------------
// Small vector algebra
// ---------------------------------------------------------------------------

struct Vec3 {
    double x = 0.0, y = 0.0, z = 0.0;

    double& operator[](int i) { return i == 0 ? x : (i == 1 ? y : z); }
    double operator[](int i) const { return i == 0 ? x : (i == 1 ? y : z); }

    Vec3 operator+(const Vec3& o) const { return {x + o.x, y + o.y, z + o.z}; }
    Vec3 operator-(const Vec3& o) const { return {x - o.x, y - o.y, z - o.z}; }
    Vec3 operator*(double s) const { return {x * s, y * s, z * s}; }
    Vec3 operator/(double s) const { return {x / s, y / s, z / s}; }
    Vec3& operator+=(const Vec3& o) { x += o.x; y += o.y; z += o.z; return *this; }
    Vec3& operator-=(const Vec3& o) { x -= o.x; y -= o.y; z -= o.z; return *this; }
};

inline Vec3 operator*(double s, const Vec3& v) { return v * s; }
inline double dot(const Vec3& a, const Vec3& b) { return a.x * b.x + a.y * b.y + a.z * b.z; }
inline double norm(const Vec3& v) { return std::sqrt(dot(v, v)); }
inline Vec3 cross(const Vec3& a, const Vec3& b) {
    return {a.y * b.z - a.z * b.y, a.z * b.x - a.x * b.z, a.x * b.y - a.y * b.x};
}

// positive/negative parts, [z]^+ - [z]^- = z with both parts >= 0
inline double pos_part(double z) { return z > 0.0 ? z : 0.0; }
inline double neg_part(double z) { return z < 0.0 ? -z : 0.0; }

// ---------------------------------------------------------------------------
// Deterministic RNG (splitmix64). Self-contained so that seeded runs produce
// identical streams on every platform, unlike <random> distributions.
// ---------------------------------------------------------------------------

class Rng {
public:
    explicit Rng(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next_u64() {
        std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    // uniform in [0,1)
    double uniform() { return (next_u64() >> 11) * 0x1.0p-53; }
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // standard normal (Box-Muller, deterministic pairing)
    double normal() {
        if (have_spare_) { have_spare_ = false; return spare_; }
        double u = uniform(), v = uniform();
        if (u < 1e-300) u = 1e-300;
        double r = std::sqrt(-2.0 * std::log(u));
        double a = 6.283185307179586476925286766559 * v;
        spare_ = r * std::sin(a);
        have_spare_ = true;
        return r * std::cos(a);
    }

private:
    std::uint64_t state_;
    bool have_spare_ = false;
    double spare_ = 0.0;
};

// ---------------------------------------------------------------------------
// Deterministic parallel helpers. Work is split into fixed-size chunks and
// reductions combine chunk partials in chunk order, so results are identical
// for any worker count.
// ---------------------------------------------------------------------------

namespace par {

inline int& thread_count() {
    static int n = 1;
    return n;
}

inline void set_threads(int n) {
    thread_count() = n < 1 ? 1 : n;
}

constexpr std::size_t kChunk = 256;

template <class Fn>
inline void parallel_for(std::size_t n, Fn&& fn) {
    const int workers = thread_count();
    if (workers <= 1 || n < 2 * kChunk) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    const std::size_t nchunks = (n + kChunk - 1) / kChunk;
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(workers));
    std::atomic<std::size_t> next{0};
    for (int w = 0; w < workers; ++w) {
        pool.emplace_back([&]() {
            for (;;) {
                const std::size_t c = next.fetch_add(1);
                if (c >= nchunks) return;
                const std::size_t lo = c * kChunk;
                const std::size_t hi = std::min(n, lo + kChunk);
                for (std::size_t i = lo; i < hi; ++i) fn(i);
            }
        });
    }
    for (auto& t : pool) t.join();
}

// Reduction with per-chunk partials combined sequentially in chunk order.
template <class Fn>
inline double parallel_sum(std::size_t n, Fn&& fn) {
    const std::size_t nchunks = (n + kChunk - 1) / kChunk;
    std::vector<double> partial(nchunks, 0.0);
    parallel_for(nchunks, [&](std::size_t c) {
        const std::size_t lo = c * kChunk;
        const std::size_t hi = std::min(n, lo + kChunk);
        double s = 0.0;
        for (std::size_t i = lo; i < hi; ++i) s += fn(i);
        partial[c] = s;
    });
    double total = 0.0;
    for (double p : partial) total += p;
    return total;
}

template <class Fn>
inline double parallel_max(std::size_t n, Fn&& fn, double init = 0.0) {
    const std::size_t nchunks = (n + kChunk - 1) / kChunk;
    std::vector<double> partial(nchunks, init);
    parallel_for(nchunks, [&](std::size_t c) {
        const std::size_t lo = c * kChunk;
        const std::size_t hi = std::min(n, lo + kChunk);
        double m = init;
        for (std::size_t i = lo; i < hi; ++i) m = std::max(m, fn(i));
        partial[c] = m;
    });
    double total = init;
    for (double p : partial) total = std::max(total, p);
    return total;
}

}  // namespace par

}  // namespace nimbus
