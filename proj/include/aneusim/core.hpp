#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <functional>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace aneusim {

// ---------------------------------------------------------------------------
// Errors. One exception type with a kind tag so the CLI can map failures to
// exit codes (config -> 2, numerical -> 3, everything else -> 1).
// ---------------------------------------------------------------------------

enum class ErrKind {
    Parse,
    NotWatertight,
    InvertedOrientation,
    DisconnectedDomain,
    ResolutionTooCoarse,
    EmptySac,
    DegenerateEdge,
    Instability,
    StallDetected,
    CoilOutsideGrid,
    PressureSolveDiverged,
    CflViolated,
    DegenerateSetup,
    DimMismatch,
    ZeroMass,
    Config,
    Io,
};

class SimError : public std::runtime_error {
public:
    SimError(ErrKind k, const std::string& msg) : std::runtime_error(msg), kind(k) {}
    ErrKind kind;
};

inline bool is_numerical_error(ErrKind k) {
    return k == ErrKind::Instability || k == ErrKind::PressureSolveDiverged ||
           k == ErrKind::CflViolated || k == ErrKind::StallDetected;
}

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
    Vec3 operator-() const { return {-x, -y, -z}; }
    Vec3& operator+=(const Vec3& o) { x += o.x; y += o.y; z += o.z; return *this; }
    Vec3& operator-=(const Vec3& o) { x -= o.x; y -= o.y; z -= o.z; return *this; }
    Vec3& operator*=(double s) { x *= s; y *= s; z *= s; return *this; }
};

inline Vec3 operator*(double s, const Vec3& v) { return v * s; }
inline double dot(const Vec3& a, const Vec3& b) { return a.x * b.x + a.y * b.y + a.z * b.z; }
inline Vec3 cross(const Vec3& a, const Vec3& b) {
    return {a.y * b.z - a.z * b.y, a.z * b.x - a.x * b.z, a.x * b.y - a.y * b.x};
}
inline double norm2(const Vec3& v) { return dot(v, v); }
inline double norm(const Vec3& v) { return std::sqrt(norm2(v)); }
inline Vec3 normalized(const Vec3& v) {
    double n = norm(v);
    if (n == 0.0) throw SimError(ErrKind::DegenerateEdge, "cannot normalize zero vector");
    return v / n;
}

// Any unit vector orthogonal to t (t need not be unit).
inline Vec3 any_orthogonal(const Vec3& t) {
    Vec3 a = std::abs(t.x) < 0.9 * norm(t) ? Vec3{1, 0, 0} : Vec3{0, 1, 0};
    return normalized(cross(t, a));
}

// Rotate v about unit axis by angle (Rodrigues).
inline Vec3 rotate_about(const Vec3& v, const Vec3& axis, double angle) {
    double c = std::cos(angle), s = std::sin(angle);
    return v * c + cross(axis, v) * s + axis * (dot(axis, v) * (1.0 - c));
}

// Parallel transport of u from unit tangent t0 to unit tangent t1 (rotation
// about t0 x t1). u is assumed orthogonal to t0; result is orthogonal to t1.
inline Vec3 parallel_transport(const Vec3& u, const Vec3& t0, const Vec3& t1) {
    Vec3 b = cross(t0, t1);
    double bn = norm(b);
    if (bn < 1e-14) {
        if (dot(t0, t1) > 0.0) return u;
        // Antipodal tangents: rotate by pi about any axis orthogonal to t0.
        Vec3 a = any_orthogonal(t0);
        return rotate_about(u, a, M_PI);
    }
    Vec3 axis = b / bn;
    double angle = std::atan2(bn, dot(t0, t1));
    return rotate_about(u, axis, angle);
}

struct AlignedBox {
    Vec3 lo{1e300, 1e300, 1e300};
    Vec3 hi{-1e300, -1e300, -1e300};
    void expand(const Vec3& p) {
        for (int a = 0; a < 3; ++a) {
            if (p[a] < lo[a]) lo[a] = p[a];
            if (p[a] > hi[a]) hi[a] = p[a];
        }
    }
    bool contains(const Vec3& p) const {
        return p.x >= lo.x && p.x <= hi.x && p.y >= lo.y && p.y <= hi.y && p.z >= lo.z &&
               p.z <= hi.z;
    }
    Vec3 extent() const { return hi - lo; }
};

// ---------------------------------------------------------------------------
// Deterministic parallel-for. Work is split into contiguous chunks; results
// are bit-identical for any thread count as long as iterations write to
// disjoint locations. All reductions in the library stay serial.
// ---------------------------------------------------------------------------

inline int& thread_count_ref() {
    static int n = [] {
        if (const char* e = std::getenv("ANEUSIM_THREADS")) {
            int v = std::atoi(e);
            if (v >= 1) return v;
        }
        return 1;
    }();
    return n;
}

inline void set_threads(int n) { thread_count_ref() = n < 1 ? 1 : n; }
inline int threads() { return thread_count_ref(); }

template <class F>
void parallel_for(std::int64_t n, F&& body) {
    int nt = threads();
    if (nt <= 1 || n < 8192) {
        for (std::int64_t i = 0; i < n; ++i) body(i);
        return;
    }
    if (nt > static_cast<int>(n)) nt = static_cast<int>(n);
    std::vector<std::thread> pool;
    pool.reserve(nt);
    std::int64_t chunk = (n + nt - 1) / nt;
    for (int t = 0; t < nt; ++t) {
        std::int64_t b = t * chunk;
        std::int64_t e = std::min(n, b + chunk);
        if (b >= e) break;
        pool.emplace_back([b, e, &body] {
            for (std::int64_t i = b; i < e; ++i) body(i);
        });
    }
    for (auto& th : pool) th.join();
}

// ---------------------------------------------------------------------------
// Checksums and formatting
// ---------------------------------------------------------------------------

inline std::uint64_t fnv1a64(const void* data, std::size_t len, std::uint64_t seed = 14695981039346656037ull) {
    const auto* p = static_cast<const unsigned char*>(data);
    std::uint64_t h = seed;
    for (std::size_t i = 0; i < len; ++i) {
        h ^= p[i];
        h *= 1099511628211ull;
    }
    return h;
}

// Shortest round-trip decimal representation; stable across runs.
inline std::string fmt_double(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    double back = std::strtod(buf, nullptr);
    if (back == v) {
        for (int prec = 1; prec < 17; ++prec) {
            char b2[32];
            std::snprintf(b2, sizeof(b2), "%.*g", prec, v);
            if (std::strtod(b2, nullptr) == v) return b2;
        }
    }
    return buf;
}

inline double sq(double v) { return v * v; }

// Unit conversions at the configuration boundary. Internal units are
// mm, s, nM; kinematic pressure is stored as p/rho in mm^2/s^2.
constexpr double kPaPerMmHg = 133.322387415;
constexpr double kMm2PerM2 = 1.0e6;
inline double mmhg_to_kinematic(double mmhg, double rho_si) {
    return mmhg * kPaPerMmHg / rho_si * kMm2PerM2;  // mm^2/s^2
}
inline double kinematic_to_pa(double q, double rho_si) { return q * rho_si / kMm2PerM2; }
inline double cm_per_s_to_mm_per_s(double v) { return v * 10.0; }
inline double per_m2_to_per_mm2(double v) { return v / kMm2PerM2; }

}  // namespace aneusim
