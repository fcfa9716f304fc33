#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <string>

namespace mmloc {

struct Point2 {
    double x{0.0};
    double y{0.0};

    friend Point2 operator+(const Point2& a, const Point2& b) { return {a.x + b.x, a.y + b.y}; }
    friend Point2 operator-(const Point2& a, const Point2& b) { return {a.x - b.x, a.y - b.y}; }
    friend Point2 operator*(double s, const Point2& p) { return {s * p.x, s * p.y}; }
    friend Point2 operator*(const Point2& p, double s) { return {s * p.x, s * p.y}; }
};

inline double dot(const Point2& a, const Point2& b) { return a.x * b.x + a.y * b.y; }
inline double cross(const Point2& a, const Point2& b) { return a.x * b.y - a.y * b.x; }
inline double norm(const Point2& p) { return std::hypot(p.x, p.y); }
inline double distance(const Point2& a, const Point2& b) { return norm(a - b); }

struct Rect {
    Point2 min{};
    Point2 max{};

    bool contains(const Point2& p) const {
        return p.x >= min.x && p.x <= max.x && p.y >= min.y && p.y <= max.y;
    }
    double width() const { return max.x - min.x; }
    double height() const { return max.y - min.y; }
};

inline constexpr double kPi = std::numbers::pi;
inline constexpr double kTwoPi = 2.0 * std::numbers::pi;

inline double deg2rad(double deg) { return deg * kPi / 180.0; }
inline double rad2deg(double rad) { return rad * 180.0 / kPi; }

// Wraps an angle to (-pi, pi].
inline double wrap_angle(double theta) {
    double w = std::remainder(theta, kTwoPi);
    if (w <= -kPi) w += kTwoPi;
    return w;
}

// Splittable 64-bit seed mixer for deriving independent sub-streams from one
// base seed (splitmix64 finalizer).
inline std::uint64_t mix_seed(std::uint64_t base, std::uint64_t stream) {
    std::uint64_t z = base + 0x9e3779b97f4a7c15ULL * (stream + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

// FNV-1a over a string, used for scene fingerprints.
inline std::uint64_t fnv1a(const std::string& s) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

}  // namespace mmloc
