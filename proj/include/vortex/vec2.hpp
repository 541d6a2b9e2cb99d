#pragma once

#include <cmath>
#include <vector>

namespace vortex {

/// Planar vector with double components. Value type, no invariants enforced
/// beyond finiteness of whatever the caller puts in.
struct Vec2 {
    double x{0.0};
    double y{0.0};

    constexpr Vec2() = default;
    constexpr Vec2(double x_, double y_) : x(x_), y(y_) {}

    constexpr Vec2 operator+(Vec2 r) const { return {x + r.x, y + r.y}; }
    constexpr Vec2 operator-(Vec2 r) const { return {x - r.x, y - r.y}; }
    constexpr Vec2 operator*(double s) const { return {x * s, y * s}; }
    constexpr Vec2 operator/(double s) const { return {x / s, y / s}; }
    constexpr Vec2 operator-() const { return {-x, -y}; }
    Vec2& operator+=(Vec2 r) { x += r.x; y += r.y; return *this; }
    Vec2& operator-=(Vec2 r) { x -= r.x; y -= r.y; return *this; }
    Vec2& operator*=(double s) { x *= s; y *= s; return *this; }

    constexpr bool operator==(const Vec2&) const = default;

    double norm() const { return std::hypot(x, y); }
    constexpr double norm2() const { return x * x + y * y; }
};

constexpr Vec2 operator*(double s, Vec2 v) { return {s * v.x, s * v.y}; }

constexpr double dot(Vec2 a, Vec2 b) { return a.x * b.x + a.y * b.y; }

/// Rotation by +pi/2: (a, b) -> (-b, a). Isometry; perp(perp(v)) == -v.
constexpr Vec2 perp(Vec2 v) { return {-v.y, v.x}; }

/// z-component of the cross product of two planar vectors.
constexpr double cross(Vec2 a, Vec2 b) { return a.x * b.y - a.y * b.x; }

inline double distance(Vec2 a, Vec2 b) { return (a - b).norm(); }

inline Vec2 normalized(Vec2 v) {
    const double n = v.norm();
    return n > 0.0 ? v / n : Vec2{0.0, 0.0};
}

using Vec2List = std::vector<Vec2>;

inline double max_norm(const Vec2List& vs) {
    double m = 0.0;
    for (const Vec2& v : vs) m = std::max(m, v.norm());
    return m;
}

/// Euclidean norm of a tuple of planar vectors seen as one long vector.
inline double tuple_norm(const Vec2List& vs) {
    double s = 0.0;
    for (const Vec2& v : vs) s += v.norm2();
    return std::sqrt(s);
}

inline Vec2List operator-(const Vec2List& a, const Vec2List& b) {
    Vec2List out(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] - b[i];
    return out;
}

}  // namespace vortex
