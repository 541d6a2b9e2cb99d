#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <vector>

#include "vortex/vec2.hpp"

namespace vortex {

struct Disc {
    Vec2 center;
    double radius{0.0};
};

inline Vec2 project_on_segment(Vec2 p, Vec2 a, Vec2 b) {
    const Vec2 ab = b - a;
    const double len2 = ab.norm2();
    if (len2 == 0.0) return a;
    const double t = std::clamp(dot(p - a, ab) / len2, 0.0, 1.0);
    return a + t * ab;
}

inline double dist_point_segment(Vec2 p, Vec2 a, Vec2 b) {
    return distance(p, project_on_segment(p, a, b));
}

/// Does the open segment (a,b) intersect the open disc?
inline bool segment_hits_disc(Vec2 a, Vec2 b, const Disc& d, double tol = 0.0) {
    return dist_point_segment(d.center, a, b) < d.radius - tol;
}

/// Angles of the two tangent points on a circle as seen from an external
/// point p. Empty when p is inside the circle.
inline std::optional<std::pair<double, double>> tangent_angles(Vec2 p, const Disc& d) {
    const Vec2 cp = p - d.center;
    const double dist = cp.norm();
    if (dist <= d.radius) return std::nullopt;
    const double base = std::atan2(cp.y, cp.x);
    const double half = std::acos(d.radius / dist);
    return std::make_pair(base + half, base - half);
}

inline Vec2 circle_point(const Disc& d, double angle) {
    return d.center + d.radius * Vec2{std::cos(angle), std::sin(angle)};
}

/// Signed sweep from angle a to angle b in the given direction
/// (ccw = counterclockwise), normalized into (0, 2*pi].
inline double arc_sweep(double a, double b, bool ccw) {
    const double two_pi = 2.0 * M_PI;
    double s = ccw ? b - a : a - b;
    s = std::fmod(s, two_pi);
    if (s <= 0.0) s += two_pi;
    return s;
}

/// Stadium: the set of points within `radius` of the segment [a, b].
struct Stadium {
    Vec2 a, b;
    double radius{0.0};

    bool contains(Vec2 p) const { return dist_point_segment(p, a, b) <= radius; }

    /// Positive inside (distance to the boundary), negative outside.
    double margin(Vec2 p) const { return radius - dist_point_segment(p, a, b); }

    Vec2 project(Vec2 p) const {
        if (contains(p)) return p;
        const Vec2 q = project_on_segment(p, a, b);
        return q + radius * normalized(p - q);
    }

    Disc bounding_disc() const {
        return {0.5 * (a + b), 0.5 * distance(a, b) + radius};
    }
};

/// Ice-cream cone: convex hull of an apex and a disc. Degenerates to the
/// disc when the apex lies inside it.
struct Cone {
    Vec2 apex;
    Disc disc;

    bool degenerate() const { return distance(apex, disc.center) <= disc.radius; }

    // Tangent points from the apex; only meaningful when not degenerate.
    std::pair<Vec2, Vec2> tangents() const {
        const auto ang = tangent_angles(apex, disc);
        return {circle_point(disc, ang->first), circle_point(disc, ang->second)};
    }

    bool contains(Vec2 p) const {
        if (distance(p, disc.center) <= disc.radius) return true;
        if (degenerate()) return false;
        const auto [t1, t2] = tangents();
        // triangle apex-t1-t2
        const double s1 = cross(t1 - apex, p - apex);
        const double s2 = cross(t2 - t1, p - t1);
        const double s3 = cross(apex - t2, p - t2);
        const bool pos = s1 >= 0 && s2 >= 0 && s3 >= 0;
        const bool neg = s1 <= 0 && s2 <= 0 && s3 <= 0;
        return pos || neg;
    }

    /// Positive inside (distance to the boundary), negative outside
    /// (minus the distance to the set).
    double margin(Vec2 p) const {
        if (degenerate()) return disc.radius - distance(p, disc.center);
        if (!contains(p)) return -distance(p, project(p));
        // Boundary = two tangent segments + the far arc. The radial gap to
        // the circle counts only where the radial ray meets the far arc.
        const auto [t1, t2] = tangents();
        double m = std::min(dist_point_segment(p, apex, t1),
                            dist_point_segment(p, apex, t2));
        const Vec2 u = p - disc.center;
        const double un = u.norm();
        const double d = distance(apex, disc.center);
        if (un == 0.0 || dot(u / un, normalized(apex - disc.center)) <= disc.radius / d)
            m = std::min(m, std::abs(disc.radius - un));
        return m;
    }

    Vec2 project(Vec2 p) const {
        if (contains(p)) return p;
        Vec2 best = disc.center + disc.radius * normalized(p - disc.center);
        double bd = distance(p, best);
        if (!degenerate()) {
            const auto [t1, t2] = tangents();
            for (const Vec2& q : {project_on_segment(p, apex, t1),
                                  project_on_segment(p, apex, t2)}) {
                const double d = distance(p, q);
                if (d < bd) { bd = d; best = q; }
            }
        }
        return best;
    }

    Disc bounding_disc() const {
        const double d = distance(apex, disc.center);
        if (d <= disc.radius) return disc;
        const double r = 0.5 * (d + disc.radius);
        return {apex + r * normalized(disc.center - apex), r};
    }
};

/// Distance between two convex sets given by projection operators, via
/// alternating projections. Returns 0 when the sets touch.
template <class SetA, class SetB>
double convex_distance(const SetA& a, const SetB& b, Vec2 start,
                       int max_iter = 512, double tol = 1e-13) {
    Vec2 p = a.project(start);
    Vec2 q = b.project(p);
    double prev = distance(p, q);
    for (int it = 0; it < max_iter; ++it) {
        p = a.project(q);
        q = b.project(p);
        const double d = distance(p, q);
        if (prev - d < tol) return d;
        prev = d;
    }
    return prev;
}

}  // namespace vortex
