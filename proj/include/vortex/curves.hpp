#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <map>
#include <optional>
#include <vector>

#include "vortex/errors.hpp"
#include "vortex/geometry.hpp"
#include "vortex/path.hpp"
#include "vortex/quadrature.hpp"
#include "vortex/vec2.hpp"

namespace vortex {

/// Requirements for one curve of a family: endpoints, optional prescribed
/// start velocity, a speed floor, a pairwise clearance and a horizon.
/// The intensity and coupling bound describe the vortex pair that will ride
/// the curve; they only inform the stability cost model of the parameter
/// search and default to neutral values.
struct CurveConstraints {
    Vec2 start;
    Vec2 end;
    std::optional<Vec2> start_velocity;
    double min_speed = 0.0;
    double clearance = 0.0;
    double horizon = 1.0;
    double intensity = 1.0;       // |gamma_c| of the riding pair
    double coupling_bound = 0.0;  // worst-case |G| seen along the way
};

/// Constant-speed straight segment on [0, T].
inline ControlPath straight_line(Vec2 x0, Vec2 xf, double T, double t0 = 0.0) {
    const Vec2 v = (xf - x0) / T;
    return ControlPath::from_jets({t0, t0 + T},
                                  {{x0, v, {0, 0}}, {xf, v, {0, 0}}});
}

/// Spec'd two-interval signature for the affine time change.
inline ControlPath reparametrize(const ControlPath& p, double S, double T) {
    return reparametrize(p, p.t_begin(), p.t_begin() + S, p.t_begin(), p.t_begin() + T);
}

namespace detail {

/// Geometric route made of straight segments and circular arcs, traversed
/// at constant speed when converted to a ControlPath.
struct PathElement {
    enum Kind { Seg, Arc } kind = Seg;
    Vec2 a, b;          // segment
    Disc disc;          // arc support
    double ang0 = 0.0;  // arc start angle
    double sweep = 0.0; // positive sweep magnitude
    int dir = 1;        // +1 ccw, -1 cw

    static PathElement segment(Vec2 a, Vec2 b) {
        PathElement e;
        e.kind = Seg;
        e.a = a;
        e.b = b;
        return e;
    }
    static PathElement arc(const Disc& d, double ang0, double sweep, int dir) {
        PathElement e;
        e.kind = Arc;
        e.disc = d;
        e.ang0 = ang0;
        e.sweep = sweep;
        e.dir = dir;
        return e;
    }

    double length() const {
        return kind == Seg ? distance(a, b) : sweep * disc.radius;
    }

    Vec2 start() const { return kind == Seg ? a : circle_point(disc, ang0); }
    Vec2 end() const {
        return kind == Seg ? b : circle_point(disc, ang0 + dir * sweep);
    }

    /// Jet at arclength s from the element start for a given speed.
    PathJet jet(double s, double speed) const {
        if (kind == Seg) {
            const Vec2 u = normalized(b - a);
            return {a + s * u, speed * u, {0.0, 0.0}};
        }
        const double th = ang0 + dir * s / disc.radius;
        const Vec2 e{std::cos(th), std::sin(th)};
        const Vec2 tangent = dir * perp(e);
        return {disc.center + disc.radius * e, speed * tangent,
                -(speed * speed / disc.radius) * e};
    }
};

struct ElementPath {
    std::vector<PathElement> elems;

    double length() const {
        double L = 0.0;
        for (const auto& e : elems) L += e.length();
        return L;
    }

    Vec2 point_at(double s) const {
        for (const auto& e : elems) {
            const double l = e.length();
            if (s <= l || &e == &elems.back()) return e.jet(std::min(s, l), 0.0).p;
            s -= l;
        }
        return elems.back().end();
    }

    void sample(int n, Vec2List& out) const {
        const double L = length();
        for (int i = 0; i <= n; ++i) out.push_back(point_at(L * i / n));
    }

    /// Constant-speed parametrization over [t0, t1].
    ControlPath to_path(double t0, double t1) const {
        const double L = length();
        if (L <= 0.0) {
            const Vec2 p = elems.empty() ? Vec2{0, 0} : elems.front().start();
            return ControlPath::constant(p, t0, t1);
        }
        const double speed = L / (t1 - t0);
        std::vector<double> ts;
        std::vector<PathJet> js;
        double s0 = 0.0;
        for (const auto& e : elems) {
            const double l = e.length();
            if (l <= 0.0) continue;
            int pieces = 1;
            if (e.kind == PathElement::Arc)
                pieces = std::max(1, static_cast<int>(std::ceil(e.sweep / (M_PI / 64.0))));
            for (int p = 0; p < pieces; ++p) {
                const double s = l * p / pieces;
                ts.push_back(t0 + (s0 + s) / speed);
                js.push_back(e.jet(s, speed));
            }
            s0 += l;
        }
        ts.push_back(t1);
        js.push_back(elems.back().jet(elems.back().length(), speed));
        return ControlPath::from_jets(ts, js);
    }
};

/// Taut detour around a single disc: tangent segment, boundary arc, tangent
/// segment. dir = -1 is the clockwise traversal.
inline std::optional<std::array<double, 3>> detour_angles(Vec2 A, Vec2 B,
                                                          const Disc& d, int dir) {
    const double dA = distance(A, d.center), dB = distance(B, d.center);
    if (dA < d.radius || dB < d.radius) return std::nullopt;
    const double baseA = std::atan2((A - d.center).y, (A - d.center).x);
    const double halfA = std::acos(std::clamp(d.radius / dA, -1.0, 1.0));
    const double baseB = std::atan2((B - d.center).y, (B - d.center).x);
    const double halfB = std::acos(std::clamp(d.radius / dB, -1.0, 1.0));
    const double thA = dir < 0 ? baseA - halfA : baseA + halfA;
    const double thB = dir < 0 ? baseB + halfB : baseB - halfB;
    return std::array<double, 3>{thA, thB, arc_sweep(thA, thB, dir > 0)};
}

inline void route_segment(Vec2 A, Vec2 B, const std::vector<Disc>& discs,
                          std::vector<int> remaining,
                          const std::map<int, int>& forced,
                          std::vector<PathElement>& out, int depth = 0) {
    if (depth > 32) throw BlockedPath("transition_curve: routing recursion overflow");
    int hit = -1;
    double best_entry = std::numeric_limits<double>::infinity();
    const Vec2 ab = B - A;
    for (int idx : remaining) {
        const Disc& d = discs[idx];
        if (!segment_hits_disc(A, B, d, 1e-12 * d.radius)) continue;
        const double t = std::clamp(dot(d.center - A, ab) / std::max(ab.norm2(), 1e-300), 0.0, 1.0);
        if (t < best_entry) {
            best_entry = t;
            hit = idx;
        }
    }
    if (hit < 0) {
        if (distance(A, B) > 0.0) out.push_back(PathElement::segment(A, B));
        return;
    }
    const Disc& d = discs[hit];
    std::vector<int> rest;
    for (int idx : remaining)
        if (idx != hit) rest.push_back(idx);

    int dir;
    if (auto it = forced.find(hit); it != forced.end()) {
        dir = it->second;
    } else {
        const auto cw = detour_angles(A, B, d, -1);
        const auto ccw = detour_angles(A, B, d, +1);
        if (!cw || !ccw) throw BlockedPath("transition_curve: endpoint inside obstacle");
        const double lcw = (*cw)[2] * d.radius;
        const double lccw = (*ccw)[2] * d.radius;
        // shortest arc; clockwise when both arcs tie
        dir = lccw < lcw - 1e-12 * d.radius ? +1 : -1;
    }
    const auto det = detour_angles(A, B, d, dir);
    if (!det) throw BlockedPath("transition_curve: endpoint inside obstacle");
    const Vec2 T1 = circle_point(d, (*det)[0]);
    const Vec2 T2 = circle_point(d, (*det)[0] + dir * (*det)[2]);
    route_segment(A, T1, discs, rest, forced, out, depth + 1);
    out.push_back(PathElement::arc(d, (*det)[0], (*det)[2], dir));
    route_segment(T2, B, discs, rest, forced, out, depth + 1);
}

inline double min_clearance(const ElementPath& path, const std::vector<Disc>& discs,
                            int samples = 2048) {
    double m = std::numeric_limits<double>::infinity();
    const double L = path.length();
    for (int i = 0; i <= samples; ++i) {
        const Vec2 p = path.point_at(L * i / samples);
        for (const Disc& d : discs)
            m = std::min(m, distance(p, d.center) - d.radius);
    }
    return m;
}

inline ElementPath route_around_discs(Vec2 from, Vec2 to,
                                      const std::vector<Disc>& discs) {
    for (std::size_t i = 0; i < discs.size(); ++i) {
        for (std::size_t j = i + 1; j < discs.size(); ++j)
            if (distance(discs[i].center, discs[j].center) <
                discs[i].radius + discs[j].radius)
                throw OverlappingObstacles("transition_curve: obstacle discs overlap");
        if (distance(from, discs[i].center) < discs[i].radius * (1.0 - 1e-12) ||
            distance(to, discs[i].center) < discs[i].radius * (1.0 - 1e-12))
            throw BlockedPath("transition_curve: endpoint inside an obstacle");
    }
    std::vector<int> all(discs.size());
    for (std::size_t i = 0; i < discs.size(); ++i) all[i] = static_cast<int>(i);

    auto attempt = [&](const std::map<int, int>& forced) {
        ElementPath ep;
        route_segment(from, to, discs, all, forced, ep.elems);
        return ep;
    };

    ElementPath primary = attempt({});
    if (min_clearance(primary, discs) >= -1e-9) return primary;

    // A detour can clip a neighboring disc; retry over side assignments of
    // the discs actually involved.
    std::vector<int> involved;
    for (const auto& e : primary.elems)
        if (e.kind == PathElement::Arc)
            for (std::size_t i = 0; i < discs.size(); ++i)
                if (distance(discs[i].center, e.disc.center) < 1e-12)
                    involved.push_back(static_cast<int>(i));
    std::sort(involved.begin(), involved.end());
    involved.erase(std::unique(involved.begin(), involved.end()), involved.end());
    if (involved.size() <= 5) {
        ElementPath best;
        double best_len = std::numeric_limits<double>::infinity();
        const int combos = 1 << involved.size();
        for (int mask = 0; mask < combos; ++mask) {
            std::map<int, int> forced;
            for (std::size_t b = 0; b < involved.size(); ++b)
                forced[involved[b]] = (mask >> b) & 1 ? +1 : -1;
            try {
                ElementPath ep = attempt(forced);
                if (min_clearance(ep, discs) >= -1e-9 && ep.length() < best_len) {
                    best_len = ep.length();
                    best = ep;
                }
            } catch (const BlockedPath&) {
            }
        }
        if (best_len < std::numeric_limits<double>::infinity()) return best;
    }
    throw BlockedPath("transition_curve: no obstacle-avoiding route found");
}

}  // namespace detail

/// Obstacle-avoiding constant-speed path from `from` to `to`: straight
/// segments plus boundary arcs of the obstacle discs, shortest arc chosen,
/// clockwise on ties.
inline ControlPath transition_curve(Vec2 from, Vec2 to,
                                    const std::vector<Disc>& obstacles,
                                    double duration, double t_start = 0.0) {
    if (!(duration > 0.0)) throw VortexError("transition_curve: duration must be positive");
    detail::ElementPath ep = detail::route_around_discs(from, to, obstacles);
    return ep.to_path(t_start, t_start + duration);
}

namespace detail {

/// Polyline with circular corner fillets; gives a C1 constant-speed route.
inline ElementPath smooth_polyline(const Vec2List& pts) {
    ElementPath ep;
    if (pts.size() < 2) throw VortexError("smooth_polyline: need two points");
    Vec2 cursor = pts.front();
    for (std::size_t i = 1; i + 1 < pts.size(); ++i) {
        const Vec2 w = pts[i];
        const Vec2 u = normalized(w - cursor);
        const Vec2 v = normalized(pts[i + 1] - w);
        const double turn = std::atan2(cross(u, v), dot(u, v));
        if (std::abs(turn) < 1e-9) continue;
        const double leg = std::min(distance(cursor, w), distance(w, pts[i + 1]));
        const double trim = 0.3 * leg;
        const double radius = trim / std::tan(std::abs(turn) / 2.0);
        const Vec2 p1 = w - trim * u;
        const int dir = turn > 0 ? +1 : -1;
        const Vec2 center = p1 + radius * dir * perp(u);
        const double ang0 = std::atan2((p1 - center).y, (p1 - center).x);
        ep.elems.push_back(PathElement::segment(cursor, p1));
        ep.elems.push_back(PathElement::arc({center, radius}, ang0, std::abs(turn), dir));
        cursor = w + trim * v;
    }
    ep.elems.push_back(PathElement::segment(cursor, pts.back()));
    return ep;
}

/// Full circle through `at`, used when a curve must keep moving while its
/// endpoints coincide, and as the terminal loop of every family curve.
struct Circle {
    Vec2 center;
    double radius;
    double theta0;  // angle of the anchor point
    int orient = +1;

    static Circle through(Vec2 at, Vec2 ahead, double diameter) {
        Circle c;
        c.radius = 0.5 * diameter;
        c.center = at + c.radius * ahead;
        const Vec2 d = at - c.center;
        c.theta0 = std::atan2(d.y, d.x);
        return c;
    }

    /// Jet with respect to the 1-periodic parameter s (position, d/ds, d2/ds2).
    PathJet jet(double s) const {
        const double th = theta0 + orient * 2.0 * M_PI * s;
        const Vec2 e{std::cos(th), std::sin(th)};
        const double om = orient * 2.0 * M_PI;
        return {center + radius * e, radius * om * perp(e), -radius * om * om * e};
    }
};

/// C2 step that is 1 on (-inf, -1] and 0 on [0, inf).
inline double blend_phi(double u, int order = 0) {
    if (u <= -1.0) return order == 0 ? 1.0 : 0.0;
    if (u >= 0.0) return 0.0;
    const double x = -u;  // in (0, 1)
    switch (order) {
        case 0: return x * x * x * (10.0 + x * (-15.0 + 6.0 * x));
        case 1: return -30.0 * x * x * (1.0 - x) * (1.0 - x);
        default: return 60.0 * x * (1.0 - x) * (1.0 - 2.0 * x);
    }
}

}  // namespace detail

/// Deterministic sequential routing of disjoint base curves joining the
/// start points to the end points, each parametrized on [0, 1] at constant
/// speed. Returns the routes and the achieved clearance radius r, a quarter
/// of the smallest distance between distinct routed graphs.
struct BaseRoutes {
    std::vector<detail::ElementPath> routes;
    double clearance = 0.0;  // the Lemma's r
};

inline BaseRoutes route_base_curves(const Vec2List& starts, const Vec2List& ends,
                                    double circle_diameter_hint = 0.0) {
    const std::size_t n = starts.size();
    if (ends.size() != n) throw VortexError("route_base_curves: size mismatch");
    Vec2List all = starts;
    all.insert(all.end(), ends.begin(), ends.end());
    Vec2 centroid{0, 0};
    for (const Vec2& p : all) centroid += p / static_cast<double>(all.size());
    double diam = 0.0;
    for (std::size_t i = 0; i < all.size(); ++i)
        for (std::size_t j = i + 1; j < all.size(); ++j)
            diam = std::max(diam, distance(all[i], all[j]));
    if (diam == 0.0) diam = 1.0;

    // Every curve is later traversed with the same time law, so what the
    // family needs is simultaneous separation: distance at equal parameter,
    // not distance between graphs. A swap, where one curve ends at another's
    // start, is fine under this metric.
    const int samples = 512;
    auto sampled = [&](const detail::ElementPath& ep) {
        Vec2List pts;
        const double L = ep.length();
        for (int s = 0; s <= samples; ++s) pts.push_back(ep.point_at(L * s / samples));
        return pts;
    };
    auto straight_samples = [&](std::size_t j) {
        Vec2List pts;
        for (int s = 0; s <= samples; ++s)
            pts.push_back(starts[j] + (static_cast<double>(s) / samples) * (ends[j] - starts[j]));
        return pts;
    };
    auto simultaneous_gap = [&](const Vec2List& a, const Vec2List& b) {
        double m = std::numeric_limits<double>::infinity();
        for (int s = 0; s <= samples; ++s) m = std::min(m, distance(a[s], b[s]));
        return m;
    };

    BaseRoutes result;
    std::vector<Vec2List> routed_samples;

    auto clearance_of = [&](const Vec2List& pts, std::size_t self) {
        double m = std::numeric_limits<double>::infinity();
        for (const auto& other : routed_samples)
            m = std::min(m, simultaneous_gap(pts, other));
        // curves not yet routed are represented by their straight runs
        for (std::size_t j = self + 1; j < n; ++j)
            m = std::min(m, simultaneous_gap(pts, straight_samples(j)));
        return m;
    };

    for (std::size_t i = 0; i < n; ++i) {
        if (distance(starts[i], ends[i]) == 0.0) {
            // stationary request: a small loop keeps the speed floor reachable
            const double d = circle_diameter_hint > 0.0 ? circle_diameter_hint : 0.05 * diam;
            detail::Circle c = detail::Circle::through(starts[i], {1.0, 0.0}, d);
            detail::ElementPath ep;
            ep.elems.push_back(detail::PathElement::arc(
                {c.center, c.radius}, c.theta0, 2.0 * M_PI, +1));
            const Vec2List pts = sampled(ep);
            if (n > 1 && clearance_of(pts, i) <= 0.0)
                throw InfeasibleClearance("route_base_curves: stationary loop blocked");
            routed_samples.push_back(pts);
            result.routes.push_back(ep);
            continue;
        }
        std::vector<Vec2List> candidates;
        candidates.push_back({starts[i], ends[i]});
        for (double ring : {0.55, 0.85, 1.3, 2.0}) {
            const double radius = ring * diam;
            for (int a = 0; a < 16; ++a) {
                const double ang = 2.0 * M_PI * a / 16.0 + 0.3999;
                candidates.push_back(
                    {starts[i], centroid + radius * Vec2{std::cos(ang), std::sin(ang)},
                     ends[i]});
            }
        }
        for (int a = 0; a < 16; ++a)
            for (int b = 0; b < 16; ++b) {
                if (a == b) continue;
                const double angA = 2.0 * M_PI * a / 16.0 + 0.3999;
                const double angB = 2.0 * M_PI * b / 16.0 + 0.3999;
                candidates.push_back(
                    {starts[i], centroid + 1.3 * diam * Vec2{std::cos(angA), std::sin(angA)},
                     centroid + 1.3 * diam * Vec2{std::cos(angB), std::sin(angB)}, ends[i]});
            }

        bool placed = false;
        const double target = 0.05 * diam;
        detail::ElementPath best;
        Vec2List best_pts;
        double best_clear = -1.0;
        for (const auto& cand : candidates) {
            detail::ElementPath ep = detail::smooth_polyline(cand);
            const Vec2List pts = sampled(ep);
            const double c = n > 1 ? clearance_of(pts, i)
                                   : std::numeric_limits<double>::infinity();
            if (c > best_clear) {
                best_clear = c;
                best = ep;
                best_pts = pts;
            }
            if (c >= target) break;
        }
        placed = best_clear > 0.0 || n == 1;
        if (!placed)
            throw InfeasibleClearance("route_base_curves: no disjoint route found");
        routed_samples.push_back(best_pts);
        result.routes.push_back(best);
    }

    double min_dist = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < routed_samples.size(); ++i)
        for (std::size_t j = i + 1; j < routed_samples.size(); ++j)
            min_dist = std::min(min_dist, simultaneous_gap(routed_samples[i],
                                                           routed_samples[j]));
    if (std::isfinite(min_dist)) {
        result.clearance = 0.25 * min_dist;
    } else {
        // single curve: no separation constraint; tie the clearance to the
        // route length so the terminal loop speed matches the route speed
        const double len = result.routes.front().length();
        result.clearance = len > 0.0 ? 2.6 * len : 0.25 * std::max(diam, 1.0);
    }
    return result;
}

namespace detail {

/// Lazy evaluation of the blended curve: follow the base route sped up by k,
/// then hand over to the terminal circle, with a C2 blend of width 1/n.
struct BlendedCurve {
    ControlPath base;   // on [0, 1], constantly extended past 1
    Circle circle;      // terminal loop, 1-periodic
    double T;           // horizon
    int k = 1;
    int n = 1;

    PathJet at(double t) const {
        const double s = k * t / T;
        const double u = n * (t - T / static_cast<double>(k));
        const double ph = blend_phi(u), ph1 = blend_phi(u, 1), ph2 = blend_phi(u, 2);
        PathJet cb;  // base jet in t
        {
            const double rate = k / T;
            cb.p = base.value(s);
            cb.v = base.eval(s, 1) * rate;
            cb.a = base.eval(s, 2) * rate * rate;
        }
        PathJet cc = circle.jet(s - std::floor(s));
        {
            const double rate = k / T;
            cc.v = cc.v * rate;
            cc.a = cc.a * rate * rate;
        }
        PathJet out;
        const Vec2 diff = cb.p - cc.p;
        const Vec2 diffv = cb.v - cc.v;
        out.p = ph * diff + cc.p;
        out.v = ph1 * n * diff + ph * diffv + cc.v;
        out.a = ph2 * n * n * diff + 2.0 * ph1 * n * diffv + ph * (cb.a - cc.a) + cc.a;
        return out;
    }
};

}  // namespace detail

struct CurveFamily {
    std::vector<ControlPath> curves;
    double clearance = 0.0;  // r actually certified by the grid check
    double min_speed = 0.0;
    int k = 0;
    int n = 0;
};

namespace detail {

/// Closed velocity-matching loop of exact duration `budget`: starts and ends
/// at `p`, begins with velocity v0, ends with velocity w, keeps speed at or
/// above the floor and stays within the given radius. Built in hodograph
/// form (position is the integral of speed times a rotating direction), so
/// closure is exact: a morphing sweep, one displacement-cancelling turn, and
/// zero-displacement filler turns that absorb the remaining time.
inline ControlPath velocity_matching_loop(Vec2 p, Vec2 v0, Vec2 w, double floor,
                                          double radius, double budget,
                                          double t_start) {
    const double r0 = v0.norm(), r1 = w.norm();
    const double th0 = std::atan2(v0.y, v0.x);
    double delta = std::atan2(w.y, w.x) - th0;
    delta = std::remainder(delta, 2.0 * M_PI);
    const double sweepA = delta + 2.0 * M_PI;  // in (pi, 3pi]
    const double thA = th0 + sweepA;

    auto rho = [&](double th) {
        const double x = (th - th0) / sweepA;
        const double s = x * x * x * (10.0 + x * (-15.0 + 6.0 * x));
        return r0 + (r1 - r0) * s;
    };
    auto drho = [&](double th) {
        const double x = (th - th0) / sweepA;
        return (r1 - r0) * 30.0 * x * x * (1.0 - x) * (1.0 - x) / sweepA;
    };
    auto primitive = [](double th) { return Vec2{std::sin(th), -std::cos(th)}; };

    const auto& gl = GaussLegendre::order(48);
    double inv_speed = 0.0;  // integral of 1/rho over the phase-A sweep
    for (int q = 0; q < 8; ++q) {
        const double a = th0 + sweepA * q / 8.0;
        const double b = th0 + sweepA * (q + 1) / 8.0;
        inv_speed += gl.integrate(a, b, [&](double th) { return 1.0 / rho(th); });
    }

    for (int shrink = 0; shrink < 40; ++shrink) {
        // time spent in the two active phases; the rest goes to filler turns
        const double active = budget * std::pow(0.5, shrink);
        double lambda = 0.5;
        for (int balance = 0; balance < 12; ++balance) {
            const double tA = lambda * active, tB = active - tA;
            const double G1 = tA / inv_speed;
            const Vec2 D1 = G1 * (primitive(thA) - primitive(th0));
            const double G2 = tB * r1 / (2.0 * M_PI);
            const double amp = G2 > 0.0 ? D1.norm() / (M_PI * G2) : 1.0;
            if (amp > 0.45) {
                lambda *= 0.5;
                continue;
            }
            const double psi = std::atan2(-D1.y, -D1.x);

            // filler turns: full circles of the hodograph with zero net
            // displacement, sized to stay within the radius budget
            const double t_rem = budget - active;
            int fillers = 0;
            double Gf = 0.0;
            if (t_rem > 0.0) {
                fillers = std::max(
                    1, static_cast<int>(std::ceil(t_rem * r1 / (0.6 * M_PI * radius))));
                Gf = (t_rem / fillers) * r1 / (2.0 * M_PI);
            }

            std::vector<double> ts;
            std::vector<PathJet> js;
            const int gridA = 160, gridB = 128;
            double acc = 0.0;
            for (int i = 0; i <= gridA; ++i) {
                const double th = th0 + sweepA * i / gridA;
                if (i > 0) {
                    const double a = th0 + sweepA * (i - 1) / gridA;
                    acc += gl.integrate(a, th, [&](double x) { return 1.0 / rho(x); });
                }
                const Vec2 z = p + G1 * (primitive(th) - primitive(th0));
                const Vec2 e{std::cos(th), std::sin(th)};
                const double thdot = rho(th) / G1;
                ts.push_back(t_start + G1 * acc);
                js.push_back({z, rho(th) * e, (drho(th) * e + rho(th) * perp(e)) * thdot});
            }
            // keep phase-A duration consistent with G1's definition
            ts.back() = t_start + tA;
            double t_cur = ts.back();
            const Vec2 zA = js.back().p;
            auto arcInt = [&](double th) {
                return Vec2{0.25 * std::sin(2.0 * th - psi) + 0.5 * th * std::cos(psi),
                            -0.25 * std::cos(2.0 * th - psi) + 0.5 * th * std::sin(psi)};
            };
            for (int i = 1; i <= gridB; ++i) {
                const double th = thA + 2.0 * M_PI * i / gridB;
                const double tj = t_cur + (G2 / r1) * ((th - thA) +
                                                       amp * (std::sin(th - psi) -
                                                              std::sin(thA - psi)));
                const Vec2 z = zA + G2 * (primitive(th) - primitive(thA)) +
                               G2 * amp * (arcInt(th) - arcInt(thA));
                const Vec2 e{std::cos(th), std::sin(th)};
                const double g = G2 * (1.0 + amp * std::cos(th - psi));
                ts.push_back(tj);
                js.push_back({z, r1 * e, (r1 * perp(e)) * (r1 / g)});
            }
            ts.back() = t_start + active;
            js.back().p = p;  // closure is exact; clean up roundoff
            t_cur = ts.back();

            double th_cur = thA + 2.0 * M_PI;
            for (int f = 0; f < fillers; ++f) {
                for (int i = 1; i <= 96; ++i) {
                    const double th = th_cur + 2.0 * M_PI * i / 96.0;
                    const Vec2 z = p + Gf * (primitive(th) - primitive(th_cur));
                    const Vec2 e{std::cos(th), std::sin(th)};
                    ts.push_back(t_cur + (Gf / r1) * (th - th_cur));
                    js.push_back({z, r1 * e, (r1 * perp(e)) * (r1 / Gf)});
                }
                js.back().p = p;
                th_cur += 2.0 * M_PI;
                t_cur = ts.back();
            }
            ts.back() = t_start + budget;
            js.back().v = w;

            double extent = 0.0;
            for (const auto& j : js) extent = std::max(extent, distance(j.p, p));
            if (extent > radius) break;  // halve the active window
            double vmin_seen = std::numeric_limits<double>::infinity();
            for (const auto& j : js) vmin_seen = std::min(vmin_seen, j.v.norm());
            if (vmin_seen < floor * (1.0 - 1e-12))
                throw SpeedFloorUnachievable("velocity_matching_loop: speed dip");
            return ControlPath::from_jets(ts, js);
        }
    }
    throw SpeedFloorUnachievable("velocity_matching_loop: cannot fit in radius");
}

}  // namespace detail

/// Family of disjoint curves driving starts to ends over a common horizon,
/// with pairwise clearance, a speed floor, and optional prescribed start
/// velocities. The blend and loop parameters are searched geometrically.
inline CurveFamily build_curve_family(const Vec2List& starts, const Vec2List& ends,
                                      const std::vector<CurveConstraints>& cons) {
    const std::size_t N = starts.size();
    if (ends.size() != N || cons.size() != N)
        throw VortexError("build_curve_family: size mismatch");
    const double T = cons.front().horizon;
    const double v_min = cons.front().min_speed;
    for (const auto& c : cons) {
        if (c.horizon != T || c.min_speed != v_min)
            throw VortexError("build_curve_family: constraints must share horizon and floor");
        if (c.start_velocity && c.start_velocity->norm() < v_min * (1.0 - 1e-12))
            throw VortexError("build_curve_family: start velocity below the floor");
    }

    BaseRoutes base = route_base_curves(starts, ends);
    double r = cons.front().clearance > 0.0 ? cons.front().clearance : base.clearance;
    if (base.clearance < r)
        throw InfeasibleClearance("build_curve_family: requested clearance unreachable");

    const bool wants_velocity =
        std::any_of(cons.begin(), cons.end(),
                    [](const CurveConstraints& c) { return c.start_velocity.has_value(); });

    // time budget for the velocity-matching preludes
    const double eps_v = wants_velocity ? 0.04 * T : 0.0;
    const double Tm = T - eps_v;

    std::vector<ControlPath> base_paths;
    std::vector<double> lengths(N);
    for (std::size_t i = 0; i < N; ++i) {
        lengths[i] = base.routes[i].length();
        base_paths.push_back(base.routes[i].to_path(0.0, 1.0));
    }

    // Two numerical hazards shape the parameter choice. A vortex dragged
    // along a straight leg sits on a saddle of the co-moving field and
    // accumulates exp(speed * length / intensity) of error growth, so legs
    // want to be slow. On the terminal loop the strain (speed + coupling)^2
    // / intensity competes with the loop rotation rate 2 pi k / T, which
    // stabilizes the loop once it dominates, so loops want k large. The
    // loop diameter is tied to k so the loop speed stays near the floor,
    // and k minimizes the combined growth estimate.
    double diam_scale = 1.0;
    std::vector<double> diameters(N);
    auto set_diameters = [&](int kk) {
        for (std::size_t i = 0; i < N; ++i) {
            const double balanced = v_min > 0.0
                                        ? 1.45 * v_min * Tm / (M_PI * kk)
                                        : (lengths[i] > 0.0 ? lengths[i] / M_PI : r / 8.0);
            diameters[i] = diam_scale * std::min(balanced, 1.5 * r);
        }
    };
    auto k_floor = [&]() {
        // circle speed at the diameter cap must still clear the floor
        double need = 1.0;
        for (std::size_t i = 0; i < N; ++i) {
            need = std::max(need, 1.45 * v_min * Tm / (M_PI * 1.5 * r));
            if (lengths[i] > 0.0)
                need = std::max(need, 1.05 * v_min * Tm / lengths[i]);
        }
        return static_cast<int>(std::ceil(need));
    };
    auto growth_cost = [&](int kk) {
        set_diameters(kk);
        const double omega = 2.0 * M_PI * kk / Tm;
        double cost = 0.0;
        for (std::size_t i = 0; i < N; ++i) {
            const double gc = std::max(cons[i].intensity, 1e-12);
            const double leg = (kk * lengths[i] / Tm) * lengths[i] / gc;
            const double v_loop = M_PI * diameters[i] * kk / Tm;
            const double strain =
                (v_loop + cons[i].coupling_bound) * (v_loop + cons[i].coupling_bound) / gc;
            const double lam =
                strain > omega ? std::sqrt(strain * strain - omega * omega) : 0.0;
            cost = std::max(cost, leg + lam * Tm * (1.0 - 1.0 / kk));
        }
        return cost;
    };
    int k = 1;
    if (v_min > 0.0) {
        const int k_min = std::max(1, k_floor());
        int best_k = k_min;
        double best = growth_cost(k_min);
        for (int kk = k_min; kk <= std::min(k_min * 64, 1 << 12);
             kk = std::max(kk + 1, static_cast<int>(kk * 1.15))) {
            const double c = growth_cost(kk);
            if (c < best - 1e-12) {
                best = c;
                best_k = kk;
            }
        }
        k = best_k;
    }
    set_diameters(k);
    if (k >= (1 << 13))
        throw SpeedFloorUnachievable("build_curve_family: loop count out of range");

    const int grid = 10000;
    std::vector<detail::Circle> circles(N);
    std::vector<detail::BlendedCurve> blended(N);
    int n = 1;
    bool ok = false;
    for (long iter = 0; iter < 200; ++iter) {
        // keep the blend window below 5% of the base traversal
        n = std::max(n, 20 * static_cast<int>(std::ceil(k / Tm)));
        for (std::size_t i = 0; i < N; ++i) {
            const Vec2 arrive = normalized(base_paths[i].derivative(1.0 - 1e-9));
            circles[i] = detail::Circle::through(ends[i], arrive, diameters[i]);
            blended[i] = {base_paths[i], circles[i], Tm, k, n};
        }

        bool speed_ok = true, sep_ok = true;
        for (int g = 0; g <= grid && (speed_ok && sep_ok); ++g) {
            const double t = Tm * g / grid;
            Vec2List ps(N);
            for (std::size_t i = 0; i < N; ++i) {
                const PathJet j = blended[i].at(t);
                ps[i] = j.p;
                if (v_min > 0.0 && j.v.norm() < v_min) speed_ok = false;
            }
            for (std::size_t i = 0; i < N && sep_ok; ++i)
                for (std::size_t j = i + 1; j < N; ++j)
                    if (distance(ps[i], ps[j]) < r) sep_ok = false;
        }
        if (std::getenv("VORTEX_DEBUG_FAMILY")) {
            double worst_v = 1e300, worst_t = 0;
            int worst_i = -1;
            for (int g = 0; g <= grid; ++g) {
                const double t = Tm * g / grid;
                for (std::size_t i = 0; i < N; ++i) {
                    const double v = blended[i].at(t).v.norm();
                    if (v < worst_v) { worst_v = v; worst_t = t; worst_i = (int)i; }
                }
            }
            std::fprintf(stderr,
                         "family search: k=%d n=%d scale=%g speed_ok=%d sep_ok=%d "
                         "min|v|=%g at t=%g curve %d (T/k=%g)\n",
                         k, n, diam_scale, speed_ok, sep_ok, worst_v, worst_t, worst_i,
                         Tm / k);
        }
        if (speed_ok && sep_ok) {
            ok = true;
            break;
        }
        if (!speed_ok) {
            k = static_cast<int>(std::ceil(1.3 * k));
            set_diameters(k);
            if (k >= (1 << 13))
                throw SpeedFloorUnachievable("build_curve_family: speed floor unreachable");
        } else if (diam_scale > 0.13) {
            // shrink the terminal loops before sharpening the blend
            diam_scale *= 0.5;
            set_diameters(k);
        } else {
            n *= 2;
            if (n >= (1 << 20))
                throw InfeasibleClearance("build_curve_family: clearance unreachable");
        }
    }
    if (!ok) throw SpeedFloorUnachievable("build_curve_family: parameter search failed");

    // materialize: base-phase nodes, dense blend zone, terminal loops
    CurveFamily fam;
    fam.clearance = r;
    fam.min_speed = v_min;
    fam.k = k;
    fam.n = n;
    for (std::size_t i = 0; i < N; ++i) {
        std::vector<double> ts;
        const double t_blend0 = Tm / k - 1.0 / n;
        for (int g = 0; g < 512; ++g) ts.push_back(t_blend0 * g / 512);
        // base-route breakpoints, mapped through the speedup
        for (double s : base_paths[i].breakpoints()) {
            const double t = s * Tm / k;
            if (t > 0.0 && t < t_blend0) ts.push_back(t);
        }
        for (int g = 0; g <= 128; ++g)
            ts.push_back(t_blend0 + (Tm / k - t_blend0) * g / 128.0);
        const int loop_nodes = 48;
        for (int lp = 1; lp < k; ++lp)
            for (int g = 0; g < loop_nodes; ++g)
                ts.push_back(Tm * (lp + static_cast<double>(g) / loop_nodes) / k);
        ts.push_back(Tm);
        std::sort(ts.begin(), ts.end());
        ts.erase(std::unique(ts.begin(), ts.end(),
                             [&](double a, double b) { return b - a < 1e-15 * Tm; }),
                 ts.end());
        std::vector<PathJet> js(ts.size());
        for (std::size_t g = 0; g < ts.size(); ++g) js[g] = blended[i].at(ts[g]);
        // pin the endpoints exactly
        js.front().p = starts[i];
        js.back().p = ends[i];
        ControlPath main = ControlPath::from_jets(ts, js);

        if (cons[i].start_velocity) {
            ControlPath pre = detail::velocity_matching_loop(
                starts[i], *cons[i].start_velocity, main.derivative(0.0), v_min,
                0.45 * r, eps_v, 0.0);
            fam.curves.push_back(concat(pre, reparametrize(main, 0.0, Tm, eps_v, T)));
        } else {
            fam.curves.push_back(main);
        }
    }
    return fam;
}

}  // namespace vortex
