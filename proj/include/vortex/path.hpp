#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <functional>
#include <utility>
#include <vector>

#include "vortex/errors.hpp"
#include "vortex/vec2.hpp"

namespace vortex {

/// Position, velocity and acceleration of a planar curve at one instant.
struct PathJet {
    Vec2 p, v, a;
};

namespace detail {

/// One quintic Hermite piece on [t0, t1], stored as monomial coefficients in
/// the normalized variable u = (t - t0) / (t1 - t0). A quintic is pinned down
/// by the order-2 jets at both ends, so slicing a piece reproduces it exactly.
struct QuinticSegment {
    std::array<Vec2, 6> c{};

    static QuinticSegment from_jets(const PathJet& l, const PathJet& r, double h) {
        QuinticSegment s;
        const Vec2 p0 = l.p, p1 = r.p;
        const Vec2 v0 = l.v * h, v1 = r.v * h;
        const Vec2 a0 = l.a * (h * h), a1 = r.a * (h * h);
        const Vec2 d = p1 - p0;
        s.c[0] = p0;
        s.c[1] = v0;
        s.c[2] = 0.5 * a0;
        s.c[3] = 10.0 * d - 6.0 * v0 - 4.0 * v1 - 1.5 * a0 + 0.5 * a1;
        s.c[4] = -15.0 * d + 8.0 * v0 + 7.0 * v1 + 1.5 * a0 - a1;
        s.c[5] = 6.0 * d - 3.0 * (v0 + v1) - 0.5 * (a0 - a1);
        return s;
    }

    Vec2 eval(double u) const {
        Vec2 r = c[5];
        for (int m = 4; m >= 0; --m) r = r * u + c[m];
        return r;
    }

    /// k-th derivative with respect to u.
    Vec2 eval_derivative(double u, int k) const {
        Vec2 r{0.0, 0.0};
        for (int m = 5; m >= k; --m) {
            double f = 1.0;
            for (int j = 0; j < k; ++j) f *= (m - j);
            r = r * u + f * c[m];
        }
        return r;
    }
};

}  // namespace detail

/// Time-parametrized planar curve: continuous piecewise quintic with value
/// and derivative access, extended constantly outside its domain.
class ControlPath {
public:
    ControlPath() = default;

    /// Build from order-2 jets at strictly increasing times.
    static ControlPath from_jets(const std::vector<double>& times,
                                 const std::vector<PathJet>& jets) {
        ControlPath p;
        p.times_ = times;
        p.segments_.reserve(times.size() - 1);
        for (std::size_t i = 0; i + 1 < times.size(); ++i) {
            const double h = times[i + 1] - times[i];
            p.segments_.push_back(
                detail::QuinticSegment::from_jets(jets[i], jets[i + 1], h));
        }
        return p;
    }

    /// Build from positions and velocities; accelerations estimated by
    /// finite differences of the velocities. Where the grid carries a
    /// micro-gap pair bracketing a derivative kink, the difference is taken
    /// one-sided so the jump does not leak into the neighboring segments.
    static ControlPath from_samples(const std::vector<double>& times,
                                    const std::vector<Vec2>& pos,
                                    const std::vector<Vec2>& vel) {
        const std::size_t n = times.size();
        std::vector<PathJet> jets(n);
        for (std::size_t i = 0; i < n; ++i) {
            jets[i].p = pos[i];
            jets[i].v = vel[i];
            const double gl = i == 0 ? 0.0 : times[i] - times[i - 1];
            const double gr = i + 1 == n ? 0.0 : times[i + 1] - times[i];
            std::size_t lo = i, hi = i;
            if (gl > 0.0 && 100.0 * gl > gr) lo = i - 1;
            if (gr > 0.0 && 100.0 * gr > gl) hi = i + 1;
            const double dt = times[hi] - times[lo];
            jets[i].a = dt > 0.0 ? (vel[hi] - vel[lo]) / dt : Vec2{0.0, 0.0};
        }
        return from_jets(times, jets);
    }

    /// Sample an analytic curve given by its jet function on a uniform grid.
    static ControlPath sample(const std::function<PathJet(double)>& jet,
                              double t0, double t1, int nodes) {
        std::vector<double> ts(nodes);
        std::vector<PathJet> js(nodes);
        for (int i = 0; i < nodes; ++i) {
            ts[i] = t0 + (t1 - t0) * i / (nodes - 1);
            js[i] = jet(ts[i]);
        }
        ts.back() = t1;
        return from_jets(ts, js);
    }

    static ControlPath constant(Vec2 p, double t0, double t1) {
        return from_jets({t0, t1}, {{p, {0, 0}, {0, 0}}, {p, {0, 0}, {0, 0}}});
    }

    bool empty() const { return segments_.empty(); }
    double t_begin() const { return times_.front(); }
    double t_end() const { return times_.back(); }
    const std::vector<double>& breakpoints() const { return times_; }

    Vec2 value(double t) const { return eval(t, 0); }
    Vec2 derivative(double t) const { return eval(t, 1); }
    Vec2 second_derivative(double t) const { return eval(t, 2); }

    /// Derivative of any order (constantly extended outside the domain).
    Vec2 eval(double t, int order) const {
        if (t <= times_.front()) {
            if (order == 0) return segments_.front().eval(0.0);
            if (t < times_.front()) return {0.0, 0.0};
        }
        if (t >= times_.back()) {
            if (order == 0) return segments_.back().eval(1.0);
            if (t > times_.back()) return {0.0, 0.0};
            const double h = times_.back() - times_[times_.size() - 2];
            return segments_.back().eval_derivative(1.0, order) / std::pow(h, order);
        }
        const std::size_t i = locate(t);
        const double h = times_[i + 1] - times_[i];
        const double u = (t - times_[i]) / h;
        if (order == 0) return segments_[i].eval(u);
        return segments_[i].eval_derivative(u, order) / std::pow(h, order);
    }

    PathJet jet(double t) const { return {eval(t, 0), eval(t, 1), eval(t, 2)}; }

    /// Restriction to [a, b] within the domain; cuts are exact.
    ControlPath slice(double a, double b) const {
        std::vector<double> ts{a};
        std::vector<PathJet> js{jet_inside(a, +1)};
        for (std::size_t i = 0; i < times_.size(); ++i) {
            if (times_[i] > a && times_[i] < b) {
                ts.push_back(times_[i]);
                js.push_back(jet_inside(times_[i], +1));
            }
        }
        ts.push_back(b);
        js.push_back(jet_inside(b, -1));
        return from_jets(ts, js);
    }

    bool c1_flagged() const { return c0_only_; }
    void flag_c0_only() { c0_only_ = true; }

private:
    Vec2 eval_side(double t, int order, int side) const {
        std::size_t i = locate(t);
        if (side < 0 && i > 0 && t == times_[i]) i -= 1;
        const double h = times_[i + 1] - times_[i];
        const double u = (t - times_[i]) / h;
        if (order == 0) return segments_[i].eval(u);
        return segments_[i].eval_derivative(u, order) / std::pow(h, order);
    }

    PathJet jet_inside(double t, int side) const {
        return {eval_side(t, 0, side), eval_side(t, 1, side), eval_side(t, 2, side)};
    }

    std::size_t locate(double t) const {
        const auto it = std::upper_bound(times_.begin(), times_.end(), t);
        const std::size_t i = static_cast<std::size_t>(it - times_.begin());
        if (i == 0) return 0;
        return std::min(i - 1, segments_.size() - 1);
    }

    friend ControlPath reparametrize(const ControlPath&, double, double, double, double);
    friend ControlPath concat(const ControlPath&, const ControlPath&);
    friend ControlPath concat_many(const std::vector<ControlPath>&);

    std::vector<double> times_;
    std::vector<detail::QuinticSegment> segments_;
    bool c0_only_ = false;
};

/// Affine time change mapping [s0, s1] onto [t0, t1]; the image set is
/// unchanged, derivatives scale by (s1 - s0) / (t1 - t0).
inline ControlPath reparametrize(const ControlPath& p, double s0, double s1,
                                 double t0, double t1) {
    ControlPath out = p;
    const double scale = (t1 - t0) / (s1 - s0);
    for (double& t : out.times_) t = t0 + (t - s0) * scale;
    return out;
}

/// Linear-time join of consecutive paths; value continuity is required at
/// every junction, derivative jumps are kept (the spline is exact there).
inline ControlPath concat_many(const std::vector<ControlPath>& parts) {
    if (parts.empty()) throw VortexError("concat_many: empty");
    ControlPath out = parts.front();
    std::size_t total = 0;
    for (const auto& p : parts) total += p.times_.size();
    out.times_.reserve(total);
    out.segments_.reserve(total);
    for (std::size_t i = 1; i < parts.size(); ++i) {
        const ControlPath& p = parts[i];
        if (distance(out.segments_.back().eval(1.0), p.segments_.front().eval(0.0)) > 1e-9)
            throw DiscontinuousJoin("concat_many: value mismatch at junction");
        out.times_.insert(out.times_.end(), p.times_.begin() + 1, p.times_.end());
        out.segments_.insert(out.segments_.end(), p.segments_.begin(), p.segments_.end());
        out.c0_only_ = out.c0_only_ || p.c0_only_;
    }
    return out;
}

/// Join two paths meeting at p1.t_end() == p2.t_begin(). Values must agree
/// within 1e-9; if derivatives disagree beyond 1e-9 the result is flagged
/// C0-only and the caller is expected to mollify.
inline ControlPath concat(const ControlPath& p1, const ControlPath& p2) {
    const double a = p1.t_end();
    const Vec2 v1 = p1.value(a), v2 = p2.value(p2.t_begin());
    if (distance(v1, v2) > 1e-9)
        throw DiscontinuousJoin("concat: value mismatch at junction");
    ControlPath out;
    out.times_ = p1.times_;
    out.times_.insert(out.times_.end(), p2.times_.begin() + 1, p2.times_.end());
    out.segments_ = p1.segments_;
    out.segments_.insert(out.segments_.end(), p2.segments_.begin(), p2.segments_.end());
    const Vec2 d1 = p1.eval(a, 1), d2 = p2.eval(p2.t_begin() + 0.0, 1);
    out.c0_only_ = p1.c0_only_ || p2.c0_only_ || distance(d1, d2) > 1e-9;
    return out;
}

}  // namespace vortex
