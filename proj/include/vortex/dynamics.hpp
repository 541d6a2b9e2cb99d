#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "vortex/errors.hpp"
#include "vortex/kernel.hpp"
#include "vortex/path.hpp"
#include "vortex/vec2.hpp"

namespace vortex {

/// Positions and intensities of the N free vortices. Intensities are
/// nonzero and positions pairwise distinct.
struct VortexConfig {
    Vec2List positions;
    std::vector<double> intensities;

    std::size_t size() const { return positions.size(); }

    void validate() const {
        if (positions.size() != intensities.size())
            throw VortexError("VortexConfig: size mismatch");
        for (double g : intensities)
            if (g == 0.0) throw VortexError("VortexConfig: zero intensity");
        for (std::size_t i = 0; i < positions.size(); ++i)
            for (std::size_t j = i + 1; j < positions.size(); ++j)
                if (positions[i] == positions[j])
                    throw VortexError("VortexConfig: coincident vortices");
    }

    double min_pairwise_distance() const {
        double m = std::numeric_limits<double>::infinity();
        for (std::size_t i = 0; i < positions.size(); ++i)
            for (std::size_t j = i + 1; j < positions.size(); ++j)
                m = std::min(m, distance(positions[i], positions[j]));
        return m;
    }

    double diameter() const {
        double m = 0.0;
        for (std::size_t i = 0; i < positions.size(); ++i)
            for (std::size_t j = i + 1; j < positions.size(); ++j)
                m = std::max(m, distance(positions[i], positions[j]));
        return m;
    }
};

/// Prescribed control trajectories with their intensities; M is 1 for the
/// single-control system and N for the fully actuated one.
struct ControlSet {
    std::vector<ControlPath> paths;
    std::vector<double> intensities;

    std::size_t size() const { return paths.size(); }

    Vec2List positions(double t) const {
        Vec2List out(paths.size());
        for (std::size_t k = 0; k < paths.size(); ++k) out[k] = paths[k].value(t);
        return out;
    }
};

enum class Method { RK4Fixed, RK45Adaptive };

struct IntegratorSettings {
    Method method = Method::RK4Fixed;
    double dt = 0.0;          // 0: pick from the configuration
    double tolerance = 1e-10; // adaptive error target
    double guard_radius = 0.0;
    double max_dt = 0.0;      // adaptive step cap; 0: span / 100
};

/// Sampled solution of one of the vortex systems. States carry the RHS at
/// each accepted step so that dense output is cubic Hermite.
struct Trajectory {
    std::vector<double> times;
    std::vector<Vec2List> states;
    std::vector<Vec2List> derivatives;
    std::vector<Vec2List> control_samples;
    std::vector<double> intensities;
    std::vector<double> control_intensities;

    std::size_t steps() const { return times.size(); }
    const Vec2List& final_state() const { return states.back(); }

    Vec2List state_at(double t) const {
        if (t <= times.front()) return states.front();
        if (t >= times.back()) return states.back();
        const auto it = std::upper_bound(times.begin(), times.end(), t);
        const std::size_t i = static_cast<std::size_t>(it - times.begin()) - 1;
        const double h = times[i + 1] - times[i];
        const double u = (t - times[i]) / h;
        const double h00 = (1 + 2 * u) * (1 - u) * (1 - u);
        const double h10 = u * (1 - u) * (1 - u);
        const double h01 = u * u * (3 - 2 * u);
        const double h11 = u * u * (u - 1);
        Vec2List out(states[i].size());
        for (std::size_t k = 0; k < out.size(); ++k)
            out[k] = h00 * states[i][k] + (h * h10) * derivatives[i][k] +
                     h01 * states[i + 1][k] + (h * h11) * derivatives[i + 1][k];
        return out;
    }

    /// Smallest vortex-vortex distance over the stored grid.
    double min_mutual_separation() const {
        double m = std::numeric_limits<double>::infinity();
        for (const auto& s : states)
            for (std::size_t i = 0; i < s.size(); ++i)
                for (std::size_t j = i + 1; j < s.size(); ++j)
                    m = std::min(m, distance(s[i], s[j]));
        return m;
    }

    /// Smallest vortex-control distance over the stored grid.
    double min_control_separation() const {
        double m = std::numeric_limits<double>::infinity();
        for (std::size_t s = 0; s < states.size(); ++s)
            for (const Vec2& x : states[s])
                for (const Vec2& z : control_samples[s])
                    m = std::min(m, distance(x, z));
        return m;
    }
};

namespace detail {

inline void check_distance(double d2, double guard, int a, int b, double t) {
    if (d2 < 1e-280 || d2 <= guard * guard)
        throw CollisionError("vortex collision at t=" + std::to_string(t), a, b, t);
}

/// RHS of the controlled system for every vortex at once.
inline Vec2List field(const VortexConfig& cfg, const ControlSet* controls,
                      const Vec2List& x, double t, double guard) {
    const std::size_t n = x.size();
    Vec2List out(n, Vec2{0.0, 0.0});
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) {
            const Vec2 d = x[i] - x[j];
            check_distance(d.norm2(), guard, static_cast<int>(i), static_cast<int>(j), t);
            const Vec2 k = perp(d) / d.norm2();
            out[i] += cfg.intensities[j] * k;
            out[j] -= cfg.intensities[i] * k;  // K is odd
        }
    }
    if (controls) {
        for (std::size_t k = 0; k < controls->paths.size(); ++k) {
            const Vec2 z = controls->paths[k].value(t);
            for (std::size_t i = 0; i < n; ++i) {
                const Vec2 d = x[i] - z;
                check_distance(d.norm2(), guard, static_cast<int>(i),
                               -static_cast<int>(k) - 1, t);
                out[i] += controls->intensities[k] * perp(d) / d.norm2();
            }
        }
    }
    return out;
}

}  // namespace detail

/// Velocity of vortex i under the other free vortices.
inline Vec2 rhs_free(const VortexConfig& cfg, std::size_t i, double guard = 0.0) {
    Vec2 out{0.0, 0.0};
    for (std::size_t j = 0; j < cfg.positions.size(); ++j) {
        if (j == i) continue;
        const Vec2 d = cfg.positions[i] - cfg.positions[j];
        detail::check_distance(d.norm2(), guard, static_cast<int>(i),
                               static_cast<int>(j), 0.0);
        out += cfg.intensities[j] * perp(d) / d.norm2();
    }
    return out;
}

/// Velocity of vortex i under the other vortices plus the controls at time t.
inline Vec2 rhs_controlled(const VortexConfig& cfg, const ControlSet& controls,
                           double t, std::size_t i, double guard = 0.0) {
    Vec2 out = rhs_free(cfg, i, guard);
    for (std::size_t k = 0; k < controls.paths.size(); ++k) {
        const Vec2 d = cfg.positions[i] - controls.paths[k].value(t);
        detail::check_distance(d.norm2(), guard, static_cast<int>(i),
                               -static_cast<int>(k) - 1, t);
        out += controls.intensities[k] * perp(d) / d.norm2();
    }
    return out;
}

struct ConservedQuantities {
    Vec2 impulse;
    double angular_impulse;
    double hamiltonian;
};

inline ConservedQuantities conserved_quantities(const VortexConfig& cfg) {
    ConservedQuantities q{{0.0, 0.0}, 0.0, 0.0};
    const std::size_t n = cfg.positions.size();
    for (std::size_t i = 0; i < n; ++i) {
        q.impulse += cfg.intensities[i] * cfg.positions[i];
        q.angular_impulse += cfg.intensities[i] * cfg.positions[i].norm2();
        for (std::size_t j = i + 1; j < n; ++j) {
            const double d = distance(cfg.positions[i], cfg.positions[j]);
            if (d == 0.0)
                throw CollisionError("coincident points", static_cast<int>(i),
                                     static_cast<int>(j), 0.0);
            q.hamiltonian -= cfg.intensities[i] * cfg.intensities[j] * std::log(d);
        }
    }
    return q;
}

/// Step size rule for the fixed-step integrator: resolve the fastest
/// two-body rotation present in the initial data.
inline double default_time_step(const VortexConfig& cfg, const ControlSet* controls,
                                double t0, double span) {
    double dmin = cfg.min_pairwise_distance();
    if (controls) {
        for (const auto& p : controls->paths)
            for (const Vec2& x : cfg.positions)
                dmin = std::min(dmin, distance(x, p.value(t0)));
    }
    double gmax = 0.0;
    for (double g : cfg.intensities) gmax = std::max(gmax, std::abs(g));
    if (controls)
        for (double g : controls->intensities) gmax = std::max(gmax, std::abs(g));
    double dt = 1e-3 * span;
    if (std::isfinite(dmin) && gmax > 0.0)
        dt = std::min(dt, 0.05 * dmin * dmin / gmax);
    return dt;
}

/// Integrate the free (controls == nullptr) or controlled system over
/// [t0, t1]. Throws CollisionError when a mutual or vortex-control distance
/// falls below the guard radius, StepFailure on adaptive step underflow.
inline Trajectory integrate(const VortexConfig& cfg0, const ControlSet* controls,
                            double t0, double t1, IntegratorSettings settings = {}) {
    cfg0.validate();
    const double span = t1 - t0;
    if (!(span > 0.0)) throw VortexError("integrate: empty horizon");
    const double guard = settings.guard_radius;

    Trajectory traj;
    traj.intensities = cfg0.intensities;
    if (controls) traj.control_intensities = controls->intensities;

    auto rhs = [&](double t, const Vec2List& x) {
        return detail::field(cfg0, controls, x, t, guard);
    };
    auto record = [&](double t, const Vec2List& x, const Vec2List& dx) {
        traj.times.push_back(t);
        traj.states.push_back(x);
        traj.derivatives.push_back(dx);
        traj.control_samples.push_back(controls ? controls->positions(t) : Vec2List{});
    };

    Vec2List x = cfg0.positions;
    const std::size_t n = x.size();

    if (settings.method == Method::RK4Fixed) {
        double dt = settings.dt > 0.0 ? settings.dt
                                      : default_time_step(cfg0, controls, t0, span);
        const std::size_t steps = static_cast<std::size_t>(std::ceil(span / dt - 1e-12));
        dt = span / static_cast<double>(steps);
        Vec2List k1 = rhs(t0, x);
        record(t0, x, k1);
        for (std::size_t s = 0; s < steps; ++s) {
            const double t = t0 + span * static_cast<double>(s) / static_cast<double>(steps);
            const double tn = t0 + span * static_cast<double>(s + 1) / static_cast<double>(steps);
            const double h = tn - t;
            Vec2List y(n), k2(n), k3(n), k4(n);
            for (std::size_t i = 0; i < n; ++i) y[i] = x[i] + 0.5 * h * k1[i];
            k2 = rhs(t + 0.5 * h, y);
            for (std::size_t i = 0; i < n; ++i) y[i] = x[i] + 0.5 * h * k2[i];
            k3 = rhs(t + 0.5 * h, y);
            for (std::size_t i = 0; i < n; ++i) y[i] = x[i] + h * k3[i];
            k4 = rhs(tn, y);
            for (std::size_t i = 0; i < n; ++i)
                x[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
            k1 = rhs(tn, x);
            record(tn, x, k1);
        }
        return traj;
    }

    // Dormand-Prince 5(4) with a standard controller.
    static const double A[7][6] = {
        {},
        {1.0 / 5},
        {3.0 / 40, 9.0 / 40},
        {44.0 / 45, -56.0 / 15, 32.0 / 9},
        {19372.0 / 6561, -25360.0 / 2187, 64448.0 / 6561, -212.0 / 729},
        {9017.0 / 3168, -355.0 / 33, 46732.0 / 5247, 49.0 / 176, -5103.0 / 18656},
        {35.0 / 384, 0.0, 500.0 / 1113, 125.0 / 192, -2187.0 / 6784, 11.0 / 84}};
    static const double C[7] = {0, 1.0 / 5, 3.0 / 10, 4.0 / 5, 8.0 / 9, 1.0, 1.0};
    static const double E[7] = {71.0 / 57600, 0.0, -71.0 / 16695, 71.0 / 1920,
                                -17253.0 / 339200, 22.0 / 525, -1.0 / 40};

    const double tol = settings.tolerance > 0.0 ? settings.tolerance : 1e-10;
    const double hmax = settings.max_dt > 0.0 ? settings.max_dt : span / 100.0;
    double h = std::min(hmax, settings.dt > 0.0 ? settings.dt : span / 1000.0);
    double t = t0;
    Vec2List k[7];
    k[0] = rhs(t, x);
    record(t, x, k[0]);
    while (t < t1) {
        h = std::min(h, t1 - t);
        if (h < 1e-14 * span) throw StepFailure("integrate: step underflow");
        bool rejected = false;
        Vec2List xn(n);
        for (int stage = 1; stage < 7; ++stage) {
            Vec2List y = x;
            for (int p = 0; p < stage; ++p)
                for (std::size_t i = 0; i < n; ++i) y[i] += h * A[stage][p] * k[p][i];
            k[stage] = rhs(t + C[stage] * h, y);
            if (stage == 6) xn = y;  // FSAL: stage 7 input is the solution
        }
        double err = 0.0;
        double scale = 1.0;
        for (std::size_t i = 0; i < n; ++i) scale = std::max(scale, x[i].norm());
        for (std::size_t i = 0; i < n; ++i) {
            Vec2 e{0.0, 0.0};
            for (int p = 0; p < 7; ++p) e += E[p] * k[p][i];
            err = std::max(err, h * e.norm() / scale);
        }
        if (err > tol) {
            rejected = true;
            h *= std::max(0.2, 0.9 * std::pow(tol / err, 0.2));
        }
        if (!rejected) {
            t += h;
            x = xn;
            k[0] = k[6];  // FSAL
            record(t, x, k[0]);
            h = std::min(hmax, h * std::min(5.0, 0.9 * std::pow(tol / std::max(err, 1e-300), 0.2)));
        }
    }
    return traj;
}

}  // namespace vortex
