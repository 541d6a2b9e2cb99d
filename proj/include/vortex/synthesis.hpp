#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <vector>

#include "vortex/curves.hpp"
#include "vortex/dynamics.hpp"
#include "vortex/errors.hpp"
#include "vortex/geometry.hpp"
#include "vortex/inversion.hpp"
#include "vortex/rng.hpp"
#include "vortex/vec2.hpp"

namespace vortex {

/// Reference curves for the vortices, control trajectories realizing them,
/// and the measured separation data of the construction.
struct SynthesisPlan {
    std::vector<ControlPath> reference_curves;  // the trajectories the vortices follow
    std::vector<ControlPath> controls;
    std::vector<double> gamma;
    std::vector<double> gamma_c;
    double t0 = 0.0, t1 = 0.0;
    double r_bar = 0.0;
    double v_min = 0.0;
    double min_control_gap = 0.0;  // min over t, j, k of |y_k - ref_j|
    double min_curve_gap = 0.0;    // min over t, i != j of |ref_i - ref_j|
    double approach_duration = 0.0;
    double approach_displacement = 0.0;
    double approach_bound = 0.0;  // guaranteed cap on the displacement

    std::size_t size() const { return reference_curves.size(); }

    ControlSet control_set() const { return {controls, gamma_c}; }

    FieldContext context_at(double t) const {
        Vec2List x(size());
        for (std::size_t i = 0; i < size(); ++i) x[i] = reference_curves[i].value(t);
        return {x, gamma, gamma_c};
    }
};

namespace detail {

struct Mat2 {
    double a = 0, b = 0, c = 0, d = 0;
    Vec2 apply(Vec2 v) const { return {a * v.x + b * v.y, c * v.x + d * v.y}; }
};

/// Derivative of the velocity kernel at offset d.
inline Mat2 kernel_jacobian(Vec2 d) {
    const double s = d.norm2();
    const Vec2 pd = perp(d);
    Mat2 m;
    m.a = -2.0 * pd.x * d.x / (s * s);
    m.b = -1.0 / s - 2.0 * pd.x * d.y / (s * s);
    m.c = 1.0 / s - 2.0 * pd.y * d.x / (s * s);
    m.d = -2.0 * pd.y * d.y / (s * s);
    return m;
}

/// Exact control velocities along the curves by implicit differentiation of
/// the pointwise identity field(curves, y) = curve velocity.
inline Vec2List control_velocities(const FieldContext& ctx, const Vec2List& y,
                                   const Vec2List& dx, const Vec2List& ddx) {
    const std::size_t n = ctx.size();
    std::vector<double> A(4 * n * n, 0.0);
    std::vector<double> rhs(2 * n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        Vec2 r = ddx[i];
        for (std::size_t j = 0; j < n; ++j) {
            if (j != i) {
                const Mat2 m = kernel_jacobian(ctx.anchors[i] - ctx.anchors[j]);
                r -= ctx.gamma[j] * m.apply(dx[i] - dx[j]);
            }
            const Mat2 mk = kernel_jacobian(ctx.anchors[i] - y[j]);
            r -= ctx.gamma_c[j] * mk.apply(dx[i]);
            // block (i, j) of dF/dy
            const double f = -ctx.gamma_c[j];
            A[(2 * i) * 2 * n + 2 * j] = f * mk.a;
            A[(2 * i) * 2 * n + 2 * j + 1] = f * mk.b;
            A[(2 * i + 1) * 2 * n + 2 * j] = f * mk.c;
            A[(2 * i + 1) * 2 * n + 2 * j + 1] = f * mk.d;
        }
        rhs[2 * i] = r.x;
        rhs[2 * i + 1] = r.y;
    }
    const std::vector<double> s = solve_dense(std::move(A), std::move(rhs));
    Vec2List out(n);
    for (std::size_t i = 0; i < n; ++i) out[i] = {s[2 * i], s[2 * i + 1]};
    return out;
}

/// Pointwise inversion of the field along reference curves, warm-started in
/// time, with exact velocities and finite-difference accelerations.
inline std::vector<ControlPath> controls_along_curves(
    const std::vector<ControlPath>& curves, const std::vector<double>& gamma,
    const std::vector<double>& gamma_c, const SpeedFloor& floor,
    const Vec2List* start_hint, int min_nodes = 2048) {
    const std::size_t n = curves.size();
    const double t0 = curves.front().t_begin(), t1 = curves.front().t_end();
    const double delta = 5e-7 * (t1 - t0);   // kink bracketing offset
    const double h_fd = 5e-8 * (t1 - t0);    // acceleration stencil, < delta

    // the controls orbit their anchors at the turning rate of the curve
    // velocity; the sampling must resolve that rate
    double omega = 0.0;
    for (const auto& c : curves)
        for (int g = 0; g <= 8192; ++g) {
            const double t = t0 + (t1 - t0) * g / 8192;
            const Vec2 v = c.eval(t, 1), a = c.eval(t, 2);
            const double v2 = v.norm2();
            if (v2 > 0.0) omega = std::max(omega, a.norm() / std::sqrt(v2));
        }
    const int nodes = std::clamp(
        static_cast<int>(std::ceil((t1 - t0) * omega / 0.04)), min_nodes, 60000);

    std::vector<double> all_breaks;
    for (const auto& c : curves)
        for (double b : c.breakpoints())
            if (b > t0 + delta && b < t1 - delta) all_breaks.push_back(b);
    std::sort(all_breaks.begin(), all_breaks.end());
    auto near_break = [&](double t) {
        const auto it = std::lower_bound(all_breaks.begin(), all_breaks.end(), t);
        if (it != all_breaks.end() && *it - t < delta) return true;
        return it != all_breaks.begin() && t - *(it - 1) < delta;
    };

    std::vector<double> ts;
    for (double b : all_breaks) {
        ts.push_back(b - delta);
        ts.push_back(b + delta);
    }
    for (int g = 0; g <= nodes; ++g) {
        const double t = t0 + (t1 - t0) * g / nodes;
        if (g == 0 || g == nodes || !near_break(t)) ts.push_back(t);
    }
    std::sort(ts.begin(), ts.end());
    ts.erase(std::unique(ts.begin(), ts.end(),
                         [&](double a, double b) { return b - a < 0.25 * delta; }),
             ts.end());

    const double tol = std::min(5e-10, 1e-11 * std::max(1.0, floor.v_min));
    std::vector<std::vector<Vec2>> pos(n, std::vector<Vec2>(ts.size()));
    std::vector<std::vector<Vec2>> vel(n, std::vector<Vec2>(ts.size()));
    std::vector<std::vector<Vec2>> acc(n, std::vector<Vec2>(ts.size()));
    Vec2List warm;
    if (start_hint) warm = *start_hint;
    auto solve_at = [&](double t, const Vec2List* seed) {
        Vec2List x(n), dx(n), ddx(n);
        for (std::size_t i = 0; i < n; ++i) {
            const PathJet j = curves[i].jet(t);
            x[i] = j.p;
            dx[i] = j.v;
            ddx[i] = j.a;
        }
        const FieldContext ctx{x, gamma, gamma_c};
        const Vec2List y = invert_F(ctx, dx, &floor, seed, tol);
        return std::pair<Vec2List, Vec2List>(y, control_velocities(ctx, y, dx, ddx));
    };
    for (std::size_t g = 0; g < ts.size(); ++g) {
        const double t = ts[g];
        const auto [y, yd] = solve_at(t, warm.empty() ? nullptr : &warm);
        // accelerations from a tight velocity stencil, exact to the implicit
        // solve and independent of the node spacing
        const double lo = std::max(t - h_fd, t0), hi = std::min(t + h_fd, t1);
        const auto [yl, vl] = solve_at(lo, &y);
        const auto [yr, vr] = solve_at(hi, &y);
        (void)yl;
        (void)yr;
        for (std::size_t i = 0; i < n; ++i) {
            pos[i][g] = y[i];
            vel[i][g] = yd[i];
            acc[i][g] = (vr[i] - vl[i]) / (hi - lo);
        }
        warm = y;
    }
    std::vector<ControlPath> out;
    for (std::size_t i = 0; i < n; ++i) {
        std::vector<PathJet> jets(ts.size());
        for (std::size_t g = 0; g < ts.size(); ++g)
            jets[g] = {pos[i][g], vel[i][g], acc[i][g]};
        out.push_back(ControlPath::from_jets(ts, jets));
    }
    return out;
}

/// Grid measurement of the plan separations; fills r_bar and the gaps.
inline void measure_plan(SynthesisPlan& plan, int grid = 10000) {
    const std::size_t n = plan.size();
    double gap_yx = std::numeric_limits<double>::infinity();
    double gap_xx = std::numeric_limits<double>::infinity();
    for (int g = 0; g <= grid; ++g) {
        const double t = plan.t0 + (plan.t1 - plan.t0) * g / grid;
        Vec2List x(n), y(n);
        for (std::size_t i = 0; i < n; ++i) {
            x[i] = plan.reference_curves[i].value(t);
            y[i] = plan.controls[i].value(t);
        }
        for (std::size_t j = 0; j < n; ++j)
            for (std::size_t k = 0; k < n; ++k)
                gap_yx = std::min(gap_yx, distance(y[k], x[j]));
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = i + 1; j < n; ++j)
                gap_xx = std::min(gap_xx, distance(x[i], x[j]));
    }
    plan.min_control_gap = gap_yx;
    plan.min_curve_gap = gap_xx;
    plan.r_bar = 0.5 * gap_yx;
    if (n > 1) plan.r_bar = std::min(plan.r_bar, 0.25 * gap_xx);
    plan.r_bar *= 1.0 - 1e-12;
}

}  // namespace detail

/// Place control start positions on a wide circle around the scene.
inline Vec2List auto_control_starts(const Vec2List& x0, const Vec2List& xf,
                                    std::uint64_t seed) {
    Vec2 centroid{0, 0};
    double diam = 0.0;
    Vec2List all = x0;
    all.insert(all.end(), xf.begin(), xf.end());
    for (const Vec2& p : all) centroid += p / static_cast<double>(all.size());
    for (std::size_t i = 0; i < all.size(); ++i)
        for (std::size_t j = i + 1; j < all.size(); ++j)
            diam = std::max(diam, distance(all[i], all[j]));
    if (diam == 0.0) diam = 1.0;
    Rng rng(seed, "auto-place");
    const double phase = rng.angle();
    Vec2List out(x0.size());
    for (std::size_t k = 0; k < x0.size(); ++k) {
        const double ang = phase + 2.0 * M_PI * static_cast<double>(k) / x0.size();
        out[k] = centroid + 10.0 * diam * Vec2{std::cos(ang), std::sin(ang)};
    }
    return out;
}

struct SynthesisOptions {
    std::uint64_t seed = 0;
    int calibration_samples = 8;
    int max_floor_retries = 4;
};

/// Drive x0 to xf in time T with one control per vortex. Builds reference
/// curves with a calibrated speed floor, inverts the field along them, and
/// when the requested control starts are far from the vortices prepends a
/// short approach phase that carries the controls into range.
inline SynthesisPlan synthesize_N(const Vec2List& x0, const Vec2List& xf,
                                  std::optional<Vec2List> y0, double T,
                                  const std::vector<double>& gamma,
                                  const std::vector<double>& gamma_c,
                                  SynthesisOptions opts = {}) {
    const std::size_t n = x0.size();
    if (xf.size() != n || gamma.size() != n || gamma_c.size() != n)
        throw VortexError("synthesize_N: size mismatch");
    VortexConfig cfg0{x0, gamma};
    cfg0.validate();
    for (double g : gamma_c)
        if (g == 0.0) throw VortexError("synthesize_N: zero control intensity");

    const Vec2List starts_y = y0 ? *y0 : auto_control_starts(x0, xf, opts.seed);
    if (starts_y.size() != n) throw VortexError("synthesize_N: control count mismatch");

    // base routing fixes the clearance scale; the floor is calibrated on
    // contexts sampled along the base routes
    BaseRoutes base = route_base_curves(x0, xf);
    std::vector<FieldContext> family;
    for (int s = 0; s < opts.calibration_samples; ++s) {
        Vec2List anchors(n);
        for (std::size_t i = 0; i < n; ++i) {
            const auto& route = base.routes[i];
            anchors[i] = route.point_at(route.length() * s /
                                        std::max(1, opts.calibration_samples - 1));
        }
        bool distinct = true;
        for (std::size_t i = 0; i < n && distinct; ++i)
            for (std::size_t j = i + 1; j < n; ++j)
                if (anchors[i] == anchors[j]) distinct = false;
        if (distinct) family.push_back({anchors, gamma, gamma_c});
    }
    SpeedFloor floor = calibrate_speed_floor(family, opts.seed);

    for (int retry = 0;; ++retry) {
        try {
            SynthesisPlan plan;
            plan.gamma = gamma;
            plan.gamma_c = gamma_c;
            plan.v_min = floor.v_min;
            plan.t0 = 0.0;
            plan.t1 = T;

            // are the requested control starts already in range?
            const FieldContext ctx0{x0, gamma, gamma_c};
            bool in_range = true;
            Vec2List v0(n);
            try {
                v0 = F_full(ctx0, starts_y);
            } catch (const Coincidence&) {
                in_range = false;
            }
            if (in_range)
                for (std::size_t i = 0; i < n; ++i)
                    if (v0[i].norm() < 1.05 * floor.v_min) in_range = false;

            Vec2List x_start = x0;
            Vec2List y_start = starts_y;
            double eps = 0.0;
            Trajectory approach_traj;
            std::vector<ControlPath> approach_controls;
            if (!in_range) {
                // approach phase: carry each control near its vortex quickly
                double r_hat = 0.0;
                Vec2List targets(n);
                const AdmissibleRadii rad = admissible_radii(ctx0);
                double r_cap = cfg0.min_pairwise_distance() / 4.0;
                if (!std::isfinite(r_cap) || r_cap <= 0.0) r_cap = 1.0;
                for (std::size_t i = 0; i < n; ++i)
                    if (std::isfinite(rad.R[i])) r_cap = std::min(r_cap, rad.R[i]);
                Rng rng(opts.seed, "approach-direction");
                const double base_ang = rng.angle();
                for (int shrink = 0; shrink < 30; ++shrink) {
                    r_hat = r_cap * std::pow(0.5, shrink);
                    for (std::size_t i = 0; i < n; ++i) {
                        const double ang =
                            base_ang + 2.0 * M_PI * static_cast<double>(i) / n;
                        targets[i] =
                            x0[i] + 0.5 * r_hat * Vec2{std::cos(ang), std::sin(ang)};
                    }
                    const Vec2List f = F_full(ctx0, targets);
                    bool strong = true;
                    for (std::size_t i = 0; i < n; ++i)
                        if (f[i].norm() < 2.0 * floor.v_min) strong = false;
                    if (strong) break;
                }
                double r_tilde = 0.25 * r_hat;
                for (std::size_t i = 0; i < n; ++i)
                    for (std::size_t j = 0; j < n; ++j) {
                        r_tilde = std::min(r_tilde, 0.5 * distance(starts_y[i], x0[j]));
                        if (i != j)
                            r_tilde =
                                std::min({r_tilde, 0.25 * distance(x0[i], x0[j]),
                                          0.25 * distance(starts_y[i], starts_y[j])});
                    }
                if (r_tilde <= 0.0)
                    throw InfeasibleClearance("synthesize_N: controls start on vortices");

                double v_inf = 0.0;
                double gc_sum = 0.0, g_sum = 0.0;
                for (std::size_t j = 0; j < n; ++j) gc_sum += 2.0 * std::abs(gamma_c[j]) / r_tilde;
                for (std::size_t i = 0; i < n; ++i) {
                    double s = gc_sum;
                    for (std::size_t j = 0; j < n; ++j)
                        if (j != i) s += 2.0 * std::abs(gamma[j]) / r_tilde;
                    v_inf = std::max(v_inf, s);
                }
                (void)g_sum;
                plan.approach_bound = 0.0;
                eps = std::min(r_tilde / (8.0 * v_inf), 0.1 * T);
                plan.approach_bound = eps * v_inf;

                std::vector<Disc> obstacles;
                for (std::size_t j = 0; j < n; ++j)
                    obstacles.push_back({x0[j], r_tilde});
                for (std::size_t k = 0; k < n; ++k) {
                    ControlPath leg =
                        transition_curve(starts_y[k], targets[k], obstacles, eps);
                    approach_controls.push_back(leg);
                }
                ControlSet aset{approach_controls, gamma_c};
                IntegratorSettings is;
                is.method = Method::RK45Adaptive;
                is.tolerance = 1e-12;
                is.guard_radius = r_tilde / 4.0;
                approach_traj = integrate(cfg0, &aset, 0.0, eps, is);
                x_start = approach_traj.final_state();
                y_start = targets;
                plan.approach_duration = eps;
                plan.approach_displacement = tuple_norm(x_start - x0);
                if (plan.approach_displacement > plan.approach_bound)
                    throw VortexError("synthesize_N: approach displacement bound violated");
                v0 = F_full({x_start, gamma, gamma_c}, y_start);
                for (std::size_t i = 0; i < n; ++i)
                    if (v0[i].norm() < floor.v_min)
                        throw NoConvergence("synthesize_N: approach left floor unmet");
            }

            // main curves with prescribed start velocities
            const std::vector<double> g_bounds = coupling_bounds(family);
            std::vector<CurveConstraints> cons(n);
            for (std::size_t i = 0; i < n; ++i) {
                cons[i].start = x_start[i];
                cons[i].end = xf[i];
                cons[i].start_velocity = v0[i];
                cons[i].min_speed = floor.v_min;
                cons[i].clearance = 0.0;
                cons[i].horizon = T - eps;
                cons[i].intensity = std::abs(gamma_c[i]);
                cons[i].coupling_bound = n > 1 ? g_bounds[i] : 0.0;
            }
            CurveFamily fam = build_curve_family(x_start, xf, cons);
            std::vector<ControlPath> curves;
            for (auto& c : fam.curves) curves.push_back(reparametrize(c, 0.0, T - eps, eps, T));

            std::vector<ControlPath> controls = detail::controls_along_curves(
                curves, gamma, gamma_c, floor, &y_start);

            if (eps > 0.0) {
                for (std::size_t i = 0; i < n; ++i) {
                    std::vector<Vec2> ps, vs;
                    for (std::size_t s = 0; s < approach_traj.times.size(); ++s) {
                        ps.push_back(approach_traj.states[s][i]);
                        vs.push_back(approach_traj.derivatives[s][i]);
                    }
                    ControlPath drift =
                        ControlPath::from_samples(approach_traj.times, ps, vs);
                    plan.reference_curves.push_back(concat(drift, curves[i]));
                    plan.controls.push_back(concat(approach_controls[i], controls[i]));
                }
            } else {
                plan.reference_curves = curves;
                plan.controls = controls;
            }
            detail::measure_plan(plan);
            return plan;
        } catch (const NoConvergence&) {
            if (retry >= opts.max_floor_retries) throw;
            for (double& a : floor.a) a *= 2.0;
            floor.v_min *= 2.0;
        }
    }
}

/// Simulate the fully actuated system under a plan's controls.
inline Trajectory simulate_plan(const SynthesisPlan& plan, const Vec2List& x0,
                                IntegratorSettings settings = {}) {
    if (settings.guard_radius == 0.0 && plan.r_bar > 0.0)
        settings.guard_radius = plan.r_bar / 8.0;
    if (settings.method == Method::RK4Fixed && settings.dt == 0.0) {
        settings.method = Method::RK45Adaptive;
        settings.tolerance = 3e-13;
        settings.max_dt = (plan.t1 - plan.t0) / 2000.0;
    }
    ControlSet cs = plan.control_set();
    return integrate({x0, plan.gamma}, &cs, plan.t0, plan.t1, settings);
}

/// Containment geometry of the local straight-line construction.
struct LocalGeometry {
    double D = 0.0;
    double tau = 0.0;
    double rho = 0.0;
    double v_min = 0.0;
    std::vector<Cone> cones;        // vortex containment
    std::vector<Stadium> stadiums;  // control containment
    double min_set_distance = 0.0;
};

/// Build and certify the cones and stadiums for targets xf_bar and starting
/// points x0_bar, with scale parameter D.
inline LocalGeometry local_geometry(const Vec2List& xf_bar, const Vec2List& x0_bar,
                                    double D, double v_min,
                                    const std::vector<double>& gamma_c) {
    const std::size_t n = xf_bar.size();
    if (x0_bar.size() != n || gamma_c.size() != n)
        throw VortexError("local_geometry: size mismatch");
    double min_sep = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j)
            min_sep = std::min(min_sep, distance(xf_bar[i], xf_bar[j]));
    double min_gc = std::numeric_limits<double>::infinity();
    for (double g : gamma_c) min_gc = std::min(min_gc, std::abs(g));

    if (n > 1 && !(D < min_sep / 8.0))
        throw DTooLarge("local_geometry: D must be below an eighth of the target separation");
    if (!(D <= 0.375 * min_gc / v_min))
        throw DTooLarge("local_geometry: D violates the speed-floor smallness condition");

    LocalGeometry g;
    g.D = D;
    g.tau = D * D / min_gc;
    g.rho = std::min(D / 8.0, D * D * D);
    g.v_min = v_min;
    for (std::size_t i = 0; i < n; ++i) {
        g.cones.push_back({x0_bar[i], {xf_bar[i], g.rho}});
        const Vec2 d = xf_bar[i] - x0_bar[i];
        const Vec2 offset = gamma_c[i] * g.tau * perp(d) / d.norm2();
        g.stadiums.push_back({x0_bar[i] + offset, xf_bar[i] + offset, D / 8.0});
    }

    // all 2N sets must be pairwise disjoint
    double min_dist = std::numeric_limits<double>::infinity();
    auto seed_point = [&](std::size_t i) { return xf_bar[i]; };
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            if (i < j) {
                min_dist = std::min(min_dist, convex_distance(g.cones[i], g.cones[j], seed_point(j)));
                min_dist = std::min(min_dist,
                                    convex_distance(g.stadiums[i], g.stadiums[j], seed_point(j)));
            }
            if (i != j)
                min_dist = std::min(min_dist,
                                    convex_distance(g.cones[i], g.stadiums[j], seed_point(j)));
            else
                min_dist = std::min(min_dist,
                                    convex_distance(g.cones[i], g.stadiums[i], seed_point(i)));
        }
    }
    g.min_set_distance = min_dist;
    if (!(min_dist > 0.0))
        throw DTooLarge("local_geometry: containment sets are not disjoint");
    return g;
}

/// Pick the largest D in a halving grid that yields a certified geometry.
inline LocalGeometry pick_local_geometry(const Vec2List& xf_bar,
                                         const Vec2List& x0_bar, double v_min,
                                         const std::vector<double>& gamma_c,
                                         double D_hint = 0.0) {
    double min_sep = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < xf_bar.size(); ++i)
        for (std::size_t j = i + 1; j < xf_bar.size(); ++j)
            min_sep = std::min(min_sep, distance(xf_bar[i], xf_bar[j]));
    double min_gc = std::numeric_limits<double>::infinity();
    for (double g : gamma_c) min_gc = std::min(min_gc, std::abs(g));
    double D0 = D_hint > 0.0 ? D_hint
                             : std::min(std::isfinite(min_sep) ? min_sep / 8.0 : 1.0,
                                        0.375 * min_gc / v_min) *
                                   (1.0 - 1e-9);
    for (int k = 0; k < 40; ++k) {
        try {
            return local_geometry(xf_bar, x0_bar, D0 * std::pow(0.5, k), v_min, gamma_c);
        } catch (const DTooLarge&) {
        }
    }
    throw DTooLarge("pick_local_geometry: no admissible D found");
}

struct LocalSynthesis {
    SynthesisPlan plan;
    Trajectory trajectory;
    double min_cone_margin = 0.0;
    double min_stadium_margin = 0.0;
    double max_line_deviation = 0.0;
    double endpoint_error = 0.0;
};

/// Straight-line local control: drive x0_bar (in the annuli around xf_bar)
/// to xf (within rho of xf_bar) in time tau, with vortices confined to their
/// cones and controls to their stadiums.
inline LocalSynthesis synthesize_local(const Vec2List& x0_bar, const Vec2List& xf,
                                       const Vec2List& xf_bar, const LocalGeometry& geom,
                                       const std::vector<double>& gamma,
                                       const std::vector<double>& gamma_c,
                                       const SpeedFloor& floor) {
    const std::size_t n = x0_bar.size();
    for (std::size_t i = 0; i < n; ++i) {
        const double d0 = distance(x0_bar[i], xf_bar[i]);
        if (d0 > geom.D * (1.0 + 1e-12) || d0 < geom.D / 2.0 * (1.0 - 1e-12))
            throw MembershipViolated("synthesize_local: start outside its annulus");
        if (distance(xf[i], xf_bar[i]) > geom.rho * (1.0 + 1e-12))
            throw MembershipViolated("synthesize_local: target outside its rho-ball");
        if (distance(xf[i], x0_bar[i]) < 0.375 * geom.D * (1.0 - 1e-12))
            throw MembershipViolated("synthesize_local: target too close to the start");
    }

    SynthesisPlan plan;
    plan.gamma = gamma;
    plan.gamma_c = gamma_c;
    plan.t0 = 0.0;
    plan.t1 = geom.tau;
    plan.v_min = floor.v_min;
    for (std::size_t i = 0; i < n; ++i)
        plan.reference_curves.push_back(straight_line(x0_bar[i], xf[i], geom.tau));
    plan.controls = detail::controls_along_curves(plan.reference_curves, gamma,
                                                  gamma_c, floor, nullptr, 1024);
    detail::measure_plan(plan);

    LocalSynthesis out;
    out.plan = plan;
    IntegratorSettings is;
    is.method = Method::RK45Adaptive;
    is.tolerance = 1e-11;
    is.guard_radius = plan.r_bar / 8.0;
    is.max_dt = geom.tau / 200.0;
    out.trajectory = simulate_plan(plan, x0_bar, is);

    double cone_m = std::numeric_limits<double>::infinity();
    double stad_m = std::numeric_limits<double>::infinity();
    double dev = 0.0;
    for (std::size_t s = 0; s < out.trajectory.times.size(); ++s) {
        for (std::size_t i = 0; i < n; ++i) {
            cone_m = std::min(cone_m, geom.cones[i].margin(out.trajectory.states[s][i]));
            stad_m = std::min(stad_m,
                              geom.stadiums[i].margin(out.trajectory.control_samples[s][i]));
            dev = std::max(dev, dist_point_segment(out.trajectory.states[s][i],
                                                   x0_bar[i], xf[i]));
        }
    }
    out.min_cone_margin = cone_m;
    out.min_stadium_margin = stad_m;
    out.max_line_deviation = dev;
    Vec2List fin = out.trajectory.final_state();
    double err = 0.0;
    for (std::size_t i = 0; i < n; ++i) err = std::max(err, distance(fin[i], xf[i]));
    out.endpoint_error = err;
    if (!(cone_m > 0.0) || !(stad_m > 0.0))
        throw ContainmentViolated("synthesize_local: containment margin not positive");
    return out;
}

}  // namespace vortex
