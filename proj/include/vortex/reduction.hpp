#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <future>
#include <limits>
#include <optional>
#include <vector>

#include "vortex/curves.hpp"
#include "vortex/dynamics.hpp"
#include "vortex/errors.hpp"
#include "vortex/inversion.hpp"
#include "vortex/kernel.hpp"
#include "vortex/quadrature.hpp"
#include "vortex/synthesis.hpp"
#include "vortex/vec2.hpp"

namespace vortex {

/// Nested interval structure of the oscillating control: n blocks, each
/// split into N slots, each slot a core (hold one reference control) plus a
/// transition window of half-width deltaT / (2n).
struct TimePartition {
    int n = 1;
    int N = 1;
    double T = 1.0;
    double DeltaT = 0.0;
    double deltaT = 0.0;
    double window_half = 0.0;

    struct Interval {
        double a = 0.0, b = 0.0;
        int block = 1;  // i in 1..n
        int slot = 1;   // k in 1..N
        bool window = false;
    };
    std::vector<Interval> intervals;

    /// Slot boundary t_{i-1,k} = (i-1) DeltaT + k deltaT.
    double mark(int i, int k) const { return (i - 1) * DeltaT + k * deltaT; }
};

inline TimePartition build_partition(int n, int N, double T) {
    if (n < 1 || N < 1 || !(T > 0.0)) throw VortexError("build_partition: bad arguments");
    TimePartition p;
    p.n = n;
    p.N = N;
    p.T = T;
    p.DeltaT = T / n;
    p.deltaT = p.DeltaT / N;
    p.window_half = p.deltaT / (2.0 * n);
    for (int i = 1; i <= n; ++i) {
        for (int k = 1; k <= N; ++k) {
            const double lo = (i == 1 && k == 1) ? 0.0 : p.mark(i, k - 1) + p.window_half;
            const double hi = (i == n && k == N) ? T : p.mark(i, k) - p.window_half;
            p.intervals.push_back({lo, hi, i, k, false});
            if (!(i == n && k == N))
                p.intervals.push_back({p.mark(i, k) - p.window_half,
                                       p.mark(i, k) + p.window_half, i, k, true});
        }
    }
    return p;
}

enum class WaypointMode { AvoidBalls, FixedWaypoints };

/// Fixed geometric data for the waypoint transitions: one rest point per
/// slot and a connecting route from each rest point to the next.
struct WaypointNetwork {
    Vec2List rest_points;               // y*_k, k = 0..N-1
    std::vector<Vec2List> links;        // polyline from y*_k to y*_{k+1 mod N}
};

/// Optional straight lead-in prepended before the first core, used to hand
/// the control over from a previous phase.
struct LeadIn {
    Vec2 from;
    double duration = 0.0;
    std::vector<Disc> obstacles;
};

struct OscillatingControl {
    TimePartition partition;
    ControlPath raw;       // continuous, Lipschitz
    ControlPath smoothed;  // mollified control
    double lipschitz = 0.0;
    double width = 0.0;       // mollifier width
    double hold_margin = 0.0; // 0 when the endpoints are not pinned
    double gamma_total = 0.0;
    double t0 = 0.0;

    double sup_deviation_bound() const { return 2.0 * lipschitz * width; }
};

namespace detail {

inline double path_max_speed(const ControlPath& p, int samples_per_seg = 3) {
    double m = 0.0;
    const auto& bp = p.breakpoints();
    for (std::size_t i = 0; i + 1 < bp.size(); ++i)
        for (int s = 0; s <= samples_per_seg; ++s) {
            const double t = bp[i] + (bp[i + 1] - bp[i]) * s / samples_per_seg;
            m = std::max(m, p.eval(t, 1).norm());
        }
    return m;
}

}  // namespace detail

/// Assemble the single oscillating control from a plan: hold each reference
/// control during its cores, transition during the windows, then mollify
/// with width T / n^3 and exact endpoint pinning when the margins allow it.
inline OscillatingControl build_oscillating_control(
    const SynthesisPlan& plan, int n, WaypointMode mode,
    const WaypointNetwork* network = nullptr,
    const std::optional<LeadIn>& lead_in = std::nullopt) {
    const int N = static_cast<int>(plan.size());
    const double T = plan.t1 - plan.t0;
    if (mode == WaypointMode::FixedWaypoints && !network)
        throw VortexError("build_oscillating_control: waypoint network required");

    OscillatingControl out;
    out.partition = build_partition(n, N, T);
    out.t0 = plan.t0;
    out.gamma_total = 0.0;
    for (double g : plan.gamma_c) out.gamma_total += g;

    auto control_at = [&](int k, double t) {  // k in 1..N
        return plan.controls[k - 1].value(plan.t0 + t);
    };
    auto ref_at = [&](int j, double t) {
        return plan.reference_curves[j].value(plan.t0 + t);
    };

    std::vector<ControlPath> pieces;
    double lip = 0.0;
    for (const auto& iv : out.partition.intervals) {
        if (!iv.window) {
            ControlPath core =
                plan.controls[iv.slot - 1].slice(plan.t0 + iv.a, plan.t0 + iv.b);
            lip = std::max(lip, detail::path_max_speed(core));
            pieces.push_back(reparametrize(core, plan.t0 + iv.a, plan.t0 + iv.b,
                                           iv.a, iv.b));
            continue;
        }
        const int k_next = iv.slot == N ? 1 : iv.slot + 1;
        const Vec2 from = control_at(iv.slot, iv.a);
        const Vec2 to = control_at(k_next, iv.b);
        ControlPath w;
        if (mode == WaypointMode::AvoidBalls) {
            std::vector<Disc> balls;
            for (int j = 0; j < N; ++j)
                balls.push_back({ref_at(j, iv.a), 1.5 * plan.r_bar});
            w = transition_curve(from, to, balls, iv.b - iv.a, iv.a);
        } else {
            Vec2List pts{from, network->rest_points[iv.slot - 1]};
            for (const Vec2& q : network->links[iv.slot - 1]) pts.push_back(q);
            pts.push_back(network->rest_points[k_next - 1]);
            pts.push_back(to);
            detail::ElementPath ep = detail::smooth_polyline(pts);
            w = ep.to_path(iv.a, iv.b);
        }
        lip = std::max(lip, detail::path_max_speed(w));
        pieces.push_back(std::move(w));
    }
    ControlPath raw = concat_many(pieces);

    if (lead_in) {
        ControlPath bridge = transition_curve(lead_in->from, raw.value(0.0),
                                              lead_in->obstacles, lead_in->duration);
        lip = std::max(lip, detail::path_max_speed(bridge));
        raw = concat_many({bridge, reparametrize(raw, 0.0, T, lead_in->duration,
                                                 lead_in->duration + T)});
    }
    const double total = raw.t_end();

    out.width = T / (static_cast<double>(n) * n * n);
    out.lipschitz = lip;

    // endpoint pinning via a hold margin, skipped when n is too small for
    // the margin to fit
    const double hold = 2.5 * out.width;
    ControlPath pinned = raw;
    if (hold <= 0.05 * total) {
        out.hold_margin = hold;
        pinned = concat_many(
            {ControlPath::constant(raw.value(0.0), 0.0, hold),
             reparametrize(raw, 0.0, total, hold, total - hold),
             ControlPath::constant(raw.value(total), total - hold, total)});
    }
    out.raw = pinned;
    out.smoothed = mollify(pinned, Mollifier(out.width), out.hold_margin);
    return out;
}

struct SeparationCheck {
    bool ok = false;
    double margin = 0.0;
    int n0_hint = 0;
};

namespace detail {

inline double separation_margin(const OscillatingControl& ctrl,
                                const SynthesisPlan& plan, int grid = 10000) {
    double m = std::numeric_limits<double>::infinity();
    const double T = ctrl.raw.t_end();
    for (int g = 0; g <= grid; ++g) {
        const double t = T * g / grid;
        const Vec2 z = ctrl.smoothed.value(t);
        for (std::size_t j = 0; j < plan.size(); ++j) {
            const double tp = std::min(plan.t0 + t, plan.t1);
            m = std::min(m, distance(z, plan.reference_curves[j].value(tp)));
        }
    }
    return m;
}

}  // namespace detail

/// Evaluate the control/reference separation and scan doubling n for the
/// smallest value achieving the full margin.
inline SeparationCheck check_separation(const OscillatingControl& ctrl,
                                        const SynthesisPlan& plan,
                                        int scan_cap = 1 << 12) {
    SeparationCheck out;
    out.margin = detail::separation_margin(ctrl, plan);
    out.ok = out.margin >= plan.r_bar;
    for (int n = 1; n <= scan_cap; n *= 2) {
        if (n == ctrl.partition.n) {
            if (out.ok) {
                out.n0_hint = n;
                break;
            }
            continue;
        }
        OscillatingControl probe =
            build_oscillating_control(plan, n, WaypointMode::AvoidBalls);
        if (detail::separation_margin(probe, plan) >= plan.r_bar) {
            out.n0_hint = n;
            break;
        }
    }
    return out;
}

/// Integrate the single-control system under an oscillating control. The
/// separation hypothesis (distances at or above r_bar / 2) is monitored by
/// the collision guard and reported as HypothesisHViolated.
inline Trajectory simulate_single_control(const Vec2List& x0,
                                          const OscillatingControl& ctrl,
                                          const SynthesisPlan& plan,
                                          IntegratorSettings settings = {}) {
    const double T = ctrl.raw.t_end();
    const int n = ctrl.partition.n, N = ctrl.partition.N;
    if (settings.dt == 0.0) {
        double dt = T / (12.0 * n * n * N);
        dt = std::max(dt, T / 4e6);
        dt = std::min(dt, 1e-3 * T);
        settings.dt = dt;
    }
    if (settings.guard_radius == 0.0)
        settings.guard_radius = 0.5 * plan.r_bar * (1.0 - 1e-9);
    ControlSet cs{{ctrl.smoothed}, {ctrl.gamma_total}};
    try {
        return integrate({x0, plan.gamma}, &cs, 0.0, T, settings);
    } catch (const CollisionError& e) {
        throw HypothesisHViolated(std::string("separation fell below r_bar/2: ") +
                                  e.what());
    }
}

struct ConvergenceEntry {
    int n = 0;
    bool completed = false;
    double error = 0.0;           // sup over time of the largest vortex error
    double min_separation = 0.0;  // control-vortex, over the run
    double min_mutual = 0.0;      // vortex-vortex, over the run
    std::string failure;
};

struct ConvergenceReport {
    std::vector<ConvergenceEntry> entries;
    double slope = 0.0;      // log error vs log n
    double intercept = 0.0;  // fitted log C
    int fitted_points = 0;
};

namespace detail {

inline double sup_error_against(const Trajectory& sim, const Trajectory& ref,
                                double t_offset) {
    double err = 0.0;
    for (std::size_t s = 0; s < sim.times.size(); ++s) {
        const Vec2List r = ref.state_at(sim.times[s] + t_offset);
        for (std::size_t i = 0; i < r.size(); ++i)
            err = std::max(err, distance(sim.states[s][i], r[i]));
    }
    for (std::size_t s = 0; s < ref.times.size(); ++s) {
        const Vec2List m = sim.state_at(ref.times[s] - t_offset);
        for (std::size_t i = 0; i < m.size(); ++i)
            err = std::max(err, distance(m[i], ref.states[s][i]));
    }
    return err;
}

}  // namespace detail

/// Sup-norm error of the single-control runs against the fully actuated
/// reference, across a list of oscillation counts, with a log-log fit.
inline ConvergenceReport convergence_study(const SynthesisPlan& plan,
                                           const Vec2List& x0,
                                           const std::vector<int>& ns,
                                           int threads = 1) {
    IntegratorSettings ref_settings;
    ref_settings.method = Method::RK45Adaptive;
    ref_settings.tolerance = 1e-11;
    ref_settings.max_dt = (plan.t1 - plan.t0) / 2000.0;
    const Trajectory ref = simulate_plan(plan, x0, ref_settings);

    auto run_one = [&](int n) {
        ConvergenceEntry e;
        e.n = n;
        try {
            OscillatingControl ctrl =
                build_oscillating_control(plan, n, WaypointMode::AvoidBalls);
            Trajectory sim = simulate_single_control(x0, ctrl, plan);
            e.completed = true;
            e.error = detail::sup_error_against(sim, ref, plan.t0);
            e.min_separation = sim.min_control_separation();
            e.min_mutual = sim.min_mutual_separation();
        } catch (const VortexError& err) {
            e.failure = err.what();
        }
        return e;
    };

    ConvergenceReport report;
    report.entries.resize(ns.size());
    if (threads > 1) {
        std::vector<std::future<ConvergenceEntry>> futs;
        for (int n : ns)
            futs.push_back(std::async(std::launch::async, run_one, n));
        for (std::size_t i = 0; i < futs.size(); ++i) report.entries[i] = futs[i].get();
    } else {
        for (std::size_t i = 0; i < ns.size(); ++i) report.entries[i] = run_one(ns[i]);
    }

    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    int m = 0;
    for (const auto& e : report.entries) {
        if (!e.completed || e.error <= 0.0) continue;
        const double lx = std::log(static_cast<double>(e.n));
        const double ly = std::log(e.error);
        sx += lx;
        sy += ly;
        sxx += lx * lx;
        sxy += lx * ly;
        ++m;
    }
    report.fitted_points = m;
    if (m >= 2) {
        report.slope = (m * sxy - sx * sy) / (m * sxx - sx * sx);
        report.intercept = (sy - report.slope * sx) / m;
    }
    return report;
}

/// Space-time test function for the weak-convergence diagnostic.
using TestFunction = std::function<Vec2(double, Vec2)>;

/// Kernel-type test functions: the regularized kernel anchored on each
/// reference trajectory.
inline std::vector<TestFunction> kernel_test_functions(const SynthesisPlan& plan) {
    const double eta = std::min(plan.r_bar / 4.0, 0.5);
    RegularizationParam reg(eta);
    std::vector<TestFunction> fns;
    for (std::size_t j = 0; j < plan.size(); ++j) {
        const ControlPath* ref = &plan.reference_curves[j];
        fns.push_back([ref, reg](double t, Vec2 y) {
            return biot_savart_regularized(ref->value(t) - y, reg);
        });
    }
    return fns;
}

/// Time integral of |phi(t, z_n(t)) - mean_k phi(t, y_k(t))| per test
/// function; decays like 1/n for kernel-type functions.
inline std::vector<double> weak_convergence_diagnostic(
    const OscillatingControl& ctrl, const SynthesisPlan& plan,
    const std::vector<TestFunction>& fns) {
    std::vector<double> out;
    const double N = static_cast<double>(plan.size());
    for (const auto& fn : fns) {
        auto integrand = [&](double t) {
            const double tp = plan.t0 + t;
            Vec2 avg{0, 0};
            for (std::size_t k = 0; k < plan.size(); ++k)
                avg += fn(tp, plan.controls[k].value(tp)) / N;
            return (fn(tp, ctrl.smoothed.value(t)) - avg).norm();
        };
        double total = 0.0;
        for (const auto& iv : ctrl.partition.intervals)
            total += adaptive_simpson(integrand, iv.a, iv.b, 1e-11, 24);
        out.push_back(total);
    }
    return out;
}

struct ShootingIteration {
    Vec2List target;
    double residual = 0.0;
    bool inside_ball = true;
};

struct RunReport {
    double endpoint_error = 0.0;
    int n_phase1 = 0;
    int n_phase2 = 0;
    int shooting_iterations = 0;
    std::vector<ShootingIteration> shooting;
    double kappa = 0.0;
    double min_separation = 0.0;   // control-vortex over the full run
    double min_mutual = 0.0;       // vortex-vortex over the full run
    double phase1_error = 0.0;     // distance to the annulus anchors
    double r_bar_phase1 = 0.0;
    double r_bar_phase2 = 0.0;
    double D = 0.0, tau = 0.0, rho = 0.0;
};

struct ExactControlResult {
    ControlPath control;    // single control on [0, T]
    Trajectory trajectory;  // stitched full-horizon run
    RunReport report;
};

struct ExactControlOptions {
    std::uint64_t seed = 0;
    double endpoint_tolerance = 1e-6;
    int max_shooting_iterations = 20;
    int max_n_retries = 3;
    int phase1_n_cap = 1 << 12;
    double D_hint = 0.0;
};

namespace detail {

/// Merge overlapping discs into covering discs until pairwise disjoint.
inline std::vector<Disc> merge_discs(std::vector<Disc> discs) {
    bool changed = true;
    while (changed && discs.size() > 1) {
        changed = false;
        for (std::size_t i = 0; i < discs.size() && !changed; ++i)
            for (std::size_t j = i + 1; j < discs.size() && !changed; ++j) {
                const double d = distance(discs[i].center, discs[j].center);
                if (d >= discs[i].radius + discs[j].radius) continue;
                // smallest disc containing both
                if (d + discs[j].radius <= discs[i].radius) {
                    discs.erase(discs.begin() + j);
                } else if (d + discs[i].radius <= discs[j].radius) {
                    discs.erase(discs.begin() + i);
                } else {
                    const double r = 0.5 * (d + discs[i].radius + discs[j].radius);
                    const Vec2 u = (discs[j].center - discs[i].center) / d;
                    const Disc merged{discs[i].center + (r - discs[i].radius) * u, r};
                    discs.erase(discs.begin() + j);
                    discs[i] = merged;
                }
                changed = true;
            }
    }
    return discs;
}

}  // namespace detail

/// Exact controllability pipeline: an approximate phase steering the
/// vortices into annuli around the targets, then a short straight-line phase
/// whose endpoint map is corrected by damped fixed-point shooting. Waypoint
/// transitions in the second phase are fixed so the endpoint map depends
/// continuously on the commanded target.
inline ExactControlResult exact_control(const Vec2List& x0, const Vec2List& xf,
                                        double T, const std::vector<double>& gamma,
                                        double gamma_c_total,
                                        ExactControlOptions opts = {}) {
    const std::size_t N = x0.size();
    if (xf.size() != N || gamma.size() != N)
        throw VortexError("exact_control: size mismatch");
    if (gamma_c_total == 0.0) throw VortexError("exact_control: zero control intensity");
    std::vector<double> gamma_c(N, gamma_c_total / static_cast<double>(N));

    // floor calibration on contexts at the target scale
    std::vector<FieldContext> family;
    family.push_back({xf, gamma, gamma_c});
    if (N > 1) {
        Vec2 centroid{0, 0};
        for (const Vec2& p : xf) centroid += p / static_cast<double>(N);
        Vec2List shrunk(N);
        for (std::size_t i = 0; i < N; ++i)
            shrunk[i] = centroid + 0.5 * (xf[i] - centroid);
        family.push_back({shrunk, gamma, gamma_c});
    }
    const SpeedFloor floor = calibrate_speed_floor(family, opts.seed);

    // geometry of the local phase
    Rng rng(opts.seed, "annulus-direction");
    const double base_ang = rng.angle();
    LocalGeometry geom;
    Vec2List anchors(N);
    {
        bool found = false;
        double min_sep = std::numeric_limits<double>::infinity();
        for (std::size_t i = 0; i < N; ++i)
            for (std::size_t j = i + 1; j < N; ++j)
                min_sep = std::min(min_sep, distance(xf[i], xf[j]));
        double min_gc = std::abs(gamma_c[0]);
        double D0 = std::min(std::isfinite(min_sep) ? min_sep / 8.0 : 1.0,
                             0.375 * min_gc / floor.v_min) *
                    (1.0 - 1e-9);
        if (opts.D_hint > 0.0) D0 = opts.D_hint;
        for (int halve = 0; halve < 40 && !found; ++halve) {
            const double D = D0 * std::pow(0.5, halve);
            for (std::size_t i = 0; i < N; ++i) {
                const double ang = base_ang + 2.0 * M_PI * static_cast<double>(i) / N;
                anchors[i] = xf[i] + 0.75 * D * Vec2{std::cos(ang), std::sin(ang)};
            }
            try {
                geom = local_geometry(xf, anchors, D, floor.v_min, gamma_c);
                found = true;
            } catch (const DTooLarge&) {
            }
        }
        if (!found) throw DTooLarge("exact_control: no admissible local scale");
    }
    const double bridge = 0.25 * geom.tau;
    const double T1 = T - geom.tau - bridge;
    if (!(T1 > 0.0)) throw VortexError("exact_control: horizon too short for the local phase");

    RunReport report;
    report.kappa = geom.rho;
    report.D = geom.D;
    report.tau = geom.tau;
    report.rho = geom.rho;

    // phase 1: approximate control into the annuli
    SynthesisOptions sopts;
    sopts.seed = opts.seed;
    SynthesisPlan plan1 = synthesize_N(x0, anchors, std::nullopt, T1, gamma, gamma_c, sopts);
    report.r_bar_phase1 = plan1.r_bar;

    OscillatingControl ctrl1;
    Trajectory traj1;
    bool phase1_ok = false;
    const double arrival_tol = geom.D / 8.0;
    for (int n = 2; n <= opts.phase1_n_cap && !phase1_ok; n *= 2) {
        try {
            OscillatingControl c = build_oscillating_control(plan1, n, WaypointMode::AvoidBalls);
            if (detail::separation_margin(c, plan1, 4000) < 0.5 * plan1.r_bar) continue;
            Trajectory t1 = simulate_single_control(x0, c, plan1);
            double err = 0.0;
            for (std::size_t i = 0; i < N; ++i)
                err = std::max(err, distance(t1.final_state()[i], anchors[i]));
            if (err > arrival_tol) continue;
            bool annuli = true;
            for (std::size_t i = 0; i < N; ++i) {
                const double d = distance(t1.final_state()[i], xf[i]);
                if (d <= geom.D / 2.0 || d >= geom.D) annuli = false;
            }
            if (!annuli) continue;
            ctrl1 = std::move(c);
            traj1 = std::move(t1);
            report.n_phase1 = n;
            report.phase1_error = err;
            phase1_ok = true;
        } catch (const VortexError&) {
        }
    }
    if (!phase1_ok)
        throw ShootingDiverged("exact_control: approximate phase could not reach the annuli");

    const Vec2List x_mid = traj1.final_state();
    // re-certify the geometry from the points actually reached
    geom = local_geometry(xf, x_mid, geom.D, floor.v_min, gamma_c);

    // fixed waypoint network from the base target
    WaypointNetwork network;
    {
        std::vector<Disc> obstacles;
        for (std::size_t i = 0; i < N; ++i) obstacles.push_back(geom.cones[i].bounding_disc());
        for (std::size_t i = 0; i < N; ++i) {
            const Vec2 d = xf[i] - x_mid[i];
            network.rest_points.push_back(x_mid[i] + gamma_c[i] * geom.tau * perp(d) / d.norm2());
        }
        for (std::size_t k = 0; k < N; ++k) {
            const std::size_t kn = (k + 1) % N;
            if (N == 1) {
                network.links.push_back({});
                break;
            }
            std::vector<Disc> obs = obstacles;
            for (std::size_t j = 0; j < N; ++j)
                if (j != k && j != kn) obs.push_back(geom.stadiums[j].bounding_disc());
            obs = detail::merge_discs(obs);
            // rest points must stay outside the merged obstacles
            for (auto& d : obs) {
                for (const Vec2& rp : network.rest_points) {
                    const double gap = distance(rp, d.center) - d.radius;
                    if (gap < 0.0) d.radius += gap - 1e-9;
                }
            }
            detail::ElementPath link = detail::route_around_discs(
                network.rest_points[k], network.rest_points[kn], obs);
            Vec2List pts;
            link.sample(16, pts);
            pts.erase(pts.begin());
            pts.pop_back();
            network.links.push_back(pts);
        }
    }

    // shooting over the local endpoint map
    const Vec2 z_start = ctrl1.smoothed.value(ctrl1.raw.t_end());

    auto leadin_for = [&]() {
        LeadIn li;
        li.from = z_start;
        li.duration = bridge;
        double rb = 0.375 * geom.D;
        for (std::size_t j = 0; j < N; ++j)
            rb = std::min(rb, 0.9 * distance(z_start, x_mid[j]));
        for (std::size_t j = 0; j < N; ++j) li.obstacles.push_back({x_mid[j], rb});
        return li;
    };

    struct PhaseTwo {
        SynthesisPlan plan;
        OscillatingControl ctrl;
        Trajectory traj;
    };
    auto run_phase2 = [&](const Vec2List& target, int n) {
        PhaseTwo p;
        p.plan.gamma = gamma;
        p.plan.gamma_c = gamma_c;
        p.plan.t0 = 0.0;
        p.plan.t1 = geom.tau;
        p.plan.v_min = floor.v_min;
        for (std::size_t i = 0; i < N; ++i)
            p.plan.reference_curves.push_back(straight_line(x_mid[i], target[i], geom.tau));
        p.plan.controls = detail::controls_along_curves(p.plan.reference_curves, gamma,
                                                        gamma_c, floor, nullptr, 512);
        detail::measure_plan(p.plan, 2000);
        p.ctrl = build_oscillating_control(p.plan, n, WaypointMode::FixedWaypoints,
                                           &network, leadin_for());
        p.traj = simulate_single_control(x_mid, p.ctrl, p.plan);
        return p;
    };

    int n2 = 2;
    PhaseTwo accepted;
    bool done = false;
    for (int retry = 0; retry <= opts.max_n_retries && !done; ++retry) {
        try {
            // hypothesis of the covering lemma: the endpoint map moves the
            // ball center by at most kappa / 2
            PhaseTwo base;
            bool base_ok = false;
            for (; n2 <= (1 << 12); n2 *= 2) {
                base = run_phase2(xf, n2);
                double dev = 0.0;
                for (std::size_t i = 0; i < N; ++i)
                    dev = std::max(dev, distance(base.traj.final_state()[i], xf[i]));
                if (dev <= 0.5 * geom.rho) {
                    base_ok = true;
                    break;
                }
            }
            if (!base_ok)
                throw ShootingDiverged("exact_control: endpoint map drift exceeds kappa/2");
            report.r_bar_phase2 = base.plan.r_bar;

            Vec2List target = xf;
            double damping = 1.0;
            double prev_res = std::numeric_limits<double>::infinity();
            report.shooting.clear();
            PhaseTwo cur = std::move(base);
            for (int it = 0; it < opts.max_shooting_iterations; ++it) {
                const Vec2List fin = cur.traj.final_state();
                double res = 0.0;
                for (std::size_t i = 0; i < N; ++i)
                    res = std::max(res, distance(fin[i], xf[i]));
                bool inside = true;
                for (std::size_t i = 0; i < N; ++i)
                    if (distance(target[i], xf[i]) > geom.rho) inside = false;
                report.shooting.push_back({target, res, inside});
                if (!inside) throw ShootingDiverged("exact_control: iterate left the ball");
                if (res <= opts.endpoint_tolerance) {
                    accepted = std::move(cur);
                    report.shooting_iterations = it;
                    done = true;
                    break;
                }
                if (res > prev_res) damping = 0.5;
                prev_res = res;
                for (std::size_t i = 0; i < N; ++i)
                    target[i] += damping * (xf[i] - fin[i]);
                cur = run_phase2(target, n2);
            }
            if (!done) throw ShootingDiverged("exact_control: shooting did not converge");
        } catch (const VortexError&) {
            if (retry == opts.max_n_retries) throw;
            n2 *= 2;
        }
    }
    report.n_phase2 = n2;

    // stitch the full-horizon control and trajectory
    ExactControlResult out;
    ControlPath phase2_ctrl = reparametrize(accepted.ctrl.smoothed, 0.0,
                                            accepted.ctrl.raw.t_end(), T1, T);
    out.control = concat(ctrl1.smoothed, phase2_ctrl);

    Trajectory full = traj1;
    for (std::size_t s = 1; s < accepted.traj.times.size(); ++s) {
        full.times.push_back(accepted.traj.times[s] + T1);
        full.states.push_back(accepted.traj.states[s]);
        full.derivatives.push_back(accepted.traj.derivatives[s]);
        full.control_samples.push_back(accepted.traj.control_samples[s]);
    }
    out.trajectory = std::move(full);

    double err = 0.0;
    for (std::size_t i = 0; i < N; ++i)
        err = std::max(err, distance(accepted.traj.final_state()[i], xf[i]));
    report.endpoint_error = err;
    report.min_separation = std::min(traj1.min_control_separation(),
                                     accepted.traj.min_control_separation());
    report.min_mutual = std::min(traj1.min_mutual_separation(),
                                 accepted.traj.min_mutual_separation());
    out.report = report;
    return out;
}

}  // namespace vortex
