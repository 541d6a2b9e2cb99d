#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <vector>

#include "vortex/errors.hpp"
#include "vortex/kernel.hpp"
#include "vortex/rng.hpp"
#include "vortex/vec2.hpp"

namespace vortex {

/// Anchor positions and intensities entering the control-to-velocity field.
/// Vortex intensities may be zero here (they only add a background term);
/// control intensities must not be.
struct FieldContext {
    Vec2List anchors;
    std::vector<double> gamma;
    std::vector<double> gamma_c;

    std::size_t size() const { return anchors.size(); }

    void validate() const {
        if (gamma.size() != anchors.size() || gamma_c.size() != anchors.size())
            throw VortexError("FieldContext: size mismatch");
        for (double g : gamma_c)
            if (g == 0.0) throw VortexError("FieldContext: zero control intensity");
        for (std::size_t i = 0; i < anchors.size(); ++i)
            for (std::size_t j = i + 1; j < anchors.size(); ++j)
                if (anchors[i] == anchors[j])
                    throw VortexError("FieldContext: coincident anchors");
    }

    double min_separation() const {
        double m = std::numeric_limits<double>::infinity();
        for (std::size_t i = 0; i < anchors.size(); ++i)
            for (std::size_t j = i + 1; j < anchors.size(); ++j)
                m = std::min(m, distance(anchors[i], anchors[j]));
        return m;
    }
};

struct AdmissibleRadii {
    std::vector<double> R;
};

/// Certified per-component speed floor; velocities with |v_i| >= a_i lie in
/// the range where the inversion is certified to succeed.
struct SpeedFloor {
    std::vector<double> a;
    double v_min = 0.0;
};

/// Closed-form inverse of the one-vortex velocity map:
/// y = x + gamma * perp(v) / |v|^2 satisfies gamma * K(x - y) = v.
inline Vec2 single_inverse(Vec2 x, double gamma, Vec2 v) {
    if (gamma == 0.0) throw VortexError("single_inverse: zero intensity");
    const double n2 = v.norm2();
    if (n2 < 1e-280) throw ZeroVelocity("single_inverse: zero velocity request");
    return x + gamma * perp(v) / n2;
}

/// Uncoupled field: component i sees only its own control.
inline Vec2List F_tilde(const FieldContext& ctx, const Vec2List& y) {
    Vec2List out(ctx.size());
    for (std::size_t i = 0; i < ctx.size(); ++i) {
        const Vec2 d = ctx.anchors[i] - y[i];
        if (d.norm2() < 1e-280)
            throw Coincidence("F_tilde: control coincides with its anchor");
        out[i] = ctx.gamma_c[i] * perp(d) / d.norm2();
    }
    return out;
}

inline Vec2List F_tilde_inverse(const FieldContext& ctx, const Vec2List& v) {
    Vec2List out(ctx.size());
    for (std::size_t i = 0; i < ctx.size(); ++i)
        out[i] = single_inverse(ctx.anchors[i], ctx.gamma_c[i], v[i]);
    return out;
}

/// Coupling remainder: all interactions except each control's own term.
inline Vec2List G_coupling(const FieldContext& ctx, const Vec2List& y) {
    const std::size_t n = ctx.size();
    Vec2List out(n, Vec2{0, 0});
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            if (j == i) continue;
            const Vec2 dx = ctx.anchors[i] - ctx.anchors[j];
            out[i] += ctx.gamma[j] * perp(dx) / dx.norm2();
            const Vec2 dy = ctx.anchors[i] - y[j];
            if (dy.norm2() < 1e-280)
                throw Coincidence("G_coupling: control coincides with an anchor");
            out[i] += ctx.gamma_c[j] * perp(dy) / dy.norm2();
        }
    }
    return out;
}

/// Full coupled field: the velocity each anchor would acquire from the other
/// vortices plus all controls placed at y.
inline Vec2List F_full(const FieldContext& ctx, const Vec2List& y) {
    Vec2List out = F_tilde(ctx, y);
    const Vec2List g = G_coupling(ctx, y);
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += g[i];
    return out;
}

/// Domain radii on which the own-control term dominates the coupling. For a
/// single vortex there is no coupling and the radii are unbounded.
inline AdmissibleRadii admissible_radii(const FieldContext& ctx) {
    const std::size_t n = ctx.size();
    AdmissibleRadii out;
    out.R.assign(n, std::numeric_limits<double>::infinity());
    if (n == 1) return out;
    double min_gc = std::numeric_limits<double>::infinity();
    double max_g = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
        min_gc = std::min(min_gc, std::abs(ctx.gamma_c[j]));
        max_g = std::max(max_g, std::max(std::abs(ctx.gamma_c[j]), std::abs(ctx.gamma[j])));
    }
    for (std::size_t i = 0; i < n; ++i) {
        double dmin = std::numeric_limits<double>::infinity();
        for (std::size_t j = 0; j < n; ++j)
            if (j != i) dmin = std::min(dmin, distance(ctx.anchors[i], ctx.anchors[j]));
        out.R[i] = min_gc * dmin / (8.0 * static_cast<double>(n - 1) * max_g);
    }
    return out;
}

/// The scalar controlling the conjugated map's contraction; stays below 7/9
/// on the admissible domain.
inline std::vector<double> contraction_values(const FieldContext& ctx,
                                              const Vec2List& y) {
    const Vec2List g = G_coupling(ctx, y);
    std::vector<double> h(ctx.size());
    for (std::size_t i = 0; i < ctx.size(); ++i) {
        const Vec2 d = ctx.anchors[i] - y[i];
        const double gc = ctx.gamma_c[i];
        h[i] = 2.0 * dot(perp(d) / gc, g[i]) + d.norm2() * g[i].norm2() / (gc * gc);
    }
    return h;
}

/// Conjugated map J(y) = uncoupled-inverse of the full field, through the
/// smooth-extension formula; defined even where a control meets its anchor.
inline Vec2List J_map(const FieldContext& ctx, const Vec2List& y) {
    const Vec2List g = G_coupling(ctx, y);
    Vec2List out(ctx.size());
    for (std::size_t i = 0; i < ctx.size(); ++i) {
        const Vec2 d = ctx.anchors[i] - y[i];
        const double gc = ctx.gamma_c[i];
        const double h = 2.0 * dot(perp(d) / gc, g[i]) + d.norm2() * g[i].norm2() / (gc * gc);
        if (std::abs(h) >= 7.0 / 9.0)
            throw ContractionViolated("J_map: contraction bound exceeded");
        out[i] = y[i] + d.norm2() * perp(g[i]) / (1.0 + h);
    }
    return out;
}

/// J evaluated literally as the composition; needs y off the anchors.
inline Vec2List J_map_composed(const FieldContext& ctx, const Vec2List& y) {
    return F_tilde_inverse(ctx, F_full(ctx, y));
}

struct InversionResult {
    Vec2List y;
    std::vector<double> residuals;  // one entry per accepted iterate
    int fixed_point_iterations = 0;
    int newton_iterations = 0;
    bool used_newton = false;
};

namespace detail {

/// Solve the small dense system by Gaussian elimination with partial
/// pivoting; dimensions here are 2N with N at most a handful.
inline std::vector<double> solve_dense(std::vector<double> A, std::vector<double> b) {
    const std::size_t n = b.size();
    for (std::size_t col = 0; col < n; ++col) {
        std::size_t piv = col;
        for (std::size_t r = col + 1; r < n; ++r)
            if (std::abs(A[r * n + col]) > std::abs(A[piv * n + col])) piv = r;
        if (std::abs(A[piv * n + col]) < 1e-300)
            throw NoConvergence("newton: singular jacobian");
        if (piv != col) {
            for (std::size_t c = 0; c < n; ++c) std::swap(A[col * n + c], A[piv * n + c]);
            std::swap(b[col], b[piv]);
        }
        for (std::size_t r = col + 1; r < n; ++r) {
            const double f = A[r * n + col] / A[col * n + col];
            for (std::size_t c = col; c < n; ++c) A[r * n + c] -= f * A[col * n + c];
            b[r] -= f * b[col];
        }
    }
    std::vector<double> x(n);
    for (std::size_t r = n; r-- > 0;) {
        double s = b[r];
        for (std::size_t c = r + 1; c < n; ++c) s -= A[r * n + c] * x[c];
        x[r] = s / A[r * n + r];
    }
    return x;
}

inline double residual_norm(const FieldContext& ctx, const Vec2List& y,
                            const Vec2List& v) {
    return tuple_norm(F_full(ctx, y) - v);
}

}  // namespace detail

/// Solve F(y) = v. Primary route is the fixed-point iteration
/// y <- uncoupled_inverse(v - G(y)) seeded at the uncoupled solution (the
/// constructive counterpart of the conjugation through J); a damped Newton
/// step with finite-difference Jacobian takes over if that stalls.
inline InversionResult invert_F_detailed(const FieldContext& ctx, const Vec2List& v,
                                         const SpeedFloor* floor = nullptr,
                                         const Vec2List* seed = nullptr,
                                         double tol = 0.0) {
    const std::size_t n = ctx.size();
    if (v.size() != n) throw VortexError("invert_F: size mismatch");
    if (floor) {
        for (std::size_t i = 0; i < n; ++i)
            if (v[i].norm() < floor->a[i] * (1.0 - 1e-12))
                throw NoConvergence("invert_F: velocity below the certified floor");
    }
    double target = tol > 0.0 ? tol : 1e-10 * std::max(1.0, tuple_norm(v));

    InversionResult res;
    if (n == 1) {
        res.y = {single_inverse(ctx.anchors[0], ctx.gamma_c[0], v[0])};
        res.residuals = {detail::residual_norm(ctx, res.y, v)};
        return res;
    }

    Vec2List y = seed ? *seed : F_tilde_inverse(ctx, v);
    double r = detail::residual_norm(ctx, y, v);
    res.residuals.push_back(r);
    bool converged = r <= target;
    for (int it = 0; it < 50 && !converged; ++it) {
        Vec2List rhs(n);
        bool degenerate = false;
        const Vec2List g = G_coupling(ctx, y);
        for (std::size_t i = 0; i < n; ++i) {
            rhs[i] = v[i] - g[i];
            if (rhs[i].norm2() < 1e-280) degenerate = true;
        }
        if (degenerate) break;
        y = F_tilde_inverse(ctx, rhs);
        r = detail::residual_norm(ctx, y, v);
        res.residuals.push_back(r);
        ++res.fixed_point_iterations;
        if (r <= target) {
            converged = true;
            break;
        }
        // stall or divergence: hand over to Newton
        const std::size_t m = res.residuals.size();
        if (m >= 3 && res.residuals[m - 1] > 0.9 * res.residuals[m - 2] &&
            res.residuals[m - 2] > 0.9 * res.residuals[m - 3])
            break;
    }

    if (!converged) {
        res.used_newton = true;
        const double sep_scale = ctx.min_separation();
        for (int it = 0; it < 30 && !converged; ++it) {
            Vec2List f = F_full(ctx, y);
            std::vector<double> rvec(2 * n);
            for (std::size_t i = 0; i < n; ++i) {
                rvec[2 * i] = f[i].x - v[i].x;
                rvec[2 * i + 1] = f[i].y - v[i].y;
            }
            std::vector<double> J(4 * n * n);
            for (std::size_t c = 0; c < 2 * n; ++c) {
                Vec2List yp = y;
                const std::size_t i = c / 2;
                const double scale = std::max(distance(y[i], ctx.anchors[i]),
                                              1e-3 * sep_scale);
                const double h = 1e-7 * scale;
                if (c % 2 == 0) yp[i].x += h; else yp[i].y += h;
                const Vec2List fp = F_full(ctx, yp);
                for (std::size_t rr = 0; rr < n; ++rr) {
                    J[(2 * rr) * 2 * n + c] = (fp[rr].x - f[rr].x) / h;
                    J[(2 * rr + 1) * 2 * n + c] = (fp[rr].y - f[rr].y) / h;
                }
            }
            const std::vector<double> step = detail::solve_dense(J, rvec);
            double damp = 1.0;
            for (int cut = 0; cut < 12; ++cut) {
                Vec2List yn = y;
                for (std::size_t i = 0; i < n; ++i) {
                    yn[i].x -= damp * step[2 * i];
                    yn[i].y -= damp * step[2 * i + 1];
                }
                double rn;
                try {
                    rn = detail::residual_norm(ctx, yn, v);
                } catch (const Coincidence&) {
                    damp *= 0.5;
                    continue;
                }
                if (rn < r) {
                    y = yn;
                    r = rn;
                    break;
                }
                damp *= 0.5;
            }
            res.residuals.push_back(r);
            ++res.newton_iterations;
            converged = r <= target;
        }
    }
    if (!converged)
        throw NoConvergence("invert_F: iteration failed to reach the tolerance");

    // separation certificate: the coupled solution stays within a factor two
    // of the uncoupled prediction
    for (std::size_t i = 0; i < n; ++i) {
        const double sep = distance(y[i], ctx.anchors[i]);
        const double vn = v[i].norm();
        if (vn > 0.0 && sep < 0.5 * std::abs(ctx.gamma_c[i]) / vn * (1.0 - 1e-9))
            throw NoConvergence("invert_F: separation certificate failed");
    }
    res.y = std::move(y);
    return res;
}

inline Vec2List invert_F(const FieldContext& ctx, const Vec2List& v,
                         const SpeedFloor* floor = nullptr,
                         const Vec2List* seed = nullptr, double tol = 0.0) {
    return invert_F_detailed(ctx, v, floor, seed, tol).y;
}

/// Worst-case magnitude of the coupling term per component across a family
/// of contexts, assuming every control stays within a quarter separation of
/// its own anchor.
inline std::vector<double> coupling_bounds(const std::vector<FieldContext>& family) {
    const std::size_t n = family.front().size();
    std::vector<double> out(n, 0.0);
    for (const auto& ctx : family)
        for (std::size_t i = 0; i < n; ++i) {
            double g = 0.0;
            for (std::size_t j = 0; j < n; ++j) {
                if (j == i) continue;
                const double d = distance(ctx.anchors[i], ctx.anchors[j]);
                g += (std::abs(ctx.gamma[j]) + (4.0 / 3.0) * std::abs(ctx.gamma_c[j])) / d;
            }
            out[i] = std::max(out[i], g);
        }
    return out;
}

/// Calibrate a per-component speed floor valid across a family of contexts.
/// The floor starts at the uncoupled value derived from the worst-case
/// minimum separation in the family and doubles until the inversion succeeds
/// on sampled boundary velocities, which also enforces the monotone
/// dependence on the separation.
inline SpeedFloor calibrate_speed_floor(const std::vector<FieldContext>& family,
                                        std::uint64_t seed = 0) {
    if (family.empty()) throw CalibrationFailed("calibrate_speed_floor: empty family");
    const std::size_t n = family.front().size();
    SpeedFloor floor;
    floor.a.assign(n, 0.0);

    if (n == 1) {
        // no coupling: any nonzero velocity inverts; unit-radius convention
        floor.a[0] = std::abs(family.front().gamma_c[0]);
        floor.v_min = floor.a[0];
        return floor;
    }

    double worst_sep = std::numeric_limits<double>::infinity();
    double min_gc = std::numeric_limits<double>::infinity();
    double max_g = 0.0;
    for (const auto& ctx : family) {
        worst_sep = std::min(worst_sep, ctx.min_separation());
        for (std::size_t j = 0; j < n; ++j) {
            min_gc = std::min(min_gc, std::abs(ctx.gamma_c[j]));
            max_g = std::max(max_g,
                             std::max(std::abs(ctx.gamma_c[j]), std::abs(ctx.gamma[j])));
        }
    }
    const double R_worst = min_gc * worst_sep / (8.0 * static_cast<double>(n - 1) * max_g);
    for (std::size_t i = 0; i < n; ++i)
        floor.a[i] = 2.0 * std::abs(family.front().gamma_c[i]) / R_worst;

    auto passes = [&](const std::vector<double>& a) {
        SpeedFloor probe{a, *std::max_element(a.begin(), a.end())};
        Rng rng(seed, "speed-floor-calibration");
        for (const auto& ctx : family)
            for (int trial = 0; trial < 32; ++trial) {
                Vec2List v(n);
                for (std::size_t i = 0; i < n; ++i) v[i] = a[i] * rng.unit_vector();
                try {
                    invert_F(ctx, v, &probe);
                } catch (const VortexError&) {
                    return false;
                }
            }
        return true;
    };

    // Controls orbit their anchors at radius gamma_c / |v - G|; the floor
    // must keep that radius under a third of the anchor separation or a
    // slow control wanders into the neighboring pair.
    const std::vector<double> g_bounds = coupling_bounds(family);
    std::vector<double> orbit_floor(n, 0.0);
    for (const auto& ctx : family) {
        const double sep = ctx.min_separation();
        for (std::size_t i = 0; i < n; ++i)
            orbit_floor[i] = std::max(orbit_floor[i],
                                      g_bounds[i] + 3.0 * std::abs(ctx.gamma_c[i]) / sep);
    }

    bool certified = false;
    for (int doubling = 0; doubling < 20 && !certified; ++doubling) {
        certified = passes(floor.a);
        if (!certified)
            for (double& a : floor.a) a *= 2.0;
    }
    if (!certified) throw CalibrationFailed("calibrate_speed_floor: no uniform floor found");

    // refine downward while the stress test still certifies the floor; the
    // starting value from the domain-restriction radii is very conservative
    // and an oversized floor forces needlessly fast reference curves, whose
    // tracking error grows exponentially with the speed
    {
        std::vector<double> at_orbit = floor.a;
        bool improves = false;
        for (std::size_t i = 0; i < n; ++i) {
            if (orbit_floor[i] < at_orbit[i]) improves = true;
            at_orbit[i] = std::max(orbit_floor[i], 1e-12);
        }
        if (improves && passes(at_orbit)) {
            floor.a = at_orbit;
        } else {
            for (int halve = 0; halve < 8; ++halve) {
                std::vector<double> smaller = floor.a;
                bool above = true;
                for (std::size_t i = 0; i < n; ++i) {
                    smaller[i] *= 0.5;
                    if (smaller[i] < orbit_floor[i]) above = false;
                }
                if (!above || !passes(smaller)) break;
                floor.a = smaller;
            }
        }
    }
    for (std::size_t i = 0; i < n; ++i) floor.a[i] = std::max(floor.a[i], orbit_floor[i]);
    if (!passes(floor.a))
        throw CalibrationFailed("calibrate_speed_floor: orbit-bounded floor failed the stress test");
    floor.v_min = *std::max_element(floor.a.begin(), floor.a.end());
    return floor;
}

}  // namespace vortex
