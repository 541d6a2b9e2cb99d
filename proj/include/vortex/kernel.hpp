#pragma once

#include <cmath>
#include <vector>

#include "vortex/errors.hpp"
#include "vortex/path.hpp"
#include "vortex/quadrature.hpp"
#include "vortex/vec2.hpp"

namespace vortex {

/// Velocity kernel of a unit vortex at the origin: K(x) = perp(x) / |x|^2.
/// The 2*pi factor is absorbed into the intensities throughout.
inline Vec2 biot_savart(Vec2 x) {
    const double n2 = x.norm2();
    if (n2 < 1e-280) throw ZeroArgument("biot_savart: evaluation at the origin");
    return perp(x) / n2;
}

/// Cutoff radius for the regularized kernel, 0 < eta < 1. The profile used
/// inside the cutoff is checked against the gradient bound at construction.
struct RegularizationParam {
    explicit RegularizationParam(double eta_) : eta(eta_) {
        if (!(eta > 0.0) || !(eta < 1.0))
            throw VortexError("RegularizationParam: eta must lie in (0, 1)");
        // |grad ln_eta(x)| * |x| <= 1 must hold on the blended range.
        for (int i = 1; i <= 256; ++i) {
            const double r = eta * i / 256.0;
            const double u = (r * r) / (eta * eta);
            if (u * (2.0 - u) > 1.0 + 1e-12)
                throw VortexError("RegularizationParam: gradient bound violated");
        }
    }
    double eta;
};

/// Radial potential ln_eta: equals ln|x| outside eta; inside, a polynomial
/// in |x|^2 matched to value and two derivatives at |x| = eta and satisfying
/// |ln_eta| <= |ln|x|| and |grad ln_eta| <= 1/|x|.
inline double ln_eta(Vec2 x, const RegularizationParam& reg) {
    const double r2 = x.norm2();
    const double e2 = reg.eta * reg.eta;
    if (r2 > e2) return 0.5 * std::log(r2);
    const double u = r2 / e2;
    return std::log(reg.eta) - 0.75 + u - 0.25 * u * u;
}

/// K_eta = perp-gradient of ln_eta: globally Lipschitz, equals the exact
/// kernel outside eta, and |K_eta(x)| <= 1/|x| everywhere.
inline Vec2 biot_savart_regularized(Vec2 x, const RegularizationParam& reg) {
    const double r2 = x.norm2();
    const double e2 = reg.eta * reg.eta;
    if (r2 > e2) return perp(x) / r2;
    return perp(x) * ((2.0 - r2 / e2) / e2);
}

/// Smooth, even, nonnegative bump supported on (-width, width) with unit
/// integral: c * exp(-1 / (1 - (s/width)^2)).
class Mollifier {
public:
    explicit Mollifier(double width) : width_(width) {
        if (!(width > 0.0)) throw VortexError("Mollifier: width must be positive");
        const auto& gl = GaussLegendre::order(64);
        double mass = 0.0, m2 = 0.0, m4 = 0.0;
        const int panels = 8;
        for (int k = 0; k < panels; ++k) {
            const double a = -1.0 + 2.0 * k / panels;
            const double b = a + 2.0 / panels;
            mass += gl.integrate(a, b, [](double u) { return shape(u); });
            m2 += gl.integrate(a, b, [](double u) { return u * u * shape(u); });
            m4 += gl.integrate(a, b, [](double u) { return u * u * u * u * shape(u); });
        }
        norm_ = 1.0 / mass;
        moment2_ = norm_ * m2 * width * width;
        moment4_ = norm_ * m4 * width * width * width * width;
    }

    double width() const { return width_; }
    double moment2() const { return moment2_; }
    double moment4() const { return moment4_; }

    double value(double s) const {
        const double u = s / width_;
        return norm_ / width_ * shape(u);
    }

    double derivative(double s) const {
        const double u = s / width_;
        if (std::abs(u) >= 1.0) return 0.0;
        const double q = 1.0 - u * u;
        return norm_ / (width_ * width_) * shape(u) * (-2.0 * u / (q * q));
    }

    /// Unit-integral check by independent quadrature, used by tests.
    double mass_residual() const {
        double total = 0.0;
        const auto& gl = GaussLegendre::order(64);
        const int panels = 16;
        for (int k = 0; k < panels; ++k) {
            const double a = -width_ + 2.0 * width_ * k / panels;
            const double b = a + 2.0 * width_ / panels;
            total += gl.integrate(a, b, [this](double s) { return value(s); });
        }
        return total - 1.0;
    }

private:
    static double shape(double u) {
        const double q = 1.0 - u * u;
        return q > 0.0 ? std::exp(-1.0 / q) : 0.0;
    }

    double width_;
    double norm_;
    double moment2_;
    double moment4_;
};

namespace detail {

/// Convolution of a piecewise-quintic path with a mollifier, evaluated
/// exactly (closed-form moments) away from breakpoints and by split
/// Gauss-Legendre quadrature where the window straddles one.
class MollifyEvaluator {
public:
    MollifyEvaluator(const ControlPath& path, const Mollifier& m)
        : path_(path), m_(m) {}

    PathJet at(double t) const {
        const double w = m_.width();
        std::vector<double> cuts;
        const auto& bps = path_.breakpoints();
        for (auto it = std::upper_bound(bps.begin(), bps.end(), t - w);
             it != bps.end() && *it < t + w; ++it)
            cuts.push_back(t - *it);
        if (cuts.empty() && t - w >= path_.t_begin() && t + w <= path_.t_end())
            return moment_jet(t);
        std::sort(cuts.begin(), cuts.end());
        // many tiny interior nodes only carry curvature jumps; capping the
        // split count keeps the quadrature cost bounded at wide widths
        if (cuts.size() > 40) {
            std::vector<double> thin;
            const std::size_t stride = cuts.size() / 40 + 1;
            for (std::size_t i = 0; i < cuts.size(); i += stride) thin.push_back(cuts[i]);
            thin.push_back(cuts.back());
            cuts.swap(thin);
        }
        std::vector<double> edges{-w};
        for (double c : cuts)
            if (c > -w && c < w) edges.push_back(c);
        edges.push_back(w);
        const auto& gl = GaussLegendre::order(32);
        PathJet out{{0, 0}, {0, 0}, {0, 0}};
        for (std::size_t k = 0; k + 1 < edges.size(); ++k) {
            const double a = edges[k], b = edges[k + 1];
            if (b - a <= 0.0) continue;
            const double mid = 0.5 * (a + b), half = 0.5 * (b - a);
            for (std::size_t i = 0; i < gl.nodes.size(); ++i) {
                const double s = mid + half * gl.nodes[i];
                const double wgt = gl.weights[i] * half;
                const double rho = m_.value(s);
                const double drho = m_.derivative(s);
                const Vec2 f = path_.value(t - s);
                const Vec2 fp = path_.eval(t - s, 1);
                out.p += wgt * rho * f;
                out.v += wgt * rho * fp;
                out.a += wgt * drho * fp;
            }
        }
        return out;
    }

private:
    PathJet moment_jet(double t) const {
        // Whole window inside one polynomial piece: the convolution of a
        // quintic with an even unit-mass kernel is itself a quintic.
        const double m2 = m_.moment2(), m4 = m_.moment4();
        PathJet j;
        j.p = path_.eval(t, 0) + 0.5 * m2 * path_.eval(t, 2) +
              (m4 / 24.0) * path_.eval(t, 4);
        j.v = path_.eval(t, 1) + 0.5 * m2 * path_.eval(t, 3) +
              (m4 / 24.0) * path_.eval(t, 5);
        j.a = path_.eval(t, 2) + 0.5 * m2 * path_.eval(t, 4);
        return j;
    }

    const ControlPath& path_;
    const Mollifier& m_;
};

}  // namespace detail

/// Smooth a path by convolution with the mollifier, extending the input
/// constantly outside its domain. When `pin_margin` is nonzero the caller
/// asserts the input is constant on margins of that length at both ends,
/// which pins the smoothed endpoints exactly; the width must then be less
/// than half the margin.
inline ControlPath mollify(const ControlPath& path, const Mollifier& m,
                           double pin_margin = 0.0) {
    const double w = m.width();
    if (pin_margin > 0.0 && w >= 0.5 * pin_margin)
        throw WidthTooLarge("mollify: width must be below half the pin margin");
    const detail::MollifyEvaluator ev(path, m);

    // Dense nodes only where the window straddles a breakpoint; elsewhere the
    // smoothed path is a quintic and the original nodes reproduce it exactly.
    std::vector<double> nodes;
    const double t0 = path.t_begin(), t1 = path.t_end();
    for (double b : path.breakpoints()) {
        for (int j = -7; j <= 7; ++j) {
            const double t = b + w * j / 6.0;
            if (t > t0 && t < t1) nodes.push_back(t);
        }
    }
    nodes.push_back(t0);
    nodes.push_back(t1);
    std::sort(nodes.begin(), nodes.end());
    std::vector<double> ts;
    for (double t : nodes)
        if (ts.empty() || t - ts.back() > w / 16.0) ts.push_back(t);
    if (ts.back() < t1) ts.push_back(t1);

    std::vector<PathJet> js(ts.size());
    for (std::size_t i = 0; i < ts.size(); ++i) js[i] = ev.at(ts[i]);
    return ControlPath::from_jets(ts, js);
}

}  // namespace vortex
