#include "epcrit/characteristics.hpp"

#include <algorithm>
#include <numbers>

namespace epcrit {

namespace {

void require(bool ok, const char* msg) {
    if (!ok) throw std::invalid_argument(msg);
}

int sign_of(double x) { return (x > 0.0) - (x < 0.0); }

void char_rhs(const Params& p, double, std::span<const double> y, std::span<double> dy) {
    const double r = y[0], F = y[1], G = y[2];
    dy[0] = F * r;
    dy[1] = -F * F - p.m - p.k * G - p.mu * F;
    dy[2] = p.background(r) * F - p.d * F * G;
}

}  // namespace

CharacteristicState Trajectory::at(double t) const {
    if (segments_.empty()) {
        if (t == final_.t) return final_;
        throw std::invalid_argument("trajectory: empty dense output");
    }
    require(t >= t_begin() - 1e-12 && t <= t_end() + 1e-12,
            "trajectory: time outside the integrated range");
    t = std::clamp(t, t_begin(), t_end());
    std::size_t lo = 0, hi = segments_.size() - 1;
    while (lo < hi) {
        std::size_t mid = (lo + hi) / 2;
        if (segments_[mid].t1() < t)
            lo = mid + 1;
        else
            hi = mid;
    }
    const DenseSegment& seg = segments_[lo];
    double span = seg.t1() - seg.t0();
    double theta = span == 0.0 ? 0.0 : (t - seg.t0()) / span;
    CharacteristicState s;
    s.t = t;
    s.r = seg.eval_component(0, theta);
    s.F = seg.eval_component(1, theta);
    s.G = seg.eval_component(2, theta);
    return s;
}

Trajectory integrate_characteristic(const Params& p, const CharacteristicState& s0,
                                    double t_end, double tol, double escape_threshold) {
    p.validate();
    require(std::isfinite(tol) && tol > 0.0, "integrate: tol must be positive");
    require(std::isfinite(escape_threshold) && escape_threshold > 0.0,
            "integrate: escape threshold must be positive");
    require(s0.r >= 0.0, "integrate: radius must be nonnegative");
    require(t_end > s0.t, "integrate: end time must exceed the start time");

    OdeOptions opts;
    opts.reltol = tol;
    opts.abstol = tol * 1e-2;
    opts.escape_norm = 1e300;  // escape is decided on F and G only

    std::vector<EventSpec> events(1);
    events[0].fn = [escape_threshold](double, std::span<const double> y) {
        return escape_threshold - std::max(std::abs(y[1]), std::abs(y[2]));
    };
    events[0].direction = -1;
    events[0].terminal = true;

    std::vector<DenseSegment> segments;
    auto sol = integrate_ode([&p](double t, std::span<const double> y, std::span<double> dy) {
                                 char_rhs(p, t, y, dy);
                             },
                             s0.t, t_end, {s0.r, s0.F, s0.G}, opts, events,
                             [&segments](const DenseSegment& seg) { segments.push_back(seg); });

    CharacteristicState fin{sol.t, sol.y[0], sol.y[1], sol.y[2]};
    switch (sol.status) {
        case OdeStatus::reached_end:
            return Trajectory(std::move(segments), fin, false);
        case OdeStatus::event:
        case OdeStatus::escaped:
            return Trajectory(std::move(segments), fin, true);
        case OdeStatus::step_underflow:
        case OdeStatus::max_steps_exceeded:
            // a singularity close enough that even the escape event cannot be
            // localized counts as escape if the slopes already left the box
            if (std::max(std::abs(fin.F), std::abs(fin.G)) > 0.99 * escape_threshold)
                return Trajectory(std::move(segments), fin, true);
            throw IntegrationFailure(fin);
    }
    throw IntegrationFailure(fin);
}

FirstIntegralConstant first_integral(const Params& p, double F, double G) {
    p.validate();
    require(p.analytic_regime(), "first integral: requires mu = 0 and constant background");
    const double d = p.d, k = p.k, c = p.c, m = p.m;
    if (p.d * G == c) throw std::domain_error("first integral: singular at d G = c");
    FirstIntegralConstant out;
    if (p.d == 2) {
        out.form = FirstIntegralConstant::Form::d2_log;
        out.value = (2.0 * F * F + k * c + 2.0 * m) / (2.0 * G - c) -
                    k * std::log(std::abs(2.0 * G - c));
    } else {
        out.form = FirstIntegralConstant::Form::general_d;
        out.value = ((F * F + m) * (d - 2.0) - k * (2.0 * G - c)) /
                    ((d - 2.0) * std::pow(std::abs(d * G - c), 2.0 / d));
    }
    return out;
}

double conserved_mass(const Params& p, double r, double G) {
    p.validate();
    require(!p.c_of_r, "conserved mass: requires constant background");
    require(r >= 0.0, "conserved mass: radius must be nonnegative");
    return (p.c - p.d * G) * std::pow(r, static_cast<double>(p.d));
}

namespace {

void require_separatrix_regime(const Params& p) {
    p.validate();
    require(p.analytic_regime() && p.m == 0.0,
            "separatrix: requires mu = 0, m = 0, constant background");
    require(p.k < 0.0 && p.c > 0.0, "separatrix: requires k < 0 and c > 0");
}

}  // namespace

double separatrix_F2(const Params& p, double G) {
    require_separatrix_regime(p);
    require(p.d >= 3, "separatrix: closed form needs dimension >= 3");
    require(G < p.c / p.d, "separatrix: G must satisfy G < c/d");
    const double d = p.d;
    return p.k * p.c / (d - 2.0) *
           (std::pow(1.0 - d * G / p.c, 2.0 / d) + 2.0 * G / p.c - 1.0);
}

double separatrix_F2_d2(const Params& p, double G) {
    require_separatrix_regime(p);
    require(p.d == 2, "separatrix: this form is the dimension-2 variant");
    require(G < p.c / 2.0, "separatrix: G must satisfy G < c/2");
    const double k = p.k, c = p.c;
    // constant of the logarithmic first integral selected through the origin
    const double C0 = -k * std::log(c) - k;
    return 0.5 * ((2.0 * G - c) * k * std::log(std::abs(2.0 * G - c)) - k * c +
                  C0 * (2.0 * G - c));
}

bool blows_up_by_separatrix(const Params& p, double F0, double G0, double margin) {
    double f2 = separatrix_F2(p, G0);
    double edge = -sign_of(G0) * std::sqrt(std::max(f2, 0.0));
    return F0 < edge - margin;
}

namespace {

double center_discriminant(const Params& p) {
    p.validate();
    require(p.analytic_regime(), "center regime: requires mu = 0 and constant background");
    double e = p.c * p.k + p.m * p.d;
    if (!(e > 0.0)) throw std::domain_error("center regime: needs c k + m d > 0");
    return e;
}

}  // namespace

bool is_isochronous(const Params& p) {
    center_discriminant(p);
    double s = 2.0 + p.d;
    return s * s == 9.0 * p.d;
}

double isochrony_tau(const Params& p, double F) {
    double e = center_discriminant(p);
    double f3 = F * F * F;
    double restoring_excess = (e * F + p.d * f3) - e * F;  // g(F) - g'(0) F
    double half = (2.0 + p.d) * f3 / 3.0;
    return half * half - f3 * restoring_excess;
}

double period_of_orbit(const Params& p, double F0, double G0, double tol) {
    double e = center_discriminant(p);
    require(std::isfinite(tol) && tol > 0.0, "period: tol must be positive");

    // move to the zero-equilibrium chart; the period is shift-invariant
    ShiftedModel s = shift_to_zero_equilibrium(p);
    const Params& q = s.params;
    InitialPoint pt0;
    pt0.F0 = F0;
    pt0.G0 = G0;
    InitialPoint pt = shift_point(s, pt0);
    const double F1 = pt.F0, G1 = pt.G0;

    if (F1 == 0.0 && G1 == 0.0)
        throw std::invalid_argument("period: the equilibrium itself has no orbit");
    if (q.d >= 2) {
        require(G1 < q.c / q.d, "period: point outside the closed-orbit region");
    } else {
        require(F1 * F1 < q.c - 2.0 * G1, "period: point outside the closed-orbit region");
    }

    const double linear_period = 2.0 * std::numbers::pi / std::sqrt(e);
    const double horizon = 100.0 * linear_period;

    // Poincare section: level of G when the start is not a G-turning point,
    // level of F otherwise. Same-direction crossings occur once per period.
    const double dG0 = F1 * (q.c - q.d * G1);
    const double dF0 = -F1 * F1 - q.k * G1;
    std::vector<EventSpec> events(1);
    if (std::abs(dG0) > 1e-8 * (1.0 + std::abs(dF0))) {
        events[0].fn = [G1](double, std::span<const double> y) { return y[2] - G1; };
        events[0].direction = sign_of(dG0);
    } else {
        require(dF0 != 0.0, "period: start point is degenerate");
        events[0].fn = [F1](double, std::span<const double> y) { return y[1] - F1; };
        events[0].direction = sign_of(dF0);
    }
    events[0].terminal = true;

    OdeOptions opts;
    opts.reltol = std::min(1e-12, tol * 1e-2);
    opts.abstol = opts.reltol * 1e-2;

    auto sol = integrate_ode(
        [&q](double, std::span<const double> y, std::span<double> dy) {
            const double F = y[1], G = y[2];
            dy[0] = F * y[0];
            dy[1] = -F * F - q.k * G;
            dy[2] = q.c * F - q.d * F * G;
        },
        0.0, horizon, {1.0, F1, G1}, opts, events);
    if (sol.status != OdeStatus::event)
        throw std::runtime_error("period: no return to the section within the horizon");
    return sol.t;
}

Divergences reconstruct_divergences(double F, double G, double u, double v,
                                    const Params& p) {
    const double d = p.d;
    Divergences out;
    out.D = u + d * F;
    out.lambda = v + d * G;
    out.J = (d - 1.0) * out.D * F - 0.5 * (d - 1.0) * d * F * F;
    return out;
}

}  // namespace epcrit
