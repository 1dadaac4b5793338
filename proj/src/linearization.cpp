#include "epcrit/linearization.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>

#include "json.hpp"

namespace epcrit {

namespace detail {

void DensePath::eval(double t, std::span<double> out) const {
    if (segments_.empty()) {
        if (std::abs(t - final_t_) <= 1e-12 * (1.0 + std::abs(final_t_))) {
            std::copy(final_y_.begin(), final_y_.end(), out.begin());
            return;
        }
        throw std::out_of_range("time outside the integrated trajectory");
    }
    const double lo = segments_.front().t0();
    const double hi = final_t_;
    const double slack = 1e-12 * (1.0 + std::abs(t));
    if (t < lo - slack || t > hi + slack)
        throw std::out_of_range("time outside the integrated trajectory");
    t = std::clamp(t, lo, hi);

    std::size_t a = 0, b = segments_.size() - 1;
    while (a < b) {
        std::size_t mid = (a + b) / 2;
        if (segments_[mid].t1() < t)
            a = mid + 1;
        else
            b = mid;
    }
    const DenseSegment& seg = segments_[a];
    const double span = seg.t1() - seg.t0();
    const double theta = span > 0.0 ? std::clamp((t - seg.t0()) / span, 0.0, 1.0) : 0.0;
    seg.eval(theta, out);
}

}  // namespace detail

CoupledState CoupledTrajectory::at(double t) const {
    double y[6];
    path_.eval(t, y);
    return CoupledState{t, y[0], y[1], y[2], y[3], y[4], y[5]};
}

UvState UvTrajectory::at(double t) const {
    double y[5];
    path_.eval(t, y);
    return UvState{t, y[0], y[1], y[2], y[3], y[4]};
}

namespace {

double fg_magnitude(std::span<const double> y) {
    return std::max(std::abs(y[1]), std::abs(y[2]));
}

}  // namespace

CoupledTrajectory integrate_coupled(const Params& p, const InitialPoint& ip,
                                    double horizon, double tol,
                                    double escape_threshold) {
    p.validate();
    if (!(horizon > 0.0)) throw std::invalid_argument("horizon must be positive");
    if (!(tol > 0.0)) throw std::invalid_argument("tolerance must be positive");

    const double d = static_cast<double>(p.d);
    auto rhs = [&p, d](double, std::span<const double> y, std::span<double> dy) {
        const double r = y[0], F = y[1], G = y[2];
        const double q = y[3], p1 = y[4], p2 = y[5];
        const double c = p.background(r);
        const double cs = p.background_slope(r);
        dy[0] = F * r;
        dy[1] = -F * F - p.m - p.k * G - p.mu * F;
        dy[2] = c * F - d * F * G;
        dy[3] = p1;
        dy[4] = -(2.0 * F + p.mu) * p1 - p.k * p2;
        dy[5] = cs * r * F * q + (c - d * G) * p1 - d * F * p2;
    };

    OdeOptions opts;
    opts.reltol = tol;
    opts.abstol = tol * 1e-2;
    opts.escape_norm = 1e300;  // escape is decided by the (F, G) event below

    std::vector<EventSpec> events;
    events.push_back({[](double, std::span<const double> y) { return y[3]; }, -1, true});
    events.push_back({[escape_threshold](double, std::span<const double> y) {
                          return escape_threshold - fg_magnitude(y);
                      },
                      -1, true});

    std::vector<DenseSegment> segments;
    auto collect = [&segments](const DenseSegment& s) { segments.push_back(s); };

    auto sol = integrate_ode(rhs, 0.0, horizon,
                             {ip.r0, ip.F0, ip.G0, 1.0, ip.u0, ip.v0}, opts, events,
                             collect);

    bool fg_escaped = false;
    bool q_crossed = false;
    switch (sol.status) {
        case OdeStatus::reached_end:
            break;
        case OdeStatus::event:
            if (sol.event_index == 0)
                q_crossed = true;
            else
                fg_escaped = true;
            break;
        case OdeStatus::escaped:
        case OdeStatus::step_underflow:
        case OdeStatus::max_steps_exceeded:
            if (fg_magnitude(sol.y) >= 0.99 * escape_threshold) {
                fg_escaped = true;
            } else {
                throw CoupledIntegrationFailure(CoupledState{
                    sol.t, sol.y[0], sol.y[1], sol.y[2], sol.y[3], sol.y[4], sol.y[5]});
            }
            break;
    }

    return CoupledTrajectory(
        detail::DensePath(std::move(segments), std::move(sol.y), sol.t), fg_escaped,
        q_crossed);
}

namespace {

double q_at(const detail::DensePath& path, double t) {
    double y[6];
    path.eval(t, y);
    return y[3];
}

// Ternary refinement of a local minimum of q inside [ta, tb].
void refine_minimum(const detail::DensePath& path, double ta, double tb,
                    double& q_min, double& t_min) {
    for (int it = 0; it < 100 && tb - ta > 1e-13 * (1.0 + std::abs(tb)); ++it) {
        const double m1 = ta + (tb - ta) / 3.0;
        const double m2 = tb - (tb - ta) / 3.0;
        if (q_at(path, m1) < q_at(path, m2))
            tb = m2;
        else
            ta = m1;
    }
    const double tm = 0.5 * (ta + tb);
    const double qm = q_at(path, tm);
    if (qm < q_min) {
        q_min = qm;
        t_min = tm;
    }
}

double bisect_crossing(const detail::DensePath& path, double ta, double tb,
                       double time_tol) {
    // q(ta) > 0 >= q(tb)
    for (int it = 0; it < 200 && tb - ta > time_tol; ++it) {
        const double mid = 0.5 * (ta + tb);
        if (q_at(path, mid) > 0.0)
            ta = mid;
        else
            tb = mid;
    }
    return 0.5 * (ta + tb);
}

}  // namespace

QZeroReport detect_q_zero(const CoupledTrajectory& traj, double time_tol,
                          double touch_tol) {
    QZeroReport rep;
    const auto& path = traj.path();
    const auto& segs = path.segments();
    if (segs.empty()) {
        rep.q_min = path.final_y().empty() ? 1.0 : path.final_y()[3];
        rep.t_at_q_min = path.t_end();
        rep.boundary = rep.q_min <= touch_tol && !rep.t_star;
        return rep;
    }

    rep.q_min = std::numeric_limits<double>::infinity();
    constexpr int kSub = 32;
    double best_a = path.t_begin(), best_b = path.t_begin();

    double prev_t = path.t_begin();
    double prev_q = q_at(path, prev_t);
    if (prev_q < rep.q_min) {
        rep.q_min = prev_q;
        rep.t_at_q_min = prev_t;
        best_a = best_b = prev_t;
    }
    if (prev_q <= 0.0) {
        rep.t_star = prev_t;
        return rep;
    }

    for (const auto& seg : segs) {
        const double t0 = std::max(seg.t0(), path.t_begin());
        const double t1 = std::min(seg.t1(), path.t_end());
        if (!(t1 > prev_t)) continue;
        for (int j = 1; j <= kSub; ++j) {
            const double t = t0 + (t1 - t0) * j / kSub;
            if (!(t > prev_t)) continue;
            const double q = q_at(path, t);
            if (prev_q > 0.0 && q <= 0.0) {
                rep.t_star = bisect_crossing(path, prev_t, t, time_tol);
                rep.q_min = std::min(rep.q_min, 0.0);
                rep.t_at_q_min = *rep.t_star;
                return rep;
            }
            if (q < rep.q_min) {
                rep.q_min = q;
                rep.t_at_q_min = t;
                best_a = prev_t;
                best_b = std::min(t + (t1 - t0) / kSub, path.t_end());
            }
            prev_t = t;
            prev_q = q;
        }
    }

    refine_minimum(path, best_a, best_b, rep.q_min, rep.t_at_q_min);
    if (rep.q_min < 0.0) {
        // the dip crosses zero between scan samples
        rep.t_star = bisect_crossing(path, best_a, rep.t_at_q_min, time_tol);
        rep.q_min = std::min(rep.q_min, 0.0);
        return rep;
    }
    rep.boundary = rep.q_min <= touch_tol;
    return rep;
}

UvTrajectory direct_uv(const Params& p, const InitialPoint& ip, double t_end,
                       double tol, double escape_threshold) {
    p.validate();
    if (!(t_end > 0.0)) throw std::invalid_argument("end time must be positive");
    if (!(tol > 0.0)) throw std::invalid_argument("tolerance must be positive");

    const double d = static_cast<double>(p.d);
    auto rhs = [&p, d](double, std::span<const double> y, std::span<double> dy) {
        const double r = y[0], F = y[1], G = y[2], u = y[3], v = y[4];
        const double c = p.background(r);
        const double cs = p.background_slope(r);
        dy[0] = F * r;
        dy[1] = -F * F - p.m - p.k * G - p.mu * F;
        dy[2] = c * F - d * F * G;
        dy[3] = -u * u - (2.0 * F + p.mu) * u - p.k * v;
        dy[4] = -u * v + (c - d * G) * u - d * F * v + cs * r * F;
    };

    OdeOptions opts;
    opts.reltol = tol;
    opts.abstol = tol * 1e-2;
    opts.escape_norm = 1e300;

    std::vector<EventSpec> events;
    events.push_back({[escape_threshold](double, std::span<const double> y) {
                          return escape_threshold -
                                 std::max(std::abs(y[3]), std::abs(y[4]));
                      },
                      -1, true});
    events.push_back({[escape_threshold](double, std::span<const double> y) {
                          return escape_threshold - fg_magnitude(y);
                      },
                      -1, true});

    std::vector<DenseSegment> segments;
    auto collect = [&segments](const DenseSegment& s) { segments.push_back(s); };

    auto sol = integrate_ode(rhs, 0.0, t_end, {ip.r0, ip.F0, ip.G0, ip.u0, ip.v0},
                             opts, events, collect);

    bool escaped = false;
    switch (sol.status) {
        case OdeStatus::reached_end:
            break;
        case OdeStatus::event:
            escaped = true;
            break;
        default: {
            const double mag = std::max(
                {std::abs(sol.y[1]), std::abs(sol.y[2]), std::abs(sol.y[3]),
                 std::abs(sol.y[4])});
            if (mag >= 0.99 * escape_threshold)
                escaped = true;
            else
                throw std::runtime_error("slope integration failed before the end time");
        }
    }

    return UvTrajectory(detail::DensePath(std::move(segments), std::move(sol.y), sol.t),
                        escaped);
}

namespace {

// Second derivative of q obtained from the linear system rows.
double q_second_derivative(const Params& p, const CoupledState& s) {
    return -(2.0 * s.F + p.mu) * s.p1 - p.k * s.p2;
}

}  // namespace

double third_order_residual(const std::function<CoupledState(double)>& path,
                            double t0, double t1, const Params& p, int samples) {
    p.validate();
    if (!(t1 > t0)) throw std::invalid_argument("empty time window");
    if (samples < 2) throw std::invalid_argument("need at least two samples");

    const double d = static_cast<double>(p.d);
    double h = 2e-5;  // truncation ~ h^2, dense-output noise ~ tol / h
    if (t1 - t0 < 10.0 * h) h = (t1 - t0) / 10.0;

    double worst = 0.0;
    for (int i = 0; i < samples; ++i) {
        const double t = (t0 + h) + (t1 - t0 - 2.0 * h) * i / (samples - 1);
        const CoupledState s = path(t);
        const CoupledState sm = path(t - h);
        const CoupledState sp = path(t + h);

        const double qd3 =
            (q_second_derivative(p, sp) - q_second_derivative(p, sm)) / (2.0 * h);
        const double qd2 = q_second_derivative(p, s);
        const double c = p.background(s.r);
        const double cs = p.background_slope(s.r);

        const double a2 = (2.0 + d) * s.F + p.mu;
        const double a1 = 2.0 * (d - 1.0) * s.F * s.F + (d - 2.0) * p.mu * s.F -
                          2.0 * p.m - (d + 2.0) * p.k * s.G + p.k * c;
        const double a0 = p.k * cs * s.r * s.F;

        worst = std::max(worst, std::abs(qd3 + a2 * qd2 + a1 * s.p1 + a0 * s.q));
    }
    return worst;
}

double third_order_residual(const CoupledTrajectory& traj, const Params& p,
                            int samples) {
    return third_order_residual([&traj](double t) { return traj.at(t); },
                                traj.t_begin(), traj.t_end(), p, samples);
}

std::string to_string(BlowupVerdict::Outcome o) {
    switch (o) {
        case BlowupVerdict::Outcome::smooth_certified: return "smooth-certified";
        case BlowupVerdict::Outcome::smooth_to_horizon: return "smooth-to-horizon";
        case BlowupVerdict::Outcome::blow_up: return "blow-up";
    }
    return "unknown";
}

std::string to_string(BlowupVerdict::Mechanism m) {
    switch (m) {
        case BlowupVerdict::Mechanism::q_zero: return "q-zero";
        case BlowupVerdict::Mechanism::trajectory_escape: return "trajectory-escape";
        case BlowupVerdict::Mechanism::separatrix_certificate:
            return "separatrix-certificate";
        case BlowupVerdict::Mechanism::analytic_criterion: return "analytic-criterion";
    }
    return "unknown";
}

double default_horizon(const Params& p) {
    p.validate();
    if (!p.analytic_regime()) return 100.0;
    if (p.c == 0.0 && p.m == 0.0 && p.k > 0.0) return 400.0;
    const double e = p.c * p.k + p.m * static_cast<double>(p.d);
    if (e > 0.0) return 50.0 * 2.0 * M_PI / std::sqrt(e);
    if (e == 0.0) return 200.0;
    const double fstar = std::sqrt(-e / p.d);
    const double rho = std::min(2.0, static_cast<double>(p.d)) * fstar;
    return std::max(50.0, 40.0 / rho);
}

namespace {

// Tail bound on |q(inf) - q(T)| once the characteristic sits at the stable
// node and the linear components are small. With constant background the
// (p1, p2) subsystem is closed and decays at the node at rates 2 F* and
// d F*; the bound below carries a factor-two safety margin over the
// constant-coefficient Duhamel estimate.
std::optional<double> node_tail_bound(const Params& p, const CoupledState& end,
                                      const HorizonPolicy& policy) {
    if (!(p.analytic_regime() && p.m == 0.0 && p.k < 0.0 && p.c > 0.0 && p.d >= 2))
        return std::nullopt;
    const double d = static_cast<double>(p.d);
    const double fstar = std::sqrt(-p.k * p.c / d);
    const double gstar = p.c / d;
    const bool near_node =
        std::abs(end.F - fstar) <= policy.node_eps * (1.0 + fstar) &&
        std::abs(end.G - gstar) <= policy.node_eps * (1.0 + std::abs(gstar));
    const double pnorm = std::max(std::abs(end.p1), std::abs(end.p2));
    if (!near_node || pnorm > policy.node_delta) return std::nullopt;

    const double absk = -p.k;
    double tail;
    if (p.d >= 3)
        tail = 2.0 * (1.0 + absk / ((d - 2.0) * fstar)) * pnorm / (2.0 * fstar);
    else
        tail = 2.0 * pnorm * (1.0 / (2.0 * fstar) + absk / (4.0 * fstar * fstar));
    return tail;
}

// Closed-orbit test for d = 1 after shifting the equilibrium to the origin:
// both the characteristic pair and its slope-shifted copy must sit on closed
// orbits, i.e. F^2 < k (c - 2 G) strictly for each copy.
bool d1_globally_smooth(const Params& p, const InitialPoint& ip) {
    const ShiftedModel s = shift_to_zero_equilibrium(p);
    if (!(s.params.k > 0.0 && s.params.c > 0.0)) return false;
    const InitialPoint sp = shift_point(s, ip);
    const double k = s.params.k, c = s.params.c;
    const bool base = sp.F0 * sp.F0 < k * (c - 2.0 * sp.G0);
    const double D0 = sp.F0 + sp.u0;
    const double L0 = sp.G0 + sp.v0;
    const bool copy = D0 * D0 < k * (c - 2.0 * L0);
    return base && copy;
}

}  // namespace

BlowupVerdict classify_point(const Params& p, const InitialPoint& ip,
                             const HorizonPolicy& policy) {
    p.validate();
    const double horizon =
        policy.horizon > 0.0 ? policy.horizon : default_horizon(p);

    BlowupVerdict v;
    v.horizon = horizon;

    bool separatrix_hit = false;
    if (p.analytic_regime() && p.d >= 3) {
        const double e = p.c * p.k + p.m * static_cast<double>(p.d);
        if (e < 0.0) {
            const ShiftedModel s = shift_to_zero_equilibrium(p);
            const InitialPoint sp = shift_point(s, ip);
            separatrix_hit = sp.G0 < s.params.c / s.params.d &&
                             blows_up_by_separatrix(s.params, sp.F0, sp.G0);
        }
    }

    const CoupledTrajectory run =
        integrate_coupled(p, ip, horizon, policy.tol, policy.escape_threshold);
    const QZeroReport z = detect_q_zero(run, 1e-10, policy.q_touch_tol);
    v.q_min = z.q_min;
    v.boundary = z.boundary;

    if (separatrix_hit) {
        v.outcome = BlowupVerdict::Outcome::blow_up;
        v.mechanism = BlowupVerdict::Mechanism::separatrix_certificate;
        if (z.t_star)
            v.t_star = *z.t_star;
        else if (run.fg_escaped())
            v.t_star = run.t_end();
        else
            v.t_star = horizon;
        return v;
    }
    if (z.t_star) {
        v.outcome = BlowupVerdict::Outcome::blow_up;
        v.mechanism = BlowupVerdict::Mechanism::q_zero;
        v.t_star = *z.t_star;
        return v;
    }
    if (run.fg_escaped()) {
        v.outcome = BlowupVerdict::Outcome::blow_up;
        v.mechanism = BlowupVerdict::Mechanism::trajectory_escape;
        v.t_star = run.t_end();
        return v;
    }

    const CoupledState end = run.final_state();
    if (auto tail = node_tail_bound(p, end, policy)) {
        if (end.q - *tail > 0.0) {
            v.outcome = BlowupVerdict::Outcome::smooth_certified;
            v.mechanism = BlowupVerdict::Mechanism::analytic_criterion;
            v.tail_bound = *tail;
            return v;
        }
    }
    if (p.analytic_regime() && p.d == 1 && d1_globally_smooth(p, ip)) {
        v.outcome = BlowupVerdict::Outcome::smooth_certified;
        v.mechanism = BlowupVerdict::Mechanism::analytic_criterion;
        return v;
    }

    v.outcome = BlowupVerdict::Outcome::smooth_to_horizon;
    return v;
}

bool equilibrium_criterion(const Params& p, double u0, double v0) {
    p.validate();
    if (!p.analytic_regime())
        throw std::domain_error("equilibrium criterion needs constant background, no friction");
    if (!(p.k < 0.0 && p.c > 0.0))
        throw std::domain_error("equilibrium criterion needs attractive forcing with positive background");
    const double d = static_cast<double>(p.d);
    const double e = p.c * p.k + p.m * d;
    if (!(e < 0.0)) throw std::domain_error("no stable node in this regime");
    const double fstar = std::sqrt(-e / d);
    const double gstar = p.c / d;
    const double den = 1.0 - d * (gstar + 2.0 * fstar * fstar);
    if (den == 0.0)
        throw std::domain_error("equilibrium criterion degenerate: zero denominator");
    return 1.0 - (d * fstar * u0 + v0) / den > 0.0;
}

std::string verdict_json(const InitialPoint& ip, const BlowupVerdict& v) {
    nlohmann::ordered_json j;
    j["r0"] = ip.r0;
    j["F0"] = ip.F0;
    j["G0"] = ip.G0;
    j["u0"] = ip.u0;
    j["v0"] = ip.v0;
    j["outcome"] = to_string(v.outcome);
    j["mechanism"] = v.mechanism ? nlohmann::ordered_json(to_string(*v.mechanism))
                                 : nlohmann::ordered_json(nullptr);
    j["t_star"] = v.t_star ? nlohmann::ordered_json(*v.t_star)
                           : nlohmann::ordered_json(nullptr);
    j["q_min"] = v.q_min;
    j["horizon"] = v.horizon;
    return j.dump();
}

}  // namespace epcrit
