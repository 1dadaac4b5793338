#include "epcrit/mchart.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <memory>
#include <numbers>
#include <stdexcept>
#include <utility>
#include <vector>

#include "epcrit/characteristics.hpp"
#include "epcrit/linearization.hpp"
#include "epcrit/ode.hpp"
#include "epcrit/quadrature.hpp"
#include "epcrit/special_functions.hpp"

#include "json.hpp"

namespace epcrit {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

// One solution of the amplitude equation with its derivative and its value
// at the turning point M0, however it was constructed.
struct Curve {
    std::function<double(double)> val;
    std::function<double(double)> der;
    double at_m0 = 0.0;
};

// Pair (y1, ybar2 = y2 - lambda y1) with lambda chosen so ybar2(M0) = 0.
FundamentalPair pair_from_curves(int d, double m0, const Curve& c1, const Curve& c2) {
    if (!std::isfinite(c1.at_m0) || !std::isfinite(c2.at_m0) || c1.at_m0 == 0.0)
        throw std::runtime_error("fundamental pair: turning-point values not usable");
    const double lam = c2.at_m0 / c1.at_m0;
    FundamentalPair pair;
    pair.d = d;
    pair.M0 = m0;
    pair.y1 = c1.val;
    pair.y1_prime = c1.der;
    pair.ybar2 = [v2 = c2.val, v1 = c1.val, lam](double M) { return v2(M) - lam * v1(M); };
    pair.ybar2_prime = [d2 = c2.der, d1 = c1.der, lam](double M) {
        return d2(M) - lam * d1(M);
    };
    pair.y1_at_m0 = c1.at_m0;
    return pair;
}

detail::DensePath collect_path(const std::function<void(double, std::span<const double>,
                                                        std::span<double>)>& rhs,
                               double x0, double x1, std::vector<double> y0,
                               const OdeOptions& opts) {
    std::vector<DenseSegment> segments;
    auto collect = [&segments](const DenseSegment& s) { segments.push_back(s); };
    auto sol = integrate_ode(rhs, x0, x1, std::move(y0), opts, {}, collect);
    if (sol.status != OdeStatus::reached_end)
        throw std::runtime_error("amplitude continuation stopped before the chart end");
    return detail::DensePath(std::move(segments), sol.y, sol.t);
}

// --- Heun-route curves for the attractive confined family ----------------
//
// Y = M^rho sqrt(1 - M M0) w(z), z = M / M0. w solves the local equation at
// z = 0; past the series range it is carried in the variable zeta =
// sqrt(1 - z), where z = 1 is an ordinary point of the transformed equation.
struct HeunCurve {
    HeunParams prm;
    double c1 = 0.0;
    double m0 = 0.0;
    double z_hand = 0.4;                 // series / continuation handover
    double zeta_hand = 0.0;              // sqrt(1 - z_hand)
    detail::DensePath path;              // (w, dw/dzeta) over x = zeta_hand - zeta

    void build() {
        zeta_hand = std::sqrt(1.0 - z_hand);
        const HeunValue seed = heun_local(prm, z_hand, 96, c1);
        const double a = prm.a, q = prm.q, ga = prm.gamma, ep = prm.epsilon();
        const double ab = prm.alpha * prm.beta;
        const double zh = zeta_hand;
        auto rhs = [a, q, ga, ep, ab, zh](double x, std::span<const double> y,
                                          std::span<double> dy) {
            const double zeta = zh - x;
            const double oz = 1.0 - zeta * zeta;  // the chart coordinate z
            const double A = -2.0 * zeta * (ga / oz + ep / (oz - a));
            const double B = -4.0 * (ab * oz - q) / (oz * (oz - a));
            dy[0] = -y[1];
            dy[1] = A * y[1] + B * y[0];
        };
        OdeOptions opts;
        opts.reltol = 1e-13;
        opts.abstol = 1e-13;
        opts.escape_norm = 1e12;
        path = collect_path(rhs, 0.0, zeta_hand,
                            {seed.value, -2.0 * zeta_hand * seed.derivative}, opts);
    }

    // w and dw/dz at z in (0, 1]; dw/dz is NaN exactly at z = 1
    void eval(double z, double& w, double& wz) const {
        if (z <= z_hand) {
            const HeunValue hv = heun_local(prm, z, 96, c1);
            w = hv.value;
            wz = hv.derivative;
            return;
        }
        const double zeta = std::sqrt(std::max(1.0 - z, 0.0));
        std::array<double, 2> y{};
        path.eval(zeta_hand - zeta, y);
        w = y[0];
        wz = zeta > 1e-150 ? -y[1] / (2.0 * zeta) : kNaN;
    }

    double at_one() const { return path.final_y()[0]; }
};

Curve lift_heun(std::shared_ptr<HeunCurve> cur, double rho) {
    const double m0 = cur->m0;
    Curve c;
    c.val = [cur, m0, rho](double M) {
        double w = 0.0, wz = 0.0;
        cur->eval(M / m0, w, wz);
        return std::pow(M, rho) * std::sqrt(1.0 - M * m0) * w;
    };
    c.der = [cur, m0, rho](double M) {
        double w = 0.0, wz = 0.0;
        cur->eval(M / m0, w, wz);
        const double s = std::sqrt(1.0 - M * m0);
        return rho * std::pow(M, rho - 1.0) * s * w -
               std::pow(M, rho) * m0 / (2.0 * s) * w +
               std::pow(M, rho) * s * wz / m0;
    };
    c.at_m0 = std::pow(m0, rho) * std::sqrt(1.0 - m0 * m0) * cur->at_one();
    return c;
}

// --- series-seeded direct integration for the same family ----------------
//
// The amplitude equation for d = 4, k = -1, c = 1 clears to the polynomial
// form  2 M^2 (M^2 - sig M + 1) Y'' + M (-2 M^2 + 3 sig M - 4) Y' +
// (4 - 3 sig M) Y = 0,  sig = M0 + 1/M0. Indicial exponents at M = 0 are
// {1, 2}; the resonance of the exponent-1 series at order one is vacuous, so
// both branches are plain power series. The curve is carried from a series
// seed by the M-form of the equation, then in eta = sqrt(M0 - M) across the
// turning point, where the eta-form
//   Y_etaeta + (eta/D + 4 eta/M) Y_eta + (8 - 6 sig M)/(D M^2) Y = 0,
//   D = 1/M0 - M0 + eta^2,  M = M0 - eta^2
// is regular.
struct FrobCurve {
    double m0 = 0.0;
    double rho = 0.0;
    double m_lo = 0.0;    // series below, M-form path above
    double m_sw = 0.0;    // M-form path below, eta-form path above
    double eta_sw = 0.0;  // sqrt(M0 - m_sw)
    std::array<double, 8> coef{};
    detail::DensePath mpath;  // (Y, dY/dM) over M in [m_lo, m_sw]
    detail::DensePath epath;  // (Y, dY/deta) over x = eta_sw - eta

    void series(double M, double& y, double& yp) const {
        double s = coef[7], sp = 0.0;
        for (int m = 6; m >= 0; --m) {
            sp = sp * M + s;
            s = s * M + coef[m];
        }
        const double mr = std::pow(M, rho);
        y = mr * s;
        yp = rho * mr / M * s + mr * sp;
    }

    void build(const MChart& chart) {
        const double sig = m0 + 1.0 / m0;
        auto I = [](double s) { return 2.0 * (s - 1.0) * (s - 2.0); };
        auto K1 = [sig](double s) { return -sig * (2.0 * s - 3.0) * (s - 1.0); };
        auto K2 = [](double s) { return 2.0 * s * (s - 2.0); };
        coef[0] = 1.0;
        for (int m = 1; m < 8; ++m) {
            if (rho == 1.0 && m == 1) {
                coef[1] = 0.0;  // resonant order; the admixture is fixed to zero
                continue;
            }
            double num = K1(m - 1.0 + rho) * coef[m - 1];
            if (m >= 2) num += K2(m - 2.0 + rho) * coef[m - 2];
            coef[m] = -num / I(m + rho);
        }

        m_lo = 0.05 * m0;
        m_sw = 0.64 * m0;
        eta_sw = 0.6 * std::sqrt(m0);

        OdeOptions opts;
        opts.reltol = 1e-13;
        opts.abstol = 1e-13;
        opts.escape_norm = 1e12;

        double y0 = 0.0, yp0 = 0.0;
        series(m_lo, y0, yp0);
        auto rhs_m = [chart](double M, std::span<const double> y, std::span<double> dy) {
            const YCoefficients co = ode_Y_coeffs(chart, M);
            dy[0] = y[1];
            dy[1] = -co.S1 * y[1] - co.S2 * y[0];
        };
        mpath = collect_path(rhs_m, m_lo, m_sw, {y0, yp0}, opts);

        const double m0c = m0, es = eta_sw;
        auto rhs_eta = [m0c, sig, es](double x, std::span<const double> y,
                                      std::span<double> dy) {
            const double eta = es - x;
            const double M = m0c - eta * eta;
            const double D = 1.0 / m0c - m0c + eta * eta;
            const double A = eta / D + 4.0 * eta / M;
            const double B = (8.0 - 6.0 * sig * M) / (D * M * M);
            dy[0] = -y[1];
            dy[1] = A * y[1] + B * y[0];
        };
        const auto& end = mpath.final_y();
        epath = collect_path(rhs_eta, 0.0, eta_sw, {end[0], -2.0 * eta_sw * end[1]}, opts);
    }

    void eval(double M, double& y, double& yp) const {
        if (M <= m_lo) {
            series(M, y, yp);
            return;
        }
        if (M <= m_sw) {
            std::array<double, 2> st{};
            mpath.eval(M, st);
            y = st[0];
            yp = st[1];
            return;
        }
        const double eta = std::sqrt(std::max(m0 - M, 0.0));
        std::array<double, 2> st{};
        epath.eval(eta_sw - eta, st);
        y = st[0];
        yp = eta > 1e-150 ? -st[1] / (2.0 * eta) : kNaN;
    }

    double at_m0() const { return epath.final_y()[0]; }
};

Curve lift_frob(std::shared_ptr<FrobCurve> cur) {
    Curve c;
    c.val = [cur](double M) {
        double y = 0.0, yp = 0.0;
        cur->eval(M, y, yp);
        return y;
    };
    c.der = [cur](double M) {
        double y = 0.0, yp = 0.0;
        cur->eval(M, y, yp);
        return yp;
    };
    c.at_m0 = cur->at_m0();
    return c;
}

MChart attractive_chart(double m0) {
    if (!(m0 > 0.0 && m0 < 1.0))
        throw std::invalid_argument("attractive confined family: M0 must lie in (0, 1)");
    Params p;
    p.d = 4;
    p.k = -1.0;
    p.c = 1.0;
    return m_chart(p, 0.0, 0.25 * (1.0 - m0 * m0));
}

void require_nondegenerate(const FundamentalPair& pair) {
    const double M = 0.5 * pair.M0;
    const double t1 = pair.y1(M) * pair.ybar2_prime(M);
    const double t2 = pair.y1_prime(M) * pair.ybar2(M);
    if (!(std::abs(t1 - t2) > 1e-10 * (std::abs(t1) + std::abs(t2) + 1e-300)))
        throw std::runtime_error("fundamental pair degenerates: Wronskian lost at mid-chart");
}

// Minimum of one component over a dense path, by per-segment sampling.
std::pair<double, double> path_min(const detail::DensePath& path, std::size_t comp) {
    double tb = path.t_begin();
    double vb = std::numeric_limits<double>::infinity();
    for (const auto& seg : path.segments()) {
        for (int i = 0; i <= 32; ++i) {
            const double th = i / 32.0;
            const double v = seg.eval_component(comp, th);
            if (v < vb) {
                vb = v;
                tb = seg.t0() + th * (seg.t1() - seg.t0());
            }
        }
    }
    if (path.segments().empty()) vb = path.final_y()[comp];
    return {tb, vb};
}

// Second differences on a uniform grid keep one sign (within rounding).
bool one_signed_curvature(const std::function<double(double)>& f, double lo, double hi) {
    constexpr int n = 48;
    std::array<double, n + 1> v{};
    double scale = 0.0;
    for (int i = 0; i <= n; ++i) {
        v[i] = f(lo + (hi - lo) * i / n);
        scale = std::max(scale, std::abs(v[i]));
    }
    int sign = 0;
    for (int i = 1; i < n; ++i) {
        const double dd = v[i + 1] - 2.0 * v[i] + v[i - 1];
        if (std::abs(dd) <= 1e-12 * (scale + 1.0)) continue;
        const int s = dd > 0.0 ? 1 : -1;
        if (sign == 0) sign = s;
        else if (s != sign) return false;
    }
    return true;
}

double m_of_g(double G) { return std::sqrt(std::max(-4.0 * G, 0.0)); }

}  // namespace

double MChart::f_squared(double M) const {
    const double d = params.d;
    return Cd * M - 2.0 * params.k / (d * (d - 2.0)) * std::pow(M, 0.5 * d) -
           params.k * params.c / d - params.m;
}

double MChart::f_squared_prime(double M) const {
    const double d = params.d;
    return Cd - params.k / (d - 2.0) * std::pow(M, 0.5 * d - 1.0);
}

double MChart::g_of(double M) const {
    return (params.c - std::pow(M, 0.5 * params.d)) / params.d;
}

double MChart::speed(double M) const { return std::sqrt(std::max(f_squared(M), 0.0)); }

double MChart::m_plus() const {
    if (params.d != 4 || params.c != 0.0 || !(params.k > 0.0))
        throw std::invalid_argument("MChart::m_plus: defined for d = 4, c = 0, k > 0 only");
    return 4.0 * Cd / params.k;
}

MChart m_chart(const Params& p, double F0, double G0) {
    p.validate();
    if (!p.analytic_regime())
        throw std::invalid_argument("m_chart: requires a constant background and no friction");
    if (p.m != 0.0)
        throw std::invalid_argument("m_chart: requires m = 0; shift the equilibrium first");
    if (p.d < 3) throw std::invalid_argument("m_chart: requires d >= 3");
    if (!(G0 < p.c / p.d)) throw std::domain_error("m_chart: requires G0 < c/d");
    MChart chart;
    chart.params = p;
    chart.F0 = F0;
    chart.M0 = std::pow(p.c - p.d * G0, 2.0 / p.d);
    chart.Cd = first_integral(p, F0, G0).value;
    return chart;
}

YCoefficients ode_Y_coeffs(const MChart& chart, double M) {
    const Params& p = chart.params;
    const double d = p.d;
    if (!(M > 0.0) || M > chart.M0 * (1.0 + 1e-12))
        throw std::invalid_argument("ode_Y_coeffs: M must lie in (0, M0]");
    YCoefficients co;
    const double f2 = chart.f_squared(M);
    const double f = chart.speed(M);
    const double g = chart.g_of(M);
    co.Q0 = d * d * p.m * f;
    co.Q1 = 2.0 * (d - 1.0) * f2 - p.k * (d + 2.0) * g + p.k * p.c - 2.0 * p.m;
    co.Q2 = (d + 2.0) * f;
    const double fscale = std::abs(chart.Cd) * M +
                          std::abs(2.0 * p.k / (d * (d - 2.0))) * std::pow(M, 0.5 * d) +
                          std::abs(p.k * p.c / d) + std::abs(p.m);
    if (f2 <= 1e-12 * fscale) {
        co.at_turning_point = true;
        co.S1 = kNaN;
        co.S2 = kNaN;
        return co;
    }
    co.S1 = chart.f_squared_prime(M) / (2.0 * f2) - 0.5 * d / M;
    co.S2 = co.Q1 / (4.0 * f2 * M * M);
    return co;
}

FundamentalPair hypergeom_fundamental(int d, double M0) {
    if (d < 3) throw std::invalid_argument("hypergeom_fundamental: requires d >= 3");
    if (!(M0 > 0.0)) throw std::invalid_argument("hypergeom_fundamental: requires M0 > 0");
    const double dd = d;
    const double p = 0.5 * (dd - 2.0);
    const double nu = 0.5 * (dd - 1.0);

    // polynomial-form branch, normalized to y1(M0) = d - 2
    auto y1v = [dd, M0, p](double M) {
        const double x = M / M0;
        return x * (dd * std::pow(x, p) - 2.0);
    };
    auto y1d = [dd, M0, p](double M) {
        const double x = M / M0;
        return (dd * (1.0 + p) * std::pow(x, p) - 2.0) / M0;
    };

    std::function<double(double)> y2v, y2d;
    double lam = 0.0;
    if (d == 3) {
        // the generic parameter set degenerates; this replacement has the
        // same M -> 0 normalization and vanishes at M0
        const Hyp2F1Params h{-0.5, 2.0, 1.5};
        y2v = [M0, h](double M) {
            const double t = std::sqrt(std::sqrt(M0) - std::sqrt(M));
            const double w = 1.0 - std::sqrt(M / M0);
            return M * t * gauss_2f1(h, w);
        };
        y2d = [M0, h](double M) {
            const double rm = std::sqrt(M);
            const double t = std::sqrt(std::sqrt(M0) - rm);
            const double w = 1.0 - rm / std::sqrt(M0);
            const Hyp2F1Value hv = gauss_2f1_d(h, w);
            return t * hv.value - M / (4.0 * rm * t) * hv.value -
                   M * t * hv.derivative / (2.0 * std::sqrt(M * M0));
        };
    } else {
        const Hyp2F1Params h{(dd - 4.0) / (2.0 * (dd - 2.0)), 2.0, 2.0 - 1.0 / (dd - 2.0)};
        const double m0p = std::pow(M0, p);
        y2v = [M0, h, p, nu, m0p](double M) {
            const double mp = std::pow(M, p);
            const double t = std::sqrt(std::max(m0p - mp, 0.0));
            return std::pow(M, nu) * t * gauss_2f1(h, mp / m0p);
        };
        y2d = [M0, h, p, nu, m0p](double M) {
            const double mp = std::pow(M, p);
            const double t = std::sqrt(std::max(m0p - mp, 0.0));
            const double mp1 = p * std::pow(M, p - 1.0);
            const Hyp2F1Value hv = gauss_2f1_d(h, mp / m0p);
            return nu * std::pow(M, nu - 1.0) * t * hv.value -
                   std::pow(M, nu) * mp1 / (2.0 * t) * hv.value +
                   std::pow(M, nu) * t * hv.derivative * mp1 / m0p;
        };
        if (d >= 5) {
            // exact turning-point value of the second branch; the connection
            // constant removes it so the subtracted branch vanishes there
            const double y2_at_m0 = std::pow(M0, nu + 0.5 * p) * std::tgamma(h.c) *
                                    std::sqrt(std::numbers::pi) /
                                    (std::tgamma(h.a) * std::tgamma(h.b));
            lam = y2_at_m0 / (dd - 2.0);
        }
    }

    FundamentalPair pair;
    pair.d = d;
    pair.M0 = M0;
    pair.y1 = y1v;
    pair.y1_prime = y1d;
    pair.ybar2 = [y2v, y1v, lam](double M) { return y2v(M) - lam * y1v(M); };
    pair.ybar2_prime = [y2d, y1d, lam](double M) { return y2d(M) - lam * y1d(M); };
    pair.y1_at_m0 = dd - 2.0;
    return pair;
}

FundamentalPair d4_attractive_pair_heun(double M0) {
    if (!(M0 > 0.0 && M0 < 1.0))
        throw std::invalid_argument("attractive confined family: M0 must lie in (0, 1)");
    const double a = 1.0 / (M0 * M0);

    auto c1 = std::make_shared<HeunCurve>();
    c1->prm = {a, 1.5 + 0.5 / (M0 * M0), 0.5, 2.5, 2.0, 0.5};
    c1->m0 = M0;
    c1->build();

    auto c2 = std::make_shared<HeunCurve>();
    c2->prm = {a, 0.0, -0.5, 1.5, 0.0, 0.5};
    c2->c1 = 0.5 * M0 * M0;
    c2->m0 = M0;
    c2->build();

    return pair_from_curves(4, M0, lift_heun(c1, 2.0), lift_heun(c2, 1.0));
}

FundamentalPair d4_attractive_pair_frobenius(double M0) {
    const MChart chart = attractive_chart(M0);

    auto c1 = std::make_shared<FrobCurve>();
    c1->m0 = M0;
    c1->rho = 2.0;
    c1->build(chart);

    auto c2 = std::make_shared<FrobCurve>();
    c2->m0 = M0;
    c2->rho = 1.0;
    c2->build(chart);

    return pair_from_curves(4, M0, lift_frob(c1), lift_frob(c2));
}

CriterionConstant compute_C2(const MChart& chart, const FundamentalPair& pair, double v0) {
    if (v0 == 0.0) return {0.0, 0.0};
    constexpr int kLevels = 7;
    std::array<double, kLevels> g{};
    double eps = 1e-2;
    for (int j = 0; j < kLevels; ++j, eps *= 0.5) {
        const double M = chart.M0 * (1.0 - eps);
        const double den = 2.0 * chart.M0 * chart.speed(M) * pair.ybar2_prime(M);
        if (!std::isfinite(den) || den == 0.0)
            throw std::runtime_error("compute_C2: unusable denominator near the turning point");
        g[j] = v0 / den;
    }
    // Richardson limit under two step-exponent hypotheses; F ybar2' is an
    // analytic function of the offset here, so the integer ladder is the one
    // that settles, but the half-power ladder is kept as a fallback.
    auto extrapolate = [&g](double ratio, double& value) {
        std::array<double, kLevels> t = g;
        double diag = t[kLevels - 1];
        double err = std::numeric_limits<double>::infinity();
        double fac = 1.0;
        for (int k = 1; k < kLevels; ++k) {
            fac *= ratio;
            for (int j = kLevels - 1; j >= k; --j)
                t[j] = (fac * t[j] - t[j - 1]) / (fac - 1.0);
            err = std::abs(t[kLevels - 1] - diag);
            diag = t[kLevels - 1];
        }
        value = diag;
        return err;
    };
    double v_int = 0.0, v_half = 0.0;
    const double e_int = extrapolate(2.0, v_int);
    const double e_half = extrapolate(std::sqrt(2.0), v_half);
    const double value = e_int <= e_half ? v_int : v_half;
    const double err = std::min(e_int, e_half);
    if (!(err <= 1e-8 * (1.0 + std::abs(value))))
        throw std::runtime_error("compute_C2: extrapolation ladder did not settle");
    return {chart.params.k * value, std::abs(chart.params.k) * err};
}

double criterion_integral(const MChart& chart, const FundamentalPair& pair, double abstol,
                          double m_upper) {
    const double m0 = chart.M0;
    if (m_upper < 0.0) m_upper = m0;
    if (!(m_upper <= m0))
        throw std::invalid_argument("criterion_integral: upper limit beyond the sweep");
    // the integrand is at worst logarithmic at s = 0, so the floored corner
    // contributes O(s_floor |log s_floor|), far below abstol
    const double s_floor = 1e-13 * std::sqrt(m0);
    auto f = [&chart, &pair, m0, s_floor](double s) {
        if (s <= s_floor) return 0.0;
        const double xi = std::min(s * s, m0 * (1.0 - 1e-13));
        const double fs = chart.speed(xi);
        if (fs == 0.0) return 0.0;
        return pair.ybar2(xi) / (s * fs);
    };
    return integrate_adaptive(f, 0.0, std::sqrt(m_upper), abstol);
}

std::string CriterionReport::to_json() const {
    nlohmann::ordered_json j;
    j["criterion"] = criterion;
    j["d"] = d;
    j["k"] = k;
    j["c"] = c;
    j["M0"] = M0;
    j["F0"] = F0;
    j["G0"] = G0;
    j["u0"] = u0;
    j["v0"] = v0;
    j["value"] = value;
    j["c2"] = c2;
    j["error"] = error;
    j["path_min"] = path_min;
    j["smooth"] = smooth;
    j["boundary"] = boundary;
    return j.dump();
}

namespace {

// Sweep minimum of q(M) = 1 + C2 W(M), W(M) = int_M^M0 ybar2 / (2 xi F) dxi.
// W is extremal exactly at interior sign changes of ybar2, so the minimum is
// decided on the endpoint values {0, I} plus one W per detected crossing.
double sweep_min_of_q(const MChart& chart, const FundamentalPair& pair, double c2,
                      double full_integral, double* w_scale_out) {
    std::vector<double> w_candidates{0.0, full_integral};
    const double m0 = chart.M0;
    const int n = 600;
    std::vector<double> samples;
    samples.reserve(n + 20);
    for (int u = 20; u >= 1; --u) samples.push_back(m0 / n * std::pow(2.0, -u));
    for (int j = 1; j < n; ++j) samples.push_back(m0 * j / n);
    double prev_m = samples.front();
    double prev_v = pair.ybar2(prev_m);
    for (std::size_t i = 1; i < samples.size(); ++i) {
        const double m = samples[i];
        const double v = pair.ybar2(m);
        if (prev_v * v < 0.0) {
            double lo = prev_m, hi = m, f_lo = prev_v;
            while (hi - lo > 1e-14 * m0) {
                const double mid = 0.5 * (lo + hi);
                const double f_mid = pair.ybar2(mid);
                if (f_mid == 0.0) {
                    lo = hi = mid;
                    break;
                }
                if ((f_lo < 0.0) == (f_mid < 0.0)) {
                    lo = mid;
                    f_lo = f_mid;
                } else {
                    hi = mid;
                }
            }
            const double m_cross = 0.5 * (lo + hi);
            w_candidates.push_back(full_integral -
                                   criterion_integral(chart, pair, 1e-10, m_cross));
        }
        prev_m = m;
        prev_v = v;
    }
    double q_min = std::numeric_limits<double>::infinity();
    double w_scale = 0.0;
    for (double w : w_candidates) {
        q_min = std::min(q_min, 1.0 + c2 * w);
        w_scale = std::max(w_scale, std::abs(w));
    }
    if (w_scale_out) *w_scale_out = w_scale;
    return q_min;
}

}  // namespace

CriterionReport criterion_c0_zero_velocity(const Params& p, double G0, double v0) {
    p.validate();
    if (!p.analytic_regime() || p.m != 0.0 || p.c != 0.0 || !(p.k > 0.0) || p.d < 3)
        throw std::invalid_argument(
            "criterion_c0_zero_velocity: needs k > 0, c = 0, m = 0, no friction, d >= 3");
    if (!(G0 < 0.0)) throw std::domain_error("criterion_c0_zero_velocity: requires G0 < 0");
    const MChart chart = m_chart(p, 0.0, G0);
    const FundamentalPair pair = hypergeom_fundamental(p.d, chart.M0);
    const CriterionConstant c2 = compute_C2(chart, pair, v0);
    const double integral = criterion_integral(chart, pair);

    CriterionReport rep;
    rep.criterion = "c0-zero-velocity";
    rep.d = p.d;
    rep.k = p.k;
    rep.c = p.c;
    rep.M0 = chart.M0;
    rep.G0 = G0;
    rep.v0 = v0;
    rep.c2 = c2.value;
    rep.value = 1.0 + c2.value * integral;
    rep.error = c2.error * std::abs(integral) + 1e-10 * (1.0 + std::abs(c2.value));
    double w_scale = 0.0;
    rep.path_min = sweep_min_of_q(chart, pair, c2.value, integral, &w_scale);
    const double band =
        std::max(1e-8, 4.0 * (c2.error * w_scale + 1e-10 * (1.0 + std::abs(c2.value))));
    rep.smooth = rep.path_min > 0.0;
    rep.boundary = std::abs(rep.path_min) <= band;
    return rep;
}

CriterionReport criterion_d4_c0_zero_velocity(double M0, double v0) {
    if (!(M0 > 0.0))
        throw std::invalid_argument("criterion_d4_c0_zero_velocity: requires M0 > 0");
    CriterionReport rep;
    rep.criterion = "d4-c0-zero-velocity";
    rep.d = 4;
    rep.k = 1.0;
    rep.M0 = M0;
    rep.G0 = -0.25 * M0 * M0;
    rep.v0 = v0;
    rep.c2 = -2.0 * v0 / (M0 * M0 * M0);
    rep.value = 1.0 - 2.0 * v0 / (M0 * M0);
    rep.error = 0.0;
    rep.path_min = std::min(1.0, rep.value);  // q is monotone between 1 and its limit
    rep.smooth = rep.value > 0.0;
    rep.boundary = std::abs(rep.value) <= 1e-12 * (1.0 + 2.0 * std::abs(v0) / (M0 * M0));
    return rep;
}

CriterionReport criterion_d4_attractive(double M0, double v0) {
    const MChart chart = attractive_chart(M0);
    const FundamentalPair heun = d4_attractive_pair_heun(M0);
    const FundamentalPair frob = d4_attractive_pair_frobenius(M0);
    require_nondegenerate(heun);
    require_nondegenerate(frob);

    const CriterionConstant c2_h = compute_C2(chart, heun, v0);
    const double i_h = criterion_integral(chart, heun);
    const CriterionConstant c2_f = compute_C2(chart, frob, v0);
    const double i_f = criterion_integral(chart, frob);
    const double theta_h = 1.0 + c2_h.value * i_h;
    const double theta_f = 1.0 + c2_f.value * i_f;

    CriterionReport rep;
    rep.criterion = "d4-attractive-zero-velocity";
    rep.d = 4;
    rep.k = -1.0;
    rep.c = 1.0;
    rep.M0 = M0;
    rep.G0 = 0.25 * (1.0 - M0 * M0);
    rep.v0 = v0;
    rep.c2 = c2_h.value;
    rep.value = theta_h;
    rep.error = c2_h.error * std::abs(i_h) + 1e-10 * (1.0 + std::abs(c2_h.value)) +
                std::abs(theta_h - theta_f);
    // ybar2 keeps one sign across this family, so q runs monotonically from 1
    // to the limit and the limit's sign decides
    rep.path_min = std::min(1.0, rep.value);
    rep.smooth = rep.value > 0.0;
    rep.boundary = std::abs(rep.value) <= std::max(1e-8, 4.0 * rep.error);
    return rep;
}

MSweepReport q_of_M_d4_general(double M0, double F0, double u0, double v0) {
    if (!(M0 > 0.0)) throw std::invalid_argument("q_of_M_d4_general: requires M0 > 0");
    Params p;
    p.d = 4;
    p.k = 1.0;
    p.c = 0.0;
    const double G0 = -0.25 * M0 * M0;
    const MChart chart = m_chart(p, F0, G0);
    const double cd = chart.Cd;

    MSweepReport rep;
    rep.M0 = M0;
    rep.F0 = F0;
    rep.u0 = u0;
    rep.v0 = v0;

    if (F0 > 0.0) {
        // outward data: M decreases from M0; carry (q, P, R) in tau = M0 - M
        const double m_cut = std::max(1e-7, 1e-5 * M0);
        auto rhs = [chart, M0](double tau, std::span<const double> y, std::span<double> dy) {
            const double M = M0 - tau;
            const double f = chart.speed(M);
            const double g = chart.g_of(M);
            const double q1 = 6.0 * chart.f_squared(M) - 6.0 * g;
            const double q2 = 6.0 * f;
            const double h = 1.0 / (2.0 * f * M);
            dy[0] = y[1] * h;
            dy[1] = y[2] * h;
            dy[2] = -(q2 * y[2] + q1 * y[1]) * h;
        };
        OdeOptions opts;
        opts.reltol = 1e-12;
        opts.abstol = 1e-13;
        opts.escape_norm = 1e9;
        std::vector<EventSpec> events;
        events.push_back({[](double, std::span<const double> y) { return y[0]; }, -1, true});
        std::vector<DenseSegment> segments;
        auto collect = [&segments](const DenseSegment& s) { segments.push_back(s); };
        auto sol = integrate_ode(rhs, 0.0, M0 - m_cut, {1.0, u0, -2.0 * F0 * u0 - v0},
                                 opts, events, collect);
        if (sol.status != OdeStatus::reached_end && sol.status != OdeStatus::event)
            throw std::runtime_error("q_of_M_d4_general: chart sweep stopped early");
        auto path = std::make_shared<detail::DensePath>(std::move(segments), sol.y, sol.t);

        rep.m_reach = M0;
        rep.q_of_m = [path, M0](double M) {
            const double tau = std::clamp(M0 - M, path->t_begin(), path->t_end());
            std::array<double, 3> y{};
            path->eval(tau, y);
            return y[0];
        };

        const bool crossed = sol.status == OdeStatus::event;
        const double m_end = M0 - sol.t;
        if (crossed) {
            rep.smooth = false;
            rep.boundary = false;
            rep.q_min = 0.0;
            rep.m_at_q_min = m_end;
            rep.q_limit = 0.0;
            rep.tail_estimate = 0.0;
        } else {
            const auto [tau_min, q_min] = path_min(*path, 0);
            const double corr = sol.y[1] / std::sqrt(cd * m_cut);
            rep.q_limit = sol.y[0] + corr;
            rep.tail_estimate = std::abs(corr);
            const double band = std::max(1e-10, 0.05 * rep.tail_estimate);
            if (q_min <= rep.q_limit) {
                rep.q_min = q_min;
                rep.m_at_q_min = M0 - tau_min;
            } else {
                rep.q_min = rep.q_limit;
                rep.m_at_q_min = m_cut;
            }
            rep.smooth = rep.q_min > band;
            rep.boundary = !rep.smooth && rep.q_min >= -band;
        }
        const double lo = m_end + 0.02 * (M0 - m_end);
        const double hi = m_end + 0.95 * (M0 - m_end);
        rep.monotone_curvature = one_signed_curvature(rep.q_of_m, lo, hi);
        return rep;
    }

    // data moving inward first: integrate in time across the turning point
    const double horizon = default_horizon(p);
    CoupledTrajectory run = integrate_coupled(p, {1.0, F0, G0, u0, v0}, horizon, 1e-11);
    const QZeroReport zero = detect_q_zero(run);
    auto traj = std::make_shared<CoupledTrajectory>(std::move(run));

    // time of the turning point, where F crosses zero and M peaks
    double t_turn = traj->t_end();
    bool turned = F0 == 0.0;
    if (!turned) {
        double lo = traj->t_begin();
        for (const auto& seg : traj->path().segments()) {
            if (seg.eval_component(1, 1.0) >= 0.0) {
                double a = lo, b = seg.t1();
                for (int i = 0; i < 200 && b - a > 1e-14 * (1.0 + b); ++i) {
                    const double mid = 0.5 * (a + b);
                    (traj->at(mid).F < 0.0 ? a : b) = mid;
                }
                t_turn = 0.5 * (a + b);
                turned = true;
                break;
            }
            lo = seg.t1();
        }
    } else {
        t_turn = traj->t_begin();
    }

    const double t_end = traj->t_end();
    const CoupledState last = traj->final_state();
    rep.m_reach = turned ? m_of_g(traj->at(t_turn).G) : m_of_g(last.G);

    // q over the final monotone branch of M(t), by inverting M
    const double t_lo = turned ? t_turn : traj->t_begin();
    const bool m_decreasing = turned;
    rep.q_of_m = [traj, t_lo, t_end, m_decreasing](double M) {
        double a = t_lo, b = t_end;
        for (int i = 0; i < 200 && b - a > 1e-14 * (1.0 + b); ++i) {
            const double mid = 0.5 * (a + b);
            const double mm = m_of_g(traj->at(mid).G);
            if (m_decreasing ? mm > M : mm < M) a = mid;
            else b = mid;
        }
        return traj->at(0.5 * (a + b)).q;
    };

    const bool crossed = zero.t_star.has_value();
    rep.q_min = zero.q_min;
    rep.m_at_q_min = m_of_g(traj->at(zero.t_at_q_min).G);
    if (crossed) {
        rep.smooth = false;
        rep.boundary = false;
        rep.q_limit = 0.0;
        rep.tail_estimate = 0.0;
    } else {
        const double m_end = m_of_g(last.G);
        const double corr = m_end > 0.0 ? last.p1 / std::sqrt(cd * m_end) : 0.0;
        rep.q_limit = last.q + corr;
        rep.tail_estimate = std::abs(corr);
        const double band = std::max(1e-10, 0.05 * rep.tail_estimate);
        const double q_low = std::min(zero.q_min, rep.q_limit);
        rep.q_min = q_low;
        if (rep.q_limit < zero.q_min) rep.m_at_q_min = m_end;
        rep.smooth = q_low > band && !zero.boundary;
        rep.boundary = !rep.smooth && (q_low >= -band || zero.boundary);
    }

    const double b_lo = turned ? m_of_g(last.G) : M0;
    const double b_hi = rep.m_reach;
    const double span = b_hi - b_lo;
    rep.monotone_curvature =
        span > 1e-6 * (1.0 + b_hi) &&
        one_signed_curvature(rep.q_of_m, b_lo + 0.02 * span, b_lo + 0.95 * span);
    return rep;
}

}  // namespace epcrit
