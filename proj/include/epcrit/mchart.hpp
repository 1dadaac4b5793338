#pragma once

// Closed-form blow-up criteria in the chart M = |c - d G|^{2/d}, d >= 3.
//
// Along a characteristic with constant background and no confinement or
// friction, the phase curve (F, G) is graphed by F^2(M) over the chart
// coordinate, and the linearized amplitudes (q, p1, p2) of the slope fields
// obey a second-order equation in M. For zero-velocity data the amplitude
// q(M) has an explicit fundamental-pair representation whose sign at M -> 0
// decides between global smoothness and finite-time derivative blow-up.
//
// Two explicit regimes are covered: the repulsive zero-background family
// (k > 0, c = 0), where the fundamental pair is hypergeometric, and the
// attractive confined family (d = 4, k = -1, c = 1), where it is built from
// Heun-class local solutions. A general d = 4 sweep integrates the amplitude
// system over the chart for arbitrary slope data.
//
// All evaluators returned here are immutable after construction and safe to
// call concurrently; criterion functions are pure.

#include <functional>
#include <string>

#include "epcrit/model.hpp"

namespace epcrit {

// One characteristic's phase curve in the chart coordinate. Valid in the
// half-plane G < c/d with shifted parameters (m == 0, constant background).
struct MChart {
    Params params;
    double F0 = 0.0;
    double M0 = 0.0;  // chart coordinate of the initial point
    double Cd = 0.0;  // phase-curve constant

    // F^2 along the phase curve as a function of the chart coordinate
    double f_squared(double M) const;
    double f_squared_prime(double M) const;
    // G recovered from the chart coordinate
    double g_of(double M) const;
    // +sqrt(F^2), clamped to zero where the curve has no real branch
    double speed(double M) const;
    // largest chart coordinate the curve reaches; d = 4, c = 0, k > 0 only
    double m_plus() const;
};

// Chart through (F0, G0). Throws std::invalid_argument outside the supported
// regime (variable background, m != 0, mu != 0, d < 3) and std::domain_error
// when G0 >= c/d.
MChart m_chart(const Params& p, double F0, double G0);

// Coefficients of the amplitude equations at one chart point: the
// second-order form Y'' + S1 Y' + S2 Y = 0 and the first-order system
// d(q, P, R)/dM = (-P, -R, Q2 R + Q1 P + Q0 q) / (2 F M).
struct YCoefficients {
    double S1 = 0.0;
    double S2 = 0.0;
    double Q0 = 0.0;  // vanishes once the equilibrium shift has been applied
    double Q1 = 0.0;
    double Q2 = 0.0;
    bool at_turning_point = false;  // F^2(M) = 0; S1 and S2 are not finite there
};

// Requires M in (0, M0]. At a turning point the S-coefficients are left NaN
// and the flag is set.
YCoefficients ode_Y_coeffs(const MChart& chart, double M);

// Fundamental pair of the second-order amplitude equation, normalized so
// that ybar2 vanishes at M0 while y1 does not, and both vanish at M = 0.
// Evaluators are defined on (0, M0); derivatives may diverge at the ends.
struct FundamentalPair {
    int d = 0;
    double M0 = 0.0;
    std::function<double(double)> y1;
    std::function<double(double)> y1_prime;
    std::function<double(double)> ybar2;
    std::function<double(double)> ybar2_prime;
    double y1_at_m0 = 0.0;
};

// Hypergeometric pair for the zero-velocity repulsive family (k > 0, c = 0,
// F0 = 0). y1 is the polynomial-form solution with y1(M0) = d - 2; ybar2 is
// hypergeometric, with an explicit connection constant subtracted for d >= 5.
FundamentalPair hypergeom_fundamental(int d, double M0);

// Pairs for the attractive confined family (d = 4, k = -1, c = 1, F0 = 0),
// M0 in (0, 1), by two independent constructions: Heun-class local series
// about M = 0 continued across the chart, and direct integration of the
// amplitude equation from a small-M series seed. Both share the
// normalization y1 ~ M^2, ybar2 ~ M as M -> 0.
FundamentalPair d4_attractive_pair_heun(double M0);
FundamentalPair d4_attractive_pair_frobenius(double M0);

// Amplitude constant attached to zero-velocity slope data: the limit of
// v0 / (2 M0 F(M) ybar2'(M)) as M -> M0, scaled by k, extrapolated from a
// geometric ladder of chart offsets. Throws std::runtime_error when the
// ladder does not settle to 1e-8 relative.
struct CriterionConstant {
    double value = 0.0;
    double error = 0.0;  // extrapolation error estimate
};

CriterionConstant compute_C2(const MChart& chart, const FundamentalPair& pair, double v0);

// integral of ybar2 / (2 xi F(xi)) over (0, m_upper], desingularized by
// xi = s^2; m_upper < 0 (the default) means the full sweep (0, M0]
double criterion_integral(const MChart& chart, const FundamentalPair& pair,
                          double abstol = 1e-10, double m_upper = -1.0);

// Outcome of one analytic criterion evaluation. `value` is the criterion
// expression, the limit of q along the sweep; `path_min` is the smallest q
// anywhere on the sweep and its sign is the smoothness verdict. The two
// coincide (path_min = min(1, value)) whenever ybar2 keeps one sign on
// (0, M0), which holds for every covered family except d = 3, where q dips
// below its limit and a thin band of data blows up despite value > 0.
struct CriterionReport {
    std::string criterion;
    int d = 0;
    double k = 0.0;
    double c = 0.0;
    double M0 = 0.0;
    double F0 = 0.0;
    double G0 = 0.0;
    double u0 = 0.0;
    double v0 = 0.0;
    double value = 0.0;
    double c2 = 0.0;     // amplitude constant entering the integral term
    double error = 0.0;  // propagated numerical error estimate
    double path_min = 1.0;
    bool smooth = false;
    bool boundary = false;

    std::string to_json() const;
};

// Zero-velocity criterion for k > 0, c = 0, m = mu = 0, d >= 3: smooth for
// all time iff q stays positive along the whole sweep, decided by path_min.
// Requires G0 < 0.
CriterionReport criterion_c0_zero_velocity(const Params& p, double G0, double v0);

// Same criterion specialized to d = 4, where the integral collapses to an
// algebraic expression: 1 - 2 v0 / M0^2.
CriterionReport criterion_d4_c0_zero_velocity(double M0, double v0);

// Zero-velocity criterion for the attractive confined family d = 4, k = -1,
// c = 1, M0 in (0, 1). Evaluated through both fundamental-pair routes; the
// reported error includes the spread between them. Throws
// std::runtime_error if the constructed pair degenerates.
CriterionReport criterion_d4_attractive(double M0, double v0);

// Amplitude sweep over the chart for d = 4, k = 1, c = 0 and arbitrary
// (F0, u0, v0). Outward data is integrated directly in M; data moving inward
// first is integrated in time across the turning point at m_plus.
struct MSweepReport {
    double M0 = 0.0;
    double F0 = 0.0;
    double u0 = 0.0;
    double v0 = 0.0;
    double m_reach = 0.0;    // largest chart coordinate visited
    double q_min = 1.0;
    double m_at_q_min = 0.0;
    double q_limit = 1.0;        // extrapolated amplitude as M -> 0
    double tail_estimate = 0.0;  // size of the extrapolated correction
    bool smooth = false;
    bool boundary = false;
    bool monotone_curvature = false;  // second differences keep one sign
    std::function<double(double)> q_of_m;  // final monotone branch
};

MSweepReport q_of_M_d4_general(double M0, double F0, double u0, double v0);

}  // namespace epcrit
