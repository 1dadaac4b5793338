#pragma once

// Model data: system parameters, radial profiles for the initial velocity and
// field slopes, and the derived per-characteristic initial point.

#include <functional>
#include <limits>
#include <memory>
#include <vector>

namespace epcrit {

// Parameters of the radial system. The background is either the constant `c`
// or, when `c_of_r` is set, a radius-dependent function (then `c_slope` must
// supply its derivative).
struct Params {
    int d = 3;         // spatial dimension, >= 1
    double k = 1.0;    // forcing sign/strength, nonzero (k > 0 repulsive)
    double c = 0.0;    // constant background
    double m = 0.0;    // confinement strength
    double mu = 0.0;   // friction coefficient, >= 0
    std::function<double(double)> c_of_r;    // variable background, optional
    std::function<double(double)> c_slope;   // d/dr of the variable background

    bool analytic_regime() const { return mu == 0.0 && !c_of_r; }
    double background(double r) const { return c_of_r ? c_of_r(r) : c; }
    double background_slope(double r) const { return c_of_r ? c_slope(r) : 0.0; }

    // Throws std::invalid_argument on out-of-range values.
    void validate() const;
};

// A scalar profile of radius. Built-in analytic families plus sampled grids
// with C2 spline interpolation. Sampled profiles continue with the last knot
// value beyond the grid; analytic families are defined for all r >= 0.
// Profiles derived from a density by `radial_field_from_density` evaluate a
// radial integral of the stored density on demand.
class RadialProfile {
  public:
    enum class Kind { gaussian, rational, constant, poly_gaussian, sampled, induced };

    // a * exp(-(r/sigma)^2), sigma > 0
    static RadialProfile gaussian(double amplitude, double sigma);
    // a / (1 + r^2)^p, p > 0
    static RadialProfile rational(double amplitude, double power);
    static RadialProfile constant(double value);
    // (sum_i coeffs[i] r^i) * exp(-(r/sigma)^2), sigma > 0
    static RadialProfile poly_gaussian(std::vector<double> coeffs, double sigma);
    // Natural cubic spline through (radii[i], values[i]); radii must be
    // strictly increasing and nonnegative. Constant beyond the last knot.
    static RadialProfile sampled(std::vector<double> radii, std::vector<double> values);

    double value(double r) const;
    double slope(double r) const;
    double operator()(double r) const { return value(r); }

    Kind kind() const;
    // Radius beyond which the profile no longer varies (last knot for sampled
    // grids, +infinity for analytic families).
    double bound() const;

  private:
    struct Impl;
    std::shared_ptr<const Impl> impl_;
    explicit RadialProfile(std::shared_ptr<const Impl> impl) : impl_(std::move(impl)) {}
    friend RadialProfile radial_field_from_density(const RadialProfile&, int, double);
};

// Initial data of one characteristic: position, local slopes, and the radial
// derivatives u0 = r F'(r), v0 = r G'(r) seeding the divergence dynamics.
struct InitialPoint {
    double r0 = 0.0;
    double F0 = 0.0;
    double G0 = 0.0;
    double u0 = 0.0;
    double v0 = 0.0;
};

// Reads one characteristic's initial data off the velocity and field profiles.
InitialPoint derive_point(const RadialProfile& F, const RadialProfile& G, double r0);

// Field profile induced by a nonnegative density in dimension d >= 2:
//   field(r) = r^-d * integral_0^r density(s) s^(d-1) ds,
// with the limit density(0)/d at r = 0. Evaluation integrates adaptively to
// absolute tolerance `abstol` (scaled by r^d so the field value itself meets
// the tolerance). Encountering density below -1e-12 raises invalid input.
RadialProfile radial_field_from_density(const RadialProfile& density, int d,
                                        double abstol = 1e-12);

// Equivalence that removes the confinement term: new parameters with m = 0
// and background c + d m / k; G values translate by m / k. When the shifted
// background is negative, the G axis and the signs of k and c flip as well.
// `sign` is +1, or -1 when that flip occurred.
struct ShiftedModel {
    Params params;
    double G_offset = 0.0;
    double sign = 1.0;
};

// Requires the analytic regime (mu = 0, constant background).
ShiftedModel shift_to_zero_equilibrium(const Params& p);

// Applies the shift to one characteristic's data: G -> sign*(G + offset),
// v -> sign*v, with r, F, u unchanged.
InitialPoint shift_point(const ShiftedModel& s, const InitialPoint& pt);

// Rest points of the (F, G) phase flow in the analytic regime, keyed by the
// sign of m*d + c*k.
struct Equilibrium {
    enum class Type { center, saddle_node, saddle, stable_node, unstable_node };
    Type type;
    double F = 0.0;
    double G = 0.0;
};

std::vector<Equilibrium> classify_equilibria(const Params& p);

// Non-strict positivity scan of a profile over [0, r_max]: values above -tol
// pass. Reports the smallest violating radius and the sampled minimum.
struct PositivityReport {
    bool nonnegative = true;
    double first_violation = std::numeric_limits<double>::quiet_NaN();
    double min_value = 0.0;
    double argmin = 0.0;
};

PositivityReport check_density_positivity(const RadialProfile& density, double r_max,
                                          double tol = 1e-12);

}  // namespace epcrit
