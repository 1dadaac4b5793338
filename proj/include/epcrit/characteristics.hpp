#pragma once

// Nonlinear dynamics along a single characteristic: trajectory integration,
// first integrals, conserved mass, separatrix tests, orbit periods, and the
// isochronicity classification.

#include <cmath>
#include <limits>
#include <stdexcept>
#include <vector>

#include "epcrit/model.hpp"
#include "epcrit/ode.hpp"

namespace epcrit {

struct CharacteristicState {
    double t = 0.0;
    double r = 0.0;
    double F = 0.0;
    double G = 0.0;
};

// Conserved quantity of the frictionless constant-background flow. The d = 2
// form carries a logarithm; every other dimension shares one algebraic form.
struct FirstIntegralConstant {
    enum class Form { d2_log, general_d };
    double value = 0.0;
    Form form = Form::general_d;
};

// Dense trajectory of the characteristic system. Segments tile [t0, t1]
// contiguously; `at` evaluates anywhere inside by cubic-free dense output.
class Trajectory {
  public:
    Trajectory(std::vector<DenseSegment> segments, CharacteristicState final_state,
               bool escaped)
        : segments_(std::move(segments)), final_(final_state), escaped_(escaped) {}

    const CharacteristicState& final_state() const { return final_; }
    bool escaped() const { return escaped_; }
    double t_begin() const { return segments_.empty() ? final_.t : segments_.front().t0(); }
    double t_end() const { return final_.t; }
    const std::vector<DenseSegment>& segments() const { return segments_; }

    CharacteristicState at(double t) const;

  private:
    std::vector<DenseSegment> segments_;
    CharacteristicState final_;
    bool escaped_;
};

// Step-size underflow before reaching the requested time; carries the last
// state the integrator accepted.
struct IntegrationFailure : std::runtime_error {
    CharacteristicState last;
    explicit IntegrationFailure(const CharacteristicState& s)
        : std::runtime_error("characteristic integration failed before the requested time"),
          last(s) {}
};

// Integrates dr/dt = F r, dF/dt = -F^2 - m - k G - mu F, dG/dt = c(r) F - d F G
// from s0 to time t_end (t_end > s0.t). Integration stops early, with the
// escaped flag set, once |F| or |G| exceeds `escape_threshold`.
Trajectory integrate_characteristic(const Params& p, const CharacteristicState& s0,
                                    double t_end, double tol = 1e-10,
                                    double escape_threshold = 1e6);

// First integral of the (F, G) flow; requires the analytic regime.
// Throws std::domain_error when evaluated on the singular line d G = c.
FirstIntegralConstant first_integral(const Params& p, double F, double G);

// (c - d G) r^d, constant along characteristics for constant background.
double conserved_mass(const Params& p, double r, double G);

// Squared F of the separatrix through the origin, for k < 0, c > 0, m = 0,
// d >= 3, on G < c/d.
double separatrix_F2(const Params& p, double G);

// Same construction in dimension 2 via the logarithmic first integral.
double separatrix_F2_d2(const Params& p, double G);

// Sufficient finite-time escape test: F0 below the signed separatrix branch
// by more than `margin`. Requires the separatrix regime (k < 0, c > 0, m = 0,
// d >= 3) and G0 < c/d.
bool blows_up_by_separatrix(const Params& p, double F0, double G0, double margin = 1e-9);

// Center-regime classification: the oscillation period is amplitude-free
// exactly in dimensions 1 and 4.
bool is_isochronous(const Params& p);

// Isochronicity defect of the equivalent oscillator with damping-like term
// (2+d) F F' and restoring force (ck+md) F + d F^3; identically zero exactly
// when the center is isochronous.
double isochrony_tau(const Params& p, double F);

// Period of the closed orbit through (F0, G0) in the center regime.
// Throws std::invalid_argument when the point is outside the closed-orbit
// region and std::runtime_error when no return occurs within the horizon.
double period_of_orbit(const Params& p, double F0, double G0, double tol = 1e-10);

// Full divergences from slopes: D = div V, lambda = div E, and the second
// invariant J of the velocity gradient.
struct Divergences {
    double D = 0.0;
    double lambda = 0.0;
    double J = 0.0;
};

Divergences reconstruct_divergences(double F, double G, double u, double v,
                                    const Params& p);

}  // namespace epcrit
