#pragma once

// Coupled nonlinear + linear dynamics along a characteristic, zero detection
// for the decisive linear component q, the equivalent direct slope system,
// the third-order consistency residual, and verdict assembly.

#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "epcrit/characteristics.hpp"
#include "epcrit/model.hpp"
#include "epcrit/ode.hpp"

namespace epcrit {

// Linear companion of the slope data: u = p1/q and v = p2/q while q > 0.
struct LinearState {
    double q = 1.0;
    double p1 = 0.0;
    double p2 = 0.0;
};

struct CoupledState {
    double t = 0.0;
    double r = 0.0;
    double F = 0.0;
    double G = 0.0;
    double q = 1.0;
    double p1 = 0.0;
    double p2 = 0.0;
};

struct UvState {
    double t = 0.0;
    double r = 0.0;
    double F = 0.0;
    double G = 0.0;
    double u = 0.0;
    double v = 0.0;
};

namespace detail {

// Dense piecewise-polynomial path shared by the coupled and direct systems.
class DensePath {
  public:
    DensePath() = default;
    DensePath(std::vector<DenseSegment> segments, std::vector<double> final_y,
              double final_t)
        : segments_(std::move(segments)), final_y_(std::move(final_y)), final_t_(final_t) {}

    double t_begin() const {
        return segments_.empty() ? final_t_ : segments_.front().t0();
    }
    double t_end() const { return final_t_; }
    const std::vector<DenseSegment>& segments() const { return segments_; }
    const std::vector<double>& final_y() const { return final_y_; }

    void eval(double t, std::span<double> out) const;

  private:
    std::vector<DenseSegment> segments_;
    std::vector<double> final_y_;
    double final_t_ = 0.0;
};

}  // namespace detail

// Trajectory of (r, F, G, q, p1, p2). Integration stops early when q crosses
// zero or when |F| or |G| leaves the escape box; both conditions are flagged.
class CoupledTrajectory {
  public:
    CoupledTrajectory(detail::DensePath path, bool fg_escaped, bool q_crossed_zero)
        : path_(std::move(path)), fg_escaped_(fg_escaped), q_crossed_(q_crossed_zero) {}

    CoupledState at(double t) const;
    CoupledState final_state() const { return at(path_.t_end()); }
    double t_begin() const { return path_.t_begin(); }
    double t_end() const { return path_.t_end(); }
    bool fg_escaped() const { return fg_escaped_; }
    bool stopped_at_q_zero() const { return q_crossed_; }
    const detail::DensePath& path() const { return path_; }

  private:
    detail::DensePath path_;
    bool fg_escaped_;
    bool q_crossed_;
};

class UvTrajectory {
  public:
    UvTrajectory(detail::DensePath path, bool escaped)
        : path_(std::move(path)), escaped_(escaped) {}

    UvState at(double t) const;
    UvState final_state() const { return at(path_.t_end()); }
    double t_begin() const { return path_.t_begin(); }
    double t_end() const { return path_.t_end(); }
    // escape of (u, v) or of (F, G); the end time brackets the singularity
    bool escaped() const { return escaped_; }

  private:
    detail::DensePath path_;
    bool escaped_;
};

struct CoupledIntegrationFailure : std::runtime_error {
    CoupledState last;
    explicit CoupledIntegrationFailure(const CoupledState& s)
        : std::runtime_error("coupled integration failed before the requested time"),
          last(s) {}
};

// Simultaneous integration of the characteristic flow and the linear system
//   dq/dt  = p1
//   dp1/dt = -(2F + mu) p1 - k p2
//   dp2/dt = c'(r) r F q + (c - d G) p1 - d F p2
// with initial data (q, p1, p2) = (1, u0, v0).
CoupledTrajectory integrate_coupled(const Params& p, const InitialPoint& ip,
                                    double horizon, double tol = 1e-10,
                                    double escape_threshold = 1e6);

// Zero scan of q over a dense trajectory. A sign change yields t_star; a dip
// to within touch_tol of zero without a sign change sets the boundary flag.
struct QZeroReport {
    std::optional<double> t_star;
    bool boundary = false;
    double q_min = 1.0;
    double t_at_q_min = 0.0;
};

QZeroReport detect_q_zero(const CoupledTrajectory& traj, double time_tol = 1e-10,
                          double touch_tol = 1e-10);

// Direct integration of the slope system
//   du/dt = -u^2 - (2F + mu) u - k v
//   dv/dt = -u v + (c - d G) u - d F v + c'(r) r F
// coupled to the characteristic flow; finite-time escape of the slopes (the
// nonlinear image of a q zero) ends the run with the escape flag set.
UvTrajectory direct_uv(const Params& p, const InitialPoint& ip, double t_end,
                       double tol = 1e-10, double escape_threshold = 1e6);

// Third-order consistency residual of the linear component along a coupled
// trajectory; reports the maximum absolute residual over a uniform sample.
double third_order_residual(const CoupledTrajectory& traj, const Params& p,
                            int samples = 2048);

// Same residual over an arbitrary state path (exposed so perturbed paths can
// serve as negative controls).
double third_order_residual(const std::function<CoupledState(double)>& path,
                            double t0, double t1, const Params& p, int samples);

struct BlowupVerdict {
    enum class Outcome { smooth_certified, smooth_to_horizon, blow_up };
    enum class Mechanism {
        q_zero,
        trajectory_escape,
        separatrix_certificate,
        analytic_criterion
    };
    Outcome outcome = Outcome::smooth_to_horizon;
    std::optional<Mechanism> mechanism;
    std::optional<double> t_star;  // present iff blow-up
    double q_min = 1.0;
    double horizon = 0.0;
    std::optional<double> tail_bound;  // set by the node-regime certificate
    bool boundary = false;  // q grazed zero within root tolerance
};

std::string to_string(BlowupVerdict::Outcome o);
std::string to_string(BlowupVerdict::Mechanism m);

struct HorizonPolicy {
    double horizon = 0.0;  // 0 = choose by regime
    double tol = 1e-10;
    double escape_threshold = 1e6;
    double q_touch_tol = 1e-10;
    double node_eps = 1e-4;    // admissible distance of (F, G) to the node
    double node_delta = 1e-4;  // admissible size of |p1|, |p2|
};

// Regime-dependent default integration horizon.
double default_horizon(const Params& p);

// Full classification pipeline: separatrix certificate, coupled integration
// with q-zero and escape detection, node-regime tail certificate, and the
// horizon fallback.
BlowupVerdict classify_point(const Params& p, const InitialPoint& ip,
                             const HorizonPolicy& policy = {});

// Closed-form smoothness test for data sitting exactly on the stable node
// (k < 0, c > 0): 1 - (d F* u0 + v0) / (1 - d (G* + 2 F*^2)) > 0.
// Throws std::domain_error when the denominator vanishes.
bool equilibrium_criterion(const Params& p, double u0, double v0);

// One-record JSON serialization of a classified point.
std::string verdict_json(const InitialPoint& ip, const BlowupVerdict& v);

}  // namespace epcrit
