// End-to-end acceptance checks for the blow-up classifier. Each check prints
// one PASS/FAIL line with its runtime; the exit status is the number of
// failures. Tolerances are pinned here and are not configurable.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdarg>
#include <cstdio>
#include <functional>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "epcrit/characteristics.hpp"
#include "epcrit/linearization.hpp"
#include "epcrit/mchart.hpp"
#include "epcrit/model.hpp"
#include "epcrit/scan.hpp"

using namespace epcrit;

namespace {

struct CheckResult {
    bool pass = false;
    std::string detail;
};

std::string fmt(const char* spec, ...) {
    char buf[512];
    va_list args;
    va_start(args, spec);
    vsnprintf(buf, sizeof buf, spec, args);
    va_end(args);
    return buf;
}

bool detector_smooth(const Params& p, const InitialPoint& ip) {
    return classify_point(p, ip, {}).outcome != BlowupVerdict::Outcome::blow_up;
}

// 1. The slope field of the linearization agrees with the directly
//    integrated slope system while the amplitude stays away from zero,
//    across the oscillatory, zero-background, and node-attracting regimes.
CheckResult check_slope_equivalence() {
    RunConfig cfg;
    cfg.suite = "radon";
    auto t0 = std::chrono::steady_clock::now();
    SuiteReport rep = cmd_crossval(cfg);
    double dt = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    bool pass = rep.pass && dt < 30.0;
    return {pass, fmt("%d cases, worst |p1/q - u| = %.3e (gate 1e-6), %.2fs (gate 30s)",
                      rep.cases, rep.worst, dt)};
}

// 2. The orbit constant and the transported mass stay put over ten periods.
CheckResult check_conserved_quantities() {
    double worst = 0.0;
    std::string where;
    for (int d : {2, 3, 4}) {
        Params p;
        p.d = d;
        p.k = 1.0;
        p.c = 1.0;
        const double F0 = 0.3, G0 = 0.1;
        const double T = period_of_orbit(p, F0, G0);
        Trajectory traj = integrate_characteristic(p, {0.0, 1.0, F0, G0}, 10.0 * T, 1e-10);
        if (traj.escaped()) return {false, fmt("d=%d orbit escaped", d)};
        const double i0 = first_integral(p, F0, G0).value;
        const double mass0 = conserved_mass(p, 1.0, G0);
        if (std::abs(i0) < 1e-8 || std::abs(mass0) < 1e-8)
            return {false, fmt("d=%d degenerate reference values", d)};
        double drift_i = 0.0, drift_m = 0.0;
        const int samples = 2000;
        for (int n = 0; n <= samples; ++n) {
            const CharacteristicState s = traj.at(10.0 * T * n / samples);
            drift_i = std::max(drift_i, std::abs(first_integral(p, s.F, s.G).value - i0));
            drift_m = std::max(drift_m, std::abs(conserved_mass(p, s.r, s.G) - mass0));
        }
        drift_i /= std::abs(i0);
        drift_m /= std::abs(mass0);
        if (std::max(drift_i, drift_m) > worst) {
            worst = std::max(drift_i, drift_m);
            where = fmt("d=%d", d);
        }
    }
    return {worst < 1e-8, fmt("worst relative drift %.3e at %s (gate 1e-8)", worst, where.c_str())};
}

// 3. d = 4 oscillations share one amplitude-independent period; d = 3 does not.
CheckResult check_isochronous_periods() {
    RunConfig cfg;
    cfg.suite = "isochrony";
    SuiteReport rep = cmd_crossval(cfg);
    return {rep.pass, fmt("%d cases, worst period deviation %.3e (gate 1e-6)", rep.cases, rep.worst)};
}

// 4. The d = 4 zero-background closed form matches the detector on a grid.
CheckResult check_d4_closed_form_grid() {
    RunConfig cfg;
    cfg.suite = "d4-c0";
    auto t0 = std::chrono::steady_clock::now();
    SuiteReport rep = cmd_crossval(cfg);
    double dt = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    bool pass = rep.pass && dt < 120.0;
    return {pass, fmt("%d cases, %d disagreements, %.2fs (gate 120s)", rep.cases, rep.failures, dt)};
}

// 5. The hypergeometric sweep criterion matches the detector for d = 3 and
//    d = 5, and the simplified second solution satisfies the amplitude ODE.
CheckResult check_hypergeometric_criterion() {
    int cases = 0, skipped = 0, disagreements = 0;
    for (int d : {3, 5}) {
        Params p;
        p.d = d;
        p.k = 1.0;
        p.c = 0.0;
        for (int i = 0; i < 10; ++i) {
            const double m0 = 0.5 + 1.5 * i / 9.0;
            const double g0 = -std::pow(m0, 0.5 * d) / d;
            for (int j = 0; j < 10; ++j) {
                const double v0 = -3.0 + 4.0 * j / 9.0;
                const CriterionReport rep = criterion_c0_zero_velocity(p, g0, v0);
                if (std::abs(rep.path_min) < 0.01) {
                    ++skipped;
                    continue;
                }
                ++cases;
                if (rep.smooth != detector_smooth(p, {1.0, 0.0, g0, 0.0, v0})) ++disagreements;
            }
        }
    }

    // Y1 = x (d x^{(d-2)/2} - 2), x = M / M0, must solve Y'' + S1 Y' + S2 Y = 0.
    double worst_res = 0.0;
    for (int d : {3, 5}) {
        Params p;
        p.d = d;
        p.k = 1.0;
        p.c = 0.0;
        for (double m0 : {0.7, 1.3}) {
            const MChart chart = m_chart(p, 0.0, -std::pow(m0, 0.5 * d) / d);
            const double pw = 0.5 * (d - 2);
            for (double x = 0.05; x < 0.95; x += 0.05) {
                const auto co = ode_Y_coeffs(chart, x * m0);
                if (co.at_turning_point) return {false, "unexpected turning point"};
                const double y = x * (d * std::pow(x, pw) - 2.0);
                const double yp = (d * (1.0 + pw) * std::pow(x, pw) - 2.0) / m0;
                const double ypp = d * pw * (1.0 + pw) * std::pow(x, pw - 1.0) / (m0 * m0);
                const double scale = std::abs(ypp) + std::abs(co.S1 * yp) + std::abs(co.S2 * y);
                worst_res = std::max(worst_res, std::abs(ypp + co.S1 * yp + co.S2 * y) / scale);
            }
        }
    }
    bool pass = disagreements == 0 && cases > 0 && worst_res < 1e-9;
    return {pass, fmt("%d cases (%d near boundary skipped), %d disagreements, ODE residual %.3e (gate 1e-9)",
                      cases, skipped, disagreements, worst_res)};
}

// 6. The two independent constructions of the attractive-regime fundamental
//    pair coincide, and the resulting criterion sign matches the detector.
CheckResult check_attractive_dual_route() {
    double worst_pair = 0.0;
    for (double m0 : {0.15, 0.3, 0.5, 0.7, 0.85}) {
        const FundamentalPair heun = d4_attractive_pair_heun(m0);
        const FundamentalPair frob = d4_attractive_pair_frobenius(m0);
        for (int j = 1; j <= 20; ++j) {
            const double m = m0 * (0.05 + 0.9 * (j - 1) / 19.0);
            const double s1 = std::abs(heun.y1(m)) + std::abs(frob.y1(m)) + 1e-30;
            worst_pair = std::max(worst_pair, std::abs(heun.y1(m) - frob.y1(m)) / s1);
            const double s2 = std::abs(heun.ybar2(m)) + std::abs(frob.ybar2(m)) + 1e-30;
            worst_pair = std::max(worst_pair, std::abs(heun.ybar2(m) - frob.ybar2(m)) / s2);
        }
    }

    Params p;
    p.d = 4;
    p.k = -1.0;
    p.c = 1.0;
    int cases = 0, skipped = 0, disagreements = 0;
    for (int i = 0; i < 8; ++i) {
        const double m0 = 0.15 + 0.1 * i;
        for (int j = 0; j < 10; ++j) {
            const double v0 = -3.0 + 4.0 * j / 9.0;
            const CriterionReport rep = criterion_d4_attractive(m0, v0);
            if (std::abs(rep.value) < 0.01) {
                ++skipped;
                continue;
            }
            ++cases;
            if (rep.smooth != detector_smooth(p, {1.0, 0.0, 0.25 * (1.0 - m0 * m0), 0.0, v0}))
                ++disagreements;
        }
    }
    bool pass = worst_pair < 1e-7 && disagreements == 0 && cases > 0;
    return {pass, fmt("pair spread %.3e (gate 1e-7); %d cases (%d skipped), %d disagreements",
                      worst_pair, cases, skipped, disagreements)};
}

// 7. Data a hair below the separatrix escapes in finite time; a hair above
//    it falls into the stable node.
CheckResult check_separatrix_certificate() {
    Params p;
    p.d = 3;
    p.k = -1.0;
    p.c = 1.0;
    const double f_star = std::sqrt(1.0 / 3.0), g_star = 1.0 / 3.0;
    const double margin = 1e-3;
    int escapes = 0, captures = 0;
    const int n = 50;
    for (int i = 0; i < n; ++i) {
        const double g0 = -1.5 + 1.75 * i / (n - 1);
        const double edge = -std::sqrt(separatrix_F2(p, g0));
        Trajectory below = integrate_characteristic(p, {0.0, 1.0, edge - margin, g0}, 200.0);
        if (below.escaped()) ++escapes;
        Trajectory above = integrate_characteristic(p, {0.0, 1.0, edge + margin, g0}, 200.0);
        const CharacteristicState end = above.final_state();
        if (!above.escaped() && std::hypot(end.F - f_star, end.G - g_star) < 0.05) ++captures;
    }
    bool pass = escapes == n && captures == n;
    return {pass, fmt("%d/%d below escape, %d/%d above reach the node (margin %.0e)",
                      escapes, n, captures, n, margin)};
}

// 8. Smooth/blow-up boundaries in three slope-data planes are straight to
//    within 2%% of the scanned range, and the plane through the node
//    reproduces the exact analytic line.
CheckResult check_boundary_planes() {
    auto base = [] {
        RunConfig cfg;
        cfg.params.d = 3;
        cfg.params.k = -1.0;
        cfg.params.c = 1.0;
        cfg.nx = 21;
        cfg.ny = 21;
        return cfg;
    };
    struct Plane {
        const char* name;
        RunConfig cfg;
    };
    std::vector<Plane> planes;
    {
        RunConfig a = base();
        a.axis_x = "G0";
        a.axis_y = "v0";
        a.x_min = 0.02;
        a.x_max = 0.32;
        a.y_min = -3.0;
        a.y_max = 1.0;
        planes.push_back({"(G0,v0)", a});
        RunConfig b = base();
        b.axis_x = "F0";
        b.axis_y = "u0";
        b.x_min = 0.05;
        b.x_max = 0.85;
        b.y_min = -5.0;
        b.y_max = 1.0;
        planes.push_back({"(F0,u0)", b});
        RunConfig c = base();
        c.axis_x = "u0";
        c.axis_y = "v0";
        c.fixed_G0 = 0.2;
        c.x_min = -2.0;
        c.x_max = 1.0;
        c.y_min = -3.0;
        c.y_max = 1.0;
        planes.push_back({"(u0,v0)", c});
    }
    double worst = 0.0;
    std::string note;
    for (auto& plane : planes) {
        ScanResult res = cmd_scan_plane(plane.cfg);
        if (!res.fit || res.fit->vertical)
            return {false, fmt("plane %s: no boundary fit", plane.name)};
        note += fmt("%s %.4f  ", plane.name, res.fit->residual_over_range);
        worst = std::max(worst, res.fit->residual_over_range);
    }

    RunConfig ctrl = base();
    ctrl.axis_x = "u0";
    ctrl.axis_y = "v0";
    ctrl.fixed_F0 = std::sqrt(1.0 / 3.0);
    ctrl.fixed_G0 = 1.0 / 3.0;
    ctrl.x_min = -2.0;
    ctrl.x_max = 1.0;
    ctrl.y_min = -4.0;
    ctrl.y_max = 1.0;
    ScanResult res = cmd_scan_plane(ctrl);
    if (!res.fit || res.fit->vertical) return {false, "control plane: no boundary fit"};
    // exact line at the node: 3 F* u0 + v0 = 1 - 3 (G* + 2 F*^2) = -2
    const double slope_err = std::abs(res.fit->slope + std::sqrt(3.0));
    const double icpt_err = std::abs(res.fit->intercept + 2.0);
    bool pass = worst < 0.02 && slope_err < 0.02 && icpt_err < 0.02 &&
                res.fit->residual_over_range < 0.005;
    return {pass, fmt("residual/range %s(gate 0.02); control slope err %.1e, intercept err %.1e, "
                      "residual %.1e (gate 0.005)",
                      note.c_str(), slope_err, icpt_err, res.fit->residual_over_range)};
}

// 9. For d = 1 the detector verdict equals the closed-form inequality
//    F0^2 < c - 2 G0 on zero-slope data, exactly, off a thin boundary band.
CheckResult check_d1_closed_form() {
    std::mt19937 rng(20250810u);
    std::uniform_real_distribution<double> uf(-1.5, 1.5), ug(-1.0, 1.0), uc(0.2, 2.0);
    int cases = 0, disagreements = 0;
    while (cases < 100) {
        const double f0 = uf(rng), g0 = ug(rng), c = uc(rng);
        if (std::abs(f0 * f0 - (c - 2.0 * g0)) < 1e-6) continue;
        ++cases;
        Params p;
        p.d = 1;
        p.k = 1.0;
        p.c = c;
        const bool expected = f0 * f0 < c - 2.0 * g0;
        if (detector_smooth(p, {1.0, f0, g0, 0.0, 0.0}) != expected) ++disagreements;
    }
    return {disagreements == 0, fmt("100 triples, %d disagreements", disagreements)};
}

// 10. The amplitude of the linearization satisfies the third-order scalar
//     equation along random trajectories, with friction and a variable
//     background included.
CheckResult check_third_order_consistency() {
    std::mt19937 rng(20250811u);
    std::uniform_real_distribution<double> uf(-0.4, 0.4), ug(-0.4, 0.2), us(-0.8, 0.8);
    std::vector<Params> groups;
    {
        Params center;
        center.d = 3;
        center.k = 1.0;
        center.c = 1.0;
        groups.push_back(center);
        Params friction = center;
        friction.mu = 0.3;
        groups.push_back(friction);
        Params varying = center;
        RadialProfile bump = RadialProfile::gaussian(0.5, 1.0);
        varying.c = 1.0 + bump.value(0.0);
        varying.c_of_r = [bump](double r) { return 1.0 + bump.value(r); };
        varying.c_slope = [bump](double r) { return bump.slope(r); };
        groups.push_back(varying);
        Params node;
        node.d = 4;
        node.k = -1.0;
        node.c = 1.0;
        node.m = 0.2;
        groups.push_back(node);
    }
    double worst = 0.0;
    for (const Params& p : groups) {
        for (int n = 0; n < 5; ++n) {
            InitialPoint ip{1.0, uf(rng), ug(rng), us(rng), us(rng)};
            const double horizon = std::min(default_horizon(p), 8.0);
            CoupledTrajectory traj = integrate_coupled(p, ip, horizon, 1e-10, 1e6);
            worst = std::max(worst, third_order_residual(traj, p));
        }
    }
    return {worst < 1e-6, fmt("20 trajectories, worst residual %.3e (gate 1e-6)", worst)};
}

// 11. A 100 x 100 plane scan at default tolerances finishes within a minute.
CheckResult check_scan_throughput() {
    RunConfig cfg;
    cfg.params.d = 3;
    cfg.params.k = -1.0;
    cfg.params.c = 1.0;
    cfg.axis_x = "G0";
    cfg.axis_y = "v0";
    cfg.x_min = 0.02;
    cfg.x_max = 0.32;
    cfg.y_min = -3.0;
    cfg.y_max = 1.0;
    cfg.nx = 100;
    cfg.ny = 100;
    auto t0 = std::chrono::steady_clock::now();
    ScanResult res = cmd_scan_plane(cfg);
    double dt = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    bool pass = dt < 60.0 && res.cells.size() == 10000;
    return {pass, fmt("10000 cells in %.2fs (gate 60s)", dt)};
}

}  // namespace

int main() {
    struct Check {
        const char* name;
        CheckResult (*run)();
    };
    const std::vector<Check> checks = {
        {"slope-equivalence", check_slope_equivalence},
        {"conserved-quantities", check_conserved_quantities},
        {"isochronous-periods", check_isochronous_periods},
        {"d4-closed-form-grid", check_d4_closed_form_grid},
        {"hypergeometric-criterion", check_hypergeometric_criterion},
        {"attractive-dual-route", check_attractive_dual_route},
        {"separatrix-certificate", check_separatrix_certificate},
        {"boundary-planes", check_boundary_planes},
        {"d1-closed-form", check_d1_closed_form},
        {"third-order-consistency", check_third_order_consistency},
        {"scan-throughput", check_scan_throughput},
    };

    int failures = 0;
    for (const Check& check : checks) {
        auto t0 = std::chrono::steady_clock::now();
        CheckResult result;
        try {
            result = check.run();
        } catch (const std::exception& e) {
            result = {false, std::string("exception: ") + e.what()};
        }
        double dt = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        printf("[%s] %-26s (%6.2fs)  %s\n", result.pass ? "PASS" : "FAIL", check.name, dt,
               result.detail.c_str());
        fflush(stdout);
        if (!result.pass) ++failures;
    }
    printf("%d/%zu checks passed\n", static_cast<int>(checks.size()) - failures, checks.size());
    return failures;
}
