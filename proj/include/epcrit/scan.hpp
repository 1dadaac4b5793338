#pragma once

// Batch front end: run configuration parsing plus the five batch commands
// (single-point classification with analytic cross-checks, r-grid profile
// scans, 2-D plane scans with boundary extraction, phase-portrait sampling,
// and analytic-vs-detector validation suites). All commands are pure
// functions of the configuration; file output is left to the caller.

#include <array>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "epcrit/linearization.hpp"
#include "epcrit/model.hpp"

namespace epcrit {

// Configuration error with the offending line and field spelled out.
class ConfigError : public std::runtime_error {
  public:
    ConfigError(int line, std::string field, const std::string& what);
    int line() const { return line_; }
    const std::string& field() const { return field_; }

  private:
    int line_;
    std::string field_;
};

// Parsed run configuration. Sections: [params], [data], [scan], [policy],
// [output], [crossval]. Keys are lowercase; '#' starts a comment.
struct RunConfig {
    Params params;

    // [data] either an explicit initial point (numeric keys r0, F0, G0, u0,
    // v0) or radial profiles: F / G (slope profiles) and density. A density n
    // induces the field of the charge deficit, G = c/d - field(n), and
    // requires a constant background.
    std::optional<InitialPoint> point;
    std::optional<RadialProfile> profile_F;
    std::optional<RadialProfile> profile_G;
    std::optional<RadialProfile> density;
    double r_max = 5.0;    // r-grid upper end
    int r_samples = 64;    // r-grid resolution (r0 = 0 is always added)
    std::vector<std::array<double, 2>> seeds;  // (F0, G0) phase-portrait seeds

    // [scan] plane axes, ranges, resolution, and fixed coordinates
    std::string axis_x = "G0";
    std::string axis_y = "v0";
    double x_min = -1.0, x_max = 1.0;
    double y_min = -4.0, y_max = 1.0;
    int nx = 41, ny = 41;
    double fixed_r0 = 1.0, fixed_F0 = 0.0, fixed_G0 = 0.0;
    double fixed_u0 = 0.0, fixed_v0 = 0.0;

    // [policy]
    HorizonPolicy policy;

    // [output]
    std::string out_dir = ".";
    std::string format = "csv";  // csv | json
    int jobs = 0;                // 0 = hardware concurrency

    // [crossval]
    std::string suite;

    void validate() const;  // throws ConfigError on contradictions
};

RunConfig parse_config_text(const std::string& text);
RunConfig parse_config_file(const std::string& path);

// One analytic criterion evaluated next to the detector verdict. `smooth` is
// the criterion's verdict; `value` is its diagnostic quantity (the closed-form
// expression where one exists, otherwise the path minimum of the amplitude).
struct AnalyticCheck {
    std::string name;
    bool smooth = false;
    double value = 0.0;
    bool applicable_one_sided = false;  // certificate asserts only one outcome
    bool agrees = false;
};

struct ClassifyOutcome {
    InitialPoint point;
    BlowupVerdict verdict;
    std::vector<AnalyticCheck> analytic;
    bool all_agree = true;

    std::string to_json() const;
};

// Classifies the configured point and evaluates every applicable analytic
// criterion (d = 1 closed form, d = 4 families, zero-velocity criterion,
// separatrix certificate, equilibrium-data criterion).
ClassifyOutcome cmd_classify(const RunConfig& cfg);

// One characteristic of an r-grid scan.
struct RScanRow {
    double r0 = 0.0;
    InitialPoint point;
    BlowupVerdict::Outcome outcome = BlowupVerdict::Outcome::smooth_to_horizon;
    std::optional<double> t_star;
};

struct RScanReport {
    std::vector<RScanRow> rows;
    bool global_smooth = true;                // smooth only if every row is
    std::optional<double> first_blowup_r0;
    std::string csv() const;                  // r0,F0,G0,u0,v0,outcome,t_star
    std::string to_json() const;
};

// Derives initial data on the r-grid from the configured profiles and
// classifies every characteristic. A configured density is checked for
// positivity first; violations throw std::domain_error before any
// classification runs.
RScanReport cmd_scan_r(const RunConfig& cfg);

// 2-D plane scan over two of {F0, G0, u0, v0}.
struct CellVerdict {
    double x = 0.0, y = 0.0;
    BlowupVerdict::Outcome outcome = BlowupVerdict::Outcome::smooth_to_horizon;
    double q_min = 1.0;
    std::optional<double> t_star;
};

struct LineFit {
    bool vertical = false;
    double slope = 0.0;       // y = slope x + intercept (x = const if vertical)
    double intercept = 0.0;
    double max_residual = 0.0;       // largest orthogonal distance
    double extent = 0.0;             // boundary span along the fitted line
    double residual_over_range = 0.0;
};

struct ScanResult {
    int nx = 0, ny = 0;
    std::vector<CellVerdict> cells;              // row-major, y outer, x inner
    std::vector<std::array<double, 2>> boundary;  // refined outcome-change points
    std::optional<LineFit> fit;                   // set when boundary has >= 2 points

    std::string cells_csv() const;     // x,y,outcome,q_min,t_star
    std::string boundary_csv() const;  // x,y
    std::string fit_json() const;
};

// Classifies the grid concurrently (deterministic cell order in the output),
// extracts the blow-up/smooth boundary from outcome-change cell edges with a
// 10-step bisection per edge, and fits a line to the boundary points.
ScanResult cmd_scan_plane(const RunConfig& cfg);

// Phase-portrait sampling: trajectories from the seed list, equilibria, and
// the separatrix branches when the regime has them (k < 0, c > 0, m = 0).
struct PhasePortrait {
    struct Series {
        double F0 = 0.0, G0 = 0.0;
        std::vector<std::array<double, 4>> states;  // t, r, F, G
    };
    std::vector<Series> trajectories;
    std::vector<Equilibrium> equilibria;
    std::vector<std::array<double, 2>> separatrix_upper;  // (G, F)
    std::vector<std::array<double, 2>> separatrix_lower;

    std::string trajectories_csv() const;  // series,t,r,F,G
    std::string equilibria_csv() const;    // type,F,G
    std::string separatrix_csv() const;    // branch,G,F
};

PhasePortrait cmd_phase_portrait(const RunConfig& cfg);

// Named analytic-vs-detector suite. Suites: "d4-c0" (closed-form criterion
// against the detector on a 20x20 grid), "radon" (slope dynamics against the
// linear system along random characteristics), "isochrony" (period equality
// in the isochronous dimension plus a d = 3 control).
struct SuiteReport {
    std::string suite;
    bool pass = false;
    int cases = 0;
    int failures = 0;
    double worst = 0.0;  // suite-specific worst deviation
    std::string to_json() const;
};

SuiteReport cmd_crossval(const RunConfig& cfg);

// Scientific notation with 17 significant digits; the fixed width keeps CSV
// output byte-identical across runs and platforms.
std::string format_float(double v);

}  // namespace epcrit
