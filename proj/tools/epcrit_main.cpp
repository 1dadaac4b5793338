// Command-line front end. Subcommands: classify, scan-r, scan-plane,
// phase-portrait, crossval. Exit codes: 0 success, 1 configuration error,
// 2 numeric failure, 3 validation-suite failure.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "epcrit/scan.hpp"

namespace fs = std::filesystem;

namespace {

struct Overrides {
    std::string config;
    std::string out;
    std::string format;
    double tol = 0.0;
    double horizon = -1.0;
    int jobs = -1;
};

epcrit::RunConfig load(const Overrides& o) {
    epcrit::RunConfig cfg = epcrit::parse_config_file(o.config);
    if (!o.out.empty()) cfg.out_dir = o.out;
    if (!o.format.empty()) cfg.format = o.format;
    if (o.tol > 0.0) cfg.policy.tol = o.tol;
    if (o.horizon >= 0.0) cfg.policy.horizon = o.horizon;
    if (o.jobs >= 0) cfg.jobs = o.jobs;
    cfg.validate();
    return cfg;
}

void write_file(const fs::path& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
    out << content;
    if (!out) throw std::runtime_error("write failed for " + path.string());
}

void add_common(CLI::App* sub, Overrides& o) {
    sub->add_option("--config", o.config, "run configuration file")
        ->required()
        ->check(CLI::ExistingFile);
    sub->add_option("--out", o.out, "output directory (overrides config)");
    sub->add_option("--format", o.format, "csv or json (overrides config)");
    sub->add_option("--tol", o.tol, "integration tolerance (overrides config)");
    sub->add_option("--horizon", o.horizon, "integration horizon (overrides config)");
    sub->add_option("--jobs", o.jobs, "worker threads, 0 = all cores");
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Global smoothness vs finite-time blow-up for radially symmetric "
                 "cold-plasma initial data"};
    app.require_subcommand(1);
    Overrides o;

    CLI::App* classify = app.add_subcommand(
        "classify", "classify one initial point, with analytic cross-checks");
    CLI::App* scan_r = app.add_subcommand(
        "scan-r", "classify every characteristic of radial profiles");
    CLI::App* scan_plane = app.add_subcommand(
        "scan-plane", "classify a 2-D slice of initial data and trace the boundary");
    CLI::App* portrait = app.add_subcommand(
        "phase-portrait", "sample trajectories, equilibria, and the separatrix");
    CLI::App* crossval = app.add_subcommand(
        "crossval", "run a named analytic-vs-detector validation suite");
    for (CLI::App* sub : {classify, scan_r, scan_plane, portrait, crossval})
        add_common(sub, o);

    CLI11_PARSE(app, argc, argv);

    try {
        epcrit::RunConfig cfg = load(o);
        fs::create_directories(cfg.out_dir);
        const fs::path out_dir(cfg.out_dir);

        if (classify->parsed()) {
            epcrit::ClassifyOutcome res = epcrit::cmd_classify(cfg);
            write_file(out_dir / "classify.json", res.to_json() + "\n");
            std::cout << to_string(res.verdict.outcome);
            if (!res.analytic.empty())
                std::cout << (res.all_agree ? " (analytic checks agree)"
                                            : " (ANALYTIC DISAGREEMENT)");
            std::cout << "\n";
            return 0;
        }

        if (scan_r->parsed()) {
            epcrit::RScanReport rep = epcrit::cmd_scan_r(cfg);
            if (cfg.format == "json")
                write_file(out_dir / "scan_r.json", rep.to_json() + "\n");
            else
                write_file(out_dir / "scan_r.csv", rep.csv());
            if (rep.global_smooth) {
                std::cout << "all characteristics smooth\n";
            } else {
                std::cout << "blow-up, first offending r0 = "
                          << epcrit::format_float(*rep.first_blowup_r0) << "\n";
            }
            return 0;
        }

        if (scan_plane->parsed()) {
            epcrit::ScanResult res = epcrit::cmd_scan_plane(cfg);
            write_file(out_dir / "scan_plane_cells.csv", res.cells_csv());
            write_file(out_dir / "scan_plane_boundary.csv", res.boundary_csv());
            write_file(out_dir / "scan_plane_fit.json", res.fit_json() + "\n");
            int blow = 0;
            for (const auto& c : res.cells)
                if (c.outcome == epcrit::BlowupVerdict::Outcome::blow_up) ++blow;
            std::cout << res.cells.size() << " cells, " << blow << " blow up, "
                      << res.boundary.size() << " boundary points";
            if (res.fit)
                std::cout << ", fit residual/range = "
                          << epcrit::format_float(res.fit->residual_over_range);
            std::cout << "\n";
            return 0;
        }

        if (portrait->parsed()) {
            epcrit::PhasePortrait port = epcrit::cmd_phase_portrait(cfg);
            write_file(out_dir / "portrait_trajectories.csv", port.trajectories_csv());
            write_file(out_dir / "portrait_equilibria.csv", port.equilibria_csv());
            write_file(out_dir / "portrait_separatrix.csv", port.separatrix_csv());
            std::cout << port.trajectories.size() << " trajectories, "
                      << port.equilibria.size() << " equilibria, "
                      << port.separatrix_upper.size() + port.separatrix_lower.size()
                      << " separatrix points\n";
            return 0;
        }

        // crossval
        epcrit::SuiteReport rep = epcrit::cmd_crossval(cfg);
        write_file(out_dir / "crossval.json", rep.to_json() + "\n");
        std::cout << "suite " << rep.suite << ": " << (rep.pass ? "pass" : "FAIL")
                  << " (" << rep.failures << "/" << rep.cases << " failures, worst "
                  << epcrit::format_float(rep.worst) << ")\n";
        return rep.pass ? 0 : 3;
    } catch (const epcrit::ConfigError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
}
