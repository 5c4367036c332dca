#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "nimbus/run.hpp"

namespace {

std::string resolve_output_dir(const nimbus::RunConfig& cfg, const std::string& override_dir) {
    std::string dir = override_dir.empty() ? cfg.directory : override_dir;
    if (const char* root = std::getenv("NIMBUS_OUTPUT_ROOT"); root && *root)
        dir = (std::filesystem::path(root) / dir).string();
    return dir;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"nimbus: moist-air, droplet-spectrum and radiation simulator with "
                 "fixed-point contraction diagnostics"};
    app.require_subcommand(1);

    std::string config_path, out_dir, report_dir;
    int threads_override = 0;
    long long seed_override = -1;
    bool csv = false;

    auto* validate = app.add_subcommand("validate", "check a configuration and its "
                                                    "smallness hypotheses");
    validate->add_option("config", config_path, "configuration file")->required();

    auto* run = app.add_subcommand("run", "run the solver and write trace, snapshots "
                                          "and summary");
    run->add_option("config", config_path, "configuration file")->required();
    run->add_option("--out", out_dir, "output directory (overrides the config)");
    run->add_option("--threads", threads_override, "worker threads (overrides the config)");
    run->add_option("--seed", seed_override, "seed (overrides the config)");

    auto* report = app.add_subcommand("report", "tabulate a finished or aborted run");
    report->add_option("dir", report_dir, "run directory")->required();
    report->add_flag("--csv", csv, "also write report.csv");

    CLI11_PARSE(app, argc, argv);

    try {
        if (validate->parsed()) {
            nimbus::RunConfig cfg = nimbus::parse_config(config_path);
            nimbus::Assembled as(cfg);
            auto su = as.coupling_setup();
            auto hyp = nimbus::validate_hypotheses(su.radiation_setup(), as.init.rho,
                                                   as.init.pi, as.init.sigma, su.optics,
                                                   cfg.eps2);
            std::cout << "cells: " << as.domain.size() << ", bins: " << as.grid.bins()
                      << ", directions: " << as.quad.size()
                      << ", bands: " << as.bands.count() << "\n";
            std::cout << "eps1 = " << hyp.eps1 << ", K_b = " << hyp.K_b
                      << ", eps_b0 = " << hyp.eps_b0
                      << ", contraction budget = " << hyp.contraction_budget << "\n";
            if (!hyp.passed) {
                std::cerr << "hypotheses violated: " << hyp.failure_text() << "\n";
                return static_cast<int>(nimbus::Phase::hypotheses);
            }
            std::cout << "hypotheses satisfied\n";
            return 0;
        }
        if (run->parsed()) {
            nimbus::RunConfig cfg = nimbus::parse_config(config_path);
            if (threads_override > 0) cfg.threads = threads_override;
            if (seed_override >= 0) cfg.seed = static_cast<std::uint64_t>(seed_override);
            const std::string dir = resolve_output_dir(cfg, out_dir);
            auto outcome = nimbus::run_simulation(cfg, dir);
            std::cout << outcome.message << "\n";
            std::cout << "inner max ratio = " << outcome.inner_max_ratio
                      << ", outer kappa = " << outcome.outer_kappa << "\n";
            std::cout << "outputs under " << dir << "\n";
            return outcome.exit_code;
        }
        if (report->parsed()) return nimbus::report_run(report_dir, std::cout, csv);
    } catch (const nimbus::Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return static_cast<int>(e.phase());
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
