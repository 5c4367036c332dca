#include <catch2/catch_amalgamated.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "nimbus/run.hpp"
#include "test_helpers.hpp"

using namespace nimbus;
using Catch::Approx;

namespace {

std::string preset_path(const std::string& name) {
    return std::string(NIMBUS_PRESET_DIR) + "/" + name;
}

std::filesystem::path temp_dir(const std::string& tag) {
    auto p = std::filesystem::temp_directory_path() / ("nimbus_test_" + tag);
    std::filesystem::remove_all(p);
    std::filesystem::create_directories(p);
    return p;
}

}  // namespace

TEST_CASE("all shipped presets parse and validate") {
    for (const char* name : {"rest_state.cfg", "radiation_only.cfg",
                             "condensation_column.cfg", "coagulation_box.cfg",
                             "full_desk.cfg"}) {
        RunConfig cfg = parse_config(preset_path(name));
        REQUIRE(cfg.dt > 0.0);
        Assembled as(cfg);
        auto su = as.coupling_setup();
        auto hyp = validate_hypotheses(su.radiation_setup(), as.init.rho, as.init.pi,
                                       as.init.sigma, su.optics, cfg.eps2);
        INFO(name << ": " << hyp.failure_text());
        REQUIRE(hyp.passed);
    }
}

TEST_CASE("configuration round-trips through its writer") {
    RunConfig cfg = parse_config(preset_path("full_desk.cfg"));
    const std::string once = write_config(cfg);
    RunConfig back = parse_config_text(once, "roundtrip");
    REQUIRE(write_config(back) == once);
}

TEST_CASE("exponent hypothesis is enforced") {
    std::string text = "[loop]\ndt = 0.01\nhorizon = 0.1\np = 3\n";
    REQUIRE_THROWS_WITH(parse_config_text(text, "t"),
                        Catch::Matchers::ContainsSubstring("p > 4"));
    text = "[loop]\ndt = 0.01\nhorizon = 0.1\np = 5\nq = 2.4\n";
    REQUIRE_THROWS_WITH(parse_config_text(text, "t"),
                        Catch::Matchers::ContainsSubstring("2q > p"));
}

TEST_CASE("unknown keys are rejected with the nearest valid name") {
    const std::string text = "[physics]\nviscocity = 0.1\n[loop]\ndt=0.01\nhorizon=0.1\n";
    try {
        parse_config_text(text, "t");
        FAIL("expected a config error");
    } catch (const Error& e) {
        REQUIRE(e.phase() == Phase::config);
        REQUIRE(std::string(e.what()).find("unknown key") != std::string::npos);
        REQUIRE(std::string(e.what()).find("nearest valid key") != std::string::npos);
        REQUIRE(std::string(e.what()).find("t:2") != std::string::npos);  // line context
    }
}

TEST_CASE("type mismatches carry file and line context") {
    const std::string text = "[domain]\nresolution = eight\n[loop]\ndt=0.01\nhorizon=0.1\n";
    REQUIRE_THROWS_WITH(parse_config_text(text, "cfg.ini"),
                        Catch::Matchers::ContainsSubstring("cfg.ini:2"));
}

TEST_CASE("required keys must be present") {
    REQUIRE_THROWS_WITH(parse_config_text("[loop]\nhorizon = 0.1\n", "t"),
                        Catch::Matchers::ContainsSubstring("loop.dt"));
    REQUIRE_THROWS_WITH(parse_config_text("[loop]\ndt = 0.01\n", "t"),
                        Catch::Matchers::ContainsSubstring("loop.horizon"));
}

TEST_CASE("missing referenced files are a config error") {
    const std::string text =
        "[initial]\nrho_file = /nonexistent/rho.csv\n[loop]\ndt=0.01\nhorizon=0.1\n";
    REQUIRE_THROWS_WITH(parse_config_text(text, "t"),
                        Catch::Matchers::ContainsSubstring("/nonexistent/rho.csv"));
}

TEST_CASE("initial fields load from CSV files") {
    auto dir = temp_dir("csv");
    RunConfig cfg = parse_config(preset_path("rest_state.cfg"));
    Assembled base(cfg);

    Rng rng(7);
    Field rho = test::smooth_field(base.domain, rng, 1.2, 0.2, true);
    const std::string rho_path = (dir / "rho.csv").string();
    write_field_csv(rho_path, rho);

    RunConfig cfg2 = cfg;
    cfg2.rho_file = rho_path;
    Assembled as(cfg2);
    for (std::size_t c = 0; c < base.domain.size(); ++c)
        REQUIRE(as.init.rho[c] == rho[c]);

    Spectrum sg(base.grid.bins(), base.domain.size(), 0.0);
    for (std::size_t c = 0; c < base.domain.size(); ++c) sg.at(c, 7) = 0.25;
    const std::string sg_path = (dir / "sigma.csv").string();
    write_spectrum_csv(sg_path, sg, base.grid);
    RunConfig cfg3 = cfg;
    cfg3.sigma_file = sg_path;
    Assembled as3(cfg3);
    for (std::size_t c = 0; c < base.domain.size(); ++c)
        REQUIRE(as3.init.sigma.at(c, 7) == 0.25);

    // velocity components load per axis and must respect the wall pin
    Field vx(base.domain.size(), 0.0);
    for (std::size_t c = 0; c < base.domain.size(); ++c)
        if (!base.domain.boundary[c]) vx[c] = 0.1;
    const std::string vx_path = (dir / "vx.csv").string();
    write_field_csv(vx_path, vx);
    RunConfig cfg4 = cfg;
    cfg4.vx_file = vx_path;
    Assembled as4(cfg4);
    for (std::size_t c = 0; c < base.domain.size(); ++c)
        REQUIRE(as4.init.v[c].x == vx[c]);

    Field bad_v(base.domain.size(), 0.2);  // non-zero on the boundary layer
    const std::string bad_path = (dir / "vbad.csv").string();
    write_field_csv(bad_path, bad_v);
    RunConfig cfg5 = cfg;
    cfg5.vy_file = bad_path;
    REQUIRE_THROWS_WITH(Assembled(cfg5),
                        Catch::Matchers::ContainsSubstring("boundary cells"));

    // per-band inflow table drives the boundary intensity
    {
        std::ofstream f(dir / "inflow.csv");
        f << "band,value\n0,0.37\n";
    }
    RunConfig cfg6 = cfg;
    cfg6.boundary_file = (dir / "inflow.csv").string();
    Assembled as6(cfg6);
    REQUIRE(as6.boundary.kind == BoundaryIntensity::Kind::constant);
    REQUIRE(as6.boundary.value[0] == 0.37);
}

TEST_CASE("rest state run completes with a constant trajectory") {
    RunConfig cfg = parse_config(preset_path("rest_state.cfg"));
    auto dir = temp_dir("rest");
    auto outcome = run_simulation(cfg, dir.string());
    REQUIRE(outcome.exit_code == 0);
    REQUIRE(outcome.hypotheses_ok);
    REQUIRE(outcome.bounds_ok);
    REQUIRE(outcome.t_accepted == Approx(cfg.horizon));
    REQUIRE(outcome.outer_kappa == 0.0);

    REQUIRE(std::filesystem::exists(dir / "trace.jsonl"));
    REQUIRE(std::filesystem::exists(dir / "summary.json"));
    REQUIRE(std::filesystem::exists(dir / "snapshots" / "rho_0000.csv"));

    // the summary records zero drifts for the rest state
    std::ifstream sf(dir / "summary.json");
    nlohmann::json summary = nlohmann::json::parse(sf);
    REQUIRE(summary["invariants"]["bounds_ok"].get<bool>());
    REQUIRE(summary["invariants"]["max_mass_drift"].get<double>() <= 1e-12);
}

TEST_CASE("traces are identical for identical config and seed") {
    RunConfig cfg = parse_config(preset_path("radiation_only.cfg"));
    cfg.write_fields = false;
    auto a = run_simulation(cfg, temp_dir("det_a").string());
    auto b = run_simulation(cfg, temp_dir("det_b").string());
    REQUIRE(a.trace_lines.size() == b.trace_lines.size());
    for (std::size_t i = 0; i < a.trace_lines.size(); ++i)
        REQUIRE(a.trace_lines[i] == b.trace_lines[i]);
}

TEST_CASE("hypothesis violations exit through the dedicated phase") {
    RunConfig cfg = parse_config(preset_path("radiation_only.cfg"));
    cfg.r1 = {8.0};  // blows the gas-scattering smallness budget
    try {
        run_simulation(cfg, temp_dir("hypfail").string());
        FAIL("expected a hypotheses error");
    } catch (const Error& e) {
        REQUIRE(e.phase() == Phase::hypotheses);
        REQUIRE(static_cast<int>(e.phase()) == 3);
    }
}

TEST_CASE("command line maps failures to their phase exit codes") {
    const std::string cli = NIMBUS_CLI_PATH;
    auto dir = temp_dir("cli");
    auto shell = [&](const std::string& args) {
        const std::string cmd = cli + " " + args + " >/dev/null 2>&1";
        const int status = std::system(cmd.c_str());
        return WEXITSTATUS(status);
    };

    // config error: unknown key
    {
        std::ofstream f(dir / "bad_key.cfg");
        f << "[physics]\nviscocity = 1\n[loop]\ndt = 0.01\nhorizon = 0.1\n";
    }
    REQUIRE(shell("validate " + (dir / "bad_key.cfg").string()) == 2);

    // hypotheses error: scattering budget blown
    {
        std::ofstream f(dir / "bad_hyp.cfg");
        f << "[optics]\nr1 = 9.0\n[loop]\ndt = 0.01\nhorizon = 0.1\n";
    }
    REQUIRE(shell("validate " + (dir / "bad_hyp.cfg").string()) == 3);

    // horizon error: requested horizon below one step
    {
        std::ofstream f(dir / "bad_horizon.cfg");
        f << "[loop]\ndt = 0.01\nhorizon = 0.001\n";
    }
    REQUIRE(shell("run " + (dir / "bad_horizon.cfg").string() + " --out " +
                  (dir / "h").string()) == 4);

    // a healthy run exits 0 and honours the output-root override
    const std::string preset = preset_path("rest_state.cfg");
    const std::string cmd = "NIMBUS_OUTPUT_ROOT=" + (dir / "root").string() + " " + cli +
                            " run " + preset + " --out sub >/dev/null 2>&1";
    REQUIRE(WEXITSTATUS(std::system(cmd.c_str())) == 0);
    REQUIRE(std::filesystem::exists(dir / "root" / "sub" / "summary.json"));
}

TEST_CASE("report tabulates finished and partial runs") {
    RunConfig cfg = parse_config(preset_path("rest_state.cfg"));
    auto dir = temp_dir("report");
    run_simulation(cfg, dir.string());
    std::ostringstream os;
    REQUIRE(report_run(dir.string(), os, true) == 0);
    const std::string text = os.str();
    REQUIRE(text.find("accepted horizon") != std::string::npos);
    REQUIRE(text.find("bounds ok") != std::string::npos);
    REQUIRE(std::filesystem::exists(dir / "report.csv"));

    // partial run: only a prefix of the trace survives
    auto partial = temp_dir("partial");
    {
        std::ifstream in(dir / "trace.jsonl");
        std::ofstream out(partial / "trace.jsonl");
        std::string line;
        int n = 0;
        while (std::getline(in, line) && n < 3) {
            out << line << "\n";
            ++n;
        }
    }
    std::ostringstream os2;
    REQUIRE(report_run(partial.string(), os2, false) == 0);
    REQUIRE(os2.str().find("did not complete") != std::string::npos);

    REQUIRE_THROWS_AS(report_run((partial / "missing").string(), os2, false), Error);
}
