#pragma once

#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "nimbus/config.hpp"
#include "nimbus/coupling.hpp"

namespace nimbus {

// ---------------------------------------------------------------------------
// Run orchestration: hypotheses -> horizon adaptation -> accepted trajectory,
// with a JSON-lines trace, CSV field snapshots and a final summary. Exit
// codes by phase: 2 config, 3 hypotheses, 4 horizon, 5 solve.
// ---------------------------------------------------------------------------

using json = nlohmann::ordered_json;

class TraceWriter {
public:
    explicit TraceWriter(const std::string& path) {
        if (!path.empty()) {
            os_.open(path);
            if (!os_) fail(Phase::solve, "cannot open trace file: " + path);
        }
    }

    void write(const json& j) {
        lines_.push_back(j.dump());
        if (os_.is_open()) {
            os_ << lines_.back() << "\n";
            os_.flush();  // keep partial traces readable after aborts
        }
    }

    void write_event(const TraceEvent& ev) {
        json j;
        j["event"] = ev.kind;
        for (const auto& [k, v] : ev.values) j[k] = v;
        for (const auto& [k, v] : ev.tags)
            if (!v.empty()) j[k] = v;
        write(j);
    }

    const std::vector<std::string>& lines() const { return lines_; }

private:
    std::ofstream os_;
    std::vector<std::string> lines_;
};

struct RunOutcome {
    int exit_code = 0;
    std::string message;
    double t_accepted = 0.0;
    int n_steps = 0;
    bool hypotheses_ok = false;
    bool bounds_ok = false;
    double inner_max_ratio = 0.0;
    double outer_kappa = 0.0;
    std::vector<std::string> trace_lines;
};

namespace detail {

inline json hypotheses_json(const HypothesesReport& h) {
    json j;
    j["passed"] = h.passed;
    j["phase_norm_err"] = h.phase_norm_err;
    j["r3_sigma_sup"] = h.r3_sigma_sup;
    j["eps1"] = h.eps1;
    j["eps2"] = h.eps2;
    j["K_b"] = h.K_b;
    j["eps_b0"] = h.eps_b0;
    j["contraction_budget"] = h.contraction_budget;
    if (!h.failures.empty()) j["failures"] = h.failures;
    return j;
}

inline void write_snapshots(const std::string& dir, const Assembled& as,
                            const Trajectory& tr, int cadence) {
    namespace fs = std::filesystem;
    fs::create_directories(dir);
    char name[64];
    for (std::size_t i = 0; i < tr.levels(); ++i) {
        if (!(i % static_cast<std::size_t>(cadence) == 0 || i + 1 == tr.levels())) continue;
        auto file = [&](const char* field) {
            std::snprintf(name, sizeof name, "%s_%04zu.csv", field, i);
            return dir + "/" + name;
        };
        write_field_csv(file("rho"), tr.rho[i]);
        write_field_csv(file("vapor"), tr.pi[i]);
        write_field_csv(file("temperature"), tr.T[i]);
        write_field_csv(file("div_flux"), tr.divE[i]);
        Field vx(as.domain.size()), vy(as.domain.size()), vz(as.domain.size());
        for (std::size_t c = 0; c < as.domain.size(); ++c) {
            vx[c] = tr.v[i][c].x;
            vy[c] = tr.v[i][c].y;
            vz[c] = tr.v[i][c].z;
        }
        write_field_csv(file("vx"), vx);
        write_field_csv(file("vy"), vy);
        write_field_csv(file("vz"), vz);
        write_spectrum_csv(file("spectrum"), tr.sigma[i], as.grid);
    }
}

}  // namespace detail

inline RunOutcome run_simulation(const RunConfig& cfg, const std::string& out_dir,
                                 bool write_outputs = true) {
    const int hw = static_cast<int>(std::thread::hardware_concurrency());
    par::set_threads(cfg.threads > 0 ? cfg.threads : std::max(1, hw));
    RunOutcome out;

    namespace fs = std::filesystem;
    if (write_outputs) fs::create_directories(out_dir);
    TraceWriter trace(write_outputs ? out_dir + "/trace.jsonl" : "");
    auto sink = [&](const TraceEvent& ev) { trace.write_event(ev); };

    Assembled as(cfg);
    CouplingSetup su = as.coupling_setup();

    {
        json j;
        j["event"] = "config";
        j["seed"] = cfg.seed;
        j["shape"] = shape_name(cfg.shape);
        j["resolution"] = cfg.resolution;
        j["mass_bins"] = cfg.mass_bins;
        j["bands"] = cfg.band_edges.size() - 1;
        j["directions"] = as.quad.size();
        j["dt"] = cfg.dt;
        j["horizon"] = cfg.horizon;
        trace.write(j);
    }

    HypothesesReport hyp =
        validate_hypotheses(su.radiation_setup(), as.init.rho, as.init.pi, as.init.sigma,
                            su.optics, cfg.eps2);
    {
        json j;
        j["event"] = "hypotheses";
        const json hj = detail::hypotheses_json(hyp);
        for (const auto& [k, v] : hj.items()) j[k] = v;
        trace.write(j);
    }
    out.hypotheses_ok = hyp.passed;
    if (!hyp.passed)
        fail(Phase::hypotheses, "hypothesis validation failed: " + hyp.failure_text());

    HorizonResult horizon = adapt_horizon(su, as.init, hyp, cfg.horizon, sink);
    out.t_accepted = horizon.t_accepted;
    out.n_steps = horizon.n_steps;
    out.inner_max_ratio = horizon.outer.trace.inner_max_ratio;
    out.outer_kappa = horizon.outer.trace.outer_kappa;

    MonitorReport monitor = apriori_monitor(su, as.init, horizon.outer.trajectory, sink);
    out.bounds_ok = monitor.all_bounds_ok;

    NormReport norms = norm_estimators(su, horizon.outer.trajectory);

    json summary;
    summary["event"] = "summary";
    summary["t_accepted"] = horizon.t_accepted;
    summary["n_steps"] = horizon.n_steps;
    summary["halvings"] = horizon.rejections.size();
    summary["outer_passes"] = horizon.outer.trace.outer.size();
    summary["inner_max_ratio"] = horizon.outer.trace.inner_max_ratio;
    summary["outer_kappa"] = horizon.outer.trace.outer_kappa;
    summary["hypotheses"] = detail::hypotheses_json(hyp);
    json inv;
    inv["bounds_ok"] = monitor.all_bounds_ok;
    if (!monitor.all_bounds_ok) inv["first_breach"] = monitor.first_breach;
    inv["max_mass_drift"] = monitor.max_mass_drift;
    inv["max_water_drift"] = monitor.max_water_drift;
    inv["sigma_support_leak"] = monitor.sigma_support_leak;
    inv["dm_sigma_max"] = monitor.dm_sigma_max;
    summary["invariants"] = inv;
    json nj;
    nj["rho_w1p"] = norms.rho_w1p;
    nj["pi_w1p"] = norms.pi_w1p;
    nj["sigma_w1p"] = norms.sigma_w1p;
    nj["v_l2"] = norms.v_l2;
    nj["v_h1"] = norms.v_h1;
    nj["T_l2"] = norms.T_l2;
    nj["T_h1"] = norms.T_h1;
    nj["V_pv"] = norms.V_pv;
    nj["V_qT"] = norms.V_qT;
    json env;
    env["c_rho"] = monitor.envelope_c_rho;
    env["c_pi"] = monitor.envelope_c_pi;
    nj["envelopes"] = env;
    summary["norms"] = nj;
    trace.write(summary);

    if (write_outputs) {
        std::ofstream sf(out_dir + "/summary.json");
        sf << summary.dump(2) << "\n";
        if (cfg.write_fields)
            detail::write_snapshots(out_dir + "/snapshots", as, horizon.outer.trajectory,
                                    cfg.cadence);
    }

    if (!monitor.all_bounds_ok)
        fail(Phase::solve, "accepted trajectory violates a hard bound: " +
                               monitor.first_breach);

    out.trace_lines = trace.lines();
    out.message = "accepted horizon " + std::to_string(horizon.t_accepted) + " after " +
                  std::to_string(horizon.rejections.size()) + " halvings";
    return out;
}

// ---------------------------------------------------------------------------
// Report: tabulate a run directory (also partial ones from aborted runs).
// ---------------------------------------------------------------------------

inline int report_run(const std::string& dir, std::ostream& os, bool csv = false) {
    std::ifstream is(dir + "/trace.jsonl");
    if (!is) fail(Phase::config, "report: no trace.jsonl under " + dir);

    std::vector<json> events;
    std::string line;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        try {
            events.push_back(json::parse(line));
        } catch (const std::exception& e) {
            fail(Phase::config, "report: corrupt trace line: " + std::string(e.what()));
        }
    }

    bool has_summary = false;
    os << "== hypotheses ==\n";
    for (const auto& ev : events) {
        if (ev.value("event", "") != "hypotheses") continue;
        os << "  passed: " << (ev.value("passed", false) ? "yes" : "no")
           << "  eps1 = " << ev.value("eps1", 0.0) << "  K_b = " << ev.value("K_b", 0.0)
           << "  budget = " << ev.value("contraction_budget", 0.0) << "\n";
    }
    os << "== horizon attempts ==\n";
    for (const auto& ev : events) {
        if (ev.value("event", "") != "horizon_try") continue;
        os << "  t = " << ev.value("t", 0.0) << "  inner_ratio = "
           << ev.value("inner_ratio", 0.0) << "  kappa = " << ev.value("kappa", 0.0)
           << (ev.value("accepted", 0.0) != 0.0 ? "  accepted" : "  rejected") << "\n";
        if (ev.contains("detail")) os << "    reason: " << ev["detail"].get<std::string>() << "\n";
    }
    os << "== contraction per outer pass ==\n";
    for (const auto& ev : events) {
        if (ev.value("event", "") != "outer_pass") continue;
        os << "  pass " << ev.value("pass", 0.0) << "  dist = " << ev.value("dist", 0.0)
           << "  kappa = " << ev.value("kappa", 0.0) << "\n";
    }
    os << "== step monitor ==\n";
    double dt = 0.0;
    for (const auto& ev : events)
        if (ev.value("event", "") == "config") dt = ev.value("dt", 0.0);
    std::ofstream csv_os;
    if (csv) {
        csv_os.open(dir + "/report.csv");
        csv_os << "time,level,mass,water,support_leak,dm_sigma,bounds_ok\n";
    }
    double mass0 = -1.0, water0 = -1.0;
    for (const auto& ev : events) {
        if (ev.value("event", "") != "step_monitor") continue;
        const double mass = ev.value("mass", 0.0);
        const double water = ev.value("water", 0.0);
        if (mass0 < 0) { mass0 = mass; water0 = water; }
        os << "  level " << ev.value("level", 0.0) << "  mass drift = "
           << (mass0 != 0.0 ? (mass - mass0) / mass0 : 0.0) << "  water drift = "
           << (water0 != 0.0 ? (water - water0) / water0 : 0.0)
           << "  bounds " << (ev.value("bounds_ok", 0.0) != 0.0 ? "ok" : "BREACH") << "\n";
        if (csv)
            csv_os << ev.value("level", 0.0) * dt << "," << ev.value("level", 0.0) << ","
                   << mass << "," << water << "," << ev.value("support_leak", 0.0) << ","
                   << ev.value("dm_sigma", 0.0) << "," << ev.value("bounds_ok", 0.0)
                   << "\n";
    }
    for (const auto& ev : events) {
        if (ev.value("event", "") != "summary") continue;
        has_summary = true;
        os << "== summary ==\n";
        os << "  accepted horizon: " << ev.value("t_accepted", 0.0) << " ("
           << ev.value("n_steps", 0) << " steps, " << ev.value("halvings", 0)
           << " halvings)\n";
        os << "  inner max ratio: " << ev.value("inner_max_ratio", 0.0)
           << "  outer kappa: " << ev.value("outer_kappa", 0.0) << "\n";
    }
    if (!has_summary)
        os << "== summary ==\n  (run did not complete; see the rejection history above)\n";
    return 0;
}

}  // namespace nimbus
