#pragma once

#include <algorithm>
#include <cctype>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "nimbus/coupling.hpp"
#include "nimbus/gasdynamics.hpp"
#include "nimbus/geometry.hpp"
#include "nimbus/mass_grid.hpp"
#include "nimbus/microphysics.hpp"
#include "nimbus/optics.hpp"
#include "nimbus/quadrature.hpp"

namespace nimbus {

// ---------------------------------------------------------------------------
// Run configuration: flat "key = value" lines under [section] headers.
// Unknown keys are rejected (with the nearest valid key named), types and
// cross-field invariants are validated up front.
// ---------------------------------------------------------------------------

struct RunConfig {
    std::uint64_t seed = 1;
    int threads = 0;  // 0 = machine parallelism; results are thread-count independent

    // [domain]
    Shape shape = Shape::box;
    int resolution = 8;

    // [grids]
    int mass_bins = 24;
    double mass_min = 1e-3;
    double mass_max = 10.0;
    bool mass_geometric = true;
    std::vector<double> band_edges = {0.02, 50.0};
    int band_panels = 10;
    int band_gauss = 6;
    int angular_order = 1;

    // [physics]
    double eta = 0.01, zeta = 0.01, kappa = 0.02, c_v = 50.0;
    double R0 = 1.0, mu_a = 1.0, mu_h = 0.6;
    std::string phi_preset = "none";  // none | cos_z
    double phi_amplitude = 0.0;

    // [micro]
    double K1 = 0.0, c_l = 1.0, beta0 = 0.0, g0_amp = 0.0, g1_amp = 0.0;
    double N_star = 1.0, L_gl = 0.5, alpha0 = 1.0;
    double pi_ref = 0.02, T_ref = 1.0;
    double m_a = 0.01, m_A = 0.05, M_prime = 0.2, M_cut = 1.0;
    double M1_bar = 0.0;  // 0 = derive from the horizon at assembly

    // [optics]
    std::string units = "nondimensional";  // nondimensional | si
    std::vector<double> a1 = {0.0}, r1 = {0.0}, a2 = {0.0}, r2 = {0.0};
    double a3_amp = 0.0, r3_amp = 0.0;
    std::string phase1 = "isotropic", phase2 = "isotropic", phase3 = "isotropic";
    double g1_asym = 0.0, g2_asym = 0.0, g3_asym = 0.0;
    std::string boundary = "zero";  // zero | constant | planck_wall
    std::vector<double> boundary_value = {0.0};
    double wall_T = 1.0;
    double eps2 = 1e-6;
    double ray_step_factor = 0.5;

    // [initial]
    std::string preset = "uniform";  // uniform | cloud
    double rho0 = 1.0;
    double pi_saturation_ratio = 1.0;
    double T0 = 1.0;
    double T_grad_z = 0.0;
    double sigma_amp = 0.0;
    std::string rho_file, pi_file, T_file, sigma_file;
    std::string vx_file, vy_file, vz_file;
    std::string boundary_file;  // per-band inflow table, "band,value" rows

    // [loop]
    double dt = 0.0;       // required
    double horizon = 0.0;  // required
    double inner_tol = 1e-9, outer_tol = 1e-9, radiation_tol = 1e-8;
    int inner_max_iters = 60, outer_max_iters = 60, max_sweeps = 200;
    double kappa_target = 0.9;
    double p_exp = 5.0, q_exp = 4.0;
    std::string advection = "upwind";  // upwind | semilag

    // [output]
    std::string directory = "out";
    int cadence = 1;
    bool write_fields = true;
};

namespace detail {

inline std::string trim(const std::string& s) {
    std::size_t a = 0, b = s.size();
    while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
    while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
    return s.substr(a, b - a);
}

inline std::size_t edit_distance(const std::string& a, const std::string& b) {
    std::vector<std::size_t> row(b.size() + 1);
    for (std::size_t j = 0; j <= b.size(); ++j) row[j] = j;
    for (std::size_t i = 1; i <= a.size(); ++i) {
        std::size_t prev = row[0];
        row[0] = i;
        for (std::size_t j = 1; j <= b.size(); ++j) {
            const std::size_t cur = row[j];
            row[j] = std::min({row[j] + 1, row[j - 1] + 1,
                               prev + (a[i - 1] == b[j - 1] ? 0 : 1)});
            prev = cur;
        }
    }
    return row[b.size()];
}

inline const std::vector<std::string>& known_keys() {
    static const std::vector<std::string> keys = {
        "seed", "threads",
        "domain.shape", "domain.resolution",
        "grids.mass_bins", "grids.mass_min", "grids.mass_max", "grids.mass_spacing",
        "grids.band_edges", "grids.band_panels", "grids.band_gauss", "grids.angular_order",
        "physics.eta", "physics.zeta", "physics.kappa", "physics.c_v", "physics.R0",
        "physics.mu_a", "physics.mu_h", "physics.phi_preset", "physics.phi_amplitude",
        "micro.K1", "micro.c_l", "micro.beta0", "micro.g0_amp", "micro.g1_amp",
        "micro.N_star", "micro.L_gl", "micro.alpha0", "micro.pi_ref", "micro.T_ref",
        "micro.m_a", "micro.m_A", "micro.M_prime", "micro.M_cut", "micro.M1_bar",
        "optics.units", "optics.a1", "optics.r1", "optics.a2", "optics.r2",
        "optics.a3_amp", "optics.r3_amp", "optics.phase1", "optics.phase2", "optics.phase3",
        "optics.g1_asym", "optics.g2_asym", "optics.g3_asym", "optics.boundary",
        "optics.boundary_value", "optics.wall_T", "optics.eps2", "optics.ray_step_factor",
        "initial.preset", "initial.rho0", "initial.pi_saturation_ratio", "initial.T0",
        "initial.T_grad_z", "initial.sigma_amp", "initial.rho_file", "initial.pi_file",
        "initial.T_file", "initial.sigma_file", "initial.vx_file", "initial.vy_file",
        "initial.vz_file", "initial.boundary_file",
        "loop.dt", "loop.horizon", "loop.inner_tol", "loop.outer_tol", "loop.radiation_tol",
        "loop.inner_max_iters", "loop.outer_max_iters", "loop.max_sweeps",
        "loop.kappa_target", "loop.p", "loop.q", "loop.advection",
        "output.directory", "output.cadence", "output.write_fields",
    };
    return keys;
}

inline std::string nearest_key(const std::string& key) {
    std::string best;
    std::size_t bd = static_cast<std::size_t>(-1);
    for (const auto& k : known_keys()) {
        const std::size_t d = edit_distance(key, k);
        if (d < bd) { bd = d; best = k; }
    }
    return best;
}

struct ConfigError {
    std::string file;
    int line;
    [[noreturn]] void fail_at(const std::string& msg) const {
        nimbus::fail(Phase::config,
                     file + ":" + std::to_string(line) + ": " + msg);
    }
};

inline double parse_double(const std::string& v, const ConfigError& ctx,
                           const std::string& key) {
    try {
        std::size_t pos = 0;
        const double d = std::stod(v, &pos);
        if (pos != v.size()) throw std::invalid_argument("trailing");
        return d;
    } catch (...) {
        ctx.fail_at("key '" + key + "' expects a number, got '" + v + "'");
    }
}

inline int parse_int(const std::string& v, const ConfigError& ctx, const std::string& key) {
    try {
        std::size_t pos = 0;
        const int d = std::stoi(v, &pos);
        if (pos != v.size()) throw std::invalid_argument("trailing");
        return d;
    } catch (...) {
        ctx.fail_at("key '" + key + "' expects an integer, got '" + v + "'");
    }
}

inline bool parse_bool(const std::string& v, const ConfigError& ctx, const std::string& key) {
    if (v == "true" || v == "1" || v == "yes") return true;
    if (v == "false" || v == "0" || v == "no") return false;
    ctx.fail_at("key '" + key + "' expects true/false, got '" + v + "'");
}

inline std::vector<double> parse_list(const std::string& v, const ConfigError& ctx,
                                      const std::string& key) {
    std::vector<double> out;
    std::stringstream ss(v);
    std::string item;
    while (std::getline(ss, item, ',')) out.push_back(parse_double(trim(item), ctx, key));
    if (out.empty()) ctx.fail_at("key '" + key + "' expects a comma list of numbers");
    return out;
}

inline std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

inline std::string fmt(const std::vector<double>& v) {
    std::string s;
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (i) s += ", ";
        s += fmt(v[i]);
    }
    return s;
}

}  // namespace detail

// ---------------------------------------------------------------------------

inline void validate_config(const RunConfig& c) {
    auto bad = [&](const std::string& msg) { fail(Phase::config, "config: " + msg); };
    if (c.threads < 0) bad("threads must be >= 0 (0 = machine parallelism)");
    if (c.resolution < 2) bad("domain resolution must be >= 2");
    if (c.dt <= 0.0) bad("loop.dt must be positive");
    if (c.horizon <= 0.0) bad("loop.horizon must be positive");
    for (double t : {c.inner_tol, c.outer_tol, c.radiation_tol})
        if (t <= 0.0) bad("tolerances must be positive");
    if (c.kappa_target <= 0.0 || c.kappa_target >= 1.0)
        bad("loop.kappa_target must lie in ]0,1[");
    if (!(c.p_exp > 4.0 && 2.0 * c.q_exp > c.p_exp && c.p_exp > c.q_exp && c.q_exp > 3.0))
        bad("exponents must satisfy p > 4, 2q > p > q > 3 (got p = " +
            detail::fmt(c.p_exp) + ", q = " + detail::fmt(c.q_exp) + ")");
    if (c.inner_max_iters < 1 || c.outer_max_iters < 1 || c.max_sweeps < 1)
        bad("iteration budgets must be >= 1");
    if (c.cadence < 1) bad("output.cadence must be >= 1");
    const std::size_t nbands = c.band_edges.size() - 1;
    auto check_per_band = [&](const std::vector<double>& v, const char* name) {
        if (v.size() != 1 && v.size() != nbands)
            bad(std::string("optics.") + name + " needs 1 or " + std::to_string(nbands) +
                " entries");
    };
    if (c.band_edges.size() < 2) bad("grids.band_edges needs at least two entries");
    check_per_band(c.a1, "a1");
    check_per_band(c.r1, "r1");
    check_per_band(c.a2, "a2");
    check_per_band(c.r2, "r2");
    check_per_band(c.boundary_value, "boundary_value");
    for (const std::string* f : {&c.rho_file, &c.pi_file, &c.T_file, &c.sigma_file,
                                 &c.vx_file, &c.vy_file, &c.vz_file, &c.boundary_file}) {
        if (f->empty()) continue;
        std::ifstream is(*f);
        if (!is) bad("referenced file does not exist: " + *f);
    }
    if (c.ray_step_factor <= 0.0 || c.ray_step_factor > 1.0)
        bad("optics.ray_step_factor must lie in ]0,1]");
    if (c.eps2 <= 0.0) bad("optics.eps2 must be strictly positive");
    for (double g : {c.g1_asym, c.g2_asym, c.g3_asym})
        if (g <= -1.0 || g >= 1.0) bad("phase asymmetry parameters must lie in ]-1,1[");
}

inline RunConfig parse_config_text(const std::string& text, const std::string& name) {
    RunConfig c;
    std::istringstream is(text);
    std::string line, section;
    int line_no = 0;
    bool saw_dt = false, saw_horizon = false;

    while (std::getline(is, line)) {
        ++line_no;
        detail::ConfigError ctx{name, line_no};
        const std::size_t hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        line = detail::trim(line);
        if (line.empty()) continue;
        if (line.front() == '[') {
            if (line.back() != ']') ctx.fail_at("malformed section header");
            section = detail::trim(line.substr(1, line.size() - 2));
            continue;
        }
        const std::size_t eq = line.find('=');
        if (eq == std::string::npos) ctx.fail_at("expected 'key = value'");
        const std::string key = detail::trim(line.substr(0, eq));
        const std::string value = detail::trim(line.substr(eq + 1));
        const std::string full = section.empty() ? key : section + "." + key;

        auto num = [&] { return detail::parse_double(value, ctx, full); };
        auto integer = [&] { return detail::parse_int(value, ctx, full); };
        auto boolean = [&] { return detail::parse_bool(value, ctx, full); };
        auto list = [&] { return detail::parse_list(value, ctx, full); };

        if (full == "seed") {
            try {
                c.seed = static_cast<std::uint64_t>(std::stoull(value));
            } catch (...) {
                ctx.fail_at("key 'seed' expects an unsigned integer, got '" + value + "'");
            }
        }
        else if (full == "threads") c.threads = integer();
        else if (full == "domain.shape") {
            if (value == "box") c.shape = Shape::box;
            else if (value == "ball") c.shape = Shape::ball;
            else ctx.fail_at("domain.shape must be 'box' or 'ball'");
        }
        else if (full == "domain.resolution") c.resolution = integer();
        else if (full == "grids.mass_bins") c.mass_bins = integer();
        else if (full == "grids.mass_min") c.mass_min = num();
        else if (full == "grids.mass_max") c.mass_max = num();
        else if (full == "grids.mass_spacing") {
            if (value == "geometric") c.mass_geometric = true;
            else if (value == "uniform") c.mass_geometric = false;
            else ctx.fail_at("grids.mass_spacing must be 'geometric' or 'uniform'");
        }
        else if (full == "grids.band_edges") c.band_edges = list();
        else if (full == "grids.band_panels") c.band_panels = integer();
        else if (full == "grids.band_gauss") c.band_gauss = integer();
        else if (full == "grids.angular_order") c.angular_order = integer();
        else if (full == "physics.eta") c.eta = num();
        else if (full == "physics.zeta") c.zeta = num();
        else if (full == "physics.kappa") c.kappa = num();
        else if (full == "physics.c_v") c.c_v = num();
        else if (full == "physics.R0") c.R0 = num();
        else if (full == "physics.mu_a") c.mu_a = num();
        else if (full == "physics.mu_h") c.mu_h = num();
        else if (full == "physics.phi_preset") c.phi_preset = value;
        else if (full == "physics.phi_amplitude") c.phi_amplitude = num();
        else if (full == "micro.K1") c.K1 = num();
        else if (full == "micro.c_l") c.c_l = num();
        else if (full == "micro.beta0") c.beta0 = num();
        else if (full == "micro.g0_amp") c.g0_amp = num();
        else if (full == "micro.g1_amp") c.g1_amp = num();
        else if (full == "micro.N_star") c.N_star = num();
        else if (full == "micro.L_gl") c.L_gl = num();
        else if (full == "micro.alpha0") c.alpha0 = num();
        else if (full == "micro.pi_ref") c.pi_ref = num();
        else if (full == "micro.T_ref") c.T_ref = num();
        else if (full == "micro.m_a") c.m_a = num();
        else if (full == "micro.m_A") c.m_A = num();
        else if (full == "micro.M_prime") c.M_prime = num();
        else if (full == "micro.M_cut") c.M_cut = num();
        else if (full == "micro.M1_bar") c.M1_bar = num();
        else if (full == "optics.units") {
            if (value != "nondimensional" && value != "si")
                ctx.fail_at("optics.units must be 'nondimensional' or 'si'");
            c.units = value;
        }
        else if (full == "optics.a1") c.a1 = list();
        else if (full == "optics.r1") c.r1 = list();
        else if (full == "optics.a2") c.a2 = list();
        else if (full == "optics.r2") c.r2 = list();
        else if (full == "optics.a3_amp") c.a3_amp = num();
        else if (full == "optics.r3_amp") c.r3_amp = num();
        else if (full == "optics.phase1") c.phase1 = value;
        else if (full == "optics.phase2") c.phase2 = value;
        else if (full == "optics.phase3") c.phase3 = value;
        else if (full == "optics.g1_asym") c.g1_asym = num();
        else if (full == "optics.g2_asym") c.g2_asym = num();
        else if (full == "optics.g3_asym") c.g3_asym = num();
        else if (full == "optics.boundary") {
            if (value != "zero" && value != "constant" && value != "planck_wall")
                ctx.fail_at("optics.boundary must be zero, constant or planck_wall");
            c.boundary = value;
        }
        else if (full == "optics.boundary_value") c.boundary_value = list();
        else if (full == "optics.wall_T") c.wall_T = num();
        else if (full == "optics.eps2") c.eps2 = num();
        else if (full == "optics.ray_step_factor") c.ray_step_factor = num();
        else if (full == "initial.preset") {
            if (value != "uniform" && value != "cloud")
                ctx.fail_at("initial.preset must be 'uniform' or 'cloud'");
            c.preset = value;
        }
        else if (full == "initial.rho0") c.rho0 = num();
        else if (full == "initial.pi_saturation_ratio") c.pi_saturation_ratio = num();
        else if (full == "initial.T0") c.T0 = num();
        else if (full == "initial.T_grad_z") c.T_grad_z = num();
        else if (full == "initial.sigma_amp") c.sigma_amp = num();
        else if (full == "initial.rho_file") c.rho_file = value;
        else if (full == "initial.pi_file") c.pi_file = value;
        else if (full == "initial.T_file") c.T_file = value;
        else if (full == "initial.sigma_file") c.sigma_file = value;
        else if (full == "initial.vx_file") c.vx_file = value;
        else if (full == "initial.vy_file") c.vy_file = value;
        else if (full == "initial.vz_file") c.vz_file = value;
        else if (full == "initial.boundary_file") c.boundary_file = value;
        else if (full == "loop.dt") { c.dt = num(); saw_dt = true; }
        else if (full == "loop.horizon") { c.horizon = num(); saw_horizon = true; }
        else if (full == "loop.inner_tol") c.inner_tol = num();
        else if (full == "loop.outer_tol") c.outer_tol = num();
        else if (full == "loop.radiation_tol") c.radiation_tol = num();
        else if (full == "loop.inner_max_iters") c.inner_max_iters = integer();
        else if (full == "loop.outer_max_iters") c.outer_max_iters = integer();
        else if (full == "loop.max_sweeps") c.max_sweeps = integer();
        else if (full == "loop.kappa_target") c.kappa_target = num();
        else if (full == "loop.p") c.p_exp = num();
        else if (full == "loop.q") c.q_exp = num();
        else if (full == "loop.advection") {
            if (value != "upwind" && value != "semilag")
                ctx.fail_at("loop.advection must be 'upwind' or 'semilag'");
            c.advection = value;
        }
        else if (full == "output.directory") c.directory = value;
        else if (full == "output.cadence") c.cadence = integer();
        else if (full == "output.write_fields") c.write_fields = boolean();
        else {
            ctx.fail_at("unknown key '" + full + "'; nearest valid key is '" +
                        detail::nearest_key(full) + "'");
        }
    }
    if (!saw_dt) fail(Phase::config, name + ": missing required key 'loop.dt'");
    if (!saw_horizon) fail(Phase::config, name + ": missing required key 'loop.horizon'");
    validate_config(c);
    return c;
}

inline RunConfig parse_config(const std::string& path) {
    std::ifstream is(path);
    if (!is) fail(Phase::config, "cannot open config file: " + path);
    std::stringstream ss;
    ss << is.rdbuf();
    return parse_config_text(ss.str(), path);
}

inline std::string write_config(const RunConfig& c) {
    using detail::fmt;
    std::ostringstream os;
    os << "seed = " << c.seed << "\n";
    os << "threads = " << c.threads << "\n\n";
    os << "[domain]\n";
    os << "shape = " << shape_name(c.shape) << "\n";
    os << "resolution = " << c.resolution << "\n\n";
    os << "[grids]\n";
    os << "mass_bins = " << c.mass_bins << "\n";
    os << "mass_min = " << fmt(c.mass_min) << "\n";
    os << "mass_max = " << fmt(c.mass_max) << "\n";
    os << "mass_spacing = " << (c.mass_geometric ? "geometric" : "uniform") << "\n";
    os << "band_edges = " << fmt(c.band_edges) << "\n";
    os << "band_panels = " << c.band_panels << "\n";
    os << "band_gauss = " << c.band_gauss << "\n";
    os << "angular_order = " << c.angular_order << "\n\n";
    os << "[physics]\n";
    os << "eta = " << fmt(c.eta) << "\n";
    os << "zeta = " << fmt(c.zeta) << "\n";
    os << "kappa = " << fmt(c.kappa) << "\n";
    os << "c_v = " << fmt(c.c_v) << "\n";
    os << "R0 = " << fmt(c.R0) << "\n";
    os << "mu_a = " << fmt(c.mu_a) << "\n";
    os << "mu_h = " << fmt(c.mu_h) << "\n";
    os << "phi_preset = " << c.phi_preset << "\n";
    os << "phi_amplitude = " << fmt(c.phi_amplitude) << "\n\n";
    os << "[micro]\n";
    os << "K1 = " << fmt(c.K1) << "\n";
    os << "c_l = " << fmt(c.c_l) << "\n";
    os << "beta0 = " << fmt(c.beta0) << "\n";
    os << "g0_amp = " << fmt(c.g0_amp) << "\n";
    os << "g1_amp = " << fmt(c.g1_amp) << "\n";
    os << "N_star = " << fmt(c.N_star) << "\n";
    os << "L_gl = " << fmt(c.L_gl) << "\n";
    os << "alpha0 = " << fmt(c.alpha0) << "\n";
    os << "pi_ref = " << fmt(c.pi_ref) << "\n";
    os << "T_ref = " << fmt(c.T_ref) << "\n";
    os << "m_a = " << fmt(c.m_a) << "\n";
    os << "m_A = " << fmt(c.m_A) << "\n";
    os << "M_prime = " << fmt(c.M_prime) << "\n";
    os << "M_cut = " << fmt(c.M_cut) << "\n";
    os << "M1_bar = " << fmt(c.M1_bar) << "\n\n";
    os << "[optics]\n";
    os << "units = " << c.units << "\n";
    os << "a1 = " << fmt(c.a1) << "\n";
    os << "r1 = " << fmt(c.r1) << "\n";
    os << "a2 = " << fmt(c.a2) << "\n";
    os << "r2 = " << fmt(c.r2) << "\n";
    os << "a3_amp = " << fmt(c.a3_amp) << "\n";
    os << "r3_amp = " << fmt(c.r3_amp) << "\n";
    os << "phase1 = " << c.phase1 << "\n";
    os << "phase2 = " << c.phase2 << "\n";
    os << "phase3 = " << c.phase3 << "\n";
    os << "g1_asym = " << fmt(c.g1_asym) << "\n";
    os << "g2_asym = " << fmt(c.g2_asym) << "\n";
    os << "g3_asym = " << fmt(c.g3_asym) << "\n";
    os << "boundary = " << c.boundary << "\n";
    os << "boundary_value = " << fmt(c.boundary_value) << "\n";
    os << "wall_T = " << fmt(c.wall_T) << "\n";
    os << "eps2 = " << fmt(c.eps2) << "\n";
    os << "ray_step_factor = " << fmt(c.ray_step_factor) << "\n\n";
    os << "[initial]\n";
    os << "preset = " << c.preset << "\n";
    os << "rho0 = " << fmt(c.rho0) << "\n";
    os << "pi_saturation_ratio = " << fmt(c.pi_saturation_ratio) << "\n";
    os << "T0 = " << fmt(c.T0) << "\n";
    os << "T_grad_z = " << fmt(c.T_grad_z) << "\n";
    os << "sigma_amp = " << fmt(c.sigma_amp) << "\n";
    if (!c.rho_file.empty()) os << "rho_file = " << c.rho_file << "\n";
    if (!c.pi_file.empty()) os << "pi_file = " << c.pi_file << "\n";
    if (!c.T_file.empty()) os << "T_file = " << c.T_file << "\n";
    if (!c.sigma_file.empty()) os << "sigma_file = " << c.sigma_file << "\n";
    if (!c.vx_file.empty()) os << "vx_file = " << c.vx_file << "\n";
    if (!c.vy_file.empty()) os << "vy_file = " << c.vy_file << "\n";
    if (!c.vz_file.empty()) os << "vz_file = " << c.vz_file << "\n";
    if (!c.boundary_file.empty()) os << "boundary_file = " << c.boundary_file << "\n";
    os << "\n[loop]\n";
    os << "dt = " << fmt(c.dt) << "\n";
    os << "horizon = " << fmt(c.horizon) << "\n";
    os << "inner_tol = " << fmt(c.inner_tol) << "\n";
    os << "outer_tol = " << fmt(c.outer_tol) << "\n";
    os << "radiation_tol = " << fmt(c.radiation_tol) << "\n";
    os << "inner_max_iters = " << c.inner_max_iters << "\n";
    os << "outer_max_iters = " << c.outer_max_iters << "\n";
    os << "max_sweeps = " << c.max_sweeps << "\n";
    os << "kappa_target = " << fmt(c.kappa_target) << "\n";
    os << "p = " << fmt(c.p_exp) << "\n";
    os << "q = " << fmt(c.q_exp) << "\n";
    os << "advection = " << c.advection << "\n\n";
    os << "[output]\n";
    os << "directory = " << c.directory << "\n";
    os << "cadence = " << c.cadence << "\n";
    os << "write_fields = " << (c.write_fields ? "true" : "false") << "\n";
    return os.str();
}

// ---------------------------------------------------------------------------
// Assembly: realize grids, coefficient tables and initial fields. The setup
// returned by coupling_setup() points into this object, which therefore must
// outlive it and stay put.
// ---------------------------------------------------------------------------

class Assembled {
public:
    Domain domain;
    MassGrid grid;
    AngularQuadrature quad;
    WavelengthBands bands;
    MicroParams micro;
    PhysParams phys;
    OpticalCoefficients optics;
    BoundaryIntensity boundary;
    PlanckConstants pc;
    InitialState init;
    RunConfig cfg;

    Assembled(const Assembled&) = delete;
    Assembled& operator=(const Assembled&) = delete;

    explicit Assembled(const RunConfig& c) : cfg(c) {
        domain = build_domain({c.shape, c.resolution});
        pc = c.units == "si" ? PlanckConstants::si() : PlanckConstants::nondimensional();

        micro.K1 = c.K1;
        micro.c_l = c.c_l;
        micro.beta0 = c.beta0;
        micro.g0_amp = c.g0_amp;
        micro.g1_amp = c.g1_amp;
        micro.N_star = c.N_star;
        micro.L_gl = c.L_gl;
        micro.alpha0 = c.alpha0;
        micro.pi_ref = c.pi_ref;
        micro.T_ref = c.T_ref;
        micro.sat_factor = c.L_gl * c.mu_h / c.R0;

        MassGridConfig mc;
        mc.bins = c.mass_bins;
        mc.m_min = c.mass_min;
        mc.m_max = c.mass_max;
        mc.geometric = c.mass_geometric;
        mc.m_a = c.m_a;
        mc.m_A = c.m_A;
        mc.M_prime = c.M_prime;
        mc.M_cut = c.M_cut;
        mc.M1_bar = c.M1_bar > 0.0 ? c.M1_bar : derive_M1(c);
        grid = make_mass_grid(mc);

        quad = angular_quadrature(c.angular_order);
        bands = make_bands(c.band_edges, c.band_panels, c.band_gauss);

        build_optics(c);
        build_physics(c);
        build_initial(c);
    }

    CouplingSetup coupling_setup() const {
        CouplingSetup su;
        su.domain = &domain;
        su.grid = &grid;
        su.quad = &quad;
        su.bands = &bands;
        su.micro = micro;
        su.phys = phys;
        su.optics = optics;
        su.boundary = boundary;
        su.pc = pc;
        su.ray_step_factor = cfg.ray_step_factor;
        su.dt = cfg.dt;
        su.inner_tol = cfg.inner_tol;
        su.outer_tol = cfg.outer_tol;
        su.radiation_tol = cfg.radiation_tol;
        su.inner_max_iters = cfg.inner_max_iters;
        su.outer_max_iters = cfg.outer_max_iters;
        su.max_sweeps = cfg.max_sweeps;
        su.kappa_target = cfg.kappa_target;
        su.p_exp = cfg.p_exp;
        su.q_exp = cfg.q_exp;
        su.advection = cfg.advection == "semilag" ? AdvectionScheme::semi_lagrangian
                                                  : AdvectionScheme::upwind;
        return su;
    }

private:
    // support ceiling: growth of the largest seeded mass over the horizon,
    // with the growth exponent capped at one e-fold
    double derive_M1(const RunConfig& c) const {
        MicroParams probe = micro;
        double rate_max = 0.0;
        // sample the per-mass growth rate on a provisional grid
        MassGridConfig mc;
        mc.bins = c.mass_bins;
        mc.m_min = c.mass_min;
        mc.m_max = c.mass_max;
        mc.geometric = c.mass_geometric;
        mc.m_a = c.m_a;
        mc.m_A = c.m_A;
        mc.M_prime = c.M_prime;
        mc.M_cut = c.M_cut;
        mc.M1_bar = c.M_prime;  // placeholder for the probe grid
        MassGrid pg = make_mass_grid(mc);
        // vapor never exceeds sup pi0 + 1 on an accepted horizon
        const double dpi_max =
            c.pi_saturation_ratio * saturation_density(c.T0, probe) + 1.0;
        for (double m : pg.centers)
            if (m > 0.5 * c.m_a)
                rate_max = std::max(rate_max,
                                    probe.K1 * surface_area(m, pg, probe) / m * dpi_max);
        const double efolds = std::min(1.0, rate_max * c.horizon);
        if (rate_max * c.horizon > 1.0)
            fail(Phase::config,
                 "config: condensation growth exceeds one e-fold over the horizon; "
                 "set micro.M1_bar explicitly or shorten the horizon");
        return std::max(c.M_prime, c.M_cut) * std::exp(efolds);
    }

    void build_optics(const RunConfig& c) {
        const std::size_t nbands = c.band_edges.size() - 1;
        auto at = [](const std::vector<double>& v, std::size_t b) {
            return v.size() == 1 ? v[0] : v[b];
        };
        auto phase_of = [&](const std::string& kind, double g) {
            if (kind == "isotropic") return PhaseFunction{PhaseKind::isotropic, 0.0};
            if (kind == "hg") return PhaseFunction{PhaseKind::henyey_greenstein, g};
            fail(Phase::config, "config: phase must be 'isotropic' or 'hg', got " + kind);
        };
        for (std::size_t b = 0; b < nbands; ++b) {
            BandOptics o;
            o.a1 = at(c.a1, b);
            o.r1 = at(c.r1, b);
            o.a2 = at(c.a2, b);
            o.r2 = at(c.r2, b);
            o.a3.resize(grid.bins());
            o.r3.resize(grid.bins());
            for (std::size_t i = 0; i < grid.bins(); ++i) {
                const double m = grid.centers[i];
                const double area_per_mass = surface_area(m, grid, micro) / m;
                o.a3[i] = c.a3_amp * area_per_mass;
                o.r3[i] = c.r3_amp * area_per_mass;
            }
            o.phase1 = phase_of(c.phase1, c.g1_asym);
            o.phase2 = phase_of(c.phase2, c.g2_asym);
            o.phase3 = phase_of(c.phase3, c.g3_asym);
            optics.bands.push_back(std::move(o));
        }
        optics.build_tables(quad);
        optics.validate(grid);

        if (c.boundary == "zero") boundary.kind = BoundaryIntensity::Kind::zero;
        else if (c.boundary == "constant") {
            boundary.kind = BoundaryIntensity::Kind::constant;
            boundary.value.resize(nbands);
            for (std::size_t b = 0; b < nbands; ++b)
                boundary.value[b] =
                    c.boundary_value.size() == 1 ? c.boundary_value[0] : c.boundary_value[b];
        } else {
            boundary.kind = BoundaryIntensity::Kind::planck_wall;
            boundary.wall_T = c.wall_T;
        }

        // an inflow table ("band,value" rows) overrides the preset choice
        if (!c.boundary_file.empty()) {
            std::ifstream is(c.boundary_file);
            if (!is) fail(Phase::config, "cannot open inflow table: " + c.boundary_file);
            boundary.kind = BoundaryIntensity::Kind::constant;
            boundary.value.assign(nbands, 0.0);
            std::string line;
            std::getline(is, line);  // header
            while (std::getline(is, line)) {
                if (line.empty()) continue;
                std::size_t band = 0;
                double v = 0.0;
                if (std::sscanf(line.c_str(), "%zu,%lf", &band, &v) != 2)
                    fail(Phase::config,
                         "bad inflow row in " + c.boundary_file + ": " + line);
                if (band >= nbands)
                    fail(Phase::config, "inflow band index out of range in " +
                                            c.boundary_file);
                if (v < 0.0)
                    fail(Phase::config, "inflow intensity must be non-negative in " +
                                            c.boundary_file);
                boundary.value[band] = v;
            }
        }
    }

    void build_physics(const RunConfig& c) {
        phys.eta = c.eta;
        phys.zeta = c.zeta;
        phys.kappa = c.kappa;
        phys.c_v = c.c_v;
        phys.R0 = c.R0;
        phys.mu_a = c.mu_a;
        phys.mu_h = c.mu_h;
        phys.phi.assign(domain.size(), 0.0);
        phys.grad_phi.assign(domain.size(), Vec3{});
        if (c.phi_preset == "none") return;
        if (c.phi_preset != "cos_z")
            fail(Phase::config, "config: physics.phi_preset must be 'none' or 'cos_z'");
        // cosine column: grad(phi).n vanishes on every wall by symmetry
        auto phi_at = [&](const Vec3& x) {
            const double zt = (x.z - domain.lo.z) / domain.extent;
            return c.phi_amplitude * std::cos(kPi * zt);
        };
        for (std::size_t cc = 0; cc < domain.size(); ++cc) {
            const double zt = (domain.centers[cc].z - domain.lo.z) / domain.extent;
            phys.phi[cc] = phi_at(domain.centers[cc]);
            phys.grad_phi[cc] =
                Vec3{0.0, 0.0,
                     -c.phi_amplitude * kPi / domain.extent * std::sin(kPi * zt)};
        }
        // reflection consistency at the wall faces: the mirrored sample must
        // reproduce the cell value, which is what zero normal flux means on
        // this lattice
        if (c.shape == Shape::box) {
            for (std::size_t cc = 0; cc < domain.size(); ++cc) {
                if (!domain.boundary[cc]) continue;
                for (int ax = 0; ax < 3; ++ax)
                    for (int s = -1; s <= 1; s += 2) {
                        if (domain.neighbor(static_cast<int>(cc), ax, s) >= 0) continue;
                        Vec3 mirror = domain.centers[cc];
                        mirror[ax] += s * domain.hx;
                        if (std::abs(phi_at(mirror) - phys.phi[cc]) >
                            1e-12 * (std::abs(phys.phi[cc]) + 1.0))
                            fail(Phase::config,
                                 "config: potential preset violates the zero normal "
                                 "derivative at a wall face");
                    }
            }
        }
    }

    void build_initial(const RunConfig& c) {
        const std::size_t nc = domain.size();
        init.rho.assign(nc, c.rho0);
        init.T.assign(nc, c.T0);
        if (c.T_grad_z != 0.0)
            for (std::size_t cc = 0; cc < nc; ++cc)
                init.T[cc] = c.T0 + c.T_grad_z * domain.centers[cc].z;
        mirror_boundary_temperature(domain, init.T);  // Neumann-consistent start

        init.pi.assign(nc, 0.0);
        for (std::size_t cc = 0; cc < nc; ++cc)
            init.pi[cc] = c.pi_saturation_ratio * saturation_density(init.T[cc], micro);

        init.v.assign(nc, Vec3{});
        init.sigma = Spectrum(grid.bins(), nc, 0.0);
        if (c.preset == "cloud" && c.sigma_amp > 0.0) {
            // smooth bump over the seeded mass range ]m_a, M_prime[
            const double la = std::log(c.m_a), lb = std::log(c.M_prime);
            for (std::size_t i = 0; i < grid.bins(); ++i) {
                const double m = grid.centers[i];
                if (m <= c.m_a || m >= c.M_prime) continue;
                const double t = (std::log(m) - la) / (lb - la);
                const double shape = t * t * (1.0 - t) * (1.0 - t) * 16.0;
                for (std::size_t cc = 0; cc < nc; ++cc)
                    init.sigma.at(cc, i) = c.sigma_amp * shape;
            }
        }

        if (!c.rho_file.empty()) init.rho = load_field_csv(c.rho_file, nc);
        if (!c.pi_file.empty()) init.pi = load_field_csv(c.pi_file, nc);
        if (!c.T_file.empty()) {
            init.T = load_field_csv(c.T_file, nc);
            mirror_boundary_temperature(domain, init.T);
        }
        if (!c.sigma_file.empty()) init.sigma = load_spectrum_csv(c.sigma_file, grid, nc);
        if (!c.vx_file.empty() || !c.vy_file.empty() || !c.vz_file.empty()) {
            Field vx = c.vx_file.empty() ? Field(nc, 0.0) : load_field_csv(c.vx_file, nc);
            Field vy = c.vy_file.empty() ? Field(nc, 0.0) : load_field_csv(c.vy_file, nc);
            Field vz = c.vz_file.empty() ? Field(nc, 0.0) : load_field_csv(c.vz_file, nc);
            for (std::size_t cc = 0; cc < nc; ++cc) init.v[cc] = {vx[cc], vy[cc], vz[cc]};
            for (std::size_t cc = 0; cc < nc; ++cc)
                if (domain.boundary[cc] && norm(init.v[cc]) != 0.0)
                    fail(Phase::config,
                         "config: initial velocity must vanish on boundary cells");
        }

        for (double v : init.rho)
            if (v <= 0.0) fail(Phase::config, "config: initial dry-air density must be > 0");
        for (double v : init.T)
            if (v <= 0.0) fail(Phase::config, "config: initial temperature must be > 0");
        for (double v : init.pi)
            if (v < 0.0) fail(Phase::config, "config: initial vapor density must be >= 0");
    }
};

}  // namespace nimbus
