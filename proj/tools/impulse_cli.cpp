// impulse: solve | iterate | simulate | check
//
// Exit codes: 0 success, 1 config or usage error, 2 solver/oracle failure,
// 3 acceptance-check failure. Output files are written only after the
// whole command has succeeded.

#include "acceptance_suite.hpp"

#include <impulse/impulse.hpp>

#include <CLI11.hpp>
#include <json.hpp>

#include <chrono>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <list>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;
using namespace impulse;

namespace {

enum Exit { ok = 0, config_error = 1, solver_error = 2, check_failed = 3 };

struct Globals {
    std::string out = "out";
    std::optional<std::uint64_t> seed;
    std::optional<int> grid;
    std::optional<double> tol;
};

struct Loaded {
    std::string text;
    ImpulseProblem problem;
};

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot open " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

Loaded load(const std::string& path, const Globals& g) {
    Loaded l;
    l.text = read_file(path);
    l.problem = load_problem(l.text);
    if (g.grid) l.problem.settings.grid = *g.grid;
    if (g.tol) l.problem.settings.tol = *g.tol;
    validate_problem(l.problem);
    return l;
}

std::string fnv1a(const std::string& s) {
    std::uint64_t h = 14695981039346656037ull;
    for (const unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ull;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

std::string num(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.16e", v);
    return buf;
}

json jnum(double v) {
    if (std::isnan(v)) return nullptr;
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    return v;
}

/// Pending output files; flushed together once the command succeeded.
class Outputs {
public:
    explicit Outputs(std::string dir) : dir_(std::move(dir)) {}

    std::ostringstream& file(const std::string& name) {
        files_.emplace_back(name, std::ostringstream{});
        return files_.back().second;
    }

    void json_file(const std::string& name, const json& j) { file(name) << j.dump(2) << '\n'; }

    void flush() const {
        fs::create_directories(dir_);
        for (const auto& [name, body] : files_) {
            std::ofstream out(fs::path(dir_) / name, std::ios::binary);
            out << body.str();
            if (!out) throw std::runtime_error("cannot write " + (fs::path(dir_) / name).string());
        }
    }

private:
    std::string dir_;
    std::list<std::pair<std::string, std::ostringstream>> files_;  // stable references
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

json problem_echo(const Loaded& l) {
    const auto& p = l.problem;
    const auto& d = p.diffusion;
    const auto& s = p.settings;
    json params = json::object();
    for (const auto& [k, v] : p.params) params[k] = jnum(v);
    return {{"drift", d.drift_text},
            {"vol", d.vol_text},
            {"alpha", jnum(d.alpha)},
            {"lo", jnum(d.lo)},
            {"hi", jnum(d.hi)},
            {"boundary", to_string(d.mode)},
            {"penalty", jnum(d.penalty)},
            {"f", p.f_text},
            {"K", p.K_text},
            {"params", params},
            {"solver",
             {{"x_min", jnum(s.x_min)},
              {"x_max", jnum(s.x_max)},
              {"scan_points", s.scan_points},
              {"grid", s.grid},
              {"n_max", s.n_max},
              {"tol", jnum(s.tol)},
              {"ode_tol", jnum(s.ode_tol)}}}};
}

json report_header(const Loaded& l, const std::string& config_path, const char* command) {
    return {{"tool", std::string("impulse ") + version},
            {"command", command},
            {"config", config_path},
            {"config_hash", "fnv1a64:" + fnv1a(l.text)},
            {"problem", problem_echo(l)}};
}

json context_json(const TransformContext& ctx) {
    return {{"fundamentals", to_string(ctx.pair.provenance())},
            {"norm_point", jnum(ctx.pair.norm_point())},
            {"resolvent", ctx.g.method_name()},
            {"F_lo", jnum(ctx.F_lo)},
            {"D", jnum(ctx.D)}};
}

json policy_json(const BandPolicy& p) {
    json bands = json::array();
    for (std::size_t k = 0; k < p.bands.size(); ++k) {
        json band = {{"a", p.bands[k].a}, {"b", p.bands[k].b}};
        // Per-band slopes exist only for solved policies.
        if (k < p.band_beta.size()) band["beta"] = jnum(p.band_beta[k]);
        bands.push_back(band);
    }
    return {{"bands", bands},
            {"beta", jnum(p.beta)},
            {"D", jnum(p.D)},
            {"F_lo", jnum(p.F_lo)},
            {"fixed_point", {jnum(p.F_lo), jnum(p.D)}}};
}

// ---------------------------------------------------------------- solve

int cmd_solve(const std::string& config, const Globals& g) {
    const auto t0 = std::chrono::steady_clock::now();
    const Loaded l = load(config, g);
    const auto ctx = make_context(l.problem);
    const double t_ctx = seconds_since(t0);
    const auto res = maximize_slope(*ctx);
    const double t_solve = seconds_since(t0);
    const auto vf = assemble_value(ctx, res.policy);
    const auto& pol = res.policy;

    Outputs out(g.out);
    json rep = report_header(l, config, "solve");
    rep["context"] = context_json(*ctx);
    rep["policy"] = policy_json(pol);
    rep["multi_trigger"] = res.multi_trigger;
    rep["warnings"] = res.warnings;

    json bands = json::array();
    for (std::size_t k = 0; k < pol.bands.size(); ++k) {
        const auto [a, b] = pol.bands[k];
        const auto sf = smooth_fit_check(vf, k);
        const auto gr = solve_gamma(*ctx, a);
        const auto fin = finiteness_check(*ctx, a);
        bands.push_back({{"a", a},
                         {"b", b},
                         {"gamma", jnum(gr.gamma)},
                         {"gamma_residual", jnum(gr.residual)},
                         {"smooth_fit", {{"left", sf.left}, {"right", sf.right}, {"gap", sf.gap}}},
                         {"finite", fin.finite},
                         {"q", jnum(fin.q)},
                         {"v_a", vf(a)},
                         {"v_b", vf(b)}});
    }
    rep["bands"] = bands;

    const auto xs = linspace(ctx->x_min(), ctx->x_max(), 1000);
    json samples = json::array();
    for (const double x : {ctx->x_min(), 0.5 * (ctx->x_min() + ctx->x_max()), ctx->x_max()})
        samples.push_back({{"x", x}, {"v", vf(x)}});
    rep["value_samples"] = samples;

    auto& vcsv = out.file("value.csv");
    vcsv << "x,v,dv\n";
    for (const double x : xs) vcsv << num(x) << ',' << num(vf(x)) << ',' << num(vf.deriv(x)) << '\n';

    auto& scsv = out.file("beta_scan.csv");
    scsv << "a,b,beta,gamma,status\n";
    for (const auto& s : res.scan)
        scsv << num(s.a) << ',' << num(s.b) << ',' << num(s.beta) << ',' << num(s.gamma) << ',' << to_string(s.status)
             << '\n';

    if (!pol.empty()) {
        // Majorant against the shifted reward for the first band's target.
        const double a = pol.bands[0].a;
        const double gamma = solve_gamma(*ctx, a).gamma;
        const double phi_a = ctx->pair.phi(a);
        const auto R = transformed_reward(ctx, a);
        auto& mcsv = out.file("majorant.csv");
        mcsv << "x,y,majorant,shifted_reward\n";
        for (const double x : xs) {
            if (ctx->absorbing() && x <= ctx->lo()) continue;
            const auto v = ctx->pair(x);
            const double y = v.F();
            mcsv << num(x) << ',' << num(y) << ',' << num(pol.D + pol.beta * (y - pol.F_lo)) << ','
                 << num(R(y) + gamma * phi_a / v.phi) << '\n';
        }
    }

    rep["timings"] = {{"context", t_ctx}, {"solve", t_solve - t_ctx}, {"total", seconds_since(t0)}};
    out.json_file("report.json", rep);
    out.flush();

    std::printf("beta* = %.10g\n", pol.beta);
    for (const auto& b : pol.bands) std::printf("band a = %.10g b = %.10g\n", b.a, b.b);
    if (pol.empty()) std::printf("no intervention\n");
    for (const auto& w : res.warnings) std::fprintf(stderr, "warning: %s\n", w.c_str());
    return ok;
}

// -------------------------------------------------------------- iterate

int cmd_iterate(const std::string& config, const Globals& g) {
    const auto t0 = std::chrono::steady_clock::now();
    const Loaded l = load(config, g);
    const auto ctx = make_context(l.problem);
    const auto& s = l.problem.settings;
    OracleOptions o;
    o.nodes = s.grid;
    o.n_max = s.n_max;
    o.tol = s.tol;
    const auto G = value_iteration(*ctx, o);
    const double t_oracle = seconds_since(t0);
    if (!G.converged) {
        std::fprintf(stderr, "error: value iteration did not converge in %d iterations (last change %.3g)\n",
                     G.iterations, G.last_change);
        return solver_error;
    }

    Outputs out(g.out);
    json rep = report_header(l, config, "iterate");
    rep["context"] = context_json(*ctx);
    json changes = json::array();
    for (const double c : G.changes) changes.push_back(c);
    json trig = json::array();
    for (const auto& t : G.triggers) trig.push_back({{"node", t.node}, {"x", t.x}, {"target", t.target}});
    rep["oracle"] = {{"nodes", G.x.size()},
                     {"iterations", G.iterations},
                     {"converged", G.converged},
                     {"last_change", G.last_change},
                     {"floor", jnum(G.floor)},
                     {"sup_changes", changes},
                     {"triggers", trig}};

    // Cross-check against the direct method where it is available.
    try {
        const auto res = maximize_slope(*ctx);
        const auto vf = assemble_value(ctx, res.policy);
        const double top = res.policy.empty() ? ctx->x_max() : res.policy.bands.back().b;
        double err = 0.0;
        for (std::size_t i = 0; i < G.x.size() && G.x[i] <= top; ++i) {
            const double v = vf(G.x[i]);
            err = std::max(err, std::fabs(G.value(i) - v) / std::max(std::fabs(v), 1e-300));
        }
        const double cell = G.x[1] - G.x[0];
        json offs = json::array();
        for (const auto& b : res.policy.bands) {
            double dist = inf_v;
            for (const auto& t : G.triggers) dist = std::min(dist, std::fabs(t.x - b.b));
            offs.push_back(jnum(dist / cell));
        }
        rep["comparison"] = {{"policy", policy_json(res.policy)},
                             {"sup_rel_error", err},
                             {"range", {ctx->x_min(), top}},
                             {"trigger_offset_cells", offs}};
    } catch (const SolverError& e) {
        rep["comparison"] = {{"error", e.what()}};
    }

    auto& ocsv = out.file("oracle.csv");
    ocsv << "node,x,y,Phi,v,stopping\n";
    for (std::size_t i = 0; i < G.x.size(); ++i)
        ocsv << i << ',' << num(G.x[i]) << ',' << num(G.y[i]) << ',' << num(G.Phi[i]) << ',' << num(G.value(i)) << ','
             << (G.touching[i] ? 1 : 0) << '\n';
    auto& tcsv = out.file("trace.csv");
    tcsv << "iteration,node,y,Phi\n";
    for (const auto& [n, phi] : G.trace)
        for (std::size_t i = 0; i < phi.size(); ++i) tcsv << n << ',' << i << ',' << num(G.y[i]) << ',' << num(phi[i]) << '\n';
    auto& ccsv = out.file("convergence.csv");
    ccsv << "iteration,sup_change\n";
    for (std::size_t i = 0; i < G.changes.size(); ++i) ccsv << i + 1 << ',' << num(G.changes[i]) << '\n';
    auto& gcsv = out.file("triggers.csv");
    gcsv << "node,x,y,target\n";
    for (const auto& t : G.triggers) gcsv << t.node << ',' << num(t.x) << ',' << num(G.y[t.node]) << ',' << num(t.target) << '\n';

    rep["timings"] = {{"oracle", t_oracle}, {"total", seconds_since(t0)}};
    out.json_file("report.json", rep);
    out.flush();

    std::printf("converged after %d iterations, last change %.3g\n", G.iterations, G.last_change);
    for (const auto& t : G.triggers) std::printf("trigger x = %.6g -> %.6g\n", t.x, t.target);
    return ok;
}

// ------------------------------------------------------------- simulate

BandPolicy policy_from_report(const std::string& path) {
    json j;
    try {
        j = json::parse(read_file(path));
    } catch (const json::exception& e) {
        throw ConfigError("cannot parse policy report " + path + ": " + e.what());
    }
    if (!j.contains("policy") || !j["policy"].contains("bands")) throw ConfigError(path + " has no policy");
    BandPolicy p;
    for (const auto& b : j["policy"]["bands"]) p.bands.push_back({b.at("a").get<double>(), b.at("b").get<double>()});
    if (j["policy"]["beta"].is_number()) p.beta = j["policy"]["beta"].get<double>();
    return p;
}

BandPolicy policy_from_flags(const std::vector<std::string>& specs) {
    BandPolicy p;
    for (const auto& s : specs) {
        const auto comma = s.find(',');
        if (comma == std::string::npos) throw ConfigError("--band expects a,b but got '" + s + "'");
        try {
            p.bands.push_back({std::stod(s.substr(0, comma)), std::stod(s.substr(comma + 1))});
        } catch (const std::exception&) {
            throw ConfigError("--band expects numbers but got '" + s + "'");
        }
    }
    std::sort(p.bands.begin(), p.bands.end(), [](const Band& l, const Band& r) { return l.b < r.b; });
    for (std::size_t k = 0; k < p.bands.size(); ++k) {
        if (!(p.bands[k].a < p.bands[k].b)) throw ConfigError("band target must lie below its trigger");
        if (k > 0 && p.bands[k - 1].b > p.bands[k].a) throw ConfigError("bands overlap");
    }
    return p;
}

struct SimArgs {
    std::string policy;
    std::vector<std::string> bands;
    std::vector<double> x0;
    std::optional<long> paths;
    std::optional<double> dt;
};

int cmd_simulate(const std::string& config, const Globals& g, const SimArgs& a) {
    const auto t0 = std::chrono::steady_clock::now();
    const Loaded l = load(config, g);
    if (a.policy.empty() && a.bands.empty()) {
        std::fprintf(stderr, "error: a policy is required (--policy report.json or --band a,b)\n");
        return config_error;
    }
    const BandPolicy pol = a.policy.empty() ? policy_from_flags(a.bands) : policy_from_report(a.policy);
    const auto ctx = make_context(l.problem);
    const auto& s = l.problem.settings;

    SimConfig cfg;
    cfg.dt = a.dt.value_or(s.sim_dt);
    cfg.n_paths = a.paths.value_or(s.sim_paths);
    cfg.seed = g.seed.value_or(1);
    std::vector<double> x0s = a.x0;
    if (x0s.empty()) x0s.push_back(0.5 * (s.x_min + s.x_max));

    std::vector<SimEstimate> est;
    for (const double x0 : x0s) {
        cfg.x0 = x0;
        est.push_back(simulate_policy(*ctx, pol, cfg));
    }

    Outputs out(g.out);
    auto& csv = out.file("estimates.csv");
    csv << "# generator: " << generator_name << '\n'
        << "# seed: " << cfg.seed << '\n'
        << "# dt: " << num(cfg.dt) << '\n'
        << "# horizon: " << num(est.front().horizon) << '\n'
        << "x0,estimate,std_error,n_paths,censored_fraction\n";
    for (std::size_t i = 0; i < x0s.size(); ++i)
        csv << num(x0s[i]) << ',' << num(est[i].estimate) << ',' << num(est[i].std_error) << ',' << est[i].n_paths << ','
            << num(est[i].censored_fraction) << '\n';

    json rep = report_header(l, config, "simulate");
    rep["policy"] = policy_json(pol);
    json rows = json::array();
    for (std::size_t i = 0; i < x0s.size(); ++i)
        rows.push_back({{"x0", x0s[i]},
                        {"estimate", est[i].estimate},
                        {"std_error", est[i].std_error},
                        {"n_paths", est[i].n_paths},
                        {"censored_fraction", est[i].censored_fraction},
                        {"mean_interventions", est[i].mean_interventions}});
    rep["simulation"] = {{"generator", generator_name},
                         {"seed", cfg.seed},
                         {"dt", cfg.dt},
                         {"horizon", est.front().horizon},
                         {"estimates", rows}};
    rep["timings"] = {{"total", seconds_since(t0)}};
    out.json_file("report.json", rep);
    out.flush();

    for (std::size_t i = 0; i < x0s.size(); ++i)
        std::printf("x0 = %.6g: %.8g +- %.3g\n", x0s[i], est[i].estimate, est[i].std_error);
    return ok;
}

// ---------------------------------------------------------------- check

int cmd_check(const std::string& config_dir, const Globals& g) {
    acceptance::Options opt;
    opt.config_dir = config_dir;
    if (g.seed) opt.seed = *g.seed;
    acceptance::Suite suite(opt);
    bool all = true;
    suite.run([&](const acceptance::Criterion& c) {
        std::printf("%s\n", acceptance::format_line(c).c_str());
        std::fflush(stdout);
        all = all && c.pass;
    });
    return all ? ok : check_failed;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Band policies for impulse control of one-dimensional diffusions"};
    app.set_version_flag("--version", std::string("impulse ") + version);
    app.require_subcommand(1);

    Globals g;
    app.add_option("--out", g.out, "Output directory")->capture_default_str();
    app.add_option("--seed", g.seed, "Random seed (simulate default 1)");
    app.add_option("--grid", g.grid, "Oracle grid nodes")->check(CLI::Range(16, 1 << 20));
    app.add_option("--tol", g.tol, "Oracle convergence tolerance")->check(CLI::PositiveNumber);

    std::string config;
    auto* solve = app.add_subcommand("solve", "Direct two-stage solve");
    solve->add_option("config", config, "Problem config")->required()->check(CLI::ExistingFile);
    solve->fallthrough();

    auto* iterate = app.add_subcommand("iterate", "Value iteration on a grid");
    iterate->add_option("config", config, "Problem config")->required()->check(CLI::ExistingFile);
    iterate->fallthrough();

    SimArgs sim;
    auto* simulate = app.add_subcommand("simulate", "Monte Carlo evaluation of a band policy");
    simulate->add_option("config", config, "Problem config")->required()->check(CLI::ExistingFile);
    simulate->add_option("--policy", sim.policy, "report.json from a previous solve")->check(CLI::ExistingFile);
    simulate->add_option("--band", sim.bands, "Band as a,b (repeatable)");
    simulate->add_option("--x0", sim.x0, "Starting points (repeatable)");
    simulate->add_option("--paths", sim.paths, "Number of paths")->check(CLI::PositiveNumber);
    simulate->add_option("--dt", sim.dt, "Time step")->check(CLI::PositiveNumber);
    simulate->fallthrough();

    std::string config_dir = IMPULSE_CONFIG_DIR;
    auto* check = app.add_subcommand("check", "Run the acceptance suite");
    check->add_option("--configs", config_dir, "Directory holding the example configs")->capture_default_str();
    check->fallthrough();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? ok : config_error;
    }

    try {
        if (*solve) return cmd_solve(config, g);
        if (*iterate) return cmd_iterate(config, g);
        if (*simulate) return cmd_simulate(config, g, sim);
        if (*check) return cmd_check(config_dir, g);
    } catch (const ConfigError& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return config_error;
    } catch (const ParseError& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return config_error;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return solver_error;
    }
    return ok;
}
