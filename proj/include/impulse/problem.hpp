#pragma once

#include <impulse/config.hpp>
#include <impulse/expr.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <set>
#include <sstream>
#include <string>

namespace impulse {

enum class BoundaryMode { natural, absorbing };

enum class FundamentalsChoice { automatic, analytic, numeric };

inline const char* to_string(BoundaryMode m) {
    return m == BoundaryMode::natural ? "natural" : "absorbing";
}

struct DiffusionSpec {
    Expr drift;
    Expr vol;
    std::string drift_text;
    std::string vol_text;
    double alpha = 0.0;
    double lo = -std::numeric_limits<double>::infinity();
    double hi = std::numeric_limits<double>::infinity();
    BoundaryMode mode = BoundaryMode::natural;
    double penalty = 0.0;

    double mu(double x) const { return drift(x); }
    double sigma(double x) const { return vol(x); }
};

struct SolverSettings {
    double x_min = -20.0;
    double x_max = 20.0;
    FundamentalsChoice fundamentals = FundamentalsChoice::automatic;
    std::optional<double> norm_point;
    double ode_tol = 1e-10;
    int scan_points = 200;
    int grid = 2000;
    int n_max = 500;
    double tol = 1e-6;
    int resolvent_nodes = 20000;
    // Monte Carlo defaults used by the CLI.
    double sim_dt = 1e-3;
    double sim_horizon = 0.0;  // 0: derived from alpha
    long sim_paths = 10000;
};

struct ImpulseProblem {
    DiffusionSpec diffusion;
    Expr f;
    Expr K;
    std::string f_text;
    std::string K_text;
    ParamTable params;
    SolverSettings settings;

    double penalty() const { return diffusion.penalty; }
    bool absorbing() const { return diffusion.mode == BoundaryMode::absorbing; }
};

/// Uniform diagnostic grid on the truncated interval.
inline std::vector<double> diagnostic_grid(const ImpulseProblem& p, int n = 256) {
    std::vector<double> xs(n);
    const double lo = p.settings.x_min, hi = p.settings.x_max;
    for (int i = 0; i < n; ++i) xs[i] = lo + (hi - lo) * i / (n - 1);
    return xs;
}

namespace detail {

inline std::string at_line(const ConfigEntry& e) {
    return "line " + std::to_string(e.line) + ": ";
}

inline double config_number(const ConfigEntry& e, const ParamTable& params) {
    std::string v = e.value;
    std::string lower = v;
    std::transform(lower.begin(), lower.end(), lower.begin(), [](unsigned char c) { return std::tolower(c); });
    if (lower == "inf" || lower == "+inf" || lower == "infinity") return std::numeric_limits<double>::infinity();
    if (lower == "-inf" || lower == "-infinity") return -std::numeric_limits<double>::infinity();
    try {
        const Expr ex = parse_expr(v, {}, params);
        return ex(0.0);
    } catch (const std::exception& err) {
        throw ConfigError(at_line(e) + "bad numeric value for '" + e.key + "': " + err.what());
    }
}

inline long config_integer(const ConfigEntry& e, const ParamTable& params) {
    const double v = config_number(e, params);
    if (!std::isfinite(v) || v != std::floor(v) || v < 1)
        throw ConfigError(at_line(e) + "'" + e.key + "' must be a positive integer");
    return static_cast<long>(v);
}

inline Expr config_expr(const ConfigEntry& e, const std::vector<std::string>& vars, const ParamTable& params) {
    try {
        return parse_expr(e.value, vars, params);
    } catch (const ParseError& err) {
        throw ConfigError(at_line(e) + "in '" + e.key + "': " + err.what());
    }
}

inline void reject_unknown(const ConfigFile& cfg, const std::string& sec, const std::set<std::string>& known) {
    for (const auto& e : cfg.section(sec))
        if (!known.count(e.key)) throw ConfigError(at_line(e) + "unknown key '" + e.key + "' in [" + sec + "]");
}

inline std::string fmt(double v) {
    std::ostringstream os;
    os.precision(10);
    os << v;
    return os.str();
}

} // namespace detail

/// Checks the problem invariants on the diagnostic grid; throws ConfigError
/// naming the first offending point.
inline void validate_problem(const ImpulseProblem& p) {
    const auto& d = p.diffusion;
    const auto& s = p.settings;
    if (!(d.alpha >= 0.0) || !std::isfinite(d.alpha)) throw ConfigError("alpha must be finite and nonnegative");
    if (!(d.lo < d.hi)) throw ConfigError("interval requires lo < hi");
    if (d.mode == BoundaryMode::absorbing && !std::isfinite(d.lo))
        throw ConfigError("absorbing boundary requires a finite lo");
    if (d.alpha == 0.0 && d.mode != BoundaryMode::absorbing)
        throw ConfigError("alpha = 0 requires an absorbing boundary for termination");
    if (d.penalty > 0.0) throw ConfigError("penalty must be nonpositive");
    if (!(std::isfinite(s.x_min) && std::isfinite(s.x_max) && s.x_min < s.x_max))
        throw ConfigError("truncation requires finite x_min < x_max");
    if (s.x_min < d.lo || s.x_max > d.hi) throw ConfigError("truncation [x_min, x_max] must lie inside [lo, hi]");
    if (s.tol <= 0.0 || s.ode_tol <= 0.0) throw ConfigError("tolerances must be positive");
    if (s.grid < 16) throw ConfigError("grid must have at least 16 nodes");
    if (s.scan_points < 10) throw ConfigError("scan_points must be at least 10");

    for (const double x : diagnostic_grid(p)) {
        const std::string at = " at x = " + detail::fmt(x);
        double sig, kxx, fx;
        try {
            sig = d.sigma(x);
            kxx = p.K(x, x);
            fx = p.f(x);
            (void)d.mu(x);
        } catch (const EvalError& e) {
            throw ConfigError(std::string("evaluation error") + at + ": " + e.what());
        }
        if (!(sig > 0.0) || !std::isfinite(sig)) throw ConfigError("volatility must be positive" + at);
        if (!(kxx < 0.0)) throw ConfigError("fixed-cost condition K(x,x) < 0 violated" + at);
        if (!std::isfinite(fx)) throw ConfigError("running reward f is not finite" + at);
        if (d.alpha == 0.0 && fx != 0.0) throw ConfigError("alpha = 0 requires f = 0" + at);
    }
}

/// Parses and validates a problem from configuration text.
inline ImpulseProblem load_problem(std::string_view config_text) {
    const ConfigFile cfg = ConfigFile::parse(config_text);
    for (const auto& name : cfg.section_names())
        if (name != "diffusion" && name != "reward" && name != "params" && name != "solver")
            throw ConfigError("unknown section [" + name + "]");

    ImpulseProblem p;
    for (const auto& e : cfg.section("params")) {
        if (p.params.count(e.key)) throw ConfigError(detail::at_line(e) + "duplicate parameter '" + e.key + "'");
        if (e.key == "x" || e.key == "y") throw ConfigError(detail::at_line(e) + "parameter name '" + e.key + "' is reserved");
        p.params[e.key] = detail::config_number(e, p.params);
    }

    detail::reject_unknown(cfg, "diffusion", {"drift", "vol", "alpha", "lo", "hi", "boundary", "penalty"});
    detail::reject_unknown(cfg, "reward", {"f", "K", "direction"});
    detail::reject_unknown(cfg, "solver", {"x_min", "x_max", "fundamentals", "norm_point", "ode_tol", "scan_points",
                                           "grid", "n_max", "tol", "resolvent_nodes", "sim_dt", "sim_horizon",
                                           "sim_paths"});

    auto require = [&](const std::string& sec, const char* key) -> const ConfigEntry& {
        const ConfigEntry* e = cfg.find(sec, key);
        if (!e) throw ConfigError(std::string("missing field '") + key + "' in [" + sec + "]");
        return *e;
    };

    auto& d = p.diffusion;
    const auto& drift = require("diffusion", "drift");
    const auto& vol = require("diffusion", "vol");
    d.drift = detail::config_expr(drift, {"x"}, p.params);
    d.vol = detail::config_expr(vol, {"x"}, p.params);
    d.drift_text = drift.value;
    d.vol_text = vol.value;
    d.alpha = detail::config_number(require("diffusion", "alpha"), p.params);
    if (const auto* e = cfg.find("diffusion", "lo")) d.lo = detail::config_number(*e, p.params);
    if (const auto* e = cfg.find("diffusion", "hi")) d.hi = detail::config_number(*e, p.params);
    if (const auto* e = cfg.find("diffusion", "boundary")) {
        if (e->value == "natural") d.mode = BoundaryMode::natural;
        else if (e->value == "absorbing") d.mode = BoundaryMode::absorbing;
        else throw ConfigError(detail::at_line(*e) + "boundary must be \"natural\" or \"absorbing\"");
    }
    if (const auto* e = cfg.find("diffusion", "penalty")) d.penalty = detail::config_number(*e, p.params);

    const auto& f = require("reward", "f");
    const auto& K = require("reward", "K");
    p.f = detail::config_expr(f, {"x"}, p.params);
    p.K = detail::config_expr(K, {"x", "y"}, p.params);
    p.f_text = f.value;
    p.K_text = K.value;
    if (const auto* e = cfg.find("reward", "direction"); e && e->value != "downward")
        throw ConfigError(detail::at_line(*e) + "only downward impulses are supported");

    auto& s = p.settings;
    s.x_min = std::isfinite(d.lo) ? d.lo : std::max(-20.0, d.lo);
    s.x_max = std::isfinite(d.hi) ? d.hi : std::min(20.0, d.hi);
    auto num = [&](const char* key, double& out) {
        if (const auto* e = cfg.find("solver", key)) out = detail::config_number(*e, p.params);
    };
    auto integer = [&](const char* key, auto& out) {
        if (const auto* e = cfg.find("solver", key))
            out = static_cast<std::remove_reference_t<decltype(out)>>(detail::config_integer(*e, p.params));
    };
    num("x_min", s.x_min);
    num("x_max", s.x_max);
    num("ode_tol", s.ode_tol);
    num("tol", s.tol);
    num("sim_dt", s.sim_dt);
    num("sim_horizon", s.sim_horizon);
    integer("scan_points", s.scan_points);
    integer("grid", s.grid);
    integer("n_max", s.n_max);
    integer("resolvent_nodes", s.resolvent_nodes);
    integer("sim_paths", s.sim_paths);
    if (const auto* e = cfg.find("solver", "norm_point")) s.norm_point = detail::config_number(*e, p.params);
    if (const auto* e = cfg.find("solver", "fundamentals")) {
        if (e->value == "auto") s.fundamentals = FundamentalsChoice::automatic;
        else if (e->value == "analytic") s.fundamentals = FundamentalsChoice::analytic;
        else if (e->value == "numeric") s.fundamentals = FundamentalsChoice::numeric;
        else throw ConfigError(detail::at_line(*e) + "fundamentals must be auto, analytic or numeric");
    }

    validate_problem(p);
    return p;
}

} // namespace impulse
