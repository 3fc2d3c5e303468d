#pragma once

// Value iteration on a grid: Phi_{n+1} = envelope(max(M Phi_n, floor)),
// where Phi = (w - g)/phi is read in the coordinate y = F(x), M is the
// intervention operator and the envelope realizes optimal stopping with
// the boundary point (F_lo, D). Independent of the direct method.

#include <impulse/envelope.hpp>
#include <impulse/parallel.hpp>
#include <impulse/transform.hpp>

#include <algorithm>
#include <cmath>
#include <functional>
#include <optional>
#include <vector>

namespace impulse {

struct OracleOptions {
    int nodes = 2000;
    int n_max = 500;
    double tol = 1e-6;
    std::vector<int> log_iterations{1, 2, 3, 5, 10};  // iterates kept in the trace
    std::function<void(int, const std::vector<double>&)> on_iterate;  // called with (n, Phi_n)
};

struct OracleTrigger {
    std::size_t node;
    double x;
    double target;
};

struct OracleGrid {
    std::vector<double> x, y, phi, g;
    std::vector<double> Phi;  // converged iterate
    std::vector<double> reward;  // max(M Phi_{n-1}, floor): the obstacle of the last step
    double floor = 0.0;
    int iterations = 0;
    bool converged = false;
    double last_change = inf_v;
    std::vector<double> changes;  // sup change per iteration
    std::vector<std::pair<int, std::vector<double>>> trace;
    std::vector<bool> touching;  // stopping set on the grid
    std::vector<OracleTrigger> triggers;

    /// Oracle value v = g + phi Phi at node i.
    double value(std::size_t i) const { return g[i] + phi[i] * Phi[i]; }
};

class ValueIteration {
public:
    ValueIteration(const TransformContext& ctx, int nodes) : ctx_(ctx) {
        const double lo = ctx.x_min(), hi = ctx.x_max();
        const auto n = static_cast<std::size_t>(nodes);
        // Uniform in x; the absorbing boundary itself is the pin.
        if (ctx.absorbing()) {
            for (std::size_t i = 0; i < n; ++i) grid_.x.push_back(lo + (hi - lo) * static_cast<double>(i + 1) / n);
        } else {
            grid_.x = linspace(lo, hi, n);
        }
        grid_.y.resize(n);
        grid_.phi.resize(n);
        grid_.g.resize(n);
        parallel_for(n, [&](std::size_t i) {
            const auto v = ctx.pair(grid_.x[i]);
            grid_.y[i] = v.F();
            grid_.phi[i] = v.phi;
            grid_.g[i] = ctx.g(grid_.x[i]);
        });
        for (std::size_t i = 1; i < n; ++i)
            if (!(grid_.y[i] > grid_.y[i - 1])) throw SolverError("oracle grid is not increasing in F");
        // Lower-triangular Kbar(x_i, x_j), j < i.
        offsets_.resize(n);
        std::size_t total = 0;
        for (std::size_t i = 0; i < n; ++i) {
            offsets_[i] = total;
            total += i;
        }
        kbar_.resize(total);
        parallel_for(n, [&](std::size_t i) {
            for (std::size_t j = 0; j < i; ++j)
                kbar_[offsets_[i] + j] = ctx.K(grid_.x[i], grid_.x[j]) - grid_.g[i] + grid_.g[j];
        });
        grid_.floor = ctx.absorbing() ? ctx.D : 0.0;
        grid_.Phi.assign(n, grid_.floor);
    }

    /// M Phi in Phi units, with the maximizing target index per node.
    std::vector<double> intervention(const std::vector<double>& Phi, std::vector<std::size_t>* argmax = nullptr) const {
        const std::size_t n = grid_.x.size();
        std::vector<double> out(n, -inf_v);
        if (argmax) argmax->assign(n, 0);
        parallel_for(n, [&](std::size_t i) {
            const double* row = kbar_.data() + offsets_[i];
            double best = -inf_v;
            std::size_t arg = 0;
            for (std::size_t j = 0; j < i; ++j) {
                const double v = row[j] + grid_.phi[j] * Phi[j];
                if (v > best) {
                    best = v;
                    arg = j;
                }
            }
            out[i] = best / grid_.phi[i];
            if (argmax) (*argmax)[i] = arg;
        });
        return out;
    }

    /// One application of L: envelope of max(M Phi, floor) with the pin.
    std::vector<double> step(const std::vector<double>& Phi, std::vector<double>* reward = nullptr,
                             std::vector<std::size_t>* argmax = nullptr) const {
        const auto M = intervention(Phi, argmax);
        std::vector<Point> pts(M.size());
        for (std::size_t i = 0; i < M.size(); ++i) pts[i] = {grid_.y[i], std::max(M[i], grid_.floor)};
        if (reward) {
            reward->resize(M.size());
            for (std::size_t i = 0; i < M.size(); ++i) (*reward)[i] = pts[i].v;
        }
        std::optional<Point> pin;
        if (ctx_.F_lo < grid_.y.front()) pin = Point{ctx_.F_lo, ctx_.D};
        return concave_envelope(pts, pin);
    }

    OracleGrid run(const OracleOptions& opt) {
        auto& G = grid_;
        std::vector<std::size_t> arg;
        for (int n = 1; n <= opt.n_max; ++n) {
            auto next = step(G.Phi, &G.reward, &arg);
            double change = 0.0;
            for (std::size_t i = 0; i < next.size(); ++i) change = std::max(change, std::fabs(next[i] - G.Phi[i]));
            G.Phi = std::move(next);
            G.iterations = n;
            G.changes.push_back(change);
            G.last_change = change;
            if (opt.on_iterate) opt.on_iterate(n, G.Phi);
            if (std::find(opt.log_iterations.begin(), opt.log_iterations.end(), n) != opt.log_iterations.end())
                G.trace.emplace_back(n, G.Phi);
            if (change <= opt.tol) {
                G.converged = true;
                break;
            }
        }
        if (G.trace.empty() || G.trace.back().first != G.iterations) G.trace.emplace_back(G.iterations, G.Phi);

        // Stopping set: nodes where the envelope meets the obstacle above the
        // floor. A node also counts when the gap is below half the obstacle's
        // own chord deviation there, which catches isolated touch points that
        // fall between nodes.
        const std::size_t n = G.x.size();
        G.touching.assign(n, false);
        for (std::size_t i = 0; i < n; ++i) {
            if (!(G.reward[i] > G.floor)) continue;
            double slack = 1e-12 * std::max(1.0, std::fabs(G.Phi[i]));
            if (i > 0 && i + 1 < n) {
                const double w = (G.y[i] - G.y[i - 1]) / (G.y[i + 1] - G.y[i - 1]);
                const double chord = (1.0 - w) * G.reward[i - 1] + w * G.reward[i + 1];
                slack = std::max(slack, 0.5 * std::fabs(G.reward[i] - chord));
            }
            G.touching[i] = G.Phi[i] - G.reward[i] <= slack;
        }
        // Triggers: first node of each stopping run whose target lies in the
        // continuation region. Runs that jump into another stopping run are
        // chained interventions, not new bands.
        for (std::size_t i = 0; i < n; ++i) {
            if (!G.touching[i] || (i > 0 && G.touching[i - 1])) continue;
            if (G.touching[arg[i]]) continue;
            G.triggers.push_back({i, G.x[i], G.x[arg[i]]});
        }
        return G;
    }

    const OracleGrid& grid() const { return grid_; }

private:
    const TransformContext& ctx_;
    OracleGrid grid_;
    std::vector<std::size_t> offsets_;
    std::vector<double> kbar_;
};

/// Runs value iteration to convergence (sup change <= tol) or n_max.
inline OracleGrid value_iteration(const TransformContext& ctx, const OracleOptions& opt = {}) {
    ValueIteration vi(ctx, opt.nodes);
    return vi.run(opt);
}

} // namespace impulse
