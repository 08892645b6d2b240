#include "mfglab/forward.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace mfg {

namespace {

SpaceField product(const SpaceField& a, const SpaceField& b, bool dealias) {
    return dealias ? multiply_dealias(a, b) : multiply(a, b);
}

}  // namespace

SpaceTimeField fpk_source(const SpaceTimeField& m, const SpaceTimeField& u, bool dealias) {
    const TorusGrid& g = m.grid;
    SpaceTimeField src(g);
    for (int k = 0; k <= g.Nt; ++k) {
        auto gu = gradient(u.at(k));
        std::vector<SpaceField> flux(gu.size());
        for (size_t j = 0; j < gu.size(); ++j) flux[j] = product(m.at(k), gu[j], dealias);
        src.at(k) = divergence(flux);
    }
    return src;
}

SpaceTimeField hjb_source(const std::vector<SpaceTimeField>& m, const SpaceTimeField& u,
                          const BoundCosts& running, int i, bool dealias) {
    const TorusGrid& g = u.grid;
    SpaceTimeField src(g);
    std::vector<SpaceField> z(m.size());
    for (int k = 0; k <= g.Nt; ++k) {
        auto gu = gradient(u.at(k));
        SpaceField level(g);
        for (size_t j = 0; j < gu.size(); ++j)
            axpy(cplx(-0.5, 0.0), product(gu[j], gu[j], dealias), level);
        for (size_t p = 0; p < m.size(); ++p) z[p] = m[p].at(k);
        axpy(cplx(1.0, 0.0), running.eval(i, z), level);
        src.at(k) = std::move(level);
    }
    return src;
}

SpaceField hjb_terminal(const std::vector<SpaceTimeField>& m, const BoundCosts& terminal,
                        int i) {
    std::vector<SpaceField> z(m.size());
    for (size_t p = 0; p < m.size(); ++p) z[p] = m[p].at(m[p].grid.Nt);
    return terminal.eval(i, z);
}

MfgSolution solve_mfg(const TorusGrid& g, const CostSeries& running,
                      const CostSeries& terminal, const std::vector<SpaceField>& m0,
                      const SolverParams& params) {
    g.validate();
    const int n = running.n();
    if (terminal.n() != n)
        throw ConfigError("solve_mfg: running and terminal costs disagree on populations");
    if (static_cast<int>(m0.size()) != n)
        throw ConfigError("solve_mfg: need one initial density per population");
    for (const auto& f : m0)
        if (f.grid != g) throw ConfigError("solve_mfg: initial density on the wrong grid");
    if (params.tol <= 0.0 || params.max_iters < 1 || params.theta <= 0.0 ||
        params.theta > 1.0)
        throw ConfigError("solve_mfg: invalid solver parameters");

    MfgSolution sol;
    sol.grid = g;
    for (int i = 0; i < n; ++i) {
        double a = max_abs(m0[static_cast<size_t>(i)]);
        if (a > params.delta) {
            std::ostringstream msg;
            msg << "initial density of population " << (i + 1) << " has sup norm " << a
                << " above the smallness scale " << params.delta;
            sol.warnings.push_back(msg.str());
        }
    }

    BoundCosts Fb(running, g), Gb(terminal, g);
    const SpaceTimeField zero_src(g);
    sol.u.assign(static_cast<size_t>(n), SpaceTimeField(g));
    sol.m.resize(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i)
        sol.m[static_cast<size_t>(i)] = solve_linear_forward(zero_src, m0[static_cast<size_t>(i)]);

    double theta = params.theta;
    bool relaxed = false;
    for (int iter = 1; iter <= params.max_iters; ++iter) {
        std::vector<SpaceTimeField> new_m(static_cast<size_t>(n)), new_u(static_cast<size_t>(n));
        for (int i = 0; i < n; ++i)
            new_m[static_cast<size_t>(i)] = solve_linear_forward(
                fpk_source(sol.m[static_cast<size_t>(i)], sol.u[static_cast<size_t>(i)],
                           params.dealias),
                m0[static_cast<size_t>(i)]);
        for (int i = 0; i < n; ++i)
            new_u[static_cast<size_t>(i)] = solve_linear_backward(
                hjb_source(new_m, sol.u[static_cast<size_t>(i)], Fb, i, params.dealias),
                hjb_terminal(new_m, Gb, i));

        double update = 0.0;
        for (int i = 0; i < n; ++i)
            for (int k = 0; k <= g.Nt; ++k) {
                update = std::max(update, max_abs(sub(new_u[static_cast<size_t>(i)].at(k),
                                                      sol.u[static_cast<size_t>(i)].at(k))));
                update = std::max(update, max_abs(sub(new_m[static_cast<size_t>(i)].at(k),
                                                      sol.m[static_cast<size_t>(i)].at(k))));
            }
        sol.update_history.push_back(update);
        sol.iterations = iter;
        sol.final_update = update;

        const cplx tw(theta, 0.0), keep(1.0 - theta, 0.0);
        for (int i = 0; i < n; ++i)
            for (int k = 0; k <= g.Nt; ++k) {
                SpaceField& uo = sol.u[static_cast<size_t>(i)].at(k);
                scale(uo, keep);
                axpy(tw, new_u[static_cast<size_t>(i)].at(k), uo);
                SpaceField& mo = sol.m[static_cast<size_t>(i)].at(k);
                scale(mo, keep);
                axpy(tw, new_m[static_cast<size_t>(i)].at(k), mo);
            }

        if (update <= params.tol) return sol;

        size_t h = sol.update_history.size();
        if (!relaxed && h >= 3 && sol.update_history[h - 1] > sol.update_history[h - 2] &&
            sol.update_history[h - 2] > sol.update_history[h - 3]) {
            theta = 0.5 * params.theta;
            relaxed = true;
            sol.warnings.push_back("updates grew twice in a row; relaxation reduced to half");
        }
    }

    std::ostringstream msg;
    msg << "solve_mfg: no convergence after " << params.max_iters
        << " sweeps (tol " << params.tol << "); update history:";
    size_t from = sol.update_history.size() > 8 ? sol.update_history.size() - 8 : 0;
    for (size_t k = from; k < sol.update_history.size(); ++k)
        msg << " " << sol.update_history[k];
    throw ConvergenceError(msg.str());
}

std::vector<SpaceField> measure_full(const MfgSolution& sol) {
    std::vector<SpaceField> out;
    out.reserve(sol.u.size());
    for (const auto& u : sol.u) out.push_back(u.at(0));
    return out;
}

SpaceField measure_single(const MfgSolution& sol) {
    if (sol.u.empty()) throw MfgError("measure_single: empty solution");
    return sol.u[0].at(0);
}

}  // namespace mfg
