#include "mfglab/linearized.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace mfg {

// ---- linear solvers ---------------------------------------------------------

SpaceTimeField solve_linear_backward(const SpaceTimeField& source, const SpaceField& terminal) {
    const TorusGrid& g = source.grid;
    if (terminal.grid != g) throw MfgError("solve_linear_backward: mismatched grids");
    SpaceTimeField u(g);
    u.at(g.Nt) = terminal;
    const cplx h(0.5 * g.dt(), 0.0);
    for (int k = g.Nt - 1; k >= 0; --k) {
        SpaceField carry = u.at(k + 1);
        axpy(h, source.at(k + 1), carry);
        carry = heat_propagate(carry, g.dt());
        axpy(h, source.at(k), carry);
        u.at(k) = std::move(carry);
    }
    return u;
}

SpaceTimeField solve_linear_forward(const SpaceTimeField& source, const SpaceField& initial) {
    const TorusGrid& g = source.grid;
    if (initial.grid != g) throw MfgError("solve_linear_forward: mismatched grids");
    SpaceTimeField m(g);
    m.at(0) = initial;
    const cplx h(0.5 * g.dt(), 0.0);
    for (int k = 0; k < g.Nt; ++k) {
        SpaceField carry = m.at(k);
        axpy(h, source.at(k), carry);
        carry = heat_propagate(carry, g.dt());
        axpy(h, source.at(k + 1), carry);
        m.at(k + 1) = std::move(carry);
    }
    return m;
}

std::vector<cplx> backward_mode(const TorusGrid& g, double xi_sq,
                                const std::vector<cplx>& source, cplx terminal) {
    if (static_cast<int>(source.size()) != g.Nt + 1)
        throw MfgError("backward_mode: source needs Nt+1 levels");
    const double q = std::exp(-4.0 * kPi * kPi * xi_sq * g.dt());
    const double h = 0.5 * g.dt();
    std::vector<cplx> u(source.size());
    u[static_cast<size_t>(g.Nt)] = terminal;
    for (int k = g.Nt - 1; k >= 0; --k)
        u[static_cast<size_t>(k)] =
            q * (u[static_cast<size_t>(k) + 1] + h * source[static_cast<size_t>(k) + 1]) +
            h * source[static_cast<size_t>(k)];
    return u;
}

std::vector<cplx> forward_mode(const TorusGrid& g, double xi_sq,
                               const std::vector<cplx>& source, cplx initial) {
    if (static_cast<int>(source.size()) != g.Nt + 1)
        throw MfgError("forward_mode: source needs Nt+1 levels");
    const double q = std::exp(-4.0 * kPi * kPi * xi_sq * g.dt());
    const double h = 0.5 * g.dt();
    std::vector<cplx> m(source.size());
    m[0] = initial;
    for (int k = 0; k < g.Nt; ++k)
        m[static_cast<size_t>(k) + 1] =
            q * (m[static_cast<size_t>(k)] + h * source[static_cast<size_t>(k)]) +
            h * source[static_cast<size_t>(k) + 1];
    return m;
}

// ---- discrete weights -------------------------------------------------------

double weight_c_h(const TorusGrid& g, double sigma) {
    if (sigma < 0.0) throw std::invalid_argument("weight_c_h: need sigma >= 0");
    std::vector<double> samples(static_cast<size_t>(g.Nt) + 1);
    for (int k = 0; k <= g.Nt; ++k)
        samples[static_cast<size_t>(k)] = std::exp(-4.0 * kPi * kPi * sigma * g.tk(k));
    return time_trapz(samples, g.dt());
}

double kernel_I2_h(const TorusGrid& g, double xi_sq) {
    if (xi_sq <= 0.0) throw std::invalid_argument("kernel_I2_h: need |xi|^2 > 0");
    std::vector<cplx> psi_k(static_cast<size_t>(g.Nt) + 1);
    for (int k = 0; k <= g.Nt; ++k)
        psi_k[static_cast<size_t>(k)] = psi(-xi_sq, g.tk(k));
    std::vector<cplx> h1 = backward_mode(g, xi_sq, psi_k, cplx{0.0, 0.0});
    std::vector<cplx> h2 = forward_mode(g, xi_sq, h1, cplx{0.0, 0.0});
    std::vector<cplx> prod(psi_k.size());
    for (size_t k = 0; k < prod.size(); ++k) prod[k] = psi_k[k] * h2[k];
    return -4.0 * kPi * kPi * xi_sq * time_trapz(prod, g.dt()).real();
}

// ---- residual checkers ------------------------------------------------------

double scheme_residual_backward(const SpaceTimeField& u, const SpaceTimeField& source,
                                const SpaceField& terminal) {
    const TorusGrid& g = u.grid;
    const cplx h(0.5 * g.dt(), 0.0);
    double worst = max_abs(sub(u.at(g.Nt), terminal)) / g.dt();
    for (int k = g.Nt - 1; k >= 0; --k) {
        SpaceField pred = u.at(k + 1);
        axpy(h, source.at(k + 1), pred);
        pred = heat_propagate(pred, g.dt());
        axpy(h, source.at(k), pred);
        worst = std::max(worst, max_abs(sub(u.at(k), pred)) / g.dt());
    }
    return worst;
}

double scheme_residual_forward(const SpaceTimeField& m, const SpaceTimeField& source,
                               const SpaceField& initial) {
    const TorusGrid& g = m.grid;
    const cplx h(0.5 * g.dt(), 0.0);
    double worst = max_abs(sub(m.at(0), initial)) / g.dt();
    for (int k = 0; k < g.Nt; ++k) {
        SpaceField pred = m.at(k);
        axpy(h, source.at(k), pred);
        pred = heat_propagate(pred, g.dt());
        axpy(h, source.at(k + 1), pred);
        worst = std::max(worst, max_abs(sub(m.at(k + 1), pred)) / g.dt());
    }
    return worst;
}

namespace {

double pde_residual(const SpaceTimeField& f, const SpaceTimeField& source, double time_sign) {
    const TorusGrid& g = f.grid;
    if (g.Nt < 4) throw MfgError("pde_residual: needs Nt >= 4");
    double worst = 0.0;
    for (int k = 2; k <= g.Nt - 2; ++k) {
        SpaceField dfdt(g);
        axpy(cplx(-1.0, 0.0), f.at(k + 2), dfdt);
        axpy(cplx(8.0, 0.0), f.at(k + 1), dfdt);
        axpy(cplx(-8.0, 0.0), f.at(k - 1), dfdt);
        axpy(cplx(1.0, 0.0), f.at(k - 2), dfdt);
        scale(dfdt, cplx(time_sign / (12.0 * g.dt()), 0.0));
        SpaceField res = laplacian(f.at(k));
        scale(res, cplx(-1.0, 0.0));
        axpy(cplx(1.0, 0.0), dfdt, res);
        axpy(cplx(-1.0, 0.0), source.at(k), res);
        worst = std::max(worst, max_abs(res));
    }
    return worst;
}

}  // namespace

double pde_residual_backward(const SpaceTimeField& u, const SpaceTimeField& source) {
    return pde_residual(u, source, -1.0);
}

double pde_residual_forward(const SpaceTimeField& m, const SpaceTimeField& source) {
    return pde_residual(m, source, 1.0);
}

// ---- cascade ----------------------------------------------------------------

std::vector<std::vector<int>> set_partitions(int mask) {
    if (mask == 0) return {{}};
    int low = mask & -mask;
    std::vector<std::vector<int>> out;
    for (const auto& part : set_partitions(mask ^ low)) {
        std::vector<int> own = part;
        own.push_back(low);
        out.push_back(std::move(own));
        for (size_t j = 0; j < part.size(); ++j) {
            std::vector<int> merged = part;
            merged[j] |= low;
            out.push_back(std::move(merged));
        }
    }
    return out;
}

const CascadeLevel& CascadeSolution::at(int mask) const {
    auto it = levels.find(mask);
    if (it == levels.end()) throw MfgError("cascade: level not computed for this mask");
    return it->second;
}

namespace {

// Pointwise dot of gradients, accumulated into out with weight alpha.
void accumulate_grad_dot(cplx alpha, const SpaceField& a, const SpaceField& b, SpaceField& out) {
    auto ga = gradient(a);
    auto gb = gradient(b);
    for (size_t j = 0; j < ga.size(); ++j) axpy(alpha, multiply(ga[j], gb[j]), out);
}

}  // namespace

CascadeSolution solve_cascade(const TorusGrid& g, const CostSeries& running,
                              const CostSeries& terminal,
                              const std::vector<ModeProbe>& slots) {
    const int s = static_cast<int>(slots.size());
    if (s < 1 || s > 4) throw ConfigError("cascade: need 1..4 slots");
    const int n = running.n();
    if (terminal.n() != n)
        throw ConfigError("cascade: running and terminal costs disagree on populations");
    for (const auto& p : slots)
        if (p.population < 0 || p.population >= n)
            throw ConfigError("cascade: slot population out of range");

    BoundCosts F(running, g), G(terminal, g);
    CascadeSolution sol;
    sol.n = n;
    sol.s = s;

    std::vector<int> masks;
    for (int A = 1; A < (1 << s); ++A) masks.push_back(A);
    std::sort(masks.begin(), masks.end(), [](int a, int b) {
        int pa = __builtin_popcount(static_cast<unsigned>(a));
        int pb = __builtin_popcount(static_cast<unsigned>(b));
        return pa != pb ? pa < pb : a < b;
    });

    for (int A : masks) {
        CascadeLevel lvl;
        lvl.m.reserve(static_cast<size_t>(n));
        lvl.u.reserve(static_cast<size_t>(n));

        for (int i = 0; i < n; ++i) {
            SpaceTimeField src(g);
            for (int B = (A - 1) & A; B != 0; B = (B - 1) & A) {
                const SpaceTimeField& mB = sol.at(B).m[static_cast<size_t>(i)];
                const SpaceTimeField& uC = sol.at(A ^ B).u[static_cast<size_t>(i)];
                for (int k = 0; k <= g.Nt; ++k) {
                    auto gu = gradient(uC.at(k));
                    std::vector<SpaceField> flux(gu.size());
                    for (size_t j = 0; j < gu.size(); ++j)
                        flux[j] = multiply(mB.at(k), gu[j]);
                    axpy(cplx(1.0, 0.0), divergence(flux), src.at(k));
                }
            }
            SpaceField init(g);
            if (__builtin_popcount(static_cast<unsigned>(A)) == 1) {
                int l = __builtin_ctz(static_cast<unsigned>(A));
                if (slots[static_cast<size_t>(l)].population == i)
                    init = slots[static_cast<size_t>(l)].realize(g);
            }
            lvl.m.push_back(solve_linear_forward(src, init));
        }

        // m of the current level, needed by the single-block partition below.
        auto m_of = [&](int mask, int pop) -> const SpaceTimeField& {
            return mask == A ? lvl.m[static_cast<size_t>(pop)]
                             : sol.at(mask).m[static_cast<size_t>(pop)];
        };

        const auto partitions = set_partitions(A);
        for (int i = 0; i < n; ++i) {
            SpaceTimeField src(g);
            for (int B = (A - 1) & A; B != 0; B = (B - 1) & A) {
                const SpaceTimeField& uB = sol.at(B).u[static_cast<size_t>(i)];
                const SpaceTimeField& uC = sol.at(A ^ B).u[static_cast<size_t>(i)];
                for (int k = 0; k <= g.Nt; ++k)
                    accumulate_grad_dot(cplx(-0.5, 0.0), uB.at(k), uC.at(k), src.at(k));
            }

            SpaceField term(g);
            for (const auto& blocks : partitions) {
                const int r = static_cast<int>(blocks.size());
                std::vector<int> assign(static_cast<size_t>(r), 0);
                while (true) {
                    MultiIndex beta = beta_from_tuple(n, assign);
                    if (const SpaceField* fc = F.field(i, beta)) {
                        for (int k = 0; k <= g.Nt; ++k) {
                            SpaceField prod = *fc;
                            for (int j = 0; j < r; ++j)
                                prod = multiply(prod, m_of(blocks[static_cast<size_t>(j)],
                                                           assign[static_cast<size_t>(j)])
                                                          .at(k));
                            axpy(cplx(1.0, 0.0), prod, src.at(k));
                        }
                    }
                    if (const SpaceField* gc = G.field(i, beta)) {
                        SpaceField prod = *gc;
                        for (int j = 0; j < r; ++j)
                            prod = multiply(prod, m_of(blocks[static_cast<size_t>(j)],
                                                       assign[static_cast<size_t>(j)])
                                                      .at(g.Nt));
                        axpy(cplx(1.0, 0.0), prod, term);
                    }
                    int j = 0;
                    while (j < r && ++assign[static_cast<size_t>(j)] == n) {
                        assign[static_cast<size_t>(j)] = 0;
                        ++j;
                    }
                    if (j == r) break;
                }
            }
            lvl.u.push_back(solve_linear_backward(src, term));
        }
        sol.levels.emplace(A, std::move(lvl));
    }
    return sol;
}

}  // namespace mfg
