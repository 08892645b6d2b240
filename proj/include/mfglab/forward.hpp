#pragma once

#include <string>
#include <vector>

#include "mfglab/costs.hpp"
#include "mfglab/grid.hpp"
#include "mfglab/linearized.hpp"

namespace mfg {

// Controls for the coupled fixed-point solver.
struct SolverParams {
    double tol = 1e-10;     // sup-norm update threshold
    int max_iters = 200;
    double theta = 1.0;     // relaxation weight on the new iterate
    double delta = 0.1;     // smallness scale; larger initial data draw a warning
    bool dealias = false;   // 3/2-rule padding for the quadratic products
};

struct MfgSolution {
    TorusGrid grid;
    std::vector<SpaceTimeField> u;  // per population
    std::vector<SpaceTimeField> m;
    int iterations = 0;
    double final_update = 0.0;
    std::vector<double> update_history;
    std::vector<std::string> warnings;
};

// Coupled system on [0, T]:
//   -du_i/dt - Lap u_i + |grad u_i|^2 / 2 = F_i(x, m),   u_i(T) = G_i(x, m(T))
//    dm_i/dt - Lap m_i - div(m_i grad u_i) = 0,          m_i(0) = m0_i
// solved by Picard iteration with frozen sources: each sweep advances the
// densities with the drift of the previous value functions, then the value
// functions with the freshly advanced densities. Starts from u = 0, m = heat
// flow. Oscillating updates switch the relaxation to half weight once.
// Throws ConvergenceError (with the update history in the message) when
// max_iters sweeps do not reach tol.
MfgSolution solve_mfg(const TorusGrid& g, const CostSeries& running,
                      const CostSeries& terminal, const std::vector<SpaceField>& m0,
                      const SolverParams& params = {});

// Sources of the two equations evaluated on candidate fields; shared between
// the solver, the invariant checks, and the tests.
SpaceTimeField fpk_source(const SpaceTimeField& m, const SpaceTimeField& u, bool dealias);
SpaceTimeField hjb_source(const std::vector<SpaceTimeField>& m, const SpaceTimeField& u,
                          const BoundCosts& running, int i, bool dealias);
SpaceField hjb_terminal(const std::vector<SpaceTimeField>& m, const BoundCosts& terminal,
                        int i);

// Boundary-in-time measurements: the value functions at t = 0.
std::vector<SpaceField> measure_full(const MfgSolution& sol);
SpaceField measure_single(const MfgSolution& sol);  // first population only

}  // namespace mfg
