#pragma once

#include <map>
#include <vector>

#include "mfglab/costs.hpp"
#include "mfglab/grid.hpp"
#include "mfglab/heatlib.hpp"

namespace mfg {

// ---- linear heat solvers ----------------------------------------------------
// One-step exponential-trapezoid rule, per Fourier mode with q = exp(-4 pi^2
// |xi|^2 dt):
//   backward -u' - Lap u = f, u(T) given:   u_k = q u_{k+1} + (dt/2)(f_k + q f_{k+1})
//   forward   m' - Lap m = f, m(0) given:   m_{k+1} = q m_k + (dt/2)(q f_k + f_{k+1})
// Both telescope to the exact-propagator composite-trapezoid Duhamel formula,
// which makes the duality pairing of heatlib hold to machine precision.

SpaceTimeField solve_linear_backward(const SpaceTimeField& source, const SpaceField& terminal);
SpaceTimeField solve_linear_forward(const SpaceTimeField& source, const SpaceField& initial);

// Scalar single-mode counterparts (|xi|^2 = xi_sq), same stepping rule.
std::vector<cplx> backward_mode(const TorusGrid& g, double xi_sq,
                                const std::vector<cplx>& source, cplx terminal);
std::vector<cplx> forward_mode(const TorusGrid& g, double xi_sq,
                               const std::vector<cplx>& source, cplx initial);

// ---- discrete weights -------------------------------------------------------
// Quadrature weights evaluated on the grid's time levels so that data
// relations built from the solvers above close exactly in the discrete world.

// Trapezoid of exp(-4 pi^2 sigma t_k); discrete version of weight_c.
double weight_c_h(const TorusGrid& g, double sigma);

// Discrete chain kernel: run h1 = backward solve of psi_{-xi_sq}, h2 =
// forward solve of h1, and return -4 pi^2 xi_sq * trapz(psi * h2). Converges
// to kernel_I2(8 pi^2 xi_sq, T); strictly negative.
double kernel_I2_h(const TorusGrid& g, double xi_sq);

// ---- residual checkers ------------------------------------------------------

// Largest one-step defect of the stepping rules above, scaled by 1/dt.
// Machine-zero when (field, source, data) came from the matching solver.
double scheme_residual_backward(const SpaceTimeField& u, const SpaceTimeField& source,
                                const SpaceField& terminal);
double scheme_residual_forward(const SpaceTimeField& m, const SpaceTimeField& source,
                               const SpaceField& initial);

// Interior PDE residual with a fourth-order central time stencil and the
// spectral Laplacian; suited to closed-form solutions sampled on the grid.
//   backward: sup |-du/dt - Lap u - source| over levels 2..Nt-2
//   forward:  sup | dm/dt - Lap m - source|
double pde_residual_backward(const SpaceTimeField& u, const SpaceTimeField& source);
double pde_residual_forward(const SpaceTimeField& m, const SpaceTimeField& source);

// ---- linearization cascade --------------------------------------------------

// All partitions of the set bits of mask into disjoint nonempty blocks.
std::vector<std::vector<int>> set_partitions(int mask);

// Mixed derivatives of the coupled system at the zero solution, in the
// directions of up to four initial perturbations ("slots"). Each slot places
// its datum in one population. Level A (a bitmask of slots) solves
//   m_i^(A):  m' - Lap m = sum_{0<B<A} div(m_i^(B) grad u_i^(A\B)),
//             m(0) = slot datum if A is the singleton {l} and slot l sits in
//             population i, else 0
//   u_i^(A): -u' - Lap u = -1/2 sum_{0<B<A} grad u_i^(B) . grad u_i^(A\B)
//                          + sum_{partitions p of A} sum_{assignments k}
//                            F_i^(sum_j e_k_j) prod_j m_{k_j}^(p_j)
//            u(T) = same partition sum with G at t = T.
// For running/terminal costs that are polynomials of order >= |A| this is the
// exact derivative of the discrete fixed point the nonlinear solver targets.
struct CascadeLevel {
    std::vector<SpaceTimeField> m;  // per population
    std::vector<SpaceTimeField> u;
};

struct CascadeSolution {
    int n = 0;
    int s = 0;  // number of slots
    std::map<int, CascadeLevel> levels;  // keyed by nonzero slot bitmask

    const CascadeLevel& at(int mask) const;
    int full_mask() const { return (1 << s) - 1; }
};

CascadeSolution solve_cascade(const TorusGrid& g, const CostSeries& running,
                              const CostSeries& terminal,
                              const std::vector<ModeProbe>& slots);

}  // namespace mfg
