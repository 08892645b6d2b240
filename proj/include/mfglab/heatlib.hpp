#pragma once

#include "mfglab/grid.hpp"

namespace mfg {

// Heat-mode time factor psi_lambda(t) = exp(4 pi^2 lambda t), so the heat flow
// of exp(2 pi i xi.x) is psi_{-|xi|^2}(t) exp(2 pi i xi.x).
double psi(double lambda, double t);

// Initial datum phi_xi(x) + offset placed in one population slot of a probe.
struct ModeProbe {
    IVec3 xi{0, 0, 0};
    double offset = 0.0;
    int population = 0;  // 0-based
    int slot = 0;        // which linearization direction carries it, 0-based

    SpaceField realize(const TorusGrid& g) const;
};

// ---- closed-form response kernels ------------------------------------------
// Throughout, xi_sq = |xi|^2 and b = 4 pi^2 xi_sq.

// H1(t) = (1/2) (-exp(-b t) + exp(-2 b T) exp(b t)). Vanishes at t = T.
// -(1/b) H1(t) phi_xi solves the backward problem with source
// psi_{-|xi|^2} phi_xi and zero terminal value.
double kernel_H1(double xi_sq, double T, double t);

// The unique solution of c'(t) + b c(t) = H1(t), c(0) = 0:
//   H2(t) = (1/2) (-t exp(-b t) + exp(-2 b T) (exp(b t) - exp(-b t)) / (2 b)).
double kernel_H2(double xi_sq, double T, double t);

// Alternative closed form that satisfies the same first-order ODE but starts
// from the nonzero value (1/2)(T - (1 - exp(-2 b T))/(2 b)) at t = 0 instead
// of 0. Kept as a cross-reference only; nothing downstream uses it.
double kernel_H2_alt(double xi_sq, double T, double t);

// I2(a, T) = integral_0^T H2(t) psi_{-|xi|^2}(t) dt with a = 8 pi^2 |xi|^2:
//   (exp(-2 a T) + 2 a T exp(-a T) - 1) / (2 a^2),
// evaluated by series for small a T. Strictly negative for a, T > 0,
// asymptotically -a T^3 / 6 as a -> 0.
double kernel_I2(double a, double T);

// J(a, T) = integral_0^T psi_{-|xi|^2}(t)^2 dt = (1 - exp(-a T)) / a, a = 8 pi^2 |xi|^2.
double kernel_J(double a, double T);

// Reference value paired with kernel_H2_alt:
//   exp(-a T) (a T + exp(a T) (a T - 2) + 2) / a^2.
// Positive, and equal to exactly twice the integral over [0, T] of
//   ((T - t) e^{-a t} + (e^{-a T} - e^{-a t}) / a) / 2.
// Kept only as a shape reference; nothing downstream uses it.
double I2_alt_reference(double a, double T);

// ---- reconstruction weights -------------------------------------------------
// Per-mode weights of the boundary-trace identity: a running-cost source at
// combined frequency weight sigma = |xi_1|^2 + |xi_2|^2 contributes
// weight_c(sigma, T) and a terminal-cost term contributes weight_E(sigma, T).

// (1 - exp(-4 pi^2 sigma T)) / (4 pi^2 sigma), continuous in sigma with value T at 0.
double weight_c(double sigma, double T);
// exp(-4 pi^2 sigma T)
double weight_E(double sigma, double T);

// ---- duality pairing --------------------------------------------------------

// Largest one-step defect of w as a discrete heat flow:
//   max_k sup |w(., k+1) - e^{dt Laplacian} w(., k)| / dt.
double heat_flow_residual(const SpaceTimeField& w);

// Residual of the integration-by-parts identity for a backward solution u of
//   -du/dt - Laplacian u = source, u(., T) = terminal, u(., 0) = initial_trace
// against a forward heat flow w:
//   integral_Q source w dx dt  =  integral initial_trace w(., 0) dx
//                               - integral terminal w(., T) dx.
// Returns LHS - RHS. Throws if w fails the heat-flow check at tolerance
// heat_check_tol (scaled by sup|w|).
cplx duality_pairing(const SpaceTimeField& source, const SpaceField& terminal,
                     const SpaceField& initial_trace, const SpaceTimeField& w,
                     double heat_check_tol = 1e-8);

}  // namespace mfg
