#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "mfglab/costs.hpp"
#include "mfglab/forward.hpp"
#include "mfglab/grid.hpp"
#include "mfglab/linearized.hpp"
#include "mfglab/probes.hpp"

namespace mfg {

// ---- frequency decompositions ----------------------------------------------

// Split of a target frequency xi into two nonzero parts, twice, with distinct
// frequency weights sigma = |xi_1|^2 + |xi_2|^2 < sigma' = |xi_1'|^2 + |xi_2'|^2.
// Probing with the xi_2 part and pairing the trace against the xi_1 part
// yields one linear equation per split in the running/terminal amplitudes at
// xi; the two splits together give an invertible 2x2 system.
struct Decomposition {
    IVec3 xi{0, 0, 0};
    IVec3 xi1{0, 0, 0}, xi2{0, 0, 0};
    IVec3 xi1p{0, 0, 0}, xi2p{0, 0, 0};
    double sigma = 0.0, sigma_p = 0.0;
};

// Deterministic rule: K = |xi|_inf + 1, xi2 = K e1, xi1 = xi - xi2, and the
// primed pair with K + 1. All four parts are nonzero and sigma < sigma'.
Decomposition pick_decomposition(const IVec3& xi, int d);

// ---- offset elimination ------------------------------------------------------

// Tensor-Vandermonde solve: datum rows are indexed by one offset choice per
// slot (odometer order, slot 0 fastest) and model
//   row = sum_{powers p} coef_p * prod_l offset_l^{p_l},  p_l < #offsets_l.
// Returns the coefficients in odometer order, so coef[0] is the part free of
// every offset. The standard design {1,2}^s has determinant +-1. Throws
// ConfigError when a slot repeats an offset (singular design).
std::vector<cplx> offset_elimination(const std::vector<std::vector<double>>& slot_offsets,
                                     const std::vector<cplx>& rows);

// Closed-form solve of the cyclic system sum_{l != c} X_l = y_c:
//   X_c = sum(y) / (s - 1) - y_c, for s = y.size() >= 2.
std::vector<cplx> cyclic_solve(const std::vector<cplx>& y);

// ---- measurement access ------------------------------------------------------

// Black-box access to the boundary measurements of a planted problem. The
// engines only call these two entry points, so swapping the exact linearized
// data for divided differences of the nonlinear solver is transparent.
class TraceSource {
public:
    TraceSource(TorusGrid g, CostSeries running, CostSeries terminal);
    virtual ~TraceSource() = default;

    const TorusGrid& grid() const { return grid_; }
    int populations() const { return running_.n(); }

    // Mixed derivative of u(., 0) in the slot directions, one trace per
    // population. Results are cached on the slot description.
    const std::vector<SpaceField>& derivative_traces(const std::vector<ModeProbe>& slots);

    // Plain measurement u_1(., 0) of the nonlinear system for m0 == c.
    SpaceField constant_measurement(const std::vector<cplx>& c);

    // Number of underlying solves (cascade or nonlinear) performed so far.
    long measurement_count() const { return count_; }

protected:
    virtual std::vector<SpaceField> compute_traces(const std::vector<ModeProbe>& slots) = 0;

    TorusGrid grid_;
    CostSeries running_, terminal_;
    long count_ = 0;

private:
    std::map<std::string, std::vector<SpaceField>> cache_;
};

// Exact multilinearization data: traces come from the cascade solver.
class ExactTraceSource : public TraceSource {
public:
    using TraceSource::TraceSource;

protected:
    std::vector<SpaceField> compute_traces(const std::vector<ModeProbe>& slots) override;
};

// Divided-difference data: traces come from central differences of the
// nonlinear solver down a step ladder, Richardson extrapolated.
class FdTraceSource : public TraceSource {
public:
    FdTraceSource(TorusGrid g, CostSeries running, CostSeries terminal,
                  std::vector<double> epsilons = {1e-2, 5e-3},
                  SolverParams params = probe_params());

protected:
    std::vector<SpaceField> compute_traces(const std::vector<ModeProbe>& slots) override;

private:
    std::vector<double> epsilons_;
    SolverParams params_;
};

// ---- reconstruction reports --------------------------------------------------

struct AmplitudeRow {
    int population = 0;   // 0-based; storage population for shared series
    MultiIndex beta;
    IVec3 xi{0, 0, 0};
    bool terminal = false;  // false: running coefficient, true: terminal
    cplx truth{0.0, 0.0};
    cplx recovered{0.0, 0.0};
    double abs_err = 0.0;
    // abs_err / |truth|; against the coefficient's largest planted amplitude
    // when this mode's truth is zero, and plain abs_err for an all-zero
    // coefficient.
    double rel_err = 0.0;
    double cond = 1.0;  // conditioning of the solve that produced the value
};

struct ReconstructionReport {
    CostSeries running, terminal;     // recovered series
    std::vector<AmplitudeRow> rows;   // filled when the true plant is supplied
    std::vector<double> conditions;   // every reported solve conditioning
    long probe_count = 0;
    double wall_seconds = 0.0;
    std::string diagnostic;           // e.g. the decoupling note
    bool stages_refused = false;      // cross-population stages were skipped

    double worst_condition() const;
    double max_rel_error(bool terminal_part) const;  // over rows of that part
};

nlohmann::json report_to_json(const ReconstructionReport& rep, int d);
void write_report_csv(std::ostream& out, const ReconstructionReport& rep, int d);

// ---- reconstruction engines --------------------------------------------------

// Full-data Taylor-Fourier recovery. Stage s = 1..order: probe the canonical
// population tuple of each order-s multi-index with one mode slot (the xi_2
// part of the target split, shifted by the auxiliary slots' e1 modes) plus
// s - 1 auxiliary e1 slots, each slot carrying offsets {1,2}; subtract the
// cascade prediction of all previously recovered orders; eliminate the offset
// monomials; read the residual at -xi_1; and solve the per-frequency 2x2
// systems (column-equilibrated) for the running and terminal amplitudes.
// Throws ConditioningError when a system's condition exceeds cond_limit.
ReconstructionReport recon_full(TraceSource& source, int order, int band,
                                const CostSeries* true_running = nullptr,
                                const CostSeries* true_terminal = nullptr,
                                double cond_limit = 1e8);

// Same pipeline reading only population 1's traces; unknowns are the single
// shared series. The plant must be declared kind=shared.
ReconstructionReport recon_shared(TraceSource& source, int order, int band,
                                  const CostSeries* true_running = nullptr,
                                  const CostSeries* true_terminal = nullptr,
                                  double cond_limit = 1e8);

// State-independent single-population recovery (coefficients constant in x,
// no terminal costs). Stage 1 measures u_1(., 0) = T F_1(c) on the constant
// grid c in {0, h, .., order*h}^n, h = delta / (order * n), and fits every
// F_1 coefficient by least squares. Later stages probe one e1 mode plus
// constant slots over the cyclic shifts of each population tuple, subtract
// the cascade prediction of everything recovered so far, and solve the cyclic
// system for the remaining populations' coefficients. When some first-order
// coupling |F_1^(e_k)| falls below coupling_threshold the engine reports the
// decoupled population and refuses the cross-population stages, returning the
// fully recovered F_1 series alone.
ReconstructionReport recon_stateless(TraceSource& source, int order,
                                     const CostSeries* true_running = nullptr,
                                     double delta = 0.1,
                                     double coupling_threshold = 1e-8);

}  // namespace mfg
