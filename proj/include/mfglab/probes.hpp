#pragma once

#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "mfglab/costs.hpp"
#include "mfglab/forward.hpp"
#include "mfglab/grid.hpp"
#include "mfglab/heatlib.hpp"

namespace mfg {

// Divided-difference stencil for the mixed derivatives in the probe
// amplitudes. Central needs 2^s solves per ladder rung and is second order;
// one_sided uses the inclusion-exclusion stencil over subsets of the slots,
// needs the same count, and is first order but keeps every composite datum on
// the nonnegative side when the direction fields are.
enum class ProbeScheme { central, one_sided };

std::string scheme_to_string(ProbeScheme s);
ProbeScheme scheme_from_string(const std::string& s);

// One linearization direction: an initial perturbation placed in a single
// population. The descriptor is kept when the field is phi_xi + offset so the
// plan can be serialized; free-form fields work but cannot go to JSON.
struct ProbeDirection {
    int population = 0;
    SpaceField field;
    std::optional<ModeProbe> descriptor;
};

ProbeDirection direction_from_mode(const TorusGrid& g, const ModeProbe& p);
ProbeDirection direction_from_field(int population, SpaceField f);

// A battery entry: measure the mixed derivative of the boundary measurement
// in the listed directions, on a ladder of step sizes, and extrapolate.
struct ProbePlan {
    int id = 0;
    std::vector<ProbeDirection> directions;          // one per slot, 1..4
    std::vector<double> epsilons = {1e-2, 5e-3, 2.5e-3};  // strictly decreasing
    ProbeScheme scheme = ProbeScheme::central;
    int data_population = -1;  // -1 keeps every population's trace
};

struct ProbeResult {
    int plan_id = 0;
    // Richardson-extrapolated estimate of the level-s traces u^(1..s)(., 0),
    // one entry per population, or a single entry when the plan restricts to
    // one population.
    std::vector<SpaceField> traces;
    // Sup gaps between consecutive raw ladder rungs, and the convergence
    // order fitted from them. Empty slope when the gaps sit below the noise
    // floor (nothing left to fit; the run still passes).
    std::vector<double> ladder_residuals;
    std::optional<double> slope;
    std::string error;  // set by run_probe_battery instead of throwing
};

// Solver controls used while probing: divided differences amplify solver
// error by eps^-s, so the tolerance is pushed near the roundoff floor.
SolverParams probe_params();

// Mixed divided difference of the measurement map in the plan's directions.
// Raw rung estimates are Richardson-extrapolated down the ladder (order steps
// 2,4,.. for central, 1,2,.. for one_sided). Throws ConvergenceError when the
// observed ladder slope misses the scheme's theoretical order by more than
// 0.2 (the message carries the ladder table), or when a measurement comes
// back non-finite.
ProbeResult linearized_trace(const TorusGrid& g, const ProbePlan& plan,
                             const CostSeries& running, const CostSeries& terminal,
                             const SolverParams& params = probe_params());

// Runs each plan independently, collecting failures into the result rows
// instead of aborting. Output is sorted by plan id.
std::vector<ProbeResult> run_probe_battery(const TorusGrid& g,
                                           const std::vector<ProbePlan>& plans,
                                           const CostSeries& running,
                                           const CostSeries& terminal,
                                           const SolverParams& params = probe_params());

// JSON manifest of a battery; directions must carry descriptors. Populations
// are 1-based in the JSON form, matching the cost-series files.
nlohmann::json battery_to_json(const std::vector<ProbePlan>& plans, int d);
std::vector<ProbePlan> battery_from_json(const nlohmann::json& j, const TorusGrid& g);

}  // namespace mfg
