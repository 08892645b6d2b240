#pragma once

#include <string>
#include <vector>

#include <json.hpp>

#include "mfglab/costs.hpp"
#include "mfglab/forward.hpp"
#include "mfglab/grid.hpp"
#include "mfglab/probes.hpp"

namespace mfg {

// A fully resolved experiment description. Parsed from a JSON file with
// blocks {task, grid, cost, solver, probe, initial, reconstruct, output};
// unknown keys are rejected everywhere and every run echoes the resolved
// config into its report.
struct ExperimentConfig {
    std::string task;  // forward | probe | reconstruct-full | reconstruct-shared
                       // | reconstruct-stateless | verify
    TorusGrid grid;

    // cost block: a seeded plant, or explicit coefficient series
    int n = 2;
    int S = 2;
    CostKind kind = CostKind::general;
    int band = 2;
    unsigned long long seed = 1;
    double magnitude = 0.1;
    bool explicit_costs = false;
    CostSeries running, terminal;

    // solver block; when absent, probe and reconstruction tasks fall back to
    // the probing defaults (tight tolerance, larger iteration budget)
    SolverParams solver;
    bool solver_given = false;

    // probe block
    ProbeScheme scheme = ProbeScheme::central;
    std::vector<double> epsilons = {1e-2, 5e-3};
    std::vector<ProbePlan> plans;

    // initial block: per-population initial densities for the forward task
    std::vector<SpaceField> initial;
    nlohmann::json initial_json;  // kept verbatim for the config echo

    // reconstruct block
    int order = 0;      // 0: use the cost order S
    int rec_band = -1;  // -1: use the cost band
    std::string source = "exact";  // exact | fd
    double delta = 0.1;
    double cond_limit = 1e8;
    double max_rel_error = -1.0;  // optional pass/fail threshold; -1 disables

    // output block
    std::string out_dir = "out";

    int threads = 1;
};

ExperimentConfig config_from_json(const nlohmann::json& j);
nlohmann::json config_to_json(const ExperimentConfig& cfg);
ExperimentConfig load_config(const std::string& path);

// Returns the costs the config describes: the explicit series when given,
// otherwise the seeded plant.
std::pair<CostSeries, CostSeries> config_costs(const ExperimentConfig& cfg);

// Executes the configured task and writes report.json plus tables/ and
// fields/ artifacts into the output directory. Returns 0 when every internal
// check passes and 1 otherwise. Throws ConfigError / ConvergenceError /
// ConditioningError for the CLI to map to exit codes 2 / 3 / 4.
int run_experiment(const ExperimentConfig& cfg);

// Thin argv front end: subcommand + --config PATH --out DIR --seed INT
// --threads INT. Catches library errors, writes a machine-readable error
// object, and maps them to exit codes.
int cli_main(int argc, char** argv);

}  // namespace mfg
