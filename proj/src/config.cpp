#include "mfglab/config.hpp"

#include <algorithm>
#include <chrono>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <memory>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "mfglab/invert.hpp"
#include "mfglab/verify.hpp"

namespace mfg {

namespace {

namespace fs = std::filesystem;

const std::set<std::string>& task_names() {
    static const std::set<std::string> names = {
        "forward",           "probe",  "reconstruct-full", "reconstruct-shared",
        "reconstruct-stateless", "verify"};
    return names;
}

void check_keys(const nlohmann::json& j, const std::string& where,
                std::initializer_list<const char*> allowed) {
    if (!j.is_object()) throw ConfigError(where + " must be a JSON object");
    for (auto it = j.begin(); it != j.end(); ++it) {
        bool known = false;
        for (const char* k : allowed)
            if (it.key() == k) {
                known = true;
                break;
            }
        if (!known) throw ConfigError("unknown key '" + it.key() + "' in " + where);
    }
}

SolverParams effective_solver(const ExperimentConfig& cfg) {
    if (cfg.solver_given) return cfg.solver;
    if (cfg.task == "forward" || cfg.task == "verify") return SolverParams{};
    return probe_params();
}

int resolved_order(const ExperimentConfig& cfg) { return cfg.order > 0 ? cfg.order : cfg.S; }
int resolved_band(const ExperimentConfig& cfg) {
    return cfg.rec_band >= 0 ? cfg.rec_band : cfg.band;
}

std::string iso_timestamp() {
    const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&now, &tm);
    std::ostringstream os;
    os << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
    return os.str();
}

void parse_grid(const nlohmann::json& j, ExperimentConfig& cfg) {
    if (!j.contains("grid")) {
        if (cfg.task == "verify") return;  // the verification sweep brings its own grids
        throw ConfigError("config needs a grid block");
    }
    const auto& jg = j.at("grid");
    check_keys(jg, "grid", {"d", "N", "T", "Nt"});
    cfg.grid.d = jg.value("d", cfg.grid.d);
    cfg.grid.N = jg.value("N", cfg.grid.N);
    cfg.grid.T = jg.value("T", cfg.grid.T);
    cfg.grid.Nt = jg.value("Nt", cfg.grid.Nt);
    cfg.grid.validate();
}

void parse_cost(const nlohmann::json& j, ExperimentConfig& cfg) {
    if (!j.contains("cost")) return;
    const auto& jc = j.at("cost");
    check_keys(jc, "cost",
               {"n", "S", "kind", "band", "seed", "magnitude", "running", "terminal"});
    const bool has_series = jc.contains("running") || jc.contains("terminal");
    if (has_series &&
        (jc.contains("band") || jc.contains("seed") || jc.contains("magnitude")))
        throw ConfigError("cost block mixes explicit series with plant settings");
    if (has_series) {
        cfg.explicit_costs = true;
        if (jc.contains("running"))
            cfg.running = costs_from_json(jc.at("running"), cfg.grid.d);
        if (jc.contains("terminal"))
            cfg.terminal = costs_from_json(jc.at("terminal"), cfg.grid.d);
        if (jc.contains("running") && jc.contains("terminal") &&
            cfg.running.n() != cfg.terminal.n())
            throw ConfigError("running and terminal series disagree on the population count");
        const int n = jc.contains("running") ? cfg.running.n() : cfg.terminal.n();
        const int S = std::max(jc.contains("running") ? cfg.running.order() : 0,
                               jc.contains("terminal") ? cfg.terminal.order() : 0);
        if (!jc.contains("running")) cfg.running = CostSeries(n, S, cfg.terminal.kind());
        if (!jc.contains("terminal")) cfg.terminal = CostSeries(n, S, cfg.running.kind());
        cfg.n = n;
        cfg.S = S;
        cfg.kind = cfg.running.kind();
        if (jc.contains("n") && jc.at("n").get<int>() != n)
            throw ConfigError("cost.n disagrees with the explicit series");
        if (jc.contains("S")) {
            const int declared = jc.at("S").get<int>();
            if (declared < S)
                throw ConfigError("cost.S is smaller than the order of the explicit series");
            cfg.S = declared;
        }
        if (jc.contains("kind") &&
            kind_from_string(jc.at("kind").get<std::string>()) != cfg.kind)
            throw ConfigError("cost.kind disagrees with the explicit series");
        return;
    }
    cfg.n = jc.value("n", cfg.n);
    cfg.S = jc.value("S", cfg.S);
    if (jc.contains("kind")) cfg.kind = kind_from_string(jc.at("kind").get<std::string>());
    cfg.band = jc.value("band", cfg.band);
    cfg.seed = jc.value("seed", cfg.seed);
    cfg.magnitude = jc.value("magnitude", cfg.magnitude);
    if (cfg.n < 1) throw ConfigError("cost.n must be >= 1");
    if (cfg.S < 1 || cfg.S > 4) throw ConfigError("cost.S must lie in 1..4");
    if (cfg.band < 0) throw ConfigError("cost.band must be >= 0");
    if (cfg.magnitude <= 0) throw ConfigError("cost.magnitude must be > 0");
}

void parse_solver(const nlohmann::json& j, ExperimentConfig& cfg) {
    if (!j.contains("solver")) return;
    const auto& js = j.at("solver");
    check_keys(js, "solver", {"tol", "max_iters", "theta", "delta", "dealias"});
    cfg.solver.tol = js.value("tol", cfg.solver.tol);
    cfg.solver.max_iters = js.value("max_iters", cfg.solver.max_iters);
    cfg.solver.theta = js.value("theta", cfg.solver.theta);
    cfg.solver.delta = js.value("delta", cfg.solver.delta);
    cfg.solver.dealias = js.value("dealias", cfg.solver.dealias);
    cfg.solver_given = true;
    if (cfg.solver.tol <= 0) throw ConfigError("solver.tol must be > 0");
    if (cfg.solver.max_iters < 1) throw ConfigError("solver.max_iters must be >= 1");
    if (cfg.solver.theta <= 0 || cfg.solver.theta > 1)
        throw ConfigError("solver.theta must lie in (0, 1]");
}

void parse_probe(const nlohmann::json& j, ExperimentConfig& cfg) {
    if (!j.contains("probe")) return;
    const auto& jp = j.at("probe");
    check_keys(jp, "probe", {"scheme", "epsilons", "plans"});
    if (jp.contains("scheme"))
        cfg.scheme = scheme_from_string(jp.at("scheme").get<std::string>());
    if (jp.contains("epsilons")) {
        cfg.epsilons = jp.at("epsilons").get<std::vector<double>>();
        if (cfg.epsilons.empty()) throw ConfigError("probe.epsilons must be nonempty");
        for (size_t k = 0; k < cfg.epsilons.size(); ++k) {
            if (cfg.epsilons[k] <= 0) throw ConfigError("probe.epsilons must be positive");
            if (k > 0 && cfg.epsilons[k] >= cfg.epsilons[k - 1])
                throw ConfigError("probe.epsilons must decrease strictly");
        }
    }
    if (jp.contains("plans")) {
        nlohmann::json plans = jp.at("plans");
        if (!plans.is_array()) throw ConfigError("probe.plans must be an array");
        int next_id = 1;
        for (auto& entry : plans) {
            check_keys(entry, "probe plan", {"id", "scheme", "epsilons", "data", "directions"});
            if (!entry.contains("id")) entry["id"] = next_id;
            next_id = entry.at("id").get<int>() + 1;
            if (!entry.contains("scheme")) entry["scheme"] = scheme_to_string(cfg.scheme);
            if (!entry.contains("epsilons")) entry["epsilons"] = cfg.epsilons;
            if (!entry.contains("directions"))
                throw ConfigError("probe plan needs a directions array");
            for (const auto& dir : entry.at("directions"))
                check_keys(dir, "probe direction", {"population", "xi", "offset"});
        }
        cfg.plans = battery_from_json(plans, cfg.grid);
    }
}

void parse_initial(const nlohmann::json& j, ExperimentConfig& cfg) {
    if (!j.contains("initial")) return;
    const auto& ji = j.at("initial");
    if (!ji.is_array()) throw ConfigError("initial must be an array of entries");
    cfg.initial_json = ji;
    cfg.initial.assign(static_cast<size_t>(cfg.n), SpaceField(cfg.grid));
    const SpaceField ones = constant_field(cfg.grid, cplx(1.0, 0.0));
    for (const auto& e : ji) {
        check_keys(e, "initial entry", {"population", "value", "xi", "re", "im"});
        const int pop = e.at("population").get<int>() - 1;
        if (pop < 0 || pop >= cfg.n)
            throw ConfigError("initial entry population out of range 1.." +
                              std::to_string(cfg.n));
        SpaceField& field = cfg.initial[static_cast<size_t>(pop)];
        if (e.contains("value")) {
            if (e.contains("xi") || e.contains("re") || e.contains("im"))
                throw ConfigError("initial entry mixes 'value' with a mode");
            axpy(cplx(e.at("value").get<double>(), 0.0), ones, field);
            continue;
        }
        if (!e.contains("xi"))
            throw ConfigError("initial entry needs either 'value' or 'xi'");
        const std::vector<int> xi = e.at("xi").get<std::vector<int>>();
        if (xi.size() != static_cast<size_t>(cfg.grid.d))
            throw ConfigError("initial entry frequency has wrong dimension");
        IVec3 v{0, 0, 0};
        for (size_t c = 0; c < xi.size(); ++c) v[c] = xi[c];
        axpy(cplx(e.value("re", 0.0), e.value("im", 0.0)), fourier_mode(cfg.grid, v), field);
    }
}

void parse_reconstruct(const nlohmann::json& j, ExperimentConfig& cfg) {
    if (!j.contains("reconstruct")) return;
    const auto& jr = j.at("reconstruct");
    check_keys(jr, "reconstruct",
               {"order", "band", "source", "delta", "cond_limit", "max_rel_error"});
    cfg.order = jr.value("order", cfg.order);
    cfg.rec_band = jr.value("band", cfg.rec_band);
    cfg.source = jr.value("source", cfg.source);
    cfg.delta = jr.value("delta", cfg.delta);
    cfg.cond_limit = jr.value("cond_limit", cfg.cond_limit);
    cfg.max_rel_error = jr.value("max_rel_error", cfg.max_rel_error);
    if (cfg.order < 0 || cfg.order > 4)
        throw ConfigError("reconstruct.order must lie in 0..4 (0 uses the cost order)");
    if (cfg.source != "exact" && cfg.source != "fd")
        throw ConfigError("reconstruct.source must be 'exact' or 'fd'");
    if (cfg.delta <= 0) throw ConfigError("reconstruct.delta must be > 0");
    if (cfg.cond_limit <= 0) throw ConfigError("reconstruct.cond_limit must be > 0");
}

void parse_output(const nlohmann::json& j, ExperimentConfig& cfg) {
    if (!j.contains("output")) return;
    const auto& jo = j.at("output");
    check_keys(jo, "output", {"dir"});
    cfg.out_dir = jo.value("dir", cfg.out_dir);
    if (cfg.out_dir.empty()) throw ConfigError("output.dir must be nonempty");
}

// ---- task bodies ------------------------------------------------------------

using CheckAdder = std::function<void(const std::string&, bool, double, double)>;

void run_forward(const ExperimentConfig& cfg, nlohmann::json& report,
                 const CheckAdder& add_check) {
    auto [running, terminal] = config_costs(cfg);
    std::vector<SpaceField> m0 = cfg.initial;
    if (m0.empty()) m0.assign(static_cast<size_t>(cfg.n), SpaceField(cfg.grid));
    const MfgSolution sol = solve_mfg(cfg.grid, running, terminal, m0, effective_solver(cfg));

    const fs::path out(cfg.out_dir);
    std::vector<double> drifts;
    {
        std::ofstream csv(out / "tables" / "mass.csv");
        csv << "k,t";
        for (int i = 0; i < cfg.n; ++i) csv << ",mass_" << i + 1;
        csv << "\n" << std::setprecision(17);
        std::vector<cplx> mass0(static_cast<size_t>(cfg.n));
        drifts.assign(static_cast<size_t>(cfg.n), 0.0);
        for (int i = 0; i < cfg.n; ++i)
            mass0[static_cast<size_t>(i)] = integral(sol.m[static_cast<size_t>(i)].at(0));
        for (int k = 0; k <= cfg.grid.Nt; ++k) {
            csv << k << ',' << cfg.grid.tk(k);
            for (int i = 0; i < cfg.n; ++i) {
                const cplx mass = integral(sol.m[static_cast<size_t>(i)].at(k));
                drifts[static_cast<size_t>(i)] = std::max(
                    drifts[static_cast<size_t>(i)], std::abs(mass - mass0[static_cast<size_t>(i)]));
                csv << ',' << mass.real();
            }
            csv << "\n";
        }
    }
    const std::vector<SpaceField> traces = measure_full(sol);
    nlohmann::json trace_modes = nlohmann::json::array();
    for (int i = 0; i < cfg.n; ++i) {
        const std::string tag = std::to_string(i + 1);
        write_field((out / "fields" / ("u_" + tag + ".bin")).string(), "u",
                    sol.u[static_cast<size_t>(i)]);
        write_field((out / "fields" / ("m_" + tag + ".bin")).string(), "m",
                    sol.m[static_cast<size_t>(i)]);
        write_field((out / "fields" / ("trace_" + tag + ".bin")).string(), "trace",
                    traces[static_cast<size_t>(i)]);
        const cplx mean = integral(traces[static_cast<size_t>(i)]);
        trace_modes.push_back({{"population", i + 1}, {"re", mean.real()}, {"im", mean.imag()}});
    }

    double worst_drift = 0.0;
    for (double d : drifts) worst_drift = std::max(worst_drift, d);
    add_check("mass conservation", worst_drift <= 1e-8, worst_drift, 1e-8);

    nlohmann::json results;
    results["iterations"] = sol.iterations;
    results["final_update"] = sol.final_update;
    results["warnings"] = sol.warnings;
    results["mass_drift"] = drifts;
    results["trace_means"] = trace_modes;
    report["results"] = results;
}

void run_probe(const ExperimentConfig& cfg, nlohmann::json& report,
               const CheckAdder& add_check) {
    if (cfg.plans.empty()) throw ConfigError("probe task needs a probe.plans array");
    auto [running, terminal] = config_costs(cfg);
    const std::vector<ProbeResult> results =
        run_probe_battery(cfg.grid, cfg.plans, running, terminal, effective_solver(cfg));

    const fs::path out(cfg.out_dir);
    std::ofstream ladders(out / "tables" / "probe_ladders.csv");
    ladders << "plan,gap_index,sup_gap\n" << std::setprecision(17);
    std::ofstream slopes(out / "tables" / "probe_slopes.csv");
    slopes << "plan,slope,error\n" << std::setprecision(17);

    nlohmann::json arr = nlohmann::json::array();
    for (const auto& r : results) {
        for (size_t k = 0; k < r.ladder_residuals.size(); ++k)
            ladders << r.plan_id << ',' << k << ',' << r.ladder_residuals[k] << "\n";
        slopes << r.plan_id << ',';
        if (r.slope) slopes << *r.slope;
        std::string err = r.error;
        std::replace(err.begin(), err.end(), ',', ';');
        std::replace(err.begin(), err.end(), '\n', ' ');
        slopes << ',' << err << "\n";
        for (size_t p = 0; p < r.traces.size(); ++p)
            write_field((out / "fields" /
                         ("probe_" + std::to_string(r.plan_id) + "_trace_" +
                          std::to_string(p + 1) + ".bin"))
                            .string(),
                        "trace", r.traces[p]);
        nlohmann::json jr;
        jr["id"] = r.plan_id;
        if (r.slope)
            jr["slope"] = *r.slope;
        else
            jr["slope"] = nullptr;
        jr["ladder_residuals"] = r.ladder_residuals;
        jr["error"] = r.error;
        arr.push_back(jr);
        add_check("probe plan " + std::to_string(r.plan_id) + " completed", r.error.empty(),
                  r.error.empty() ? 0.0 : 1.0, 0.0);
    }
    report["results"] = arr;
}

void run_reconstruct(const ExperimentConfig& cfg, nlohmann::json& report,
                     const CheckAdder& add_check) {
    auto [running, terminal] = config_costs(cfg);
    std::unique_ptr<TraceSource> src;
    if (cfg.source == "exact")
        src = std::make_unique<ExactTraceSource>(cfg.grid, running, terminal);
    else
        src = std::make_unique<FdTraceSource>(cfg.grid, running, terminal, cfg.epsilons,
                                              effective_solver(cfg));

    const int order = resolved_order(cfg);
    const int band = resolved_band(cfg);
    const CostSeries* truth_f = &running;
    const CostSeries* truth_g = &terminal;
    if (cfg.task == "reconstruct-shared" && running.kind() != CostKind::shared) {
        // The single-population engine reports one shared series; comparing it
        // against per-population ground truth would pair unrelated rows.
        truth_f = nullptr;
        truth_g = nullptr;
    }

    ReconstructionReport rep;
    if (cfg.task == "reconstruct-full")
        rep = recon_full(*src, order, band, truth_f, truth_g, cfg.cond_limit);
    else if (cfg.task == "reconstruct-shared")
        rep = recon_shared(*src, order, band, truth_f, truth_g, cfg.cond_limit);
    else
        rep = recon_stateless(*src, order, truth_f, cfg.delta);

    nlohmann::json jr = report_to_json(rep, cfg.grid.d);
    jr.erase("wall_seconds");  // volatile; run_meta carries the total wall time
    report["reconstruction"] = jr;

    std::ofstream csv(fs::path(cfg.out_dir) / "tables" / "recovered_coefficients.csv");
    write_report_csv(csv, rep, cfg.grid.d);

    add_check("condition numbers within limit", rep.worst_condition() <= cfg.cond_limit,
              rep.worst_condition(), cfg.cond_limit);
    if (cfg.max_rel_error >= 0 && truth_f != nullptr) {
        add_check("running-cost relative error", rep.max_rel_error(false) <= cfg.max_rel_error,
                  rep.max_rel_error(false), cfg.max_rel_error);
        if (cfg.task != "reconstruct-stateless")
            add_check("terminal-cost relative error",
                      rep.max_rel_error(true) <= cfg.max_rel_error, rep.max_rel_error(true),
                      cfg.max_rel_error);
    }
}

void run_verify_task(const ExperimentConfig& cfg, nlohmann::json& report,
                     const CheckAdder& add_check) {
    const VerifySuite suite = run_verification(cfg.seed);
    report["verification"] = verify_to_json(suite);
    std::ofstream csv(fs::path(cfg.out_dir) / "tables" / "verify.csv");
    write_verify_csv(csv, suite);
    for (const auto& row : suite.rows)
        add_check(row.name, row.pass, row.observed, row.tolerance);
}

}  // namespace

ExperimentConfig config_from_json(const nlohmann::json& j) {
    ExperimentConfig cfg;
    try {
        check_keys(j, "config",
                   {"task", "grid", "cost", "solver", "probe", "initial", "reconstruct",
                    "output", "threads"});
        if (!j.contains("task")) throw ConfigError("config needs a task");
        cfg.task = j.at("task").get<std::string>();
        if (!task_names().count(cfg.task))
            throw ConfigError("unknown task '" + cfg.task + "'");
        parse_grid(j, cfg);
        parse_cost(j, cfg);
        parse_solver(j, cfg);
        parse_probe(j, cfg);
        parse_reconstruct(j, cfg);
        parse_output(j, cfg);
        cfg.threads = j.value("threads", cfg.threads);
        if (cfg.threads < 1) throw ConfigError("threads must be >= 1");
        parse_initial(j, cfg);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("config: ") + e.what());
    }
    return cfg;
}

nlohmann::json config_to_json(const ExperimentConfig& cfg) {
    nlohmann::json j;
    j["task"] = cfg.task;
    j["grid"] = {{"d", cfg.grid.d}, {"N", cfg.grid.N}, {"T", cfg.grid.T}, {"Nt", cfg.grid.Nt}};
    nlohmann::json jc;
    jc["n"] = cfg.n;
    jc["S"] = cfg.S;
    jc["kind"] = kind_to_string(cfg.kind);
    if (cfg.explicit_costs) {
        jc["running"] = costs_to_json(cfg.running, cfg.grid.d);
        jc["terminal"] = costs_to_json(cfg.terminal, cfg.grid.d);
    } else {
        jc["band"] = cfg.band;
        jc["seed"] = cfg.seed;
        jc["magnitude"] = cfg.magnitude;
    }
    j["cost"] = jc;
    const SolverParams sp = effective_solver(cfg);
    j["solver"] = {{"tol", sp.tol},
                   {"max_iters", sp.max_iters},
                   {"theta", sp.theta},
                   {"delta", sp.delta},
                   {"dealias", sp.dealias}};
    nlohmann::json jp;
    jp["scheme"] = scheme_to_string(cfg.scheme);
    jp["epsilons"] = cfg.epsilons;
    if (!cfg.plans.empty()) jp["plans"] = battery_to_json(cfg.plans, cfg.grid.d);
    j["probe"] = jp;
    if (!cfg.initial_json.is_null()) j["initial"] = cfg.initial_json;
    j["reconstruct"] = {{"order", resolved_order(cfg)}, {"band", resolved_band(cfg)},
                        {"source", cfg.source},         {"delta", cfg.delta},
                        {"cond_limit", cfg.cond_limit}, {"max_rel_error", cfg.max_rel_error}};
    j["output"] = {{"dir", cfg.out_dir}};
    j["threads"] = cfg.threads;
    return j;
}

ExperimentConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file " + path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("config file " + path + " is not valid JSON: " + e.what());
    }
    return config_from_json(j);
}

std::pair<CostSeries, CostSeries> config_costs(const ExperimentConfig& cfg) {
    if (cfg.explicit_costs) return {cfg.running, cfg.terminal};
    PlantSpec spec;
    spec.n = cfg.n;
    spec.S = cfg.S;
    spec.d = cfg.grid.d;
    spec.kind = cfg.kind;
    spec.band = cfg.band;
    spec.magnitude = cfg.magnitude;
    spec.seed = cfg.seed;
    return make_planted(spec);
}

int run_experiment(const ExperimentConfig& cfg) {
    const auto t0 = std::chrono::steady_clock::now();
    const fs::path out(cfg.out_dir);
    fs::create_directories(out / "tables");
    fs::create_directories(out / "fields");

    nlohmann::json report;
    report["config"] = config_to_json(cfg);
    report["task"] = cfg.task;
    nlohmann::json checks = nlohmann::json::array();
    bool all_pass = true;
    const CheckAdder add_check = [&](const std::string& name, bool pass, double observed,
                                     double tolerance) {
        checks.push_back({{"name", name},
                          {"pass", pass},
                          {"observed", observed},
                          {"tolerance", tolerance}});
        all_pass = all_pass && pass;
    };

    if (cfg.task == "forward")
        run_forward(cfg, report, add_check);
    else if (cfg.task == "probe")
        run_probe(cfg, report, add_check);
    else if (cfg.task == "reconstruct-full" || cfg.task == "reconstruct-shared" ||
             cfg.task == "reconstruct-stateless")
        run_reconstruct(cfg, report, add_check);
    else if (cfg.task == "verify")
        run_verify_task(cfg, report, add_check);
    else
        throw ConfigError("unknown task '" + cfg.task + "'");

    report["checks"] = checks;
    const int code = all_pass ? 0 : 1;
    report["exit_code"] = code;
    const double wall =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    report["run_meta"] = {{"timestamp", iso_timestamp()}, {"wall_seconds", wall}};

    std::ofstream rf(out / "report.json");
    if (!rf) throw ConfigError("cannot write " + (out / "report.json").string());
    rf << report.dump(2) << "\n";
    return code;
}

int cli_main(int argc, char** argv) {
    const std::string usage =
        "usage: mfglab <forward|probe|reconstruct-full|reconstruct-shared|"
        "reconstruct-stateless|verify>\n"
        "              [--config file.json] [--out dir] [--seed n] [--threads n]\n";
    if (argc < 2) {
        std::cerr << usage;
        return 2;
    }
    const std::string task = argv[1];
    std::string config_path;
    std::string out_dir;
    bool out_given = false;
    std::optional<unsigned long long> seed;
    std::optional<int> threads;

    std::string effective_out;
    const auto emit_error = [&](const std::string& type, const std::string& message,
                                int code) {
        nlohmann::json err;
        err["error"] = {{"type", type}, {"message", message}};
        err["exit_code"] = code;
        std::cerr << err.dump(2) << "\n";
        if (!effective_out.empty()) {
            try {
                fs::create_directories(effective_out);
                std::ofstream f(fs::path(effective_out) / "report.json");
                f << err.dump(2) << "\n";
            } catch (...) {
            }
        }
        return code;
    };

    try {
        for (int a = 2; a < argc; ++a) {
            const std::string flag = argv[a];
            const auto need = [&](const char* name) -> std::string {
                if (a + 1 >= argc) throw ConfigError(std::string(name) + " needs a value");
                return argv[++a];
            };
            if (flag == "--config") {
                config_path = need("--config");
            } else if (flag == "--out") {
                out_dir = need("--out");
                out_given = true;
                effective_out = out_dir;
            } else if (flag == "--seed" || flag == "--threads") {
                const std::string value = need(flag.c_str());
                try {
                    if (flag == "--seed")
                        seed = std::stoull(value);
                    else
                        threads = std::stoi(value);
                } catch (const std::exception&) {
                    throw ConfigError(flag + " must be an integer, got '" + value + "'");
                }
            } else {
                std::cerr << "unknown flag " << flag << "\n" << usage;
                return 2;
            }
        }
        if (!task_names().count(task)) {
            std::cerr << "unknown task " << task << "\n" << usage;
            return 2;
        }

        ExperimentConfig cfg;
        if (!config_path.empty())
            cfg = load_config(config_path);
        else if (task != "verify")
            throw ConfigError("task '" + task + "' needs --config");
        cfg.task = task;
        if (out_given) cfg.out_dir = out_dir;
        if (seed) cfg.seed = *seed;
        if (threads) {
            if (*threads < 1) throw ConfigError("--threads must be >= 1");
            cfg.threads = *threads;
        }
        effective_out = cfg.out_dir;
        return run_experiment(cfg);
    } catch (const ConditioningError& e) {
        return emit_error("conditioning", e.what(), 4);
    } catch (const ConvergenceError& e) {
        return emit_error("convergence", e.what(), 3);
    } catch (const ConfigError& e) {
        return emit_error("config", e.what(), 2);
    } catch (const std::exception& e) {
        return emit_error("internal", e.what(), 2);
    }
}

}  // namespace mfg
