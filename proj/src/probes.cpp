#include "mfglab/probes.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "mfglab/errors.hpp"

namespace mfg {

std::string scheme_to_string(ProbeScheme s) {
    return s == ProbeScheme::central ? "central" : "one-sided";
}

ProbeScheme scheme_from_string(const std::string& s) {
    if (s == "central") return ProbeScheme::central;
    if (s == "one-sided") return ProbeScheme::one_sided;
    throw ConfigError("unknown probe scheme '" + s + "'");
}

ProbeDirection direction_from_mode(const TorusGrid& g, const ModeProbe& p) {
    ProbeDirection dir;
    dir.population = p.population;
    dir.field = p.realize(g);
    dir.descriptor = p;
    return dir;
}

ProbeDirection direction_from_field(int population, SpaceField f) {
    ProbeDirection dir;
    dir.population = population;
    dir.field = std::move(f);
    return dir;
}

SolverParams probe_params() {
    SolverParams p;
    p.tol = 1e-13;
    p.max_iters = 500;
    return p;
}

namespace {

void check_plan(const TorusGrid& g, const ProbePlan& plan, int n) {
    if (plan.directions.empty() || plan.directions.size() > 4)
        throw ConfigError("probe plan needs between 1 and 4 directions");
    for (const auto& dir : plan.directions) {
        if (dir.population < 0 || dir.population >= n)
            throw ConfigError("probe direction population out of range");
        if (dir.field.grid.N != g.N || dir.field.grid.d != g.d)
            throw ConfigError("probe direction field lives on a different grid");
    }
    if (plan.epsilons.empty()) throw ConfigError("probe plan needs a step ladder");
    for (size_t j = 0; j < plan.epsilons.size(); ++j) {
        if (plan.epsilons[j] <= 0.0)
            throw ConfigError("probe steps must be positive");
        if (j > 0 && plan.epsilons[j] >= plan.epsilons[j - 1])
            throw ConfigError("probe step ladder must be strictly decreasing");
    }
    if (plan.data_population < -1 || plan.data_population >= n)
        throw ConfigError("probe data population out of range");
}

// Measurement for one composite datum: amplitudes[l] scales direction l.
std::vector<SpaceField> measure(const TorusGrid& g, const ProbePlan& plan,
                                const CostSeries& running, const CostSeries& terminal,
                                const SolverParams& params,
                                const std::vector<double>& amplitudes) {
    int n = running.n();
    std::vector<SpaceField> m0(static_cast<size_t>(n), SpaceField(g));
    for (size_t l = 0; l < plan.directions.size(); ++l)
        axpy(cplx(amplitudes[l], 0.0), plan.directions[l].field,
             m0[static_cast<size_t>(plan.directions[l].population)]);
    MfgSolution sol = solve_mfg(g, running, terminal, m0, params);
    std::vector<SpaceField> traces = measure_full(sol);
    for (const auto& t : traces)
        for (const auto& v : t.v)
            if (!std::isfinite(v.real()) || !std::isfinite(v.imag()))
                throw ConvergenceError("probe measurement returned a non-finite value");
    if (plan.data_population >= 0)
        return {traces[static_cast<size_t>(plan.data_population)]};
    return traces;
}

// Raw divided-difference estimate at one ladder rung.
std::vector<SpaceField> rung_estimate(const TorusGrid& g, const ProbePlan& plan,
                                      const CostSeries& running, const CostSeries& terminal,
                                      const SolverParams& params, double eps) {
    size_t s = plan.directions.size();
    std::vector<double> amps(s, 0.0);
    std::vector<SpaceField> acc;
    double norm = 1.0;
    if (plan.scheme == ProbeScheme::central) {
        for (unsigned corner = 0; corner < (1u << s); ++corner) {
            double sign = 1.0;
            for (size_t l = 0; l < s; ++l) {
                bool minus = (corner >> l) & 1u;
                amps[l] = minus ? -eps : eps;
                if (minus) sign = -sign;
            }
            std::vector<SpaceField> t = measure(g, plan, running, terminal, params, amps);
            if (acc.empty()) acc.assign(t.size(), SpaceField(g));
            for (size_t i = 0; i < t.size(); ++i) axpy(cplx(sign, 0.0), t[i], acc[i]);
        }
        norm = std::pow(2.0 * eps, static_cast<double>(s));
    } else {
        // Inclusion-exclusion over the subsets of active slots.
        for (unsigned subset = 0; subset < (1u << s); ++subset) {
            double sign = 1.0;
            for (size_t l = 0; l < s; ++l) {
                bool on = (subset >> l) & 1u;
                amps[l] = on ? eps : 0.0;
                if (!on) sign = -sign;
            }
            std::vector<SpaceField> t = measure(g, plan, running, terminal, params, amps);
            if (acc.empty()) acc.assign(t.size(), SpaceField(g));
            for (size_t i = 0; i < t.size(); ++i) axpy(cplx(sign, 0.0), t[i], acc[i]);
        }
        norm = std::pow(eps, static_cast<double>(s));
    }
    for (auto& f : acc) scale(f, cplx(1.0 / norm, 0.0));
    return acc;
}

double rung_gap(const std::vector<SpaceField>& a, const std::vector<SpaceField>& b) {
    double worst = 0.0;
    for (size_t i = 0; i < a.size(); ++i) worst = std::max(worst, max_abs(sub(a[i], b[i])));
    return worst;
}

}  // namespace

ProbeResult linearized_trace(const TorusGrid& g, const ProbePlan& plan,
                             const CostSeries& running, const CostSeries& terminal,
                             const SolverParams& params) {
    check_plan(g, plan, running.n());
    ProbeResult res;
    res.plan_id = plan.id;

    std::vector<std::vector<SpaceField>> rungs;
    for (double eps : plan.epsilons)
        rungs.push_back(rung_estimate(g, plan, running, terminal, params, eps));

    for (size_t j = 0; j + 1 < rungs.size(); ++j)
        res.ladder_residuals.push_back(rung_gap(rungs[j], rungs[j + 1]));

    double theory = plan.scheme == ProbeScheme::central ? 2.0 : 1.0;
    if (res.ladder_residuals.size() >= 2) {
        double scale_ref = 0.0;
        for (const auto& f : rungs.back()) scale_ref = std::max(scale_ref, max_abs(f));
        double floor = 1e-10 * (1.0 + scale_ref);
        size_t last = res.ladder_residuals.size() - 1;
        if (res.ladder_residuals[last] > floor && res.ladder_residuals[last - 1] > floor) {
            double ratio = res.ladder_residuals[last - 1] / res.ladder_residuals[last];
            double h_ratio = plan.epsilons[last - 1] / plan.epsilons[last];
            res.slope = std::log(ratio) / std::log(h_ratio);
            if (std::abs(*res.slope - theory) > 0.2) {
                std::ostringstream msg;
                msg << "probe ladder slope " << *res.slope << " misses the expected order "
                    << theory << "; ladder (eps, gap):";
                for (size_t j = 0; j < res.ladder_residuals.size(); ++j)
                    msg << " (" << plan.epsilons[j] << ", " << res.ladder_residuals[j] << ")";
                throw ConvergenceError(msg.str());
            }
        }
    }

    // Richardson extrapolation down the ladder; the order climbs by 2 per
    // stage for the symmetric stencil and by 1 for the one-sided one.
    double p = theory;
    double step = plan.scheme == ProbeScheme::central ? 2.0 : 1.0;
    while (rungs.size() > 1) {
        std::vector<std::vector<SpaceField>> next;
        for (size_t j = 0; j + 1 < rungs.size(); ++j) {
            double f = std::pow(plan.epsilons[j] / plan.epsilons[j + 1], p);
            std::vector<SpaceField> comb;
            for (size_t i = 0; i < rungs[j].size(); ++i) {
                SpaceField c = rungs[j + 1][i];
                scale(c, cplx(f, 0.0));
                axpy(cplx(-1.0, 0.0), rungs[j][i], c);
                scale(c, cplx(1.0 / (f - 1.0), 0.0));
                comb.push_back(std::move(c));
            }
            next.push_back(std::move(comb));
        }
        rungs = std::move(next);
        p += step;
    }
    res.traces = std::move(rungs.front());
    return res;
}

std::vector<ProbeResult> run_probe_battery(const TorusGrid& g,
                                           const std::vector<ProbePlan>& plans,
                                           const CostSeries& running,
                                           const CostSeries& terminal,
                                           const SolverParams& params) {
    std::vector<ProbeResult> table;
    for (const auto& plan : plans) {
        try {
            table.push_back(linearized_trace(g, plan, running, terminal, params));
        } catch (const std::exception& e) {
            ProbeResult fail;
            fail.plan_id = plan.id;
            fail.error = e.what();
            table.push_back(std::move(fail));
        }
    }
    std::stable_sort(table.begin(), table.end(),
                     [](const ProbeResult& a, const ProbeResult& b) {
                         return a.plan_id < b.plan_id;
                     });
    return table;
}

nlohmann::json battery_to_json(const std::vector<ProbePlan>& plans, int d) {
    nlohmann::json out = nlohmann::json::array();
    for (const auto& plan : plans) {
        nlohmann::json jp;
        jp["id"] = plan.id;
        jp["scheme"] = scheme_to_string(plan.scheme);
        jp["epsilons"] = plan.epsilons;
        if (plan.data_population >= 0)
            jp["data"] = plan.data_population + 1;
        else
            jp["data"] = "full";
        nlohmann::json dirs = nlohmann::json::array();
        for (const auto& dir : plan.directions) {
            if (!dir.descriptor)
                throw ConfigError("probe direction without a mode descriptor "
                                  "cannot be serialized");
            nlohmann::json jd;
            jd["population"] = dir.population + 1;
            std::vector<int> xi(dir.descriptor->xi.begin(), dir.descriptor->xi.begin() + d);
            jd["xi"] = xi;
            jd["offset"] = dir.descriptor->offset;
            dirs.push_back(jd);
        }
        jp["directions"] = dirs;
        out.push_back(jp);
    }
    return out;
}

std::vector<ProbePlan> battery_from_json(const nlohmann::json& j, const TorusGrid& g) {
    if (!j.is_array()) throw ConfigError("probe battery JSON must be an array");
    std::vector<ProbePlan> plans;
    for (const auto& jp : j) {
        ProbePlan plan;
        plan.id = jp.at("id").get<int>();
        plan.scheme = scheme_from_string(jp.at("scheme").get<std::string>());
        if (jp.contains("epsilons"))
            plan.epsilons = jp.at("epsilons").get<std::vector<double>>();
        if (jp.contains("data")) {
            if (jp.at("data").is_string()) {
                if (jp.at("data").get<std::string>() != "full")
                    throw ConfigError("probe data mode must be 'full' or a population");
                plan.data_population = -1;
            } else {
                plan.data_population = jp.at("data").get<int>() - 1;
            }
        }
        for (const auto& jd : jp.at("directions")) {
            ModeProbe p;
            p.population = jd.at("population").get<int>() - 1;
            std::vector<int> xi = jd.at("xi").get<std::vector<int>>();
            if (xi.size() != static_cast<size_t>(g.d))
                throw ConfigError("probe direction frequency has wrong dimension");
            for (size_t c = 0; c < xi.size(); ++c) p.xi[c] = xi[c];
            p.offset = jd.value("offset", 0.0);
            p.slot = static_cast<int>(plan.directions.size());
            plan.directions.push_back(direction_from_mode(g, p));
        }
        plans.push_back(std::move(plan));
    }
    return plans;
}

}  // namespace mfg
