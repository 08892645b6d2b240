#include "mfglab/invert.hpp"

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <iomanip>
#include <limits>
#include <ostream>
#include <set>
#include <sstream>
#include <stdexcept>
#include <tuple>
#include <utility>

#include <Eigen/Dense>

#include "mfglab/heatlib.hpp"

namespace mfg {

namespace {

int inf_norm(const IVec3& v) {
    return std::max({std::abs(v[0]), std::abs(v[1]), std::abs(v[2])});
}

IVec3 negate(const IVec3& v) { return {-v[0], -v[1], -v[2]}; }

double norm_sq(const IVec3& v) {
    return double(v[0]) * v[0] + double(v[1]) * v[1] + double(v[2]) * v[2];
}

std::string ivec_str(const IVec3& v, int d) {
    std::ostringstream os;
    os << '(';
    for (int a = 0; a < d; ++a) os << (a ? "," : "") << v[a];
    os << ')';
    return os.str();
}

std::string beta_str(const MultiIndex& beta) {
    std::ostringstream os;
    os << '(';
    for (size_t k = 0; k < beta.size(); ++k) os << (k ? "," : "") << beta[k];
    os << ')';
    return os.str();
}

// All frequencies with |xi|_inf <= band in the first d components,
// lexicographic.
std::vector<IVec3> frequency_cube(int d, int band) {
    std::vector<IVec3> out;
    IVec3 xi{0, 0, 0};
    for (int a = 0; a < d; ++a) xi[static_cast<size_t>(a)] = -band;
    while (true) {
        out.push_back(xi);
        int a = d - 1;
        for (; a >= 0; --a) {
            if (++xi[static_cast<size_t>(a)] <= band) break;
            xi[static_cast<size_t>(a)] = -band;
        }
        if (a < 0) break;
    }
    return out;
}

std::string slot_key(const std::vector<ModeProbe>& slots) {
    std::ostringstream os;
    for (const auto& p : slots) {
        char buf[64];
        std::snprintf(buf, sizeof buf, "%.17g", p.offset);
        os << p.population << ':' << p.xi[0] << ',' << p.xi[1] << ',' << p.xi[2]
           << ':' << buf << '|';
    }
    return os.str();
}

}  // namespace

Decomposition pick_decomposition(const IVec3& xi, int d) {
    if (d < 1 || d > 3) throw ConfigError("pick_decomposition: dimension must be 1..3");
    for (int a = d; a < 3; ++a)
        if (xi[static_cast<size_t>(a)] != 0)
            throw ConfigError("pick_decomposition: frequency has components beyond dimension " +
                              std::to_string(d));
    Decomposition dec;
    dec.xi = xi;
    const int K = inf_norm(xi) + 1;
    dec.xi2 = {K, 0, 0};
    dec.xi1 = {xi[0] - K, xi[1], xi[2]};
    dec.xi2p = {K + 1, 0, 0};
    dec.xi1p = {xi[0] - K - 1, xi[1], xi[2]};
    dec.sigma = norm_sq(dec.xi1) + norm_sq(dec.xi2);
    dec.sigma_p = norm_sq(dec.xi1p) + norm_sq(dec.xi2p);
    return dec;
}

std::vector<cplx> offset_elimination(const std::vector<std::vector<double>>& slot_offsets,
                                     const std::vector<cplx>& rows) {
    const size_t s = slot_offsets.size();
    if (s == 0) throw ConfigError("offset elimination: need at least one slot");
    std::vector<size_t> sizes(s);
    size_t total = 1;
    for (size_t l = 0; l < s; ++l) {
        const auto& offs = slot_offsets[l];
        if (offs.empty()) throw ConfigError("offset elimination: slot without offsets");
        for (size_t a = 0; a + 1 < offs.size(); ++a)
            for (size_t b = a + 1; b < offs.size(); ++b)
                if (offs[a] == offs[b])
                    throw ConfigError("offset elimination: repeated offset makes the design singular");
        sizes[l] = offs.size();
        total *= offs.size();
    }
    if (rows.size() != total)
        throw ConfigError("offset elimination: row count does not match the offset grid");

    Eigen::MatrixXcd A(total, total);
    std::vector<size_t> idx(s, 0);
    for (size_t t = 0; t < total; ++t) {
        std::vector<size_t> pw(s, 0);
        for (size_t c = 0; c < total; ++c) {
            double v = 1.0;
            for (size_t l = 0; l < s; ++l)
                for (size_t rep = 0; rep < pw[l]; ++rep) v *= slot_offsets[l][idx[l]];
            A(static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(c)) = cplx(v, 0.0);
            for (size_t l = 0; l < s; ++l) {
                if (++pw[l] < sizes[l]) break;
                pw[l] = 0;
            }
        }
        for (size_t l = 0; l < s; ++l) {
            if (++idx[l] < sizes[l]) break;
            idx[l] = 0;
        }
    }
    Eigen::VectorXcd b(total);
    for (size_t t = 0; t < total; ++t) b(static_cast<Eigen::Index>(t)) = rows[t];
    Eigen::VectorXcd x = A.partialPivLu().solve(b);
    std::vector<cplx> out(total);
    for (size_t c = 0; c < total; ++c) out[c] = x(static_cast<Eigen::Index>(c));
    return out;
}

std::vector<cplx> cyclic_solve(const std::vector<cplx>& y) {
    const size_t s = y.size();
    if (s < 2) throw std::invalid_argument("cyclic_solve needs at least two equations");
    cplx sum{0.0, 0.0};
    for (cplx v : y) sum += v;
    std::vector<cplx> X(s);
    for (size_t c = 0; c < s; ++c) X[c] = sum / double(s - 1) - y[c];
    return X;
}

// ---- measurement access ------------------------------------------------------

TraceSource::TraceSource(TorusGrid g, CostSeries running, CostSeries terminal)
    : grid_(std::move(g)), running_(std::move(running)), terminal_(std::move(terminal)) {
    grid_.validate();
    if (running_.n() < 1) throw ConfigError("trace source: running costs need at least one population");
    if (terminal_.n() != running_.n())
        throw ConfigError("trace source: running and terminal costs disagree on the population count");
}

const std::vector<SpaceField>& TraceSource::derivative_traces(const std::vector<ModeProbe>& slots) {
    if (slots.empty() || slots.size() > 4)
        throw ConfigError("derivative trace: need 1..4 slots");
    for (const auto& p : slots)
        if (p.population < 0 || p.population >= populations())
            throw ConfigError("derivative trace: slot population out of range");
    const std::string key = slot_key(slots);
    auto it = cache_.find(key);
    if (it != cache_.end()) return it->second;
    return cache_.emplace(key, compute_traces(slots)).first->second;
}

SpaceField TraceSource::constant_measurement(const std::vector<cplx>& c) {
    if (static_cast<int>(c.size()) != populations())
        throw ConfigError("constant measurement: need one density value per population");
    std::vector<SpaceField> m0;
    m0.reserve(c.size());
    for (cplx v : c) m0.push_back(constant_field(grid_, v));
    SolverParams params;
    params.tol = 1e-12;
    params.max_iters = 60;
    MfgSolution sol = solve_mfg(grid_, running_, terminal_, m0, params);
    ++count_;
    return measure_single(sol);
}

std::vector<SpaceField> ExactTraceSource::compute_traces(const std::vector<ModeProbe>& slots) {
    std::vector<ModeProbe> own = slots;
    for (size_t l = 0; l < own.size(); ++l) own[l].slot = static_cast<int>(l);
    CascadeSolution cas = solve_cascade(grid_, running_, terminal_, own);
    ++count_;
    std::vector<SpaceField> out;
    out.reserve(static_cast<size_t>(populations()));
    for (int i = 0; i < populations(); ++i)
        out.push_back(cas.at(cas.full_mask()).u[static_cast<size_t>(i)].at(0));
    return out;
}

FdTraceSource::FdTraceSource(TorusGrid g, CostSeries running, CostSeries terminal,
                             std::vector<double> epsilons, SolverParams params)
    : TraceSource(std::move(g), std::move(running), std::move(terminal)),
      epsilons_(std::move(epsilons)),
      params_(params) {
    if (epsilons_.empty())
        throw ConfigError("divided differences need a nonempty step ladder");
}

std::vector<SpaceField> FdTraceSource::compute_traces(const std::vector<ModeProbe>& slots) {
    ProbePlan plan;
    plan.directions.reserve(slots.size());
    for (const auto& p : slots) plan.directions.push_back(direction_from_mode(grid_, p));
    plan.epsilons = epsilons_;
    plan.scheme = ProbeScheme::central;
    ProbeResult r = linearized_trace(grid_, plan, running_, terminal_, params_);
    count_ += static_cast<long>(epsilons_.size()) * (1L << slots.size());
    return std::move(r.traces);
}

// ---- reports -----------------------------------------------------------------

double ReconstructionReport::worst_condition() const {
    double w = 1.0;
    for (double c : conditions) w = std::max(w, c);
    return w;
}

double ReconstructionReport::max_rel_error(bool terminal_part) const {
    double w = 0.0;
    for (const auto& r : rows)
        if (r.terminal == terminal_part) w = std::max(w, r.rel_err);
    return w;
}

namespace {

using CondKey = std::tuple<int, MultiIndex, IVec3>;

// One row per (coefficient, frequency) over the union of recovered and
// planted modes, so silent misses and spurious modes both show up.
void build_rows(ReconstructionReport& rep, const CostSeries* true_running,
                const CostSeries* true_terminal, const std::map<CondKey, double>& conds) {
    if (!true_running && !true_terminal) return;
    auto one_part = [&](const CostSeries& rec, const CostSeries* truth, bool terminal_part) {
        if (!truth && rec.empty()) return;
        std::set<CostSeries::Key> keys;
        for (const auto& kv : rec.terms()) keys.insert(kv.first);
        if (truth)
            for (const auto& kv : truth->terms()) keys.insert(kv.first);
        for (const auto& key : keys) {
            const int i = key.first;
            const MultiIndex& beta = key.second;
            const CostCoefficient* rc = rec.find(i, beta);
            const CostCoefficient* tc = truth ? truth->find(i, beta) : nullptr;
            double scale = 0.0;
            std::set<IVec3> freqs;
            if (rc)
                for (const auto& m : rc->modes) freqs.insert(m.first);
            if (tc)
                for (const auto& m : tc->modes) {
                    freqs.insert(m.first);
                    scale = std::max(scale, std::abs(m.second));
                }
            for (const IVec3& xi : freqs) {
                AmplitudeRow row;
                row.population = i;
                row.beta = beta;
                row.xi = xi;
                row.terminal = terminal_part;
                if (tc) {
                    auto it = tc->modes.find(xi);
                    if (it != tc->modes.end()) row.truth = it->second;
                }
                if (rc) {
                    auto it = rc->modes.find(xi);
                    if (it != rc->modes.end()) row.recovered = it->second;
                }
                row.abs_err = std::abs(row.recovered - row.truth);
                if (std::abs(row.truth) > 0.0)
                    row.rel_err = row.abs_err / std::abs(row.truth);
                else if (scale > 0.0)
                    row.rel_err = row.abs_err / scale;
                else
                    row.rel_err = row.abs_err;
                auto ic = conds.find(CondKey{i, beta, xi});
                row.cond = ic != conds.end() ? ic->second : 1.0;
                rep.rows.push_back(row);
            }
        }
    };
    one_part(rep.running, true_running, false);
    one_part(rep.terminal, true_terminal, true);
}

struct PairSolution {
    cplx a, b;
    double cond;
};

// Column-equilibrated direct solve of the 2x2 running/terminal system. The
// reported condition is that of the scaled matrix.
PairSolution solve_pair(double c0, double e0, double c1, double e1, cplx q0, cplx q1,
                        double cond_limit, const std::string& label) {
    const double sa = std::max(std::abs(c0), std::abs(c1));
    const double sb = std::max(std::abs(e0), std::abs(e1));
    if (sa == 0.0 || sb == 0.0)
        throw ConditioningError("reconstruction system for " + label + " has a zero column");
    const double m00 = c0 / sa, m01 = e0 / sb;
    const double m10 = c1 / sa, m11 = e1 / sb;
    const double det = m00 * m11 - m01 * m10;
    const double t = m00 * m00 + m01 * m01 + m10 * m10 + m11 * m11;
    const double disc = std::sqrt(std::max(0.0, t * t - 4.0 * det * det));
    double cond = std::numeric_limits<double>::infinity();
    if (t - disc > 0.0) cond = std::sqrt((t + disc) / (t - disc));
    if (!(cond <= cond_limit)) {
        std::ostringstream os;
        os << "reconstruction system for " << label << " has condition " << std::scientific
           << std::setprecision(3) << cond << " above the limit " << cond_limit;
        throw ConditioningError(os.str());
    }
    PairSolution ps;
    ps.a = (q0 * m11 - q1 * m01) / det / sa;
    ps.b = (q1 * m00 - q0 * m10) / det / sb;
    ps.cond = cond;
    return ps;
}

ReconstructionReport recon_driver(TraceSource& src, int order, int band, bool shared,
                                  const CostSeries* true_running, const CostSeries* true_terminal,
                                  double cond_limit) {
    const auto t_start = std::chrono::steady_clock::now();
    const long count0 = src.measurement_count();
    const TorusGrid& g = src.grid();
    const int n = src.populations();
    const int d = g.d;
    if (order < 1 || order > 4)
        throw ConfigError("reconstruction order must be between 1 and 4");
    if (band < 0) throw ConfigError("reconstruction band must be nonnegative");
    if (true_running && true_running->n() != n)
        throw ConfigError("planted running costs disagree with the trace source on the population count");
    if (true_terminal && true_terminal->n() != n)
        throw ConfigError("planted terminal costs disagree with the trace source on the population count");
    // Largest frequency touched: the primed read mode |xi - (K+1)e1 - (s-1)e1|.
    if (g.N / 2 - 1 < 2 * band + 2 * order - 1)
        throw ConfigError("grid resolution too small for the requested band and order");

    ReconstructionReport rep;
    const CostKind kind = shared ? CostKind::shared : CostKind::general;
    rep.running = CostSeries(n, order, kind);
    rep.terminal = CostSeries(n, order, kind);
    std::map<CondKey, double> conds;

    const std::vector<IVec3> cube = frequency_cube(d, band);
    const int reads = shared ? 1 : n;
    for (int s = 1; s <= order; ++s) {
        // Orders below s are already recovered; their cascade prediction is
        // subtracted so the residual is linear in the order-s coefficients.
        const CostSeries known_running = rep.running;
        const CostSeries known_terminal = rep.terminal;
        std::map<std::string, std::vector<SpaceField>> corr_cache;
        auto correction = [&](const std::vector<ModeProbe>& slots) -> const std::vector<SpaceField>& {
            const std::string key = slot_key(slots);
            auto it = corr_cache.find(key);
            if (it != corr_cache.end()) return it->second;
            std::vector<SpaceField> traces;
            if (known_running.empty() && known_terminal.empty()) {
                traces.assign(static_cast<size_t>(n), SpaceField(g));
            } else {
                CascadeSolution cas = solve_cascade(g, known_running, known_terminal, slots);
                for (int i = 0; i < n; ++i)
                    traces.push_back(cas.at(cas.full_mask()).u[static_cast<size_t>(i)].at(0));
            }
            return corr_cache.emplace(key, std::move(traces)).first->second;
        };

        const std::vector<std::vector<double>> offsets(static_cast<size_t>(s),
                                                       std::vector<double>{1.0, 2.0});
        const int corners = 1 << s;
        for (const MultiIndex& beta : enumerate_multi_indices(n, s, s)) {
            std::vector<int> pops;
            for (int k = 0; k < n; ++k) pops.insert(pops.end(), static_cast<size_t>(beta[static_cast<size_t>(k)]), k);
            for (const IVec3& xi : cube) {
                IVec3 shifted = xi;
                shifted[0] -= s - 1;
                const Decomposition dec = pick_decomposition(shifted, d);
                std::array<std::vector<cplx>, 2> q;
                std::array<double, 2> cw{}, ew{};
                for (int v = 0; v < 2; ++v) {
                    const IVec3& xi1 = v == 0 ? dec.xi1 : dec.xi1p;
                    const IVec3& xi2 = v == 0 ? dec.xi2 : dec.xi2p;
                    const double sigma = (v == 0 ? dec.sigma : dec.sigma_p) + (s - 1);
                    cw[static_cast<size_t>(v)] = weight_c_h(g, sigma);
                    ew[static_cast<size_t>(v)] = weight_E(sigma, g.T);
                    std::vector<std::vector<cplx>> rows(
                        static_cast<size_t>(reads), std::vector<cplx>(static_cast<size_t>(corners)));
                    for (int t = 0; t < corners; ++t) {
                        std::vector<ModeProbe> slots(static_cast<size_t>(s));
                        for (int l = 0; l < s; ++l) {
                            auto& p = slots[static_cast<size_t>(l)];
                            p.xi = l == 0 ? xi2 : IVec3{1, 0, 0};
                            p.offset = 1.0 + ((t >> l) & 1);
                            p.population = pops[static_cast<size_t>(l)];
                            p.slot = l;
                        }
                        const std::vector<SpaceField>& traces = src.derivative_traces(slots);
                        const std::vector<SpaceField>& corr = correction(slots);
                        const IVec3 read = negate(xi1);
                        for (int r = 0; r < reads; ++r)
                            rows[static_cast<size_t>(r)][static_cast<size_t>(t)] =
                                mode(traces[static_cast<size_t>(r)], read) -
                                mode(corr[static_cast<size_t>(r)], read);
                    }
                    for (int r = 0; r < reads; ++r)
                        q[static_cast<size_t>(v)].push_back(
                            offset_elimination(offsets, rows[static_cast<size_t>(r)])[0]);
                }
                const IVec3 store = negate(xi);
                for (int r = 0; r < reads; ++r) {
                    const std::string label = "population " + std::to_string(r + 1) +
                                              ", coefficient " + beta_str(beta) + ", frequency " +
                                              ivec_str(store, d);
                    const PairSolution ps =
                        solve_pair(cw[0], ew[0], cw[1], ew[1], q[0][static_cast<size_t>(r)],
                                   q[1][static_cast<size_t>(r)], cond_limit, label);
                    rep.running.add_mode(r, beta, store, ps.a);
                    rep.terminal.add_mode(r, beta, store, ps.b);
                    conds[CondKey{rep.running.storage_index(r), beta, store}] = ps.cond;
                    rep.conditions.push_back(ps.cond);
                }
            }
        }
    }
    build_rows(rep, true_running, true_terminal, conds);
    rep.probe_count = src.measurement_count() - count0;
    rep.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
    return rep;
}

}  // namespace

ReconstructionReport recon_full(TraceSource& source, int order, int band,
                                const CostSeries* true_running, const CostSeries* true_terminal,
                                double cond_limit) {
    return recon_driver(source, order, band, false, true_running, true_terminal, cond_limit);
}

ReconstructionReport recon_shared(TraceSource& source, int order, int band,
                                  const CostSeries* true_running, const CostSeries* true_terminal,
                                  double cond_limit) {
    return recon_driver(source, order, band, true, true_running, true_terminal, cond_limit);
}

ReconstructionReport recon_stateless(TraceSource& source, int order,
                                     const CostSeries* true_running, double delta,
                                     double coupling_threshold) {
    const auto t_start = std::chrono::steady_clock::now();
    const long count0 = source.measurement_count();
    const TorusGrid& g = source.grid();
    const int n = source.populations();
    if (order < 1 || order > 3)
        throw ConfigError("state-independent reconstruction order must be between 1 and 3");
    if (delta <= 0.0) throw ConfigError("state-independent reconstruction needs a positive probe scale");
    if (coupling_threshold < 0.0) throw ConfigError("coupling threshold must be nonnegative");
    if (true_running && true_running->n() != n)
        throw ConfigError("planted running costs disagree with the trace source on the population count");

    ReconstructionReport rep;
    rep.running = CostSeries(n, order, CostKind::state_independent);
    rep.terminal = CostSeries(n, order, CostKind::state_independent);
    std::map<CondKey, double> conds;
    const IVec3 zero{0, 0, 0};

    // Stage 1: u_1(., 0) = T F_1(c) for constant initial densities, so a
    // least-squares fit over the constant grid pins every F_1 coefficient.
    const double h = delta / (order * n);
    const std::vector<MultiIndex> betas = enumerate_multi_indices(n, 1, order);
    const int cols = static_cast<int>(betas.size());
    int rows_count = 1;
    for (int k = 0; k < n; ++k) rows_count *= order + 1;
    Eigen::MatrixXd A(rows_count, cols);
    Eigen::VectorXcd y(rows_count);
    std::vector<int> digit(static_cast<size_t>(n), 0);
    for (int row = 0; row < rows_count; ++row) {
        std::vector<cplx> c(static_cast<size_t>(n));
        for (int k = 0; k < n; ++k) c[static_cast<size_t>(k)] = cplx(digit[static_cast<size_t>(k)] * h, 0.0);
        y(row) = mode(source.constant_measurement(c), zero);
        for (int col = 0; col < cols; ++col) {
            const MultiIndex& beta = betas[static_cast<size_t>(col)];
            double vterm = g.T / multi_factorial(beta);
            for (int k = 0; k < n; ++k)
                vterm *= std::pow(digit[static_cast<size_t>(k)] * h, beta[static_cast<size_t>(k)]);
            A(row, col) = vterm;
        }
        for (int k = 0; k < n; ++k) {
            if (++digit[static_cast<size_t>(k)] <= order) break;
            digit[static_cast<size_t>(k)] = 0;
        }
    }
    Eigen::VectorXd colscale(cols);
    for (int col = 0; col < cols; ++col) {
        const double sc = A.col(col).cwiseAbs().maxCoeff();
        if (sc == 0.0) throw ConditioningError("constant probe design has a zero column");
        colscale(col) = sc;
        A.col(col) /= sc;
    }
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(A);
    const auto& sv = svd.singularValues();
    const double cond1 = sv(0) / sv(sv.size() - 1);
    Eigen::MatrixXcd Ac = A.cast<cplx>();
    Eigen::VectorXcd fit = Ac.colPivHouseholderQr().solve(y);
    std::vector<cplx> coupling(static_cast<size_t>(n), cplx{0.0, 0.0});
    for (int col = 0; col < cols; ++col) {
        const MultiIndex& beta = betas[static_cast<size_t>(col)];
        const cplx value = fit(col) / colscale(col);
        rep.running.set(0, beta, constant_coefficient(value));
        conds[CondKey{0, beta, zero}] = cond1;
        if (order_of(beta) == 1)
            for (int k = 0; k < n; ++k)
                if (beta[static_cast<size_t>(k)] == 1) coupling[static_cast<size_t>(k)] = value;
    }
    rep.conditions.push_back(cond1);

    // A vanishing first-order coupling breaks every cross-population chain, so
    // the later stages cannot see the other populations' coefficients.
    if (n >= 2) {
        std::vector<int> weak;
        for (int k = 0; k < n; ++k)
            if (std::abs(coupling[static_cast<size_t>(k)]) < coupling_threshold) weak.push_back(k);
        if (!weak.empty()) {
            std::ostringstream os;
            os << "decoupling detected:";
            for (size_t a = 0; a < weak.size(); ++a) {
                os << (a ? "," : "") << " first-order coupling of population 1 to population "
                   << (weak[a] + 1) << " is " << std::scientific << std::setprecision(3)
                   << std::abs(coupling[static_cast<size_t>(weak[a])]);
            }
            os << " (threshold " << std::scientific << std::setprecision(3) << coupling_threshold
               << "); cross-population stages refused";
            rep.diagnostic = os.str();
            rep.stages_refused = true;
        }
    }

    if (n >= 2 && !rep.stages_refused) {
        const double I2h = kernel_I2_h(g, 1.0);
        const IVec3 e1{1, 0, 0};
        const CostSeries empty_terminal(n, order, CostKind::state_independent);
        for (int s = 2; s <= order + 1; ++s) {
            const CostSeries known = rep.running;
            std::map<std::string, std::vector<SpaceField>> corr_cache;
            for (const MultiIndex& beta : enumerate_multi_indices(n, s, s)) {
                if (beta[0] == s) continue;  // all-population-1 tuple: already pinned by stage 1
                std::vector<int> pops;
                for (int k = 0; k < n; ++k)
                    pops.insert(pops.end(), static_cast<size_t>(beta[static_cast<size_t>(k)]), k);
                std::vector<cplx> z(static_cast<size_t>(s));
                for (int c = 0; c < s; ++c) {
                    std::vector<ModeProbe> slots(static_cast<size_t>(s));
                    // Slot 0 carries the mode; the rest are the constant phi_0 = 1.
                    for (int j = 0; j < s; ++j) {
                        auto& p = slots[static_cast<size_t>(j)];
                        p.population = pops[static_cast<size_t>((c + j) % s)];
                        p.xi = j == 0 ? e1 : zero;
                        p.offset = 0.0;
                        p.slot = j;
                    }
                    const std::vector<SpaceField>& traces = source.derivative_traces(slots);
                    const std::string key = slot_key(slots);
                    auto it = corr_cache.find(key);
                    if (it == corr_cache.end()) {
                        CascadeSolution cas = solve_cascade(g, known, empty_terminal, slots);
                        std::vector<SpaceField> corr;
                        for (int i = 0; i < n; ++i)
                            corr.push_back(cas.at(cas.full_mask()).u[static_cast<size_t>(i)].at(0));
                        it = corr_cache.emplace(key, std::move(corr)).first;
                    }
                    z[static_cast<size_t>(c)] =
                        (mode(traces[0], e1) - mode(it->second[0], e1)) / I2h;
                }
                const std::vector<cplx> X = cyclic_solve(z);
                for (int c = 0; c < s; ++c) {
                    const int r = pops[static_cast<size_t>(c)];
                    if (r == 0) continue;  // population-1 chains were subtracted with the correction
                    MultiIndex gamma = beta;
                    gamma[static_cast<size_t>(r)] -= 1;
                    const cplx value = X[static_cast<size_t>(c)] / coupling[static_cast<size_t>(r)];
                    rep.running.set(r, gamma, constant_coefficient(value));
                    const double amp =
                        (s - 1) / (std::abs(I2h) * std::abs(coupling[static_cast<size_t>(r)]));
                    conds[CondKey{r, gamma, zero}] = amp;
                    rep.conditions.push_back(amp);
                }
            }
        }
    }

    build_rows(rep, true_running, nullptr, conds);
    rep.probe_count = source.measurement_count() - count0;
    rep.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
    return rep;
}

nlohmann::json report_to_json(const ReconstructionReport& rep, int d) {
    nlohmann::json j;
    j["running"] = costs_to_json(rep.running, d);
    j["terminal"] = costs_to_json(rep.terminal, d);
    j["probe_count"] = rep.probe_count;
    j["wall_seconds"] = rep.wall_seconds;
    j["diagnostic"] = rep.diagnostic;
    j["stages_refused"] = rep.stages_refused;
    j["conditions"] = rep.conditions;
    j["worst_condition"] = rep.worst_condition();
    nlohmann::json rows = nlohmann::json::array();
    for (const auto& r : rep.rows) {
        nlohmann::json row;
        row["population"] = r.population + 1;
        row["beta"] = r.beta;
        nlohmann::json xi = nlohmann::json::array();
        for (int a = 0; a < d; ++a) xi.push_back(r.xi[static_cast<size_t>(a)]);
        row["xi"] = xi;
        row["part"] = r.terminal ? "terminal" : "running";
        row["true_re"] = r.truth.real();
        row["true_im"] = r.truth.imag();
        row["recovered_re"] = r.recovered.real();
        row["recovered_im"] = r.recovered.imag();
        row["abs_err"] = r.abs_err;
        row["rel_err"] = r.rel_err;
        row["cond"] = r.cond;
        rows.push_back(row);
    }
    j["rows"] = rows;
    return j;
}

void write_report_csv(std::ostream& out, const ReconstructionReport& rep, int d) {
    out << "population,beta,xi,part,true_re,true_im,recovered_re,recovered_im,abs_err,rel_err,cond\n";
    out << std::setprecision(17);
    for (const auto& r : rep.rows) {
        out << (r.population + 1) << ',';
        for (size_t k = 0; k < r.beta.size(); ++k) out << (k ? " " : "") << r.beta[k];
        out << ',';
        for (int a = 0; a < d; ++a) out << (a ? " " : "") << r.xi[static_cast<size_t>(a)];
        out << ',' << (r.terminal ? "terminal" : "running") << ',' << r.truth.real() << ','
            << r.truth.imag() << ',' << r.recovered.real() << ',' << r.recovered.imag() << ','
            << r.abs_err << ',' << r.rel_err << ',' << r.cond << '\n';
    }
}

}  // namespace mfg
