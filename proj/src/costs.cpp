#include "mfglab/costs.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <set>

namespace mfg {

int order_of(const MultiIndex& beta) {
    int s = 0;
    for (int b : beta) s += b;
    return s;
}

double factorial(int k) {
    double f = 1.0;
    for (int j = 2; j <= k; ++j) f *= j;
    return f;
}

double multi_factorial(const MultiIndex& beta) {
    double f = 1.0;
    for (int b : beta) f *= factorial(b);
    return f;
}

MultiIndex beta_from_tuple(int n, const std::vector<int>& pops) {
    MultiIndex beta(static_cast<size_t>(n), 0);
    for (int k : pops) {
        if (k < 0 || k >= n)
            throw MfgError("beta_from_tuple: population index out of range");
        ++beta[static_cast<size_t>(k)];
    }
    return beta;
}

namespace {

void enumerate_rec(int n, int pos, int remaining_max, MultiIndex& cur,
                   std::vector<MultiIndex>& out) {
    if (pos == n) {
        out.push_back(cur);
        return;
    }
    for (int b = 0; b <= remaining_max; ++b) {
        cur[static_cast<size_t>(pos)] = b;
        enumerate_rec(n, pos + 1, remaining_max - b, cur, out);
    }
    cur[static_cast<size_t>(pos)] = 0;
}

}  // namespace

std::string kind_to_string(CostKind k) {
    switch (k) {
        case CostKind::general: return "general";
        case CostKind::shared: return "shared";
        case CostKind::state_independent: return "state-independent";
    }
    throw MfgError("costs: unknown kind");
}

CostKind kind_from_string(const std::string& s) {
    if (s == "general") return CostKind::general;
    if (s == "shared") return CostKind::shared;
    if (s == "state-independent") return CostKind::state_independent;
    throw ConfigError("costs: unknown kind \"" + s + "\"");
}

std::vector<MultiIndex> enumerate_multi_indices(int n, int min_order, int max_order) {
    std::vector<MultiIndex> all;
    MultiIndex cur(static_cast<size_t>(n), 0);
    enumerate_rec(n, 0, max_order, cur, all);
    std::vector<MultiIndex> out;
    for (auto& beta : all) {
        int s = order_of(beta);
        if (s >= min_order && s <= max_order) out.push_back(std::move(beta));
    }
    std::sort(out.begin(), out.end());
    return out;
}

// ---- CostCoefficient --------------------------------------------------------

bool CostCoefficient::is_constant() const {
    if (modes.empty()) return true;
    return modes.size() == 1 && modes.begin()->first == IVec3{0, 0, 0};
}

cplx CostCoefficient::constant_value() const {
    if (modes.empty()) return cplx{0.0, 0.0};
    if (!is_constant()) throw MfgError("coefficient is not constant in x");
    return modes.begin()->second;
}

double CostCoefficient::linf_bound() const {
    double s = 0.0;
    for (const auto& [xi, amp] : modes) s += std::abs(amp);
    return s;
}

void CostCoefficient::add_mode(const IVec3& xi, cplx amp) {
    auto [it, inserted] = modes.emplace(xi, amp);
    if (!inserted) it->second += amp;
}

SpaceField CostCoefficient::materialize(const TorusGrid& g) const {
    Spectrum s(g);
    for (const auto& [xi, amp] : modes) {
        for (int j = 0; j < 3; ++j)
            if (j >= g.d && xi[static_cast<size_t>(j)] != 0)
                throw ConfigError("coefficient mode uses a frequency beyond the grid dimension");
        for (int j = 0; j < g.d; ++j) {
            int f = xi[static_cast<size_t>(j)];
            if (f < -g.N / 2 || f >= g.N / 2)
                throw ConfigError("coefficient mode frequency does not fit on the grid");
        }
        s.c[static_cast<size_t>(g.flat_of(xi))] += amp;
    }
    return synthesize(s);
}

CostCoefficient constant_coefficient(cplx value) {
    CostCoefficient c;
    if (value != cplx{0.0, 0.0}) c.add_mode(IVec3{0, 0, 0}, value);
    return c;
}

// ---- CostSeries -------------------------------------------------------------

CostSeries::CostSeries(int n, int order, CostKind kind) : n_(n), order_(order), kind_(kind) {
    if (n < 1) throw ConfigError("costs: need at least one population");
    if (order < 0 || order > 4)
        throw ConfigError("costs: series order must be between 0 and 4, got " +
                          std::to_string(order));
}

void CostSeries::check_key(int i, const MultiIndex& beta) const {
    if (i < 0 || i >= n_) throw MfgError("costs: population index out of range");
    if (static_cast<int>(beta.size()) != n_)
        throw MfgError("costs: multi-index length does not match population count");
    for (int b : beta)
        if (b < 0) throw MfgError("costs: multi-index entries must be nonnegative");
    int s = order_of(beta);
    if (s < 1 || s > order_)
        throw MfgError("costs: multi-index order " + std::to_string(s) +
                       " outside declared range 1.." + std::to_string(order_));
}

void CostSeries::set(int i, const MultiIndex& beta, CostCoefficient c) {
    check_key(i, beta);
    if (kind_ == CostKind::state_independent && !c.is_constant())
        throw MfgError("costs: state-independent series requires constant coefficients");
    if (c.is_zero())
        terms_.erase(Key{storage_index(i), beta});
    else
        terms_[Key{storage_index(i), beta}] = std::move(c);
}

void CostSeries::add_mode(int i, const MultiIndex& beta, const IVec3& xi, cplx amp) {
    check_key(i, beta);
    if (kind_ == CostKind::state_independent && xi != IVec3{0, 0, 0})
        throw MfgError("costs: state-independent series requires constant coefficients");
    terms_[Key{storage_index(i), beta}].add_mode(xi, amp);
}

const CostCoefficient* CostSeries::find(int i, const MultiIndex& beta) const {
    if (i < 0 || i >= n_) throw MfgError("costs: population index out of range");
    if (static_cast<int>(beta.size()) != n_)
        throw MfgError("costs: multi-index length does not match population count");
    auto it = terms_.find(Key{storage_index(i), beta});
    return it == terms_.end() ? nullptr : &it->second;
}

CostCoefficient CostSeries::get(int i, const MultiIndex& beta) const {
    const CostCoefficient* c = find(i, beta);
    return c == nullptr ? CostCoefficient{} : *c;
}

CostCoefficient CostSeries::get_tuple(int i, const std::vector<int>& pops) const {
    return get(i, beta_from_tuple(n_, pops));
}

bool CostSeries::all_constant() const {
    for (const auto& [key, c] : terms_)
        if (!c.is_constant()) return false;
    return true;
}

CostSeries CostSeries::truncated(int max_order) const {
    CostSeries out(n_, order_, kind_);
    for (const auto& [key, c] : terms_)
        if (order_of(key.second) <= max_order) out.terms_[key] = c;
    return out;
}

cplx CostSeries::eval_constant(int i, const std::vector<cplx>& z) const {
    if (static_cast<int>(z.size()) != n_)
        throw MfgError("costs: argument length does not match population count");
    cplx sum{0.0, 0.0};
    for (const auto& [key, c] : terms_) {
        if (key.first != storage_index(i)) continue;
        cplx mono{1.0, 0.0};
        for (int k = 0; k < n_; ++k)
            for (int r = 0; r < key.second[static_cast<size_t>(k)]; ++r)
                mono *= z[static_cast<size_t>(k)];
        sum += c.constant_value() * mono / multi_factorial(key.second);
    }
    return sum;
}

double max_coeff_diff(const CostSeries& a, const CostSeries& b) {
    std::set<CostSeries::Key> keys;
    for (const auto& [key, c] : a.terms()) keys.insert(key);
    for (const auto& [key, c] : b.terms()) keys.insert(key);
    double worst = 0.0;
    for (const auto& key : keys) {
        CostCoefficient ca = a.get(key.first, key.second);
        CostCoefficient cb = b.get(key.first, key.second);
        std::set<IVec3> xis;
        for (const auto& [xi, amp] : ca.modes) xis.insert(xi);
        for (const auto& [xi, amp] : cb.modes) xis.insert(xi);
        for (const auto& xi : xis) {
            cplx va = ca.modes.count(xi) ? ca.modes.at(xi) : cplx{0.0, 0.0};
            cplx vb = cb.modes.count(xi) ? cb.modes.at(xi) : cplx{0.0, 0.0};
            worst = std::max(worst, std::abs(va - vb));
        }
    }
    return worst;
}

double max_coeff_abs(const CostSeries& s) {
    double worst = 0.0;
    for (const auto& [key, c] : s.terms())
        for (const auto& [xi, amp] : c.modes) worst = std::max(worst, std::abs(amp));
    return worst;
}

// ---- planted costs ----------------------------------------------------------

namespace {

// Frequencies in [-band, band]^d whose first nonzero component is positive;
// each represents a conjugate pair {xi, -xi}.
std::vector<IVec3> half_band(int d, int band) {
    std::vector<IVec3> out;
    IVec3 lo{0, 0, 0}, hi{0, 0, 0};
    for (int j = 0; j < d; ++j) lo[static_cast<size_t>(j)] = -band, hi[static_cast<size_t>(j)] = band;
    for (int a = lo[0]; a <= hi[0]; ++a)
        for (int b = lo[1]; b <= hi[1]; ++b)
            for (int c = lo[2]; c <= hi[2]; ++c) {
                IVec3 xi{a, b, c};
                int first = 0;
                for (int j = 0; j < d; ++j)
                    if (xi[static_cast<size_t>(j)] != 0) {
                        first = xi[static_cast<size_t>(j)];
                        break;
                    }
                if (first > 0) out.push_back(xi);
            }
    return out;
}

}  // namespace

std::pair<CostSeries, CostSeries> make_planted(const PlantSpec& spec) {
    if (spec.d < 1 || spec.d > 3)
        throw ConfigError("make_planted: dimension must be 1..3");
    if (spec.band < 0) throw ConfigError("make_planted: band must be nonnegative");
    if (spec.magnitude <= 0.0) throw ConfigError("make_planted: magnitude must be positive");

    std::mt19937_64 rng(spec.seed);
    std::uniform_real_distribution<double> unif(-1.0, 1.0);
    const bool constant_only = spec.kind == CostKind::state_independent;
    const std::vector<IVec3> pairs = half_band(spec.d, spec.band);

    auto draw_coeff = [&]() {
        CostCoefficient c;
        c.add_mode(IVec3{0, 0, 0}, cplx(spec.magnitude * unif(rng), 0.0));
        if (!constant_only) {
            for (const IVec3& xi : pairs) {
                int sup = 0;
                for (int v : xi) sup = std::max(sup, std::abs(v));
                cplx amp = spec.magnitude * cplx(unif(rng), unif(rng)) / (2.0 * (1.0 + sup));
                c.add_mode(xi, amp);
                IVec3 neg{-xi[0], -xi[1], -xi[2]};
                c.add_mode(neg, std::conj(amp));
            }
        }
        return c;
    };

    CostSeries running(spec.n, spec.S, spec.kind);
    CostSeries terminal(spec.n, spec.S, spec.kind);
    const int pops = spec.kind == CostKind::shared ? 1 : spec.n;
    const auto betas = enumerate_multi_indices(spec.n, 1, spec.S);
    for (int i = 0; i < pops; ++i)
        for (const auto& beta : betas) running.set(i, beta, draw_coeff());
    if (!constant_only)
        for (int i = 0; i < pops; ++i)
            for (const auto& beta : betas) terminal.set(i, beta, draw_coeff());

    if (constant_only && spec.ensure_coupling) {
        // Order-one coefficients of the first population drive every chain the
        // state-independent engine uses; keep them bounded away from zero.
        for (int k = 0; k < spec.n; ++k) {
            MultiIndex beta(static_cast<size_t>(spec.n), 0);
            beta[static_cast<size_t>(k)] = 1;
            double u = unif(rng);
            double v = spec.magnitude * (0.4 + 0.6 * std::abs(u)) * (u < 0.0 ? -1.0 : 1.0);
            running.set(0, beta, constant_coefficient(cplx(v, 0.0)));
        }
    }
    return {running, terminal};
}

// ---- BoundCosts -------------------------------------------------------------

BoundCosts::BoundCosts(const CostSeries& series, const TorusGrid& grid)
    : series_(series), grid_(grid) {
    for (const auto& [key, c] : series_.terms()) fields_.emplace(key, c.materialize(grid_));
}

const SpaceField* BoundCosts::field(int i, const MultiIndex& beta) const {
    auto it = fields_.find(CostSeries::Key{series_.storage_index(i), beta});
    return it == fields_.end() ? nullptr : &it->second;
}

SpaceField BoundCosts::eval(int i, const std::vector<SpaceField>& z) const {
    if (static_cast<int>(z.size()) != series_.n())
        throw MfgError("costs: argument count does not match population count");
    SpaceField out(grid_);
    for (const auto& [key, coeff_field] : fields_) {
        if (key.first != series_.storage_index(i)) continue;
        const MultiIndex& beta = key.second;
        double inv_fact = 1.0 / multi_factorial(beta);
        for (long p = 0; p < out.size(); ++p) {
            cplx mono{1.0, 0.0};
            for (int k = 0; k < series_.n(); ++k)
                for (int r = 0; r < beta[static_cast<size_t>(k)]; ++r)
                    mono *= z[static_cast<size_t>(k)].v[static_cast<size_t>(p)];
            out.v[static_cast<size_t>(p)] +=
                coeff_field.v[static_cast<size_t>(p)] * mono * inv_fact;
        }
    }
    return out;
}

// ---- JSON -------------------------------------------------------------------

namespace {

using nlohmann::json;

json xi_to_json(const IVec3& xi, int d) {
    json arr = json::array();
    for (int j = 0; j < d; ++j) arr.push_back(xi[static_cast<size_t>(j)]);
    return arr;
}

IVec3 xi_from_json(const json& arr, int d) {
    if (!arr.is_array() || static_cast<int>(arr.size()) != d)
        throw ConfigError("costs: \"xi\" must be an array of length d");
    IVec3 xi{0, 0, 0};
    for (int j = 0; j < d; ++j) {
        if (!arr[static_cast<size_t>(j)].is_number_integer())
            throw ConfigError("costs: \"xi\" entries must be integers");
        xi[static_cast<size_t>(j)] = arr[static_cast<size_t>(j)].get<int>();
    }
    return xi;
}

}  // namespace

nlohmann::json costs_to_json(const CostSeries& s, int d) {
    json out;
    out["n"] = s.n();
    out["S"] = s.order();
    out["kind"] = kind_to_string(s.kind());
    json entries = json::array();
    for (const auto& [key, c] : s.terms()) {
        json t;
        t["i"] = key.first + 1;
        t["beta"] = key.second;
        if (c.is_constant() && std::abs(c.constant_value().imag()) == 0.0) {
            t["value"] = c.constant_value().real();
        } else {
            json modes = json::array();
            for (const auto& [xi, amp] : c.modes) {
                json m;
                m["xi"] = xi_to_json(xi, d);
                m["re"] = amp.real();
                m["im"] = amp.imag();
                modes.push_back(m);
            }
            t["modes"] = modes;
        }
        entries.push_back(t);
    }
    out["entries"] = entries;
    return out;
}

CostSeries costs_from_json(const nlohmann::json& j, int d) {
    if (!j.is_object()) throw ConfigError("costs: expected an object");
    for (const auto& [key, value] : j.items())
        if (key != "n" && key != "S" && key != "kind" && key != "entries")
            throw ConfigError("costs: unknown key \"" + key + "\"");
    if (!j.contains("n") || !j.contains("S"))
        throw ConfigError("costs: \"n\" and \"S\" are required");
    int n = j.at("n").get<int>();
    int order = j.at("S").get<int>();
    CostKind kind = CostKind::general;
    if (j.contains("kind")) {
        if (!j.at("kind").is_string()) throw ConfigError("costs: \"kind\" must be a string");
        kind = kind_from_string(j.at("kind").get<std::string>());
    }
    CostSeries out(n, order, kind);
    if (!j.contains("entries")) return out;
    if (!j.at("entries").is_array()) throw ConfigError("costs: \"entries\" must be an array");
    for (const auto& t : j.at("entries")) {
        if (!t.is_object()) throw ConfigError("costs: each entry must be an object");
        for (const auto& [key, value] : t.items())
            if (key != "i" && key != "beta" && key != "value" && key != "modes")
                throw ConfigError("costs: unknown entry key \"" + key + "\"");
        if (!t.contains("i") || !t.contains("beta"))
            throw ConfigError("costs: entries need \"i\" and \"beta\"");
        int i = t.at("i").get<int>() - 1;
        if (i < 0 || i >= n) throw ConfigError("costs: entry population index out of range");
        if (kind == CostKind::shared && i != 0)
            throw ConfigError("costs: shared series store one entry set; use i = 1");
        MultiIndex beta = t.at("beta").get<MultiIndex>();
        if (static_cast<int>(beta.size()) != n)
            throw ConfigError("costs: \"beta\" must have length n");
        int s = order_of(beta);
        if (s < 1 || s > order)
            throw ConfigError("costs: entry order outside declared range");
        if (out.find(i, beta) != nullptr)
            throw ConfigError("costs: duplicate entry for one (i, beta)");
        CostCoefficient c;
        if (t.contains("value") && t.contains("modes"))
            throw ConfigError("costs: give \"value\" or \"modes\", not both");
        if (t.contains("value")) {
            c = constant_coefficient(cplx(t.at("value").get<double>(), 0.0));
        } else if (t.contains("modes")) {
            for (const auto& m : t.at("modes")) {
                if (!m.is_object() || !m.contains("xi"))
                    throw ConfigError("costs: each mode needs \"xi\"");
                c.add_mode(xi_from_json(m.at("xi"), d),
                           cplx(m.value("re", 0.0), m.value("im", 0.0)));
            }
        } else {
            throw ConfigError("costs: entries need \"value\" or \"modes\"");
        }
        try {
            out.set(i, beta, std::move(c));
        } catch (const MfgError& e) {
            throw ConfigError(e.what());
        }
    }
    return out;
}

}  // namespace mfg
