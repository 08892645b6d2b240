#pragma once

#include <map>
#include <utility>
#include <vector>

#include <json.hpp>

#include "mfglab/grid.hpp"

namespace mfg {

// Multi-index over the populations, length n, entries >= 0.
using MultiIndex = std::vector<int>;

int order_of(const MultiIndex& beta);
double factorial(int k);
double multi_factorial(const MultiIndex& beta);  // product of entrywise factorials

// beta = sum of unit vectors e_k for the listed populations (0-based, repeats
// allowed). A coefficient addressed by a tuple (k_1..k_s) is the coefficient
// of the multi-index built this way; no extra combinatorial factor applies.
MultiIndex beta_from_tuple(int n, const std::vector<int>& pops);

// All multi-indices with min_order <= |beta| <= max_order, lexicographic.
std::vector<MultiIndex> enumerate_multi_indices(int n, int min_order, int max_order);

// Structural class of a cost series.
//   general:           one independent series per population
//   shared:            a single series served identically for every population
//   state_independent: every coefficient is a constant in x
enum class CostKind { general, shared, state_independent };

std::string kind_to_string(CostKind k);
CostKind kind_from_string(const std::string& s);

// One series coefficient: a sparse trig polynomial sum_xi amp * exp(2 pi i xi.x).
// A constant is the single-entry case xi = 0.
struct CostCoefficient {
    std::map<IVec3, cplx> modes;

    bool is_zero() const { return modes.empty(); }
    bool is_constant() const;
    cplx constant_value() const;  // throws unless is_constant() or is_zero()
    double linf_bound() const;    // sum of |amp|, an upper bound for sup|.|
    void add_mode(const IVec3& xi, cplx amp);
    SpaceField materialize(const TorusGrid& g) const;
};

CostCoefficient constant_coefficient(cplx value);

// Power series costs for n populations:
//   C_i(x, z) = sum_{1 <= |beta| <= order} c_{i,beta}(x) z^beta / beta!
// Used for both running costs (coupling F) and terminal costs (G). Missing
// coefficients are zero. Population indices are 0-based in this API; the JSON
// form uses 1-based indices to match the usual notation.
class CostSeries {
public:
    CostSeries() = default;
    CostSeries(int n, int order, CostKind kind = CostKind::general);

    int n() const { return n_; }
    int order() const { return order_; }
    CostKind kind() const { return kind_; }
    // Storage slot for population i: 0 for shared series, i otherwise.
    int storage_index(int i) const { return kind_ == CostKind::shared ? 0 : i; }

    void set(int i, const MultiIndex& beta, CostCoefficient c);
    void add_mode(int i, const MultiIndex& beta, const IVec3& xi, cplx amp);
    // Null when the coefficient is absent (i.e. zero).
    const CostCoefficient* find(int i, const MultiIndex& beta) const;
    CostCoefficient get(int i, const MultiIndex& beta) const;
    // Tuple access; pops are 0-based population indices, repeats allowed.
    CostCoefficient get_tuple(int i, const std::vector<int>& pops) const;

    bool all_constant() const;
    bool empty() const { return terms_.empty(); }
    // Copy with every term of |beta| > max_order removed.
    CostSeries truncated(int max_order) const;

    using Key = std::pair<int, MultiIndex>;
    const std::map<Key, CostCoefficient>& terms() const { return terms_; }

    // C_i(z) for a constant argument; requires all_constant().
    cplx eval_constant(int i, const std::vector<cplx>& z) const;

private:
    void check_key(int i, const MultiIndex& beta) const;
    int n_ = 0;
    int order_ = 0;
    CostKind kind_ = CostKind::general;
    std::map<Key, CostCoefficient> terms_;
};

// Largest coefficient-mode amplitude difference between two series, taken
// over the union of their terms and modes.
double max_coeff_diff(const CostSeries& a, const CostSeries& b);
double max_coeff_abs(const CostSeries& s);

// Coefficients materialized on a grid for repeated evaluation.
class BoundCosts {
public:
    BoundCosts(const CostSeries& series, const TorusGrid& grid);

    const CostSeries& series() const { return series_; }
    // C_i(x, z(x)) evaluated pointwise for argument fields z_0..z_{n-1}.
    SpaceField eval(int i, const std::vector<SpaceField>& z) const;
    // Materialized coefficient; null when zero.
    const SpaceField* field(int i, const MultiIndex& beta) const;

private:
    CostSeries series_;
    TorusGrid grid_;
    std::map<CostSeries::Key, SpaceField> fields_;
};

// Deterministic random cost pair (running, terminal) for round-trip studies.
// Coefficient modes are drawn in conjugate pairs so every coefficient is real
// on the grid. For state-independent plants the terminal series is left empty
// and, when ensure_coupling is set, the order-one coefficients of the first
// population are pushed away from zero.
struct PlantSpec {
    int n = 2;
    int S = 2;                   // series order
    int d = 1;
    CostKind kind = CostKind::general;
    int band = 2;                // max |xi|_inf of planted modes
    double magnitude = 0.1;      // scale of planted amplitudes
    unsigned long long seed = 1;
    bool ensure_coupling = true;
};

std::pair<CostSeries, CostSeries> make_planted(const PlantSpec& spec);

// JSON form:
//   {"n": 2, "S": 3, "kind": "general", "entries": [
//      {"i": 1, "beta": [1,0], "value": 0.8},
//      {"i": 2, "beta": [1,1], "modes": [{"xi": [1], "re": 0.2, "im": 0.0}]}]}
// "value" is shorthand for a constant; "xi" arrays have length d. "kind"
// defaults to "general"; shared series list entries under i = 1 only.
nlohmann::json costs_to_json(const CostSeries& s, int d);
CostSeries costs_from_json(const nlohmann::json& j, int d);

}  // namespace mfg
