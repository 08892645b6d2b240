#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "mfglab/costs.hpp"

using namespace mfg;

namespace {

TorusGrid small_grid() {
    TorusGrid g;
    g.d = 1;
    g.N = 32;
    g.T = 0.1;
    g.Nt = 16;
    return g;
}

}  // namespace

TEST_CASE("multi-index enumeration") {
    auto idx = enumerate_multi_indices(2, 1, 2);
    std::vector<MultiIndex> expect = {{0, 1}, {0, 2}, {1, 0}, {1, 1}, {2, 0}};
    CHECK(idx == expect);
    CHECK(enumerate_multi_indices(3, 1, 4).size() == 34);
    CHECK(enumerate_multi_indices(1, 1, 4).size() == 4);
}

TEST_CASE("tuple to multi-index") {
    CHECK(beta_from_tuple(3, {0, 2, 0}) == MultiIndex{2, 0, 1});
    CHECK(beta_from_tuple(2, {1}) == MultiIndex{0, 1});
    CHECK_THROWS_AS(beta_from_tuple(2, {2}), MfgError);
}

TEST_CASE("factorials") {
    CHECK(factorial(0) == 1.0);
    CHECK(factorial(4) == 24.0);
    CHECK(multi_factorial({2, 0, 3}) == 12.0);
}

TEST_CASE("constant series evaluation") {
    CostSeries s(2, 2);
    s.set(0, {2, 0}, constant_coefficient(6.0));
    s.set(0, {0, 1}, constant_coefficient(cplx(0.5, 0.0)));
    // C_0(z) = 6 z0^2/2 + 0.5 z1
    cplx v = s.eval_constant(0, {cplx(2.0, 0.0), cplx(4.0, 0.0)});
    CHECK(std::abs(v - cplx(14.0, 0.0)) < 1e-14);
    CHECK(std::abs(s.eval_constant(1, {cplx(2.0, 0.0), cplx(4.0, 0.0)})) == 0.0);
}

TEST_CASE("bound evaluation with spatial coefficient") {
    TorusGrid g = small_grid();
    CostSeries s(1, 2);
    // c_{(1)}(x) = cos(2 pi x)
    s.add_mode(0, {1}, IVec3{1, 0, 0}, 0.5);
    s.add_mode(0, {1}, IVec3{-1, 0, 0}, 0.5);
    s.set(0, {2}, constant_coefficient(2.0));
    BoundCosts bound(s, g);
    SpaceField z = constant_field(g, cplx(3.0, 0.0));
    SpaceField out = bound.eval(0, {z});
    // 3 cos(2 pi x) + 2*9/2
    SpaceField expect = sample(g, [](const DVec3& x) {
        return cplx(3.0 * std::cos(kTwoPi * x[0]) + 9.0, 0.0);
    });
    CHECK(max_abs(sub(out, expect)) < 1e-12);
}

TEST_CASE("bound evaluation matches constant evaluation") {
    TorusGrid g = small_grid();
    CostSeries s(2, 3);
    s.set(0, {1, 0}, constant_coefficient(0.8));
    s.set(0, {1, 2}, constant_coefficient(-0.4));
    s.set(1, {0, 3}, constant_coefficient(1.1));
    BoundCosts bound(s, g);
    std::vector<cplx> z = {cplx(0.3, 0.0), cplx(-0.7, 0.0)};
    std::vector<SpaceField> zf = {constant_field(g, z[0]), constant_field(g, z[1])};
    for (int i = 0; i < 2; ++i) {
        cplx direct = s.eval_constant(i, z);
        cplx via_field = integral(bound.eval(i, zf));
        CHECK(std::abs(direct - via_field) < 1e-14);
    }
}

TEST_CASE("truncation drops high orders") {
    CostSeries s(1, 3);
    s.set(0, {1}, constant_coefficient(1.0));
    s.set(0, {2}, constant_coefficient(2.0));
    s.set(0, {3}, constant_coefficient(3.0));
    CostSeries t = s.truncated(2);
    CHECK(t.find(0, {1}) != nullptr);
    CHECK(t.find(0, {2}) != nullptr);
    CHECK(t.find(0, {3}) == nullptr);
}

TEST_CASE("series comparison") {
    CostSeries a(1, 2);
    a.set(0, {1}, constant_coefficient(1.0));
    CostSeries b(1, 2);
    b.set(0, {1}, constant_coefficient(1.25));
    b.add_mode(0, {2}, IVec3{1, 0, 0}, cplx(0.0, 0.1));
    CHECK(max_coeff_diff(a, b) == doctest::Approx(0.25));
    CHECK(max_coeff_diff(a, a) == 0.0);
    CHECK(max_coeff_abs(b) == doctest::Approx(1.25));
}

TEST_CASE("json round trip") {
    CostSeries s(2, 2);
    s.set(0, {1, 0}, constant_coefficient(0.8));
    s.add_mode(1, {1, 1}, IVec3{2, 0, 0}, cplx(0.25, -0.1));
    s.add_mode(1, {1, 1}, IVec3{-2, 0, 0}, cplx(0.25, 0.1));
    auto j = costs_to_json(s, 1);
    CostSeries back = costs_from_json(j, 1);
    CHECK(back.n() == 2);
    CHECK(back.order() == 2);
    CHECK(max_coeff_diff(s, back) == 0.0);
}

TEST_CASE("json validation") {
    using nlohmann::json;
    json base = {{"n", 1}, {"S", 2}, {"entries", json::array()}};

    json dup = base;
    dup["entries"] = {{{"i", 1}, {"beta", {1}}, {"value", 1.0}},
                    {{"i", 1}, {"beta", {1}}, {"value", 2.0}}};
    CHECK_THROWS_AS(costs_from_json(dup, 1), ConfigError);

    json badlen = base;
    badlen["entries"] = {{{"i", 1}, {"beta", {1, 0}}, {"value", 1.0}}};
    CHECK_THROWS_AS(costs_from_json(badlen, 1), ConfigError);

    json unknown = base;
    unknown["extra"] = 1;
    CHECK_THROWS_AS(costs_from_json(unknown, 1), ConfigError);

    json high = base;
    high["entries"] = {{{"i", 1}, {"beta", {3}}, {"value", 1.0}}};
    CHECK_THROWS_AS(costs_from_json(high, 1), ConfigError);

    json cap = {{"n", 1}, {"S", 5}, {"entries", json::array()}};
    CHECK_THROWS_AS(costs_from_json(cap, 1), ConfigError);
}

TEST_CASE("coefficient mode off-grid rejected") {
    TorusGrid g = small_grid();
    CostCoefficient c;
    c.add_mode(IVec3{16, 0, 0}, 1.0);  // N/2 is not representable
    CHECK_THROWS_AS(c.materialize(g), ConfigError);
    CostCoefficient c2;
    c2.add_mode(IVec3{0, 1, 0}, 1.0);  // second axis on a 1-d grid
    CHECK_THROWS_AS(c2.materialize(g), ConfigError);
}

TEST_CASE("shared kind serves one series for every population") {
    CostSeries s(3, 2, CostKind::shared);
    MultiIndex beta{1, 0, 0};
    s.set(0, beta, constant_coefficient(0.7));
    for (int i = 0; i < 3; ++i)
        CHECK(s.get(i, beta).constant_value() == cplx(0.7, 0.0));
    CHECK(s.terms().size() == 1);
    // Writing through any population index updates the same slot.
    s.set(2, beta, constant_coefficient(0.9));
    CHECK(s.get(0, beta).constant_value() == cplx(0.9, 0.0));
    CHECK(s.eval_constant(1, {cplx(2.0, 0.0), cplx(0.0, 0.0), cplx(0.0, 0.0)}) ==
          cplx(1.8, 0.0));
}

TEST_CASE("state-independent kind rejects spatial coefficients") {
    CostSeries s(1, 2, CostKind::state_independent);
    s.set(0, {1}, constant_coefficient(1.0));
    CHECK_THROWS_AS(s.add_mode(0, {1}, IVec3{1, 0, 0}, cplx(1.0, 0.0)), MfgError);
    CostCoefficient spatial;
    spatial.add_mode(IVec3{1, 0, 0}, cplx(1.0, 0.0));
    CHECK_THROWS_AS(s.set(0, {2}, spatial), MfgError);
}

TEST_CASE("planted costs are deterministic and real") {
    PlantSpec spec;
    spec.n = 2;
    spec.S = 2;
    spec.d = 1;
    spec.band = 2;
    spec.seed = 42;
    auto [f1, g1] = make_planted(spec);
    auto [f2, g2] = make_planted(spec);
    CHECK(max_coeff_diff(f1, f2) == 0.0);
    CHECK(max_coeff_diff(g1, g2) == 0.0);
    spec.seed = 43;
    auto [f3, g3] = make_planted(spec);
    CHECK(max_coeff_diff(f1, f3) > 0.0);

    // Conjugate symmetry makes every coefficient real on the grid.
    TorusGrid g = small_grid();
    for (const auto& [key, c] : f1.terms())
        CHECK(max_abs_imag(c.materialize(g)) < 1e-14);
    CHECK(f1.terms().size() == 10);  // 5 multi-indices per population
    CHECK(g1.terms().size() == 10);
}

TEST_CASE("state-independent plants keep first-population coupling alive") {
    PlantSpec spec;
    spec.n = 3;
    spec.S = 3;
    spec.kind = CostKind::state_independent;
    spec.seed = 7;
    auto [f, g] = make_planted(spec);
    CHECK(f.all_constant());
    CHECK(g.empty());
    for (int k = 0; k < 3; ++k) {
        MultiIndex beta{0, 0, 0};
        beta[static_cast<size_t>(k)] = 1;
        CHECK(std::abs(f.get(0, beta).constant_value()) >= 0.4 * spec.magnitude);
    }
}

TEST_CASE("kind survives the json round trip") {
    PlantSpec spec;
    spec.kind = CostKind::shared;
    auto [f, g] = make_planted(spec);
    auto j = costs_to_json(f, 1);
    CHECK(j.at("kind") == "shared");
    CostSeries back = costs_from_json(j, 1);
    CHECK(back.kind() == CostKind::shared);
    CHECK(max_coeff_diff(f, back) == 0.0);

    nlohmann::json bad = {{"n", 2}, {"S", 2}, {"kind", "shared"},
                          {"entries", {{{"i", 2}, {"beta", {1, 0}}, {"value", 1.0}}}}};
    CHECK_THROWS_AS(costs_from_json(bad, 1), ConfigError);
}
