#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <complex>
#include <set>
#include <sstream>
#include <vector>

#include "mfglab/costs.hpp"
#include "mfglab/heatlib.hpp"
#include "mfglab/invert.hpp"

using namespace mfg;

namespace {

TorusGrid grid1d(int N, int Nt, double T) {
    TorusGrid g;
    g.d = 1;
    g.N = N;
    g.Nt = Nt;
    g.T = T;
    return g;
}

// Largest amplitude gap between population pa of series a and population pb
// of series b, over the union of their modes, so shared and general storage
// can be compared.
double coeff_gap(const CostSeries& a, int pa, const CostSeries& b, int pb) {
    double worst = 0.0;
    for (const MultiIndex& beta : enumerate_multi_indices(a.n(), 1, a.order())) {
        const CostCoefficient* ca = a.find(pa, beta);
        const CostCoefficient* cb = b.find(pb, beta);
        std::set<IVec3> freqs;
        if (ca)
            for (const auto& m : ca->modes) freqs.insert(m.first);
        if (cb)
            for (const auto& m : cb->modes) freqs.insert(m.first);
        for (const IVec3& xi : freqs) {
            cplx va{0.0, 0.0}, vb{0.0, 0.0};
            if (ca) {
                auto it = ca->modes.find(xi);
                if (it != ca->modes.end()) va = it->second;
            }
            if (cb) {
                auto it = cb->modes.find(xi);
                if (it != cb->modes.end()) vb = it->second;
            }
            worst = std::max(worst, std::abs(va - vb));
        }
    }
    return worst;
}

}  // namespace

TEST_CASE("frequency splits follow the deterministic rule") {
    const Decomposition d0 = pick_decomposition({0, 0, 0}, 1);
    CHECK(d0.xi1 == IVec3{-1, 0, 0});
    CHECK(d0.xi2 == IVec3{1, 0, 0});
    CHECK(d0.sigma == doctest::Approx(2.0));
    CHECK(d0.xi1p == IVec3{-2, 0, 0});
    CHECK(d0.xi2p == IVec3{2, 0, 0});
    CHECK(d0.sigma_p == doctest::Approx(8.0));

    const Decomposition d3 = pick_decomposition({3, 0, 0}, 1);
    CHECK(d3.xi1 == IVec3{-1, 0, 0});
    CHECK(d3.xi2 == IVec3{4, 0, 0});
    CHECK(d3.sigma == doctest::Approx(17.0));
    CHECK(d3.xi1p == IVec3{-2, 0, 0});
    CHECK(d3.xi2p == IVec3{5, 0, 0});
    CHECK(d3.sigma_p == doctest::Approx(29.0));

    CHECK_THROWS_AS(pick_decomposition({0, 2, 0}, 1), ConfigError);
    CHECK_THROWS_AS(pick_decomposition({0, 0, 0}, 4), ConfigError);
}

TEST_CASE("frequency splits stay valid over the full sweep") {
    const double T = 0.1;
    for (int d = 1; d <= 2; ++d) {
        std::vector<IVec3> cube;
        for (int a = -8; a <= 8; ++a) {
            if (d == 1) {
                cube.push_back({a, 0, 0});
            } else {
                for (int b = -8; b <= 8; ++b) cube.push_back({a, b, 0});
            }
        }
        for (const IVec3& xi : cube) {
            const Decomposition dec = pick_decomposition(xi, d);
            CHECK(dec.xi1 != IVec3{0, 0, 0});
            CHECK(dec.xi2 != IVec3{0, 0, 0});
            CHECK(dec.xi1p != IVec3{0, 0, 0});
            CHECK(dec.xi2p != IVec3{0, 0, 0});
            for (size_t a = 0; a < 3; ++a) {
                CHECK(dec.xi1[a] + dec.xi2[a] == xi[a]);
                CHECK(dec.xi1p[a] + dec.xi2p[a] == xi[a]);
            }
            CHECK(dec.sigma_p > dec.sigma);
            // Normalized determinant of the running/terminal weight system.
            // Dividing the raw determinant by c(sigma) E(sigma) > 0 keeps it
            // representable at every swept frequency; the E ratio is written
            // via the exponent difference since both factors underflow alone.
            const double E_ratio =
                std::exp(-4.0 * M_PI * M_PI * (dec.sigma_p - dec.sigma) * T);
            const double det_scaled = E_ratio - weight_c(dec.sigma_p, T) / weight_c(dec.sigma, T);
            CHECK(det_scaled < 0.0);
        }
    }
}

TEST_CASE("offset elimination inverts the offset monomials") {
    // One slot, offsets {1,2}: rows r_t = c0 + c1 M_t, so c0 = 2 r_1 - r_2.
    const std::vector<cplx> rows1 = {cplx(3.0, 1.0), cplx(5.0, 1.5)};
    const auto c1 = offset_elimination({{1.0, 2.0}}, rows1);
    CHECK(std::abs(c1[0] - (2.0 * rows1[0] - rows1[1])) < 1e-12);

    // Two slots: plant known monomial coefficients and read them back.
    const std::vector<std::vector<double>> offs = {{1.0, 2.0}, {1.0, 2.0}};
    const std::vector<cplx> truth = {cplx(0.7, -0.2), cplx(-1.1, 0.4), cplx(0.3, 0.0),
                                     cplx(2.0, -1.0)};
    std::vector<cplx> rows(4);
    for (int t = 0; t < 4; ++t) {
        const double M0 = offs[0][static_cast<size_t>(t & 1)];
        const double M1 = offs[1][static_cast<size_t>((t >> 1) & 1)];
        rows[static_cast<size_t>(t)] =
            truth[0] + truth[1] * M0 + truth[2] * M1 + truth[3] * M0 * M1;
    }
    const auto c2 = offset_elimination(offs, rows);
    for (int k = 0; k < 4; ++k)
        CHECK(std::abs(c2[static_cast<size_t>(k)] - truth[static_cast<size_t>(k)]) < 1e-12);

    // Three-offset slot with a quadratic monomial.
    const std::vector<double> o3 = {1.0, 2.0, 3.0};
    std::vector<cplx> rows3(3);
    for (int t = 0; t < 3; ++t)
        rows3[static_cast<size_t>(t)] =
            cplx(1.0, 0.0) + 2.0 * o3[static_cast<size_t>(t)] - 0.5 * o3[static_cast<size_t>(t)] * o3[static_cast<size_t>(t)];
    const auto c3 = offset_elimination({o3}, rows3);
    CHECK(std::abs(c3[0] - cplx(1.0, 0.0)) < 1e-12);
    CHECK(std::abs(c3[1] - cplx(2.0, 0.0)) < 1e-12);
    CHECK(std::abs(c3[2] - cplx(-0.5, 0.0)) < 1e-12);

    CHECK_THROWS_AS(offset_elimination({{1.0, 1.0}}, rows1), ConfigError);
    CHECK_THROWS_AS(offset_elimination({{1.0, 2.0}}, rows3), ConfigError);
    CHECK_THROWS_AS(offset_elimination({}, rows1), ConfigError);
}

TEST_CASE("the cyclic system solves in closed form") {
    const std::vector<cplx> y = {cplx(5.0, 0.0), cplx(3.0, 0.0), cplx(4.0, 0.0)};
    const auto X = cyclic_solve(y);
    CHECK(std::abs(X[0] - cplx(1.0, 0.0)) < 1e-14);
    CHECK(std::abs(X[1] - cplx(3.0, 0.0)) < 1e-14);
    CHECK(std::abs(X[2] - cplx(2.0, 0.0)) < 1e-14);
    // Two equations swap the entries.
    const auto X2 = cyclic_solve({cplx(2.0, 1.0), cplx(-1.0, 0.5)});
    CHECK(std::abs(X2[0] - cplx(-1.0, 0.5)) < 1e-14);
    CHECK(std::abs(X2[1] - cplx(2.0, 1.0)) < 1e-14);
    CHECK_THROWS_AS(cyclic_solve({cplx(1.0, 0.0)}), std::invalid_argument);
}

TEST_CASE("a zero plant reconstructs to zero") {
    const TorusGrid g = grid1d(32, 40, 0.1);
    const CostSeries F(2, 2, CostKind::general), G(2, 2, CostKind::general);
    ExactTraceSource src(g, F, G);
    const ReconstructionReport rep = recon_full(src, 2, 1, &F, &G);
    CHECK(max_coeff_abs(rep.running) <= 1e-8);
    CHECK(max_coeff_abs(rep.terminal) <= 1e-8);
    CHECK(rep.worst_condition() <= 1e8);
    CHECK(rep.probe_count > 0);
}

TEST_CASE("a single planted coefficient comes back alone") {
    const TorusGrid g = grid1d(32, 40, 0.01);
    CostSeries F(2, 1, CostKind::general), G(2, 1, CostKind::general);
    // F_1 coefficient of z_1 is cos(2 pi x).
    F.add_mode(0, {1, 0}, {1, 0, 0}, cplx(0.5, 0.0));
    F.add_mode(0, {1, 0}, {-1, 0, 0}, cplx(0.5, 0.0));
    ExactTraceSource src(g, F, G);
    const ReconstructionReport rep = recon_full(src, 1, 1, &F, &G);
    CHECK(std::abs(rep.running.get(0, {1, 0}).modes.at({1, 0, 0}) - cplx(0.5, 0.0)) < 1e-8);
    CHECK(std::abs(rep.running.get(0, {1, 0}).modes.at({-1, 0, 0}) - cplx(0.5, 0.0)) < 1e-8);
    CHECK(coeff_gap(rep.running, 0, F, 0) < 1e-8);
    CHECK(coeff_gap(rep.running, 1, F, 1) < 1e-8);
    CHECK(max_coeff_abs(rep.terminal) < 1e-8);
}

TEST_CASE("general costs round trip through exact traces") {
    const TorusGrid g = grid1d(32, 40, 0.005);
    PlantSpec spec;
    spec.n = 2;
    spec.S = 2;
    spec.band = 1;
    spec.seed = 7;
    auto [F, G] = make_planted(spec);
    ExactTraceSource src(g, F, G);
    const ReconstructionReport rep = recon_full(src, 2, 1, &F, &G);
    CHECK(rep.max_rel_error(false) <= 1e-8);
    CHECK(rep.max_rel_error(true) <= 1e-6);
    CHECK(rep.worst_condition() <= 1e8);
    CHECK(!rep.rows.empty());

    // The condition guard is honored when tightened to an impossible value.
    ExactTraceSource src2(g, F, G);
    CHECK_THROWS_AS(recon_full(src2, 2, 1, &F, &G, 1.0), ConditioningError);
}

TEST_CASE("a plant with only second-order terms skips cleanly through stage one") {
    const TorusGrid g = grid1d(32, 40, 0.005);
    CostSeries F(2, 2, CostKind::general), G(2, 2, CostKind::general);
    F.add_mode(0, {1, 1}, {1, 0, 0}, cplx(0.3, 0.1));
    F.add_mode(0, {1, 1}, {-1, 0, 0}, cplx(0.3, -0.1));
    F.add_mode(1, {0, 2}, {0, 0, 0}, cplx(-0.4, 0.0));
    G.add_mode(1, {2, 0}, {1, 0, 0}, cplx(0.2, 0.0));
    G.add_mode(1, {2, 0}, {-1, 0, 0}, cplx(0.2, 0.0));
    ExactTraceSource src(g, F, G);
    const ReconstructionReport rep = recon_full(src, 2, 1, &F, &G);
    // First-order coefficients are recovered as (numerical) zeros.
    for (const MultiIndex& beta : enumerate_multi_indices(2, 1, 1)) {
        for (int i = 0; i < 2; ++i) {
            const CostCoefficient* c = rep.running.find(i, beta);
            REQUIRE(c != nullptr);
            CHECK(c->linf_bound() < 1e-9);
        }
    }
    CHECK(rep.max_rel_error(false) <= 1e-8);
    CHECK(rep.max_rel_error(true) <= 1e-6);
}

TEST_CASE("shared costs reconstruct from one population and match the full engine") {
    const TorusGrid g = grid1d(32, 40, 0.005);
    PlantSpec spec;
    spec.n = 2;
    spec.S = 2;
    spec.band = 1;
    spec.kind = CostKind::shared;
    spec.seed = 11;
    auto [F, G] = make_planted(spec);
    ExactTraceSource src_single(g, F, G);
    const ReconstructionReport shared_rep = recon_shared(src_single, 2, 1, &F, &G);
    CHECK(shared_rep.max_rel_error(false) <= 1e-8);
    CHECK(shared_rep.max_rel_error(true) <= 1e-6);

    ExactTraceSource src_full(g, F, G);
    const ReconstructionReport full_rep = recon_full(src_full, 2, 1, &F, &G);
    // Both populations' independently recovered series agree with the shared
    // recovery coefficient by coefficient.
    for (int i = 0; i < 2; ++i)
        CHECK(coeff_gap(shared_rep.running, 0, full_rep.running, i) < 1e-8);
    for (int i = 0; i < 2; ++i)
        CHECK(coeff_gap(shared_rep.terminal, 0, full_rep.terminal, i) < 1e-6);
}

TEST_CASE("divided-difference traces feed the same reconstruction") {
    const TorusGrid g = grid1d(32, 120, 0.005);
    PlantSpec spec;
    spec.n = 2;
    spec.S = 2;
    spec.band = 1;
    spec.seed = 3;
    auto [F, G] = make_planted(spec);
    FdTraceSource src(g, F, G);
    const ReconstructionReport rep = recon_full(src, 2, 1, &F, &G);
    CHECK(rep.max_rel_error(false) <= 1e-3);
    CHECK(rep.worst_condition() <= 1e8);
}

TEST_CASE("constant probing recovers a linear state-independent cost exactly") {
    const TorusGrid g = grid1d(8, 50, 1.0);
    CostSeries F(2, 1, CostKind::state_independent), G(2, 1, CostKind::state_independent);
    F.set(0, {1, 0}, constant_coefficient(cplx(1.0, 0.0)));
    F.set(0, {0, 1}, constant_coefficient(cplx(1.0, 0.0)));
    F.set(1, {1, 0}, constant_coefficient(cplx(0.7, 0.0)));
    F.set(1, {0, 1}, constant_coefficient(cplx(-0.4, 0.0)));
    ExactTraceSource src(g, F, G);
    // Closed form first: u_1(., 0) = T (c_1 + c_2).
    const SpaceField u0 = src.constant_measurement({cplx(0.3, 0.0), cplx(0.2, 0.0)});
    CHECK(std::abs(mode(u0, {0, 0, 0}) - cplx(0.5, 0.0)) < 1e-12);

    const ReconstructionReport rep = recon_stateless(src, 1, &F);
    CHECK(rep.max_rel_error(false) <= 1e-8);
    CHECK(!rep.stages_refused);
    CHECK(rep.diagnostic.empty());
    CHECK(std::abs(rep.running.get(0, {1, 0}).constant_value() - cplx(1.0, 0.0)) < 1e-10);
    CHECK(std::abs(rep.running.get(1, {0, 1}).constant_value() - cplx(-0.4, 0.0)) < 1e-8);
}

TEST_CASE("state-independent costs round trip over three populations") {
    const TorusGrid g = grid1d(8, 60, 0.5);
    PlantSpec spec;
    spec.n = 3;
    spec.S = 2;
    spec.kind = CostKind::state_independent;
    spec.magnitude = 0.8;
    spec.seed = 5;
    auto [F, G] = make_planted(spec);
    ExactTraceSource src(g, F, G);
    const ReconstructionReport rep = recon_stateless(src, 2, &F);
    CHECK(rep.max_rel_error(false) <= 1e-7);
    CHECK(!rep.stages_refused);
    CHECK(rep.worst_condition() <= 1e8);
}

TEST_CASE("a decoupled population stops the cross-population stages") {
    const TorusGrid g = grid1d(8, 60, 0.5);
    PlantSpec spec;
    spec.n = 3;
    spec.S = 2;
    spec.kind = CostKind::state_independent;
    spec.magnitude = 0.8;
    spec.seed = 9;
    auto [F, G] = make_planted(spec);
    F.set(0, {0, 1, 0}, constant_coefficient(cplx(0.0, 0.0)));
    ExactTraceSource src(g, F, G);
    const ReconstructionReport rep = recon_stateless(src, 2, &F);
    CHECK(rep.stages_refused);
    CHECK(rep.diagnostic.find("population 2") != std::string::npos);
    // Population 1's own series still comes back exactly.
    double worst = 0.0;
    for (const auto& row : rep.rows)
        if (row.population == 0) worst = std::max(worst, row.abs_err);
    CHECK(worst <= 1e-8);
    // No cross-population coefficient was produced.
    for (const MultiIndex& beta : enumerate_multi_indices(3, 1, 2)) {
        CHECK(rep.running.find(1, beta) == nullptr);
        CHECK(rep.running.find(2, beta) == nullptr);
    }
}

TEST_CASE("the state-independent engine is insensitive to the probe ladder") {
    const TorusGrid g = grid1d(16, 80, 0.5);
    PlantSpec spec;
    spec.n = 2;
    spec.S = 1;
    spec.kind = CostKind::state_independent;
    spec.magnitude = 0.5;
    spec.seed = 13;
    auto [F, G] = make_planted(spec);

    ExactTraceSource exact(g, F, G);
    const ReconstructionReport rep_exact = recon_stateless(exact, 1, &F);
    FdTraceSource fd_a(g, F, G, {1e-2, 5e-3});
    const ReconstructionReport rep_a = recon_stateless(fd_a, 1, &F);
    FdTraceSource fd_b(g, F, G, {1.5e-2, 7.5e-3});
    const ReconstructionReport rep_b = recon_stateless(fd_b, 1, &F);

    CHECK(rep_exact.max_rel_error(false) <= 1e-8);
    CHECK(rep_a.max_rel_error(false) <= 1e-5);
    CHECK(rep_b.max_rel_error(false) <= 1e-5);
    CHECK(max_coeff_diff(rep_a.running, rep_b.running) <= 2e-5);
}

TEST_CASE("reconstruction input validation") {
    const TorusGrid g = grid1d(16, 20, 0.1);
    const CostSeries F(2, 2, CostKind::general), G(2, 2, CostKind::general);
    ExactTraceSource src(g, F, G);
    CHECK_THROWS_AS(recon_full(src, 0, 1), ConfigError);
    CHECK_THROWS_AS(recon_full(src, 5, 1), ConfigError);
    CHECK_THROWS_AS(recon_full(src, 2, -1), ConfigError);
    CHECK_THROWS_AS(recon_full(src, 2, 4), ConfigError);  // needs N/2-1 >= 2*4+2*2-1
    CHECK_THROWS_AS(recon_stateless(src, 0), ConfigError);
    CHECK_THROWS_AS(recon_stateless(src, 4), ConfigError);
    CHECK_THROWS_AS(recon_stateless(src, 2, nullptr, -0.1), ConfigError);
    CHECK_THROWS_AS(src.constant_measurement({cplx(0.1, 0.0)}), ConfigError);
    CHECK_THROWS_AS(src.derivative_traces({}), ConfigError);
    ModeProbe bad;
    bad.population = 7;
    CHECK_THROWS_AS(src.derivative_traces({bad}), ConfigError);

    const CostSeries F3(3, 2, CostKind::general);
    CHECK_THROWS_AS(recon_full(src, 2, 1, &F3, nullptr), ConfigError);
}

TEST_CASE("reports serialize to JSON and CSV") {
    const TorusGrid g = grid1d(32, 40, 0.01);
    CostSeries F(2, 1, CostKind::general), G(2, 1, CostKind::general);
    F.add_mode(0, {1, 0}, {1, 0, 0}, cplx(0.5, 0.0));
    F.add_mode(0, {1, 0}, {-1, 0, 0}, cplx(0.5, 0.0));
    ExactTraceSource src(g, F, G);
    const ReconstructionReport rep = recon_full(src, 1, 1, &F, &G);

    const nlohmann::json j = report_to_json(rep, 1);
    CHECK(j.contains("running"));
    CHECK(j.contains("terminal"));
    CHECK(j.contains("rows"));
    CHECK(j["rows"].size() == rep.rows.size());
    CHECK(j["stages_refused"].get<bool>() == false);
    CHECK(j["probe_count"].get<long>() == rep.probe_count);
    CHECK(j["worst_condition"].get<double>() == doctest::Approx(rep.worst_condition()));

    std::ostringstream os;
    write_report_csv(os, rep, 1);
    const std::string csv = os.str();
    size_t lines = 0;
    for (char ch : csv)
        if (ch == '\n') ++lines;
    CHECK(lines == rep.rows.size() + 1);
    CHECK(csv.rfind("population,beta,xi,part,", 0) == 0);
}
