#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <random>

#include "mfglab/grid.hpp"

using namespace mfg;

namespace {

TorusGrid grid1d(int N = 64, double T = 0.1, int Nt = 64) {
    TorusGrid g;
    g.d = 1;
    g.N = N;
    g.T = T;
    g.Nt = Nt;
    return g;
}

SpaceField random_trig_poly(const TorusGrid& g, int kmax, unsigned seed) {
    std::mt19937 rng(seed);
    std::uniform_real_distribution<double> dist(-1.0, 1.0);
    Spectrum s(g);
    for (long p = 0; p < s.size(); ++p) {
        IVec3 xi = g.freqs_of(p);
        bool keep = true;
        for (int j = 0; j < g.d; ++j)
            if (std::abs(xi[static_cast<size_t>(j)]) > kmax) keep = false;
        if (keep) s.c[static_cast<size_t>(p)] = cplx(dist(rng), dist(rng));
    }
    return synthesize(s);
}

}  // namespace

TEST_CASE("frequency/bin mapping") {
    TorusGrid g = grid1d(8);
    int expected[8] = {0, 1, 2, 3, -4, -3, -2, -1};
    for (int b = 0; b < 8; ++b) CHECK(g.freq(b) == expected[b]);
    for (int xi = -4; xi < 4; ++xi) CHECK(g.freq(g.bin(xi)) == xi);
    CHECK(g.flat_of(IVec3{-1, 0, 0}) == 7);
}

TEST_CASE("sample positions") {
    TorusGrid g = grid1d(4);
    SpaceField f = sample(g, [](const DVec3& x) { return cplx(x[0], 0.0); });
    CHECK(f.v[0].real() == doctest::Approx(0.0));
    CHECK(f.v[1].real() == doctest::Approx(0.25));
    CHECK(f.v[2].real() == doctest::Approx(0.5));
    CHECK(f.v[3].real() == doctest::Approx(0.75));
}

TEST_CASE("analyze of cosine gives half-weight pair") {
    TorusGrid g = grid1d();
    SpaceField f = sample(g, [](const DVec3& x) { return cplx(std::cos(kTwoPi * x[0]), 0.0); });
    Spectrum s = analyze(f);
    CHECK(std::abs(s.c[static_cast<size_t>(g.flat_of(IVec3{1, 0, 0}))] - 0.5) < 1e-13);
    CHECK(std::abs(s.c[static_cast<size_t>(g.flat_of(IVec3{-1, 0, 0}))] - 0.5) < 1e-13);
    CHECK(std::abs(s.c[0]) < 1e-14);
    CHECK(std::abs(s.c[static_cast<size_t>(g.flat_of(IVec3{2, 0, 0}))]) < 1e-14);
}

TEST_CASE("transform round trip and Parseval") {
    for (int d = 1; d <= 2; ++d) {
        TorusGrid g = grid1d(d == 1 ? 64 : 32);
        g.d = d;
        SpaceField f = random_trig_poly(g, 5, 1234u + static_cast<unsigned>(d));
        SpaceField back = synthesize(analyze(f));
        double err = 0.0;
        for (size_t p = 0; p < f.v.size(); ++p) err = std::max(err, std::abs(f.v[p] - back.v[p]));
        CHECK(err < 1e-12);

        Spectrum s = analyze(f);
        double coef_energy = 0.0;
        for (const auto& c : s.c) coef_energy += std::norm(c);
        CHECK(std::abs(coef_energy - mean_sq(f)) < 1e-10 * (1.0 + coef_energy));
    }
}

TEST_CASE("gradient is exact on trig polynomials") {
    TorusGrid g = grid1d();
    SpaceField f = sample(g, [](const DVec3& x) { return cplx(std::sin(kTwoPi * x[0]), 0.0); });
    auto grad = gradient(f);
    REQUIRE(grad.size() == 1);
    SpaceField expect =
        sample(g, [](const DVec3& x) { return cplx(kTwoPi * std::cos(kTwoPi * x[0]), 0.0); });
    CHECK(max_abs(sub(grad[0], expect)) < 1e-10);
}

TEST_CASE("divergence integrates to zero") {
    TorusGrid g = grid1d();
    g.d = 2;
    g.N = 32;
    SpaceField a = random_trig_poly(g, 6, 77u);
    SpaceField b = random_trig_poly(g, 6, 78u);
    SpaceField div = divergence({a, b});
    CHECK(std::abs(integral(div)) < 1e-13);
}

TEST_CASE("laplacian multiplier on a single mode") {
    TorusGrid g = grid1d();
    g.d = 2;
    g.N = 32;
    IVec3 xi{3, -2, 0};
    SpaceField f = fourier_mode(g, xi);
    SpaceField lap = laplacian(f);
    double factor = -4.0 * kPi * kPi * 13.0;
    SpaceField expect = f;
    scale(expect, factor);
    CHECK(max_abs(sub(lap, expect)) < 1e-8);
}

TEST_CASE("heat propagator decay factor") {
    TorusGrid g = grid1d();
    SpaceField f = fourier_mode(g, IVec3{1, 0, 0});
    SpaceField h = heat_propagate(f, 0.05);
    // exp(-4*pi^2*0.05), 15 digits
    double factor = 0.138911133142800;
    CHECK(std::abs(mode(h, IVec3{1, 0, 0}) - factor) < 1e-13);
    CHECK(std::abs(mode(h, IVec3{0, 0, 0})) < 1e-14);
}

TEST_CASE("time trapezoid quadrature") {
    TorusGrid g = grid1d(64, 0.1, 64);
    std::vector<double> lin(static_cast<size_t>(g.Nt) + 1);
    for (int k = 0; k <= g.Nt; ++k) lin[static_cast<size_t>(k)] = g.tk(k);
    CHECK(std::abs(time_trapz(lin, g.dt()) - 0.005) < 1e-15);

    std::vector<double> expd(static_cast<size_t>(g.Nt) + 1);
    for (int k = 0; k <= g.Nt; ++k) expd[static_cast<size_t>(k)] = std::exp(-8.0 * kPi * kPi * g.tk(k));
    // integral_0^0.1 exp(-8 pi^2 t) dt, 15 digits; trapezoid on 64 steps
    // carries O(dt^2) error of about 1.6e-5
    double exact = 0.0126604321215705;
    CHECK(std::abs(time_trapz(expd, g.dt()) - exact) < 5e-5);
}

TEST_CASE("mode extraction") {
    TorusGrid g = grid1d();
    Spectrum s(g);
    s.c[static_cast<size_t>(g.flat_of(IVec3{3, 0, 0}))] = cplx(2.5, -0.5);
    SpaceField f = synthesize(s);
    CHECK(std::abs(mode(f, IVec3{3, 0, 0}) - cplx(2.5, -0.5)) < 1e-13);
    CHECK(std::abs(mode(f, IVec3{2, 0, 0})) < 1e-13);
}

TEST_CASE("field file round trip") {
    TorusGrid g = grid1d(16, 0.25, 8);
    SpaceTimeField f(g);
    std::mt19937 rng(99u);
    std::uniform_real_distribution<double> dist(-2.0, 2.0);
    for (auto& level : f.levels)
        for (auto& x : level.v) x = cplx(dist(rng), dist(rng));

    std::string path = "test_grid_roundtrip.field";
    write_field(path, "u", f);
    std::string kind;
    SpaceTimeField back = read_space_time_field(path, &kind);
    CHECK(kind == "u");
    CHECK(back.grid == g);
    for (int k = 0; k <= g.Nt; ++k)
        for (long p = 0; p < g.points(); ++p)
            CHECK(back.at(k).v[static_cast<size_t>(p)] == f.at(k).v[static_cast<size_t>(p)]);
    std::remove(path.c_str());
}

TEST_CASE("field file rejects corrupt header") {
    std::string path = "test_grid_corrupt.field";
    {
        std::ofstream out(path, std::ios::binary);
        out << "{\"format\":\"something-else\"}\n";
    }
    CHECK_THROWS_AS(read_space_field(path), ConfigError);
    std::remove(path.c_str());
}

TEST_CASE("grid validation") {
    TorusGrid g = grid1d();
    g.N = 63;
    CHECK_THROWS_AS(g.validate(), ConfigError);
    g.N = 64;
    g.d = 4;
    CHECK_THROWS_AS(g.validate(), ConfigError);
    g.d = 1;
    g.Nt = 0;
    CHECK_THROWS_AS(g.validate(), ConfigError);
}

TEST_CASE("space-time integral and propagator guard") {
    TorusGrid g;
    g.d = 1;
    g.N = 16;
    g.T = 0.1;
    g.Nt = 200;
    g.validate();

    // f(t,x) = exp(-8 pi^2 t) * (1 + cos(2 pi x)); the cosine integrates away.
    SpaceTimeField f(g);
    for (int k = 0; k <= g.Nt; ++k) {
        double a = std::exp(-8.0 * kPi * kPi * g.tk(k));
        f.at(k) = sample(g, [&](const DVec3& x) {
            return cplx(a * (1.0 + std::cos(kTwoPi * x[0])), 0.0);
        });
    }
    // Trapezoid in time; exact value 0.0126604321215705 with O(dt^2) error
    // (dt^2/12) a^2 integral = 1.6e-6 for a = 8 pi^2, dt = 5e-4.
    CHECK(std::abs(integrate(f) - cplx(0.0126604321215705, 0.0)) < 4e-6);

    CHECK_THROWS_AS(heat_propagate(f.at(0), -0.01), ConfigError);
}
