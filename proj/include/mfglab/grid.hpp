#pragma once

#include <array>
#include <complex>
#include <string>
#include <vector>

#include "mfglab/errors.hpp"

namespace mfg {

using cplx = std::complex<double>;

inline constexpr double kPi = 3.141592653589793238462643383279502884;
inline constexpr double kTwoPi = 2.0 * kPi;

// Integer frequency vector, padded with zeros beyond the active dimension.
using IVec3 = std::array<int, 3>;
// Point on the torus, padded with zeros beyond the active dimension.
using DVec3 = std::array<double, 3>;

// Uniform grid on the unit torus [0,1)^d together with a uniform time grid
// on [0,T]. Space points are x_j = j/N per axis; time levels t_k = k*T/Nt.
struct TorusGrid {
    int d = 1;       // space dimension, 1..3
    int N = 64;      // points per axis, even, >= 4
    double T = 1.0;  // time horizon, > 0
    int Nt = 64;     // number of time steps, >= 1

    void validate() const;
    long points() const;  // N^d
    double dt() const { return T / Nt; }
    double tk(int k) const { return (T * k) / Nt; }

    // Signed frequency of an FFT bin along one axis.
    int freq(int bin) const { return bin < N / 2 ? bin : bin - N; }
    // FFT bin of a signed frequency in [-N/2, N/2).
    int bin(int xi) const { return xi >= 0 ? xi : xi + N; }

    // Decode a flat row-major spectral index into signed frequencies.
    IVec3 freqs_of(long flat) const;
    // Flat row-major index of a signed frequency vector.
    long flat_of(const IVec3& xi) const;
    // Decode a flat row-major point index into torus coordinates.
    DVec3 point_of(long flat) const;

    bool operator==(const TorusGrid&) const = default;
};

// Complex scalar field sampled on the space grid, row-major over axes.
struct SpaceField {
    TorusGrid grid;
    std::vector<cplx> v;

    SpaceField() = default;
    explicit SpaceField(const TorusGrid& g) : grid(g), v(g.points(), cplx{0.0, 0.0}) {}
    long size() const { return static_cast<long>(v.size()); }
};

// Fourier coefficients of a field, stored over FFT bins (row-major).
// Synthesis convention: f(x) = sum_xi c[bin(xi)] * exp(2*pi*i xi.x).
struct Spectrum {
    TorusGrid grid;
    std::vector<cplx> c;

    Spectrum() = default;
    explicit Spectrum(const TorusGrid& g) : grid(g), c(g.points(), cplx{0.0, 0.0}) {}
    long size() const { return static_cast<long>(c.size()); }
};

// Field sampled on every time level t_0..t_Nt.
struct SpaceTimeField {
    TorusGrid grid;
    std::vector<SpaceField> levels;

    SpaceTimeField() = default;
    explicit SpaceTimeField(const TorusGrid& g)
        : grid(g), levels(static_cast<size_t>(g.Nt) + 1, SpaceField(g)) {}
    SpaceField& at(int k) { return levels.at(static_cast<size_t>(k)); }
    const SpaceField& at(int k) const { return levels.at(static_cast<size_t>(k)); }
};

// ---- transforms -------------------------------------------------------------

Spectrum analyze(const SpaceField& f);
SpaceField synthesize(const Spectrum& s);

// ---- calculus (all spectral; Nyquist bins are dropped in derivatives) -------

std::vector<SpaceField> gradient(const SpaceField& f);
SpaceField divergence(const std::vector<SpaceField>& comps);
SpaceField laplacian(const SpaceField& f);

// e^{t*Laplacian} applied to f (t >= 0). Uses the full spectral multiplier.
SpaceField heat_propagate(const SpaceField& f, double t);

// Squared frequency magnitude |xi|^2 for a flat spectral index.
double xi_norm2(const TorusGrid& g, long flat);

// ---- reductions and point accessors -----------------------------------------

// Integral over the torus (volume one), i.e. the mean value.
cplx integral(const SpaceField& f);
// Space-time integral over [0,1)^d x [0,T]: trapezoid in time of integral().
cplx integrate(const SpaceTimeField& f);
// Fourier coefficient of exp(2*pi*i xi.x).
cplx mode(const SpaceField& f, const IVec3& xi);
// Mean of |f|^2; by Parseval this equals sum |c_xi|^2.
double mean_sq(const SpaceField& f);
double max_abs(const SpaceField& f);
double max_abs_imag(const SpaceField& f);

// ---- constructors -----------------------------------------------------------

SpaceField constant_field(const TorusGrid& g, cplx value);
// exp(2*pi*i xi.x)
SpaceField fourier_mode(const TorusGrid& g, const IVec3& xi);

template <class F>
SpaceField sample(const TorusGrid& g, F&& fn) {
    SpaceField out(g);
    for (long p = 0; p < out.size(); ++p) out.v[static_cast<size_t>(p)] = fn(g.point_of(p));
    return out;
}

// ---- arithmetic -------------------------------------------------------------

void axpy(cplx alpha, const SpaceField& x, SpaceField& y);  // y += alpha*x
void scale(SpaceField& x, cplx alpha);
SpaceField multiply(const SpaceField& a, const SpaceField& b);  // pointwise
// Product evaluated on a 3/2-padded grid and truncated back; removes the
// aliasing a plain pointwise product introduces in quadratic terms.
SpaceField multiply_dealias(const SpaceField& a, const SpaceField& b);
SpaceField add(const SpaceField& a, const SpaceField& b);
SpaceField sub(const SpaceField& a, const SpaceField& b);

// ---- time quadrature --------------------------------------------------------

// Composite trapezoid over the grid's time levels.
cplx time_trapz(const std::vector<cplx>& samples, double dt);
double time_trapz(const std::vector<double>& samples, double dt);

// ---- serialization (field_io.cpp) -------------------------------------------
// On-disk format: one JSON header line, '\n', then the payload as
// little-endian float64 pairs (re, im), time-major then row-major in space.

void write_field(const std::string& path, const std::string& kind, const SpaceTimeField& f);
SpaceTimeField read_space_time_field(const std::string& path, std::string* kind = nullptr);
void write_field(const std::string& path, const std::string& kind, const SpaceField& f);
SpaceField read_space_field(const std::string& path, std::string* kind = nullptr);

}  // namespace mfg
