#include "mfglab/grid.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <mutex>
#include <unordered_map>

namespace mfg {

void TorusGrid::validate() const {
    if (d < 1 || d > 3) throw ConfigError("grid: d must be 1, 2 or 3, got " + std::to_string(d));
    if (N < 4 || N % 2 != 0)
        throw ConfigError("grid: N must be even and >= 4, got " + std::to_string(N));
    if (!(T > 0.0)) throw ConfigError("grid: T must be positive");
    if (Nt < 1) throw ConfigError("grid: Nt must be >= 1, got " + std::to_string(Nt));
}

long TorusGrid::points() const {
    long n = 1;
    for (int j = 0; j < d; ++j) n *= N;
    return n;
}

IVec3 TorusGrid::freqs_of(long flat) const {
    IVec3 xi{0, 0, 0};
    for (int j = d - 1; j >= 0; --j) {
        xi[static_cast<size_t>(j)] = freq(static_cast<int>(flat % N));
        flat /= N;
    }
    return xi;
}

long TorusGrid::flat_of(const IVec3& xi) const {
    long flat = 0;
    for (int j = 0; j < d; ++j) flat = flat * N + bin(xi[static_cast<size_t>(j)]);
    return flat;
}

DVec3 TorusGrid::point_of(long flat) const {
    DVec3 x{0.0, 0.0, 0.0};
    for (int j = d - 1; j >= 0; --j) {
        x[static_cast<size_t>(j)] = static_cast<double>(flat % N) / N;
        flat /= N;
    }
    return x;
}

// ---- FFTW plan cache --------------------------------------------------------
// Plans are created once per (d, N, sign) with FFTW_ESTIMATE|FFTW_UNALIGNED and
// executed in place on caller buffers via fftw_execute_dft. FFTW plan creation
// is not thread safe, so the cache is mutex guarded.

namespace {

struct PlanKey {
    int d, N, sign;
    bool operator==(const PlanKey&) const = default;
};

struct PlanKeyHash {
    size_t operator()(const PlanKey& k) const {
        return std::hash<long>()((static_cast<long>(k.d) << 40) ^
                                 (static_cast<long>(k.N) << 8) ^ (k.sign & 0xff));
    }
};

fftw_plan cached_plan(int d, int N, int sign) {
    static std::mutex mu;
    static std::unordered_map<PlanKey, fftw_plan, PlanKeyHash> cache;
    std::lock_guard<std::mutex> lock(mu);
    PlanKey key{d, N, sign};
    auto it = cache.find(key);
    if (it != cache.end()) return it->second;
    long n = 1;
    for (int j = 0; j < d; ++j) n *= N;
    std::vector<cplx> scratch(static_cast<size_t>(n));
    int dims[3] = {N, N, N};
    fftw_plan p = fftw_plan_dft(d, dims, reinterpret_cast<fftw_complex*>(scratch.data()),
                                reinterpret_cast<fftw_complex*>(scratch.data()), sign,
                                FFTW_ESTIMATE | FFTW_UNALIGNED);
    if (p == nullptr) throw MfgError("fftw plan creation failed");
    cache.emplace(key, p);
    return p;
}

void execute_inplace(int d, int N, int sign, cplx* data) {
    fftw_plan p = cached_plan(d, N, sign);
    fftw_execute_dft(p, reinterpret_cast<fftw_complex*>(data),
                     reinterpret_cast<fftw_complex*>(data));
}

}  // namespace

Spectrum analyze(const SpaceField& f) {
    Spectrum out(f.grid);
    out.c = f.v;
    execute_inplace(f.grid.d, f.grid.N, FFTW_FORWARD, out.c.data());
    const double inv = 1.0 / static_cast<double>(f.grid.points());
    for (auto& c : out.c) c *= inv;
    return out;
}

SpaceField synthesize(const Spectrum& s) {
    SpaceField out(s.grid);
    out.v = s.c;
    execute_inplace(s.grid.d, s.grid.N, FFTW_BACKWARD, out.v.data());
    return out;
}

// ---- calculus ---------------------------------------------------------------

namespace {

// Per-axis derivative multipliers 2*pi*i*xi_j, with the Nyquist frequency
// -N/2 dropped so that first derivatives map real fields to real fields and
// divergence(gradient(.)) stays symmetric.
double deriv_freq(const TorusGrid& g, int bin) {
    int xi = g.freq(bin);
    if (xi == -g.N / 2) return 0.0;
    return static_cast<double>(xi);
}

}  // namespace

std::vector<SpaceField> gradient(const SpaceField& f) {
    const TorusGrid& g = f.grid;
    Spectrum base = analyze(f);
    std::vector<SpaceField> out;
    out.reserve(static_cast<size_t>(g.d));
    for (int axis = 0; axis < g.d; ++axis) {
        Spectrum comp(g);
        for (long p = 0; p < comp.size(); ++p) {
            long rest = p;
            int bin = 0;
            for (int j = g.d - 1; j >= axis; --j) {
                bin = static_cast<int>(rest % g.N);
                rest /= g.N;
            }
            cplx mult = cplx(0.0, kTwoPi * deriv_freq(g, bin));
            comp.c[static_cast<size_t>(p)] = mult * base.c[static_cast<size_t>(p)];
        }
        out.push_back(synthesize(comp));
    }
    return out;
}

SpaceField divergence(const std::vector<SpaceField>& comps) {
    if (comps.empty()) throw MfgError("divergence: empty component list");
    const TorusGrid& g = comps.front().grid;
    if (static_cast<int>(comps.size()) != g.d)
        throw MfgError("divergence: component count does not match dimension");
    Spectrum acc(g);
    for (int axis = 0; axis < g.d; ++axis) {
        Spectrum base = analyze(comps[static_cast<size_t>(axis)]);
        for (long p = 0; p < acc.size(); ++p) {
            long rest = p;
            int bin = 0;
            for (int j = g.d - 1; j >= axis; --j) {
                bin = static_cast<int>(rest % g.N);
                rest /= g.N;
            }
            cplx mult = cplx(0.0, kTwoPi * deriv_freq(g, bin));
            acc.c[static_cast<size_t>(p)] += mult * base.c[static_cast<size_t>(p)];
        }
    }
    return synthesize(acc);
}

SpaceField laplacian(const SpaceField& f) { return divergence(gradient(f)); }

double xi_norm2(const TorusGrid& g, long flat) {
    IVec3 xi = g.freqs_of(flat);
    double s = 0.0;
    for (int j = 0; j < g.d; ++j) {
        double x = xi[static_cast<size_t>(j)];
        s += x * x;
    }
    return s;
}

SpaceField heat_propagate(const SpaceField& f, double t) {
    if (t < 0.0) throw ConfigError("heat_propagate: negative time step " + std::to_string(t));
    Spectrum s = analyze(f);
    for (long p = 0; p < s.size(); ++p)
        s.c[static_cast<size_t>(p)] *= std::exp(-4.0 * kPi * kPi * xi_norm2(f.grid, p) * t);
    return synthesize(s);
}

// ---- reductions -------------------------------------------------------------

cplx integral(const SpaceField& f) {
    cplx sum{0.0, 0.0};
    for (const auto& x : f.v) sum += x;
    return sum / static_cast<double>(f.grid.points());
}

cplx integrate(const SpaceTimeField& f) {
    std::vector<cplx> per_level(f.levels.size());
    for (size_t k = 0; k < f.levels.size(); ++k) per_level[k] = integral(f.levels[k]);
    return time_trapz(per_level, f.grid.dt());
}

cplx mode(const SpaceField& f, const IVec3& xi) {
    // Direct projection onto exp(-2*pi*i xi.x); O(points) but avoids a full
    // transform when only a handful of modes are needed.
    const TorusGrid& g = f.grid;
    cplx sum{0.0, 0.0};
    for (long p = 0; p < f.size(); ++p) {
        DVec3 x = g.point_of(p);
        double phase = 0.0;
        for (int j = 0; j < g.d; ++j)
            phase += xi[static_cast<size_t>(j)] * x[static_cast<size_t>(j)];
        sum += f.v[static_cast<size_t>(p)] * std::exp(cplx(0.0, -kTwoPi * phase));
    }
    return sum / static_cast<double>(g.points());
}

double mean_sq(const SpaceField& f) {
    double s = 0.0;
    for (const auto& x : f.v) s += std::norm(x);
    return s / static_cast<double>(f.grid.points());
}

double max_abs(const SpaceField& f) {
    double s = 0.0;
    for (const auto& x : f.v) s = std::max(s, std::abs(x));
    return s;
}

double max_abs_imag(const SpaceField& f) {
    double s = 0.0;
    for (const auto& x : f.v) s = std::max(s, std::abs(x.imag()));
    return s;
}

// ---- constructors -----------------------------------------------------------

SpaceField constant_field(const TorusGrid& g, cplx value) {
    SpaceField out(g);
    for (auto& x : out.v) x = value;
    return out;
}

SpaceField fourier_mode(const TorusGrid& g, const IVec3& xi) {
    return sample(g, [&](const DVec3& x) {
        double phase = 0.0;
        for (int j = 0; j < g.d; ++j)
            phase += xi[static_cast<size_t>(j)] * x[static_cast<size_t>(j)];
        return std::exp(cplx(0.0, kTwoPi * phase));
    });
}

// ---- arithmetic -------------------------------------------------------------

void axpy(cplx alpha, const SpaceField& x, SpaceField& y) {
    if (x.size() != y.size()) throw MfgError("axpy: size mismatch");
    for (size_t p = 0; p < x.v.size(); ++p) y.v[p] += alpha * x.v[p];
}

void scale(SpaceField& x, cplx alpha) {
    for (auto& v : x.v) v *= alpha;
}

SpaceField multiply(const SpaceField& a, const SpaceField& b) {
    if (a.size() != b.size()) throw MfgError("multiply: size mismatch");
    SpaceField out = a;
    for (size_t p = 0; p < out.v.size(); ++p) out.v[p] *= b.v[p];
    return out;
}

SpaceField multiply_dealias(const SpaceField& a, const SpaceField& b) {
    const TorusGrid& g = a.grid;
    if (b.grid != g) throw MfgError("multiply_dealias: mismatched grids");
    TorusGrid gp = g;
    gp.N = 3 * g.N / 2;
    if (gp.N % 2 != 0) ++gp.N;

    auto pad = [&](const SpaceField& f) {
        Spectrum s = analyze(f);
        Spectrum sp(gp);
        for (long p = 0; p < s.size(); ++p) {
            IVec3 xi = g.freqs_of(p);
            bool keep = true;
            for (int j = 0; j < g.d; ++j)
                if (xi[static_cast<size_t>(j)] == -g.N / 2) keep = false;
            if (keep) sp.c[static_cast<size_t>(gp.flat_of(xi))] = s.c[static_cast<size_t>(p)];
        }
        return synthesize(sp);
    };

    Spectrum sp = analyze(multiply(pad(a), pad(b)));
    Spectrum out(g);
    for (long p = 0; p < out.size(); ++p) {
        IVec3 xi = g.freqs_of(p);
        bool keep = true;
        for (int j = 0; j < g.d; ++j)
            if (xi[static_cast<size_t>(j)] == -g.N / 2) keep = false;
        if (keep) out.c[static_cast<size_t>(p)] = sp.c[static_cast<size_t>(gp.flat_of(xi))];
    }
    return synthesize(out);
}

SpaceField add(const SpaceField& a, const SpaceField& b) {
    SpaceField out = a;
    axpy(cplx{1.0, 0.0}, b, out);
    return out;
}

SpaceField sub(const SpaceField& a, const SpaceField& b) {
    SpaceField out = a;
    axpy(cplx{-1.0, 0.0}, b, out);
    return out;
}

// ---- time quadrature --------------------------------------------------------

cplx time_trapz(const std::vector<cplx>& samples, double dt) {
    if (samples.size() < 2) throw MfgError("time_trapz: need at least two samples");
    cplx s = 0.5 * (samples.front() + samples.back());
    for (size_t k = 1; k + 1 < samples.size(); ++k) s += samples[k];
    return s * dt;
}

double time_trapz(const std::vector<double>& samples, double dt) {
    if (samples.size() < 2) throw MfgError("time_trapz: need at least two samples");
    double s = 0.5 * (samples.front() + samples.back());
    for (size_t k = 1; k + 1 < samples.size(); ++k) s += samples[k];
    return s * dt;
}

}  // namespace mfg
