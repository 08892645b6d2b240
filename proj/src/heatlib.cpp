#include "mfglab/heatlib.hpp"

#include <cmath>
#include <stdexcept>

namespace mfg {

double psi(double lambda, double t) { return std::exp(4.0 * kPi * kPi * lambda * t); }

SpaceField ModeProbe::realize(const TorusGrid& g) const {
    SpaceField f = fourier_mode(g, xi);
    for (auto& x : f.v) x += offset;
    return f;
}

namespace {

void check_time_window(double T, double t, const char* who) {
    if (T <= 0.0) throw std::invalid_argument(std::string(who) + ": need T > 0");
    if (t < 0.0 || t > T)
        throw std::invalid_argument(std::string(who) + ": need 0 <= t <= T");
}

}  // namespace

double kernel_H1(double xi_sq, double T, double t) {
    check_time_window(T, t, "kernel_H1");
    if (xi_sq <= 0.0) throw std::invalid_argument("kernel_H1: need |xi|^2 > 0");
    double b = 4.0 * kPi * kPi * xi_sq;
    // exp(-2bT) exp(bt) written as exp(b(t - 2T)) so large b cannot overflow.
    return 0.5 * (-std::exp(-b * t) + std::exp(b * (t - 2.0 * T)));
}

double kernel_H2(double xi_sq, double T, double t) {
    check_time_window(T, t, "kernel_H2");
    if (xi_sq <= 0.0) throw std::invalid_argument("kernel_H2: need |xi|^2 > 0");
    double b = 4.0 * kPi * kPi * xi_sq;
    return 0.5 * (-t * std::exp(-b * t) +
                  (std::exp(b * (t - 2.0 * T)) - std::exp(-b * (t + 2.0 * T))) / (2.0 * b));
}

double kernel_H2_alt(double xi_sq, double T, double t) {
    check_time_window(T, t, "kernel_H2_alt");
    if (xi_sq <= 0.0) throw std::invalid_argument("kernel_H2_alt: need |xi|^2 > 0");
    double b = 4.0 * kPi * kPi * xi_sq;
    return 0.5 * ((T - t) * std::exp(-b * t) +
                  (std::exp(b * (t - 2.0 * T)) - std::exp(-b * t)) / (2.0 * b));
}

double kernel_I2(double a, double T) {
    if (a <= 0.0) throw std::invalid_argument("kernel_I2: need a > 0");
    if (T <= 0.0) throw std::invalid_argument("kernel_I2: need T > 0");
    double u = a * T;
    if (u < 0.5) {
        // (exp(-2u) + 2u exp(-u) - 1) = sum_{k>=3} (-1)^k (2^k - 2k)/k! u^k;
        // the closed form cancels to roundoff for small u.
        double sum = 0.0;
        double u_pow = u;  // u^{k-2}
        double fact = 2.0;
        for (int k = 3; k <= 40; ++k) {
            fact *= k;
            double term = (k % 2 == 0 ? 1.0 : -1.0) * (std::pow(2.0, k) - 2.0 * k) / fact * u_pow;
            sum += term;
            u_pow *= u;
            if (std::abs(term) < 1e-18 * std::abs(sum)) break;
        }
        return 0.5 * T * T * sum;
    }
    return (std::exp(-2.0 * u) + 2.0 * u * std::exp(-u) - 1.0) / (2.0 * a * a);
}

double kernel_J(double a, double T) {
    if (a < 0.0) throw std::invalid_argument("kernel_J: need a >= 0");
    if (T <= 0.0) throw std::invalid_argument("kernel_J: need T > 0");
    if (a == 0.0) return T;
    return -std::expm1(-a * T) / a;
}

double I2_alt_reference(double a, double T) {
    if (a <= 0.0) throw std::invalid_argument("I2_alt_reference: need a > 0");
    if (T <= 0.0) throw std::invalid_argument("I2_alt_reference: need T > 0");
    double u = a * T;
    if (u < 0.5) {
        // u(1 + exp(-u)) + 2 expm1(-u) = sum_{k>=3} (-1)^k (2 - k)/k! u^k.
        double sum = 0.0;
        double u_pow = u;
        double fact = 2.0;
        for (int k = 3; k <= 40; ++k) {
            fact *= k;
            double term = (k % 2 == 0 ? 1.0 : -1.0) * (2.0 - k) / fact * u_pow;
            sum += term;
            u_pow *= u;
            if (std::abs(term) < 1e-18 * std::abs(sum)) break;
        }
        return T * T * sum;
    }
    return (u * (1.0 + std::exp(-u)) + 2.0 * std::expm1(-u)) / (a * a);
}

double weight_c(double sigma, double T) {
    if (sigma < 0.0) throw std::invalid_argument("weight_c: need sigma >= 0");
    return kernel_J(4.0 * kPi * kPi * sigma, T);
}

double weight_E(double sigma, double T) {
    if (sigma < 0.0) throw std::invalid_argument("weight_E: need sigma >= 0");
    return std::exp(-4.0 * kPi * kPi * sigma * T);
}

double heat_flow_residual(const SpaceTimeField& w) {
    const TorusGrid& g = w.grid;
    double worst = 0.0;
    for (int k = 0; k < g.Nt; ++k) {
        SpaceField step = heat_propagate(w.at(k), g.dt());
        worst = std::max(worst, max_abs(sub(w.at(k + 1), step)) / g.dt());
    }
    return worst;
}

cplx duality_pairing(const SpaceTimeField& source, const SpaceField& terminal,
                     const SpaceField& initial_trace, const SpaceTimeField& w,
                     double heat_check_tol) {
    const TorusGrid& g = source.grid;
    if (w.grid != g || terminal.grid != g || initial_trace.grid != g)
        throw MfgError("duality_pairing: mismatched grids");

    double w_scale = 1.0;
    for (const auto& lvl : w.levels) w_scale = std::max(w_scale, max_abs(lvl));
    double defect = heat_flow_residual(w);
    if (defect > heat_check_tol * w_scale)
        throw MfgError("duality_pairing: weight is not a discrete heat flow (defect " +
                       std::to_string(defect) + ")");

    std::vector<cplx> levels(static_cast<size_t>(g.Nt) + 1);
    for (int k = 0; k <= g.Nt; ++k)
        levels[static_cast<size_t>(k)] = integral(multiply(source.at(k), w.at(k)));
    cplx lhs = time_trapz(levels, g.dt());
    cplx rhs = integral(multiply(initial_trace, w.at(0))) -
               integral(multiply(terminal, w.at(g.Nt)));
    return lhs - rhs;
}

}  // namespace mfg
