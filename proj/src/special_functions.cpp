#include "epcrit/special_functions.hpp"

#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>
#include <string>
#include <vector>

#include "epcrit/ode.hpp"

namespace epcrit {

namespace {

constexpr double kEps = std::numeric_limits<double>::epsilon();

bool is_nonpositive_integer(double x) {
    return x <= 0.0 && std::abs(x - std::round(x)) < 1e-12;
}

bool is_integer(double x) { return std::abs(x - std::round(x)) < 1e-12; }

// direct series, |z| <= 1/2 plus a little slack for internal reuse
double series_2f1(double a, double b, double c, double z) {
    if (is_nonpositive_integer(c)) throw std::invalid_argument("gauss_2f1: c is a non-positive integer");
    double term = 1.0, sum = 1.0;
    for (int n = 0; n < 800; ++n) {
        term *= (a + n) * (b + n) / ((c + n) * (n + 1.0)) * z;
        sum += term;
        if (std::abs(term) < kEps * (std::abs(sum) + 1e-300)) return sum;
        // polynomial case terminates exactly
        if (term == 0.0) return sum;
    }
    throw std::invalid_argument("gauss_2f1: series did not converge");
}

// direct series with its term-wise derivative
Hyp2F1Value series_2f1_d(double a, double b, double c, double z) {
    if (is_nonpositive_integer(c)) throw std::invalid_argument("gauss_2f1: c is a non-positive integer");
    if (z == 0.0) return {1.0, a * b / c};
    double term = 1.0, sum = 1.0, dsum = 0.0;
    for (int n = 0; n < 800; ++n) {
        term *= (a + n) * (b + n) / ((c + n) * (n + 1.0)) * z;
        sum += term;
        dsum += (n + 1.0) * term / z;
        if (std::abs(term) < kEps * (std::abs(sum) + 1e-300) &&
            std::abs((n + 1.0) * term / z) < kEps * (std::abs(dsum) + 1e-300))
            return {sum, dsum};
        if (term == 0.0) return {sum, dsum};
    }
    throw std::invalid_argument("gauss_2f1: series did not converge");
}

// 2F1(a,b;a+b;z) near z=1 via the logarithmic expansion in 1-z
double log_case_2f1(double a, double b, double z) {
    double w = 1.0 - z;
    double lead = std::tgamma(a + b) / (std::tgamma(a) * std::tgamma(b));
    double lw = std::log(w);
    double poch = 1.0;  // (a)_n (b)_n / (n!)^2 * w^n
    double sum = 0.0;
    for (int n = 0; n < 400; ++n) {
        double bracket = 2.0 * digamma(n + 1.0) - digamma(a + n) - digamma(b + n) - lw;
        double term = poch * bracket;
        sum += term;
        if (std::abs(term) < kEps * std::abs(sum) && n > 2) break;
        poch *= (a + n) * (b + n) / ((n + 1.0) * (n + 1.0)) * w;
    }
    return lead * sum;
}

// logarithmic expansion together with its term-wise w-derivative, w = 1-z
Hyp2F1Value log_case_2f1_d(double a, double b, double z) {
    const double w = 1.0 - z;
    const double lead = std::tgamma(a + b) / (std::tgamma(a) * std::tgamma(b));
    const double lw = std::log(w);
    double poch = 1.0;  // (a)_n (b)_n / (n!)^2 * w^n
    double sum = 0.0, dsum = 0.0;
    for (int n = 0; n < 400; ++n) {
        double bracket = 2.0 * digamma(n + 1.0) - digamma(a + n) - digamma(b + n) - lw;
        double term = poch * bracket;
        double dterm = (poch / w) * (n * bracket - 1.0);
        sum += term;
        dsum += dterm;
        if (std::abs(term) < kEps * std::abs(sum) &&
            std::abs(dterm) < kEps * (std::abs(dsum) + 1e-300) && n > 2)
            break;
        poch *= (a + n) * (b + n) / ((n + 1.0) * (n + 1.0)) * w;
    }
    return {lead * sum, -lead * dsum};
}

}  // namespace

double digamma(double x) {
    if (x <= 0.0 && is_integer(x)) throw std::invalid_argument("digamma: pole");
    double result = 0.0;
    if (x < 0.0) {
        // reflection, then fall through to the positive branch
        result -= std::numbers::pi_v<double> / std::tan(std::numbers::pi_v<double> * x);
        x = 1.0 - x;
    }
    while (x < 14.0) {
        result -= 1.0 / x;
        x += 1.0;
    }
    double inv = 1.0 / x, inv2 = inv * inv;
    // asymptotic expansion with Bernoulli coefficients
    result += std::log(x) - 0.5 * inv -
              inv2 * (1.0 / 12.0 - inv2 * (1.0 / 120.0 - inv2 * (1.0 / 252.0 -
                      inv2 * (1.0 / 240.0 - inv2 * (1.0 / 132.0)))));
    return result;
}

double gauss_2f1(const Hyp2F1Params& p, double z) {
    const double a = p.a, b = p.b, c = p.c;
    if (!(z < 1.0) || z < -0.5) throw std::invalid_argument("gauss_2f1: argument outside [-1/2, 1)");
    if (z <= 0.5) return series_2f1(a, b, c, z);

    const double s = c - a - b;
    if (is_integer(s)) {
        if (std::abs(s) < 1e-12) return log_case_2f1(a, b, z);
        throw std::invalid_argument("gauss_2f1: unsupported integer c-a-b = " + std::to_string(s));
    }
    // reciprocal gamma: a pole in a denominator kills that connection term
    auto rg = [](double x) { return is_nonpositive_integer(x) ? 0.0 : 1.0 / std::tgamma(x); };
    const double w = 1.0 - z;
    double t1 = 0.0, t2 = 0.0;
    double coef1 = std::tgamma(c) * std::tgamma(s) * rg(c - a) * rg(c - b);
    if (coef1 != 0.0) t1 = coef1 * series_2f1(a, b, a + b - c + 1.0, w);
    double coef2 = std::tgamma(c) * std::tgamma(-s) * rg(a) * rg(b);
    if (coef2 != 0.0) t2 = coef2 * std::pow(w, s) * series_2f1(c - a, c - b, s + 1.0, w);
    return t1 + t2;
}

Hyp2F1Value gauss_2f1_d(const Hyp2F1Params& p, double z) {
    const double a = p.a, b = p.b, c = p.c;
    if (!(z < 1.0) || z < -0.5) throw std::invalid_argument("gauss_2f1: argument outside [-1/2, 1)");
    if (z <= 0.5) return series_2f1_d(a, b, c, z);

    const double s = c - a - b;
    if (is_integer(s)) {
        if (std::abs(s) < 1e-12) return log_case_2f1_d(a, b, z);
        throw std::invalid_argument("gauss_2f1: unsupported integer c-a-b = " + std::to_string(s));
    }
    auto rg = [](double x) { return is_nonpositive_integer(x) ? 0.0 : 1.0 / std::tgamma(x); };
    const double w = 1.0 - z;
    double v = 0.0, dw = 0.0;  // value and d/dw
    double coef1 = std::tgamma(c) * std::tgamma(s) * rg(c - a) * rg(c - b);
    if (coef1 != 0.0) {
        Hyp2F1Value g1 = series_2f1_d(a, b, a + b - c + 1.0, w);
        v += coef1 * g1.value;
        dw += coef1 * g1.derivative;
    }
    double coef2 = std::tgamma(c) * std::tgamma(-s) * rg(a) * rg(b);
    if (coef2 != 0.0) {
        Hyp2F1Value g2 = series_2f1_d(c - a, c - b, s + 1.0, w);
        v += coef2 * std::pow(w, s) * g2.value;
        dw += coef2 * (s * std::pow(w, s - 1.0) * g2.value + std::pow(w, s) * g2.derivative);
    }
    return {v, -dw};
}

namespace {

std::vector<double> heun_coeffs(const HeunParams& p, int terms, double c1) {
    const double a = p.a, q = p.q, al = p.alpha, be = p.beta, ga = p.gamma, de = p.delta;
    const double ep = p.epsilon();
    if (a <= 1.0) throw std::invalid_argument("heun: singular point a must exceed 1");
    std::vector<double> cf(static_cast<std::size_t>(terms) + 1, 0.0);
    cf[0] = 1.0;
    if (ga == 0.0) {
        // n = 0 relation reads a*gamma*c1 = q*c0; gamma = 0 forces q = 0 and
        // frees c1
        if (q != 0.0) throw std::invalid_argument("heun: gamma == 0 requires q == 0");
        cf[1] = c1;
    } else {
        cf[1] = q / (a * ga);
    }
    for (int n = 1; n < terms; ++n) {
        double num = (n * ((n - 1.0 + ga) * (1.0 + a) + de * a + ep) + q) * cf[n] -
                     (n - 1.0 + al) * (n - 1.0 + be) * cf[n - 1];
        cf[n + 1] = num / (a * (n + 1.0) * (n + ga));
    }
    return cf;
}

}  // namespace

HeunValue heun_local(const HeunParams& p, double z, int terms, double c1) {
    auto cf = heun_coeffs(p, terms, c1);
    double v = 0.0, d = 0.0;
    for (int n = terms; n >= 1; --n) {
        v = v * z + cf[static_cast<std::size_t>(n)];
        d = d * z + n * cf[static_cast<std::size_t>(n)];
    }
    v = v * z + cf[0];
    double tail = std::abs(cf[static_cast<std::size_t>(terms)] * std::pow(z, terms));
    if (!(tail < 1e-12 * (std::abs(v) + 1.0)))
        throw std::invalid_argument("heun_local: series truncation too large at this z");
    return {v, d};
}

HeunValue heun_continue(const HeunParams& p, double z, double c1) {
    if (z < 0.0 || z >= 1.0 || z >= p.a)
        throw std::invalid_argument("heun_continue: z outside [0, min(1, a))");
    const double z0 = 0.25 * std::min(1.0, p.a);
    if (z <= z0) return heun_local(p, z, 64, c1);
    HeunValue seed = heun_local(p, z0, 64, c1);

    const double a = p.a, q = p.q, al = p.alpha, be = p.beta, ga = p.gamma, de = p.delta;
    const double ep = p.epsilon();
    auto rhs = [&](double t, std::span<const double> y, std::span<double> dy) {
        double A = (ga != 0.0 ? ga / t : 0.0) + de / (t - 1.0) + ep / (t - a);
        double B = (al * be * t - q) / (t * (t - 1.0) * (t - a));
        dy[0] = y[1];
        dy[1] = -A * y[1] - B * y[0];
    };
    OdeOptions o;
    o.reltol = 1e-13;
    o.abstol = 1e-13;
    o.escape_norm = 1e12;
    auto sol = integrate_ode(rhs, z0, z, {seed.value, seed.derivative}, o);
    if (sol.status != OdeStatus::reached_end)
        throw std::runtime_error("heun_continue: continuation failed");
    return {sol.y[0], sol.y[1]};
}

}  // namespace epcrit
