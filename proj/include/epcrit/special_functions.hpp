#pragma once

// Gauss hypergeometric and Heun-class local solutions used by the
// divergence-amplitude criteria. Arguments live on the real interval [0, 1);
// parameter combinations outside what the solvers support raise
// std::invalid_argument.

namespace epcrit {

struct Hyp2F1Params {
    double a = 0.0;
    double b = 0.0;
    double c = 0.0;
};

// 2F1(a,b;c;z) for z in [-1/2, 1). Direct series for |z| <= 1/2; for larger z
// a connection formula in 1-z, including the logarithmic case c == a+b.
// Other integer values of c-a-b are not supported there.
double gauss_2f1(const Hyp2F1Params& p, double z);

struct Hyp2F1Value {
    double value = 0.0;
    double derivative = 0.0;  // d/dz
};

// Value and z-derivative together, on the same domain as gauss_2f1. The
// derivative is produced by term-wise differentiation inside whichever
// branch applies, so it stays valid where the plain evaluator does.
Hyp2F1Value gauss_2f1_d(const Hyp2F1Params& p, double z);

double digamma(double x);

struct HeunParams {
    double a = 2.0;        // location of the third finite singular point
    double q = 0.0;        // accessory parameter
    double alpha = 0.0;
    double beta = 0.0;
    double gamma = 0.0;
    double delta = 0.0;
    double epsilon() const { return alpha + beta - gamma - delta + 1.0; }
};

struct HeunValue {
    double value = 0.0;
    double derivative = 0.0;
};

// Frobenius solution at z = 0 normalized to w(0) = 1, evaluated by its power
// series; reliable for |z| well inside min(1, a). When gamma == 0 the n = 0
// relation forces q == 0 and leaves the linear coefficient free; pass it as
// c1 (it selects which exponent-0 solution is meant).
HeunValue heun_local(const HeunParams& p, double z, int terms = 64, double c1 = 0.0);

// Same solution continued along [0, z] for z in [0, 1), z < a, by integrating
// the defining equation from a series seed.
HeunValue heun_continue(const HeunParams& p, double z, double c1 = 0.0);

}  // namespace epcrit
