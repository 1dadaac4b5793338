#pragma once

// Adaptive Gauss-Kronrod 7/15 quadrature on finite intervals.

#include <cmath>
#include <cstddef>
#include <stdexcept>

namespace epcrit {

namespace gk_detail {

// 15-point Kronrod abscissae on [-1,1] (symmetric, nonnegative half)
constexpr double xgk[8] = {
    0.991455371120812639206854697526329,
    0.949107912342758524526189684047851,
    0.864864423359769072789712788640926,
    0.741531185599394439863864773280788,
    0.586087235467691130294144838258730,
    0.405845151377397166906606412076961,
    0.207784955007898467600689403773245,
    0.000000000000000000000000000000000,
};
constexpr double wgk[8] = {
    0.022935322010529224963732008058970,
    0.063092092629978553290700663189204,
    0.104790010322250183839876322541518,
    0.140653259715525918745189590510238,
    0.169004726639267902826583426598550,
    0.190350578064785409913256402421014,
    0.204432940075298892414161999234649,
    0.209482141084727828012999174891714,
};
// embedded 7-point Gauss weights (nodes are xgk[1], xgk[3], xgk[5], xgk[7])
constexpr double wg[4] = {
    0.129484966168869693270611432679082,
    0.279705391489276667901467771423780,
    0.381830050505118944950369775488975,
    0.417959183673469387755102040816327,
};

template <typename F>
void kronrod_panel(F&& f, double a, double b, double& result, double& err) {
    const double h = 0.5 * (b - a);
    const double mid = 0.5 * (a + b);
    double resg = 0.0, resk = 0.0;
    for (int j = 0; j < 8; ++j) {
        // odd-indexed abscissae (and the center) carry the embedded Gauss rule
        double fv = (j == 7) ? f(mid) : f(mid - h * xgk[j]) + f(mid + h * xgk[j]);
        resk += wgk[j] * fv;
        if (j % 2 == 1) resg += wg[j / 2] * fv;
    }
    result = resk * h;
    err = std::abs((resk - resg) * h);
}

}  // namespace gk_detail

// Integrates f over [a, b] (a <= b) to absolute tolerance abstol by adaptive
// interval bisection. Throws std::runtime_error if the subdivision budget is
// exhausted before the tolerance is met.
template <typename F>
double integrate_adaptive(F&& f, double a, double b, double abstol = 1e-12) {
    if (!(a <= b)) throw std::invalid_argument("integrate_adaptive: need a <= b");
    if (a == b) return 0.0;
    struct Panel {
        double a, b, tol;
    };
    Panel stack[2048];
    int top = 0;
    stack[top++] = {a, b, abstol};
    double total = 0.0;
    long panels = 0;
    while (top > 0) {
        Panel p = stack[--top];
        double r, e;
        gk_detail::kronrod_panel(f, p.a, p.b, r, e);
        if (e <= p.tol || (p.b - p.a) < 1e-14 * (std::abs(p.a) + std::abs(p.b) + 1.0)) {
            total += r;
            continue;
        }
        if (++panels > 200000 || top > 2040)
            throw std::runtime_error("integrate_adaptive: subdivision budget exhausted");
        double mid = 0.5 * (p.a + p.b);
        stack[top++] = {p.a, mid, 0.5 * p.tol};
        stack[top++] = {mid, p.b, 0.5 * p.tol};
    }
    return total;
}

}  // namespace epcrit
