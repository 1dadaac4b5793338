#include "epcrit/model.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "epcrit/quadrature.hpp"

namespace epcrit {

namespace {

void require(bool ok, const char* msg) {
    if (!ok) throw std::invalid_argument(msg);
}

bool finite(double x) { return std::isfinite(x); }

}  // namespace

void Params::validate() const {
    require(d >= 1, "params: dimension must be a positive integer");
    require(finite(k) && k != 0.0, "params: k must be finite and nonzero");
    require(finite(c), "params: c must be finite");
    require(finite(m), "params: m must be finite");
    require(finite(mu) && mu >= 0.0, "params: friction must be finite and nonnegative");
    if (c_of_r) require(static_cast<bool>(c_slope), "params: variable background needs its slope");
}

struct RadialProfile::Impl {
    Kind kind;
    double a = 0.0;
    double sigma = 1.0;
    double power = 1.0;
    std::vector<double> coeffs;
    std::vector<double> x, y, ypp;  // sampled grid and natural-spline curvatures
    std::shared_ptr<const RadialProfile> density;  // induced fields only
    int dim = 0;
    double abstol = 1e-12;

    static double spline_value(const Impl& im, double r, double& deriv);
    static double induced_integral(const Impl& im, double r);
    static double induced_value(const Impl& im, double r);
    static double induced_slope(const Impl& im, double r);
};

RadialProfile RadialProfile::gaussian(double amplitude, double sigma) {
    require(finite(amplitude), "profile: amplitude must be finite");
    require(finite(sigma) && sigma > 0.0, "profile: sigma must be positive");
    auto im = std::make_shared<Impl>();
    im->kind = Kind::gaussian;
    im->a = amplitude;
    im->sigma = sigma;
    return RadialProfile(std::move(im));
}

RadialProfile RadialProfile::rational(double amplitude, double power) {
    require(finite(amplitude), "profile: amplitude must be finite");
    require(finite(power) && power > 0.0, "profile: decay power must be positive");
    auto im = std::make_shared<Impl>();
    im->kind = Kind::rational;
    im->a = amplitude;
    im->power = power;
    return RadialProfile(std::move(im));
}

RadialProfile RadialProfile::constant(double value) {
    require(finite(value), "profile: constant value must be finite");
    auto im = std::make_shared<Impl>();
    im->kind = Kind::constant;
    im->a = value;
    return RadialProfile(std::move(im));
}

RadialProfile RadialProfile::poly_gaussian(std::vector<double> coeffs, double sigma) {
    require(!coeffs.empty(), "profile: polynomial needs at least one coefficient");
    for (double cj : coeffs) require(finite(cj), "profile: coefficients must be finite");
    require(finite(sigma) && sigma > 0.0, "profile: sigma must be positive");
    auto im = std::make_shared<Impl>();
    im->kind = Kind::poly_gaussian;
    im->coeffs = std::move(coeffs);
    im->sigma = sigma;
    return RadialProfile(std::move(im));
}

RadialProfile RadialProfile::sampled(std::vector<double> radii, std::vector<double> values) {
    require(radii.size() == values.size(), "profile: grid size mismatch");
    require(!radii.empty(), "profile: grid must be nonempty");
    require(finite(radii.front()) && radii.front() >= 0.0, "profile: radii must be nonnegative");
    for (std::size_t i = 0; i < radii.size(); ++i) {
        require(finite(radii[i]) && finite(values[i]), "profile: grid entries must be finite");
        if (i > 0) require(radii[i] > radii[i - 1], "profile: radii must be strictly increasing");
    }
    auto im = std::make_shared<Impl>();
    im->kind = Kind::sampled;
    im->x = std::move(radii);
    im->y = std::move(values);
    const std::size_t n = im->x.size();
    im->ypp.assign(n, 0.0);
    if (n > 2) {
        // natural spline: tridiagonal solve for interior second derivatives
        std::vector<double> diag(n, 2.0), rhs(n, 0.0), sub(n, 0.0);
        for (std::size_t i = 1; i + 1 < n; ++i) {
            double h0 = im->x[i] - im->x[i - 1];
            double h1 = im->x[i + 1] - im->x[i];
            sub[i] = h0 / (h0 + h1);
            rhs[i] = 6.0 / (h0 + h1) *
                     ((im->y[i + 1] - im->y[i]) / h1 - (im->y[i] - im->y[i - 1]) / h0);
        }
        for (std::size_t i = 2; i + 1 < n; ++i) {
            double w = sub[i] / diag[i - 1];
            diag[i] -= w * (1.0 - sub[i - 1]);
            rhs[i] -= w * rhs[i - 1];
        }
        for (std::size_t i = n - 2; i >= 1; --i) {
            double upper = (i + 2 < n) ? (1.0 - sub[i]) * im->ypp[i + 1] : 0.0;
            im->ypp[i] = (rhs[i] - upper) / diag[i];
        }
    }
    return RadialProfile(std::move(im));
}

namespace {

double poly_eval(const std::vector<double>& cf, double r, double& deriv) {
    double p = 0.0, dp = 0.0;
    for (std::size_t j = cf.size(); j-- > 0;) {
        dp = dp * r + p;
        p = p * r + cf[j];
    }
    deriv = dp;
    return p;
}

}  // namespace

double RadialProfile::Impl::induced_integral(const Impl& im, double r) {
    const RadialProfile& n = *im.density;
    const int d = im.dim;
    double tol = std::max(im.abstol * std::min(1.0, std::pow(r, d)), 1e-300);
    return integrate_adaptive(
        [&](double s) {
            double ns = n.value(s);
            if (ns < -1e-12)
                throw std::invalid_argument("field from density: density must be nonnegative");
            return ns * std::pow(s, d - 1);
        },
        0.0, r, tol);
}

double RadialProfile::Impl::induced_value(const Impl& im, double r) {
    if (r < 1e-12) return im.density->value(0.0) / im.dim;
    return induced_integral(im, r) / std::pow(r, im.dim);
}

double RadialProfile::Impl::induced_slope(const Impl& im, double r) {
    // field' = (density - d*field)/r; near zero the expansion
    // field(r) = n(0)/d + n'(0) r/(d+1) + O(r^2) takes over
    if (r < 1e-6) return im.density->slope(0.0) / (im.dim + 1);
    return (im.density->value(r) - im.dim * induced_value(im, r)) / r;
}

double RadialProfile::Impl::spline_value(const Impl& im, double r, double& deriv) {
    const auto& x = im.x;
    const auto& y = im.y;
    const auto& m = im.ypp;
    if (r <= x.front()) {
        deriv = 0.0;
        return y.front();
    }
    if (r >= x.back()) {
        deriv = 0.0;
        return y.back();
    }
    std::size_t hi = std::upper_bound(x.begin(), x.end(), r) - x.begin();
    std::size_t lo = hi - 1;
    double h = x[hi] - x[lo];
    double A = (x[hi] - r) / h;
    double B = (r - x[lo]) / h;
    deriv = (y[hi] - y[lo]) / h +
            h / 6.0 * ((3.0 * B * B - 1.0) * m[hi] - (3.0 * A * A - 1.0) * m[lo]);
    return A * y[lo] + B * y[hi] +
           h * h / 6.0 * ((A * A * A - A) * m[lo] + (B * B * B - B) * m[hi]);
}

double RadialProfile::value(double r) const {
    require(std::isfinite(r) && r >= 0.0, "profile: radius must be finite and nonnegative");
    const Impl& im = *impl_;
    switch (im.kind) {
        case Kind::gaussian: {
            double t = r / im.sigma;
            return im.a * std::exp(-t * t);
        }
        case Kind::rational:
            return im.a * std::pow(1.0 + r * r, -im.power);
        case Kind::constant:
            return im.a;
        case Kind::poly_gaussian: {
            double dp;
            double t = r / im.sigma;
            return poly_eval(im.coeffs, r, dp) * std::exp(-t * t);
        }
        case Kind::sampled: {
            double dp;
            return Impl::spline_value(im, r, dp);
        }
        case Kind::induced:
            return Impl::induced_value(im, r);
    }
    throw std::logic_error("profile: unknown kind");
}

double RadialProfile::slope(double r) const {
    require(std::isfinite(r) && r >= 0.0, "profile: radius must be finite and nonnegative");
    const Impl& im = *impl_;
    switch (im.kind) {
        case Kind::gaussian: {
            double t = r / im.sigma;
            return im.a * std::exp(-t * t) * (-2.0 * r / (im.sigma * im.sigma));
        }
        case Kind::rational:
            return im.a * (-im.power) * std::pow(1.0 + r * r, -im.power - 1.0) * 2.0 * r;
        case Kind::constant:
            return 0.0;
        case Kind::poly_gaussian: {
            double dp;
            double p = poly_eval(im.coeffs, r, dp);
            double t = r / im.sigma;
            return (dp - p * 2.0 * r / (im.sigma * im.sigma)) * std::exp(-t * t);
        }
        case Kind::sampled: {
            double dp;
            Impl::spline_value(im, r, dp);
            return dp;
        }
        case Kind::induced:
            return Impl::induced_slope(im, r);
    }
    throw std::logic_error("profile: unknown kind");
}

RadialProfile::Kind RadialProfile::kind() const { return impl_->kind; }

double RadialProfile::bound() const {
    if (impl_->kind == Kind::sampled) return impl_->x.back();
    if (impl_->kind == Kind::induced) return impl_->density->bound();
    return std::numeric_limits<double>::infinity();
}

InitialPoint derive_point(const RadialProfile& F, const RadialProfile& G, double r0) {
    require(std::isfinite(r0) && r0 >= 0.0, "derive_point: radius must be finite, >= 0");
    InitialPoint pt;
    pt.r0 = r0;
    pt.F0 = F.value(r0);
    pt.G0 = G.value(r0);
    pt.u0 = r0 * F.slope(r0);
    pt.v0 = r0 * G.slope(r0);
    return pt;
}

RadialProfile radial_field_from_density(const RadialProfile& density, int d, double abstol) {
    require(d >= 2, "field from density: requires dimension >= 2");
    require(std::isfinite(abstol) && abstol > 0.0, "field from density: abstol must be positive");
    if (density.value(0.0) < -1e-12)
        throw std::invalid_argument("field from density: density must be nonnegative");
    auto im = std::make_shared<RadialProfile::Impl>();
    im->kind = RadialProfile::Kind::induced;
    im->density = std::make_shared<RadialProfile>(density);
    im->dim = d;
    im->abstol = abstol;
    return RadialProfile(std::move(im));
}

ShiftedModel shift_to_zero_equilibrium(const Params& p) {
    p.validate();
    require(p.analytic_regime(),
            "shift: requires zero friction and a constant background");
    ShiftedModel s;
    s.params = p;
    s.params.m = 0.0;
    s.G_offset = p.m / p.k;
    double shifted_c = p.c + p.d * p.m / p.k;
    if (shifted_c < 0.0) {
        s.sign = -1.0;
        s.params.c = -shifted_c;
        s.params.k = -p.k;
    } else {
        s.sign = 1.0;
        s.params.c = shifted_c;
    }
    return s;
}

InitialPoint shift_point(const ShiftedModel& s, const InitialPoint& pt) {
    InitialPoint out = pt;
    out.G0 = s.sign * (pt.G0 + s.G_offset);
    out.v0 = s.sign * pt.v0;
    return out;
}

std::vector<Equilibrium> classify_equilibria(const Params& p) {
    p.validate();
    require(p.analytic_regime(),
            "equilibria: requires zero friction and a constant background");
    double e = p.m * p.d + p.c * p.k;
    double g_center = -p.m / p.k;
    std::vector<Equilibrium> out;
    if (e > 0.0) {
        out.push_back({Equilibrium::Type::center, 0.0, g_center});
    } else if (e == 0.0) {
        out.push_back({Equilibrium::Type::saddle_node, 0.0, g_center});
    } else {
        double f_star = std::sqrt(-e / p.d);
        out.push_back({Equilibrium::Type::saddle, 0.0, g_center});
        out.push_back({Equilibrium::Type::stable_node, f_star, p.c / p.d});
        out.push_back({Equilibrium::Type::unstable_node, -f_star, p.c / p.d});
    }
    return out;
}

PositivityReport check_density_positivity(const RadialProfile& density, double r_max,
                                          double tol) {
    require(std::isfinite(r_max) && r_max > 0.0, "positivity: r_max must be positive");
    require(std::isfinite(tol) && tol >= 0.0, "positivity: tol must be nonnegative");
    constexpr int kSamples = 4096;
    PositivityReport rep;
    rep.min_value = std::numeric_limits<double>::infinity();
    std::size_t imin = 0;
    std::vector<double> vals(kSamples + 1);
    auto grid = [&](std::size_t i) { return r_max * static_cast<double>(i) / kSamples; };
    for (std::size_t i = 0; i <= kSamples; ++i) {
        vals[i] = density.value(grid(i));
        if (vals[i] < rep.min_value) {
            rep.min_value = vals[i];
            rep.argmin = grid(i);
            imin = i;
        }
    }
    // golden-section polish of the sampled minimum
    {
        double a = grid(imin == 0 ? 0 : imin - 1);
        double b = grid(imin + 1 <= kSamples ? imin + 1 : kSamples);
        constexpr double kInvPhi = 0.6180339887498949;
        double x1 = b - kInvPhi * (b - a), x2 = a + kInvPhi * (b - a);
        double f1 = density.value(x1), f2 = density.value(x2);
        for (int it = 0; it < 80 && (b - a) > 1e-14 * (1.0 + r_max); ++it) {
            if (f1 < f2) {
                b = x2;
                x2 = x1;
                f2 = f1;
                x1 = b - kInvPhi * (b - a);
                f1 = density.value(x1);
            } else {
                a = x1;
                x1 = x2;
                f1 = f2;
                x2 = a + kInvPhi * (b - a);
                f2 = density.value(x2);
            }
        }
        double xm = 0.5 * (a + b), fm = density.value(xm);
        if (fm < rep.min_value) {
            rep.min_value = fm;
            rep.argmin = xm;
        }
    }
    rep.nonnegative = rep.min_value >= -tol;
    if (!rep.nonnegative) {
        // earliest violating radius: walk to the first bad sample, then bisect
        // the onset inside the preceding interval
        double lo = 0.0, hi = rep.argmin;
        for (std::size_t i = 0; i <= kSamples; ++i) {
            if (vals[i] < -tol) {
                hi = grid(i);
                lo = (i == 0) ? 0.0 : grid(i - 1);
                break;
            }
            if (grid(i) >= rep.argmin) {
                lo = (i == 0) ? 0.0 : grid(i - 1);
                break;
            }
        }
        if (hi <= lo || density.value(lo) < -tol) {
            rep.first_violation = lo;
        } else {
            for (int it = 0; it < 80; ++it) {
                double mid = 0.5 * (lo + hi);
                if (density.value(mid) < -tol)
                    hi = mid;
                else
                    lo = mid;
            }
            rep.first_violation = hi;
        }
    }
    return rep;
}

}  // namespace epcrit
