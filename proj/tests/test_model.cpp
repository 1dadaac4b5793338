#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <stdexcept>
#include <vector>

#include "epcrit/model.hpp"
#include "epcrit/quadrature.hpp"

using namespace epcrit;

namespace {

// fields induced by reference densities, frozen from 30-digit quadrature
constexpr double kFieldGauss11_d3_r1 = 0.1894723458204923519;
constexpr double kFieldGauss07_13_d4_r05 = 0.15866236657159210114;
constexpr double kFieldRat11_d3_r2 = 0.11160641027573868712;

double rel_diff(double a, double b) {
    return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-300});
}

}  // namespace

TEST_CASE("adaptive quadrature hits analytic integrals") {
    double s10 = integrate_adaptive([](double t) { return std::cos(t); }, 0.0, 10.0);
    CHECK(std::abs(s10 - std::sin(10.0)) < 1e-11);
    double g = integrate_adaptive([](double t) { return std::exp(-t * t); }, 0.0, 6.0);
    CHECK(std::abs(g - 0.88622692545275801365) < 1e-12);  // sqrt(pi)/2 minus 1e-16 tail
    CHECK(integrate_adaptive([](double) { return 1.0; }, 2.0, 2.0) == 0.0);
}

TEST_CASE("induced field matches frozen reference values") {
    auto g11 = RadialProfile::gaussian(1.0, 1.0);
    auto f3 = radial_field_from_density(g11, 3);
    CHECK(std::abs(f3.value(1.0) - kFieldGauss11_d3_r1) < 1e-12);

    auto g0713 = RadialProfile::gaussian(0.7, 1.3);
    auto f4 = radial_field_from_density(g0713, 4);
    CHECK(std::abs(f4.value(0.5) - kFieldGauss07_13_d4_r05) < 1e-12);

    auto rat = RadialProfile::rational(1.0, 1.0);
    auto fr = radial_field_from_density(rat, 3);
    CHECK(std::abs(fr.value(2.0) - kFieldRat11_d3_r2) < 1e-12);

    // center value is the density over the dimension
    CHECK(std::abs(f3.value(0.0) - 1.0 / 3.0) < 1e-14);
    CHECK(std::abs(f4.value(0.0) - 0.7 / 4.0) < 1e-14);
}

TEST_CASE("density reconstructs from the induced field") {
    auto density = RadialProfile::gaussian(0.9, 1.4);
    for (int d : {2, 3, 5}) {
        auto field = radial_field_from_density(density, d);
        for (double r : {0.3, 1.0, 2.2, 4.0}) {
            double rec = r * field.slope(r) + d * field.value(r);
            CHECK(rel_diff(rec, density.value(r)) < 1e-8);
        }
    }
}

TEST_CASE("induced field slope agrees with finite differences") {
    auto density = RadialProfile::rational(1.2, 2.0);
    auto field = radial_field_from_density(density, 3);
    for (double r : {0.4, 1.1, 3.0}) {
        double h = 1e-4;
        double fd = (field.value(r + h) - field.value(r - h)) / (2.0 * h);
        CHECK(std::abs(field.slope(r) - fd) < 1e-6 * (1.0 + std::abs(fd)));
    }
    // near the center the slope goes through the series limit
    CHECK(std::abs(field.slope(1e-9)) < 1e-9);
}

TEST_CASE("derive_point reads profile values and scaled slopes") {
    auto F = RadialProfile::gaussian(0.5, 2.0);
    auto G = RadialProfile::rational(0.3, 1.5);
    double r0 = 1.7;
    auto pt = derive_point(F, G, r0);
    double f_expect = 0.5 * std::exp(-r0 * r0 / 4.0);
    double g_expect = 0.3 * std::pow(1.0 + r0 * r0, -1.5);
    CHECK(pt.r0 == r0);
    CHECK(std::abs(pt.F0 - f_expect) < 1e-15);
    CHECK(std::abs(pt.G0 - g_expect) < 1e-15);
    CHECK(std::abs(pt.u0 - r0 * f_expect * (-2.0 * r0 / 4.0)) < 1e-15);
    CHECK(std::abs(pt.v0 - r0 * 0.3 * (-1.5) * std::pow(1.0 + r0 * r0, -2.5) * 2.0 * r0) <
          1e-15);

    // at the origin both scaled slopes vanish
    auto origin = derive_point(F, G, 0.0);
    CHECK(origin.u0 == 0.0);
    CHECK(origin.v0 == 0.0);
}

TEST_CASE("polynomial-gaussian family evaluates and differentiates") {
    auto p = RadialProfile::poly_gaussian({1.0, 0.0, -0.5}, 1.5);
    double r = 0.8;
    double expect = (1.0 - 0.5 * r * r) * std::exp(-r * r / 2.25);
    CHECK(std::abs(p.value(r) - expect) < 1e-15);
    double h = 1e-5;
    double fd = (p.value(r + h) - p.value(r - h)) / (2.0 * h);
    CHECK(std::abs(p.slope(r) - fd) < 1e-8);
}

TEST_CASE("sampled profiles interpolate smoothly and clamp beyond the grid") {
    std::vector<double> xs, ys;
    for (int i = 0; i <= 60; ++i) {
        double x = 6.0 * i / 60.0;
        xs.push_back(x);
        ys.push_back(std::sin(x));
    }
    auto s = RadialProfile::sampled(xs, ys);
    for (double r : {0.37, 1.55, 2.91, 4.61, 5.83}) {
        CHECK(std::abs(s.value(r) - std::sin(r)) < 1e-4);
        CHECK(std::abs(s.slope(r) - std::cos(r)) < 1e-3);
    }
    CHECK(s.value(7.5) == std::sin(6.0));
    CHECK(s.slope(7.5) == 0.0);
    CHECK(s.bound() == 6.0);

    CHECK_THROWS_AS(RadialProfile::sampled({0.0, 1.0, 1.0}, {1.0, 2.0, 3.0}),
                    std::invalid_argument);
    CHECK_THROWS_AS(RadialProfile::sampled({0.0, 1.0}, {1.0}), std::invalid_argument);
}

TEST_CASE("negative densities are rejected") {
    CHECK_THROWS_AS(radial_field_from_density(RadialProfile::constant(-1.0), 3),
                    std::invalid_argument);
    // positive at the center, negative further out: rejected on evaluation
    auto dip = RadialProfile::poly_gaussian({1.0, 0.0, -2.0}, 10.0);
    auto field = radial_field_from_density(dip, 3);
    CHECK_THROWS_AS(field.value(2.0), std::invalid_argument);
    CHECK_THROWS_AS(radial_field_from_density(RadialProfile::constant(1.0), 1),
                    std::invalid_argument);
}

TEST_CASE("equilibrium shift removes confinement") {
    Params p;
    p.d = 4;
    p.k = 1.0;
    p.c = 0.0;
    p.m = -1.0;
    auto s = shift_to_zero_equilibrium(p);
    CHECK(s.params.m == 0.0);
    CHECK(s.params.k == -1.0);
    CHECK(s.params.c == 4.0);
    CHECK(s.sign == -1.0);
    InitialPoint pt;
    pt.G0 = 0.3;
    pt.v0 = 0.25;
    auto moved = shift_point(s, pt);
    CHECK(std::abs(moved.G0 - 0.7) < 1e-15);  // -(0.3 - 1)
    CHECK(moved.v0 == -0.25);
    CHECK(moved.F0 == pt.F0);
    CHECK(moved.u0 == pt.u0);

    p.m = 1.0;
    auto s2 = shift_to_zero_equilibrium(p);
    CHECK(s2.params.k == 1.0);
    CHECK(s2.params.c == 4.0);
    CHECK(s2.sign == 1.0);
    auto moved2 = shift_point(s2, pt);
    CHECK(std::abs(moved2.G0 - 1.3) < 1e-15);
    CHECK(moved2.v0 == 0.25);

    p.mu = 0.1;
    CHECK_THROWS_AS(shift_to_zero_equilibrium(p), std::invalid_argument);
}

TEST_CASE("equilibria split by the sign of m*d + c*k") {
    Params p;
    p.d = 3;
    p.k = 1.0;
    p.c = 1.0;
    p.m = 0.0;
    auto eq = classify_equilibria(p);
    REQUIRE(eq.size() == 1);
    CHECK(eq[0].type == Equilibrium::Type::center);
    CHECK(eq[0].F == 0.0);
    CHECK(eq[0].G == 0.0);

    p.k = -1.0;
    auto eq2 = classify_equilibria(p);
    REQUIRE(eq2.size() == 3);
    CHECK(eq2[0].type == Equilibrium::Type::saddle);
    CHECK(eq2[1].type == Equilibrium::Type::stable_node);
    CHECK(std::abs(eq2[1].F - std::sqrt(1.0 / 3.0)) < 1e-15);
    CHECK(std::abs(eq2[1].G - 1.0 / 3.0) < 1e-15);
    CHECK(eq2[2].type == Equilibrium::Type::unstable_node);
    CHECK(eq2[2].F == -eq2[1].F);

    p.m = 1.0 / 3.0;
    auto eq3 = classify_equilibria(p);
    REQUIRE(eq3.size() == 1);
    CHECK(eq3[0].type == Equilibrium::Type::saddle_node);
    CHECK(std::abs(eq3[0].G - 1.0 / 3.0) < 1e-15);
}

TEST_CASE("positivity scan reports the earliest violation") {
    auto good = RadialProfile::gaussian(1.0, 1.0);
    auto rep = check_density_positivity(good, 10.0);
    CHECK(rep.nonnegative);
    CHECK(std::isnan(rep.first_violation));

    auto dip = RadialProfile::poly_gaussian({1.0, 0.0, -2.0}, 10.0);
    auto rep2 = check_density_positivity(dip, 5.0);
    CHECK_FALSE(rep2.nonnegative);
    CHECK(std::abs(rep2.first_violation - std::sqrt(0.5)) < 1e-6);
    CHECK(rep2.min_value < -0.1);

    auto neg = RadialProfile::constant(-0.5);
    auto rep3 = check_density_positivity(neg, 1.0);
    CHECK_FALSE(rep3.nonnegative);
    CHECK(rep3.first_violation == 0.0);

    // a dip that only grazes zero passes the non-strict test
    std::vector<double> xs{0.0, 1.0, 2.0}, ys{1.0, 0.0, 1.0};
    auto graze = RadialProfile::sampled(xs, ys);
    auto rep4 = check_density_positivity(graze, 2.0, 1e-6);
    CHECK(rep4.nonnegative);
}

TEST_CASE("parameter validation flags bad inputs") {
    Params p;
    p.d = 0;
    CHECK_THROWS_AS(p.validate(), std::invalid_argument);
    p.d = 3;
    p.k = 0.0;
    CHECK_THROWS_AS(p.validate(), std::invalid_argument);
    p.k = 1.0;
    p.mu = -0.5;
    CHECK_THROWS_AS(p.validate(), std::invalid_argument);
    p.mu = 0.0;
    p.c_of_r = [](double) { return 1.0; };
    CHECK_THROWS_AS(p.validate(), std::invalid_argument);
    p.c_slope = [](double) { return 0.0; };
    CHECK_NOTHROW(p.validate());
    CHECK_FALSE(p.analytic_regime());
}
