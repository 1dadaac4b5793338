#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <numbers>
#include <vector>

#include "epcrit/ode.hpp"

using namespace epcrit;

namespace {

void exp_rhs(double, std::span<const double> y, std::span<double> dy) { dy[0] = y[0]; }

void cos_rhs(double t, std::span<const double>, std::span<double> dy) { dy[0] = std::cos(t); }

void osc_rhs(double, std::span<const double> y, std::span<double> dy) {
    dy[0] = y[1];
    dy[1] = -y[0];
}

void cube_rhs(double t, std::span<const double> y, std::span<double> dy) {
    dy[0] = -y[0] * y[0] * y[0] + std::cos(3.0 * t);
}

double fixed_step_value(double h) {
    OdeOptions o;
    o.reltol = 1e30;  // error test always passes, so max_step pins the grid
    o.abstol = 1e30;
    o.initial_step = h;
    o.max_step = h;
    auto s = integrate_ode(cube_rhs, 0.0, 3.0, {0.3}, o);
    REQUIRE(s.status == OdeStatus::reached_end);
    return s.y[0];
}

}  // namespace

TEST_CASE("eighth order convergence on fixed grids") {
    OdeOptions tight;
    tight.reltol = 1e-14;
    tight.abstol = 1e-14;
    auto ref = integrate_ode(cube_rhs, 0.0, 3.0, {0.3}, tight);
    double e1 = std::abs(fixed_step_value(0.75) - ref.y[0]);
    double e2 = std::abs(fixed_step_value(0.1875) - ref.y[0]);
    double rate = std::log(e1 / e2) / std::log(4.0);
    CHECK(rate > 7.2);
    CHECK(rate < 9.0);
}

TEST_CASE("oscillator accuracy over many periods") {
    OdeOptions o;
    o.reltol = 1e-12;
    o.abstol = 1e-12;
    double T = 20.0 * std::numbers::pi;
    auto s = integrate_ode(osc_rhs, 0.0, T, {1.0, 0.0}, o);
    REQUIRE(s.status == OdeStatus::reached_end);
    CHECK(std::abs(s.y[0] - 1.0) < 1e-9);
    CHECK(std::abs(s.y[1]) < 1e-9);
    CHECK(s.n_accepted > 10);
}

TEST_CASE("dense output matches the solution inside steps") {
    OdeOptions o;
    o.reltol = 1e-12;
    o.abstol = 1e-12;
    double worst = 0.0;
    auto cb = [&](const DenseSegment& seg) {
        std::vector<double> y(1);
        for (int i = 0; i <= 7; ++i) {
            double theta = i / 7.0;
            seg.eval(theta, y);
            double t = seg.t0() + theta * (seg.t1() - seg.t0());
            worst = std::max(worst, std::abs(y[0] - std::sin(t)));
        }
    };
    auto s = integrate_ode(cos_rhs, 0.0, 10.0, {0.0}, o, {}, cb);
    REQUIRE(s.status == OdeStatus::reached_end);
    CHECK(worst < 1e-9);
}

TEST_CASE("event location with direction filter") {
    OdeOptions o;
    o.reltol = 1e-12;
    o.abstol = 1e-12;

    SUBCASE("rising crossing") {
        EventSpec ev{[](double, std::span<const double> y) { return y[0] - 0.5; }, +1, true};
        auto s = integrate_ode(cos_rhs, 0.0, 10.0, {0.0}, o, {ev});
        REQUIRE(s.status == OdeStatus::event);
        CHECK(s.event_index == 0);
        CHECK(std::abs(s.t - std::numbers::pi / 6.0) < 1e-10);
        CHECK(std::abs(s.y[0] - 0.5) < 1e-10);
    }
    SUBCASE("falling crossing skips the earlier rising one") {
        EventSpec ev{[](double, std::span<const double> y) { return y[0] - 0.5; }, -1, true};
        auto s = integrate_ode(cos_rhs, 0.0, 10.0, {0.0}, o, {ev});
        REQUIRE(s.status == OdeStatus::event);
        CHECK(std::abs(s.t - 5.0 * std::numbers::pi / 6.0) < 1e-10);
    }
    SUBCASE("event starting exactly at zero arms only after leaving it") {
        // y = 0.5 + sin t; the function y-0.5 starts at zero and first returns
        // to it, falling, at t = pi
        EventSpec ev{[](double, std::span<const double> y) { return y[0] - 0.5; }, -1, true};
        auto s = integrate_ode(cos_rhs, 0.0, 10.0, {0.5}, o, {ev});
        REQUIRE(s.status == OdeStatus::event);
        CHECK(std::abs(s.t - std::numbers::pi) < 1e-10);
    }
    SUBCASE("earliest of several events wins") {
        EventSpec a{[](double, std::span<const double> y) { return y[0] - 0.9; }, +1, true};
        EventSpec b{[](double, std::span<const double> y) { return y[0] - 0.3; }, +1, true};
        auto s = integrate_ode(cos_rhs, 0.0, 10.0, {0.0}, o, {a, b});
        REQUIRE(s.status == OdeStatus::event);
        CHECK(s.event_index == 1);
        CHECK(std::abs(s.t - std::asin(0.3)) < 1e-10);
    }
    SUBCASE("non-terminal events do not stop integration") {
        EventSpec ev{[](double, std::span<const double> y) { return y[0] - 0.5; }, 0, false};
        auto s = integrate_ode(cos_rhs, 0.0, 10.0, {0.0}, o, {ev});
        CHECK(s.status == OdeStatus::reached_end);
    }
}

TEST_CASE("escape guard catches finite time blow-up") {
    OdeOptions o;
    o.reltol = 1e-10;
    o.abstol = 1e-10;
    o.escape_norm = 1e6;
    auto s = integrate_ode(
        [](double, std::span<const double> y, std::span<double> dy) { dy[0] = y[0] * y[0]; }, 0.0,
        2.0, {1.0}, o);
    REQUIRE(s.status == OdeStatus::escaped);
    // y = 1/(1-t) passes 1e6 at t = 1 - 1e-6
    CHECK(s.t > 0.99);
    CHECK(s.t < 1.0);
}

TEST_CASE("backward integration") {
    OdeOptions o;
    o.reltol = 1e-12;
    o.abstol = 1e-12;
    auto s = integrate_ode(exp_rhs, 1.0, 0.0, {std::exp(1.0)}, o);
    REQUIRE(s.status == OdeStatus::reached_end);
    CHECK(std::abs(s.y[0] - 1.0) < 1e-11);
}

TEST_CASE("rhs turning non-finite shrinks the step until underflow") {
    auto s = integrate_ode(
        [](double t, std::span<const double>, std::span<double> dy) { dy[0] = std::sqrt(1.0 - t); },
        0.0, 2.0, {0.0});
    CHECK(s.status == OdeStatus::step_underflow);
    CHECK(std::abs(s.t - 1.0) < 1e-8);
}

TEST_CASE("step budget is enforced") {
    OdeOptions o;
    o.reltol = 1e-12;
    o.abstol = 1e-12;
    o.max_steps = 10;
    auto s = integrate_ode(osc_rhs, 0.0, 1e6, {1.0, 0.0}, o);
    CHECK(s.status == OdeStatus::max_steps_exceeded);
}
