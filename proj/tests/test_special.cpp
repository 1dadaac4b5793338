#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <stdexcept>

#include "epcrit/special_functions.hpp"

using namespace epcrit;

// reference values computed with 30-digit arithmetic from the defining series
namespace {
constexpr double kHyp_a4_z03 = 0.47809144373375747874;
constexpr double kHyp_a4_z07 = -0.7302967433402212684;
constexpr double kHyp_a4_z095 = -4.0249223594996192689;
constexpr double kHyp_d5y1_z03 = 0.2988071523335984408;
constexpr double kHyp_d5y1_z085 = -2.9047375096555623056;
constexpr double kHyp_d5y2_z03 = 1.0755736407923669455;
constexpr double kHyp_d5y2_z085 = 1.5424311300297905822;
constexpr double kHyp_d3y1_z03 = 0.65737573513391651667;
constexpr double kHyp_d3y1_z06 = 0.15811388300841901487;
constexpr double kHyp_log_z03 = 0.77807634979732758508;
constexpr double kHyp_log_z08 = 0.18508826498474461231;
constexpr double kHyp_gen_z055 = 1.1908357683130046688;
constexpr double kDigamma_03 = -3.502524222200132989;
constexpr double kDigamma_47 = 1.4374238096317816561;
constexpr double kHeunA_z025 = 1.1558898083013091682;
constexpr double kHeunA_z025_d = 0.74964147611429081661;
constexpr double kHeunB_z025 = 1.0625266711956612054;
constexpr double kHeunB_z025_d = 0.3360938513946939087;
constexpr double kHeunA_z09 = 2.3649512415789161671;
constexpr double kHeunA_z09_d = 5.5386549458786770571;
constexpr double kHeunB_z09 = 1.7635779258631346275;
constexpr double kHeunB_z09_d = 3.4166848410672236865;

double rel(double got, double want) { return std::abs(got - want) / std::abs(want); }

// parameters of the two local solutions used by the attractive-background
// criterion at M0 = 0.6
HeunParams branchA() { return {1.0 / 0.36, 1.5 + 1.0 / 0.72, 0.5, 2.5, 2.0, 0.5}; }
HeunParams branchB() { return {1.0 / 0.36, 0.0, -0.5, 1.5, 0.0, 0.5}; }
constexpr double kBranchB_c1 = 0.18;  // = M0^2/2

}  // namespace

TEST_CASE("hypergeometric series region") {
    CHECK(rel(gauss_2f1({-0.5, 1.5, 0.5}, 0.3), kHyp_a4_z03) < 1e-13);
    CHECK(rel(gauss_2f1({-0.5, 4.0 / 3.0, 1.0 / 3.0}, 0.3), kHyp_d5y1_z03) < 1e-13);
    CHECK(rel(gauss_2f1({1.0 / 6.0, 2.0, 5.0 / 3.0}, 0.3), kHyp_d5y2_z03) < 1e-13);
    CHECK(rel(gauss_2f1({-0.5, 2.0, 1.0}, 0.3), kHyp_d3y1_z03) < 1e-13);
    CHECK(rel(gauss_2f1({-0.5, 2.0, 1.5}, 0.3), kHyp_log_z03) < 1e-13);
    CHECK(gauss_2f1({0.7, -1.2, 2.0}, 0.0) == 1.0);
}

TEST_CASE("hypergeometric connection region") {
    CHECK(rel(gauss_2f1({-0.5, 1.5, 0.5}, 0.7), kHyp_a4_z07) < 1e-13);
    CHECK(rel(gauss_2f1({-0.5, 1.5, 0.5}, 0.95), kHyp_a4_z095) < 1e-13);
    CHECK(rel(gauss_2f1({-0.5, 4.0 / 3.0, 1.0 / 3.0}, 0.85), kHyp_d5y1_z085) < 1e-13);
    CHECK(rel(gauss_2f1({1.0 / 6.0, 2.0, 5.0 / 3.0}, 0.85), kHyp_d5y2_z085) < 1e-13);
    CHECK(rel(gauss_2f1({0.3, 1.7, 2.2}, 0.55), kHyp_gen_z055) < 1e-13);
}

TEST_CASE("hypergeometric logarithmic case c == a+b") {
    CHECK(rel(gauss_2f1({-0.5, 2.0, 1.5}, 0.8), kHyp_log_z08) < 1e-12);
    // the evaluation branches line up across the switch point: the change over
    // dz = 2e-7 must look like a derivative, not a jump
    double lo = gauss_2f1({-0.5, 2.0, 1.5}, 0.4999999);
    double hi = gauss_2f1({-0.5, 2.0, 1.5}, 0.5000001);
    CHECK(std::abs(lo - hi) < 1e-6);
    double glo = gauss_2f1({0.3, 1.7, 2.2}, 0.4999999);
    double ghi = gauss_2f1({0.3, 1.7, 2.2}, 0.5000001);
    CHECK(std::abs(glo - ghi) < 1e-6);
}

TEST_CASE("hypergeometric rejects unsupported input") {
    CHECK_THROWS_AS(gauss_2f1({0.5, 0.5, -1.0}, 0.2), std::invalid_argument);
    CHECK_THROWS_AS(gauss_2f1({0.5, 0.5, 2.0}, 1.0), std::invalid_argument);
    CHECK_THROWS_AS(gauss_2f1({0.5, 0.5, 2.0}, -0.8), std::invalid_argument);
    // c-a-b a nonzero integer in the connection region
    CHECK_THROWS_AS(gauss_2f1({0.5, 0.5, 2.0}, 0.8), std::invalid_argument);
}

TEST_CASE("digamma") {
    CHECK(rel(digamma(0.3), kDigamma_03) < 1e-13);
    CHECK(rel(digamma(4.7), kDigamma_47) < 1e-13);
    // psi(1) = -EulerGamma
    CHECK(std::abs(digamma(1.0) + 0.57721566490153286061) < 1e-14);
    // recurrence psi(x+1) = psi(x) + 1/x
    for (double x : {0.17, 1.3, 2.9, 7.7, -0.4, -2.3}) {
        CHECK(std::abs(digamma(x + 1.0) - digamma(x) - 1.0 / x) < 1e-12);
    }
    CHECK_THROWS_AS(digamma(0.0), std::invalid_argument);
    CHECK_THROWS_AS(digamma(-3.0), std::invalid_argument);
}

TEST_CASE("heun local series") {
    auto va = heun_local(branchA(), 0.25);
    CHECK(rel(va.value, kHeunA_z025) < 1e-12);
    CHECK(rel(va.derivative, kHeunA_z025_d) < 1e-12);
    auto vb = heun_local(branchB(), 0.25, 64, kBranchB_c1);
    CHECK(rel(vb.value, kHeunB_z025) < 1e-12);
    CHECK(rel(vb.derivative, kHeunB_z025_d) < 1e-12);
    // normalization at the origin
    CHECK(heun_local(branchA(), 0.0).value == 1.0);
    CHECK(heun_local(branchB(), 0.0, 64, kBranchB_c1).derivative == doctest::Approx(kBranchB_c1));
}

TEST_CASE("heun continuation towards z = 1") {
    auto va = heun_continue(branchA(), 0.9);
    CHECK(rel(va.value, kHeunA_z09) < 1e-10);
    CHECK(rel(va.derivative, kHeunA_z09_d) < 1e-10);
    auto vb = heun_continue(branchB(), 0.9, kBranchB_c1);
    CHECK(rel(vb.value, kHeunB_z09) < 1e-10);
    CHECK(rel(vb.derivative, kHeunB_z09_d) < 1e-10);
    // continuation agrees with the series where both are valid
    auto s = heun_local(branchA(), 0.3);
    auto c = heun_continue(branchA(), 0.3);
    CHECK(rel(c.value, s.value) < 1e-11);
}

TEST_CASE("heun input validation") {
    CHECK_THROWS_AS(heun_local({2.0, 1.0, 0.5, 0.5, 0.0, 0.5}, 0.2), std::invalid_argument);
    CHECK_THROWS_AS(heun_continue(branchA(), 1.2), std::invalid_argument);
    CHECK_THROWS_AS(heun_local({0.5, 0.0, 0.5, 0.5, 1.0, 0.5}, 0.2), std::invalid_argument);
}
