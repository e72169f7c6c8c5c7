#include <doctest.h>

#include <cmath>
#include <limits>
#include <numbers>
#include <random>

#include "oracles.hpp"
#include "shipfreq/errors.hpp"
#include "shipfreq/lambert_w.hpp"

using shipfreq::lambert_w;
using shipfreq::WBranch;

namespace {
constexpr double kInvE = 0.36787944117144233;
}

TEST_CASE("lambert_w: trivial values") {
    CHECK(lambert_w(0.0, WBranch::principal) == 0.0);
    CHECK(lambert_w(std::numbers::e, WBranch::principal) == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(lambert_w(-kInvE, WBranch::lower) == -1.0);
    CHECK(lambert_w(-kInvE, WBranch::principal) == -1.0);
    CHECK(lambert_w(shipfreq::BranchedWInput{-kInvE + 5e-13, WBranch::lower}) == -1.0);
}

TEST_CASE("lambert_w: lower branch at -0.1 matches bisection") {
    const double oracle = oracle::bisect([](double w) { return w * std::exp(w) + 0.1; }, -20.0, -1.0);
    // Frozen from the bisection oracle above.
    CHECK(oracle == doctest::Approx(-3.577152063957297).epsilon(1e-15));
    const double w = lambert_w(-0.1, WBranch::lower);
    CHECK(oracle::relative_error(w, oracle) < 1e-14);
    CHECK(std::abs(w * std::exp(w) + 0.1) <= 1e-14 * 0.1);
}

TEST_CASE("lambert_w: domain errors") {
    CHECK_THROWS_AS(lambert_w(-0.4, WBranch::principal), shipfreq::DomainError);
    CHECK_THROWS_AS(lambert_w(-0.4, WBranch::lower), shipfreq::DomainError);
    CHECK_THROWS_AS(lambert_w(0.0, WBranch::lower), shipfreq::DomainError);
    CHECK_THROWS_AS(lambert_w(1.0, WBranch::lower), shipfreq::DomainError);
    CHECK_THROWS_AS(lambert_w(std::nan(""), WBranch::principal), shipfreq::DomainError);
}

TEST_CASE("lambert_w: round trip on both branches") {
    std::mt19937_64 rng(20240601);
    std::uniform_real_distribution<double> upper(-1.0, 20.0);
    std::uniform_real_distribution<double> lowerw(-20.0, -1.0);
    int checked = 0;
    for (int i = 0; i < 10000; ++i) {
        const double w0 = upper(rng);
        const double got0 = lambert_w(w0 * std::exp(w0), WBranch::principal);
        CHECK(oracle::relative_error(got0, w0) <= 1e-12);
        CHECK(got0 >= -1.0);

        const double w1 = lowerw(rng);
        const double got1 = lambert_w(w1 * std::exp(w1), WBranch::lower);
        CHECK(oracle::relative_error(got1, w1) <= 1e-12);
        CHECK(got1 <= -1.0);
        ++checked;
    }
    CHECK(checked == 10000);
}

TEST_CASE("lambert_w: residual bound across magnitudes") {
    for (double x : {-0.36, -0.2, -1e-3, 1e-12, 1e-3, 0.5, 3.0, 1e2, 1e10, 1e300}) {
        const double w = lambert_w(x, WBranch::principal);
        CHECK(std::abs(w * std::exp(w) - x) <= 1e-14 * std::abs(x));
    }
    for (double x : {-0.3678, -0.3, -0.1, -1e-5}) {
        const double w = lambert_w(x, WBranch::lower);
        CHECK(std::abs(w * std::exp(w) - x) <= 1e-14 * std::abs(x));
    }
    // Far down the lower branch one ulp of w moves w e^w by |1 + w| eps.
    for (double x : {-1e-100, -1e-280}) {
        const double w = lambert_w(x, WBranch::lower);
        const double floor = 4.0 * std::numeric_limits<double>::epsilon() * std::abs(1.0 + w);
        CHECK(std::abs(w * std::exp(w) - x) <= floor * std::abs(x));
    }
    // e^w is subnormal at -1e-300; check w + log(-w) = log(1e-300).
    const double deep = lambert_w(-1e-300, WBranch::lower);
    CHECK(std::abs(deep + std::log(-deep) - std::log(1e-300)) <= 1e-12);
}

TEST_CASE("lambert_w: monotone on each branch") {
    double prev0 = lambert_w(-kInvE + 1e-9, WBranch::principal);
    double prev1 = lambert_w(-kInvE + 1e-9, WBranch::lower);
    for (int i = 1; i <= 400; ++i) {
        const double x = -kInvE + 1e-9 + i * (kInvE - 2e-9) / 400.0;
        const double w0 = lambert_w(x, WBranch::principal);
        const double w1 = lambert_w(x, WBranch::lower);
        CHECK(w0 > prev0);
        CHECK(w1 < prev1);
        prev0 = w0;
        prev1 = w1;
    }
    CHECK(lambert_w(10.0, WBranch::principal) < lambert_w(11.0, WBranch::principal));
}

TEST_CASE("lambert_w_lower_neg_exp agrees with the generic branch") {
    for (double excess : {1e-3, 0.1, 0.5, 1.0, 3.0, 50.0}) {
        const double direct = lambert_w(-std::exp(-(1.0 + excess)), WBranch::lower);
        CHECK(oracle::relative_error(shipfreq::lambert_w_lower_neg_exp(excess), direct) < 1e-13);
    }
    CHECK(shipfreq::lambert_w_lower_neg_exp(0.0) == -1.0);
    CHECK_THROWS_AS(shipfreq::lambert_w_lower_neg_exp(-1.0), shipfreq::DomainError);
}

TEST_CASE("lambert_w_lower_neg_exp_offset keeps precision near the branch point") {
    // s - log1p(s) = excess; compare against a bisection on the series form.
    for (double excess : {1e-14, 1e-10, 1e-6}) {
        const double s = shipfreq::lambert_w_lower_neg_exp_offset(excess);
        const auto g = [excess](double t) {
            double sum = 0.0;
            double power = t;
            for (int k = 2; k < 30; ++k) {
                power *= -t;
                sum -= power / k;  // t^2/2 - t^3/3 + ...
            }
            return sum - excess;
        };
        const double want = oracle::bisect(g, 0.0, 1.0);
        CHECK(oracle::relative_error(s, want) < 1e-13);
    }
}
