#include "shipfreq/lambert_w.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include <fmt/core.h>

#include "shipfreq/errors.hpp"

namespace shipfreq {
namespace {

constexpr double kInvE = 0.36787944117144233;  // 1/e
constexpr double kBranchWindow = 1e-12;
constexpr int kMaxIterations = 50;

// Series about the branch point in p = +-sqrt(2(e x + 1)).
double branch_point_seed(double x, double sign) {
    const double p = sign * std::sqrt(std::max(0.0, 2.0 * (std::numbers::e * x + 1.0)));
    return -1.0 + p * (1.0 + p * (-1.0 / 3.0 + p * (11.0 / 72.0)));
}

double principal_seed(double x) {
    if (x < -0.32) {
        return branch_point_seed(x, 1.0);
    }
    if (x < 3.0) {
        // Pade-like blend; accurate to a few percent on (-0.32, 3).
        return x * (1.0 + 4.0 / 3.0 * x) / (1.0 + x * (7.0 / 3.0 + 5.0 / 6.0 * x));
    }
    const double l1 = std::log(x);
    const double l2 = std::log(l1);
    return l1 - l2 + l2 / l1;
}

double lower_seed(double x) {
    if (x < -0.25) {
        return branch_point_seed(x, -1.0);
    }
    const double l1 = std::log(-x);
    const double l2 = std::log(-l1);
    return l1 - l2 + l2 / l1;
}

double halley(double x, double w) {
    for (int it = 0; it < kMaxIterations; ++it) {
        const double ew = std::exp(w);
        const double f = w * ew - x;
        const double wp1 = w + 1.0;
        if (f == 0.0 || wp1 == 0.0) {
            break;
        }
        const double step = f / (ew * wp1 - (w + 2.0) * f / (2.0 * wp1));
        w -= step;
        if (std::abs(step) <= 1e-15 * (1.0 + std::abs(w))) {
            break;
        }
    }
    return w;
}

// Relative residual floor. Rounding w by one ulp moves w e^w by a relative
// |1 + w| eps, so for |w| beyond ~10 the floor grows with |w|.
double residual_tolerance(double w) {
    return std::max(1e-14, 4.0 * std::numeric_limits<double>::epsilon() * std::abs(1.0 + w));
}

void check_residual(double x, double w) {
    double residual = 0.0;
    bool ok = false;
    if (std::abs(x) >= 1e-280) {
        residual = std::abs(w * std::exp(w) - x);
        ok = residual <= residual_tolerance(w) * std::abs(x);
    } else {
        // e^w is subnormal here; log(w e^w / x) is the relative residual.
        residual = std::abs(w + std::log(std::abs(w)) - std::log(std::abs(x)));
        ok = w != 0.0 && residual <= residual_tolerance(w);
    }
    if (!ok) {
        throw NumericalError(fmt::format(
            "lambert_w: residual {:.3e} at argument {:.17g} exceeds tolerance", residual, x));
    }
}

// s - log1p(s) without cancellation for small s, via t = s / (2 + s):
// s - log1p(s) = 2t^2/(1-t) - 2(t^3/3 + t^5/5 + ...).
double excess_of(double s) {
    if (s >= 0.5) {
        return s - std::log1p(s);
    }
    const double t = s / (2.0 + s);
    const double t2 = t * t;
    double odd = t * t2;
    double tail = 0.0;
    for (int k = 3; k < 41; k += 2) {
        const double term = odd / k;
        tail += term;
        if (term < 1e-18 * tail) {
            break;
        }
        odd *= t2;
    }
    return 2.0 * t2 / (1.0 - t) - 2.0 * tail;
}

}  // namespace

double lambert_w(double x, WBranch branch) {
    if (std::isnan(x)) {
        throw DomainError("lambert_w: argument is NaN");
    }
    if (x < -kInvE - kBranchWindow) {
        throw DomainError(fmt::format("lambert_w: argument {:.17g} is below -1/e", x));
    }
    if (std::abs(x + kInvE) <= kBranchWindow) {
        return -1.0;
    }
    if (branch == WBranch::principal) {
        if (x == 0.0) {
            return 0.0;
        }
        if (std::isinf(x)) {
            return x;
        }
        const double w = halley(x, principal_seed(x));
        check_residual(x, w);
        return w;
    }
    if (x >= 0.0) {
        throw DomainError(
            fmt::format("lambert_w: lower branch requires a negative argument, got {:.17g}", x));
    }
    const double w = halley(x, lower_seed(x));
    check_residual(x, w);
    return w;
}

double lambert_w_lower_neg_exp(double excess) {
    return -1.0 - lambert_w_lower_neg_exp_offset(excess);
}

double lambert_w_lower_neg_exp_offset(double excess) {
    if (!(excess >= 0.0)) {
        throw DomainError(fmt::format("lambert_w_lower_neg_exp: excess {:.17g} is negative", excess));
    }
    if (excess == 0.0) {
        return 0.0;
    }
    if (std::isinf(excess)) {
        return excess;
    }
    // s - log1p(s) ~ s^2/2 near zero and ~ s for large s.
    double s = excess < 1.0 ? std::sqrt(2.0 * excess) * (1.0 + std::sqrt(2.0 * excess) / 3.0)
                            : excess + std::log1p(excess + std::log1p(excess));
    for (int it = 0; it < kMaxIterations; ++it) {
        const double h = excess_of(s) - excess;
        const double d1 = s / (1.0 + s);
        const double d2 = 1.0 / ((1.0 + s) * (1.0 + s));
        const double step = h / (d1 - 0.5 * h * d2 / d1);
        const double next = s - step;
        s = next > 0.0 ? next : 0.5 * s;
        if (std::abs(step) <= 1e-16 * (1.0 + s)) {
            break;
        }
    }
    const double residual = std::abs(excess_of(s) - excess);
    if (!(residual <= 1e-14 * excess)) {
        throw NumericalError(fmt::format(
            "lambert_w_lower_neg_exp: residual {:.3e} at excess {:.17g}", residual, excess));
    }
    return s;
}

}  // namespace shipfreq
