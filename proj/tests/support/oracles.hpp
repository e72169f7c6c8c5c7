#pragma once

// Independent reference computations used by the tests. Nothing here calls
// into the library's solver or estimation paths.

#include <cmath>
#include <functional>

namespace oracle {

/// Plain bisection on a sign change; returns the midpoint of the final
/// bracket after `iterations` halvings.
inline double bisect(const std::function<double(double)>& g, double lo, double hi,
                     int iterations = 200) {
    const bool rising = g(lo) < 0.0;
    for (int i = 0; i < iterations; ++i) {
        const double mid = 0.5 * (lo + hi);
        if (mid == lo || mid == hi) {
            break;
        }
        if ((g(mid) < 0.0) == rising) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    return 0.5 * (lo + hi);
}

/// 5-point central first derivative.
inline double derivative(const std::function<double(double)>& g, double x, double h) {
    return (g(x - 2 * h) - 8 * g(x - h) + 8 * g(x + h) - g(x + 2 * h)) / (12 * h);
}

/// Central second difference.
inline double second_derivative(const std::function<double(double)>& g, double x, double h) {
    return (g(x + h) - 2 * g(x) + g(x - h)) / (h * h);
}

inline double relative_error(double got, double want) {
    return std::abs(got - want) / std::max(std::abs(want), 1e-300);
}

}  // namespace oracle
