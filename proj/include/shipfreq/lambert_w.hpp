#pragma once

namespace shipfreq {

/// Real branches of the Lambert W function, the inverse of w -> w e^w.
enum class WBranch {
    principal,  ///< W0, defined on [-1/e, inf), returns w >= -1
    lower,      ///< W-1, defined on [-1/e, 0), returns w <= -1
};

struct BranchedWInput {
    double argument = 0.0;
    WBranch branch = WBranch::principal;
};

/// Evaluates W on the requested real branch by Halley iteration.
///
/// Arguments within 1e-12 of -1/e map to exactly -1. Throws DomainError when
/// the argument is below -1/e, or when the lower branch is requested for a
/// non-negative argument. The result satisfies |w e^w - x| <= 1e-14 |x|.
double lambert_w(double x, WBranch branch);

inline double lambert_w(const BranchedWInput& input) {
    return lambert_w(input.argument, input.branch);
}

/// W-1(-e^{-(1 + excess)}) for excess >= 0, computed without forming the
/// argument. Near the branch point the argument -e^{-b} is indistinguishable
/// from -1/e in double precision, so the closed-form shipment size is built
/// from the offset instead. Solves s - log1p(s) = excess and returns -1 - s.
double lambert_w_lower_neg_exp(double excess);

/// The offset s = -1 - W-1(-e^{-(1 + excess)}) >= 0, returned directly so
/// callers keep its full relative precision when it is small.
double lambert_w_lower_neg_exp_offset(double excess);

}  // namespace shipfreq
