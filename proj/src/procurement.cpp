#include "shipfreq/procurement.hpp"

#include <cmath>
#include <limits>

#include <fmt/core.h>

#include "shipfreq/errors.hpp"
#include "shipfreq/lambert_w.hpp"

namespace shipfreq {
namespace {

constexpr double kResidualTolerance = 1e-10;
constexpr int kMaxPolishIterations = 200;

// Cost per unit that enters the first-order condition. With upfront
// financing the factor e^{delta r} multiplies the whole objective and drops
// out of the optimality condition.
double unit_cost(const ModelParams& p, ModelVariant variant) {
    return variant == ModelVariant::baseline ? p.c * std::exp(p.delta * p.r) : p.c;
}

double foc_slope(const ModelParams& p, double x, ModelVariant variant) {
    return unit_cost(p, variant) * p.r1 * std::expm1(p.r1 * x / p.q);
}

void check_finite(const ModelParams& p) {
    const auto require = [](double v, const char* name) {
        if (!std::isfinite(v)) {
            throw ValidationError(fmt::format("parameter {} must be finite, got {}", name, v));
        }
    };
    require(p.c, "c");
    require(p.q, "q");
    require(p.f, "f");
    require(p.delta, "delta");
    require(p.r, "r");
    require(p.r1, "r1");
    if (!(p.c > 0.0)) throw ValidationError(fmt::format("parameter c must be > 0, got {}", p.c));
    if (!(p.q > 0.0)) throw ValidationError(fmt::format("parameter q must be > 0, got {}", p.q));
    if (!(p.f >= 0.0)) throw ValidationError(fmt::format("parameter f must be >= 0, got {}", p.f));
    if (!(p.r1 > 0.0)) throw ValidationError(fmt::format("parameter r1 must be > 0, got {}", p.r1));
}

void require_positive_root(const ModelParams& p) {
    if (p.f == 0.0) {
        throw ValidationError("no positive root: with f = 0 the optimal shipment size is 0");
    }
}

struct Bracket {
    double lo;
    double hi;
};

Bracket grow_bracket(const ModelParams& p, ModelVariant variant, double lo, double hi) {
    for (int doubling = 0; foc(p, hi, variant) <= 0.0; ++doubling) {
        if (doubling > 2000 || !std::isfinite(hi)) {
            throw NumericalError("solve: could not bracket the first-order condition");
        }
        lo = hi;
        hi *= 2.0;
    }
    return {lo, hi};
}

struct Polished {
    double x;
    int newton_steps;
    bool bisected;
};

// Newton on the convex, increasing FOC; any step leaving the bracket is
// replaced by bisection.
Polished polish(const ModelParams& p, ModelVariant variant, Bracket b, double x) {
    Polished out{x, 0, false};
    for (int it = 0; it < kMaxPolishIterations; ++it) {
        const double fx = foc(p, out.x, variant);
        if (fx == 0.0) {
            break;
        }
        (fx < 0.0 ? b.lo : b.hi) = out.x;
        double next = out.x - fx / foc_slope(p, out.x, variant);
        if (!(next > b.lo && next < b.hi)) {
            next = 0.5 * (b.lo + b.hi);
            out.bisected = true;
        }
        const double change = std::abs(next - out.x);
        out.x = next;
        ++out.newton_steps;
        if (change <= 4.0 * std::numeric_limits<double>::epsilon() * out.x ||
            b.hi - b.lo <= 4.0 * std::numeric_limits<double>::epsilon() * out.x) {
            break;
        }
    }
    return out;
}

double relative_residual(const ModelParams& p, double x, ModelVariant variant) {
    return foc(p, x, variant) / foc_scale(p, x, variant);
}

ModelSolution finish(const ModelParams& p, ModelVariant variant, double x, SolverPath path) {
    ModelSolution s;
    s.params = p;
    s.variant = variant;
    s.x_star = x;
    s.n = p.q / x;
    s.demand = p.c * x;
    s.cost = total_cost(p, x, variant);
    s.foc_residual = relative_residual(p, x, variant);
    s.soc_value = soc(p, x, variant);
    s.solver_path = path;
    if (!(std::abs(s.foc_residual) <= kResidualTolerance) || !(s.soc_value > 0.0)) {
        throw NumericalError(fmt::format(
            "solve: residual {:.3e} (soc {:.3e}) at x = {:.17g} misses tolerance after "
            "Newton and bisection",
            s.foc_residual, s.soc_value, x));
    }
    return s;
}

ModelSolution solve_checked(const ModelParams& p, ModelVariant variant) {
    require_positive_root(p);
    const double seed = closed_form_root(p, variant);
    double lo = p.q * 1e-12;
    if (!(seed > 0.0) || !std::isfinite(seed)) {
        const Bracket b = grow_bracket(p, variant, lo, p.q);
        const Polished pol = polish(p, variant, b, b.hi);
        return finish(p, variant, pol.x, SolverPath::bisection_fallback);
    }
    const bool seed_ok = std::abs(relative_residual(p, seed, variant)) <= kResidualTolerance;
    Bracket b{lo, seed};
    if (foc(p, seed, variant) < 0.0) {
        b = grow_bracket(p, variant, seed, std::max(p.q, 2.0 * seed));
    } else if (foc(p, lo, variant) >= 0.0) {
        b.lo = 0.0;
    }
    const Polished pol = polish(p, variant, b, seed);
    const SolverPath path = pol.bisected ? SolverPath::bisection_fallback
                            : seed_ok    ? SolverPath::closed_form
                                         : SolverPath::newton;
    return finish(p, variant, pol.x, path);
}

}  // namespace

void ModelParams::validate() const {
    check_finite(*this);
    if (!(delta >= 0.0)) {
        throw ValidationError(fmt::format("parameter delta must be >= 0, got {}", delta));
    }
    if (!(r >= 0.0)) {
        throw ValidationError(fmt::format("parameter r must be >= 0, got {}", r));
    }
}

std::string_view to_string(ModelVariant variant) {
    return variant == ModelVariant::baseline ? "baseline" : "upfront_f";
}

std::string_view to_string(SolverPath path) {
    switch (path) {
        case SolverPath::closed_form:
            return "closed_form";
        case SolverPath::newton:
            return "newton";
        case SolverPath::bisection_fallback:
            return "bisection_fallback";
    }
    return "unknown";
}

ModelVariant parse_variant(std::string_view name) {
    if (name == "baseline") return ModelVariant::baseline;
    if (name == "upfront_f") return ModelVariant::upfront_f;
    throw ValidationError(
        fmt::format("unknown model variant '{}' (expected baseline or upfront_f)", name));
}

double payment(const ModelParams& p, double x) {
    return p.c * x * std::exp(p.delta * p.r) + p.f;
}

double total_cost(const ModelParams& p, double x, ModelVariant variant) {
    const double ax = p.r1 * x / p.q;
    if (!(ax >= 1e-300)) {
        throw NumericalError(
            fmt::format("total_cost: degenerate denominator, r1 x / q = {:.3e}", ax));
    }
    const double annuity = -std::expm1(-ax);
    if (variant == ModelVariant::baseline) {
        return payment(p, x) * std::exp(-p.delta * p.r1) / annuity;
    }
    return std::exp(p.delta * p.r) * (p.c * x + p.f) / annuity;
}

double foc(const ModelParams& p, double x, ModelVariant variant) {
    const double a = unit_cost(p, variant);
    return p.q * a * std::expm1(p.r1 * x / p.q) - a * p.r1 * x - p.f * p.r1;
}

double foc_scale(const ModelParams& p, double x, ModelVariant variant) {
    return unit_cost(p, variant) * p.r1 * x + p.f * p.r1;
}

double soc(const ModelParams& p, double x, ModelVariant variant) {
    const double ax = p.r1 * x / p.q;
    const double discount = variant == ModelVariant::baseline ? -p.delta * p.r1 : 0.0;
    return p.c * p.r1 * std::exp(ax + discount + p.delta * p.r) / (p.q * std::expm1(ax));
}

double closed_form_root(const ModelParams& p, ModelVariant variant) {
    // e^{a x} - a x - b = 0 with a = r1/q, b = 1 + f r1 / (q unit_cost), so
    // x = -(W-1(-e^{-b}) + b) / a. Writing W-1 = -1 - s with
    // s - log1p(s) = b - 1 gives -(W + b) = log1p(s).
    const double a = p.r1 / p.q;
    const double excess = p.f * p.r1 / (p.q * unit_cost(p, variant));
    const double s = lambert_w_lower_neg_exp_offset(excess);
    return std::log1p(s) / a;
}

ModelSolution solve(const ModelParams& p, ModelVariant variant) {
    p.validate();
    return solve_checked(p, variant);
}

ModelSolution solve_by_bracket(const ModelParams& p, ModelVariant variant) {
    p.validate();
    require_positive_root(p);
    const Bracket b = grow_bracket(p, variant, p.q * 1e-12, p.q);
    const Polished pol = polish(p, variant, b, b.hi);
    return finish(p, variant, pol.x,
                  pol.bisected ? SolverPath::bisection_fallback : SolverPath::newton);
}

double financing_demand(const ModelSolution& solution) {
    return solution.params.c * solution.x_star;
}

namespace detail {
ModelSolution solve_extended(const ModelParams& p, ModelVariant variant) {
    check_finite(p);
    return solve_checked(p, variant);
}
}  // namespace detail

}  // namespace shipfreq
