#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "shipfreq/procurement.hpp"

namespace shipfreq {

enum class StaticsParameter { r, r1, delta, f };
enum class StaticsTarget { x_star, n, demand, cost };
enum class SignClaim { nonneg, nonpos, pos, neg, ambiguous };
enum class Verdict { pass, fail, condition_not_met };

std::string_view to_string(StaticsParameter p);
std::string_view to_string(StaticsTarget t);
std::string_view to_string(SignClaim s);
std::string_view to_string(Verdict v);

/// Derivative of one equilibrium quantity with respect to one parameter.
struct StaticsReport {
    std::string claim;  ///< e.g. "dn/df<=0"
    StaticsParameter parameter = StaticsParameter::r;
    StaticsTarget target = StaticsTarget::x_star;
    std::optional<double> analytic_value;
    double numeric_value = 0.0;
    double tolerance_band = 0.0;  ///< round-off floor of the stencil
    SignClaim claimed_sign = SignClaim::ambiguous;
    Verdict verdict = Verdict::pass;
};

/// d2(target)/d(first) d f.
struct CrossPartialReport {
    std::string claim;
    StaticsParameter first = StaticsParameter::r;
    StaticsTarget target = StaticsTarget::demand;
    std::optional<double> analytic_value;  ///< closed-form expression
    double numeric_value = 0.0;
    double tolerance_band = 0.0;
    SignClaim claimed_sign = SignClaim::ambiguous;
    Verdict verdict = Verdict::pass;
};

/// Factor by which c x* e^{delta r} must exceed f for the sign of dC/ddelta
/// to be asserted.
inline constexpr double kCostDominance = 10.0;

/// Sign verdict with a symmetric tolerance band around zero.
Verdict judge(SignClaim claim, double value, double band);

/// Central 5-point step for first derivatives, 1e-5 max(1, |value|).
double first_order_step(double value);
/// Step for nested second derivatives, 1e-4 max(1, |value|).
double cross_step(double value);

double get(const ModelParams& p, StaticsParameter which);
void set(ModelParams& p, StaticsParameter which, double value);

/// Four parameters by four targets of the baseline model, numeric values by
/// 5-point central differences; analytic values where closed forms exist
/// (dx/df and its images in n and D, envelope derivatives of C).
std::vector<StaticsReport> first_order_statics(const ModelParams& params);

/// Cross partials of D and C with f; numeric values by nested 5-point
/// stencils. Claims on C are checked only where 0 < r1 x*/q < 1 and r > r1.
std::vector<CrossPartialReport> cross_partials(const ModelParams& params);

/// Closed-form first derivatives.
double analytic_dx_df(const ModelSolution& s);
double envelope_dc_dr(const ModelSolution& s);
double envelope_dc_ddelta(const ModelSolution& s);
double envelope_dc_df(const ModelSolution& s);
double envelope_dc_dr1(const ModelSolution& s);

struct Range {
    double lo = 0.0;
    double hi = 0.0;
    bool log_scale = false;
};

/// Sampling box for parameter sweeps. Defaults are the standard grid.
struct ParameterGrid {
    Range c{0.1, 10.0, true};
    Range q{10.0, 1e4, true};
    Range f{0.01, 1e3, true};
    Range delta{0.0, 1.0, false};
    Range r{0.0, 0.3, false};
    Range r1{0.005, 0.3, true};

    void validate() const;
};

/// Deterministic i-th draw from the grid under `seed`.
ModelParams draw_params(const ParameterGrid& grid, std::uint64_t seed, std::uint64_t index);

struct ClaimTally {
    std::string claim;
    std::size_t draws = 0;
    std::size_t pass = 0;
    std::size_t fail = 0;
    std::size_t condition_not_met = 0;
    std::vector<std::uint64_t> failing_draws;
};

struct StaticsSummary {
    std::vector<ClaimTally> claims;  ///< in a fixed order; first row is the solver certificate
    std::size_t draws = 0;
    std::size_t solver_errors = 0;

    const ClaimTally* find(std::string_view claim) const;
};

/// Runs first_order_statics and cross_partials on `draws` pseudo-random grid
/// points. A draw whose solve throws is counted against every claim as a
/// failure and the sweep continues.
StaticsSummary statics_sweep(const ParameterGrid& grid, std::size_t draws, std::uint64_t seed);

/// CSV with columns claim,draws,pass,fail,condition_not_met.
std::string summary_csv(const StaticsSummary& summary);

}  // namespace shipfreq
