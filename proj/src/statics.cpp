#include "shipfreq/statics.hpp"

#include <algorithm>
#include <array>
#include <cmath>

#include <fmt/core.h>

#include "shipfreq/errors.hpp"
#include "shipfreq/rng.hpp"

namespace shipfreq {
namespace {

constexpr std::array<int, 4> kOffsets{-2, -1, 1, 2};
constexpr std::array<double, 4> kWeights{1.0 / 12.0, -8.0 / 12.0, 8.0 / 12.0, -1.0 / 12.0};
constexpr std::array<StaticsParameter, 4> kParameters{
    StaticsParameter::r, StaticsParameter::r1, StaticsParameter::delta, StaticsParameter::f};
constexpr std::array<StaticsTarget, 4> kTargets{
    StaticsTarget::x_star, StaticsTarget::n, StaticsTarget::demand, StaticsTarget::cost};

struct Targets {
    std::array<double, 4> v{};  // indexed like kTargets
};

Targets evaluate(const ModelParams& p) {
    const ModelSolution s = detail::solve_extended(p, ModelVariant::baseline);
    return {{s.x_star, s.n, s.demand, s.cost}};
}

// r1 and f must stay positive across the whole stencil.
double bounded_step(const ModelParams& p, StaticsParameter which, double h) {
    if (which == StaticsParameter::r1 || which == StaticsParameter::f) {
        return std::min(h, 0.25 * get(p, which));
    }
    return h;
}

ModelParams shifted(ModelParams p, StaticsParameter which, double by) {
    set(p, which, get(p, which) + by);
    return p;
}

struct FirstClaim {
    StaticsTarget target;
    StaticsParameter parameter;
    const char* claim;
    SignClaim sign;
};

// Order: target-major, parameters r, r1, delta, f.
constexpr std::array<FirstClaim, 16> kFirstClaims{{
    {StaticsTarget::x_star, StaticsParameter::r, "dx/dr<=0", SignClaim::nonpos},
    {StaticsTarget::x_star, StaticsParameter::r1, "dx/dr1<=0", SignClaim::nonpos},
    {StaticsTarget::x_star, StaticsParameter::delta, "dx/ddelta<=0", SignClaim::nonpos},
    {StaticsTarget::x_star, StaticsParameter::f, "dx/df>=0", SignClaim::nonneg},
    {StaticsTarget::n, StaticsParameter::r, "dn/dr>=0", SignClaim::nonneg},
    {StaticsTarget::n, StaticsParameter::r1, "dn/dr1>=0", SignClaim::nonneg},
    {StaticsTarget::n, StaticsParameter::delta, "dn/ddelta>=0", SignClaim::nonneg},
    {StaticsTarget::n, StaticsParameter::f, "dn/df<=0", SignClaim::nonpos},
    {StaticsTarget::demand, StaticsParameter::r, "dD/dr<=0", SignClaim::nonpos},
    {StaticsTarget::demand, StaticsParameter::r1, "dD/dr1<=0", SignClaim::nonpos},
    {StaticsTarget::demand, StaticsParameter::delta, "dD/ddelta<=0", SignClaim::nonpos},
    {StaticsTarget::demand, StaticsParameter::f, "dD/df>=0", SignClaim::nonneg},
    {StaticsTarget::cost, StaticsParameter::r, "dC/dr>=0", SignClaim::nonneg},
    {StaticsTarget::cost, StaticsParameter::r1, "dC/dr1<=0", SignClaim::nonpos},
    {StaticsTarget::cost, StaticsParameter::delta, "dC/ddelta>=0", SignClaim::nonneg},
    {StaticsTarget::cost, StaticsParameter::f, "dC/df>0", SignClaim::pos},
}};

struct CrossClaim {
    StaticsTarget target;
    StaticsParameter first;
    const char* claim;
    SignClaim sign;
};

constexpr std::array<CrossClaim, 6> kCrossClaims{{
    {StaticsTarget::demand, StaticsParameter::r, "d2D/drdf<=0", SignClaim::nonpos},
    {StaticsTarget::demand, StaticsParameter::r1, "d2D/dr1df<=0", SignClaim::nonpos},
    {StaticsTarget::demand, StaticsParameter::delta, "d2D/ddeltadf<=0", SignClaim::nonpos},
    {StaticsTarget::cost, StaticsParameter::r, "d2C/drdf>=0", SignClaim::nonneg},
    {StaticsTarget::cost, StaticsParameter::delta, "d2C/ddeltadf>=0", SignClaim::nonneg},
    {StaticsTarget::cost, StaticsParameter::r1, "d2C/dr1df<0", SignClaim::neg},
}};

ClaimTally tally(std::string claim) {
    ClaimTally t;
    t.claim = std::move(claim);
    return t;
}

std::size_t target_index(StaticsTarget t) {
    return static_cast<std::size_t>(t);
}

std::optional<double> first_order_analytic(const ModelSolution& s, StaticsTarget target,
                                           StaticsParameter parameter) {
    if (target == StaticsTarget::cost) {
        switch (parameter) {
            case StaticsParameter::r:
                return envelope_dc_dr(s);
            case StaticsParameter::r1:
                return envelope_dc_dr1(s);
            case StaticsParameter::delta:
                return envelope_dc_ddelta(s);
            case StaticsParameter::f:
                return envelope_dc_df(s);
        }
    }
    if (parameter != StaticsParameter::f) {
        return std::nullopt;
    }
    const double dx = analytic_dx_df(s);
    switch (target) {
        case StaticsTarget::x_star:
            return dx;
        case StaticsTarget::n:
            return -s.params.q / (s.x_star * s.x_star) * dx;
        case StaticsTarget::demand:
            return s.params.c * dx;
        case StaticsTarget::cost:
            break;
    }
    return std::nullopt;
}

// Closed-form cross partials; the D forms hold x
// fixed in the denominator.
std::optional<double> cross_analytic(const ModelSolution& s, StaticsTarget target,
                                     StaticsParameter first) {
    const ModelParams& p = s.params;
    const double y = p.r1 * s.x_star / p.q;
    const double em1 = std::expm1(y);
    if (target == StaticsTarget::demand) {
        switch (first) {
            case StaticsParameter::r:
                return -p.delta * std::exp(-p.delta * p.r) / em1;
            case StaticsParameter::r1:
                return -s.x_star * std::exp(y - p.delta * p.r) / (p.q * em1 * em1);
            case StaticsParameter::delta:
                return -p.r * std::exp(-p.delta * p.r) / em1;
            case StaticsParameter::f:
                break;
        }
        return std::nullopt;
    }
    if (first == StaticsParameter::delta) {
        const double dxdf = analytic_dx_df(s);
        const double ey = std::exp(-y);
        const double annuity = -std::expm1(-y);
        const double first_term = p.c * (p.r - p.r1) * std::exp(p.delta * (p.r - p.r1)) * dxdf *
                                  (annuity - y * ey);
        const double second_term =
            p.r1 * std::exp(-p.delta * p.r1) * (ey * (p.f * p.r1 / p.q * dxdf + 1.0) - 1.0);
        return (first_term + second_term) / (annuity * annuity);
    }
    return std::nullopt;
}

}  // namespace

std::string_view to_string(StaticsParameter p) {
    switch (p) {
        case StaticsParameter::r:
            return "r";
        case StaticsParameter::r1:
            return "r1";
        case StaticsParameter::delta:
            return "delta";
        case StaticsParameter::f:
            return "f";
    }
    return "?";
}

std::string_view to_string(StaticsTarget t) {
    switch (t) {
        case StaticsTarget::x_star:
            return "x_star";
        case StaticsTarget::n:
            return "n";
        case StaticsTarget::demand:
            return "demand";
        case StaticsTarget::cost:
            return "cost";
    }
    return "?";
}

std::string_view to_string(SignClaim s) {
    switch (s) {
        case SignClaim::nonneg:
            return "nonneg";
        case SignClaim::nonpos:
            return "nonpos";
        case SignClaim::pos:
            return "pos";
        case SignClaim::neg:
            return "neg";
        case SignClaim::ambiguous:
            return "ambiguous";
    }
    return "?";
}

std::string_view to_string(Verdict v) {
    switch (v) {
        case Verdict::pass:
            return "pass";
        case Verdict::fail:
            return "fail";
        case Verdict::condition_not_met:
            return "condition_not_met";
    }
    return "?";
}

Verdict judge(SignClaim claim, double value, double band) {
    if (!std::isfinite(value)) {
        return Verdict::fail;
    }
    bool ok = true;
    switch (claim) {
        case SignClaim::nonneg:
            ok = value >= -band;
            break;
        case SignClaim::nonpos:
            ok = value <= band;
            break;
        case SignClaim::pos:
            ok = value > band;
            break;
        case SignClaim::neg:
            ok = value < -band;
            break;
        case SignClaim::ambiguous:
            break;
    }
    return ok ? Verdict::pass : Verdict::fail;
}

double first_order_step(double value) {
    return 1e-5 * std::max(1.0, std::abs(value));
}

double cross_step(double value) {
    return 1e-4 * std::max(1.0, std::abs(value));
}

double get(const ModelParams& p, StaticsParameter which) {
    switch (which) {
        case StaticsParameter::r:
            return p.r;
        case StaticsParameter::r1:
            return p.r1;
        case StaticsParameter::delta:
            return p.delta;
        case StaticsParameter::f:
            return p.f;
    }
    return 0.0;
}

void set(ModelParams& p, StaticsParameter which, double value) {
    switch (which) {
        case StaticsParameter::r:
            p.r = value;
            break;
        case StaticsParameter::r1:
            p.r1 = value;
            break;
        case StaticsParameter::delta:
            p.delta = value;
            break;
        case StaticsParameter::f:
            p.f = value;
            break;
    }
}

double analytic_dx_df(const ModelSolution& s) {
    const ModelParams& p = s.params;
    return std::exp(-p.delta * p.r) / (p.c * std::expm1(p.r1 * s.x_star / p.q));
}

double envelope_dc_dr(const ModelSolution& s) {
    const ModelParams& p = s.params;
    const double annuity = -std::expm1(-p.r1 * s.x_star / p.q);
    return p.c * s.x_star * p.delta * std::exp(p.delta * (p.r - p.r1)) / annuity;
}

double envelope_dc_ddelta(const ModelSolution& s) {
    const ModelParams& p = s.params;
    const double annuity = -std::expm1(-p.r1 * s.x_star / p.q);
    return (p.c * s.x_star * (p.r - p.r1) * std::exp(p.delta * (p.r - p.r1)) -
            p.f * p.r1 * std::exp(-p.delta * p.r1)) /
           annuity;
}

double envelope_dc_df(const ModelSolution& s) {
    const ModelParams& p = s.params;
    return std::exp(-p.delta * p.r1) / -std::expm1(-p.r1 * s.x_star / p.q);
}

double envelope_dc_dr1(const ModelSolution& s) {
    const ModelParams& p = s.params;
    const double y = p.r1 * s.x_star / p.q;
    const double annuity = -std::expm1(-y);
    return -payment(p, s.x_star) * std::exp(-p.delta * p.r1) *
           (p.delta * annuity + s.x_star / p.q * std::exp(-y)) / (annuity * annuity);
}

std::vector<StaticsReport> first_order_statics(const ModelParams& params) {
    params.validate();
    const ModelSolution base = solve(params, ModelVariant::baseline);

    std::array<std::array<double, 4>, 4> numeric{};  // [parameter][target]
    std::array<std::array<double, 4>, 4> band{};
    for (std::size_t k = 0; k < kParameters.size(); ++k) {
        const StaticsParameter which = kParameters[k];
        const double h = bounded_step(params, which, first_order_step(get(params, which)));
        std::array<double, 4> acc{};
        std::array<double, 4> magnitude{};
        for (std::size_t i = 0; i < kOffsets.size(); ++i) {
            const Targets t = evaluate(shifted(params, which, kOffsets[i] * h));
            for (std::size_t j = 0; j < 4; ++j) {
                acc[j] += kWeights[i] * t.v[j];
                magnitude[j] = std::max(magnitude[j], std::abs(t.v[j]));
            }
        }
        for (std::size_t j = 0; j < 4; ++j) {
            numeric[k][j] = acc[j] / h;
            band[k][j] = 1e-12 * magnitude[j] / h;
        }
    }

    const double cost_margin = params.c * base.x_star * std::exp(params.delta * params.r);
    const bool dominance = params.r > params.r1 && cost_margin >= kCostDominance * params.f;

    std::vector<StaticsReport> out;
    out.reserve(kFirstClaims.size());
    for (const FirstClaim& fc : kFirstClaims) {
        const auto k = static_cast<std::size_t>(fc.parameter);
        const auto j = target_index(fc.target);
        StaticsReport rep;
        rep.claim = fc.claim;
        rep.parameter = fc.parameter;
        rep.target = fc.target;
        rep.analytic_value = first_order_analytic(base, fc.target, fc.parameter);
        rep.numeric_value = numeric[k][j];
        rep.tolerance_band = band[k][j];
        rep.claimed_sign = fc.sign;
        const bool conditional =
            fc.target == StaticsTarget::cost && fc.parameter == StaticsParameter::delta;
        rep.verdict = (conditional && !dominance) ? Verdict::condition_not_met
                                                  : judge(fc.sign, rep.numeric_value, rep.tolerance_band);
        out.push_back(std::move(rep));
    }
    return out;
}

std::vector<CrossPartialReport> cross_partials(const ModelParams& params) {
    params.validate();
    const ModelSolution base = solve(params, ModelVariant::baseline);
    const double y = params.r1 * base.x_star / params.q;
    const bool sign_condition = y > 0.0 && y < 1.0 && params.r > params.r1;

    const double hf = bounded_step(params, StaticsParameter::f, cross_step(params.f));
    std::vector<CrossPartialReport> out;
    out.reserve(kCrossClaims.size());
    for (const CrossClaim& cc : kCrossClaims) {
        const double h1 = bounded_step(params, cc.first, cross_step(get(params, cc.first)));
        const auto j = target_index(cc.target);
        double acc = 0.0;
        double magnitude = 0.0;
        for (std::size_t a = 0; a < kOffsets.size(); ++a) {
            const ModelParams outer = shifted(params, cc.first, kOffsets[a] * h1);
            for (std::size_t b = 0; b < kOffsets.size(); ++b) {
                const Targets t = evaluate(shifted(outer, StaticsParameter::f, kOffsets[b] * hf));
                acc += kWeights[a] * kWeights[b] * t.v[j];
                magnitude = std::max(magnitude, std::abs(t.v[j]));
            }
        }
        CrossPartialReport rep;
        rep.claim = cc.claim;
        rep.first = cc.first;
        rep.target = cc.target;
        rep.analytic_value = cross_analytic(base, cc.target, cc.first);
        rep.numeric_value = acc / (h1 * hf);
        rep.tolerance_band = 1e-12 * magnitude / (h1 * hf);
        rep.claimed_sign = cc.sign;
        const bool conditional = cc.target == StaticsTarget::cost;
        rep.verdict = (conditional && !sign_condition)
                          ? Verdict::condition_not_met
                          : judge(cc.sign, rep.numeric_value, rep.tolerance_band);
        out.push_back(std::move(rep));
    }
    return out;
}

void ParameterGrid::validate() const {
    const auto check = [](const Range& range, const char* name, bool positive) {
        if (!(range.lo <= range.hi) || !std::isfinite(range.lo) || !std::isfinite(range.hi)) {
            throw ValidationError(fmt::format("grid range for {} is empty or not finite", name));
        }
        if ((positive || range.log_scale) && !(range.lo > 0.0)) {
            throw ValidationError(fmt::format("grid range for {} must be positive", name));
        }
        if (!(range.lo >= 0.0)) {
            throw ValidationError(fmt::format("grid range for {} must be non-negative", name));
        }
    };
    check(c, "c", true);
    check(q, "q", true);
    check(f, "f", true);
    check(delta, "delta", false);
    check(r, "r", false);
    check(r1, "r1", true);
}

ModelParams draw_params(const ParameterGrid& grid, std::uint64_t seed, std::uint64_t index) {
    auto rng = make_stream(seed, "statics.draw", index);
    const auto sample = [&rng](const Range& range) {
        if (range.log_scale) {
            return std::exp(uniform(rng, std::log(range.lo), std::log(range.hi)));
        }
        return uniform(rng, range.lo, range.hi);
    };
    ModelParams p;
    p.c = sample(grid.c);
    p.q = sample(grid.q);
    p.f = sample(grid.f);
    p.delta = sample(grid.delta);
    p.r = sample(grid.r);
    p.r1 = sample(grid.r1);
    return p;
}

const ClaimTally* StaticsSummary::find(std::string_view claim) const {
    const auto it = std::find_if(claims.begin(), claims.end(),
                                 [claim](const ClaimTally& t) { return t.claim == claim; });
    return it == claims.end() ? nullptr : &*it;
}

StaticsSummary statics_sweep(const ParameterGrid& grid, std::size_t draws, std::uint64_t seed) {
    grid.validate();
    StaticsSummary summary;
    summary.claims.push_back(tally("solve:certificate"));
    for (const FirstClaim& fc : kFirstClaims) {
        summary.claims.push_back(tally(fc.claim));
    }
    for (const CrossClaim& cc : kCrossClaims) {
        summary.claims.push_back(tally(cc.claim));
    }

    const auto tally = [](ClaimTally& t, Verdict v, std::uint64_t index) {
        ++t.draws;
        switch (v) {
            case Verdict::pass:
                ++t.pass;
                break;
            case Verdict::fail:
                ++t.fail;
                t.failing_draws.push_back(index);
                break;
            case Verdict::condition_not_met:
                ++t.condition_not_met;
                break;
        }
    };

    for (std::uint64_t i = 0; i < draws; ++i) {
        const ModelParams p = draw_params(grid, seed, i);
        std::vector<StaticsReport> first;
        std::vector<CrossPartialReport> cross;
        bool certified = false;
        try {
            const ModelSolution s = solve(p);
            certified = std::abs(s.foc_residual) <= 1e-10 && s.soc_value > 0.0;
            first = first_order_statics(p);
            cross = cross_partials(p);
        } catch (const std::exception&) {
            ++summary.solver_errors;
            for (ClaimTally& t : summary.claims) {
                tally(t, Verdict::fail, i);
            }
            continue;
        }
        tally(summary.claims[0], certified ? Verdict::pass : Verdict::fail, i);
        for (std::size_t k = 0; k < first.size(); ++k) {
            tally(summary.claims[1 + k], first[k].verdict, i);
        }
        for (std::size_t k = 0; k < cross.size(); ++k) {
            tally(summary.claims[1 + first.size() + k], cross[k].verdict, i);
        }
    }
    summary.draws = draws;
    return summary;
}

std::string summary_csv(const StaticsSummary& summary) {
    std::string out = "claim,draws,pass,fail,condition_not_met\n";
    for (const ClaimTally& t : summary.claims) {
        out += fmt::format("{},{},{},{},{}\n", t.claim, t.draws, t.pass, t.fail, t.condition_not_met);
    }
    return out;
}

}  // namespace shipfreq
