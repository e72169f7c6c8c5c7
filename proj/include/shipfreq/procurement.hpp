#pragma once

#include <string_view>

namespace shipfreq {

/// Structural parameters of the importer's procurement problem.
///
/// Rates are annual and continuously compounded, delivery time is in years.
struct ModelParams {
    double c = 1.0;      ///< marginal production cost per unit
    double q = 1.0;      ///< annual procurement quantity
    double f = 0.0;      ///< fixed cost per shipment
    double delta = 0.0;  ///< delivery time
    double r = 0.0;      ///< exporter's borrowing rate
    double r1 = 0.0;     ///< importer's discount rate

    /// Throws ValidationError naming the first field outside
    /// c > 0, q > 0, f >= 0, delta >= 0, r >= 0, r1 > 0.
    void validate() const;
};

/// Who finances the per-shipment cost.
enum class ModelVariant {
    baseline,   ///< f paid at shipment, no upfront borrowing
    upfront_f,  ///< f borrowed by the exporter together with working capital
};

enum class SolverPath { closed_form, newton, bisection_fallback };

std::string_view to_string(ModelVariant variant);
std::string_view to_string(SolverPath path);
ModelVariant parse_variant(std::string_view name);

struct ModelSolution {
    ModelParams params;
    ModelVariant variant = ModelVariant::baseline;
    double x_star = 0.0;        ///< optimal shipment size
    double n = 0.0;             ///< shipping frequency q / x_star
    double demand = 0.0;        ///< exporter's financing demand c x_star
    double cost = 0.0;          ///< present value of procurement at x_star
    double foc_residual = 0.0;  ///< foc(x_star) divided by its scale
    double soc_value = 0.0;
    SolverPath solver_path = SolverPath::closed_form;
};

/// Exporter's participation payment c x e^{delta r} + f.
double payment(const ModelParams& p, double x);

/// Present value of the infinite stream of orders of size x.
/// Throws NumericalError when r1 x / q underflows the denominator.
double total_cost(const ModelParams& p, double x, ModelVariant variant = ModelVariant::baseline);

/// First-order condition in polynomial-exponential form; negative below the
/// root and positive above it.
double foc(const ModelParams& p, double x, ModelVariant variant = ModelVariant::baseline);

/// Magnitude of the terms in foc(x); residuals are reported relative to it.
double foc_scale(const ModelParams& p, double x, ModelVariant variant = ModelVariant::baseline);

/// Second derivative of total_cost, simplified with the first-order
/// condition. Equals d2C/dx2 at the optimum and is positive for every x > 0.
double soc(const ModelParams& p, double x, ModelVariant variant = ModelVariant::baseline);

/// Shipment size from the Lambert-W closed form, before polishing.
double closed_form_root(const ModelParams& p, ModelVariant variant = ModelVariant::baseline);

/// Solves for the cost-minimising shipment size: Lambert-W seed polished by
/// bracketed Newton. Throws ValidationError for f = 0 (no positive root) or
/// invalid params, NumericalError if the residual tolerance is unmet.
ModelSolution solve(const ModelParams& p, ModelVariant variant = ModelVariant::baseline);

/// Same contract as solve() but ignores the closed form: grows a bracket from
/// q and runs safeguarded Newton from its upper end.
ModelSolution solve_by_bracket(const ModelParams& p, ModelVariant variant = ModelVariant::baseline);

/// c x_star.
double financing_demand(const ModelSolution& solution);

namespace detail {
/// solve() without the sign checks on r and delta. Finite-difference stencils
/// evaluate the smooth extension of x*(r, delta) slightly below zero.
ModelSolution solve_extended(const ModelParams& p, ModelVariant variant);
}  // namespace detail

}  // namespace shipfreq
