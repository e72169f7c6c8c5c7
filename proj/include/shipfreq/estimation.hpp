#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "shipfreq/panel.hpp"
#include "shipfreq/terms.hpp"

namespace shipfreq {

enum class Outcome { count, ln_count, ln_pershipment_value, ln_export_value, ln_export_weight };
enum class Estimator { ols, ppml };

std::string_view to_string(Outcome o);
std::string_view to_string(Estimator e);
Outcome parse_outcome(std::string_view name);
Estimator parse_estimator(std::string_view name);

struct EstimationSpec {
    Outcome outcome = Outcome::count;
    std::vector<std::string> regressors;  ///< term syntax of parse_term
    std::vector<std::string> fe_levels;   ///< grouping-key syntax of parse_group_key
    std::string cluster;                  ///< grouping key; empty = one cluster per row
    Estimator estimator = Estimator::ppml;

    void validate() const;
};

/// Regressors of the shipment-frequency regression with the full destination
/// covariate set.
std::vector<std::string> default_regressors();

/// One row of the design, as assembled by build_design.
struct DesignRow {
    double y = 0.0;
    std::vector<double> x;
    std::vector<int> fe_codes;  ///< one per FE level
    int cluster_code = 0;
    double weight = 1.0;
};

/// Column-major design. Codes are dense, assigned in sorted label order.
struct Design {
    std::vector<std::string> names;
    Eigen::VectorXd y;
    Eigen::MatrixXd X;
    Eigen::VectorXd weights;                ///< prior weights, all positive
    std::vector<std::string> fe_names;
    std::vector<std::vector<int>> fe_codes;  ///< [level][row]
    std::vector<int> cluster_codes;
    std::vector<std::size_t> source_rows;   ///< panel index of each row
    std::size_t n_dropped_missing = 0;      ///< rows without a defined outcome

    std::size_t rows() const { return static_cast<std::size_t>(y.size()); }
    DesignRow row(std::size_t i) const;
};

/// Rows whose log outcome is undefined (zero count, absent value) are
/// dropped and counted; a nonpositive value under log() in a regressor is
/// an error naming the row.
Design build_design(const Panel& panel, const EstimationSpec& spec);

/// Keep-mask after iteratively dropping observations that are alone in a
/// group of some FE level.
struct SingletonResult {
    std::vector<char> keep;
    std::size_t dropped = 0;
};
SingletonResult drop_singletons(const std::vector<std::vector<int>>& fe_codes,
                                std::vector<char> keep);

struct AbsorbInfo {
    int sweeps = 0;
    double last_change = 0.0;
};

/// Weighted alternating projections: subtracts weighted group means level
/// by level (Gauss-Seidel) from every column of `columns` until the largest
/// change in a sweep is at most `tolerance` times the column scale.
AbsorbInfo absorb_fixed_effects(Eigen::Ref<Eigen::MatrixXd> columns,
                                const std::vector<std::vector<int>>& fe_codes,
                                const Eigen::VectorXd& weights, double tolerance = 1e-10,
                                int max_sweeps = 100000);

/// Cluster-robust sandwich (X'WX)^-1 (sum_g s_g s_g') (X'WX)^-1 with
/// s_g = sum_{i in g} x_i w_i e_i, scaled by G/(G-1) (N-1)/(N-K).
/// X should already be FE-absorbed. Throws ValidationError if G < 2.
Eigen::MatrixXd cluster_vcov(const Eigen::MatrixXd& X, const Eigen::VectorXd& weights,
                             const Eigen::VectorXd& residuals, const std::vector<int>& clusters);

struct EstimateResult {
    Estimator estimator = Estimator::ppml;
    std::vector<std::string> names;
    Eigen::VectorXd coefficients;  ///< NaN for omitted columns
    Eigen::MatrixXd vcov;          ///< NaN rows/cols for omitted columns
    Eigen::VectorXd se;
    std::vector<char> omitted;
    std::size_t n_obs_used = 0;
    std::size_t n_dropped_separation = 0;
    std::size_t n_dropped_singleton = 0;
    std::size_t n_dropped_missing = 0;
    std::size_t n_clusters = 0;
    double small_sample_factor = 1.0;
    double fit = 0.0;  ///< pseudo-R2 (ppml) or R2 (ols)
    double deviance = 0.0;
    double null_deviance = 0.0;
    int iterations = 0;
    double final_deviance_change = 0.0;
    std::vector<std::string> warnings;
    Eigen::VectorXd fitted;            ///< mu (ppml) or fitted y (ols) on used rows
    std::vector<std::size_t> used_rows;  ///< design rows used in the fit

    /// Index of the named coefficient; throws ValidationError if unknown.
    std::size_t index(std::string_view name) const;
    double coefficient(std::string_view name) const;
    double standard_error(std::string_view name) const;
};

EstimateResult fit_ols(const Design& design);

struct PpmlOptions {
    double tolerance = 1e-9;  ///< relative deviance change
    int max_iterations = 100;
    bool check_separation = true;
};

EstimateResult fit_ppml(const Design& design, const PpmlOptions& options = {});

/// build_design then fit_ols or fit_ppml per spec.estimator.
EstimateResult estimate(const Panel& panel, const EstimationSpec& spec);

/// (1.1^beta - 1) * 100: percent change per +10% in a log regressor.
double log_effect(double beta);
/// (e^beta - 1) * 100: percent change per unit of a level regressor.
double level_effect(double beta);
/// True for single-factor terms in logs (log(...) or an ln_ column).
bool is_log_term(std::string_view name);

struct EffectRow {
    std::string term;
    double coefficient = 0.0;
    double effect = 0.0;
    bool per_10pct = false;
};

/// Effects for the named terms, or for every estimated term if empty.
std::vector<EffectRow> elasticity_effects(const EstimateResult& result,
                                          const std::vector<std::string>& terms = {});

/// term,coefficient,clustered_se,effect_per_10pct_or_unit
std::string results_csv(const EstimateResult& result);
/// Key-value block echoing the spec, drops and convergence.
std::string run_metadata(const EstimateResult& result, const EstimationSpec& spec);

}  // namespace shipfreq
