#include "shipfreq/estimation.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>

#include <fmt/core.h>

#include "shipfreq/errors.hpp"
#include "shipfreq/panel_io.hpp"

namespace shipfreq {
namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
// Pivots below this fraction of the leading pivot are treated as zero.
constexpr double kPivotThreshold = 1e-9;

std::vector<int> dense_codes(const std::vector<std::string>& labels) {
    std::vector<std::string> sorted = labels;
    std::sort(sorted.begin(), sorted.end());
    sorted.erase(std::unique(sorted.begin(), sorted.end()), sorted.end());
    std::vector<int> codes(labels.size());
    for (std::size_t i = 0; i < labels.size(); ++i) {
        codes[i] = static_cast<int>(std::lower_bound(sorted.begin(), sorted.end(), labels[i]) - sorted.begin());
    }
    return codes;
}

std::vector<int> dense_codes(const std::vector<int>& raw) {
    std::vector<int> sorted = raw;
    std::sort(sorted.begin(), sorted.end());
    sorted.erase(std::unique(sorted.begin(), sorted.end()), sorted.end());
    std::vector<int> codes(raw.size());
    for (std::size_t i = 0; i < raw.size(); ++i) {
        codes[i] = static_cast<int>(std::lower_bound(sorted.begin(), sorted.end(), raw[i]) - sorted.begin());
    }
    return codes;
}

// Rows of `design` selected by `keep`, with FE and cluster codes re-densified.
struct Subset {
    Eigen::VectorXd y;
    Eigen::MatrixXd X;
    Eigen::VectorXd w;
    std::vector<std::vector<int>> fe;
    std::vector<int> clusters;
    std::vector<std::size_t> rows;  // indices into the design
};

Subset take(const Design& d, const std::vector<char>& keep) {
    Subset s;
    for (std::size_t i = 0; i < keep.size(); ++i) {
        if (keep[i]) {
            s.rows.push_back(i);
        }
    }
    const auto n = static_cast<Eigen::Index>(s.rows.size());
    s.y.resize(n);
    s.X.resize(n, d.X.cols());
    s.w.resize(n);
    for (Eigen::Index k = 0; k < n; ++k) {
        const auto i = static_cast<Eigen::Index>(s.rows[static_cast<std::size_t>(k)]);
        s.y(k) = d.y(i);
        s.X.row(k) = d.X.row(i);
        s.w(k) = d.weights(i);
    }
    for (const auto& level : d.fe_codes) {
        std::vector<int> codes;
        codes.reserve(s.rows.size());
        for (const std::size_t i : s.rows) codes.push_back(level[i]);
        s.fe.push_back(dense_codes(codes));
    }
    std::vector<int> clusters;
    clusters.reserve(s.rows.size());
    for (const std::size_t i : s.rows) clusters.push_back(d.cluster_codes[i]);
    s.clusters = dense_codes(clusters);
    return s;
}

int count_groups(const std::vector<int>& codes) {
    return codes.empty() ? 0 : *std::max_element(codes.begin(), codes.end()) + 1;
}

// Columns of X that survive pruning: first those not absorbed by the fixed
// effects, then a pivoted QR on unit-norm columns.
struct Pruning {
    std::vector<Eigen::Index> retained;
    std::vector<char> omitted;
    std::vector<std::string> warnings;
};

Pruning prune_columns(const Eigen::MatrixXd& raw, const Eigen::MatrixXd& absorbed,
                      const Eigen::VectorXd& w, const std::vector<std::string>& names) {
    Pruning p;
    p.omitted.assign(static_cast<std::size_t>(raw.cols()), 0);
    const Eigen::VectorXd sw = w.cwiseSqrt();
    std::vector<Eigen::Index> candidates;
    for (Eigen::Index j = 0; j < raw.cols(); ++j) {
        const double before = raw.col(j).cwiseProduct(sw).norm();
        const double after = absorbed.col(j).cwiseProduct(sw).norm();
        if (!(after > kPivotThreshold * before)) {
            p.omitted[static_cast<std::size_t>(j)] = 1;
            p.warnings.push_back(fmt::format("column '{}' dropped: collinear with the fixed effects",
                                             names[static_cast<std::size_t>(j)]));
        } else {
            candidates.push_back(j);
        }
    }
    if (candidates.empty()) {
        return p;
    }
    Eigen::MatrixXd A(absorbed.rows(), static_cast<Eigen::Index>(candidates.size()));
    for (std::size_t k = 0; k < candidates.size(); ++k) {
        Eigen::VectorXd col = absorbed.col(candidates[k]).cwiseProduct(sw);
        A.col(static_cast<Eigen::Index>(k)) = col / col.norm();
    }
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(A);
    qr.setThreshold(kPivotThreshold);
    const auto rank = qr.rank();
    std::vector<Eigen::Index> keep;
    for (Eigen::Index k = 0; k < rank; ++k) {
        keep.push_back(candidates[static_cast<std::size_t>(qr.colsPermutation().indices()(k))]);
    }
    std::sort(keep.begin(), keep.end());
    for (const Eigen::Index j : candidates) {
        if (!std::binary_search(keep.begin(), keep.end(), j)) {
            p.omitted[static_cast<std::size_t>(j)] = 1;
            p.warnings.push_back(fmt::format("column '{}' dropped: collinear with other regressors",
                                             names[static_cast<std::size_t>(j)]));
        }
    }
    p.retained = std::move(keep);
    return p;
}

Eigen::MatrixXd select_columns(const Eigen::MatrixXd& X, const std::vector<Eigen::Index>& cols) {
    Eigen::MatrixXd out(X.rows(), static_cast<Eigen::Index>(cols.size()));
    for (std::size_t k = 0; k < cols.size(); ++k) {
        out.col(static_cast<Eigen::Index>(k)) = X.col(cols[k]);
    }
    return out;
}

Eigen::VectorXd weighted_solve(const Eigen::MatrixXd& X, const Eigen::VectorXd& z, const Eigen::VectorXd& w) {
    if (X.cols() == 0) {
        return Eigen::VectorXd(0);
    }
    const Eigen::VectorXd sw = w.cwiseSqrt();
    const Eigen::MatrixXd A = sw.asDiagonal() * X;
    const Eigen::VectorXd b = sw.cwiseProduct(z);
    return A.colPivHouseholderQr().solve(b);
}

void scatter(EstimateResult& r, const std::vector<std::string>& names, const Pruning& pruning,
             const Eigen::VectorXd& beta, const Eigen::MatrixXd& vcov) {
    const auto K = static_cast<Eigen::Index>(names.size());
    r.names = names;
    r.omitted = pruning.omitted;
    r.coefficients = Eigen::VectorXd::Constant(K, kNaN);
    r.vcov = Eigen::MatrixXd::Constant(K, K, kNaN);
    r.se = Eigen::VectorXd::Constant(K, kNaN);
    for (std::size_t a = 0; a < pruning.retained.size(); ++a) {
        const Eigen::Index i = pruning.retained[a];
        r.coefficients(i) = beta(static_cast<Eigen::Index>(a));
        for (std::size_t b = 0; b < pruning.retained.size(); ++b) {
            r.vcov(i, pruning.retained[b]) = vcov(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b));
        }
        r.se(i) = std::sqrt(std::max(0.0, vcov(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(a))));
    }
    r.warnings.insert(r.warnings.end(), pruning.warnings.begin(), pruning.warnings.end());
}

double small_sample_factor(std::size_t G, std::size_t N, std::size_t K) {
    return static_cast<double>(G) / static_cast<double>(G - 1) * static_cast<double>(N - 1) /
           static_cast<double>(N - K);
}

double poisson_deviance(const Eigen::VectorXd& y, const Eigen::VectorXd& mu, const Eigen::VectorXd& w) {
    double d = 0.0;
    for (Eigen::Index i = 0; i < y.size(); ++i) {
        const double term = y(i) > 0.0 ? y(i) * std::log(y(i) / mu(i)) - (y(i) - mu(i)) : mu(i);
        d += w(i) * term;
    }
    return 2.0 * d;
}

// FE groups whose outcomes are all zero; their rows are separated.
std::size_t drop_zero_groups(const Design& d, std::vector<char>& keep) {
    std::size_t dropped = 0;
    for (const auto& level : d.fe_codes) {
        const int groups = count_groups(level);
        std::vector<double> total(static_cast<std::size_t>(groups), 0.0);
        std::vector<char> present(static_cast<std::size_t>(groups), 0);
        for (std::size_t i = 0; i < level.size(); ++i) {
            if (keep[i]) {
                total[static_cast<std::size_t>(level[i])] += d.y(static_cast<Eigen::Index>(i));
                present[static_cast<std::size_t>(level[i])] = 1;
            }
        }
        for (std::size_t i = 0; i < level.size(); ++i) {
            if (keep[i] && total[static_cast<std::size_t>(level[i])] == 0.0) {
                keep[i] = 0;
                ++dropped;
            }
        }
    }
    return dropped;
}

// Iterated rectifier regressions: zeros that a linear combination of the
// regressors and fixed effects can push to minus infinity while every
// positive outcome stays put. Returns design rows to drop.
std::vector<std::size_t> certify_separation(const Design& d, const std::vector<char>& keep,
                                            std::vector<std::string>& warnings) {
    const Subset s = take(d, keep);
    const Eigen::Index n = s.y.size();
    if (n == 0 || (s.y.array() > 0.0).all()) {
        return {};
    }
    constexpr double kHeavy = 1e6;
    constexpr double kTol = 1e-5;
    Eigen::VectorXd omega(n);
    Eigen::VectorXd u(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        omega(i) = s.y(i) > 0.0 ? kHeavy : 1.0;
        u(i) = s.y(i) > 0.0 ? 0.0 : 1.0;
    }
    std::vector<std::string> names(static_cast<std::size_t>(s.X.cols()));
    for (int iter = 0; iter < 100; ++iter) {
        Eigen::MatrixXd M(n, s.X.cols() + 1);
        M.col(0) = u;
        M.rightCols(s.X.cols()) = s.X;
        if (!s.fe.empty()) {
            absorb_fixed_effects(M, s.fe, omega, 1e-8);
        }
        Eigen::VectorXd fitted_u = u - M.col(0);  // FE part
        if (s.X.cols() > 0) {
            const Pruning pr = prune_columns(s.X, M.rightCols(s.X.cols()), omega, names);
            const Eigen::MatrixXd Xr = select_columns(M.rightCols(s.X.cols()), pr.retained);
            const Eigen::VectorXd beta = weighted_solve(Xr, M.col(0), omega);
            fitted_u = u - (M.col(0) - Xr * beta);
        }
        double lowest = 0.0;
        double highest = 0.0;
        for (Eigen::Index i = 0; i < n; ++i) {
            if (s.y(i) == 0.0) {
                lowest = std::min(lowest, fitted_u(i));
                highest = std::max(highest, fitted_u(i));
            }
        }
        if (highest <= kTol) {
            return {};
        }
        if (lowest >= -kTol) {
            std::vector<std::size_t> out;
            for (Eigen::Index i = 0; i < n; ++i) {
                if (s.y(i) == 0.0 && fitted_u(i) > kTol) {
                    out.push_back(s.rows[static_cast<std::size_t>(i)]);
                }
            }
            return out;
        }
        for (Eigen::Index i = 0; i < n; ++i) {
            u(i) = s.y(i) > 0.0 ? 0.0 : std::max(fitted_u(i), 0.0);
        }
    }
    warnings.emplace_back("separation check did not settle in 100 iterations; no rows dropped");
    return {};
}

}  // namespace

std::string_view to_string(Outcome o) {
    switch (o) {
        case Outcome::count:
            return "count";
        case Outcome::ln_count:
            return "ln_count";
        case Outcome::ln_pershipment_value:
            return "ln_pershipment_value";
        case Outcome::ln_export_value:
            return "ln_export_value";
        case Outcome::ln_export_weight:
            return "ln_export_weight";
    }
    return "?";
}

std::string_view to_string(Estimator e) {
    return e == Estimator::ols ? "ols" : "ppml";
}

Outcome parse_outcome(std::string_view name) {
    for (const Outcome o : {Outcome::count, Outcome::ln_count, Outcome::ln_pershipment_value,
                            Outcome::ln_export_value, Outcome::ln_export_weight}) {
        if (to_string(o) == name) {
            return o;
        }
    }
    throw ValidationError(fmt::format("unknown outcome '{}'", name));
}

Estimator parse_estimator(std::string_view name) {
    if (name == "ols") return Estimator::ols;
    if (name == "ppml") return Estimator::ppml;
    throw ValidationError(fmt::format("unknown estimator '{}'", name));
}

void EstimationSpec::validate() const {
    if (estimator == Estimator::ppml && outcome != Outcome::count) {
        throw ValidationError(fmt::format("ppml requires outcome 'count', got '{}'", to_string(outcome)));
    }
    if (estimator == Estimator::ols && outcome == Outcome::count) {
        throw ValidationError("ols requires a log outcome");
    }
    if (regressors.empty()) {
        throw ValidationError("estimation spec has no regressors");
    }
    std::vector<std::string> seen;
    for (const auto& r : regressors) {
        const Term t = parse_term(r);
        if (std::find(seen.begin(), seen.end(), t.name) != seen.end()) {
            throw ValidationError(fmt::format("regressor '{}' listed twice", t.name));
        }
        seen.push_back(t.name);
    }
    for (const auto& level : fe_levels) {
        parse_group_key(level);
    }
    if (!cluster.empty()) {
        parse_group_key(cluster);
    }
}

std::vector<std::string> default_regressors() {
    return {"ln_pershipment_cost", "ln_distance",     "spline1",
            "spline2",             "spline1*ln_distance", "spline2*ln_distance",
            "importer_rate",       "exporter_rate*importer_rate", "ln_gdp",
            "ln_gdp_pc",           "island",          "landlocked",
            "common_religion",     "common_legal",    "colony"};
}

DesignRow Design::row(std::size_t i) const {
    DesignRow r;
    const auto k = static_cast<Eigen::Index>(i);
    r.y = y(k);
    for (Eigen::Index j = 0; j < X.cols(); ++j) {
        r.x.push_back(X(k, j));
    }
    for (const auto& level : fe_codes) {
        r.fe_codes.push_back(level[i]);
    }
    r.cluster_code = cluster_codes[i];
    r.weight = weights(k);
    return r;
}

Design build_design(const Panel& panel, const EstimationSpec& spec) {
    spec.validate();
    std::vector<Term> terms;
    for (const auto& r : spec.regressors) {
        terms.push_back(parse_term(r));
    }
    std::vector<GroupKey> levels;
    for (const auto& l : spec.fe_levels) {
        levels.push_back(parse_group_key(l));
    }
    const std::optional<GroupKey> cluster =
        spec.cluster.empty() ? std::nullopt : std::optional<GroupKey>(parse_group_key(spec.cluster));

    Design d;
    for (const Term& t : terms) {
        d.names.push_back(t.name);
    }
    for (const GroupKey& g : levels) {
        d.fe_names.push_back(g.name);
    }
    std::vector<double> ys;
    std::vector<double> xs;
    std::vector<std::vector<std::string>> fe_labels(levels.size());
    std::vector<std::string> cluster_labels;
    for (std::size_t i = 0; i < panel.size(); ++i) {
        const PanelObservation& o = panel[i];
        double y = 0.0;
        switch (spec.outcome) {
            case Outcome::count:
                y = static_cast<double>(o.n_shipments);
                break;
            case Outcome::ln_count:
                if (o.n_shipments <= 0) {
                    ++d.n_dropped_missing;
                    continue;
                }
                y = std::log(static_cast<double>(o.n_shipments));
                break;
            default: {
                const auto& v = spec.outcome == Outcome::ln_pershipment_value ? o.ln_pershipment_value
                                : spec.outcome == Outcome::ln_export_value   ? o.ln_export_value
                                                                             : o.ln_export_weight;
                if (!v) {
                    ++d.n_dropped_missing;
                    continue;
                }
                y = *v;
            }
        }
        for (const Term& t : terms) {
            try {
                xs.push_back(evaluate(t, o));
            } catch (const ValidationError& e) {
                throw ValidationError(fmt::format("row {} (firm={}, product={}, destination={}, year={}): {}",
                                                  i + 1, o.firm, o.product, o.destination, o.year, e.what()));
            }
        }
        ys.push_back(y);
        for (std::size_t l = 0; l < levels.size(); ++l) {
            fe_labels[l].push_back(group_label(levels[l], o));
        }
        cluster_labels.push_back(cluster ? group_label(*cluster, o) : std::string());
        d.source_rows.push_back(i);
    }
    const auto n = static_cast<Eigen::Index>(ys.size());
    const auto K = static_cast<Eigen::Index>(terms.size());
    d.y = Eigen::Map<const Eigen::VectorXd>(ys.data(), n);
    d.X = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(xs.data(), n, K);
    d.weights = Eigen::VectorXd::Ones(n);
    for (auto& labels : fe_labels) {
        d.fe_codes.push_back(dense_codes(labels));
    }
    if (cluster) {
        d.cluster_codes = dense_codes(cluster_labels);
    } else {
        d.cluster_codes.resize(ys.size());
        std::iota(d.cluster_codes.begin(), d.cluster_codes.end(), 0);
    }
    return d;
}

SingletonResult drop_singletons(const std::vector<std::vector<int>>& fe_codes, std::vector<char> keep) {
    SingletonResult out;
    bool changed = true;
    while (changed) {
        changed = false;
        for (const auto& level : fe_codes) {
            std::vector<int> count(static_cast<std::size_t>(count_groups(level)), 0);
            for (std::size_t i = 0; i < level.size(); ++i) {
                if (keep[i]) ++count[static_cast<std::size_t>(level[i])];
            }
            for (std::size_t i = 0; i < level.size(); ++i) {
                if (keep[i] && count[static_cast<std::size_t>(level[i])] == 1) {
                    keep[i] = 0;
                    ++out.dropped;
                    changed = true;
                }
            }
        }
    }
    out.keep = std::move(keep);
    return out;
}

AbsorbInfo absorb_fixed_effects(Eigen::Ref<Eigen::MatrixXd> columns,
                                const std::vector<std::vector<int>>& fe_codes,
                                const Eigen::VectorXd& weights, double tolerance, int max_sweeps) {
    if (fe_codes.empty()) {
        throw ValidationError("absorb_fixed_effects needs at least one fixed-effect level");
    }
    const Eigen::Index n = columns.rows();
    if (weights.size() != n) {
        throw ValidationError("absorb_fixed_effects: weight vector has the wrong length");
    }
    std::vector<std::vector<double>> group_weight;
    for (const auto& level : fe_codes) {
        if (static_cast<Eigen::Index>(level.size()) != n) {
            throw ValidationError("absorb_fixed_effects: code vector has the wrong length");
        }
        std::vector<double> gw(static_cast<std::size_t>(count_groups(level)), 0.0);
        for (Eigen::Index i = 0; i < n; ++i) {
            gw[static_cast<std::size_t>(level[static_cast<std::size_t>(i)])] += weights(i);
        }
        group_weight.push_back(std::move(gw));
    }
    AbsorbInfo info;
    const Eigen::Index K = columns.cols();
    std::vector<double> scale(static_cast<std::size_t>(K));
    std::vector<char> active(static_cast<std::size_t>(K), 1);
    for (Eigen::Index j = 0; j < K; ++j) {
        scale[static_cast<std::size_t>(j)] = std::max(columns.col(j).cwiseAbs().maxCoeff(), 1e-300);
    }
    const bool single = fe_codes.size() == 1;
    std::vector<double> sums;
    for (info.sweeps = 1; info.sweeps <= max_sweeps; ++info.sweeps) {
        double worst = 0.0;
        for (Eigen::Index j = 0; j < K; ++j) {
            if (!active[static_cast<std::size_t>(j)]) continue;
            auto col = columns.col(j);
            double change = 0.0;
            for (std::size_t l = 0; l < fe_codes.size(); ++l) {
                const auto& level = fe_codes[l];
                const auto& gw = group_weight[l];
                sums.assign(gw.size(), 0.0);
                for (Eigen::Index i = 0; i < n; ++i) {
                    sums[static_cast<std::size_t>(level[static_cast<std::size_t>(i)])] += weights(i) * col(i);
                }
                for (std::size_t g = 0; g < gw.size(); ++g) {
                    sums[g] = gw[g] > 0.0 ? sums[g] / gw[g] : 0.0;
                    change = std::max(change, std::abs(sums[g]));
                }
                for (Eigen::Index i = 0; i < n; ++i) {
                    col(i) -= sums[static_cast<std::size_t>(level[static_cast<std::size_t>(i)])];
                }
            }
            change /= scale[static_cast<std::size_t>(j)];
            if (change <= tolerance || single) {
                active[static_cast<std::size_t>(j)] = 0;
            }
            worst = std::max(worst, change);
        }
        info.last_change = worst;
        if (std::none_of(active.begin(), active.end(), [](char a) { return a != 0; })) {
            return info;
        }
    }
    throw NumericalError(fmt::format("fixed-effect absorption did not converge in {} sweeps (change {:.3e})",
                                     max_sweeps, info.last_change));
}

Eigen::MatrixXd cluster_vcov(const Eigen::MatrixXd& X, const Eigen::VectorXd& weights,
                             const Eigen::VectorXd& residuals, const std::vector<int>& clusters) {
    const Eigen::Index N = X.rows();
    const Eigen::Index K = X.cols();
    if (static_cast<Eigen::Index>(clusters.size()) != N || weights.size() != N || residuals.size() != N) {
        throw ValidationError("cluster_vcov: inputs have inconsistent lengths");
    }
    const std::vector<int> codes = dense_codes(clusters);
    const int G = count_groups(codes);
    if (G < 2) {
        throw ValidationError("cluster_vcov: need at least two clusters");
    }
    if (N <= K) {
        throw ValidationError("cluster_vcov: need more observations than regressors");
    }
    const Eigen::MatrixXd XtWX = X.transpose() * weights.asDiagonal() * X;
    const Eigen::MatrixXd bread = XtWX.ldlt().solve(Eigen::MatrixXd::Identity(K, K));
    Eigen::MatrixXd S = Eigen::MatrixXd::Zero(G, K);
    for (Eigen::Index i = 0; i < N; ++i) {
        S.row(codes[static_cast<std::size_t>(i)]) += weights(i) * residuals(i) * X.row(i);
    }
    const Eigen::MatrixXd meat = S.transpose() * S;
    Eigen::MatrixXd V = small_sample_factor(static_cast<std::size_t>(G), static_cast<std::size_t>(N),
                                            static_cast<std::size_t>(K)) *
                        (bread * meat * bread);
    return 0.5 * (V + V.transpose());
}

std::size_t EstimateResult::index(std::string_view name) const {
    for (std::size_t k = 0; k < names.size(); ++k) {
        if (names[k] == name) {
            return k;
        }
    }
    throw ValidationError(fmt::format("unknown coefficient '{}'", name));
}

double EstimateResult::coefficient(std::string_view name) const {
    return coefficients(static_cast<Eigen::Index>(index(name)));
}

double EstimateResult::standard_error(std::string_view name) const {
    return se(static_cast<Eigen::Index>(index(name)));
}

EstimateResult fit_ols(const Design& design) {
    EstimateResult r;
    r.estimator = Estimator::ols;
    r.n_dropped_missing = design.n_dropped_missing;
    std::vector<char> keep(design.rows(), 1);
    if (!design.fe_codes.empty()) {
        const SingletonResult sr = drop_singletons(design.fe_codes, keep);
        keep = sr.keep;
        r.n_dropped_singleton = sr.dropped;
    }
    const Subset s = take(design, keep);
    if (s.y.size() == 0) {
        throw ValidationError("no observations left after dropping singletons");
    }
    Eigen::MatrixXd M(s.y.size(), s.X.cols() + 1);
    M.col(0) = s.y;
    M.rightCols(s.X.cols()) = s.X;
    if (!s.fe.empty()) {
        absorb_fixed_effects(M, s.fe, s.w);
    }
    const Eigen::MatrixXd Xt = M.rightCols(s.X.cols());
    const Pruning pruning = prune_columns(s.X, Xt, s.w, design.names);
    const Eigen::MatrixXd Xr = select_columns(Xt, pruning.retained);
    const Eigen::VectorXd beta = weighted_solve(Xr, M.col(0), s.w);
    const Eigen::VectorXd resid = M.col(0) - Xr * beta;

    const double ybar = s.w.dot(s.y) / s.w.sum();
    const double tss = (s.y.array() - ybar).square().matrix().dot(s.w);
    const double ssr = resid.cwiseAbs2().dot(s.w);
    r.fit = tss > 0.0 ? 1.0 - ssr / tss : (ssr == 0.0 ? 1.0 : 0.0);
    r.deviance = ssr;
    r.null_deviance = tss;
    r.fitted = s.y - resid;
    r.used_rows = s.rows;
    r.n_obs_used = s.rows.size();
    r.n_clusters = static_cast<std::size_t>(count_groups(s.clusters));

    Eigen::MatrixXd V(Xr.cols(), Xr.cols());
    if (Xr.cols() > 0) {
        V = cluster_vcov(Xr, s.w, resid, s.clusters);
        r.small_sample_factor = small_sample_factor(r.n_clusters, r.n_obs_used, pruning.retained.size());
    }
    scatter(r, design.names, pruning, beta, V);
    return r;
}

EstimateResult fit_ppml(const Design& design, const PpmlOptions& options) {
    EstimateResult r;
    r.estimator = Estimator::ppml;
    r.n_dropped_missing = design.n_dropped_missing;
    for (Eigen::Index i = 0; i < design.y.size(); ++i) {
        if (!(design.y(i) >= 0.0) || !std::isfinite(design.y(i))) {
            throw ValidationError(fmt::format("ppml: outcome must be a nonnegative count (row {})", i + 1));
        }
    }

    std::vector<char> keep(design.rows(), 1);
    bool certified = !options.check_separation;
    while (true) {
        std::size_t before = std::count(keep.begin(), keep.end(), 1);
        if (!design.fe_codes.empty()) {
            const SingletonResult sr = drop_singletons(design.fe_codes, keep);
            keep = sr.keep;
            r.n_dropped_singleton += sr.dropped;
            r.n_dropped_separation += drop_zero_groups(design, keep);
        }
        if (!certified) {
            const auto separated = certify_separation(design, keep, r.warnings);
            for (const std::size_t i : separated) {
                keep[i] = 0;
            }
            r.n_dropped_separation += separated.size();
            certified = separated.empty();
        }
        const std::size_t after = std::count(keep.begin(), keep.end(), 1);
        if (after == before && certified) {
            break;
        }
    }
    const Subset s = take(design, keep);
    const Eigen::Index n = s.y.size();
    if (n == 0) {
        throw ValidationError("ppml: no observations left after dropping singletons and separated rows");
    }
    if (!(s.y.array() > 0.0).any()) {
        throw ValidationError("ppml: all outcomes are zero");
    }
    const double ybar = s.w.dot(s.y) / s.w.sum();

    Eigen::VectorXd mu = (s.y.array() + ybar).matrix() * 0.5;
    Eigen::VectorXd eta = mu.array().log().matrix();
    double dev = poisson_deviance(s.y, mu, s.w);
    const bool has_fe = !s.fe.empty();

    Pruning pruning;
    bool pruned = false;
    Eigen::VectorXd beta;
    std::vector<double> trace{dev};
    bool converged = false;
    bool polishing = false;
    Eigen::MatrixXd M(n, s.X.cols() + 1);
    for (int iter = 1; iter <= options.max_iterations; ++iter) {
        const Eigen::VectorXd z = eta + ((s.y - mu).array() / mu.array()).matrix();
        const Eigen::VectorXd w = s.w.cwiseProduct(mu);
        M.col(0) = z;
        M.rightCols(s.X.cols()) = s.X;
        if (has_fe) {
            absorb_fixed_effects(M, s.fe, w);
        }
        if (!pruned) {
            pruning = prune_columns(s.X, M.rightCols(s.X.cols()), w, design.names);
            pruned = true;
        }
        const Eigen::MatrixXd Xr = select_columns(M.rightCols(s.X.cols()), pruning.retained);
        Eigen::VectorXd beta_new = weighted_solve(Xr, M.col(0), w);
        if (!has_fe && Xr.cols() == 0) {
            throw ValidationError("ppml: no estimable regressors and no fixed effects");
        }
        Eigen::VectorXd eta_new = z - (M.col(0) - Xr * beta_new);
        Eigen::VectorXd mu_new = eta_new.array().min(700.0).exp().matrix();
        double dev_new = poisson_deviance(s.y, mu_new, s.w);
        int halvings = 0;
        while (!(dev_new <= dev * (1.0 + 1e-12) + 1e-12) && iter > 1) {
            if (++halvings > 30) {
                std::string history;
                for (const double d : trace) history += fmt::format(" {:.10g}", d);
                throw NumericalError(fmt::format(
                    "ppml: step-halving failed at iteration {}; deviance trace:{}", iter, history));
            }
            eta_new = 0.5 * (eta + eta_new);
            beta_new = 0.5 * (beta + beta_new);
            mu_new = eta_new.array().min(700.0).exp().matrix();
            dev_new = poisson_deviance(s.y, mu_new, s.w);
        }
        const double change = std::abs(dev_new - dev) / (std::abs(dev_new) + 0.1);
        eta = eta_new;
        mu = mu_new;
        beta = beta_new;
        dev = dev_new;
        trace.push_back(dev);
        r.iterations = iter;
        r.final_deviance_change = change;
        // One more Newton step after the criterion is first met: the deviance
        // change is quadratic in the coefficient error, so this step takes the
        // coefficients to rounding level.
        if (change <= options.tolerance) {
            if (polishing) {
                converged = true;
                break;
            }
            polishing = true;
        } else {
            polishing = false;
        }
    }
    if (!converged) {
        std::string history;
        for (const double d : trace) history += fmt::format(" {:.10g}", d);
        throw NumericalError(fmt::format("ppml: no convergence in {} iterations; deviance trace:{}",
                                         options.max_iterations, history));
    }

    // Scores at the final weights.
    const Eigen::VectorXd w = s.w.cwiseProduct(mu);
    Eigen::MatrixXd Xf = s.X;
    if (has_fe) {
        absorb_fixed_effects(Xf, s.fe, w);
    }
    const Eigen::MatrixXd Xr = select_columns(Xf, pruning.retained);
    const Eigen::VectorXd working = ((s.y - mu).array() / mu.array()).matrix();

    r.deviance = dev;
    r.null_deviance = poisson_deviance(s.y, Eigen::VectorXd::Constant(n, ybar), s.w);
    r.fit = r.null_deviance > 0.0 ? 1.0 - dev / r.null_deviance : 0.0;
    r.fitted = mu;
    r.used_rows = s.rows;
    r.n_obs_used = static_cast<std::size_t>(n);
    r.n_clusters = static_cast<std::size_t>(count_groups(s.clusters));
    Eigen::MatrixXd V(Xr.cols(), Xr.cols());
    if (Xr.cols() > 0) {
        V = cluster_vcov(Xr, w, working, s.clusters);
        r.small_sample_factor = small_sample_factor(r.n_clusters, r.n_obs_used, pruning.retained.size());
    }
    scatter(r, design.names, pruning, beta, V);
    return r;
}

EstimateResult estimate(const Panel& panel, const EstimationSpec& spec) {
    const Design d = build_design(panel, spec);
    return spec.estimator == Estimator::ols ? fit_ols(d) : fit_ppml(d);
}

double log_effect(double beta) {
    return (std::pow(1.1, beta) - 1.0) * 100.0;
}

double level_effect(double beta) {
    return std::expm1(beta) * 100.0;
}

bool is_log_term(std::string_view name) {
    const Term t = parse_term(name);
    if (t.factors.size() != 1) {
        return false;
    }
    const Factor& f = t.factors.front();
    return f.kind == FactorKind::log || (f.kind == FactorKind::column && f.column.starts_with("ln_"));
}

std::vector<EffectRow> elasticity_effects(const EstimateResult& result, const std::vector<std::string>& terms) {
    std::vector<std::string> wanted = terms.empty() ? result.names : terms;
    std::vector<EffectRow> out;
    for (const auto& name : wanted) {
        const double beta = result.coefficient(name);
        EffectRow row;
        row.term = name;
        row.coefficient = beta;
        row.per_10pct = is_log_term(name);
        row.effect = row.per_10pct ? log_effect(beta) : level_effect(beta);
        out.push_back(row);
    }
    return out;
}

std::string results_csv(const EstimateResult& result) {
    std::string out = "term,coefficient,clustered_se,effect_per_10pct_or_unit\n";
    for (const EffectRow& e : elasticity_effects(result)) {
        const double se = result.standard_error(e.term);
        if (std::isnan(e.coefficient)) {
            out += fmt::format("{},,,\n", e.term);
        } else {
            out += fmt::format("{},{},{},{}\n", e.term, format_double(e.coefficient), format_double(se),
                               format_double(e.effect));
        }
    }
    return out;
}

std::string run_metadata(const EstimateResult& result, const EstimationSpec& spec) {
    auto join = [](const std::vector<std::string>& v) {
        std::string s;
        for (const auto& x : v) {
            s += (s.empty() ? "" : " ") + x;
        }
        return s;
    };
    std::string out;
    out += fmt::format("estimator: {}\n", to_string(spec.estimator));
    out += fmt::format("outcome: {}\n", to_string(spec.outcome));
    out += fmt::format("regressors: {}\n", join(spec.regressors));
    out += fmt::format("fe_levels: {}\n", join(spec.fe_levels));
    out += fmt::format("cluster: {}\n", spec.cluster.empty() ? "(each row)" : spec.cluster);
    out += fmt::format("n_obs_used: {}\n", result.n_obs_used);
    out += fmt::format("n_dropped_missing: {}\n", result.n_dropped_missing);
    out += fmt::format("n_dropped_singleton: {}\n", result.n_dropped_singleton);
    out += fmt::format("n_dropped_separation: {}\n", result.n_dropped_separation);
    out += fmt::format("n_clusters: {}\n", result.n_clusters);
    out += fmt::format("small_sample_factor: {} (G/(G-1) * (N-1)/(N-K))\n", format_double(result.small_sample_factor));
    if (result.estimator == Estimator::ppml) {
        out += fmt::format("pseudo_r2: {} (1 - deviance/null deviance)\n", format_double(result.fit));
        out += fmt::format("deviance: {}\n", format_double(result.deviance));
        out += fmt::format("null_deviance: {}\n", format_double(result.null_deviance));
        out += fmt::format("iterations: {}\n", result.iterations);
        out += fmt::format("final_deviance_change: {}\n", format_double(result.final_deviance_change));
    } else {
        out += fmt::format("r2: {} (on the original outcome)\n", format_double(result.fit));
    }
    for (const auto& w : result.warnings) {
        out += fmt::format("warning: {}\n", w);
    }
    return out;
}

}  // namespace shipfreq
