#include "shipfreq/panel.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <random>
#include <tuple>

#include <boost/math/distributions/normal.hpp>
#include <fmt/core.h>

#include "shipfreq/errors.hpp"
#include "shipfreq/rng.hpp"
#include "shipfreq/terms.hpp"

namespace shipfreq {
namespace {

const boost::math::normal kStdNormal;

double phi(double z) {
    return boost::math::pdf(kStdNormal, z);
}

double Phi(double z) {
    return boost::math::cdf(kStdNormal, z);
}

double Phi_inv(double p) {
    return boost::math::quantile(kStdNormal, p);
}

// Uniform on the open interval (0, 1).
double open_uniform(std::mt19937_64& rng) {
    return (static_cast<double>(rng() >> 11) + 0.5) * 0x1.0p-53;
}

void check_target(const MomentTarget& t, std::string_view what) {
    if (!(t.lo < t.mean && t.mean < t.hi && t.sd > 0.0 && std::isfinite(t.hi))) {
        throw ValidationError(fmt::format(
            "calibration of {}: need lo < mean < hi and sd > 0 (got mean {}, sd {}, [{}, {}])", what,
            t.mean, t.sd, t.lo, t.hi));
    }
}

void check_probability(double p, std::string_view what) {
    if (!(p >= 0.0 && p <= 1.0)) {
        throw ValidationError(fmt::format("parameter {} must be a probability, got {}", what, p));
    }
}

std::string padded_id(char prefix, int index, int count) {
    const int width = std::max<int>(4, static_cast<int>(std::to_string(count).size()));
    return fmt::format("{}{:0{}d}", prefix, index, width);
}

constexpr std::array<std::string_view, 5> kFeLevels{"firm", "product", "mode", "destination", "year"};

// Zero-mean planted effects for `groups` groups of one level.
std::vector<double> planted_effects(std::uint64_t seed, std::string_view level, int groups,
                                    double variance) {
    std::vector<double> out(static_cast<std::size_t>(groups), 0.0);
    if (variance <= 0.0) {
        return out;
    }
    const double sd = std::sqrt(variance);
    for (int g = 0; g < groups; ++g) {
        auto rng = make_stream(seed, fmt::format("panel.fe.{}", level), static_cast<std::uint64_t>(g));
        out[static_cast<std::size_t>(g)] = sd * Phi_inv(open_uniform(rng));
    }
    double mean = 0.0;
    for (const double v : out) {
        mean += v;
    }
    mean /= groups;
    for (double& v : out) {
        v -= mean;
    }
    return out;
}

std::string cell_label(const PanelObservation& obs) {
    return fmt::format("cell (firm={}, product={}, mode={}, destination={}, year={})", obs.firm,
                       obs.product, to_string(obs.mode), obs.destination, obs.year);
}

}  // namespace

std::string_view to_string(TransportMode mode) {
    switch (mode) {
        case TransportMode::air:
            return "air";
        case TransportMode::ocean:
            return "ocean";
        case TransportMode::land:
            return "land";
    }
    return "?";
}

TransportMode parse_mode(std::string_view name) {
    if (name == "air") return TransportMode::air;
    if (name == "ocean") return TransportMode::ocean;
    if (name == "land") return TransportMode::land;
    throw ValidationError(fmt::format("unknown transport mode '{}'", name));
}

std::string_view to_string(DgpMode mode) {
    return mode == DgpMode::reduced_form ? "reduced_form" : "structural";
}

DgpMode parse_dgp_mode(std::string_view name) {
    if (name == "reduced_form") return DgpMode::reduced_form;
    if (name == "structural") return DgpMode::structural;
    throw ValidationError(fmt::format("unknown dgp mode '{}'", name));
}

std::map<std::string, double> default_betas() {
    return {
        {"ln_pershipment_cost", -0.335},
        {"ln_distance", -0.904},
        {"spline1", -5.023},
        {"spline2", -19.402},
        {"spline1*ln_distance", 0.410},
        {"spline2*ln_distance", 2.135},
        {"importer_rate", -0.083},
        {"exporter_rate*importer_rate", 0.006},
        {"ln_gdp", 0.300},
        {"ln_gdp_pc", 0.248},
        {"island", -0.234},
        {"landlocked", -0.162},
        {"common_religion", 0.789},
        {"common_legal", 0.081},
        {"colony", 0.359},
        {"_cons", 2.859},
    };
}

std::map<std::string, double> default_fe_variances() {
    return {{"firm", 0.25}, {"product", 0.1}, {"mode", 0.1}, {"destination", 0.0}, {"year", 0.02}};
}

DgpConfig::DgpConfig() : betas(default_betas()), fe_variances(default_fe_variances()) {}

double DgpConfig::delta_for(TransportMode m) const {
    switch (m) {
        case TransportMode::air:
            return delta_air;
        case TransportMode::ocean:
            return delta_ocean;
        case TransportMode::land:
            return delta_land;
    }
    return delta_ocean;
}

void DgpConfig::validate() const {
    for (const auto& [name, count] : {std::pair{"firms", firms}, std::pair{"products", products},
                                      std::pair{"destinations", destinations}, std::pair{"years", years}}) {
        if (count < 1) {
            throw ValidationError(fmt::format("parameter {} must be >= 1, got {}", name, count));
        }
    }
    if (products > 10000) {
        throw ValidationError(fmt::format("parameter products must be <= 10000, got {}", products));
    }
    for (const auto& [level, variance] : fe_variances) {
        if (std::find(kFeLevels.begin(), kFeLevels.end(), level) == kFeLevels.end()) {
            throw ValidationError(fmt::format("unknown fixed-effect level '{}'", level));
        }
        if (!(variance >= 0.0 && std::isfinite(variance))) {
            throw ValidationError(
                fmt::format("fixed-effect variance for {} must be >= 0, got {}", level, variance));
        }
    }
    for (const auto& [name, beta] : betas) {
        const Term term = parse_term(name);
        for (const Factor& factor : term.factors) {
            if (factor.column == "n_shipments" || factor.column.starts_with("ln_export") ||
                factor.column == "ln_pershipment_value") {
                throw ValidationError(
                    fmt::format("planted term '{}' uses the outcome column '{}'", name, factor.column));
            }
        }
        if (!std::isfinite(beta)) {
            throw ValidationError(fmt::format("planted coefficient for '{}' is not finite", name));
        }
    }
    if (!(share_air >= 0.0 && share_ocean >= 0.0 && share_land >= 0.0 &&
          share_air + share_ocean + share_land > 0.0)) {
        throw ValidationError("mode shares must be nonnegative with a positive sum");
    }
    if (!(exporter_rate_lo <= exporter_rate_hi && exporter_rate_lo > 0.0)) {
        throw ValidationError("exporter rate range must satisfy 0 < lo <= hi");
    }
    if (!(c > 0.0 && q > 0.0 && f_scale > 0.0)) {
        throw ValidationError("parameters c, q and f_scale must be positive");
    }
    if (!(delta_air >= 0.0 && delta_ocean >= 0.0 && delta_land >= 0.0)) {
        throw ValidationError("delivery times must be nonnegative");
    }
    if (!(value_sd >= 0.0)) {
        throw ValidationError("parameter value_sd must be nonnegative");
    }
    const CovariateCalibration& cal = calibration;
    check_probability(cal.p_island, "p_island");
    check_probability(cal.p_landlocked, "p_landlocked");
    check_probability(cal.p_colony, "p_colony");
    check_probability(cal.p_common_legal, "p_common_legal");
    if (!(std::abs(cal.distance_gdp_correlation) < 1.0)) {
        throw ValidationError("distance_gdp_correlation must lie in (-1, 1)");
    }
}

double TruncatedNormal::mean() const {
    const double a = (lo - mu) / sigma;
    const double b = (hi - mu) / sigma;
    const double z = Phi(b) - Phi(a);
    return mu + sigma * (phi(a) - phi(b)) / z;
}

double TruncatedNormal::sd() const {
    const double a = (lo - mu) / sigma;
    const double b = (hi - mu) / sigma;
    const double z = Phi(b) - Phi(a);
    const double shift = (phi(a) - phi(b)) / z;
    return sigma * std::sqrt(1.0 + (a * phi(a) - b * phi(b)) / z - shift * shift);
}

double TruncatedNormal::quantile(double u) const {
    const double pa = Phi((lo - mu) / sigma);
    const double pb = Phi((hi - mu) / sigma);
    const double p = pa + u * (pb - pa);
    if (p <= 0.0) return lo;
    if (p >= 1.0) return hi;
    return std::clamp(mu + sigma * Phi_inv(p), lo, hi);
}

TruncatedNormal TruncatedNormal::calibrate(const MomentTarget& target) {
    check_target(target, "truncated normal");
    // Newton on (mu, log sigma) with a forward-difference Jacobian.
    auto make = [&](double m, double log_s) { return TruncatedNormal{m, std::exp(log_s), target.lo, target.hi}; };
    auto residual = [&](double m, double log_s) {
        const TruncatedNormal t = make(m, log_s);
        return std::array<double, 2>{t.mean() - target.mean, t.sd() - target.sd};
    };
    double m = target.mean;
    double ls = std::log(target.sd);
    auto r = residual(m, ls);
    for (int iter = 0; iter < 100; ++iter) {
        const double norm = std::hypot(r[0], r[1]);
        if (norm <= 1e-12 * target.sd) {
            return make(m, ls);
        }
        const double hm = 1e-7 * target.sd;
        const double hs = 1e-7;
        const auto rm = residual(m + hm, ls);
        const auto rs = residual(m, ls + hs);
        const double j00 = (rm[0] - r[0]) / hm, j01 = (rs[0] - r[0]) / hs;
        const double j10 = (rm[1] - r[1]) / hm, j11 = (rs[1] - r[1]) / hs;
        const double det = j00 * j11 - j01 * j10;
        if (!(std::abs(det) > 0.0)) {
            break;
        }
        const double dm = -(j11 * r[0] - j01 * r[1]) / det;
        const double ds = -(-j10 * r[0] + j00 * r[1]) / det;
        double step = 1.0;
        for (int halving = 0; halving < 40; ++halving, step *= 0.5) {
            const auto trial = residual(m + step * dm, ls + step * ds);
            if (std::isfinite(trial[0]) && std::isfinite(trial[1]) &&
                std::hypot(trial[0], trial[1]) < norm) {
                m += step * dm;
                ls += step * ds;
                r = trial;
                break;
            }
        }
        if (step < 1e-12) {
            break;
        }
    }
    if (std::hypot(r[0], r[1]) <= 1e-10 * target.sd) {
        return make(m, ls);
    }
    throw NumericalError(fmt::format(
        "truncated normal calibration did not converge for mean {} sd {} on [{}, {}]", target.mean,
        target.sd, target.lo, target.hi));
}

ZeroInflatedUniform ZeroInflatedUniform::calibrate(const MomentTarget& target) {
    // Nonzero part U(L, H): mean w(L+H)/2, second moment w(L^2+LH+H^2)/3.
    const double m = target.mean;
    const double H = target.hi;
    if (!(m > 0.0 && target.sd > 0.0 && H > m && target.lo == 0.0)) {
        throw ValidationError("zero-inflated calibration needs lo = 0 < mean < hi and sd > 0");
    }
    const double ratio = (target.sd * target.sd + m * m) / m;
    const double b = 2.0 * H - 3.0 * ratio;
    const double c = 2.0 * H * H - 3.0 * ratio * H;
    const double disc = b * b - 8.0 * c;
    const double lower = (-b + std::sqrt(disc)) / 4.0;
    const double w = 2.0 * m / (lower + H);
    if (!(disc >= 0.0 && lower >= 0.0 && lower < H && w > 0.0 && w <= 1.0)) {
        throw ValidationError(fmt::format(
            "no zero-inflated uniform on [0, {}] has mean {} and sd {}", H, m, target.sd));
    }
    return {1.0 - w, lower, H};
}

double ZeroInflatedUniform::quantile(double u) const {
    if (u < p_zero) {
        return 0.0;
    }
    return lower + (hi - lower) * (u - p_zero) / (1.0 - p_zero);
}

std::vector<CountryProfile> generate_countries(const DgpConfig& config) {
    config.validate();
    const CovariateCalibration& cal = config.calibration;
    const TruncatedNormal cost = TruncatedNormal::calibrate(cal.ln_pershipment_cost);
    const TruncatedNormal distance = TruncatedNormal::calibrate(cal.ln_distance);
    const TruncatedNormal gdp = TruncatedNormal::calibrate(cal.ln_gdp);
    const TruncatedNormal gdp_pc = TruncatedNormal::calibrate(cal.ln_gdp_pc);
    const TruncatedNormal importer = TruncatedNormal::calibrate(cal.importer_rate);
    const ZeroInflatedUniform religion = ZeroInflatedUniform::calibrate(cal.common_religion);
    const double rho = cal.distance_gdp_correlation;

    std::vector<CountryProfile> out;
    out.reserve(static_cast<std::size_t>(config.destinations));
    for (int j = 0; j < config.destinations; ++j) {
        auto rng = make_stream(config.seed, "panel.country", static_cast<std::uint64_t>(j));
        CountryProfile c;
        c.id = padded_id('D', j, config.destinations);
        c.ln_pershipment_cost = cost.quantile(open_uniform(rng));
        const double u_distance = open_uniform(rng);
        double u_gdp = open_uniform(rng);
        if (rho != 0.0) {
            const double z = rho * Phi_inv(u_distance) + std::sqrt(1.0 - rho * rho) * Phi_inv(u_gdp);
            u_gdp = Phi(z);
        }
        c.ln_distance = distance.quantile(u_distance);
        c.ln_gdp = gdp.quantile(u_gdp);
        c.ln_gdp_pc = gdp_pc.quantile(open_uniform(rng));
        c.importer_rate = importer.quantile(open_uniform(rng));
        c.common_religion = religion.quantile(open_uniform(rng));
        c.island = open_uniform(rng) < cal.p_island ? 1 : 0;
        c.landlocked = open_uniform(rng) < cal.p_landlocked ? 1 : 0;
        c.colony = open_uniform(rng) < cal.p_colony ? 1 : 0;
        c.common_legal = open_uniform(rng) < cal.p_common_legal ? 1 : 0;
        out.push_back(std::move(c));
    }
    return out;
}

std::string product_code(const DgpConfig& config, int p) {
    // Chapters typical of a garment-led export basket.
    static constexpr std::array<int, 10> kChapters{61, 62, 63, 64, 3, 42, 52, 53, 41, 85};
    auto rng = make_stream(config.seed, "panel.product", static_cast<std::uint64_t>(p));
    const int chapter = kChapters[rng() % kChapters.size()];
    const int heading = static_cast<int>(rng() % 99) + 1;
    return fmt::format("{:02d}{:02d}{:04d}", chapter, heading, p);
}

ModelParams structural_params(const DgpConfig& config, const PanelObservation& obs) {
    return ModelParams{.c = config.c,
                       .q = config.q,
                       .f = config.f_scale * std::exp(obs.ln_pershipment_cost),
                       .delta = config.delta_for(obs.mode),
                       .r = obs.exporter_rate / 100.0,
                       .r1 = obs.importer_rate / 100.0};
}

Panel generate_panel(const DgpConfig& config, const std::vector<CountryProfile>& countries) {
    config.validate();
    if (countries.empty()) {
        throw ValidationError("generate_panel needs at least one destination");
    }
    const int F = config.firms;
    const int P = config.products;
    const int J = static_cast<int>(countries.size());
    const int T = config.years;

    std::vector<std::string> firm_ids;
    for (int i = 0; i < F; ++i) {
        firm_ids.push_back(padded_id('F', i, F));
    }
    std::vector<std::string> products;
    for (int p = 0; p < P; ++p) {
        products.push_back(product_code(config, p));
    }
    std::vector<double> exporter_rate;
    for (int t = 0; t < T; ++t) {
        auto rng = make_stream(config.seed, "panel.exporter_rate", static_cast<std::uint64_t>(t));
        exporter_rate.push_back(uniform(rng, config.exporter_rate_lo, config.exporter_rate_hi));
    }

    auto variance = [&](std::string_view level) {
        const auto it = config.fe_variances.find(std::string(level));
        return it == config.fe_variances.end() ? 0.0 : it->second;
    };
    const auto fe_firm = planted_effects(config.seed, "firm", F, variance("firm"));
    const auto fe_product = planted_effects(config.seed, "product", P, variance("product"));
    const auto fe_mode = planted_effects(config.seed, "mode", 3, variance("mode"));
    const auto fe_destination = planted_effects(config.seed, "destination", J, variance("destination"));
    const auto fe_year = planted_effects(config.seed, "year", T, variance("year"));

    std::vector<std::pair<Term, double>> plants;
    for (const auto& [name, beta] : config.betas) {
        plants.emplace_back(parse_term(name), beta);
    }

    const double share_total = config.share_air + config.share_ocean + config.share_land;
    Panel panel;
    panel.reserve(static_cast<std::size_t>(F) * P * J * T);
    for (int i = 0; i < F; ++i) {
        for (int p = 0; p < P; ++p) {
            for (int j = 0; j < J; ++j) {
                const std::uint64_t route =
                    (static_cast<std::uint64_t>(i) * P + static_cast<std::uint64_t>(p)) * J +
                    static_cast<std::uint64_t>(j);
                auto mode_rng = make_stream(config.seed, "panel.mode", route);
                const double u = uniform01(mode_rng) * share_total;
                const TransportMode mode = u < config.share_air ? TransportMode::air
                                           : u < config.share_air + config.share_ocean
                                               ? TransportMode::ocean
                                               : TransportMode::land;
                const CountryProfile& dest = countries[static_cast<std::size_t>(j)];
                for (int t = 0; t < T; ++t) {
                    PanelObservation obs;
                    obs.firm = firm_ids[static_cast<std::size_t>(i)];
                    obs.product = products[static_cast<std::size_t>(p)];
                    obs.mode = mode;
                    obs.destination = dest.id;
                    obs.year = config.first_year + t;
                    obs.exporter_rate = exporter_rate[static_cast<std::size_t>(t)];
                    obs.ln_pershipment_cost = dest.ln_pershipment_cost;
                    obs.ln_distance = dest.ln_distance;
                    obs.ln_gdp = dest.ln_gdp;
                    obs.ln_gdp_pc = dest.ln_gdp_pc;
                    obs.island = dest.island;
                    obs.landlocked = dest.landlocked;
                    obs.common_religion = dest.common_religion;
                    obs.common_legal = dest.common_legal;
                    obs.colony = dest.colony;
                    obs.importer_rate = dest.importer_rate;

                    const std::uint64_t cell = route * static_cast<std::uint64_t>(T) + static_cast<std::uint64_t>(t);
                    auto rng = make_stream(config.seed, "panel.cell", cell);
                    if (config.mode == DgpMode::reduced_form) {
                        double eta = fe_firm[static_cast<std::size_t>(i)] + fe_product[static_cast<std::size_t>(p)] +
                                     fe_mode[static_cast<std::size_t>(mode)] +
                                     fe_destination[static_cast<std::size_t>(j)] +
                                     fe_year[static_cast<std::size_t>(t)];
                        for (const auto& [term, beta] : plants) {
                            eta += beta * evaluate(term, obs);
                        }
                        const double lambda = std::exp(eta);
                        if (!(lambda <= 1e12)) {
                            throw NumericalError(
                                fmt::format("{}: planted mean {} is too large", cell_label(obs), lambda));
                        }
                        if (lambda > 0.0) {
                            obs.n_shipments = std::poisson_distribution<std::int64_t>(lambda)(rng);
                        }
                        if (obs.n_shipments > 0) {
                            const double z = Phi_inv(open_uniform(rng));
                            const double ln_value = config.value_intercept + config.value_sd * z;
                            obs.ln_pershipment_value = ln_value;
                            obs.ln_export_value = ln_value + std::log(static_cast<double>(obs.n_shipments));
                            obs.ln_export_weight = *obs.ln_export_value - config.ln_unit_value;
                        }
                    } else {
                        const ModelParams params = structural_params(config, obs);
                        ModelSolution s;
                        try {
                            s = solve(params);
                        } catch (const ValidationError& e) {
                            throw ValidationError(fmt::format("{}: {}", cell_label(obs), e.what()));
                        } catch (const NumericalError& e) {
                            throw NumericalError(fmt::format("{}: {}", cell_label(obs), e.what()));
                        }
                        obs.n_shipments = config.poisson_jitter
                                              ? std::poisson_distribution<std::int64_t>(s.n)(rng)
                                              : std::llround(s.n);
                        if (obs.n_shipments > 0) {
                            obs.ln_pershipment_value =
                                std::log(params.q * params.c / static_cast<double>(obs.n_shipments));
                            obs.ln_export_value = std::log(params.q * params.c);
                            obs.ln_export_weight = std::log(params.q);
                        }
                    }
                    panel.push_back(std::move(obs));
                }
            }
        }
    }
    std::sort(panel.begin(), panel.end(), [](const PanelObservation& a, const PanelObservation& b) {
        return std::tie(a.firm, a.product, a.mode, a.destination, a.year) <
               std::tie(b.firm, b.product, b.mode, b.destination, b.year);
    });
    return panel;
}

}  // namespace shipfreq
