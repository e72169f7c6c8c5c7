#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "shipfreq/procurement.hpp"

namespace shipfreq {

enum class TransportMode { air, ocean, land };

std::string_view to_string(TransportMode mode);
TransportMode parse_mode(std::string_view name);

/// Destination-level covariates. Distances in log km, rates in percent.
struct CountryProfile {
    std::string id;
    double ln_distance = 0.0;
    double ln_gdp = 0.0;
    double ln_gdp_pc = 0.0;
    double ln_pershipment_cost = 0.0;
    double importer_rate = 0.0;
    int island = 0;
    int landlocked = 0;
    int common_legal = 0;
    int colony = 0;
    double common_religion = 0.0;
};

/// One firm x product x mode x destination x year cell. Destination
/// covariates are carried along so that a panel file is self-contained.
struct PanelObservation {
    std::string firm;
    std::string product;  ///< 8-digit HS code
    TransportMode mode = TransportMode::ocean;
    std::string destination;
    int year = 0;
    std::int64_t n_shipments = 0;
    double exporter_rate = 0.0;
    double ln_pershipment_cost = 0.0;
    double ln_distance = 0.0;
    double ln_gdp = 0.0;
    double ln_gdp_pc = 0.0;
    int island = 0;
    int landlocked = 0;
    double common_religion = 0.0;
    int common_legal = 0;
    int colony = 0;
    double importer_rate = 0.0;
    // Trade-value outcomes; absent when the cell has no shipments.
    std::optional<double> ln_pershipment_value;
    std::optional<double> ln_export_value;
    std::optional<double> ln_export_weight;
};

using Panel = std::vector<PanelObservation>;

/// Mean, sd and support of one continuous covariate.
struct MomentTarget {
    double mean = 0.0;
    double sd = 1.0;
    double lo = 0.0;
    double hi = 0.0;
};

/// Marginal distributions of destination covariates.
struct CovariateCalibration {
    MomentTarget ln_pershipment_cost{7.08, 0.39, 5.90, 9.89};
    MomentTarget ln_distance{8.88, 0.51, 6.06, 9.81};
    MomentTarget ln_gdp{27.87, 1.49, 18.46, 30.45};
    MomentTarget ln_gdp_pc{10.23, 0.96, 5.09, 11.63};
    MomentTarget importer_rate{5.15, 3.52, 0.5, 58.98};
    MomentTarget common_religion{0.09, 0.23, 0.0, 0.86};
    double p_island = 0.13;
    double p_landlocked = 0.03;
    double p_colony = 0.07;
    double p_common_legal = 0.25;
    /// Gaussian-copula correlation between ln_distance and ln_gdp.
    double distance_gdp_correlation = 0.0;
};

enum class DgpMode { reduced_form, structural };

std::string_view to_string(DgpMode mode);
DgpMode parse_dgp_mode(std::string_view name);

struct DgpConfig {
    DgpMode mode = DgpMode::reduced_form;
    std::uint64_t seed = 1;
    int firms = 100;
    int products = 5;
    int destinations = 50;
    int years = 2;
    int first_year = 2005;

    /// Term name -> planted coefficient. Names use the term syntax of
    /// parse_term; "_cons" is the intercept.
    std::map<std::string, double> betas;
    /// FE level ("firm", "product", "mode", "destination", "year") -> variance.
    std::map<std::string, double> fe_variances;

    CovariateCalibration calibration;
    double share_air = 0.2446;
    double share_ocean = 0.7431;
    double share_land = 0.0123;
    double exporter_rate_lo = 11.30;
    double exporter_rate_hi = 13.77;

    // structural mode
    double c = 10.0;
    double q = 1e5;
    double delta_air = 0.02;
    double delta_ocean = 0.1;
    double delta_land = 0.05;
    double f_scale = 1.0;
    bool poisson_jitter = false;

    // log per-shipment value in reduced-form mode
    double value_intercept = 9.42;
    double value_sd = 1.58;
    double ln_unit_value = 1.33;

    DgpConfig();
    void validate() const;
    double delta_for(TransportMode mode) const;
};

/// Reference coefficients of the shipment-frequency regression with the full
/// destination covariate set, keyed by term name.
std::map<std::string, double> default_betas();
std::map<std::string, double> default_fe_variances();

/// Underlying (mu, sigma) of a normal whose truncation to [lo, hi] has the
/// target mean and sd.
struct TruncatedNormal {
    double mu = 0.0;
    double sigma = 1.0;
    double lo = 0.0;
    double hi = 0.0;

    static TruncatedNormal calibrate(const MomentTarget& target);
    double mean() const;
    double sd() const;
    /// Inverse CDF of the truncated law at u in [0, 1].
    double quantile(double u) const;
};

/// Zero with probability p_zero, else uniform on [lower, hi]; matched to the
/// target mean and sd.
struct ZeroInflatedUniform {
    double p_zero = 1.0;
    double lower = 0.0;
    double hi = 0.0;

    static ZeroInflatedUniform calibrate(const MomentTarget& target);
    double quantile(double u) const;
};

std::vector<CountryProfile> generate_countries(const DgpConfig& config);

/// HS8 code of product index p.
std::string product_code(const DgpConfig& config, int p);

/// Cells sorted by (firm, product, mode, destination, year). One mode per
/// (firm, product, destination). Zero-count cells are kept.
Panel generate_panel(const DgpConfig& config, const std::vector<CountryProfile>& countries);

/// Model parameters a structural cell is solved at.
ModelParams structural_params(const DgpConfig& config, const PanelObservation& obs);

}  // namespace shipfreq
