#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "shipfreq/panel.hpp"

namespace shipfreq {

/// Distance bands of the spline terms, in km.
inline constexpr double kSpline1Km = 3970.0;
inline constexpr double kSpline2Km = 9283.0;

enum class FactorKind { column, log, spline1, spline2 };

struct Factor {
    FactorKind kind = FactorKind::column;
    std::string column;  ///< empty for spline dummies
};

/// Product of factors; no factors means the constant. Written as e.g.
/// "ln_distance", "log(n_shipments)", "spline1*ln_distance", "_cons".
struct Term {
    std::string name;
    std::vector<Factor> factors;

    bool is_constant() const { return factors.empty(); }
};

Term parse_term(std::string_view text);

/// True if `column` names a numeric field of PanelObservation.
bool is_numeric_column(std::string_view column);

/// Value of a numeric column. Throws ValidationError if the column is
/// unknown or the optional value is absent.
double column_value(const PanelObservation& obs, std::string_view column);

double spline1(double ln_distance);
double spline2(double ln_distance);

/// Throws ValidationError naming the term on a missing field, or on log of
/// a nonpositive value.
double evaluate(const Term& term, const PanelObservation& obs);

/// Grouping key: one or more of firm, product (= hs8), hs4, hs2, mode,
/// destination, year joined by '*'.
struct GroupKey {
    std::string name;
    std::vector<std::string> parts;
};

GroupKey parse_group_key(std::string_view text);

/// Label of the group `obs` belongs to under `key`.
std::string group_label(const GroupKey& key, const PanelObservation& obs);

}  // namespace shipfreq
