#include "shipfreq/terms.hpp"

#include <algorithm>
#include <array>
#include <cmath>

#include <fmt/core.h>

#include "shipfreq/errors.hpp"

namespace shipfreq {
namespace {

constexpr std::array<std::string_view, 16> kNumericColumns{
    "n_shipments",   "exporter_rate",  "ln_pershipment_cost", "ln_distance",
    "ln_gdp",        "ln_gdp_pc",      "island",              "landlocked",
    "common_religion", "common_legal", "colony",              "importer_rate",
    "ln_pershipment_value", "ln_export_value", "ln_export_weight", "year"};

std::string strip_spaces(std::string_view text) {
    std::string out;
    for (const char ch : text) {
        if (ch != ' ' && ch != '\t') {
            out.push_back(ch);
        }
    }
    return out;
}

std::vector<std::string> split(const std::string& text, char sep) {
    std::vector<std::string> parts;
    std::size_t start = 0;
    while (true) {
        const std::size_t pos = text.find(sep, start);
        parts.push_back(text.substr(start, pos - start));
        if (pos == std::string::npos) {
            break;
        }
        start = pos + 1;
    }
    return parts;
}

Factor parse_factor(const std::string& text, std::string_view term) {
    if (text == "spline1") {
        return {FactorKind::spline1, {}};
    }
    if (text == "spline2") {
        return {FactorKind::spline2, {}};
    }
    if (text.starts_with("log(") && text.ends_with(")")) {
        std::string inner = text.substr(4, text.size() - 5);
        if (!is_numeric_column(inner)) {
            throw ValidationError(fmt::format("term '{}': unknown column '{}'", term, inner));
        }
        return {FactorKind::log, std::move(inner)};
    }
    if (!is_numeric_column(text)) {
        throw ValidationError(fmt::format("term '{}': unknown column '{}'", term, text));
    }
    return {FactorKind::column, text};
}

}  // namespace

Term parse_term(std::string_view text) {
    Term term;
    term.name = strip_spaces(text);
    if (term.name.empty()) {
        throw ValidationError("empty regressor term");
    }
    if (term.name == "_cons") {
        return term;
    }
    for (const std::string& part : split(term.name, '*')) {
        if (part.empty()) {
            throw ValidationError(fmt::format("term '{}': empty factor", term.name));
        }
        term.factors.push_back(parse_factor(part, term.name));
    }
    return term;
}

bool is_numeric_column(std::string_view column) {
    return std::find(kNumericColumns.begin(), kNumericColumns.end(), column) != kNumericColumns.end();
}

double column_value(const PanelObservation& obs, std::string_view column) {
    auto optional = [&](const std::optional<double>& v) {
        if (!v) {
            throw ValidationError(fmt::format("column '{}' is missing for this row", column));
        }
        return *v;
    };
    if (column == "n_shipments") return static_cast<double>(obs.n_shipments);
    if (column == "exporter_rate") return obs.exporter_rate;
    if (column == "ln_pershipment_cost") return obs.ln_pershipment_cost;
    if (column == "ln_distance") return obs.ln_distance;
    if (column == "ln_gdp") return obs.ln_gdp;
    if (column == "ln_gdp_pc") return obs.ln_gdp_pc;
    if (column == "island") return obs.island;
    if (column == "landlocked") return obs.landlocked;
    if (column == "common_religion") return obs.common_religion;
    if (column == "common_legal") return obs.common_legal;
    if (column == "colony") return obs.colony;
    if (column == "importer_rate") return obs.importer_rate;
    if (column == "ln_pershipment_value") return optional(obs.ln_pershipment_value);
    if (column == "ln_export_value") return optional(obs.ln_export_value);
    if (column == "ln_export_weight") return optional(obs.ln_export_weight);
    if (column == "year") return obs.year;
    throw ValidationError(fmt::format("unknown column '{}'", column));
}

double spline1(double ln_distance) {
    return ln_distance <= std::log(kSpline1Km) ? 1.0 : 0.0;
}

double spline2(double ln_distance) {
    return (ln_distance > std::log(kSpline1Km) && ln_distance <= std::log(kSpline2Km)) ? 1.0 : 0.0;
}

double evaluate(const Term& term, const PanelObservation& obs) {
    double value = 1.0;
    for (const Factor& factor : term.factors) {
        switch (factor.kind) {
            case FactorKind::spline1:
                value *= spline1(obs.ln_distance);
                break;
            case FactorKind::spline2:
                value *= spline2(obs.ln_distance);
                break;
            case FactorKind::column: {
                try {
                    value *= column_value(obs, factor.column);
                } catch (const ValidationError& e) {
                    throw ValidationError(fmt::format("term '{}': {}", term.name, e.what()));
                }
                break;
            }
            case FactorKind::log: {
                double v = 0.0;
                try {
                    v = column_value(obs, factor.column);
                } catch (const ValidationError& e) {
                    throw ValidationError(fmt::format("term '{}': {}", term.name, e.what()));
                }
                if (!(v > 0.0)) {
                    throw ValidationError(
                        fmt::format("term '{}': log of nonpositive value {}", term.name, v));
                }
                value *= std::log(v);
                break;
            }
        }
    }
    return value;
}

GroupKey parse_group_key(std::string_view text) {
    GroupKey key;
    key.name = strip_spaces(text);
    if (key.name.empty()) {
        throw ValidationError("empty grouping key");
    }
    for (std::string part : split(key.name, '*')) {
        if (part == "hs8") {
            part = "product";
        }
        static constexpr std::array<std::string_view, 7> kKnown{
            "firm", "product", "hs4", "hs2", "mode", "destination", "year"};
        if (std::find(kKnown.begin(), kKnown.end(), part) == kKnown.end()) {
            throw ValidationError(
                fmt::format("grouping key '{}': unknown field '{}'", key.name, part));
        }
        key.parts.push_back(std::move(part));
    }
    return key;
}

std::string group_label(const GroupKey& key, const PanelObservation& obs) {
    std::string label;
    for (const std::string& part : key.parts) {
        if (!label.empty()) {
            label.push_back('|');
        }
        if (part == "firm") {
            label += obs.firm;
        } else if (part == "product") {
            label += obs.product;
        } else if (part == "hs4") {
            label += obs.product.substr(0, 4);
        } else if (part == "hs2") {
            label += obs.product.substr(0, 2);
        } else if (part == "mode") {
            label += to_string(obs.mode);
        } else if (part == "destination") {
            label += obs.destination;
        } else {
            label += std::to_string(obs.year);
        }
    }
    return label;
}

}  // namespace shipfreq
