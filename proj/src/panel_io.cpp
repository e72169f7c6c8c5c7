#include "shipfreq/panel_io.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <tuple>

#include <fmt/core.h>

#include "shipfreq/errors.hpp"

namespace shipfreq {
namespace {

std::vector<std::string_view> split_fields(std::string_view line) {
    std::vector<std::string_view> fields;
    std::size_t start = 0;
    while (true) {
        const std::size_t pos = line.find(',', start);
        fields.push_back(line.substr(start, pos == std::string_view::npos ? pos : pos - start));
        if (pos == std::string_view::npos) {
            break;
        }
        start = pos + 1;
    }
    return fields;
}

struct LineParser {
    const std::string& source;
    std::size_t line;

    [[noreturn]] void fail(const std::string& message) const {
        throw ValidationError(fmt::format("{} line {}: {}", source, line, message));
    }

    double real(std::string_view text, std::string_view column) const {
        double v = 0.0;
        const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
        if (ec != std::errc() || ptr != text.data() + text.size() || !std::isfinite(v)) {
            fail(fmt::format("column {}: '{}' is not a finite number", column, text));
        }
        return v;
    }

    std::int64_t integer(std::string_view text, std::string_view column) const {
        std::int64_t v = 0;
        const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
        if (ec != std::errc() || ptr != text.data() + text.size()) {
            fail(fmt::format("column {}: '{}' is not an integer", column, text));
        }
        return v;
    }

    int binary(std::string_view text, std::string_view column) const {
        const std::int64_t v = integer(text, column);
        if (v != 0 && v != 1) {
            fail(fmt::format("column {}: expected 0 or 1, got {}", column, v));
        }
        return static_cast<int>(v);
    }

    std::optional<double> optional_real(std::string_view text, std::string_view column) const {
        if (text.empty()) {
            return std::nullopt;
        }
        return real(text, column);
    }
};

std::string optional_field(const std::optional<double>& v) {
    return v ? format_double(*v) : std::string();
}

}  // namespace

std::string format_double(double value) {
    return fmt::format("{}", value);
}

const std::vector<std::string>& panel_columns() {
    static const std::vector<std::string> columns{
        "firm",        "product",       "mode",          "destination",         "year",
        "n_shipments", "ln_pershipment_cost", "ln_distance", "ln_gdp",           "ln_gdp_pc",
        "island",      "landlocked",    "common_religion", "common_legal",      "colony",
        "importer_rate", "exporter_rate"};
    return columns;
}

const std::vector<std::string>& optional_panel_columns() {
    static const std::vector<std::string> columns{"ln_pershipment_value", "ln_export_value",
                                                  "ln_export_weight"};
    return columns;
}

void write_panel(const Panel& panel, std::ostream& out) {
    std::string header;
    for (const auto& c : panel_columns()) {
        header += c + ',';
    }
    for (const auto& c : optional_panel_columns()) {
        header += c + ',';
    }
    header.back() = '\n';
    out << header;
    for (const PanelObservation& o : panel) {
        out << fmt::format("{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}\n", o.firm,
                           o.product, to_string(o.mode), o.destination, o.year, o.n_shipments,
                           format_double(o.ln_pershipment_cost), format_double(o.ln_distance),
                           format_double(o.ln_gdp), format_double(o.ln_gdp_pc), o.island,
                           o.landlocked, format_double(o.common_religion), o.common_legal, o.colony,
                           format_double(o.importer_rate), format_double(o.exporter_rate),
                           optional_field(o.ln_pershipment_value), optional_field(o.ln_export_value),
                           optional_field(o.ln_export_weight));
    }
}

void write_panel(const Panel& panel, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw ValidationError(fmt::format("cannot write {}", path.string()));
    }
    write_panel(panel, out);
    if (!out) {
        throw ValidationError(fmt::format("error writing {}", path.string()));
    }
}

Panel read_panel(std::istream& in, const std::string& source) {
    std::string line;
    if (!std::getline(in, line)) {
        throw ValidationError(fmt::format("{} line 1: missing header", source));
    }
    if (!line.empty() && line.back() == '\r') {
        line.pop_back();
    }
    const auto header = split_fields(line);
    std::map<std::string, std::size_t, std::less<>> index;
    for (std::size_t k = 0; k < header.size(); ++k) {
        if (!index.emplace(std::string(header[k]), k).second) {
            throw ValidationError(fmt::format("{} line 1: duplicate column '{}'", source, header[k]));
        }
    }
    auto column = [&](const std::string& name) -> std::optional<std::size_t> {
        const auto it = index.find(name);
        return it == index.end() ? std::nullopt : std::optional<std::size_t>(it->second);
    };
    std::vector<std::size_t> at;
    for (const auto& name : panel_columns()) {
        const auto k = column(name);
        if (!k) {
            throw ValidationError(fmt::format("{} line 1: missing column '{}'", source, name));
        }
        at.push_back(*k);
    }
    std::vector<std::optional<std::size_t>> optional_at;
    for (const auto& name : optional_panel_columns()) {
        optional_at.push_back(column(name));
    }

    using Key = std::tuple<std::string, std::string, TransportMode, std::string, int>;
    std::map<Key, std::size_t> seen;
    Panel panel;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') {
            line.pop_back();
        }
        if (line.empty()) {
            continue;
        }
        const LineParser p{source, line_no};
        const auto f = split_fields(line);
        if (f.size() != header.size()) {
            p.fail(fmt::format("expected {} fields, found {}", header.size(), f.size()));
        }
        const auto& names = panel_columns();
        auto field = [&](std::size_t k) { return f[at[k]]; };
        PanelObservation o;
        o.firm = std::string(field(0));
        o.product = std::string(field(1));
        o.destination = std::string(field(3));
        if (o.firm.empty() || o.product.empty() || o.destination.empty()) {
            p.fail("firm, product and destination must be nonempty");
        }
        try {
            o.mode = parse_mode(field(2));
        } catch (const ValidationError& e) {
            p.fail(e.what());
        }
        o.year = static_cast<int>(p.integer(field(4), names[4]));
        o.n_shipments = p.integer(field(5), names[5]);
        if (o.n_shipments < 0) {
            p.fail(fmt::format("n_shipments must be nonnegative, got {}", o.n_shipments));
        }
        o.ln_pershipment_cost = p.real(field(6), names[6]);
        o.ln_distance = p.real(field(7), names[7]);
        o.ln_gdp = p.real(field(8), names[8]);
        o.ln_gdp_pc = p.real(field(9), names[9]);
        o.island = p.binary(field(10), names[10]);
        o.landlocked = p.binary(field(11), names[11]);
        o.common_religion = p.real(field(12), names[12]);
        if (o.common_religion < 0.0 || o.common_religion > 1.0) {
            p.fail(fmt::format("common_religion must lie in [0, 1], got {}", o.common_religion));
        }
        o.common_legal = p.binary(field(13), names[13]);
        o.colony = p.binary(field(14), names[14]);
        o.importer_rate = p.real(field(15), names[15]);
        o.exporter_rate = p.real(field(16), names[16]);
        const auto& opt_names = optional_panel_columns();
        std::optional<double>* targets[] = {&o.ln_pershipment_value, &o.ln_export_value,
                                            &o.ln_export_weight};
        for (std::size_t k = 0; k < optional_at.size(); ++k) {
            if (optional_at[k]) {
                *targets[k] = p.optional_real(f[*optional_at[k]], opt_names[k]);
            }
        }

        Key key{o.firm, o.product, o.mode, o.destination, o.year};
        const auto [it, inserted] = seen.emplace(std::move(key), line_no);
        if (!inserted) {
            p.fail(fmt::format("duplicate key (firm={}, product={}, mode={}, destination={}, year={}), "
                               "first seen on line {}",
                               o.firm, o.product, to_string(o.mode), o.destination, o.year, it->second));
        }
        panel.push_back(std::move(o));
    }
    return panel;
}

Panel read_panel(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw ValidationError(fmt::format("cannot read {}", path.string()));
    }
    return read_panel(in, path.string());
}

void write_countries(const std::vector<CountryProfile>& countries, std::ostream& out) {
    out << "id,ln_distance,ln_gdp,ln_gdp_pc,ln_pershipment_cost,importer_rate,island,landlocked,"
           "common_legal,colony,common_religion\n";
    for (const CountryProfile& c : countries) {
        out << fmt::format("{},{},{},{},{},{},{},{},{},{},{}\n", c.id, format_double(c.ln_distance),
                           format_double(c.ln_gdp), format_double(c.ln_gdp_pc),
                           format_double(c.ln_pershipment_cost), format_double(c.importer_rate),
                           c.island, c.landlocked, c.common_legal, c.colony,
                           format_double(c.common_religion));
    }
}

void write_countries(const std::vector<CountryProfile>& countries, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw ValidationError(fmt::format("cannot write {}", path.string()));
    }
    write_countries(countries, out);
}

}  // namespace shipfreq
