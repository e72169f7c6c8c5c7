#include "shipfreq_cli.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <ostream>
#include <sstream>

#include <CLI11.hpp>
#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <fmt/format.h>

#include "shipfreq/errors.hpp"
#include "shipfreq/panel_io.hpp"
#include "shipfreq/rng.hpp"
#include "shipfreq/terms.hpp"

namespace shipfreq::cli {

namespace fs = std::filesystem;

namespace {

const std::vector<std::string>& known_sections() {
    static const std::vector<std::string> names{"run",  "model",       "statics",    "dgp",
                                                "betas", "fe_variance", "estimation", "panel"};
    return names;
}

std::string trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r\n");
    return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> split_list(std::string_view s) {
    std::vector<std::string> items;
    std::size_t start = 0;
    while (true) {
        const auto comma = s.find(',', start);
        const std::string item = trim(s.substr(start, comma == std::string_view::npos ? s.size() - start : comma - start));
        if (!item.empty()) items.push_back(item);
        if (comma == std::string_view::npos) break;
        start = comma + 1;
    }
    return items;
}

double to_number(const std::string& value, const std::string& where) {
    double v = 0.0;
    const char* end = value.data() + value.size();
    const auto [ptr, ec] = std::from_chars(value.data(), end, v);
    if (ec != std::errc() || ptr != end || value.empty()) {
        throw ValidationError(fmt::format("{}: expected a number, got '{}'", where, value));
    }
    return v;
}

int to_count(std::int64_t v, const std::string& where) {
    if (v < std::numeric_limits<int>::min() || v > std::numeric_limits<int>::max()) {
        throw ValidationError(fmt::format("{}: {} is out of range", where, v));
    }
    return static_cast<int>(v);
}

std::string hex64(std::uint64_t v) {
    return fmt::format("{:016x}", v);
}

/// Artifacts of one command, written together with the manifest.
class Outputs {
public:
    void add(std::string name, std::string content) { files_.emplace_back(std::move(name), std::move(content)); }

    void write(const fs::path& dir, Command command, std::uint64_t seed, const ConfigFile& config) const {
        fs::create_directories(dir);
        std::string manifest = fmt::format("command = {}\nseed = {}\n\n[config]\n{}\n[outputs]\n",
                                           to_string(command), seed, config.echo());
        for (const auto& [name, content] : files_) {
            std::ofstream f(dir / name, std::ios::binary);
            f << content;
            if (!f) {
                throw ValidationError(fmt::format("cannot write {}", (dir / name).string()));
            }
            manifest += fmt::format("{} bytes={} fnv1a64={}\n", name, content.size(), hex64(hash_name(content)));
        }
        std::ofstream m(dir / "manifest.txt", std::ios::binary);
        m << manifest;
        if (!m) {
            throw ValidationError(fmt::format("cannot write {}", (dir / "manifest.txt").string()));
        }
    }

private:
    std::vector<std::pair<std::string, std::string>> files_;
};

std::string histogram_csv(const Panel& panel) {
    constexpr std::int64_t top = 50;
    std::vector<std::size_t> bins(top + 1, 0);
    for (const auto& o : panel) {
        ++bins[static_cast<std::size_t>(std::min(o.n_shipments, top))];
    }
    std::string csv = "n_shipments,cells,share\n";
    for (std::int64_t n = 0; n <= top; ++n) {
        const double share = panel.empty() ? 0.0 : static_cast<double>(bins[static_cast<std::size_t>(n)]) /
                                                       static_cast<double>(panel.size());
        csv += fmt::format("{}{},{},{}\n", n, n == top ? "+" : "", bins[static_cast<std::size_t>(n)],
                           format_double(share));
    }
    return csv;
}

std::string statics_failures_csv(const StaticsSummary& summary, const ParameterGrid& grid, std::uint64_t seed) {
    std::string csv = "claim,draw,c,q,f,delta,r,r1\n";
    for (const auto& t : summary.claims) {
        for (const std::uint64_t i : t.failing_draws) {
            const ModelParams p = draw_params(grid, seed, i);
            csv += fmt::format("{},{},{},{},{},{},{},{}\n", t.claim, i, format_double(p.c), format_double(p.q),
                               format_double(p.f), format_double(p.delta), format_double(p.r),
                               format_double(p.r1));
        }
    }
    return csv;
}

std::string estimates_table(const EstimateResult& r) {
    std::string text = fmt::format("{:<36} {:>12} {:>12} {:>10}\n", "term", "coef", "cluster_se", "effect%");
    for (std::size_t k = 0; k < r.names.size(); ++k) {
        if (r.omitted[k]) {
            text += fmt::format("{:<36} {:>12}\n", r.names[k], "(omitted)");
            continue;
        }
        const double b = r.coefficients(static_cast<Eigen::Index>(k));
        const double effect = is_log_term(r.names[k]) ? log_effect(b) : level_effect(b);
        text += fmt::format("{:<36} {:>12.6f} {:>12.6f} {:>10.3f}\n", r.names[k], b,
                            r.se(static_cast<Eigen::Index>(k)), effect);
    }
    return text;
}

EstimateResult fit(const Panel& panel, const EstimationSpec& spec, const PpmlOptions& options) {
    const Design d = build_design(panel, spec);
    return spec.estimator == Estimator::ols ? fit_ols(d) : fit_ppml(d, options);
}

void print_warnings(const EstimateResult& r, std::ostream& err) {
    for (const auto& w : r.warnings) {
        err << "warning: " << w << '\n';
    }
}

int run_solve(ConfigFile& config, const fs::path& out_dir, std::uint64_t seed, std::ostream& out) {
    const ModelParams p = read_model(config);
    const ModelVariant variant = read_variant(config);
    config.reject_unused({"run", "model"});
    const ModelSolution s = solve(p, variant);
    out << fmt::format("x_star: {}\nn: {}\nD: {}\nC: {}\nfoc_residual: {}\nsoc: {}\nsolver_path: {}\n",
                       format_double(s.x_star), format_double(s.n), format_double(s.demand),
                       format_double(s.cost), format_double(s.foc_residual), format_double(s.soc_value),
                       to_string(s.solver_path));
    Outputs files;
    files.add("solution.csv", solution_csv(s));
    files.write(out_dir, Command::solve, seed, config);
    return exit_ok;
}

int run_statics(ConfigFile& config, const fs::path& out_dir, std::uint64_t seed, std::ostream& out) {
    config.require_section("statics");
    const std::int64_t draws = config.integer("statics", "draws", 1000);
    if (draws < 0) {
        throw ValidationError(fmt::format("[statics] draws must be >= 0, got {}", draws));
    }
    const ParameterGrid grid = read_grid(config);
    config.reject_unused({"run", "statics"});
    const StaticsSummary summary = statics_sweep(grid, static_cast<std::size_t>(draws), seed);
    std::size_t failing = 0;
    out << fmt::format("{:<24} {:>6} {:>6} {:>6} {:>9}\n", "claim", "draws", "pass", "fail", "skipped");
    for (const auto& t : summary.claims) {
        out << fmt::format("{:<24} {:>6} {:>6} {:>6} {:>9}\n", t.claim, t.draws, t.pass, t.fail,
                           t.condition_not_met);
        failing += t.fail > 0;
    }
    out << fmt::format("claims with failures: {}\n", failing);
    Outputs files;
    files.add("statics_summary.csv", summary_csv(summary));
    files.add("statics_failures.csv", statics_failures_csv(summary, grid, seed));
    files.write(out_dir, Command::statics, seed, config);
    return exit_ok;
}

int run_simulate(ConfigFile& config, const fs::path& out_dir, std::uint64_t seed, std::ostream& out) {
    const DgpConfig dgp = read_dgp(config, seed);
    config.reject_unused({"run", "dgp", "betas", "fe_variance"});
    const auto countries = generate_countries(dgp);
    const Panel panel = generate_panel(dgp, countries);
    std::ostringstream panel_csv, countries_csv;
    write_panel(panel, panel_csv);
    write_countries(countries, countries_csv);
    out << fmt::format("cells: {}\n", panel.size());
    Outputs files;
    files.add("panel.csv", panel_csv.str());
    files.add("countries.csv", countries_csv.str());
    files.add("shipment_histogram.csv", histogram_csv(panel));
    files.write(out_dir, Command::simulate, seed, config);
    return exit_ok;
}

int run_estimate(ConfigFile& config, const fs::path& out_dir, std::uint64_t seed, std::ostream& out,
                 std::ostream& err) {
    const EstimationSpec spec = read_estimation(config);
    const PpmlOptions options = read_ppml_options(config);
    config.require_section("panel");
    const std::string panel_value = config.required_text("panel", "path");
    const fs::path panel_path = fs::path(panel_value).is_absolute() ? fs::path(panel_value)
                                                                    : config.base_dir() / panel_value;
    config.reject_unused({"run", "estimation", "panel"});
    std::ifstream in(panel_path, std::ios::binary);
    if (!in) {
        throw ValidationError(fmt::format("cannot open panel file {}", panel_path.string()));
    }
    const Panel panel = read_panel(in, panel_path.filename().string());
    const EstimateResult r = fit(panel, spec, options);
    print_warnings(r, err);
    out << estimates_table(r);
    Outputs files;
    files.add("estimates.csv", results_csv(r));
    files.add("run_metadata.txt", run_metadata(r, spec));
    files.write(out_dir, Command::estimate, seed, config);
    return exit_ok;
}

int run_roundtrip(ConfigFile& config, const fs::path& out_dir, std::uint64_t seed, std::ostream& out,
                  std::ostream& err) {
    const DgpConfig dgp = read_dgp(config, seed);
    const EstimationSpec spec = read_estimation(config);
    const PpmlOptions options = read_ppml_options(config);
    config.reject_unused({"run", "dgp", "betas", "fe_variance", "estimation"});
    if (dgp.mode != DgpMode::reduced_form) {
        throw ValidationError("roundtrip needs [dgp] mode = reduced_form: structural panels have no planted coefficients");
    }
    if (spec.estimator != Estimator::ppml) {
        throw ValidationError("roundtrip needs [estimation] estimator = ppml");
    }
    const auto countries = generate_countries(dgp);
    const Panel panel = generate_panel(dgp, countries);
    const EstimateResult r = fit(panel, spec, options);
    print_warnings(r, err);
    const auto rows = compare_plants(r, dgp.betas);

    std::ostringstream panel_csv, countries_csv;
    write_panel(panel, panel_csv);
    write_countries(countries, countries_csv);
    Outputs files;
    files.add("panel.csv", panel_csv.str());
    files.add("countries.csv", countries_csv.str());
    files.add("estimates.csv", results_csv(r));
    files.add("roundtrip_report.csv", recovery_csv(rows));
    files.add("run_metadata.txt", run_metadata(r, spec));
    files.write(out_dir, Command::roundtrip, seed, config);

    std::size_t beyond = 0;
    out << fmt::format("{:<36} {:>10} {:>10} {:>10} {:>7}\n", "term", "planted", "estimate", "cluster_se", "z");
    for (const auto& row : rows) {
        if (row.omitted) {
            out << fmt::format("{:<36} {:>10.4f} {:>10}\n", row.term, row.planted, "(omitted)");
            continue;
        }
        out << fmt::format("{:<36} {:>10.4f} {:>10.4f} {:>10.4f} {:>7.2f}\n", row.term, row.planted, row.estimate,
                           row.se, row.z);
        beyond += !(std::abs(row.z) <= 3.0);
    }
    if (beyond > 0) {
        err << fmt::format("roundtrip: {} coefficient(s) more than 3 standard errors from the plant\n", beyond);
        return exit_roundtrip_failed;
    }
    return exit_ok;
}

}  // namespace

std::string_view to_string(Command c) {
    switch (c) {
        case Command::solve: return "solve";
        case Command::statics: return "statics";
        case Command::simulate: return "simulate";
        case Command::estimate: return "estimate";
        case Command::roundtrip: return "roundtrip";
    }
    return "?";
}

Command parse_command(std::string_view name) {
    for (const Command c : {Command::solve, Command::statics, Command::simulate, Command::estimate,
                            Command::roundtrip}) {
        if (to_string(c) == name) return c;
    }
    throw ValidationError(fmt::format("unknown command '{}'", name));
}

ConfigFile ConfigFile::load(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw ValidationError(fmt::format("cannot open config file {}", path.string()));
    }
    ConfigFile c = parse(in, path.string());
    c.base_dir_ = fs::absolute(path).parent_path();
    return c;
}

ConfigFile ConfigFile::parse(std::istream& in, const std::string& source) {
    namespace pt = boost::property_tree;
    std::ostringstream raw;
    raw << in.rdbuf();
    const std::string text = raw.str();
    pt::ptree tree;
    try {
        std::istringstream body(text);
        pt::ini_parser::read_ini(body, tree);
    } catch (const pt::ini_parser_error& e) {
        throw ValidationError(fmt::format("{} line {}: {}", source, e.line(), e.message()));
    }
    ConfigFile c;
    c.source_ = source;
    c.base_dir_ = fs::current_path();
    // The INI reader drops sections without keys; register headers directly.
    std::istringstream lines(text);
    std::string line;
    while (std::getline(lines, line)) {
        const std::string t = trim(line);
        if (t.size() > 2 && t.front() == '[' && t.back() == ']') {
            c.sections_[trim(std::string_view(t).substr(1, t.size() - 2))];
        }
    }
    for (const auto& [name, node] : tree) {
        if (node.empty()) {
            c.sections_["run"][name] = trim(node.data());
            continue;
        }
        auto& section = c.sections_[name];
        for (const auto& [key, value] : node) {
            section[key] = trim(value.data());
        }
    }
    for (const auto& [name, entries] : c.sections_) {
        if (std::find(known_sections().begin(), known_sections().end(), name) == known_sections().end()) {
            throw ValidationError(fmt::format("{}: unknown section [{}]", source, name));
        }
    }
    return c;
}

void ConfigFile::set(std::string_view assignment) {
    const auto eq = assignment.find('=');
    const auto dot = assignment.find('.');
    if (eq == std::string_view::npos || dot == std::string_view::npos || dot > eq) {
        throw ValidationError(fmt::format("--set expects section.key=value, got '{}'", assignment));
    }
    const std::string section = trim(assignment.substr(0, dot));
    const std::string key = trim(assignment.substr(dot + 1, eq - dot - 1));
    if (std::find(known_sections().begin(), known_sections().end(), section) == known_sections().end()) {
        throw ValidationError(fmt::format("--set: unknown section [{}]", section));
    }
    if (key.empty()) {
        throw ValidationError(fmt::format("--set: empty key in '{}'", assignment));
    }
    sections_[section][key] = trim(assignment.substr(eq + 1));
}

bool ConfigFile::has_section(const std::string& section) const {
    return sections_.contains(section);
}

void ConfigFile::require_section(const std::string& section) const {
    if (!has_section(section)) {
        throw ValidationError(fmt::format("{}: missing section [{}]", source_, section));
    }
}

std::optional<std::string> ConfigFile::text(const std::string& section, const std::string& key) {
    const auto s = sections_.find(section);
    if (s == sections_.end()) return std::nullopt;
    const auto k = s->second.find(key);
    if (k == s->second.end()) return std::nullopt;
    used_.emplace(section, key);
    return k->second;
}

std::string ConfigFile::text(const std::string& section, const std::string& key, const std::string& fallback) {
    return text(section, key).value_or(fallback);
}

std::string ConfigFile::required_text(const std::string& section, const std::string& key) {
    const auto v = text(section, key);
    if (!v) {
        throw ValidationError(fmt::format("{}: [{}] missing key '{}'", source_, section, key));
    }
    return *v;
}

double ConfigFile::number(const std::string& section, const std::string& key, double fallback) {
    const auto v = text(section, key);
    return v ? to_number(*v, fmt::format("[{}] {}", section, key)) : fallback;
}

double ConfigFile::required_number(const std::string& section, const std::string& key) {
    return to_number(required_text(section, key), fmt::format("[{}] {}", section, key));
}

std::int64_t ConfigFile::integer(const std::string& section, const std::string& key, std::int64_t fallback) {
    const auto v = text(section, key);
    if (!v) return fallback;
    std::int64_t out = 0;
    const char* end = v->data() + v->size();
    const auto [ptr, ec] = std::from_chars(v->data(), end, out);
    if (ec != std::errc() || ptr != end || v->empty()) {
        throw ValidationError(fmt::format("[{}] {}: expected an integer, got '{}'", section, key, *v));
    }
    return out;
}

bool ConfigFile::boolean(const std::string& section, const std::string& key, bool fallback) {
    const auto v = text(section, key);
    if (!v) return fallback;
    if (*v == "true" || *v == "yes" || *v == "1") return true;
    if (*v == "false" || *v == "no" || *v == "0") return false;
    throw ValidationError(fmt::format("[{}] {}: expected true or false, got '{}'", section, key, *v));
}

std::optional<std::vector<std::string>> ConfigFile::list(const std::string& section, const std::string& key) {
    const auto v = text(section, key);
    if (!v) return std::nullopt;
    return split_list(*v);
}

std::map<std::string, std::string> ConfigFile::entries(const std::string& section) {
    const auto s = sections_.find(section);
    if (s == sections_.end()) return {};
    for (const auto& [key, value] : s->second) {
        used_.emplace(section, key);
    }
    return s->second;
}

void ConfigFile::reject_unused(const std::vector<std::string>& sections) const {
    for (const auto& name : sections) {
        const auto s = sections_.find(name);
        if (s == sections_.end()) continue;
        for (const auto& [key, value] : s->second) {
            if (!used_.contains({name, key})) {
                throw ValidationError(fmt::format("{}: unknown key '{}' in section [{}]", source_, key, name));
            }
        }
    }
}

std::string ConfigFile::echo() const {
    std::string text;
    for (const auto& [section, entries] : sections_) {
        for (const auto& [key, value] : entries) {
            text += fmt::format("{}.{} = {}\n", section, key, value);
        }
    }
    return text;
}

ModelParams read_model(ConfigFile& config) {
    config.require_section("model");
    ModelParams p;
    p.c = config.required_number("model", "c");
    p.q = config.required_number("model", "q");
    p.f = config.required_number("model", "f");
    p.delta = config.required_number("model", "delta");
    p.r = config.required_number("model", "r");
    p.r1 = config.required_number("model", "r1");
    return p;
}

ModelVariant read_variant(ConfigFile& config) {
    return parse_variant(config.text("model", "variant", "baseline"));
}

ParameterGrid read_grid(ConfigFile& config) {
    ParameterGrid grid;
    const std::pair<const char*, Range*> ranges[] = {{"c", &grid.c},         {"q", &grid.q}, {"f", &grid.f},
                                                     {"delta", &grid.delta}, {"r", &grid.r}, {"r1", &grid.r1}};
    for (const auto& [name, range] : ranges) {
        const auto items = config.list("statics", name);
        if (!items) continue;
        if (items->size() != 2) {
            throw ValidationError(fmt::format("[statics] {}: expected 'lo, hi'", name));
        }
        range->lo = to_number((*items)[0], fmt::format("[statics] {}", name));
        range->hi = to_number((*items)[1], fmt::format("[statics] {}", name));
    }
    grid.validate();
    return grid;
}

DgpConfig read_dgp(ConfigFile& config, std::uint64_t seed) {
    config.require_section("dgp");
    DgpConfig d;
    d.seed = seed;
    d.mode = parse_dgp_mode(config.text("dgp", "mode", std::string(to_string(d.mode))));
    d.firms = to_count(config.integer("dgp", "firms", d.firms), "[dgp] firms");
    d.products = to_count(config.integer("dgp", "products", d.products), "[dgp] products");
    d.destinations = to_count(config.integer("dgp", "destinations", d.destinations), "[dgp] destinations");
    d.years = to_count(config.integer("dgp", "years", d.years), "[dgp] years");
    d.first_year = to_count(config.integer("dgp", "first_year", d.first_year), "[dgp] first_year");
    d.share_air = config.number("dgp", "share_air", d.share_air);
    d.share_ocean = config.number("dgp", "share_ocean", d.share_ocean);
    d.share_land = config.number("dgp", "share_land", d.share_land);
    d.exporter_rate_lo = config.number("dgp", "exporter_rate_lo", d.exporter_rate_lo);
    d.exporter_rate_hi = config.number("dgp", "exporter_rate_hi", d.exporter_rate_hi);
    d.c = config.number("dgp", "c", d.c);
    d.q = config.number("dgp", "q", d.q);
    d.delta_air = config.number("dgp", "delta_air", d.delta_air);
    d.delta_ocean = config.number("dgp", "delta_ocean", d.delta_ocean);
    d.delta_land = config.number("dgp", "delta_land", d.delta_land);
    d.f_scale = config.number("dgp", "f_scale", d.f_scale);
    d.poisson_jitter = config.boolean("dgp", "poisson_jitter", d.poisson_jitter);
    d.value_intercept = config.number("dgp", "value_intercept", d.value_intercept);
    d.value_sd = config.number("dgp", "value_sd", d.value_sd);
    d.ln_unit_value = config.number("dgp", "ln_unit_value", d.ln_unit_value);
    auto& cal = d.calibration;
    cal.distance_gdp_correlation = config.number("dgp", "distance_gdp_correlation", cal.distance_gdp_correlation);
    cal.p_island = config.number("dgp", "p_island", cal.p_island);
    cal.p_landlocked = config.number("dgp", "p_landlocked", cal.p_landlocked);
    cal.p_colony = config.number("dgp", "p_colony", cal.p_colony);
    cal.p_common_legal = config.number("dgp", "p_common_legal", cal.p_common_legal);

    const std::string plant = config.text("dgp", "plant", "default");
    if (plant == "zero") {
        for (auto& [name, beta] : d.betas) {
            if (name != "_cons") beta = 0.0;
        }
    } else if (plant != "default") {
        throw ValidationError(fmt::format("[dgp] plant: expected 'default' or 'zero', got '{}'", plant));
    }
    for (const auto& [key, value] : config.entries("betas")) {
        const std::string name = key == "_cons" ? key : parse_term(key).name;
        d.betas[name] = to_number(value, fmt::format("[betas] {}", key));
    }
    for (const auto& [key, value] : config.entries("fe_variance")) {
        d.fe_variances[key] = to_number(value, fmt::format("[fe_variance] {}", key));
    }
    d.validate();
    return d;
}

EstimationSpec read_estimation(ConfigFile& config) {
    config.require_section("estimation");
    EstimationSpec s;
    s.estimator = parse_estimator(config.text("estimation", "estimator", "ppml"));
    const std::string default_outcome = s.estimator == Estimator::ppml ? "count" : "ln_count";
    s.outcome = parse_outcome(config.text("estimation", "outcome", default_outcome));
    s.regressors = config.list("estimation", "regressors").value_or(default_regressors());
    s.fe_levels = config.list("estimation", "fe").value_or(std::vector<std::string>{"firm", "product*mode*year"});
    s.cluster = config.text("estimation", "cluster", "firm");
    if (s.cluster == "none") s.cluster.clear();
    s.validate();
    return s;
}

PpmlOptions read_ppml_options(ConfigFile& config) {
    PpmlOptions o;
    o.tolerance = config.number("estimation", "tolerance", o.tolerance);
    o.max_iterations = to_count(config.integer("estimation", "max_iterations", o.max_iterations),
                                "[estimation] max_iterations");
    o.check_separation = config.boolean("estimation", "check_separation", o.check_separation);
    if (!(o.tolerance > 0.0) || o.max_iterations < 1) {
        throw ValidationError("[estimation] tolerance must be > 0 and max_iterations >= 1");
    }
    return o;
}

std::vector<RecoveryRow> compare_plants(const EstimateResult& result, const std::map<std::string, double>& betas) {
    std::vector<RecoveryRow> rows;
    for (std::size_t k = 0; k < result.names.size(); ++k) {
        RecoveryRow row;
        row.term = result.names[k];
        const auto it = betas.find(row.term);
        row.planted = it == betas.end() ? 0.0 : it->second;
        row.omitted = result.omitted[k] != 0;
        if (row.omitted) {
            row.estimate = row.se = row.z = std::numeric_limits<double>::quiet_NaN();
        } else {
            row.estimate = result.coefficients(static_cast<Eigen::Index>(k));
            row.se = result.se(static_cast<Eigen::Index>(k));
            row.z = (row.estimate - row.planted) / row.se;
        }
        rows.push_back(row);
    }
    return rows;
}

std::string recovery_csv(const std::vector<RecoveryRow>& rows) {
    std::string csv = "term,planted,estimate,clustered_se,z,within_2se\n";
    for (const auto& r : rows) {
        if (r.omitted) {
            csv += fmt::format("{},{},,,,\n", r.term, format_double(r.planted));
            continue;
        }
        csv += fmt::format("{},{},{},{},{},{}\n", r.term, format_double(r.planted), format_double(r.estimate),
                           format_double(r.se), format_double(r.z), std::abs(r.z) <= 2.0 ? 1 : 0);
    }
    return csv;
}

std::string solution_csv(const ModelSolution& s) {
    const ModelParams& p = s.params;
    return fmt::format(
        "variant,c,q,f,delta,r,r1,x_star,n,demand,cost,foc_residual,soc,solver_path\n"
        "{},{},{},{},{},{},{},{},{},{},{},{},{},{}\n",
        to_string(s.variant), format_double(p.c), format_double(p.q), format_double(p.f), format_double(p.delta),
        format_double(p.r), format_double(p.r1), format_double(s.x_star), format_double(s.n),
        format_double(s.demand), format_double(s.cost), format_double(s.foc_residual), format_double(s.soc_value),
        to_string(s.solver_path));
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Optimal shipment size model, synthetic panels and PPML estimation", "shipfreq"};
    app.require_subcommand(1);
    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::string out_dir = "out";
    std::vector<std::string> overrides;
    const std::pair<Command, const char*> commands[] = {
        {Command::solve, "Solve for the optimal shipment size"},
        {Command::statics, "Sweep comparative-statics sign claims over random parameters"},
        {Command::simulate, "Generate a synthetic shipment panel"},
        {Command::estimate, "Estimate a regression on a panel file"},
        {Command::roundtrip, "Simulate, estimate and compare with the planted coefficients"},
    };
    for (const auto& [command, description] : commands) {
        CLI::App* sub = app.add_subcommand(std::string(to_string(command)), description);
        sub->add_option("--config", config_path, "INI configuration file")->required();
        sub->add_option("--seed", seed, "Master seed (overrides run.seed)");
        sub->add_option("--out", out_dir, "Output directory")->capture_default_str();
        sub->add_option("--set", overrides, "Override a key: section.key=value")->take_all();
    }

    std::vector<std::string> reversed(args.rbegin(), args.rend());
    try {
        app.parse(reversed);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? exit_ok : exit_validation;
    }
    const Command command = parse_command(app.get_subcommands().front()->get_name());

    try {
        ConfigFile config = ConfigFile::load(config_path);
        for (const auto& o : overrides) {
            config.set(o);
        }
        std::uint64_t master_seed = 1;
        if (seed) {
            master_seed = *seed;
            config.text("run", "seed");
        } else {
            const std::int64_t s = config.integer("run", "seed", 1);
            if (s < 0) throw ValidationError(fmt::format("[run] seed must be >= 0, got {}", s));
            master_seed = static_cast<std::uint64_t>(s);
        }
        const fs::path dir(out_dir);
        switch (command) {
            case Command::solve: return run_solve(config, dir, master_seed, out);
            case Command::statics: return run_statics(config, dir, master_seed, out);
            case Command::simulate: return run_simulate(config, dir, master_seed, out);
            case Command::estimate: return run_estimate(config, dir, master_seed, out, err);
            case Command::roundtrip: return run_roundtrip(config, dir, master_seed, out, err);
        }
    } catch (const ValidationError& e) {
        err << "error: " << e.what() << '\n';
        return exit_validation;
    } catch (const NumericalError& e) {
        err << "numerical error: " << e.what() << '\n';
        return exit_numerical;
    } catch (const fs::filesystem_error& e) {
        err << "error: " << e.what() << '\n';
        return exit_validation;
    } catch (const std::exception& e) {
        err << "internal error: " << e.what() << '\n';
        return exit_internal;
    }
    return exit_internal;
}

}  // namespace shipfreq::cli
