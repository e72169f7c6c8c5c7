#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <sstream>
#include <tuple>

#include "shipfreq/errors.hpp"
#include "shipfreq/panel.hpp"
#include "shipfreq/panel_io.hpp"
#include "shipfreq/terms.hpp"

using namespace shipfreq;

namespace {

// Composite Simpson moments of a normal(mu, sigma) truncated to [lo, hi].
std::pair<double, double> simpson_moments(double mu, double sigma, double lo, double hi) {
    const int n = 20000;
    const double h = (hi - lo) / n;
    double m0 = 0.0, m1 = 0.0, m2 = 0.0;
    for (int k = 0; k <= n; ++k) {
        const double x = lo + k * h;
        const double w = (k == 0 || k == n) ? 1.0 : (k % 2 ? 4.0 : 2.0);
        const double d = std::exp(-0.5 * ((x - mu) / sigma) * ((x - mu) / sigma));
        m0 += w * d;
        m1 += w * d * x;
        m2 += w * d * x * x;
    }
    const double mean = m1 / m0;
    return {mean, std::sqrt(m2 / m0 - mean * mean)};
}

DgpConfig small_config() {
    DgpConfig c;
    c.firms = 4;
    c.products = 3;
    c.destinations = 6;
    c.years = 2;
    c.seed = 17;
    return c;
}

struct Stats {
    double mean = 0.0;
    double sd = 0.0;
};

template <class F>
Stats sample_stats(const std::vector<CountryProfile>& cs, F get) {
    Stats s;
    for (const auto& c : cs) s.mean += get(c);
    s.mean /= static_cast<double>(cs.size());
    for (const auto& c : cs) s.sd += (get(c) - s.mean) * (get(c) - s.mean);
    s.sd = std::sqrt(s.sd / static_cast<double>(cs.size() - 1));
    return s;
}

}  // namespace

TEST_CASE("truncated normal calibration reproduces target moments") {
    const CovariateCalibration cal;
    for (const MomentTarget& t : {cal.ln_pershipment_cost, cal.ln_distance, cal.ln_gdp,
                                   cal.ln_gdp_pc, cal.importer_rate}) {
        const TruncatedNormal tn = TruncatedNormal::calibrate(t);
        CHECK(std::abs(tn.mean() - t.mean) <= 1e-10 * t.sd);
        CHECK(std::abs(tn.sd() - t.sd) <= 1e-10 * t.sd);
        const auto [mean, sd] = simpson_moments(tn.mu, tn.sigma, t.lo, t.hi);
        CHECK(std::abs(mean - t.mean) <= 1e-8 * t.sd);
        CHECK(std::abs(sd - t.sd) <= 1e-8 * t.sd);
        CHECK(tn.quantile(0.0) == t.lo);
        CHECK(tn.quantile(1.0) == t.hi);
        double prev = t.lo;
        for (int k = 1; k < 100; ++k) {
            const double x = tn.quantile(k / 100.0);
            CHECK(x > prev);
            prev = x;
        }
    }
    // Upper truncation of GDP per capita forces the underlying mean up.
    CHECK(TruncatedNormal::calibrate(cal.ln_gdp_pc).mu > 10.8);
    CHECK_THROWS_AS(TruncatedNormal::calibrate({5.0, 1.0, 6.0, 9.0}), ValidationError);
}

TEST_CASE("zero-inflated uniform for common religion") {
    const ZeroInflatedUniform z = ZeroInflatedUniform::calibrate(CovariateCalibration{}.common_religion);
    CHECK(z.lower == doctest::Approx(0.4536591177452819).epsilon(1e-12));
    CHECK(z.p_zero == doctest::Approx(0.8629781519661314).epsilon(1e-12));
    const double w = 1.0 - z.p_zero;
    const double mean = w * (z.lower + z.hi) / 2.0;
    const double second = w * (z.lower * z.lower + z.lower * z.hi + z.hi * z.hi) / 3.0;
    CHECK(mean == doctest::Approx(0.09).epsilon(1e-12));
    CHECK(std::sqrt(second - mean * mean) == doctest::Approx(0.23).epsilon(1e-12));
    CHECK(z.quantile(0.5) == 0.0);
    CHECK(z.quantile(1.0) == doctest::Approx(0.86));
}

TEST_CASE("generate_countries: determinism and bounds") {
    DgpConfig c;
    c.destinations = 1;
    const auto a = generate_countries(c);
    const auto b = generate_countries(c);
    REQUIRE(a.size() == 1);
    std::ostringstream sa, sb;
    write_countries(a, sa);
    write_countries(b, sb);
    CHECK(sa.str() == sb.str());
    c.seed = 2;
    std::ostringstream sc;
    write_countries(generate_countries(c), sc);
    CHECK(sc.str() != sa.str());
}

TEST_CASE("generate_countries: moments at 10^4 draws") {
    DgpConfig c;
    c.destinations = 10000;
    const auto cs = generate_countries(c);
    const CovariateCalibration cal;
    const double n = static_cast<double>(cs.size());

    const Stats cost = sample_stats(cs, [](const CountryProfile& x) { return x.ln_pershipment_cost; });
    CHECK(std::abs(cost.mean - 7.08) <= 0.02);
    CHECK(std::all_of(cs.begin(), cs.end(), [](const CountryProfile& x) {
        return x.ln_pershipment_cost >= 5.90 && x.ln_pershipment_cost <= 9.89;
    }));
    CHECK(std::all_of(cs.begin(), cs.end(), [](const CountryProfile& x) {
        return x.importer_rate > 0.0 && x.importer_rate <= 60.0;
    }));

    const std::vector<std::pair<MomentTarget, double (*)(const CountryProfile&)>> continuous{
        {cal.ln_pershipment_cost, [](const CountryProfile& x) { return x.ln_pershipment_cost; }},
        {cal.ln_distance, [](const CountryProfile& x) { return x.ln_distance; }},
        {cal.ln_gdp, [](const CountryProfile& x) { return x.ln_gdp; }},
        {cal.ln_gdp_pc, [](const CountryProfile& x) { return x.ln_gdp_pc; }},
        {cal.importer_rate, [](const CountryProfile& x) { return x.importer_rate; }},
        {cal.common_religion, [](const CountryProfile& x) { return x.common_religion; }},
    };
    for (const auto& [target, get] : continuous) {
        const Stats s = sample_stats(cs, get);
        CHECK(std::abs(s.mean - target.mean) <= 3.0 * target.sd / std::sqrt(n));
        CHECK(std::abs(s.sd - target.sd) <= 0.05 * target.sd);
        CHECK(std::all_of(cs.begin(), cs.end(), [&](const CountryProfile& x) {
            return get(x) >= target.lo && get(x) <= target.hi;
        }));
    }
    const std::vector<std::pair<double, int (*)(const CountryProfile&)>> binary{
        {cal.p_island, [](const CountryProfile& x) { return x.island; }},
        {cal.p_landlocked, [](const CountryProfile& x) { return x.landlocked; }},
        {cal.p_colony, [](const CountryProfile& x) { return x.colony; }},
        {cal.p_common_legal, [](const CountryProfile& x) { return x.common_legal; }},
    };
    for (const auto& [p, get] : binary) {
        double mean = 0.0;
        for (const auto& x : cs) mean += get(x);
        mean /= n;
        CHECK(std::abs(mean - p) <= 3.0 * std::sqrt(p * (1.0 - p) / n));
    }
}

TEST_CASE("generate_countries: distance-GDP correlation knob") {
    DgpConfig c;
    c.destinations = 4000;
    auto corr = [](const std::vector<CountryProfile>& cs) {
        const Stats d = sample_stats(cs, [](const CountryProfile& x) { return x.ln_distance; });
        const Stats g = sample_stats(cs, [](const CountryProfile& x) { return x.ln_gdp; });
        double cov = 0.0;
        for (const auto& x : cs) cov += (x.ln_distance - d.mean) * (x.ln_gdp - g.mean);
        return cov / static_cast<double>(cs.size() - 1) / (d.sd * g.sd);
    };
    CHECK(std::abs(corr(generate_countries(c))) < 0.06);
    c.calibration.distance_gdp_correlation = 0.6;
    CHECK(corr(generate_countries(c)) > 0.45);
    c.calibration.distance_gdp_correlation = 1.0;
    CHECK_THROWS_AS(generate_countries(c), ValidationError);
}

TEST_CASE("generate_panel: layout") {
    const DgpConfig c = small_config();
    const auto countries = generate_countries(c);
    const Panel panel = generate_panel(c, countries);
    CHECK(panel.size() == 4u * 3u * 6u * 2u);
    CHECK(std::is_sorted(panel.begin(), panel.end(), [](const auto& a, const auto& b) {
        return std::tie(a.firm, a.product, a.mode, a.destination, a.year) <
               std::tie(b.firm, b.product, b.mode, b.destination, b.year);
    }));
    std::set<std::tuple<std::string, std::string, TransportMode, std::string, int>> keys;
    std::map<std::tuple<std::string, std::string, std::string>, TransportMode> route_mode;
    for (const auto& o : panel) {
        CHECK(keys.emplace(o.firm, o.product, o.mode, o.destination, o.year).second);
        const auto [it, fresh] = route_mode.emplace(std::tuple{o.firm, o.product, o.destination}, o.mode);
        CHECK(it->second == o.mode);
        CHECK(o.n_shipments >= 0);
        CHECK(o.year >= c.first_year);
        CHECK(o.year < c.first_year + c.years);
        CHECK(o.product.size() == 8);
        CHECK(o.exporter_rate >= 11.30);
        CHECK(o.exporter_rate <= 13.77);
        CHECK(o.ln_pershipment_value.has_value() == (o.n_shipments > 0));
    }
}

TEST_CASE("generate_panel: Poisson mean under a constant-only plant") {
    DgpConfig c;
    c.firms = 40;
    c.products = 5;
    c.destinations = 25;
    c.years = 2;
    c.betas = {{"_cons", std::log(5.0)}};
    c.fe_variances.clear();
    const Panel panel = generate_panel(c, generate_countries(c));
    double mean = 0.0;
    for (const auto& o : panel) mean += static_cast<double>(o.n_shipments);
    const double n = static_cast<double>(panel.size());
    mean /= n;
    CHECK(std::abs(mean - 5.0) <= 3.0 * std::sqrt(5.0 / n));
}

TEST_CASE("generate_panel: mode shares") {
    DgpConfig c;
    c.firms = 100;
    c.products = 10;
    c.destinations = 20;
    c.years = 1;
    c.betas = {{"_cons", 0.0}};
    const Panel panel = generate_panel(c, generate_countries(c));
    double air = 0.0, ocean = 0.0;
    for (const auto& o : panel) {
        air += o.mode == TransportMode::air;
        ocean += o.mode == TransportMode::ocean;
    }
    const double n = static_cast<double>(panel.size());
    CHECK(std::abs(air / n - c.share_air) <= 3.0 * std::sqrt(c.share_air * (1 - c.share_air) / n));
    CHECK(std::abs(ocean / n - c.share_ocean) <= 3.0 * std::sqrt(c.share_ocean * (1 - c.share_ocean) / n));
}

TEST_CASE("generate_panel: determinism") {
    const DgpConfig c = small_config();
    std::ostringstream a, b;
    write_panel(generate_panel(c, generate_countries(c)), a);
    write_panel(generate_panel(c, generate_countries(c)), b);
    CHECK(a.str() == b.str());
}

TEST_CASE("generate_panel: structural counts") {
    DgpConfig c = small_config();
    c.mode = DgpMode::structural;
    const Panel panel = generate_panel(c, generate_countries(c));
    for (const auto& o : panel) {
        const ModelSolution s = solve(structural_params(c, o));
        CHECK(o.n_shipments == std::llround(c.q / s.x_star));
        if (o.n_shipments > 0) {
            CHECK(*o.ln_pershipment_value ==
                  doctest::Approx(std::log(c.q * c.c / static_cast<double>(o.n_shipments))));
        }
    }
    // A 10% higher per-shipment cost lowers that cell's frequency.
    PanelObservation o = panel.front();
    const double before = solve(structural_params(c, o)).n;
    o.ln_pershipment_cost += std::log(1.1);
    CHECK(solve(structural_params(c, o)).n < before);

    c.poisson_jitter = true;
    const Panel jittered = generate_panel(c, generate_countries(c));
    CHECK(jittered.size() == panel.size());

    auto countries = generate_countries(c);
    countries[2].importer_rate = 0.0;
    CHECK_THROWS_WITH_AS(generate_panel(c, countries), doctest::Contains("cell (firm="), ValidationError);
}

TEST_CASE("generate_panel: validation") {
    DgpConfig c = small_config();
    c.firms = 0;
    CHECK_THROWS_AS(generate_countries(c), ValidationError);
    c = small_config();
    c.fe_variances["firm"] = -1.0;
    CHECK_THROWS_AS(generate_panel(c, generate_countries(small_config())), ValidationError);
    c = small_config();
    c.betas["log(n_shipments)"] = 1.0;
    CHECK_THROWS_AS(c.validate(), ValidationError);
    c = small_config();
    CHECK_THROWS_AS(generate_panel(c, {}), ValidationError);
}

TEST_CASE("panel CSV round trip") {
    const DgpConfig c = small_config();
    const Panel panel = generate_panel(c, generate_countries(c));
    std::stringstream buf;
    write_panel(panel, buf);
    const std::string text = buf.str();
    const Panel back = read_panel(buf);
    REQUIRE(back.size() == panel.size());
    for (std::size_t i = 0; i < panel.size(); ++i) {
        CHECK(back[i].firm == panel[i].firm);
        CHECK(back[i].product == panel[i].product);
        CHECK(back[i].mode == panel[i].mode);
        CHECK(back[i].n_shipments == panel[i].n_shipments);
        CHECK(back[i].ln_gdp == panel[i].ln_gdp);
        CHECK(back[i].importer_rate == panel[i].importer_rate);
        CHECK(back[i].common_religion == panel[i].common_religion);
        CHECK(back[i].ln_export_value == panel[i].ln_export_value);
    }
    std::ostringstream again;
    write_panel(back, again);
    CHECK(again.str() == text);

    std::stringstream empty;
    write_panel(Panel{}, empty);
    const std::string header_only = empty.str();
    CHECK(std::count(header_only.begin(), header_only.end(), '\n') == 1);
    CHECK(read_panel(empty).empty());
}

TEST_CASE("panel CSV errors") {
    const std::string header =
        "firm,product,mode,destination,year,n_shipments,ln_pershipment_cost,ln_distance,ln_gdp,"
        "ln_gdp_pc,island,landlocked,common_religion,common_legal,colony,importer_rate,exporter_rate\n";
    const std::string good = "F1,61090001,air,D1,2005,3,7,8.8,27,10,0,0,0.1,1,0,5,12\n";

    std::istringstream ok(header + good);
    const Panel p = read_panel(ok);
    REQUIRE(p.size() == 1);
    CHECK(!p[0].ln_pershipment_value.has_value());

    std::istringstream negative(header + good + "F1,61090001,air,D2,2005,-1,7,8.8,27,10,0,0,0.1,1,0,5,12\n");
    CHECK_THROWS_WITH_AS(read_panel(negative), doctest::Contains("line 3"), ValidationError);

    std::istringstream dup(header + good + good);
    CHECK_THROWS_WITH_AS(read_panel(dup), doctest::Contains("duplicate key (firm=F1"), ValidationError);

    std::istringstream bad_number(header + "F1,61090001,air,D1,2005,3,seven,8.8,27,10,0,0,0.1,1,0,5,12\n");
    CHECK_THROWS_WITH_AS(read_panel(bad_number), doctest::Contains("line 2"), ValidationError);

    std::istringstream short_row(header + "F1,61090001,air\n");
    CHECK_THROWS_WITH_AS(read_panel(short_row), doctest::Contains("line 2"), ValidationError);

    std::istringstream missing("firm,product\nF1,1\n");
    CHECK_THROWS_WITH_AS(read_panel(missing), doctest::Contains("missing column 'mode'"), ValidationError);

    std::istringstream bad_mode(header + "F1,61090001,rail,D1,2005,3,7,8.8,27,10,0,0,0.1,1,0,5,12\n");
    CHECK_THROWS_WITH_AS(read_panel(bad_mode), doctest::Contains("line 2"), ValidationError);

    CHECK_THROWS_AS(read_panel(std::filesystem::path("/nonexistent/panel.csv")), ValidationError);
}

TEST_CASE("terms: splines, interactions, logs") {
    PanelObservation o;
    o.ln_distance = std::log(2000.0);
    CHECK(spline1(o.ln_distance) == 1.0);
    CHECK(spline2(o.ln_distance) == 0.0);
    o.ln_distance = std::log(5000.0);
    CHECK(spline1(o.ln_distance) == 0.0);
    CHECK(spline2(o.ln_distance) == 1.0);
    o.ln_distance = std::log(12000.0);
    CHECK(spline1(o.ln_distance) == 0.0);
    CHECK(spline2(o.ln_distance) == 0.0);
    CHECK(spline1(std::log(3970.0)) == 1.0);
    CHECK(spline2(std::log(9283.0)) == 1.0);

    o.exporter_rate = 12.69;
    o.importer_rate = 5.15;
    CHECK(evaluate(parse_term("exporter_rate * importer_rate"), o) == doctest::Approx(65.3535).epsilon(1e-15));
    CHECK(parse_term(" spline2 * ln_distance ").name == "spline2*ln_distance");
    o.ln_distance = std::log(5000.0);
    CHECK(evaluate(parse_term("spline2*ln_distance"), o) == doctest::Approx(std::log(5000.0)));
    CHECK(evaluate(parse_term("_cons"), o) == 1.0);

    o.n_shipments = 0;
    CHECK_THROWS_WITH_AS(evaluate(parse_term("log(n_shipments)"), o), doctest::Contains("log(n_shipments)"),
                         ValidationError);
    o.n_shipments = 4;
    CHECK(evaluate(parse_term("log(n_shipments)"), o) == doctest::Approx(std::log(4.0)));
    CHECK_THROWS_WITH_AS(evaluate(parse_term("ln_export_value"), o), doctest::Contains("ln_export_value"),
                         ValidationError);
    CHECK_THROWS_AS(parse_term("gdp"), ValidationError);
    CHECK_THROWS_AS(parse_term("ln_gdp**ln_gdp"), ValidationError);
}

TEST_CASE("terms: grouping keys") {
    PanelObservation o;
    o.firm = "F0001";
    o.product = "61091234";
    o.mode = TransportMode::air;
    o.destination = "D0003";
    o.year = 2006;
    CHECK(group_label(parse_group_key("product*mode*year"), o) == "61091234|air|2006");
    CHECK(group_label(parse_group_key("hs4"), o) == "6109");
    CHECK(group_label(parse_group_key("hs2 * destination"), o) == "61|D0003");
    CHECK(parse_group_key("hs8").parts == std::vector<std::string>{"product"});
    CHECK_THROWS_AS(parse_group_key("country"), ValidationError);
}
