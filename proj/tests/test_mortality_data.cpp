#include "mortfit/errors.hpp"
#include "mortfit/mortality_data.hpp"
#include "mortfit/synthetic.hpp"

#include <doctest.h>

#include <cmath>
#include <sstream>
#include <string>

using namespace mortfit;

namespace {

const char *kHmdHeader =
    "Country X, Deaths (period 1x1)  Last modified: 01 Jan 2024; Methods Protocol: v6 (2017)\n"
    "\n"
    "  Year      Age        Female          Male         Total\n";

std::string hmd_rows(double scale) {
    std::ostringstream out;
    out << kHmdHeader;
    for (int year = 1950; year <= 1952; ++year) {
        for (int age = 60; age <= 62; ++age) {
            const double f = scale * (age - 50) * (1.0 + 0.01 * (year - 1950));
            out << "  " << year << "  " << age << "  " << f << "  " << 2 * f << "  " << 3 * f
                << "\n";
        }
        out << "  " << year << "  110+  .  .  .\n";
    }
    return out.str();
}

HmdTable parse(const std::string &text, HmdColumn column) {
    std::istringstream in(text);
    return parse_hmd_table(in, column);
}

} // namespace

TEST_CASE("parse_range accepts lo:hi and single values") {
    CHECK(parse_range("60:89").lo == 60);
    CHECK(parse_range("60:89").hi == 89);
    CHECK(parse_range("60:89").size() == 30);
    CHECK(parse_range("1950").size() == 1);
    CHECK_THROWS(parse_range("89:60"));
    CHECK_THROWS(parse_range("a:b"));
    CHECK_THROWS(parse_range("60:"));
}

TEST_CASE("HMD row reads the requested column") {
    const std::string text = std::string(kHmdHeader) + "  1950  60  0.02  0.03  0.025\n";
    const auto male = parse(text, HmdColumn::Male);
    REQUIRE(male.find(60, 1950) != nullptr);
    REQUIRE(male.find(60, 1950)->has_value());
    CHECK(**male.find(60, 1950) == 0.03);
    CHECK(**parse(text, HmdColumn::Female).find(60, 1950) == 0.02);
    CHECK(**parse(text, HmdColumn::Total).find(60, 1950) == 0.025);
    CHECK(male.find(61, 1950) == nullptr);
}

TEST_CASE("open-ended age label and missing sentinel") {
    const std::string text = std::string(kHmdHeader) + "  1950  110+  .  .  .\n";
    const auto table = parse(text, HmdColumn::Male);
    REQUIRE(table.find(110, 1950) != nullptr);
    CHECK_FALSE(table.find(110, 1950)->has_value());
}

TEST_CASE("duplicate key is a data error") {
    const std::string text = std::string(kHmdHeader) + "  1950  60  1  2  3\n  1950  60  1  2  3\n";
    CHECK_THROWS_AS(parse(text, HmdColumn::Male), DataError);
}

TEST_CASE("malformed rows report their line number") {
    const std::string short_row = std::string(kHmdHeader) + "  1950  60  1  2  3\n  1951  60  1  2\n";
    try {
        parse(short_row, HmdColumn::Male);
        FAIL("expected ParseError");
    } catch (const ParseError &e) {
        CHECK(e.line() == 5);
    }
    const std::string bad_number = std::string(kHmdHeader) + "  1950  60  1  x2  3\n";
    try {
        parse(bad_number, HmdColumn::Male);
        FAIL("expected ParseError");
    } catch (const ParseError &e) {
        CHECK(e.line() == 4);
    }
    CHECK_THROWS_AS(parse("no header here\n1950 60 1 2 3\n", HmdColumn::Male), ParseError);
}

TEST_CASE("build_surface restricts to the window and computes log rates") {
    const auto deaths = parse(hmd_rows(100.0), HmdColumn::Male);
    const auto exposures = parse(hmd_rows(10000.0), HmdColumn::Male);
    const auto surface = build_surface(deaths, exposures, {60, 62}, {1950, 1952});
    CHECK(surface.num_ages() == 3);
    CHECK(surface.num_years() == 3);
    for (Eigen::Index i = 0; i < 3; ++i) {
        for (Eigen::Index j = 0; j < 3; ++j) {
            CHECK(surface.log_rates()(i, j) == doctest::Approx(std::log(0.01)).epsilon(1e-14));
        }
    }

    const auto single = build_surface(deaths, exposures, {60, 60}, {1950, 1950});
    CHECK(single.num_ages() == 1);
    CHECK(single.num_years() == 1);

    CHECK_THROWS_AS(build_surface(deaths, exposures, {60, 120}, {1950, 1952}), DataError);
    CHECK_THROWS_AS(build_surface(deaths, exposures, {60, 110}, {1950, 1952}), DataError);
    CHECK_THROWS_AS(build_surface(deaths, exposures, {60, 62}, {1949, 1952}), DataError);
}

TEST_CASE("zero deaths and non-positive exposure are rejected with the cell named") {
    Eigen::MatrixXd d = Eigen::MatrixXd::Constant(2, 2, 5.0);
    Eigen::MatrixXd e = Eigen::MatrixXd::Constant(2, 2, 100.0);
    d(1, 0) = 0.0;
    try {
        MortalitySurface({60, 61}, {2000, 2001}, d, e);
        FAIL("expected DataError");
    } catch (const DataError &err) {
        const std::string what = err.what();
        CHECK(what.find("61") != std::string::npos);
        CHECK(what.find("2000") != std::string::npos);
    }
    d(1, 0) = 5.0;
    e(0, 1) = 0.0;
    CHECK_THROWS_AS(MortalitySurface({60, 61}, {2000, 2001}, d, e), DataError);
    e(0, 1) = 100.0;
    CHECK_THROWS_AS(MortalitySurface({60, 62}, {2000, 2001}, d, e), std::invalid_argument);
    CHECK_THROWS_AS(MortalitySurface({60, 61, 62}, {2000, 2001}, d, e), std::invalid_argument);
}

TEST_CASE("rate-only surfaces are flagged") {
    Eigen::MatrixXd rates(2, 2);
    rates << 0.01, 0.02, 0.03, 0.04;
    const auto surface = MortalitySurface::from_rates({60, 61}, {2000, 2001}, rates);
    CHECK(surface.rates_only());
    CHECK(surface.exposures().isOnes());
    CHECK(surface.log_rates()(1, 1) == std::log(0.04));
}

TEST_CASE("surface CSV round trip is value-identical") {
    const std::vector<int> ages = IntRange{60, 69}.values();
    const std::vector<int> years = IntRange{1990, 2004}.values();
    for (auto mode : {NoiseMode::Gaussian, NoiseMode::Poisson}) {
        const auto surface = synthesize_surface(default_generator(ModelKind::RH, ages, years), 5e4,
                                                0.03, 11, mode);
        std::stringstream buf;
        write_surface_csv(buf, surface);
        const auto back = read_surface_csv(buf);
        CHECK(back.ages() == surface.ages());
        CHECK(back.years() == surface.years());
        CHECK(back.deaths() == surface.deaths());
        CHECK(back.exposures() == surface.exposures());
        CHECK(back.log_rates() == surface.log_rates());
        CHECK_FALSE(back.rates_only());
    }

    Eigen::MatrixXd rates(2, 3);
    rates << 0.011, 0.012, 0.013, 0.021, 0.022, 0.023;
    const auto rate_only = MortalitySurface::from_rates({70, 71}, {2000, 2001, 2002}, rates);
    std::stringstream buf;
    write_surface_csv(buf, rate_only);
    const auto back = read_surface_csv(buf);
    CHECK(back.rates_only());
    CHECK(back.log_rates() == rate_only.log_rates());
}

TEST_CASE("malformed surface CSV") {
    std::istringstream bad_header("age,year,deaths\n60,2000,1\n");
    CHECK_THROWS_AS(read_surface_csv(bad_header), ParseError);
    std::istringstream bad_field("age,year,deaths,exposure,log_rate\n60,2000,1,x,0\n");
    CHECK_THROWS_AS(read_surface_csv(bad_field), ParseError);
    std::istringstream gap("age,year,deaths,exposure,log_rate\n60,2000,1,10,-2.3025850929940459\n"
                           "62,2000,1,10,-2.3025850929940459\n");
    CHECK_THROWS(read_surface_csv(gap));
}

TEST_CASE("synthetic surfaces") {
    const std::vector<int> ages = IntRange{60, 89}.values();
    const std::vector<int> years = IntRange{1950, 2019}.values();
    const auto params = default_generator(ModelKind::RH, ages, years);
    const Eigen::MatrixXd fitted = fitted_log_rates(params);

    SUBCASE("zero noise reproduces fitted log rates exactly") {
        const auto s = synthesize_surface(params, 1e5, 0.0, 3);
        CHECK(s.log_rates() == fitted);
    }
    SUBCASE("same seed, same surface") {
        const auto s1 = synthesize_surface(params, 1e5, 0.01, 42);
        const auto s2 = synthesize_surface(params, 1e5, 0.01, 42);
        CHECK(s1.log_rates() == s2.log_rates());
        CHECK(s1.deaths() == s2.deaths());
        const auto s3 = synthesize_surface(params, 1e5, 0.01, 43);
        CHECK(s1.log_rates() != s3.log_rates());
    }
    SUBCASE("noise level matches the requested sd") {
        const auto s = synthesize_surface(params, 1e5, 0.01, 7);
        const Eigen::ArrayXXd diff = (s.log_rates() - fitted).array();
        const double mean = diff.mean();
        const double sd = std::sqrt((diff - mean).square().sum() / (diff.size() - 1));
        CHECK(std::abs(sd - 0.01) < 0.001);
    }
    SUBCASE("deaths equal exposure times rate") {
        const auto s = synthesize_surface(params, 1e5, 0.01, 7);
        const Eigen::ArrayXXd rebuilt = s.exposures().array() * s.log_rates().array().exp();
        CHECK(((rebuilt - s.deaths().array()).abs() / s.deaths().array()).maxCoeff() < 1e-12);
    }
    SUBCASE("Poisson mode produces integer deaths") {
        const auto s = synthesize_surface(params, 1e5, 0.0, 9, NoiseMode::Poisson);
        CHECK((s.deaths().array() == s.deaths().array().round()).all());
        CHECK((s.deaths().array() > 0).all());
    }
    SUBCASE("negative noise is an argument error") {
        CHECK_THROWS_AS(synthesize_surface(params, 1e5, -0.1, 1), std::invalid_argument);
    }
}
