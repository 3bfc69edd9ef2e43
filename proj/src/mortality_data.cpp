#include "mortfit/mortality_data.hpp"

#include "mortfit/errors.hpp"
#include "mortfit/format.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <istream>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>

namespace mortfit {

namespace {

std::vector<std::string> split_ws(const std::string &line) {
    std::istringstream ss(line);
    std::vector<std::string> tokens;
    for (std::string tok; ss >> tok;) {
        tokens.push_back(std::move(tok));
    }
    return tokens;
}

std::vector<std::string> split_csv(const std::string &line) {
    std::vector<std::string> fields;
    std::string field;
    std::istringstream ss(line);
    while (std::getline(ss, field, ',')) {
        fields.push_back(field);
    }
    if (!line.empty() && line.back() == ',') {
        fields.emplace_back();
    }
    return fields;
}

std::string lower(std::string_view s) {
    std::string out(s);
    std::transform(out.begin(), out.end(), out.begin(),
                   [](unsigned char ch) { return static_cast<char>(std::tolower(ch)); });
    return out;
}

std::string trim(const std::string &s) {
    const auto first = s.find_first_not_of(" \t\r\n");
    if (first == std::string::npos) {
        return {};
    }
    const auto last = s.find_last_not_of(" \t\r\n");
    return s.substr(first, last - first + 1);
}

std::optional<int> to_int(std::string_view s) {
    int value = 0;
    const auto *end = s.data() + s.size();
    auto [ptr, ec] = std::from_chars(s.data(), end, value);
    if (ec != std::errc{} || ptr != end) {
        return std::nullopt;
    }
    return value;
}

std::optional<double> to_double(std::string_view s) {
    if (s == "nan") {
        return std::nan("");
    }
    double value = 0.0;
    const auto *end = s.data() + s.size();
    auto [ptr, ec] = std::from_chars(s.data(), end, value);
    if (ec != std::errc{} || ptr != end) {
        return std::nullopt;
    }
    return value;
}

bool consecutive(const std::vector<int> &v) {
    for (std::size_t i = 1; i < v.size(); ++i) {
        if (v[i] != v[i - 1] + 1) {
            return false;
        }
    }
    return true;
}

std::string cell_name(int age, int year) {
    return "cell (age " + std::to_string(age) + ", year " + std::to_string(year) + ")";
}

} // namespace

std::vector<int> IntRange::values() const {
    std::vector<int> out;
    for (int v = lo; v <= hi; ++v) {
        out.push_back(v);
    }
    return out;
}

IntRange parse_range(std::string_view text) {
    const auto colon = text.find(':');
    if (colon == std::string_view::npos) {
        auto v = to_int(text);
        if (!v) {
            throw std::invalid_argument("invalid range '" + std::string(text) + "'");
        }
        return {*v, *v};
    }
    auto lo = to_int(text.substr(0, colon));
    auto hi = to_int(text.substr(colon + 1));
    if (!lo || !hi || *hi < *lo) {
        throw std::invalid_argument("invalid range '" + std::string(text) + "', expected lo:hi");
    }
    return {*lo, *hi};
}

HmdColumn parse_hmd_column(std::string_view name) {
    const auto n = lower(name);
    if (n == "female") {
        return HmdColumn::Female;
    }
    if (n == "male") {
        return HmdColumn::Male;
    }
    if (n == "total") {
        return HmdColumn::Total;
    }
    throw std::invalid_argument("unknown value column '" + std::string(name) +
                                "', expected Female, Male or Total");
}

void HmdTable::insert(int age, int year, std::optional<double> value) {
    auto [it, inserted] = cells_.emplace(Key{age, year}, value);
    if (!inserted) {
        throw DataError("duplicate " + cell_name(age, year));
    }
}

const std::optional<double> *HmdTable::find(int age, int year) const {
    auto it = cells_.find(Key{age, year});
    return it == cells_.end() ? nullptr : &it->second;
}

HmdTable parse_hmd_table(std::istream &in, HmdColumn column) {
    const std::size_t value_index = 2 + static_cast<std::size_t>(column);
    HmdTable table;
    bool in_body = false;
    std::size_t line_no = 0;
    for (std::string line; std::getline(in, line);) {
        ++line_no;
        const auto tokens = split_ws(line);
        if (tokens.empty()) {
            continue;
        }
        if (!in_body) {
            if (tokens.size() == 5 && lower(tokens[0]) == "year" && lower(tokens[1]) == "age" &&
                lower(tokens[2]) == "female" && lower(tokens[3]) == "male" &&
                lower(tokens[4]) == "total") {
                in_body = true;
            }
            continue;
        }
        if (tokens.size() != 5) {
            throw ParseError(line_no, "expected 5 columns, found " + std::to_string(tokens.size()));
        }
        auto year = to_int(tokens[0]);
        if (!year) {
            throw ParseError(line_no, "unparseable year '" + tokens[0] + "'");
        }
        std::string_view age_text = tokens[1];
        if (!age_text.empty() && age_text.back() == '+') {
            age_text.remove_suffix(1);
        }
        auto age = to_int(age_text);
        if (!age) {
            throw ParseError(line_no, "unparseable age '" + tokens[1] + "'");
        }
        // Every value column must parse, not just the selected one.
        std::optional<double> selected;
        for (std::size_t c = 2; c < 5; ++c) {
            std::optional<double> v;
            if (tokens[c] != ".") {
                v = to_double(tokens[c]);
                if (!v) {
                    throw ParseError(line_no, "unparseable number '" + tokens[c] + "'");
                }
            }
            if (c == value_index) {
                selected = v;
            }
        }
        try {
            table.insert(*age, *year, selected);
        } catch (const DataError &e) {
            throw DataError(std::string(e.what()) + " at line " + std::to_string(line_no));
        }
    }
    if (!in_body) {
        throw ParseError(line_no, "no 'Year Age Female Male Total' header line found");
    }
    return table;
}

MortalitySurface::MortalitySurface(std::vector<int> ages, std::vector<int> years,
                                   Eigen::MatrixXd deaths, Eigen::MatrixXd exposures)
    : ages_{std::move(ages)}, years_{std::move(years)}, deaths_{std::move(deaths)},
      exposures_{std::move(exposures)} {
    validate_shape();
    if (deaths_.rows() != num_ages() || deaths_.cols() != num_years() ||
        exposures_.rows() != num_ages() || exposures_.cols() != num_years()) {
        throw std::invalid_argument("deaths/exposures dimensions do not match ages x years");
    }
    log_rates_.resize(num_ages(), num_years());
    for (Eigen::Index i = 0; i < num_ages(); ++i) {
        for (Eigen::Index j = 0; j < num_years(); ++j) {
            const double d = deaths_(i, j);
            const double e = exposures_(i, j);
            const auto where = cell_name(ages_[i], years_[j]);
            if (!(e > 0.0) || !std::isfinite(e)) {
                throw DataError("non-positive exposure at " + where);
            }
            if (!(d >= 0.0) || !std::isfinite(d)) {
                throw DataError("negative or non-finite deaths at " + where);
            }
            if (d == 0.0) {
                throw DataError("zero deaths at " + where + " (log rate undefined)");
            }
            log_rates_(i, j) = std::log(d / e);
        }
    }
}

MortalitySurface MortalitySurface::from_rates(std::vector<int> ages, std::vector<int> years,
                                              Eigen::MatrixXd rates) {
    const Eigen::Index p = rates.rows();
    const Eigen::Index n = rates.cols();
    MortalitySurface s(std::move(ages), std::move(years), std::move(rates),
                       Eigen::MatrixXd::Ones(p, n));
    s.rates_only_ = true;
    return s;
}

MortalitySurface MortalitySurface::from_columns(std::vector<int> ages, std::vector<int> years,
                                                Eigen::MatrixXd deaths, Eigen::MatrixXd exposures,
                                                Eigen::MatrixXd log_rates, bool rates_only) {
    // Run the full validation, then keep the stored log rates verbatim.
    MortalitySurface s(std::move(ages), std::move(years), std::move(deaths), std::move(exposures));
    if (log_rates.rows() != s.num_ages() || log_rates.cols() != s.num_years()) {
        throw std::invalid_argument("log_rates dimensions do not match ages x years");
    }
    for (Eigen::Index i = 0; i < s.num_ages(); ++i) {
        for (Eigen::Index j = 0; j < s.num_years(); ++j) {
            if (std::abs(log_rates(i, j) - s.log_rates_(i, j)) > 1e-9 * (1.0 + std::abs(log_rates(i, j)))) {
                throw DataError("log_rate inconsistent with deaths/exposure at " +
                                cell_name(s.ages_[i], s.years_[j]));
            }
        }
    }
    s.log_rates_ = std::move(log_rates);
    s.rates_only_ = rates_only;
    return s;
}

void MortalitySurface::validate_shape() const {
    if (ages_.empty() || years_.empty()) {
        throw std::invalid_argument("surface needs at least one age and one year");
    }
    if (!consecutive(ages_)) {
        throw std::invalid_argument("ages must be consecutive and strictly increasing");
    }
    if (!consecutive(years_)) {
        throw std::invalid_argument("years must be consecutive and strictly increasing");
    }
}

namespace {

Eigen::MatrixXd extract_window(const HmdTable &table, const char *label, IntRange ages,
                               IntRange years) {
    if (ages.hi < ages.lo || years.hi < years.lo) {
        throw std::invalid_argument("empty age or year window");
    }
    Eigen::MatrixXd out(ages.size(), years.size());
    for (int i = 0; i < ages.size(); ++i) {
        for (int j = 0; j < years.size(); ++j) {
            const int age = ages.lo + i;
            const int year = years.lo + j;
            const auto *cell = table.find(age, year);
            if (cell == nullptr || !cell->has_value()) {
                throw DataError(std::string("missing ") + label + " " + cell_name(age, year));
            }
            out(i, j) = **cell;
        }
    }
    return out;
}

} // namespace

MortalitySurface build_surface(const HmdTable &deaths, const HmdTable &exposures, IntRange ages,
                               IntRange years) {
    auto d = extract_window(deaths, "deaths", ages, years);
    auto e = extract_window(exposures, "exposures", ages, years);
    return MortalitySurface(ages.values(), years.values(), std::move(d), std::move(e));
}

MortalitySurface build_rate_surface(const HmdTable &rates, IntRange ages, IntRange years) {
    auto m = extract_window(rates, "rates", ages, years);
    return MortalitySurface::from_rates(ages.values(), years.values(), std::move(m));
}

void write_surface_csv(std::ostream &out, const MortalitySurface &surface) {
    if (surface.rates_only()) {
        out << "# rates-only\n";
    }
    out << "age,year,deaths,exposure,log_rate\n";
    for (Eigen::Index i = 0; i < surface.num_ages(); ++i) {
        for (Eigen::Index j = 0; j < surface.num_years(); ++j) {
            out << surface.ages()[i] << ',' << surface.years()[j] << ','
                << fmt17(surface.deaths()(i, j)) << ',' << fmt17(surface.exposures()(i, j)) << ','
                << fmt17(surface.log_rates()(i, j)) << '\n';
        }
    }
}

MortalitySurface read_surface_csv(std::istream &in) {
    struct Row {
        double deaths, exposure, log_rate;
    };
    std::map<std::pair<int, int>, Row> rows;
    bool rates_only = false;
    bool header_seen = false;
    std::size_t line_no = 0;
    for (std::string raw; std::getline(in, raw);) {
        ++line_no;
        const auto line = trim(raw);
        if (line.empty()) {
            continue;
        }
        if (!header_seen) {
            if (line == "# rates-only") {
                rates_only = true;
                continue;
            }
            if (line != "age,year,deaths,exposure,log_rate") {
                throw ParseError(line_no, "expected header 'age,year,deaths,exposure,log_rate'");
            }
            header_seen = true;
            continue;
        }
        const auto f = split_csv(line);
        if (f.size() != 5) {
            throw ParseError(line_no, "expected 5 fields, found " + std::to_string(f.size()));
        }
        auto age = to_int(f[0]);
        auto year = to_int(f[1]);
        auto d = to_double(f[2]);
        auto e = to_double(f[3]);
        auto y = to_double(f[4]);
        if (!age || !year || !d || !e || !y) {
            throw ParseError(line_no, "unparseable field");
        }
        if (!rows.emplace(std::pair{*age, *year}, Row{*d, *e, *y}).second) {
            throw DataError("duplicate " + cell_name(*age, *year));
        }
    }
    if (!header_seen) {
        throw ParseError(line_no, "missing CSV header");
    }
    if (rows.empty()) {
        throw DataError("surface CSV has no rows");
    }
    int age_lo = rows.begin()->first.first, age_hi = age_lo;
    int year_lo = rows.begin()->first.second, year_hi = year_lo;
    for (const auto &[key, row] : rows) {
        age_lo = std::min(age_lo, key.first);
        age_hi = std::max(age_hi, key.first);
        year_lo = std::min(year_lo, key.second);
        year_hi = std::max(year_hi, key.second);
    }
    const IntRange ages{age_lo, age_hi};
    const IntRange years{year_lo, year_hi};
    if (rows.size() != static_cast<std::size_t>(ages.size()) * static_cast<std::size_t>(years.size())) {
        throw DataError("surface CSV is not a complete age x year grid");
    }
    Eigen::MatrixXd d(ages.size(), years.size());
    Eigen::MatrixXd e(ages.size(), years.size());
    Eigen::MatrixXd y(ages.size(), years.size());
    for (const auto &[key, row] : rows) {
        const int i = key.first - age_lo;
        const int j = key.second - year_lo;
        d(i, j) = row.deaths;
        e(i, j) = row.exposure;
        y(i, j) = row.log_rate;
    }
    return MortalitySurface::from_columns(ages.values(), years.values(), std::move(d), std::move(e),
                                          std::move(y), rates_only);
}

} // namespace mortfit
