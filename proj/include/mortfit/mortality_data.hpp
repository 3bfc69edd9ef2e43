#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <iosfwd>
#include <map>
#include <optional>
#include <string_view>
#include <utility>
#include <vector>

namespace mortfit {

/// Inclusive integer interval, used for age and year windows.
struct IntRange {
    int lo = 0;
    int hi = 0;

    int size() const noexcept { return hi - lo + 1; }
    std::vector<int> values() const;
};

/// Parse "lo:hi" (e.g. "60:89"). A single integer "lo" means lo:lo.
IntRange parse_range(std::string_view text);

enum class HmdColumn { Female, Male, Total };

HmdColumn parse_hmd_column(std::string_view name);

/// One value column of an HMD 1x1 table, keyed by (age, year). A present key
/// with an empty optional is a cell the source flagged as missing (".").
class HmdTable {
public:
    using Key = std::pair<int, int>; // (age, year)

    /// Throws DataError if (age, year) is already present.
    void insert(int age, int year, std::optional<double> value);

    /// nullptr when the key is absent; otherwise the cell (possibly flagged missing).
    const std::optional<double> *find(int age, int year) const;

    std::size_t size() const noexcept { return cells_.size(); }

private:
    std::map<Key, std::optional<double>> cells_;
};

/// Read a whitespace-delimited HMD table (header lines, then a
/// "Year Age Female Male Total" label line, then data rows). Age labels of the
/// form "110+" map to 110.
HmdTable parse_hmd_table(std::istream &in, HmdColumn column);

/// Rectangular age x year grid of deaths, exposures and log central death rates.
/// Immutable after construction.
class MortalitySurface {
public:
    /// Genuine deaths/exposures surface. Rejects zero deaths, non-positive
    /// exposures and non-consecutive ages/years.
    MortalitySurface(std::vector<int> ages, std::vector<int> years, Eigen::MatrixXd deaths,
                     Eigen::MatrixXd exposures);

    /// Rate-only surface: exposures are 1 and deaths equal the rate. Poisson
    /// likelihood is unavailable on such a surface.
    static MortalitySurface from_rates(std::vector<int> ages, std::vector<int> years,
                                       Eigen::MatrixXd rates);

    /// Reassemble a surface from stored columns, keeping log_rates bit-exact.
    static MortalitySurface from_columns(std::vector<int> ages, std::vector<int> years,
                                         Eigen::MatrixXd deaths, Eigen::MatrixXd exposures,
                                         Eigen::MatrixXd log_rates, bool rates_only);

    const std::vector<int> &ages() const noexcept { return ages_; }
    const std::vector<int> &years() const noexcept { return years_; }
    const Eigen::MatrixXd &deaths() const noexcept { return deaths_; }
    const Eigen::MatrixXd &exposures() const noexcept { return exposures_; }
    const Eigen::MatrixXd &log_rates() const noexcept { return log_rates_; }
    bool rates_only() const noexcept { return rates_only_; }

    Eigen::Index num_ages() const noexcept { return static_cast<Eigen::Index>(ages_.size()); }
    Eigen::Index num_years() const noexcept { return static_cast<Eigen::Index>(years_.size()); }

private:
    MortalitySurface() = default;
    void validate_shape() const;

    std::vector<int> ages_;
    std::vector<int> years_;
    Eigen::MatrixXd deaths_;
    Eigen::MatrixXd exposures_;
    Eigen::MatrixXd log_rates_;
    bool rates_only_ = false;
};

/// Restrict paired deaths/exposures tables to a window. Any missing cell,
/// non-positive exposure or zero death count raises DataError naming the cell.
MortalitySurface build_surface(const HmdTable &deaths, const HmdTable &exposures, IntRange ages,
                               IntRange years);

/// Rate-only counterpart of build_surface (input is an HMD Mx table).
MortalitySurface build_rate_surface(const HmdTable &rates, IntRange ages, IntRange years);

/// Long-format CSV: header `age,year,deaths,exposure,log_rate`, 17 significant
/// digits. Rate-only surfaces are preceded by a `# rates-only` marker line.
void write_surface_csv(std::ostream &out, const MortalitySurface &surface);
MortalitySurface read_surface_csv(std::istream &in);

} // namespace mortfit
