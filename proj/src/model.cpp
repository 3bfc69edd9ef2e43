#include "mortfit/model.hpp"

#include "mortfit/errors.hpp"
#include "mortfit/format.hpp"

#include <json.hpp>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <ostream>
#include <sstream>
#include <stdexcept>

namespace mortfit {

namespace {

// Neumaier-compensated running sum.
class CompensatedSum {
public:
    void add(double x) noexcept {
        const double t = sum_ + x;
        if (std::abs(sum_) >= std::abs(x)) {
            comp_ += (sum_ - t) + x;
        } else {
            comp_ += (x - t) + sum_;
        }
        sum_ = t;
    }
    double value() const noexcept { return sum_ + comp_; }

private:
    double sum_ = 0.0;
    double comp_ = 0.0;
};

bool uniform(const Eigen::VectorXd &v) {
    return v.size() > 0 && (v.array() == v(0)).all();
}

void check_len(const Eigen::VectorXd &v, Eigen::Index expected, const char *name) {
    if (v.size() != expected) {
        throw std::invalid_argument(std::string("parameter '") + name + "' has length " +
                                    std::to_string(v.size()) + ", expected " +
                                    std::to_string(expected));
    }
}

void append_array(std::string &out, const Eigen::VectorXd &v) {
    out += '[';
    for (Eigen::Index i = 0; i < v.size(); ++i) {
        if (i > 0) {
            out += ',';
        }
        out += fmt17(v(i));
    }
    out += ']';
}

void append_array(std::string &out, const std::vector<int> &v) {
    out += '[';
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (i > 0) {
            out += ',';
        }
        out += std::to_string(v[i]);
    }
    out += ']';
}

Eigen::VectorXd read_vector(const nlohmann::json &j, const char *key) {
    if (!j.contains(key)) {
        return {};
    }
    const auto &arr = j.at(key);
    Eigen::VectorXd v(static_cast<Eigen::Index>(arr.size()));
    for (std::size_t i = 0; i < arr.size(); ++i) {
        v(static_cast<Eigen::Index>(i)) = arr[i].get<double>();
    }
    return v;
}

} // namespace

std::string_view to_string(ModelKind kind) noexcept {
    switch (kind) {
    case ModelKind::LC:
        return "LC";
    case ModelKind::RH:
        return "RH";
    case ModelKind::H1:
        return "H1";
    case ModelKind::APC:
        return "APC";
    }
    return "?";
}

ModelKind parse_model_kind(std::string_view name) {
    std::string n(name);
    std::transform(n.begin(), n.end(), n.begin(),
                   [](unsigned char ch) { return static_cast<char>(std::toupper(ch)); });
    if (n == "LC") {
        return ModelKind::LC;
    }
    if (n == "RH") {
        return ModelKind::RH;
    }
    if (n == "H1") {
        return ModelKind::H1;
    }
    if (n == "APC") {
        return ModelKind::APC;
    }
    throw std::invalid_argument("unknown model kind '" + std::string(name) + "'");
}

void ModelParams::validate() const {
    if (ages.empty() || years.empty()) {
        throw std::invalid_argument("parameter bundle has no ages or years");
    }
    const Eigen::Index p = num_ages();
    const Eigen::Index n = num_years();
    check_len(a, p, "a");
    check_len(b, p, "b");
    check_len(k, n, "k");
    if (has_cohort(kind)) {
        check_len(c, p, "c");
        check_len(gamma, p + n - 1, "gamma");
    } else if (c.size() != 0 || gamma.size() != 0) {
        throw std::invalid_argument("LC bundle must not carry cohort parameters");
    }
}

ModelParams initial_params(ModelKind kind, const std::vector<int> &ages,
                           const std::vector<int> &years, const Eigen::MatrixXd &y) {
    ModelParams params;
    params.kind = kind;
    params.ages = ages;
    params.years = years;
    const Eigen::Index p = params.num_ages();
    const Eigen::Index n = params.num_years();
    if (y.rows() != p || y.cols() != n) {
        throw std::invalid_argument("initial_params: data dimensions do not match ages x years");
    }
    params.a = y.rowwise().mean();
    params.b = Eigen::VectorXd::Constant(p, 1.0 / static_cast<double>(p));
    params.k = Eigen::VectorXd::Zero(n);
    if (has_cohort(kind)) {
        params.c = Eigen::VectorXd::Constant(p, 1.0 / static_cast<double>(p));
        params.gamma = Eigen::VectorXd::Zero(p + n - 1);
    }
    return params;
}

Eigen::VectorXd cohort_offsets(Eigen::Index num_ages, Eigen::Index num_years) {
    const Eigen::Index m = num_ages + num_years - 1;
    const double center = 0.5 * static_cast<double>(m - 1);
    Eigen::VectorXd offsets(m);
    for (Eigen::Index s = 0; s < m; ++s) {
        offsets(s) = static_cast<double>(s) - center;
    }
    return offsets;
}

double hv_moment(const ModelParams &params) {
    if (!has_cohort(params.kind)) {
        return 0.0;
    }
    return cohort_offsets(params.num_ages(), params.num_years()).dot(params.gamma);
}

Eigen::MatrixXd fitted_log_rates(const ModelParams &params) {
    params.validate();
    const Eigen::Index p = params.num_ages();
    const Eigen::Index n = params.num_years();
    Eigen::MatrixXd eta = params.b * params.k.transpose();
    eta.colwise() += params.a;
    if (has_cohort(params.kind)) {
        for (Eigen::Index j = 0; j < n; ++j) {
            for (Eigen::Index i = 0; i < p; ++i) {
                eta(i, j) += params.c(i) * params.gamma(j - i + p - 1);
            }
        }
    }
    return eta;
}

double l2_error(const Eigen::MatrixXd &y, const ModelParams &params) {
    if (y.rows() != params.num_ages() || y.cols() != params.num_years()) {
        throw std::invalid_argument("l2_error: data dimensions do not match parameters");
    }
    return (y - fitted_log_rates(params)).squaredNorm();
}

double poisson_loglik(const MortalitySurface &surface, const ModelParams &params,
                      bool include_constant) {
    if (surface.rates_only()) {
        throw CapabilityError("Poisson log-likelihood needs deaths and exposures; surface is rate-only");
    }
    if (surface.num_ages() != params.num_ages() || surface.num_years() != params.num_years()) {
        throw std::invalid_argument("poisson_loglik: surface dimensions do not match parameters");
    }
    const Eigen::MatrixXd eta = fitted_log_rates(params);
    const auto &d = surface.deaths();
    const auto &e = surface.exposures();
    CompensatedSum total;
    for (Eigen::Index j = 0; j < eta.cols(); ++j) {
        for (Eigen::Index i = 0; i < eta.rows(); ++i) {
            total.add(d(i, j) * eta(i, j));
            total.add(-e(i, j) * std::exp(eta(i, j)));
            if (include_constant) {
                total.add(d(i, j) * std::log(e(i, j)));
                total.add(-std::lgamma(d(i, j) + 1.0));
            }
        }
    }
    return total.value();
}

ModelParams apply_identifiability(const ModelParams &params) {
    params.validate();
    ModelParams out = params;
    const Eigen::Index p = out.num_ages();
    const double inv_p = 1.0 / static_cast<double>(p);

    if (fixed_period_loading(out.kind)) {
        if (!uniform(out.b)) {
            throw std::invalid_argument("APC bundle requires a uniform b");
        }
        out.k *= out.b(0) * static_cast<double>(p);
        out.b.setConstant(inv_p);
        const double kbar = out.k.mean();
        out.k.array() -= kbar;
        out.a.array() += inv_p * kbar;
    } else {
        const double kbar = out.k.mean();
        out.a += out.b * kbar;
        out.k.array() -= kbar;
        const double bsum = out.b.sum();
        if (std::abs(bsum) < 1e-10) {
            throw DegenerateNormalizationError("sum(b) is ~0; cannot normalize");
        }
        out.b /= bsum;
        out.k *= bsum;
    }

    if (!has_cohort(out.kind)) {
        return out;
    }
    if (fixed_cohort_loading(out.kind)) {
        if (!uniform(out.c)) {
            throw std::invalid_argument(std::string(to_string(out.kind)) +
                                        " bundle requires a uniform c");
        }
        out.gamma *= out.c(0) * static_cast<double>(p);
        out.c.setConstant(inv_p);
    } else {
        const double csum = out.c.sum();
        if (std::abs(csum) < 1e-10) {
            throw DegenerateNormalizationError("sum(c) is ~0; cannot normalize");
        }
        out.c /= csum;
        out.gamma *= csum;
    }
    const double gbar = out.gamma.mean();
    out.gamma.array() -= gbar;
    out.a += out.c * gbar;
    return out;
}

double constraint_violation(const ModelParams &params) {
    double worst = std::max(std::abs(params.b.sum() - 1.0), std::abs(params.k.sum()));
    if (has_cohort(params.kind)) {
        worst = std::max({worst, std::abs(params.c.sum() - 1.0), std::abs(params.gamma.sum())});
    }
    return worst;
}

std::string to_json(const ModelParams &params) {
    std::string out = "{\n  \"kind\": \"";
    out += to_string(params.kind);
    out += "\",\n  \"ages\": ";
    append_array(out, params.ages);
    out += ",\n  \"years\": ";
    append_array(out, params.years);
    out += ",\n  \"a\": ";
    append_array(out, params.a);
    out += ",\n  \"b\": ";
    append_array(out, params.b);
    out += ",\n  \"k\": ";
    append_array(out, params.k);
    out += ",\n  \"c\": ";
    append_array(out, params.c);
    out += ",\n  \"gamma\": ";
    append_array(out, params.gamma);
    out += ",\n  \"hv_constrained\": ";
    out += params.hv_constrained ? "true" : "false";
    out += "\n}\n";
    return out;
}

ModelParams params_from_json(std::string_view text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text.begin(), text.end());
    } catch (const nlohmann::json::parse_error &e) {
        throw ParseError(0, std::string("invalid parameter JSON: ") + e.what());
    }
    ModelParams params;
    try {
        params.kind = parse_model_kind(j.at("kind").get<std::string>());
        params.ages = j.at("ages").get<std::vector<int>>();
        params.years = j.at("years").get<std::vector<int>>();
        params.a = read_vector(j, "a");
        params.b = read_vector(j, "b");
        params.k = read_vector(j, "k");
        params.c = read_vector(j, "c");
        params.gamma = read_vector(j, "gamma");
        params.hv_constrained = j.value("hv_constrained", false);
    } catch (const nlohmann::json::exception &e) {
        throw ParseError(0, std::string("malformed parameter bundle: ") + e.what());
    }
    params.validate();
    return params;
}

void write_params_csv(std::ostream &out, const ModelParams &params) {
    params.validate();
    out << "series,index,value\n";
    const auto emit = [&out](const char *series, int index, double value) {
        out << series << ',' << index << ',' << fmt17(value) << '\n';
    };
    for (Eigen::Index i = 0; i < params.num_ages(); ++i) {
        emit("a", params.ages[i], params.a(i));
    }
    for (Eigen::Index i = 0; i < params.num_ages(); ++i) {
        emit("b", params.ages[i], params.b(i));
    }
    for (Eigen::Index j = 0; j < params.num_years(); ++j) {
        emit("k", params.years[j], params.k(j));
    }
    if (has_cohort(params.kind)) {
        for (Eigen::Index i = 0; i < params.num_ages(); ++i) {
            emit("c", params.ages[i], params.c(i));
        }
        const int first = params.first_cohort();
        for (Eigen::Index s = 0; s < params.num_cohorts(); ++s) {
            emit("gamma", first + static_cast<int>(s), params.gamma(s));
        }
    }
}

} // namespace mortfit
