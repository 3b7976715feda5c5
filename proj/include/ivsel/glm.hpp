#ifndef IVSEL_GLM_HPP
#define IVSEL_GLM_HPP

#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "ivsel/dataset.hpp"
#include "ivsel/linalg.hpp"
#include "ivsel/special.hpp"

namespace ivsel {

enum class Family { linear, logistic, poisson, probit };

inline const char* family_name(Family f) {
    switch (f) {
        case Family::linear: return "linear";
        case Family::logistic: return "logistic";
        case Family::poisson: return "poisson";
        case Family::probit: return "probit";
    }
    return "?";
}

struct GlmFit {
    VectorXd coef;
    MatrixXd cov_classical;
    MatrixXd cov_sandwich;
    double loglik = 0.0;
    bool converged = false;
    int iterations = 0;
    double score_norm = 0.0;
    VectorXd eta;
};

namespace detail {

struct FamilyOps {
    Family family;

    double mean(double eta) const {
        switch (family) {
            case Family::logistic: return expit(eta);
            case Family::poisson: return std::exp(std::min(eta, 30.0));
            case Family::probit: return normal_cdf(eta);
            case Family::linear: return eta;
        }
        return eta;
    }
    double mean_deriv(double eta, double mu) const {
        switch (family) {
            case Family::logistic: return std::max(mu * (1.0 - mu), 1e-12);
            case Family::poisson: return std::max(mu, 1e-12);
            case Family::probit: return std::max(normal_pdf(eta), 1e-12);
            case Family::linear: return 1.0;
        }
        return 1.0;
    }
    double variance(double mu) const {
        switch (family) {
            case Family::logistic: return std::max(mu * (1.0 - mu), 1e-12);
            case Family::poisson: return std::max(mu, 1e-12);
            case Family::probit: return std::max(mu * (1.0 - mu), 1e-12);
            case Family::linear: return 1.0;
        }
        return 1.0;
    }
    double loglik_term(double y, double eta, double mu) const {
        switch (family) {
            case Family::logistic:
            case Family::probit: {
                const double m = std::min(std::max(mu, 1e-15), 1.0 - 1e-15);
                return y * std::log(m) + (1.0 - y) * std::log(1.0 - m);
            }
            case Family::poisson:
                return y * std::min(eta, 30.0) - mu - std::lgamma(y + 1.0);
            case Family::linear:
                return -0.5 * (y - mu) * (y - mu);
        }
        return 0.0;
    }
};

}  // namespace detail

/// IRLS fit of a binary/count GLM. Relative deviance tolerance 1e-10, cap 100
/// iterations; classical covariance is the inverse Fisher information, the
/// sandwich treats any supplied prior weights as fixed.
inline GlmFit glm_irls(const MatrixXd& design, const VectorXd& response, Family family,
                       const std::optional<VectorXd>& prior_weights = std::nullopt,
                       const std::vector<std::string>* names = nullptr) {
    const int n = static_cast<int>(design.rows());
    const int p = static_cast<int>(design.cols());
    if (family == Family::linear) throw ConfigError("glm_irls: use least_squares for linear fits");
    VectorXd w0 = prior_weights.value_or(VectorXd::Ones(n));
    if ((w0.array() <= 0.0).any()) throw DataError("glm_irls: weights must be positive");
    if (family == Family::logistic || family == Family::probit) {
        for (int i = 0; i < n; ++i) {
            if (response[i] != 0.0 && response[i] != 1.0) {
                throw DataError("glm_irls: binary family needs a 0/1 response");
            }
        }
    }
    if (family == Family::poisson && (response.array() < 0.0).any()) {
        throw DataError("glm_irls: poisson family needs a non-negative response");
    }

    const detail::FamilyOps ops{family};
    GlmFit fit;
    fit.coef = VectorXd::Zero(p);

    // glm.fit-style mean start, then iterate on the working response.
    VectorXd eta(n);
    for (int i = 0; i < n; ++i) {
        double mu0;
        switch (family) {
            case Family::poisson: mu0 = response[i] + 0.1; break;
            default: mu0 = (response[i] + 0.5) / 2.0; break;
        }
        switch (family) {
            case Family::poisson: eta[i] = std::log(mu0); break;
            case Family::probit: eta[i] = normal_quantile(mu0); break;
            default: eta[i] = logit(mu0); break;
        }
    }

    double deviance_old = std::numeric_limits<double>::infinity();
    VectorXd mu(n), irls_w(n), z(n);
    MatrixXd xtwx(p, p);
    bool started = false;
    for (int iter = 1; iter <= 100; ++iter) {
        fit.iterations = iter;
        for (int i = 0; i < n; ++i) {
            const double m = ops.mean(eta[i]);
            const double d = ops.mean_deriv(eta[i], m);
            mu[i] = m;
            irls_w[i] = w0[i] * d * d / ops.variance(m);
            z[i] = eta[i] + (response[i] - m) / d;
        }
        xtwx = design.transpose() * irls_w.asDiagonal() * design;
        Eigen::LDLT<MatrixXd> ldlt(xtwx);
        if (ldlt.info() != Eigen::Success) {
            Eigen::ColPivHouseholderQR<MatrixXd> qr(irls_w.array().sqrt().matrix().asDiagonal() *
                                                    design);
            qr.setThreshold(1e-10);
            detail::check_full_rank(qr, p, names);
            throw SingularDesignError("glm_irls: weighted design is singular");
        }
        VectorXd coef_new = ldlt.solve(design.transpose() * (irls_w.array() * z.array()).matrix());
        const double step = started ? (coef_new - fit.coef).cwiseAbs().maxCoeff() : 1.0;
        if (coef_new.cwiseAbs().maxCoeff() > 30.0 && step > 1e-3) {
            throw SeparationError("glm_irls: apparent separation (coefficients diverging)");
        }
        fit.coef = coef_new;
        started = true;
        eta = design * fit.coef;

        double deviance = 0.0;
        for (int i = 0; i < n; ++i) {
            deviance -= 2.0 * w0[i] * ops.loglik_term(response[i], eta[i], ops.mean(eta[i]));
        }
        if (std::abs(deviance - deviance_old) / (std::abs(deviance) + 0.1) < 1e-10) {
            fit.converged = true;
            break;
        }
        deviance_old = deviance;
    }

    fit.eta = eta;
    fit.loglik = 0.0;
    VectorXd score = VectorXd::Zero(p);
    VectorXd bread_w(n), meat_w(n);
    for (int i = 0; i < n; ++i) {
        const double m = ops.mean(eta[i]);
        const double d = ops.mean_deriv(eta[i], m);
        const double v = ops.variance(m);
        fit.loglik += w0[i] * ops.loglik_term(response[i], eta[i], m);
        const double s = w0[i] * (response[i] - m) * d / v;
        score += s * design.row(i).transpose();
        bread_w[i] = w0[i] * d * d / v;
        meat_w[i] = s * s;
    }
    fit.score_norm = score.norm();
    const MatrixXd bread = (design.transpose() * bread_w.asDiagonal() * design).inverse();
    fit.cov_classical = bread;
    fit.cov_sandwich = bread * (design.transpose() * meat_w.asDiagonal() * design) * bread;
    return fit;
}

// ---------------------------------------------------------------------------
// Dataset-level fits
// ---------------------------------------------------------------------------

namespace detail {

inline std::vector<int> all_rows(const Dataset& data) {
    std::vector<int> rows(data.n());
    for (int i = 0; i < data.n(); ++i) rows[i] = i;
    return rows;
}

inline std::vector<int> selected_rows(const Dataset& data) {
    std::vector<int> rows;
    rows.reserve(data.n());
    for (int i = 0; i < data.n(); ++i) {
        if (data.selection[i] == 1) rows.push_back(i);
    }
    return rows;
}

inline MatrixXd design_with_intercept(const MatrixXd& cols, const std::vector<int>& rows) {
    MatrixXd design(rows.size(), cols.cols() + 1);
    for (std::size_t r = 0; r < rows.size(); ++r) {
        design(r, 0) = 1.0;
        design.row(r).tail(cols.cols()) = cols.row(rows[r]);
    }
    return design;
}

inline VectorXd subset(const VectorXd& v, const std::vector<int>& rows) {
    VectorXd out(rows.size());
    for (std::size_t r = 0; r < rows.size(); ++r) out[r] = v[rows[r]];
    return out;
}

inline FitResult from_ls(const LeastSquaresResult& ls, const std::vector<std::string>& names,
                         const std::string& tag, int n_used, bool sandwich) {
    FitResult fit;
    fit.names = names;
    fit.estimates = ls.coef;
    fit.covariance = sandwich ? ls.cov_sandwich : ls.cov_classical;
    fit.fill_std_errors_from_covariance();
    fit.converged = true;
    fit.method_tag = tag;
    fit.n_used = n_used;
    return fit;
}

inline FitResult from_glm(const GlmFit& glm, const std::vector<std::string>& names,
                          const std::string& tag, int n_used, bool sandwich) {
    FitResult fit;
    fit.names = names;
    fit.estimates = glm.coef;
    fit.covariance = sandwich ? glm.cov_sandwich : glm.cov_classical;
    fit.fill_std_errors_from_covariance();
    fit.loglik = glm.loglik;
    fit.converged = glm.converged;
    fit.method_tag = tag;
    fit.n_used = n_used;
    if (!glm.converged) fit.warnings.push_back("irls did not converge");
    return fit;
}

inline FitResult fit_family_rows(const Dataset& data, Family family, const std::vector<int>& rows,
                                 const std::optional<VectorXd>& weights, const std::string& tag,
                                 bool sandwich) {
    const MatrixXd design = design_with_intercept(data.covariates, rows);
    const VectorXd response = subset(data.outcome, rows);
    const auto names = with_intercept(data.covariate_names);
    if (family == Family::linear) {
        return from_ls(least_squares(design, response, weights, &names), names, tag,
                       static_cast<int>(rows.size()), sandwich);
    }
    return from_glm(glm_irls(design, response, family, weights, &names), names, tag,
                    static_cast<int>(rows.size()), sandwich);
}

}  // namespace detail

/// OLS with classical standard errors on the given rows (all rows if empty).
inline FitResult fit_ols(const Dataset& data, std::vector<int> rows = {}) {
    if (rows.empty()) rows = detail::all_rows(data);
    return detail::fit_family_rows(data, Family::linear, rows, std::nullopt, "ols", false);
}

inline FitResult fit_logistic(const Dataset& data, std::vector<int> rows = {},
                              const std::optional<VectorXd>& weights = std::nullopt) {
    if (rows.empty()) rows = detail::all_rows(data);
    return detail::fit_family_rows(data, Family::logistic, rows, weights, "logistic",
                                   weights.has_value());
}

inline FitResult fit_poisson(const Dataset& data, std::vector<int> rows = {},
                             const std::optional<VectorXd>& weights = std::nullopt) {
    if (rows.empty()) rows = detail::all_rows(data);
    return detail::fit_family_rows(data, Family::poisson, rows, weights, "poisson",
                                   weights.has_value());
}

inline FitResult fit_probit(const Dataset& data, std::vector<int> rows = {}) {
    if (rows.empty()) rows = detail::all_rows(data);
    return detail::fit_family_rows(data, Family::probit, rows, std::nullopt, "probit", false);
}

/// Complete-case analysis: the matching fit restricted to rows with R = 1.
inline FitResult fit_cca(const Dataset& data, Family family) {
    const auto rows = detail::selected_rows(data);
    if (static_cast<int>(rows.size()) < data.covariates.cols() + 2) {
        throw DataError("fit_cca: fewer complete cases than parameters + 2");
    }
    auto fit = detail::fit_family_rows(data, family, rows, std::nullopt, "cca", false);
    return fit;
}

/// Benchmark fit on the pre-missingness data; requires the full copies.
inline FitResult fit_oracle(const Dataset& data, Family family) {
    Dataset full = data;
    if (data.outcome_missing) {
        if (!data.has_full_outcome()) throw DataError("fit_oracle: full outcome unavailable");
        full.outcome = data.outcome_full;
    }
    if (data.exposure_missing) {
        if (!data.has_full_covariates()) throw DataError("fit_oracle: full covariates unavailable");
        full.covariates = data.covariates_full;
    }
    auto fit = detail::fit_family_rows(full, family, detail::all_rows(full), std::nullopt, "oracle",
                                       false);
    return fit;
}

struct IpwOptions {
    bool include_instruments = false;  // the weighting model omits Z by default
    double min_propensity = 1e-6;
};

/// Inverse-probability-weighted fit: logistic model for R on the fully
/// observed weight covariates, then a weighted fit on the selected rows with
/// the weights treated as fixed (HC0 sandwich standard errors).
inline FitResult fit_ipw(const Dataset& data, Family family, const IpwOptions& options = {}) {
    const int n = data.n();
    MatrixXd wcov;
    if (data.exposure_missing) {
        wcov.resize(n, options.include_instruments ? data.instruments.cols() : 0);
        if (options.include_instruments) wcov = data.instruments;
    } else {
        const int pc = static_cast<int>(data.covariates.cols());
        wcov.resize(n, pc + (options.include_instruments ? data.instruments.cols() : 0));
        wcov.leftCols(pc) = data.covariates;
        if (options.include_instruments) wcov.rightCols(data.instruments.cols()) = data.instruments;
    }

    MatrixXd wdesign(n, wcov.cols() + 1);
    wdesign.col(0).setOnes();
    if (wcov.cols() > 0) wdesign.rightCols(wcov.cols()) = wcov;
    const VectorXd r = data.selection.cast<double>();
    const GlmFit sel = glm_irls(wdesign, r, Family::logistic);

    const auto rows = detail::selected_rows(data);
    double min_pi = 1.0;
    VectorXd weights(rows.size());
    for (std::size_t k = 0; k < rows.size(); ++k) {
        const double pi = expit(sel.eta[rows[k]]);
        min_pi = std::min(min_pi, pi);
        weights[k] = 1.0 / pi;
    }
    if (min_pi < options.min_propensity) {
        throw UnstableWeightsError("fit_ipw: fitted propensity " + std::to_string(min_pi) +
                                   " below " + std::to_string(options.min_propensity));
    }
    auto fit = detail::fit_family_rows(data, family, rows, weights, "ipw", true);
    if (!sel.converged) fit.warnings.push_back("weight model did not converge");
    return fit;
}

}  // namespace ivsel

#endif
