#ifndef IVSEL_TTW_HPP
#define IVSEL_TTW_HPP

#include <cmath>
#include <string>
#include <vector>

#include "ivsel/glm.hpp"
#include "ivsel/optimize.hpp"

namespace ivsel {

enum class TtwMode { partial, full };

struct TtwOptions {
    TtwMode mode = TtwMode::partial;       // linear only; logistic/poisson always optimize jointly
    Family propensity_link = Family::logistic;
    OptimSettings optim;
    std::optional<VectorXd> start;
};

/// Implied selection propensity of the binary-outcome model: the mixture of
/// the Y=0 and Y=1 selection probabilities, lambda and expit(omega + logit
/// lambda). Collapses to lambda when omega = 0.
inline double ttw_logistic_propensity(double s, double omega, double t) {
    const double q = expit(s);
    return (1.0 - q) * expit(t) + q * expit(omega + t);
}

/// Observed-data logit of the binary-outcome model given the full-data linear
/// predictor s, log-odds bias omega and lambda-model linear predictor t.
inline double ttw_logistic_observed_logit(double s, double omega, double t) {
    return s + omega - (log1pexp(omega + t) - log1pexp(t));
}

/// Observed-data log mean of the count-outcome model; equals s exactly when
/// omega = 0.
inline double ttw_poisson_observed_log_mean(double s, double omega, double t) {
    return s + omega - (log1pexp(omega + t) - log1pexp(t));
}

namespace detail {

struct TtwDesigns {
    MatrixXd outcome_design_sel;  // (1, X) over selected rows
    VectorXd outcome_sel;
    MatrixXd ps_design_all;       // (1, X, Z) over all rows
    MatrixXd ps_design_sel;
    VectorXd r_all;
    std::vector<int> sel_rows;
    std::vector<std::string> outcome_names;
    std::vector<std::string> bias_names;
    std::vector<std::string> ps_names;
};

inline TtwDesigns ttw_designs(const Dataset& data) {
    if (data.instruments.cols() == 0) {
        throw ConfigError("ttw: a selection instrument Z is required");
    }
    TtwDesigns d;
    d.sel_rows = selected_rows(data);
    const int n = data.n();
    const int p = static_cast<int>(data.covariates.cols());
    const int q = static_cast<int>(data.instruments.cols());

    d.outcome_design_sel = design_with_intercept(data.covariates, d.sel_rows);
    d.outcome_sel = subset(data.outcome, d.sel_rows);

    d.ps_design_all.resize(n, 1 + p + q);
    d.ps_design_all.col(0).setOnes();
    d.ps_design_all.middleCols(1, p) = data.covariates;
    d.ps_design_all.rightCols(q) = data.instruments;
    d.ps_design_sel.resize(d.sel_rows.size(), 1 + p + q);
    for (std::size_t r = 0; r < d.sel_rows.size(); ++r) {
        d.ps_design_sel.row(r) = d.ps_design_all.row(d.sel_rows[r]);
    }
    d.r_all = data.selection.cast<double>();

    d.outcome_names = with_intercept(data.covariate_names);
    d.bias_names.push_back("bias:(intercept)");
    for (const auto& nm : data.covariate_names) d.bias_names.push_back("bias:" + nm);
    d.ps_names.push_back("ps:(intercept)");
    for (const auto& nm : data.covariate_names) d.ps_names.push_back("ps:" + nm);
    for (const auto& nm : data.instrument_names) d.ps_names.push_back("ps:" + nm);
    return d;
}

inline double ps_mean(Family link, double eta) {
    return link == Family::probit ? normal_cdf(eta) : expit(eta);
}

}  // namespace detail

/// Linear-outcome estimator under homogeneous selection bias on the mean
/// scale. Partial mode (default) first fits the propensity model for R, then
/// maximizes the outcome factor with the fitted propensities plugged in; full
/// mode maximizes everything jointly.
inline FitResult ttw_linear(const Dataset& data, const TtwOptions& options = {}) {
    const auto d = detail::ttw_designs(data);
    const int p1 = static_cast<int>(d.outcome_design_sel.cols());
    const int pp = static_cast<int>(d.ps_design_all.cols());
    const int n_sel = static_cast<int>(d.sel_rows.size());
    if (n_sel < 2 * p1 + 2) throw DataError("ttw_linear: too few selected rows");

    const GlmFit stage1 = glm_irls(d.ps_design_all, d.r_all, options.propensity_link);

    VectorXd pihat_sel(n_sel);
    for (int i = 0; i < n_sel; ++i) {
        pihat_sel[i] = detail::ps_mean(options.propensity_link, stage1.eta[d.sel_rows[i]]);
    }
    const VectorXd leverage = (1.0 - pihat_sel.array()).matrix();  // 1 - pi
    const double lev_sd =
        std::sqrt((leverage.array() - leverage.mean()).square().sum() / std::max(1, n_sel - 1));

    // Start: CCA OLS for beta, zero bias, stage-1 propensity, CCA residual variance.
    const auto ols = least_squares(d.outcome_design_sel, d.outcome_sel);
    double sigma2_start = std::max(ols.residuals.squaredNorm() / n_sel, 1e-8);

    FitResult fit;
    fit.method_tag = "ttw";
    fit.n_used = data.n();
    fit.names = d.outcome_names;
    for (const auto& nm : d.bias_names) fit.names.push_back(nm);
    for (const auto& nm : d.ps_names) fit.names.push_back(nm);
    fit.names.push_back("sigma2");
    if (lev_sd < 1e-6) {
        fit.warnings.push_back(
            "selection-bias coefficients unidentified: 1 - propensity nearly constant");
    }

    if (options.mode == TtwMode::partial) {
        // Stage 2 over (beta, eta, log sigma2) with pi fixed.
        auto nll = [&](const VectorXd& th, VectorXd* grad) {
            const VectorXd beta = th.head(p1);
            const VectorXd eta = th.segment(p1, p1);
            const double s2 = std::exp(th[2 * p1]);
            const VectorXd m = d.outcome_design_sel * beta +
                               (d.outcome_design_sel * eta).cwiseProduct(leverage);
            const VectorXd resid = d.outcome_sel - m;
            const double rss = resid.squaredNorm();
            const double value = 0.5 * (n_sel * std::log(2.0 * M_PI * s2) + rss / s2);
            if (grad) {
                grad->resize(2 * p1 + 1);
                grad->head(p1) = -d.outcome_design_sel.transpose() * resid / s2;
                grad->segment(p1, p1) =
                    -d.outcome_design_sel.transpose() * resid.cwiseProduct(leverage) / s2;
                (*grad)[2 * p1] = 0.5 * (n_sel - rss / s2);
            }
            return value;
        };
        VectorXd start(2 * p1 + 1);
        if (options.start && options.start->size() == start.size()) {
            start = *options.start;
        } else {
            start << ols.coef, VectorXd::Zero(p1), std::log(sigma2_start);
        }
        auto result = minimize([&nll](const VectorXd& th) { return nll(th, nullptr); },
                               [&nll](const VectorXd& th) {
                                   VectorXd g;
                                   nll(th, &g);
                                   return g;
                               },
                               start, options.optim);
        const double sigma2 = std::exp(result.argmin[2 * p1]);
        fit.estimates.resize(2 * p1 + pp + 1);
        fit.estimates << result.argmin.head(2 * p1), stage1.coef, sigma2;
        fit.loglik = -result.objective_value;
        fit.converged = result.converged && stage1.converged;
        if (!result.converged) fit.warnings.push_back("optimizer: " + result.note);

        fit.covariance = MatrixXd::Zero(fit.estimates.size(), fit.estimates.size());
        if (options.optim.compute_hessian && result.hessian.size() > 0) {
            Eigen::LDLT<MatrixXd> ldlt(result.hessian);
            MatrixXd cov2;
            if (ldlt.info() == Eigen::Success && ldlt.isPositive()) {
                cov2 = ldlt.solve(MatrixXd::Identity(2 * p1 + 1, 2 * p1 + 1));
            } else {
                cov2 = result.hessian.completeOrthogonalDecomposition().pseudoInverse();
                fit.warnings.push_back("stage-2 hessian not positive definite");
                fit.converged = false;
            }
            VectorXd jac = VectorXd::Ones(2 * p1 + 1);
            jac[2 * p1] = sigma2;
            cov2 = jac.asDiagonal() * cov2 * jac.asDiagonal();
            fit.covariance.topLeftCorner(2 * p1, 2 * p1) = cov2.topLeftCorner(2 * p1, 2 * p1);
            fit.covariance(fit.estimates.size() - 1, fit.estimates.size() - 1) =
                cov2(2 * p1, 2 * p1);
            fit.covariance.block(2 * p1, 2 * p1, pp, pp) = stage1.cov_classical;
            fit.fill_std_errors_from_covariance();
        }
        return fit;
    }

    // Full mode: joint likelihood over (beta, eta, alpha, log sigma2).
    const bool logit_link = options.propensity_link == Family::logistic;
    if (!logit_link) throw ConfigError("ttw_linear: full mode supports the logit link only");
    auto nll = [&](const VectorXd& th, VectorXd* grad) {
        const VectorXd beta = th.head(p1);
        const VectorXd eta = th.segment(p1, p1);
        const VectorXd alpha = th.segment(2 * p1, pp);
        const double s2 = std::exp(th[2 * p1 + pp]);

        const VectorXd t_all = d.ps_design_all * alpha;
        double value = 0.0;
        VectorXd dt_all;
        if (grad) {
            grad->setZero(2 * p1 + pp + 1);
            dt_all.setZero(t_all.size());
        }
        // Bernoulli part over all rows.
        for (int i = 0; i < t_all.size(); ++i) {
            const double pi = expit(t_all[i]);
            value -= d.r_all[i] * std::log(std::max(pi, 1e-300)) +
                     (1.0 - d.r_all[i]) * std::log(std::max(1.0 - pi, 1e-300));
            if (grad) dt_all[i] = pi - d.r_all[i];
        }
        // Outcome part over selected rows.
        const VectorXd bias = d.outcome_design_sel * eta;
        double d_logs2 = 0.0;
        for (int i = 0; i < n_sel; ++i) {
            const double t = t_all[d.sel_rows[i]];
            const double pi = expit(t);
            const double m = d.outcome_design_sel.row(i).dot(beta) + bias[i] * (1.0 - pi);
            const double r = d.outcome_sel[i] - m;
            value += 0.5 * (std::log(2.0 * M_PI * s2) + r * r / s2);
            if (grad) {
                const double gscale = -r / s2;
                grad->head(p1) += gscale * d.outcome_design_sel.row(i).transpose();
                grad->segment(p1, p1) +=
                    gscale * (1.0 - pi) * d.outcome_design_sel.row(i).transpose();
                dt_all[d.sel_rows[i]] += -gscale * bias[i] * pi * (1.0 - pi);
                d_logs2 += 0.5 * (1.0 - r * r / s2);
            }
        }
        if (grad) {
            grad->segment(2 * p1, pp) += d.ps_design_all.transpose() * dt_all;
            (*grad)[2 * p1 + pp] = d_logs2;
        }
        return value;
    };
    VectorXd start(2 * p1 + pp + 1);
    if (options.start && options.start->size() == start.size()) {
        start = *options.start;
    } else {
        start << ols.coef, VectorXd::Zero(p1), stage1.coef, std::log(sigma2_start);
    }
    auto result = minimize([&nll](const VectorXd& th) { return nll(th, nullptr); },
                           [&nll](const VectorXd& th) {
                               VectorXd g;
                               nll(th, &g);
                               return g;
                           },
                           start, options.optim);
    const int dim = 2 * p1 + pp + 1;
    const double sigma2 = std::exp(result.argmin[dim - 1]);
    fit.estimates.resize(dim);
    fit.estimates << result.argmin.head(dim - 1), sigma2;
    fit.loglik = -result.objective_value;
    fit.converged = result.converged;
    if (!result.converged) fit.warnings.push_back("optimizer: " + result.note);
    if (options.optim.compute_hessian && result.hessian.size() > 0) {
        Eigen::LDLT<MatrixXd> ldlt(result.hessian);
        MatrixXd cov;
        if (ldlt.info() == Eigen::Success && ldlt.isPositive()) {
            cov = ldlt.solve(MatrixXd::Identity(dim, dim));
        } else {
            cov = result.hessian.completeOrthogonalDecomposition().pseudoInverse();
            fit.warnings.push_back("hessian not positive definite");
            fit.converged = false;
        }
        VectorXd jac = VectorXd::Ones(dim);
        jac[dim - 1] = sigma2;
        fit.covariance = jac.asDiagonal() * cov * jac.asDiagonal();
        fit.fill_std_errors_from_covariance();
    }
    return fit;
}

/// Binary-outcome estimator under homogeneous selection bias on the log-odds
/// scale; the likelihood couples the observed-data regression and the
/// propensity score, so only joint optimization is available.
inline FitResult ttw_logistic(const Dataset& data, const TtwOptions& options = {}) {
    const auto d = detail::ttw_designs(data);
    const int p1 = static_cast<int>(d.outcome_design_sel.cols());
    const int pp = static_cast<int>(d.ps_design_all.cols());
    const int n = data.n();
    const int n_sel = static_cast<int>(d.sel_rows.size());

    // Row index map: selected row k corresponds to data row sel_rows[k].
    auto nll = [&](const VectorXd& th, VectorXd* grad) {
        const VectorXd beta = th.head(p1);
        const VectorXd eta_c = th.segment(p1, p1);
        const VectorXd a = th.segment(2 * p1, pp);

        const VectorXd t_all = d.ps_design_all * a;
        const VectorXd s_sel = d.outcome_design_sel * beta;
        const VectorXd w_sel = d.outcome_design_sel * eta_c;

        double value = 0.0;
        VectorXd dt_all, ds_sel, dw_sel;
        if (grad) {
            dt_all.setZero(n);
            ds_sel.setZero(n_sel);
            dw_sel.setZero(n_sel);
        }

        int k = 0;
        for (int i = 0; i < n; ++i) {
            const double t = t_all[i];
            const double lambda = expit(t);
            double s, omega;
            if (k < n_sel && d.sel_rows[k] == i) {
                s = s_sel[k];
                omega = w_sel[k];
            } else {
                // For unselected rows the outcome factor is absent, but the
                // propensity still mixes over the full-data outcome model.
                const double eta_row = d.ps_design_all.row(i).head(p1).dot(beta);
                const double omega_row = d.ps_design_all.row(i).head(p1).dot(eta_c);
                s = eta_row;
                omega = omega_row;
            }
            const double q = expit(s);
            const double lambda1 = expit(omega + t);
            double pi = (1.0 - q) * lambda + q * lambda1;
            pi = std::min(std::max(pi, 1e-12), 1.0 - 1e-12);
            const double r = d.r_all[i];
            value -= r * std::log(pi) + (1.0 - r) * std::log(1.0 - pi);

            double dpi_common = 0.0;
            if (grad) dpi_common = -(r - pi) / (pi * (1.0 - pi));

            if (k < n_sel && d.sel_rows[k] == i) {
                // Observed-data outcome factor.
                const double c = log1pexp(omega + t) - log1pexp(t);
                const double m = s + omega - c;
                const double pm = expit(m);
                const double y = d.outcome_sel[k];
                value -= y * std::log(std::max(pm, 1e-300)) +
                         (1.0 - y) * std::log(std::max(1.0 - pm, 1e-300));
                if (grad) {
                    const double dm = -(y - pm);
                    ds_sel[k] += dm;
                    dw_sel[k] += dm * (1.0 - lambda1);
                    dt_all[i] += dm * (lambda - lambda1);
                }
            }
            if (grad) {
                const double dpi_ds = q * (1.0 - q) * (lambda1 - lambda);
                const double dpi_dw = q * lambda1 * (1.0 - lambda1);
                const double dpi_dt = (1.0 - q) * lambda * (1.0 - lambda) +
                                      q * lambda1 * (1.0 - lambda1);
                if (k < n_sel && d.sel_rows[k] == i) {
                    ds_sel[k] += dpi_common * dpi_ds;
                    dw_sel[k] += dpi_common * dpi_dw;
                } else {
                    for (int j = 0; j < p1; ++j) {
                        const double xij = d.ps_design_all(i, j);
                        (*grad)[j] += dpi_common * dpi_ds * xij;
                        (*grad)[p1 + j] += dpi_common * dpi_dw * xij;
                    }
                }
                dt_all[i] += dpi_common * dpi_dt;
            }
            if (k < n_sel && d.sel_rows[k] == i) ++k;
        }

        if (grad) {
            grad->head(p1) += d.outcome_design_sel.transpose() * ds_sel;
            grad->segment(p1, p1) += d.outcome_design_sel.transpose() * dw_sel;
            grad->segment(2 * p1, pp) = d.ps_design_all.transpose() * dt_all;
        }
        return value;
    };

    VectorXd start(2 * p1 + pp);
    if (options.start && options.start->size() == start.size()) {
        start = *options.start;
    } else {
        const GlmFit cca = glm_irls(d.outcome_design_sel, d.outcome_sel, Family::logistic);
        const GlmFit sel = glm_irls(d.ps_design_all, d.r_all, Family::logistic);
        start << cca.coef, VectorXd::Zero(p1), sel.coef;
    }
    auto result = minimize([&nll](const VectorXd& th) { return nll(th, nullptr); },
                           [&nll](const VectorXd& th) {
                               VectorXd g;
                               nll(th, &g);
                               return g;
                           },
                           start, options.optim);

    FitResult fit;
    fit.method_tag = "ttw";
    fit.n_used = n;
    fit.names = d.outcome_names;
    for (const auto& nm : d.bias_names) fit.names.push_back(nm);
    for (const auto& nm : d.ps_names) fit.names.push_back(nm);
    fit.estimates = result.argmin;
    fit.loglik = -result.objective_value;
    fit.converged = result.converged;
    if (!result.converged) fit.warnings.push_back("optimizer: " + result.note);
    if (options.optim.compute_hessian && result.hessian.size() > 0) {
        Eigen::LDLT<MatrixXd> ldlt(result.hessian);
        if (ldlt.info() == Eigen::Success && ldlt.isPositive()) {
            fit.covariance = ldlt.solve(MatrixXd::Identity(start.size(), start.size()));
        } else {
            fit.covariance = result.hessian.completeOrthogonalDecomposition().pseudoInverse();
            fit.warnings.push_back("hessian not positive definite");
            fit.converged = false;
        }
        fit.fill_std_errors_from_covariance();
    }
    return fit;
}

/// Count-outcome estimator under homogeneous selection bias on the rate
/// scale; joint optimization of the Poisson and propensity factors.
inline FitResult ttw_poisson(const Dataset& data, const TtwOptions& options = {}) {
    const auto d = detail::ttw_designs(data);
    const int p1 = static_cast<int>(d.outcome_design_sel.cols());
    const int pp = static_cast<int>(d.ps_design_all.cols());
    const int n = data.n();
    const int n_sel = static_cast<int>(d.sel_rows.size());
    if ((d.outcome_sel.array() < 0.0).any()) {
        throw DataError("ttw_poisson: outcome must be non-negative");
    }

    bool cap_hit_at_optimum = false;
    auto nll = [&](const VectorXd& th, VectorXd* grad, bool* cap_hit) {
        const VectorXd beta = th.head(p1);
        const VectorXd eta_c = th.segment(p1, p1);
        const VectorXd a = th.segment(2 * p1, pp);

        const VectorXd t_all = d.ps_design_all * a;
        const VectorXd s_sel = d.outcome_design_sel * beta;
        const VectorXd w_sel = d.outcome_design_sel * eta_c;

        double value = 0.0;
        VectorXd dt_all, ds_sel, dw_sel;
        if (grad) {
            dt_all.setZero(n);
            ds_sel.setZero(n_sel);
            dw_sel.setZero(n_sel);
        }
        for (int i = 0; i < n; ++i) {
            const double pi = std::min(std::max(expit(t_all[i]), 1e-12), 1.0 - 1e-12);
            value -= d.r_all[i] * std::log(pi) + (1.0 - d.r_all[i]) * std::log(1.0 - pi);
            if (grad) dt_all[i] = pi - d.r_all[i];
        }
        for (int k = 0; k < n_sel; ++k) {
            const int i = d.sel_rows[k];
            const double t = t_all[i];
            const double pi = expit(t);
            const double omega = w_sel[k];
            const double dfac = log1pexp(omega + t) - log1pexp(t);
            double log_mu = s_sel[k] + omega - dfac;
            if (log_mu > 30.0) {
                log_mu = 30.0;
                if (cap_hit) *cap_hit = true;
            }
            const double mu = std::exp(log_mu);
            const double y = d.outcome_sel[k];
            value -= y * log_mu - mu - std::lgamma(y + 1.0);
            if (grad) {
                const double dlm = -(y - mu);
                const double pi1 = expit(omega + t);
                ds_sel[k] += dlm;
                dw_sel[k] += dlm * (1.0 - pi1);
                dt_all[i] += dlm * (pi - pi1);
            }
        }
        if (grad) {
            grad->head(p1) = d.outcome_design_sel.transpose() * ds_sel;
            grad->segment(p1, p1) = d.outcome_design_sel.transpose() * dw_sel;
            grad->segment(2 * p1, pp) = d.ps_design_all.transpose() * dt_all;
        }
        return value;
    };

    VectorXd start(2 * p1 + pp);
    if (options.start && options.start->size() == start.size()) {
        start = *options.start;
    } else {
        const GlmFit cca = glm_irls(d.outcome_design_sel, d.outcome_sel, Family::poisson);
        const GlmFit sel = glm_irls(d.ps_design_all, d.r_all, Family::logistic);
        start << cca.coef, VectorXd::Zero(p1), sel.coef;
    }
    auto result = minimize(
        [&nll](const VectorXd& th) { return nll(th, nullptr, nullptr); },
        [&nll](const VectorXd& th) {
            VectorXd g;
            nll(th, &g, nullptr);
            return g;
        },
        start, options.optim);
    nll(result.argmin, nullptr, &cap_hit_at_optimum);
    if (cap_hit_at_optimum) {
        throw NumericError("ttw_poisson: rate cap exp(30) active at the optimum");
    }

    FitResult fit;
    fit.method_tag = "ttw";
    fit.n_used = n;
    fit.names = d.outcome_names;
    for (const auto& nm : d.bias_names) fit.names.push_back(nm);
    for (const auto& nm : d.ps_names) fit.names.push_back(nm);
    fit.estimates = result.argmin;
    fit.loglik = -result.objective_value;
    fit.converged = result.converged;
    if (!result.converged) fit.warnings.push_back("optimizer: " + result.note);
    if (options.optim.compute_hessian && result.hessian.size() > 0) {
        Eigen::LDLT<MatrixXd> ldlt(result.hessian);
        if (ldlt.info() == Eigen::Success && ldlt.isPositive()) {
            fit.covariance = ldlt.solve(MatrixXd::Identity(start.size(), start.size()));
        } else {
            fit.covariance = result.hessian.completeOrthogonalDecomposition().pseudoInverse();
            fit.warnings.push_back("hessian not positive definite");
            fit.converged = false;
        }
        fit.fill_std_errors_from_covariance();
    }
    return fit;
}

}  // namespace ivsel

#endif
