#ifndef IVSEL_HECKMAN_HPP
#define IVSEL_HECKMAN_HPP

#include <cmath>
#include <string>
#include <vector>

#include "ivsel/glm.hpp"
#include "ivsel/optimize.hpp"

namespace ivsel {

/// Natural-scale parameters of the normal-outcome selection model. The
/// selection equation is probit with unit error scale; the optimizer works on
/// (log sigma1, atanh rho) so the constraints hold by construction.
struct HeckmanParams {
    VectorXd beta;    // outcome coefficients (intercept first)
    VectorXd gamma;   // selection coefficients over (intercept, covariates, Z)
    double sigma1 = 1.0;
    double rho = 0.0;
};

struct HeckmanOptions {
    OptimSettings optim;
    /// Optional warm start (packed unconstrained vector) for repeated refits.
    std::optional<VectorXd> start;
    /// Pin rho at zero; the likelihood then factorizes and beta matches OLS.
    bool fix_rho = false;
};

namespace detail {

struct HeckmanDesigns {
    MatrixXd outcome_design;   // selected rows only
    VectorXd outcome;          // selected rows only
    MatrixXd sel_design_sel;   // selection design, selected rows
    MatrixXd sel_design_uns;   // selection design, unselected rows
    MatrixXd sel_design_all;
    std::vector<std::string> outcome_names;
    std::vector<std::string> sel_names;
};

inline HeckmanDesigns heckman_designs(const Dataset& data) {
    if (data.instruments.cols() == 0) {
        throw ConfigError("heckman: a selection instrument Z is required");
    }
    // Collinearity guard: Z may not appear in both equations.
    for (int j = 0; j < data.instruments.cols(); ++j) {
        for (int c = 0; c < data.covariates.cols(); ++c) {
            VectorXd diff = data.instruments.col(j) - data.covariates.col(c);
            if (diff.allFinite() && diff.cwiseAbs().maxCoeff() < 1e-12) {
                throw ConfigError("heckman: instrument column duplicated among outcome covariates");
            }
        }
    }

    HeckmanDesigns d;
    const auto sel_rows = selected_rows(data);
    const int n = data.n();
    const int p = static_cast<int>(data.covariates.cols());
    const int q = static_cast<int>(data.instruments.cols());

    d.outcome_design = design_with_intercept(data.covariates, sel_rows);
    d.outcome = subset(data.outcome, sel_rows);

    d.sel_design_all.resize(n, 1 + p + q);
    d.sel_design_all.col(0).setOnes();
    d.sel_design_all.middleCols(1, p) = data.covariates;
    d.sel_design_all.rightCols(q) = data.instruments;

    std::vector<int> uns_rows;
    for (int i = 0; i < n; ++i) {
        if (data.selection[i] == 0) uns_rows.push_back(i);
    }
    d.sel_design_sel.resize(sel_rows.size(), 1 + p + q);
    for (std::size_t r = 0; r < sel_rows.size(); ++r) d.sel_design_sel.row(r) = d.sel_design_all.row(sel_rows[r]);
    d.sel_design_uns.resize(uns_rows.size(), 1 + p + q);
    for (std::size_t r = 0; r < uns_rows.size(); ++r) d.sel_design_uns.row(r) = d.sel_design_all.row(uns_rows[r]);

    d.outcome_names = with_intercept(data.covariate_names);
    d.sel_names.push_back("sel:(intercept)");
    for (const auto& nm : data.covariate_names) d.sel_names.push_back("sel:" + nm);
    for (const auto& nm : data.instrument_names) d.sel_names.push_back("sel:" + nm);
    return d;
}

// Negative log-likelihood of the bivariate-normal selection model and its
// gradient in the packed parametrization (beta, gamma, log sigma, atanh rho).
struct HeckmanLikelihood {
    const HeckmanDesigns& d;
    int p_out, p_sel;
    bool fix_rho;

    explicit HeckmanLikelihood(const HeckmanDesigns& designs, bool fix_rho_zero = false)
        : d(designs),
          p_out(static_cast<int>(designs.outcome_design.cols())),
          p_sel(static_cast<int>(designs.sel_design_all.cols())),
          fix_rho(fix_rho_zero) {}

    int dim() const { return p_out + p_sel + (fix_rho ? 1 : 2); }

    double value(const VectorXd& theta) const {
        return eval(theta, nullptr);
    }

    VectorXd gradient(const VectorXd& theta) const {
        VectorXd g(dim());
        eval(theta, &g);
        return g;
    }

    double eval(const VectorXd& theta, VectorXd* grad) const {
        const VectorXd beta = theta.head(p_out);
        const VectorXd gamma = theta.segment(p_out, p_sel);
        const double log_sigma = theta[p_out + p_sel];
        const double zeta = fix_rho ? 0.0 : theta[p_out + p_sel + 1];
        const double sigma = std::exp(log_sigma);
        const double rho = std::tanh(zeta);
        const double s2 = 1.0 - rho * rho;
        const double s = std::sqrt(std::max(s2, 1e-14));

        const VectorXd u = (d.outcome - d.outcome_design * beta) / sigma;
        const VectorXd w1 = d.sel_design_sel * gamma;
        const VectorXd w0 = d.sel_design_uns * gamma;

        double nll = 0.0;
        VectorXd du, dw1, dw0;
        if (grad) {
            du.resize(u.size());
            dw1.resize(w1.size());
            dw0.resize(w0.size());
        }
        double d_logsigma = 0.0, d_zeta = 0.0;

        for (int i = 0; i < u.size(); ++i) {
            const double v = (w1[i] + rho * u[i]) / s;
            nll -= normal_log_pdf(u[i]) - log_sigma + normal_log_cdf(v);
            if (grad) {
                const double h = normal_hazard_lower(v);  // phi(v)/Phi(v)
                // d nll / d u and d nll / d w (selected rows)
                du[i] = u[i] - h * rho / s;
                dw1[i] = -h / s;
                d_logsigma += 1.0 - u[i] * u[i] + h * rho * u[i] / s;
                d_zeta -= h * (u[i] * s + (w1[i] + rho * u[i]) * rho / s);
            }
        }
        for (int i = 0; i < w0.size(); ++i) {
            nll -= normal_log_cdf(-w0[i]);
            if (grad) dw0[i] = normal_hazard_lower(-w0[i]);
        }

        if (grad) {
            grad->resize(dim());
            grad->head(p_out) = -d.outcome_design.transpose() * du / sigma;
            grad->segment(p_out, p_sel) =
                d.sel_design_sel.transpose() * dw1 + d.sel_design_uns.transpose() * dw0;
            (*grad)[p_out + p_sel] = d_logsigma;
            if (!fix_rho) (*grad)[p_out + p_sel + 1] = d_zeta;
        }
        return nll;
    }
};

inline FitResult ols_fallback_all_selected(const Dataset& data, const std::string& tag) {
    auto fit = fit_ols(data, selected_rows(data));
    fit.method_tag = tag;
    fit.warnings.push_back(
        "all rows selected: inverse Mills column is constant and was dropped; estimates equal OLS");
    return fit;
}

}  // namespace detail

struct HeckmanTwoStepResult {
    FitResult fit;              // beta plus the Mills coefficient sigma12/sigma2
    HeckmanParams start;        // start values for the MLE
    VectorXd packed_start;      // (beta, gamma, log sigma, atanh rho)
};

/// Heckman's two-step estimator: probit selection model, then OLS of the
/// outcome on covariates and the inverse Mills ratio over the selected rows.
/// Second-stage standard errors are naive and the result is used mainly as an
/// MLE starting point.
inline HeckmanTwoStepResult heckman_two_step(const Dataset& data) {
    HeckmanTwoStepResult out;
    if (data.n_selected() == data.n()) {
        out.fit = detail::ols_fallback_all_selected(data, "heckman_two_step");
        const int p_sel = 1 + static_cast<int>(data.covariates.cols() + data.instruments.cols());
        out.start.beta = out.fit.estimates;
        out.start.gamma = VectorXd::Zero(p_sel);
        out.start.gamma[0] = 3.0;
        out.start.sigma1 = 1.0;
        out.start.rho = 0.0;
        out.packed_start.resize(out.start.beta.size() + p_sel + 2);
        out.packed_start << out.start.beta, out.start.gamma, 0.0, 0.0;
        return out;
    }
    const auto d = detail::heckman_designs(data);
    const VectorXd r = data.selection.cast<double>();
    const GlmFit probit = glm_irls(d.sel_design_all, r, Family::probit, std::nullopt, &d.sel_names);

    const auto sel_rows = detail::selected_rows(data);
    VectorXd mills(sel_rows.size());
    VectorXd w_sel(sel_rows.size());
    for (std::size_t k = 0; k < sel_rows.size(); ++k) {
        const double w = probit.eta[sel_rows[k]];
        w_sel[k] = w;
        mills[k] = normal_hazard_lower(w);  // phi(w)/Phi(w)
    }

    const int p_out = static_cast<int>(d.outcome_design.cols());
    const double mills_sd = std::sqrt(
        (mills.array() - mills.mean()).square().sum() / std::max<int>(1, mills.size() - 1));

    FitResult fit;
    VectorXd beta_start;
    double mills_coef = 0.0;
    if (mills_sd < 1e-8) {
        fit = detail::ols_fallback_all_selected(data, "heckman_two_step");
        beta_start = fit.estimates;
    } else {
        MatrixXd augmented(d.outcome_design.rows(), p_out + 1);
        augmented.leftCols(p_out) = d.outcome_design;
        augmented.col(p_out) = mills;
        auto names = d.outcome_names;
        names.push_back("mills");
        const auto ls = least_squares(augmented, d.outcome, std::nullopt, &names);
        fit = detail::from_ls(ls, names, "heckman_two_step", static_cast<int>(sel_rows.size()),
                              false);
        fit.warnings.push_back("second-stage standard errors are naive");
        beta_start = ls.coef.head(p_out);
        mills_coef = ls.coef[p_out];
    }

    // Residual-based start for (sigma, rho).
    const VectorXd resid = d.outcome - d.outcome_design * beta_start -
                           (mills_sd < 1e-8 ? VectorXd::Zero(d.outcome.size())
                                            : VectorXd(mills * mills_coef));
    const VectorXd delta = mills.array() * (mills.array() + w_sel.array());
    double sigma2 = resid.squaredNorm() / resid.size() + delta.mean() * mills_coef * mills_coef;
    sigma2 = std::max(sigma2, 1e-8);
    const double sigma = std::sqrt(sigma2);
    const double rho = std::clamp(mills_coef / sigma, -0.95, 0.95);

    out.fit = fit;
    out.start.beta = beta_start;
    out.start.gamma = probit.coef;
    out.start.sigma1 = sigma;
    out.start.rho = rho;
    out.packed_start.resize(beta_start.size() + probit.coef.size() + 2);
    out.packed_start << beta_start, probit.coef, std::log(sigma), std::atanh(rho);
    return out;
}

/// Full-information MLE of the sample selection model; the estimator reported
/// as "heckman" everywhere. Covariance comes from the inverse numerical
/// Hessian in the unconstrained parametrization, mapped to the natural scale
/// by the delta method.
inline FitResult heckman_mle(const Dataset& data, const HeckmanOptions& options = {}) {
    if (data.n_selected() == data.n()) {
        auto fit = detail::ols_fallback_all_selected(data, "heckman");
        return fit;
    }
    if (data.n_selected() < data.covariates.cols() + 3) {
        throw DataError("heckman_mle: too few selected rows");
    }
    const auto d = detail::heckman_designs(data);
    const detail::HeckmanLikelihood lik(d, options.fix_rho);

    VectorXd start;
    if (options.start && options.start->size() == lik.dim()) {
        start = *options.start;
    } else {
        const auto two_step = heckman_two_step(data);
        start = two_step.packed_start.head(lik.dim());
    }

    OptimSettings settings = options.optim;
    auto result = minimize([&lik](const VectorXd& th) { return lik.value(th); },
                           [&lik](const VectorXd& th) { return lik.gradient(th); }, start,
                           settings);

    const int p_out = static_cast<int>(d.outcome_design.cols());
    const int p_sel = static_cast<int>(d.sel_design_all.cols());
    const double sigma = std::exp(result.argmin[p_out + p_sel]);
    const double zeta = options.fix_rho ? 0.0 : result.argmin[p_out + p_sel + 1];
    const double rho = std::tanh(zeta);

    FitResult fit;
    fit.names = d.outcome_names;
    for (const auto& nm : d.sel_names) fit.names.push_back(nm);
    fit.names.push_back("sigma");
    if (!options.fix_rho) fit.names.push_back("rho");
    fit.estimates.resize(lik.dim());
    if (options.fix_rho) {
        fit.estimates << result.argmin.head(p_out + p_sel), sigma;
    } else {
        fit.estimates << result.argmin.head(p_out + p_sel), sigma, rho;
    }
    fit.loglik = -result.objective_value;
    fit.method_tag = "heckman";
    fit.n_used = data.n();
    fit.converged = result.converged;
    if (!result.converged) fit.warnings.push_back("optimizer: " + result.note);
    if (std::abs(zeta) > 5.0) fit.warnings.push_back("rho at boundary (|atanh rho| > 5)");

    if (settings.compute_hessian && result.hessian.size() > 0) {
        Eigen::LDLT<MatrixXd> ldlt(result.hessian);
        MatrixXd cov_unc;
        if (ldlt.info() == Eigen::Success && ldlt.isPositive()) {
            cov_unc = ldlt.solve(MatrixXd::Identity(lik.dim(), lik.dim()));
        } else {
            cov_unc = result.hessian.completeOrthogonalDecomposition().pseudoInverse();
            fit.warnings.push_back("hessian not positive definite; pseudo-inverse covariance");
            fit.converged = false;
        }
        VectorXd jac = VectorXd::Ones(lik.dim());
        jac[p_out + p_sel] = sigma;  // d sigma / d log sigma
        if (!options.fix_rho) jac[p_out + p_sel + 1] = 1.0 - rho * rho;
        fit.covariance = jac.asDiagonal() * cov_unc * jac.asDiagonal();
        fit.fill_std_errors_from_covariance();
    } else {
        fit.covariance.resize(0, 0);
        fit.std_errors = VectorXd::Constant(lik.dim(), std::numeric_limits<double>::quiet_NaN());
    }
    return fit;
}

namespace detail {

// Negative log-likelihood of the bivariate probit with selection.
struct BinaryHeckmanLikelihood {
    const HeckmanDesigns& d;
    int p_out, p_sel;

    explicit BinaryHeckmanLikelihood(const HeckmanDesigns& designs)
        : d(designs),
          p_out(static_cast<int>(designs.outcome_design.cols())),
          p_sel(static_cast<int>(designs.sel_design_all.cols())) {}

    int dim() const { return p_out + p_sel + 1; }

    double eval(const VectorXd& theta, VectorXd* grad) const {
        const VectorXd beta = theta.head(p_out);
        const VectorXd gamma = theta.segment(p_out, p_sel);
        const double zeta = theta[p_out + p_sel];
        const double rho = std::tanh(zeta);
        const double drho_dzeta = 1.0 - rho * rho;

        const VectorXd sv = d.outcome_design * beta;
        const VectorXd w1 = d.sel_design_sel * gamma;
        const VectorXd w0 = d.sel_design_uns * gamma;

        double nll = 0.0;
        VectorXd ds, dw1, dw0;
        double d_zeta = 0.0;
        if (grad) {
            ds.setZero(sv.size());
            dw1.setZero(w1.size());
            dw0.setZero(w0.size());
        }

        for (int i = 0; i < sv.size(); ++i) {
            const bool y1 = d.outcome[i] > 0.5;
            const double a = y1 ? sv[i] : -sv[i];
            const double r = y1 ? rho : -rho;
            const auto cell = binormal_cdf_grad(a, w1[i], r);
            const double prob = std::max(cell.value, 1e-300);
            nll -= std::log(prob);
            if (grad) {
                const double sign = y1 ? 1.0 : -1.0;
                ds[i] = -sign * cell.da / prob;
                dw1[i] = -cell.db / prob;
                d_zeta -= sign * cell.drho / prob * drho_dzeta;
            }
        }
        for (int i = 0; i < w0.size(); ++i) {
            nll -= normal_log_cdf(-w0[i]);
            if (grad) dw0[i] = normal_hazard_lower(-w0[i]);
        }

        if (grad) {
            grad->resize(dim());
            grad->head(p_out) = d.outcome_design.transpose() * ds;
            grad->segment(p_out, p_sel) =
                d.sel_design_sel.transpose() * dw1 + d.sel_design_uns.transpose() * dw0;
            (*grad)[p_out + p_sel] = d_zeta;
        }
        return nll;
    }
};

}  // namespace detail

/// Probit-outcome selection model (bivariate probit with selection) for
/// binary outcomes; coefficients are reported on the natural probit scale.
inline FitResult heckman_binary_mle(const Dataset& data, const HeckmanOptions& options = {}) {
    for (int i = 0; i < data.n(); ++i) {
        if (data.selection[i] == 1 && data.outcome[i] != 0.0 && data.outcome[i] != 1.0) {
            throw DataError("heckman_binary_mle: outcome must be 0/1");
        }
    }
    if (data.n_selected() == data.n()) {
        auto fit = fit_probit(data);
        fit.method_tag = "heckman_binary";
        fit.warnings.push_back("all rows selected: selection model unidentified; probit fit returned");
        return fit;
    }
    const auto d = detail::heckman_designs(data);
    const detail::BinaryHeckmanLikelihood lik(d);

    VectorXd start(lik.dim());
    if (options.start && options.start->size() == lik.dim()) {
        start = *options.start;
    } else {
        const GlmFit outcome_probit = glm_irls(d.outcome_design, d.outcome, Family::probit);
        const GlmFit sel_probit =
            glm_irls(d.sel_design_all, data.selection.cast<double>(), Family::probit);
        start << outcome_probit.coef, sel_probit.coef, 0.0;
    }

    auto result = minimize([&lik](const VectorXd& th) { return lik.eval(th, nullptr); },
                           [&lik](const VectorXd& th) {
                               VectorXd g;
                               lik.eval(th, &g);
                               return g;
                           },
                           start, options.optim);

    const int p_out = static_cast<int>(d.outcome_design.cols());
    const int p_sel = static_cast<int>(d.sel_design_all.cols());
    const double zeta = result.argmin[p_out + p_sel];
    const double rho = std::tanh(zeta);

    FitResult fit;
    fit.names = d.outcome_names;
    for (const auto& nm : d.sel_names) fit.names.push_back(nm);
    fit.names.push_back("rho");
    fit.estimates.resize(lik.dim());
    fit.estimates << result.argmin.head(p_out + p_sel), rho;
    fit.loglik = -result.objective_value;
    fit.method_tag = "heckman_binary";
    fit.n_used = data.n();
    fit.converged = result.converged;
    if (!result.converged) fit.warnings.push_back("optimizer: " + result.note);
    if (std::abs(zeta) > 5.0) fit.warnings.push_back("rho at boundary (|atanh rho| > 5)");

    if (options.optim.compute_hessian && result.hessian.size() > 0) {
        Eigen::LDLT<MatrixXd> ldlt(result.hessian);
        MatrixXd cov_unc;
        if (ldlt.info() == Eigen::Success && ldlt.isPositive()) {
            cov_unc = ldlt.solve(MatrixXd::Identity(lik.dim(), lik.dim()));
        } else {
            cov_unc = result.hessian.completeOrthogonalDecomposition().pseudoInverse();
            fit.warnings.push_back("hessian not positive definite; pseudo-inverse covariance");
            fit.converged = false;
        }
        VectorXd jac = VectorXd::Ones(lik.dim());
        jac[p_out + p_sel] = 1.0 - rho * rho;
        fit.covariance = jac.asDiagonal() * cov_unc * jac.asDiagonal();
        fit.fill_std_errors_from_covariance();
    }
    return fit;
}

}  // namespace ivsel

#endif
