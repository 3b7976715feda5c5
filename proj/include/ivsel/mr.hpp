#ifndef IVSEL_MR_HPP
#define IVSEL_MR_HPP

#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "ivsel/heckman.hpp"
#include "ivsel/rng.hpp"
#include "ivsel/ttw.hpp"

namespace ivsel {

/// Per-variant association estimates with the exposure and the outcome.
struct SummaryStats {
    std::vector<std::string> variant;
    VectorXd bx, sx, by, sy;
    std::string provenance;

    int k() const { return static_cast<int>(bx.size()); }

    void validate() const {
        const int kk = k();
        if (kk < 1) throw DataError("summary stats: need at least one variant");
        if (sx.size() != kk || by.size() != kk || sy.size() != kk ||
            static_cast<int>(variant.size()) != kk) {
            throw DataError("summary stats: column lengths differ");
        }
        if ((sx.array() <= 0.0).any() || (sy.array() <= 0.0).any()) {
            throw DataError("summary stats: standard errors must be positive");
        }
    }
};

struct CausalEstimate {
    double theta = std::numeric_limits<double>::quiet_NaN();
    double se = std::numeric_limits<double>::quiet_NaN();
    std::pair<double, double> ci95{std::numeric_limits<double>::quiet_NaN(),
                                   std::numeric_limits<double>::quiet_NaN()};
    std::string method_tag;
    std::optional<int> n_bootstrap;
    bool converged = true;
    std::vector<std::string> warnings;

    void finalize() { ci95 = {theta - kZ975 * se, theta + kZ975 * se}; }
};

/// Wald ratio with the second-order standard error.
inline CausalEstimate wald_ratio(double bx, double sx, double by, double sy) {
    if (bx == 0.0) throw NumericError("wald_ratio: exposure association is zero");
    CausalEstimate est;
    est.theta = by / bx;
    est.se = std::sqrt(sy * sy / (bx * bx) + by * by * sx * sx / (bx * bx * bx * bx));
    est.method_tag = "wald";
    if (std::abs(bx) < 2.0 * sx) {
        est.warnings.push_back("weak denominator: |bx| < 2 sx");
    }
    est.finalize();
    return est;
}

/// Inverse-variance weighted combination, first-order standard error.
inline CausalEstimate ivw(const SummaryStats& stats) {
    stats.validate();
    double num = 0.0, den = 0.0;
    for (int j = 0; j < stats.k(); ++j) {
        const double w = 1.0 / (stats.sy[j] * stats.sy[j]);
        num += stats.bx[j] * stats.by[j] * w;
        den += stats.bx[j] * stats.bx[j] * w;
    }
    if (den <= 0.0) throw NumericError("ivw: zero exposure associations");
    CausalEstimate est;
    est.theta = num / den;
    est.se = 1.0 / std::sqrt(den);
    est.method_tag = "ivw";
    est.finalize();
    return est;
}

enum class Adjuster { cca, ipw, heckman, ttw, oracle };

inline const char* adjuster_name(Adjuster a) {
    switch (a) {
        case Adjuster::cca: return "cca";
        case Adjuster::ipw: return "ipw";
        case Adjuster::heckman: return "heckman";
        case Adjuster::ttw: return "ttw";
        case Adjuster::oracle: return "oracle";
    }
    return "?";
}

inline Adjuster adjuster_from_string(const std::string& s) {
    if (s == "cca") return Adjuster::cca;
    if (s == "ipw") return Adjuster::ipw;
    if (s == "heckman") return Adjuster::heckman;
    if (s == "ttw") return Adjuster::ttw;
    if (s == "oracle") return Adjuster::oracle;
    throw ConfigError("unknown adjuster: " + s);
}

enum class MrVariable { exposure, outcome };

struct Association {
    double b = std::numeric_limits<double>::quiet_NaN();
    double s = std::numeric_limits<double>::quiet_NaN();
    bool converged = false;
};

namespace detail {

/// Working dataset for one variant-target regression: the target becomes the
/// working outcome, the variant (plus optional conditioning variants) the
/// working covariates.
inline Dataset variant_regression_data(const Dataset& data, MrVariable variable, int variant_col,
                                       const std::vector<int>& extra_cols) {
    if (variant_col < 0 || variant_col >= data.variants.cols()) {
        throw DataError("adjusted_association: variant column out of range");
    }
    if (!data.variants.col(variant_col).allFinite()) {
        throw DataError("adjusted_association: variant column has missing values");
    }
    Dataset work;
    const int n = data.n();
    work.covariates.resize(n, 1 + extra_cols.size());
    work.covariates.col(0) = data.variants.col(variant_col);
    work.covariate_names.push_back(data.variant_names.empty()
                                       ? "g" + std::to_string(variant_col + 1)
                                       : data.variant_names[variant_col]);
    for (std::size_t e = 0; e < extra_cols.size(); ++e) {
        work.covariates.col(1 + e) = data.variants.col(extra_cols[e]);
        work.covariate_names.push_back(data.variant_names.empty()
                                           ? "g" + std::to_string(extra_cols[e] + 1)
                                           : data.variant_names[extra_cols[e]]);
    }
    work.instruments = data.instruments;
    work.instrument_names = data.instrument_names;
    work.selection = data.selection;

    const bool target_missing =
        variable == MrVariable::exposure ? data.exposure_missing : data.outcome_missing;
    if (variable == MrVariable::exposure) {
        work.outcome = data.covariates.col(0);
        if (data.has_full_covariates()) work.outcome_full = data.covariates_full.col(0);
    } else {
        work.outcome = data.outcome;
        if (data.has_full_outcome()) work.outcome_full = data.outcome_full;
    }
    work.outcome_missing = target_missing;
    if (!target_missing && work.outcome_full.size() == 0) work.outcome_full = work.outcome;
    return work;
}

inline Association association_from_fit(const FitResult& fit) {
    Association a;
    a.b = fit.estimates[1];
    a.s = fit.std_errors.size() > 1 ? fit.std_errors[1] : std::numeric_limits<double>::quiet_NaN();
    a.converged = fit.converged && std::isfinite(a.b) && std::isfinite(a.s);
    return a;
}

}  // namespace detail

/// Univariate association of the chosen variable with one variant, adjusted
/// for selection with the requested method. When the target variable has no
/// missing values every adjuster falls through to plain OLS.
inline Association adjusted_association(const Dataset& data, MrVariable variable, int variant_col,
                                        Adjuster adjuster,
                                        const std::vector<int>& condition_on = {}) {
    Dataset work = detail::variant_regression_data(data, variable, variant_col, condition_on);
    if (!work.outcome_missing) {
        return detail::association_from_fit(fit_ols(work));
    }
    switch (adjuster) {
        case Adjuster::oracle:
            return detail::association_from_fit(fit_oracle(work, Family::linear));
        case Adjuster::cca:
            return detail::association_from_fit(fit_cca(work, Family::linear));
        case Adjuster::ipw:
            return detail::association_from_fit(fit_ipw(work, Family::linear));
        case Adjuster::heckman: {
            if (work.instruments.cols() == 0) {
                throw ConfigError("adjusted_association: heckman requires a selection instrument");
            }
            return detail::association_from_fit(heckman_mle(work));
        }
        case Adjuster::ttw: {
            if (work.instruments.cols() == 0) {
                throw ConfigError("adjusted_association: ttw requires a selection instrument");
            }
            return detail::association_from_fit(ttw_linear(work));
        }
    }
    throw ConfigError("adjusted_association: unknown adjuster");
}

/// Selection-adjusted per-variant summary statistics, exposure side from
/// data_x and outcome side from data_y (two-sample).
inline SummaryStats selection_adjusted_summary_stats(const Dataset& data_x, const Dataset& data_y,
                                                     Adjuster adjuster) {
    if (data_x.variants.cols() != data_y.variants.cols()) {
        throw DataError("summary stats: variant columns differ between samples");
    }
    if (!data_x.variant_names.empty() && !data_y.variant_names.empty() &&
        data_x.variant_names != data_y.variant_names) {
        throw DataError("summary stats: variant names differ between samples");
    }
    const int K = static_cast<int>(data_x.variants.cols());
    if (K < 1) throw DataError("summary stats: no variants");
    SummaryStats stats;
    stats.bx.resize(K);
    stats.sx.resize(K);
    stats.by.resize(K);
    stats.sy.resize(K);
    stats.provenance = adjuster_name(adjuster);
    for (int j = 0; j < K; ++j) {
        stats.variant.push_back(data_x.variant_names.empty() ? "g" + std::to_string(j + 1)
                                                             : data_x.variant_names[j]);
        const auto ax = adjusted_association(data_x, MrVariable::exposure, j, adjuster);
        const auto ay = adjusted_association(data_y, MrVariable::outcome, j, adjuster);
        if (!ax.converged || !ay.converged) {
            throw NumericError("summary stats: adjusted fit did not converge for variant " +
                               stats.variant.back());
        }
        stats.bx[j] = ax.b;
        stats.sx[j] = ax.s;
        stats.by[j] = ay.b;
        stats.sy[j] = ay.s;
    }
    return stats;
}

/// One-sample variant: both sides computed on the same dataset. Carries a
/// sample-overlap warning in the provenance tag.
inline SummaryStats selection_adjusted_summary_stats(const Dataset& data, Adjuster adjuster) {
    auto stats = selection_adjusted_summary_stats(data, data, adjuster);
    stats.provenance += " (one-sample: sample overlap may bias IVW with weak instruments)";
    return stats;
}

struct TslsOptions {
    int n_bootstrap = 100;
    OptimSettings optim;
};

namespace detail {

inline std::vector<int> complete_rows(const Dataset& data) {
    std::vector<int> rows;
    for (int i = 0; i < data.n(); ++i) {
        bool ok = !std::isnan(data.outcome[i]) && data.covariates.row(i).allFinite();
        if (ok) rows.push_back(i);
    }
    return rows;
}

struct ClosedFormTsls {
    double theta;
    double se;
};

/// Textbook 2SLS of outcome on (1, exposure) instrumented by (1, G), with the
/// first-stage-aware variance.
inline ClosedFormTsls tsls_closed_form(const MatrixXd& variants, const VectorXd& exposure,
                                       const VectorXd& outcome, const std::vector<int>& rows,
                                       const VectorXd* weights = nullptr) {
    const int n = static_cast<int>(rows.size());
    const int K = static_cast<int>(variants.cols());
    if (n < K + 3) throw DataError("tsls: too few rows");
    MatrixXd Zm(n, K + 1), W(n, 2);
    VectorXd y(n), w = VectorXd::Ones(n);
    for (int r = 0; r < n; ++r) {
        Zm(r, 0) = 1.0;
        Zm.row(r).tail(K) = variants.row(rows[r]);
        W(r, 0) = 1.0;
        W(r, 1) = exposure[rows[r]];
        y[r] = outcome[rows[r]];
        if (weights) w[r] = (*weights)[r];
    }
    const MatrixXd Zw = w.asDiagonal() * Zm;
    const MatrixXd ztz = Zm.transpose() * Zw;
    Eigen::LDLT<MatrixXd> ldlt(ztz);
    if (ldlt.info() != Eigen::Success) throw SingularDesignError("tsls: instrument matrix singular");
    const MatrixXd ztw = Zw.transpose() * W;
    const MatrixXd wpw = ztw.transpose() * ldlt.solve(ztw);  // W' P W
    const VectorXd zty = Zw.transpose() * y;
    Eigen::LDLT<MatrixXd> wpw_ldlt(wpw);
    if (wpw_ldlt.info() != Eigen::Success) throw SingularDesignError("tsls: projected design singular");
    const VectorXd coef = wpw_ldlt.solve(ztw.transpose() * ldlt.solve(zty));
    const VectorXd resid = y - W * coef;
    const double sigma2 = (w.array() * resid.array().square()).sum() / (w.sum() - 1.0);
    const MatrixXd cov = sigma2 * wpw_ldlt.solve(MatrixXd::Identity(2, 2));
    return {coef[1], std::sqrt(cov(1, 1))};
}

inline VectorXd tsls_first_stage_ols(const MatrixXd& g_design, const VectorXd& exposure,
                                     const std::vector<int>& rows) {
    MatrixXd D(rows.size(), g_design.cols());
    VectorXd y(rows.size());
    for (std::size_t r = 0; r < rows.size(); ++r) {
        D.row(r) = g_design.row(rows[r]);
        y[r] = exposure[rows[r]];
    }
    return least_squares(D, y).coef;
}

/// Heckman/TTW-adjusted 2SLS point estimate: the stage with missing data is
/// replaced by the adjusted regression, the other stage stays least squares.
inline std::pair<double, bool> tsls_adjusted_point(const Dataset& data, Adjuster adjuster,
                                                   const OptimSettings& optim) {
    const int n = data.n();
    const int K = static_cast<int>(data.variants.cols());

    // First stage: exposure on all variants jointly.
    VectorXd first_coef;
    bool ok = true;
    MatrixXd g_design(n, K + 1);
    g_design.col(0).setOnes();
    g_design.rightCols(K) = data.variants;
    if (data.exposure_missing) {
        Dataset first;
        first.covariates = data.variants;
        first.variant_names.clear();
        first.covariate_names.assign(data.variant_names.begin(), data.variant_names.end());
        first.outcome = data.covariates.col(0);
        first.outcome_missing = true;
        first.instruments = data.instruments;
        first.instrument_names = data.instrument_names;
        first.selection = data.selection;
        if (data.has_full_covariates()) first.outcome_full = data.covariates_full.col(0);
        FitResult fit;
        if (adjuster == Adjuster::heckman) {
            HeckmanOptions ho;
            ho.optim = optim;
            fit = heckman_mle(first, ho);
        } else {
            TtwOptions to;
            to.optim = optim;
            fit = ttw_linear(first, to);
        }
        ok = fit.converged;
        first_coef = fit.estimates.head(K + 1);
    } else {
        std::vector<int> rows(n);
        for (int i = 0; i < n; ++i) rows[i] = i;
        first_coef = tsls_first_stage_ols(g_design, data.covariates.col(0), rows);
    }
    const VectorXd fitted = g_design * first_coef;

    // Second stage: outcome on fitted exposure.
    if (data.outcome_missing) {
        Dataset second;
        second.covariates = fitted;
        second.covariate_names = {"xhat"};
        second.outcome = data.outcome;
        second.outcome_missing = true;
        second.instruments = data.instruments;
        second.instrument_names = data.instrument_names;
        second.selection = data.selection;
        if (data.has_full_outcome()) second.outcome_full = data.outcome_full;
        FitResult fit;
        if (adjuster == Adjuster::heckman) {
            HeckmanOptions ho;
            ho.optim = optim;
            fit = heckman_mle(second, ho);
        } else {
            TtwOptions to;
            to.optim = optim;
            fit = ttw_linear(second, to);
        }
        return {fit.estimates[1], ok && fit.converged};
    }
    MatrixXd D(n, 2);
    D.col(0).setOnes();
    D.col(1) = fitted;
    const auto ls = least_squares(D, data.outcome);
    return {ls.coef[1], ok};
}

inline Dataset resample(const Dataset& data, RngStream& stream) {
    const int n = data.n();
    Dataset out = data;
    std::vector<int> idx(n);
    for (int i = 0; i < n; ++i) {
        idx[i] = static_cast<int>(stream.uniform() * n);
        if (idx[i] >= n) idx[i] = n - 1;
    }
    for (int i = 0; i < n; ++i) {
        out.covariates.row(i) = data.covariates.row(idx[i]);
        out.outcome[i] = data.outcome[idx[i]];
        out.instruments.row(i) = data.instruments.row(idx[i]);
        if (data.variants.cols() > 0) out.variants.row(i) = data.variants.row(idx[i]);
        out.selection[i] = data.selection[idx[i]];
        if (data.has_full_outcome()) out.outcome_full[i] = data.outcome_full[idx[i]];
        if (data.has_full_covariates()) out.covariates_full.row(i) = data.covariates_full.row(idx[i]);
    }
    return out;
}

}  // namespace detail

/// Two-stage least squares with selection adjustment. Heckman/TTW replace the
/// stage that has missing data and take bootstrap standard errors (individuals
/// resampled with replacement before any missingness filtering); cca, ipw and
/// oracle use the closed form with the first-stage-aware variance.
inline CausalEstimate tsls(const Dataset& data, Adjuster adjuster, RngStream stream,
                           const TslsOptions& options = {}) {
    if (data.variants.cols() < 1) throw ConfigError("tsls: needs at least one instrument");
    CausalEstimate est;
    est.method_tag = std::string("tsls_") + adjuster_name(adjuster);

    if (adjuster == Adjuster::cca || adjuster == Adjuster::oracle || adjuster == Adjuster::ipw) {
        if (adjuster == Adjuster::oracle) {
            const VectorXd x = data.exposure_missing ? VectorXd(data.covariates_full.col(0))
                                                     : VectorXd(data.covariates.col(0));
            const VectorXd y = data.outcome_missing ? data.outcome_full : data.outcome;
            std::vector<int> rows(data.n());
            for (int i = 0; i < data.n(); ++i) rows[i] = i;
            const auto cf = detail::tsls_closed_form(data.variants, x, y, rows);
            est.theta = cf.theta;
            est.se = cf.se;
        } else {
            const auto rows = detail::complete_rows(data);
            VectorXd x(data.n());
            x = data.covariates.col(0);
            if (adjuster == Adjuster::cca) {
                const auto cf = detail::tsls_closed_form(data.variants, x, data.outcome, rows);
                est.theta = cf.theta;
                est.se = cf.se;
            } else {
                // IPW: weights from a logistic model for R on the variants and
                // any fully observed target variable.
                const int n = data.n();
                MatrixXd wdesign(n, data.variants.cols() + 1 +
                                        (data.exposure_missing ? 0 : 1) +
                                        (data.outcome_missing ? 0 : 1));
                int col = 0;
                wdesign.col(col++).setOnes();
                wdesign.middleCols(col, data.variants.cols()) = data.variants;
                col += data.variants.cols();
                if (!data.exposure_missing) wdesign.col(col++) = data.covariates.col(0);
                if (!data.outcome_missing) wdesign.col(col++) = data.outcome;
                const GlmFit sel = glm_irls(wdesign, data.selection.cast<double>(), Family::logistic);
                VectorXd w(rows.size());
                for (std::size_t r = 0; r < rows.size(); ++r) {
                    const double pi = expit(sel.eta[rows[r]]);
                    if (pi < 1e-6) throw UnstableWeightsError("tsls: propensity below 1e-6");
                    w[r] = 1.0 / pi;
                }
                const auto cf = detail::tsls_closed_form(data.variants, x, data.outcome, rows, &w);
                est.theta = cf.theta;
                est.se = cf.se;
            }
        }
        est.finalize();
        return est;
    }

    // Heckman / TTW point estimate plus bootstrap SE.
    OptimSettings point_optim = options.optim;
    point_optim.compute_hessian = false;
    const auto [theta, ok] = detail::tsls_adjusted_point(data, adjuster, point_optim);
    est.theta = theta;
    est.converged = ok;
    est.n_bootstrap = options.n_bootstrap;

    std::vector<double> draws;
    int failures = 0;
    for (int b = 0; b < options.n_bootstrap; ++b) {
        RngStream sub = stream.substream(b + 1);
        Dataset boot = detail::resample(data, sub);
        try {
            const auto [tb, okb] = detail::tsls_adjusted_point(boot, adjuster, point_optim);
            if (okb && std::isfinite(tb)) {
                draws.push_back(tb);
            } else {
                ++failures;
            }
        } catch (const Error&) {
            ++failures;
        }
    }
    if (draws.size() >= 2) {
        double mean = 0.0;
        for (double v : draws) mean += v;
        mean /= draws.size();
        double ss = 0.0;
        for (double v : draws) ss += (v - mean) * (v - mean);
        est.se = std::sqrt(ss / (draws.size() - 1));
    }
    if (failures > options.n_bootstrap / 5) {
        est.warnings.push_back("bootstrap SE unreliable: " + std::to_string(failures) + "/" +
                               std::to_string(options.n_bootstrap) + " replicates failed");
    }
    est.finalize();
    return est;
}

}  // namespace ivsel

#endif
