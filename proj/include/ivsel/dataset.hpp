#ifndef IVSEL_DATASET_HPP
#define IVSEL_DATASET_HPP

#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "ivsel/common.hpp"

namespace ivsel {

/// Columnar observations for one analysis sample. Covariates hold the
/// regression covariates (or the MR exposure); variants hold genetic
/// instruments for inference; instruments hold the selection instrument(s) Z.
/// Values governed by the selection indicator are NaN wherever R = 0; the
/// *_full companions keep the pre-masking copies for oracle fits when the
/// data came from a simulation.
struct Dataset {
    MatrixXd covariates;              // n x p
    VectorXd outcome;                 // n
    MatrixXd instruments;             // n x q (Z)
    MatrixXd variants;                // n x K (G), may have zero columns
    VectorXi selection;               // n, 0/1
    bool exposure_missing = false;    // R governs the covariate columns
    bool outcome_missing = false;     // R governs the outcome

    VectorXd outcome_full;            // empty unless available
    MatrixXd covariates_full;

    std::vector<std::string> covariate_names;
    std::vector<std::string> instrument_names;
    std::vector<std::string> variant_names;

    int n() const { return static_cast<int>(selection.size()); }
    int n_selected() const { return static_cast<int>((selection.array() == 1).count()); }
    bool has_full_outcome() const { return outcome_full.size() == selection.size(); }
    bool has_full_covariates() const { return covariates_full.rows() == selection.size(); }

    void default_names() {
        covariate_names.resize(covariates.cols());
        for (int j = 0; j < covariates.cols(); ++j) covariate_names[j] = "x" + std::to_string(j + 1);
        instrument_names.resize(instruments.cols());
        for (int j = 0; j < instruments.cols(); ++j) instrument_names[j] = "z" + std::to_string(j + 1);
        variant_names.resize(variants.cols());
        for (int j = 0; j < variants.cols(); ++j) variant_names[j] = "g" + std::to_string(j + 1);
    }

    /// Missingness markers must agree with the selection indicator: R = 0
    /// exactly when every governed value is NaN, R = 1 when none is.
    void validate() const {
        const int rows = n();
        if (covariates.rows() != rows || outcome.size() != rows || instruments.rows() != rows) {
            throw DataError("dataset: column lengths differ");
        }
        if (variants.rows() != 0 && variants.rows() != rows) {
            throw DataError("dataset: variant column length differs");
        }
        if (!instruments.allFinite()) {
            throw DataError("dataset: selection instruments must be fully observed");
        }
        for (int i = 0; i < rows; ++i) {
            if (selection[i] != 0 && selection[i] != 1) {
                throw DataError("dataset: selection indicator must be 0/1");
            }
            const bool selected = selection[i] == 1;
            if (outcome_missing) {
                if (selected == std::isnan(outcome[i])) {
                    throw DataError("dataset: outcome missingness disagrees with R at row " +
                                    std::to_string(i));
                }
            } else if (std::isnan(outcome[i])) {
                throw DataError("dataset: unexpected missing outcome at row " + std::to_string(i));
            }
            if (exposure_missing) {
                const bool any_nan = covariates.row(i).array().isNaN().any();
                const bool all_nan = covariates.row(i).array().isNaN().all();
                if (selected ? any_nan : !all_nan) {
                    throw DataError("dataset: covariate missingness disagrees with R at row " +
                                    std::to_string(i));
                }
            } else if (!covariates.row(i).allFinite()) {
                throw DataError("dataset: unexpected missing covariate at row " + std::to_string(i));
            }
        }
    }
};

/// Estimates plus uncertainty for any fitted model in the library.
struct FitResult {
    std::vector<std::string> names;
    VectorXd estimates;
    VectorXd std_errors;
    MatrixXd covariance;
    std::optional<double> loglik;
    bool converged = false;
    std::string method_tag;
    int n_used = 0;
    std::vector<std::string> warnings;

    double estimate(const std::string& name) const { return estimates[index_of(name)]; }
    double std_error(const std::string& name) const { return std_errors[index_of(name)]; }

    std::pair<double, double> ci95(int j) const {
        return {estimates[j] - kZ975 * std_errors[j], estimates[j] + kZ975 * std_errors[j]};
    }

    int index_of(const std::string& name) const {
        for (std::size_t j = 0; j < names.size(); ++j) {
            if (names[j] == name) return static_cast<int>(j);
        }
        throw DataError("fit result: no parameter named " + name);
    }

    void fill_std_errors_from_covariance() {
        std_errors.resize(covariance.rows());
        for (int j = 0; j < covariance.rows(); ++j) {
            const double v = covariance(j, j);
            std_errors[j] = v > 0.0 ? std::sqrt(v) : std::numeric_limits<double>::quiet_NaN();
        }
    }
};

namespace detail {

inline std::vector<std::string> with_intercept(const std::vector<std::string>& names) {
    std::vector<std::string> out;
    out.reserve(names.size() + 1);
    out.push_back("(intercept)");
    out.insert(out.end(), names.begin(), names.end());
    return out;
}

}  // namespace detail

}  // namespace ivsel

#endif
