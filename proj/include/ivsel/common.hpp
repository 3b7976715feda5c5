#ifndef IVSEL_COMMON_HPP
#define IVSEL_COMMON_HPP

#include <stdexcept>
#include <string>

#include <Eigen/Dense>

namespace ivsel {

using Eigen::MatrixXd;
using Eigen::VectorXd;
using Eigen::VectorXi;

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Invalid configuration or distribution parameters.
struct ConfigError : Error {
    using Error::Error;
};

/// Malformed or inconsistent input data (CSV schema, missingness markers, ...).
struct DataError : Error {
    using Error::Error;
};

struct NumericError : Error {
    using Error::Error;
};

struct SingularDesignError : NumericError {
    using NumericError::NumericError;
};

struct SeparationError : NumericError {
    using NumericError::NumericError;
};

struct UnstableWeightsError : NumericError {
    using NumericError::NumericError;
};

// 97.5% normal quantile; every 95% interval in the library uses this constant.
inline constexpr double kZ975 = 1.959964;

}  // namespace ivsel

#endif
