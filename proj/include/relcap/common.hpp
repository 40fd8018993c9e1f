#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>

namespace relcap {

template <class Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

template <class Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

using Rng = std::mt19937_64;

/// Bad input: malformed files, shape mismatches, contract violations.
/// The CLI maps this to exit code 1.
struct ValidationError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Numerical failure: divergence, NaN gradients, collapsed mixture fits.
/// The CLI maps this to exit code 2.
struct NumericError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

inline std::string shape_str(Eigen::Index rows, Eigen::Index cols) {
    return "[" + std::to_string(rows) + "x" + std::to_string(cols) + "]";
}

} // namespace relcap
