#pragma once

#include <complex>
#include <cstddef>
#include <stdexcept>
#include <string>

#include <Eigen/Dense>

namespace dcissim {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using CMatrix = Eigen::MatrixXcd;
using CVector = Eigen::VectorXcd;
using Complex = std::complex<double>;

inline constexpr double kPi = 3.14159265358979323846264338327950288;

// Base of every error thrown by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Operand shapes do not agree.
class DimensionError : public Error {
public:
    using Error::Error;
};

// A model or matrix required to be Schur stable is not.
class StabilityError : public Error {
public:
    using Error::Error;
};

// Data does not carry enough excitation for the requested estimate
// (rank-deficient regressors, PE failure, violated sample-count rules).
class ExcitationError : public Error {
public:
    using Error::Error;
};

// A numerical routine could not meet its contract (retry budget, conditioning).
class NumericalError : public Error {
public:
    using Error::Error;
};

namespace detail {

inline void require(bool cond, const std::string& what) {
    if (!cond) throw DimensionError(what);
}

inline Matrix symmetrize(const Matrix& m) { return 0.5 * (m + m.transpose()); }

}  // namespace detail

}  // namespace dcissim
