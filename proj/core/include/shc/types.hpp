#pragma once

#include <Eigen/Dense>

#include <stdexcept>
#include <string>

namespace shc {

using Index = Eigen::Index;
using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// Raised when a persisted file has the wrong magic, version or length.
class FormatError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Raised when shapes of otherwise valid objects do not agree at a use site.
class DimensionError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Raised when a Riccati step needs an inverse that does not exist.
class DegenerateScheduleError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Largest absolute entry of a matrix expression; 0 for empty input.
template <typename Derived>
double max_abs(const Eigen::MatrixBase<Derived>& m) {
    return m.size() == 0 ? 0.0 : m.cwiseAbs().maxCoeff();
}

/// max |VᵀV − I|, the orthonormality defect of the columns of v.
inline double orthonormality_defect(const Matrix& v) {
    if (v.cols() == 0) return 0.0;
    return max_abs(v.transpose() * v - Matrix::Identity(v.cols(), v.cols()));
}

}  // namespace shc
