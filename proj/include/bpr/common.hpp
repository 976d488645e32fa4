#pragma once
// Shared numeric types, error classes and record keys.

#include <Eigen/Dense>

#include <compare>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace bpr {

using Matrix = Eigen::MatrixXd;
using RowVector = Eigen::RowVectorXd;
using FloatMatrix = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Index = Eigen::Index;

// Bad user input: malformed files, invalid configs, bad arguments.
class ValidationError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Binary container could not be decoded.
class FormatError : public ValidationError {
public:
    using ValidationError::ValidationError;
};

// Numerical failure during computation (non-finite values, divergence).
class NumericError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// One reading of one passage by one subject.
struct RecordKey {
    std::string passage_id;
    std::string subject_id;

    auto operator<=>(const RecordKey&) const = default;
    bool operator==(const RecordKey&) const = default;
};

}  // namespace bpr
