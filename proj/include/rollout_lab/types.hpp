#ifndef ROLLOUT_LAB_TYPES_HPP
#define ROLLOUT_LAB_TYPES_HPP

#include <Eigen/Dense>

#include <stdexcept>
#include <string>

namespace rollout_lab {

using Index = Eigen::Index;

template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <typename Scalar>
using RowVector = Eigen::Matrix<Scalar, 1, Eigen::Dynamic>;

template <typename Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

using MatrixXd = Matrix<double>;
using RowVectorXd = RowVector<double>;

/// Failure categories. The CLI maps each one to a distinct exit code.
enum class ErrorCode {
  InvalidArgument,
  DimensionMismatch,
  InvariantViolation,
  NumericalFailure,
  Schema,
  Io,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what) : std::runtime_error(what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

inline const char* to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::InvalidArgument: return "invalid_argument";
    case ErrorCode::DimensionMismatch: return "dimension_mismatch";
    case ErrorCode::InvariantViolation: return "invariant_violation";
    case ErrorCode::NumericalFailure: return "numerical_failure";
    case ErrorCode::Schema: return "schema";
    case ErrorCode::Io: return "io";
  }
  return "unknown";
}

namespace tolerance {
inline constexpr double kRowSum = 1e-12;
inline constexpr double kImport = 1e-9;
inline constexpr double kDistributionSum = 1e-9;
inline constexpr double kNegativeClamp = 1e-15;
inline constexpr double kMonotone = 1e-9;
inline constexpr double kCollapse = 1e-3;
}  // namespace tolerance

}  // namespace rollout_lab

#endif  // ROLLOUT_LAB_TYPES_HPP
