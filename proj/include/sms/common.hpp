#ifndef SMS_COMMON_HPP
#define SMS_COMMON_HPP

#include <Eigen/Dense>

#include <numbers>
#include <stdexcept>
#include <string>

namespace sms {

using Vec3 = Eigen::Vector3d;
using Vec4 = Eigen::Vector4d;
using Vec6 = Eigen::Matrix<double, 6, 1>;
using Mat3 = Eigen::Matrix3d;
using Mat6 = Eigen::Matrix<double, 6, 6>;
using VecX = Eigen::VectorXd;
using MatX = Eigen::MatrixXd;
using Mat3X = Eigen::Matrix<double, 3, Eigen::Dynamic>;
using Mat6X = Eigen::Matrix<double, 6, Eigen::Dynamic>;

inline constexpr double kDegToRad = std::numbers::pi / 180.0;

/// Condition-number ceiling applied to H, the base momentum block and J*.
inline constexpr double kConditionLimit = 1e12;

class Error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

class InvalidStateError : public Error {
public:
  using Error::Error;
};

class SingularConfigurationError : public Error {
public:
  using Error::Error;
};

class ConditioningError : public Error {
public:
  using Error::Error;
};

class UnsupportedDimensionError : public Error {
public:
  using Error::Error;
};

class ControllerDivergenceError : public Error {
public:
  using Error::Error;
};

class ValidationError : public Error {
public:
  ValidationError(std::string field, const std::string &what)
      : Error(field + ": " + what), field_(std::move(field)) {}

  const std::string &field() const noexcept { return field_; }

private:
  std::string field_;
};

} // namespace sms

#endif // SMS_COMMON_HPP
