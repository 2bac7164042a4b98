#pragma once

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>

#include <Eigen/Core>
#include <Eigen/Geometry>

namespace symplane {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

inline constexpr double kPi = 3.14159265358979323846;

inline constexpr double deg2rad(double d) { return d * kPi / 180.0; }
inline constexpr double rad2deg(double r) { return r * 180.0 / kPi; }

/// Base for all library failures. Runtime problems (I/O, degenerate
/// geometry, numerical breakdown) throw this directly.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Bad user input: malformed config, out-of-range parameters, wrong
/// dimensionality. The CLI maps this to exit code 2.
class ValidationError : public Error {
 public:
  using Error::Error;
};

/// Neumaier compensated accumulator.
struct CompensatedSum {
  double sum = 0.0;
  double carry = 0.0;

  void add(double v) {
    const double t = sum + v;
    if (std::abs(sum) >= std::abs(v)) {
      carry += (sum - t) + v;
    } else {
      carry += (v - t) + sum;
    }
    sum = t;
  }
  void add(const CompensatedSum& o) {
    add(o.sum);
    add(o.carry);
  }
  double value() const { return sum + carry; }
};

}  // namespace symplane
