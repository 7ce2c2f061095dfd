#pragma once

#include <Eigen/Dense>
#include <limits>
#include <stdexcept>
#include <string>

namespace mpfit {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

constexpr const char* kVersion = "1.0.0";
constexpr double kInf = std::numeric_limits<double>::infinity();

/// Raised on invalid arguments, dimension mismatches, bad config keys.
class InvalidArgument : public std::runtime_error {
 public:
  explicit InvalidArgument(const std::string& msg) : std::runtime_error(msg) {}
};

/// Raised when a non-finite value is encountered during optimization.
class NumericalError : public std::runtime_error {
 public:
  explicit NumericalError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Raised on file I/O or format problems.
class IoError : public std::runtime_error {
 public:
  explicit IoError(const std::string& msg) : std::runtime_error(msg) {}
};

#define MPFIT_CHECK(cond, msg)                       \
  do {                                               \
    if (!(cond)) throw ::mpfit::InvalidArgument(msg); \
  } while (0)

/// Axis-aligned box, componentwise lower/upper bounds (may be +-inf).
struct Box {
  Vec lb;
  Vec ub;

  Box() = default;
  Box(Vec lo, Vec hi) : lb(std::move(lo)), ub(std::move(hi)) {}

  static Box unbounded(int n) {
    return Box(Vec::Constant(n, -kInf), Vec::Constant(n, kInf));
  }
  static Box uniform(int n, double lo, double hi) {
    return Box(Vec::Constant(n, lo), Vec::Constant(n, hi));
  }

  int dim() const { return static_cast<int>(lb.size()); }

  bool contains(const Vec& x, double tol = 0.0) const {
    return (x.array() >= lb.array() - tol).all() &&
           (x.array() <= ub.array() + tol).all();
  }

  Vec clip(const Vec& x) const {
    return x.cwiseMax(lb).cwiseMin(ub);
  }

  Box segment(int start, int len) const {
    return Box(lb.segment(start, len), ub.segment(start, len));
  }
};

}  // namespace mpfit
