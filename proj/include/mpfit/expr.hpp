#pragma once

#include <memory>
#include <string>
#include <vector>

#include "mpfit/common.hpp"

namespace mpfit {

/// Scalar expression tree over decision vector x and parameter vector p.
/// Supported ops: +, -, *, / (n-ary + and *), tanh, exp, log, sqrt, and
/// dot(a,b) where a, b name the whole vectors x or p. Gradients with respect
/// to x are exact (forward accumulation).
class Expr;
using ExprPtr = std::shared_ptr<const Expr>;

class Expr {
 public:
  enum class Kind {
    kConst, kVarX, kVarP, kDot,
    kAdd, kSub, kMul, kDiv,
    kNeg, kTanh, kExp, kLog, kSqrt
  };

  static ExprPtr constant(double v);
  static ExprPtr x(int index);
  static ExprPtr p(int index);
  /// dot of the full vectors; each side is 'x' or 'p'.
  static ExprPtr dot(char a, char b);
  static ExprPtr add(std::vector<ExprPtr> terms);
  static ExprPtr sub(ExprPtr a, ExprPtr b);
  static ExprPtr mul(std::vector<ExprPtr> factors);
  static ExprPtr div(ExprPtr a, ExprPtr b);
  static ExprPtr neg(ExprPtr a);
  static ExprPtr unary(Kind k, ExprPtr a);

  double eval(const Vec& x, const Vec& p) const;
  /// Value plus gradient w.r.t. x written into `grad` (resized to n_x).
  double eval_grad_x(const Vec& x, const Vec& p, Vec& grad) const;

  std::string to_string() const;
  /// Parses the textual form produced by to_string (s-expressions, leaves
  /// `x@i`, `p@i`, numeric constants, `(dot x p)` etc).
  static ExprPtr parse(const std::string& text);

  Kind kind() const { return kind_; }

 private:
  Expr(Kind k) : kind_(k) {}

  Kind kind_;
  double value_ = 0.0;          // kConst
  int index_ = 0;               // kVarX / kVarP
  char dot_a_ = 'x', dot_b_ = 'x';  // kDot
  std::vector<ExprPtr> args_;
};

}  // namespace mpfit
