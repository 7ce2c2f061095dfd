#pragma once

#include <optional>

#include "mpfit/common.hpp"

namespace mpfit {

/// Dense convex QP
///   min 0.5 x'Hx + f'x
///   s.t. A_ineq x <= b_ineq,  A_eq x = b_eq,  lb <= x <= ub
/// With slack enabled the inequality rows are jointly relaxed through one
/// scalar s >= 0:
///   min 0.5 x'Hx + f'x + 0.5 rho s^2 + rho s
///   s.t. A_ineq x <= b_ineq + s*1, bounds, s >= 0.
struct QpProblem {
  Mat H;
  Vec f;
  Mat A_ineq;  // may be 0 x n
  Vec b_ineq;
  Mat A_eq;  // may be 0 x n
  Vec b_eq;
  Box bounds;

  struct SlackOptions {
    double rho = 1e6;
  };
  std::optional<SlackOptions> slack;

  int dim() const { return static_cast<int>(H.rows()); }
  void validate() const;
};

enum class QpStatus { kOptimal, kRelaxed, kUnbounded, kInfeasible, kMaxIter };

const char* qp_status_name(QpStatus s);

struct QpResult {
  Vec x;
  double slack_value = 0.0;
  QpStatus status = QpStatus::kOptimal;
  double kkt_residual = 0.0;
  double objective = 0.0;  // 0.5 x'Hx + f'x (slack penalty excluded)
  Vec ineq_mult;           // one per A_ineq row
  Vec lb_mult, ub_mult;    // one per variable
  int iterations = 0;
};

/// Primal active-set solver. KKT residual (stationarity, primal feasibility,
/// complementarity) is reported against the original data.
QpResult solve_qp(const QpProblem& qp);

}  // namespace mpfit
