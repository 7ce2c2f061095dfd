#include "mpfit/qp.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

namespace mpfit {

void QpProblem::validate() const {
  const int n = dim();
  MPFIT_CHECK(H.rows() == n && H.cols() == n, "qp: H must be square");
  MPFIT_CHECK((H - H.transpose()).cwiseAbs().maxCoeff() <= 1e-12 *
                      std::max(1.0, H.cwiseAbs().maxCoeff()),
              "qp: H must be symmetric");
  MPFIT_CHECK(f.size() == n, "qp: f size mismatch");
  if (A_ineq.size() > 0) {
    MPFIT_CHECK(A_ineq.cols() == n && b_ineq.size() == A_ineq.rows(),
                "qp: inequality shape mismatch");
  }
  if (A_eq.size() > 0) {
    MPFIT_CHECK(A_eq.cols() == n && b_eq.size() == A_eq.rows(),
                "qp: equality shape mismatch");
  }
  MPFIT_CHECK(bounds.dim() == n, "qp: bounds dim mismatch");
  MPFIT_CHECK((bounds.lb.array() <= bounds.ub.array()).all(),
              "qp: lb must be <= ub");
}

const char* qp_status_name(QpStatus s) {
  switch (s) {
    case QpStatus::kOptimal: return "optimal";
    case QpStatus::kRelaxed: return "relaxed";
    case QpStatus::kUnbounded: return "unbounded";
    case QpStatus::kInfeasible: return "infeasible";
    case QpStatus::kMaxIter: return "max_iter";
  }
  return "?";
}

namespace {

// Internal dense form: min 0.5 x'Hx + f'x  s.t.  G x <= d, E x = e.
// Box rows are expanded into G. Row bookkeeping: rows [0, m_a) are caller
// inequality rows, then upper-bound rows, then lower-bound rows.
struct DenseQp {
  Mat H;
  Vec f;
  Mat G;
  Vec d;
  Mat E;
  Vec e;
  int m_a = 0;                 // caller inequality rows
  std::vector<int> ub_var, lb_var;  // variable index per bound row
};

DenseQp expand(const Mat& H, const Vec& f, const Mat& A, const Vec& b,
               const Mat& Aeq, const Vec& beq, const Box& box) {
  DenseQp q;
  q.H = H;
  q.f = f;
  q.E = Aeq;
  q.e = beq;
  q.m_a = static_cast<int>(A.rows());
  const int n = static_cast<int>(H.rows());
  std::vector<int> ubs, lbs;
  for (int i = 0; i < n; ++i) {
    if (std::isfinite(box.ub[i])) ubs.push_back(i);
    if (std::isfinite(box.lb[i])) lbs.push_back(i);
  }
  const int m = q.m_a + static_cast<int>(ubs.size() + lbs.size());
  q.G = Mat::Zero(m, n);
  q.d = Vec::Zero(m);
  if (q.m_a > 0) {
    q.G.topRows(q.m_a) = A;
    q.d.head(q.m_a) = b;
  }
  int at = q.m_a;
  for (int i : ubs) {
    q.G(at, i) = 1.0;
    q.d(at) = box.ub[i];
    q.ub_var.push_back(i);
    ++at;
  }
  for (int i : lbs) {
    q.G(at, i) = -1.0;
    q.d(at) = -box.lb[i];
    q.lb_var.push_back(i);
    ++at;
  }
  return q;
}

struct AsResult {
  Vec x;
  Vec lambda;  // per G row, zero off the working set
  Vec mu;      // per E row
  QpStatus status = QpStatus::kOptimal;
  int iterations = 0;
};

// Primal active-set method from a feasible starting point.
AsResult active_set(const DenseQp& q, const Vec& x_start) {
  const int n = static_cast<int>(q.H.rows());
  const int m = static_cast<int>(q.G.rows());
  const int meq = static_cast<int>(q.E.rows());

  AsResult res;
  res.x = x_start;
  res.lambda = Vec::Zero(m);
  res.mu = Vec::Zero(meq);

  std::vector<int> work;  // indices into G rows
  std::vector<char> in_work(m, 0);

  const int max_iter = 50 * (m + n) + 100;
  const double scale = std::max(1.0, q.H.cwiseAbs().maxCoeff() +
                                         q.f.cwiseAbs().maxCoeff());

  for (int iter = 0; iter < max_iter; ++iter) {
    res.iterations = iter + 1;
    const int k = static_cast<int>(work.size());
    const int dim = n + meq + k;
    Mat kkt = Mat::Zero(dim, dim);
    kkt.topLeftCorner(n, n) = q.H;
    for (int r = 0; r < meq; ++r) {
      kkt.block(n + r, 0, 1, n) = q.E.row(r);
      kkt.block(0, n + r, n, 1) = q.E.row(r).transpose();
    }
    for (int r = 0; r < k; ++r) {
      kkt.block(n + meq + r, 0, 1, n) = q.G.row(work[r]);
      kkt.block(0, n + meq + r, n, 1) = q.G.row(work[r]).transpose();
    }
    Vec rhs = Vec::Zero(dim);
    rhs.head(n) = -(q.H * res.x + q.f);
    if (meq > 0) rhs.segment(n, meq) = q.e - q.E * res.x;
    for (int r = 0; r < k; ++r)
      rhs(n + meq + r) = q.d(work[r]) - q.G.row(work[r]).dot(res.x);

    Vec sol;
    double reg = 0.0;
    for (int attempt = 0; attempt < 3; ++attempt) {
      Mat kkt_r = kkt;
      kkt_r.topLeftCorner(n, n) += reg * Mat::Identity(n, n);
      Eigen::FullPivLU<Mat> lu(kkt_r);
      sol = lu.solve(rhs);
      if ((kkt_r * sol - rhs).cwiseAbs().maxCoeff() <= 1e-8 * scale) break;
      reg = reg == 0.0 ? 1e-10 * scale : reg * 1e4;
    }
    Vec p = sol.head(n);

    if (p.cwiseAbs().maxCoeff() <=
        1e-11 * (1.0 + res.x.cwiseAbs().maxCoeff())) {
      // stationary on the working set; check multiplier signs
      res.mu = sol.segment(n, meq);
      double most_negative = -1e-9;
      int drop = -1;
      for (int r = 0; r < k; ++r) {
        const double lam = sol(n + meq + r);
        if (lam < most_negative) {
          most_negative = lam;
          drop = r;
        }
      }
      if (drop < 0) {
        res.lambda.setZero();
        for (int r = 0; r < k; ++r) res.lambda(work[r]) = sol(n + meq + r);
        res.status = QpStatus::kOptimal;
        return res;
      }
      in_work[work[drop]] = 0;
      work.erase(work.begin() + drop);
      continue;
    }

    // step along p to the nearest blocking constraint
    double alpha = 1.0;
    int blocking = -1;
    for (int r = 0; r < m; ++r) {
      if (in_work[r]) continue;
      const double gp = q.G.row(r).dot(p);
      if (gp <= 1e-13 * scale) continue;
      const double resid = q.d(r) - q.G.row(r).dot(res.x);
      const double a = std::max(resid, 0.0) / gp;
      if (a < alpha) {
        alpha = a;
        blocking = r;
      }
    }
    if (blocking < 0 && p.cwiseAbs().maxCoeff() > 1e12) {
      res.status = QpStatus::kUnbounded;
      return res;
    }
    res.x += alpha * p;
    if (blocking >= 0 && alpha < 1.0) {
      // keep the working-set rows linearly independent
      Mat cand(meq + static_cast<int>(work.size()) + 1, n);
      for (int r = 0; r < meq; ++r) cand.row(r) = q.E.row(r);
      for (size_t r = 0; r < work.size(); ++r)
        cand.row(meq + static_cast<int>(r)) = q.G.row(work[r]);
      cand.bottomRows(1) = q.G.row(blocking);
      Eigen::ColPivHouseholderQR<Mat> qr(cand.transpose());
      if (qr.rank() == cand.rows()) {
        work.push_back(blocking);
        in_work[blocking] = 1;
      }
    }
  }
  res.status = QpStatus::kMaxIter;
  return res;
}

// Feasible start for G x <= d, E x = e given box-feasible seed.
// Caller rows are relaxed through an internal scalar; box rows stay hard.
struct Phase1 {
  Vec x;
  bool feasible = false;
  double violation = 0.0;
};

Phase1 phase1(const Mat& A, const Vec& b, const Mat& Aeq, const Vec& beq,
              const Box& box) {
  const int n = box.dim();
  Phase1 out;
  Vec x0(n);
  for (int i = 0; i < n; ++i) {
    const double lo = box.lb[i], hi = box.ub[i];
    if (std::isfinite(lo) && std::isfinite(hi)) x0[i] = 0.5 * (lo + hi);
    else if (std::isfinite(lo)) x0[i] = lo;
    else if (std::isfinite(hi)) x0[i] = hi;
    else x0[i] = 0.0;
  }
  if (Aeq.rows() > 0) {
    // shift onto the affine subspace, then clip back into the box
    Vec corr = Aeq.completeOrthogonalDecomposition().solve(beq - Aeq * x0);
    x0 = box.clip(x0 + corr);
  }
  double viol = 0.0;
  if (A.rows() > 0) viol = std::max(0.0, (A * x0 - b).maxCoeff());
  if (Aeq.rows() > 0)
    viol = std::max(viol, (Aeq * x0 - beq).cwiseAbs().maxCoeff());
  if (viol <= 1e-10) {
    out.x = x0;
    out.feasible = true;
    return out;
  }

  // relax caller rows through t >= 0 and minimize t
  const int na = n + 1;
  Mat H = Mat::Zero(na, na);
  H(n, n) = 1.0;
  Vec f = Vec::Zero(na);
  f(n) = 1.0;
  Mat A2(A.rows(), na);
  A2 << A, Vec::Constant(A.rows(), -1.0);
  Mat E2;
  Vec e2;
  if (Aeq.rows() > 0) {
    E2.resize(Aeq.rows(), na);
    E2 << Aeq, Vec::Zero(Aeq.rows());
    e2 = beq;
  }
  Box box2(Vec(na), Vec(na));
  box2.lb << box.lb, 0.0;
  box2.ub << box.ub, kInf;
  DenseQp q = expand(H, f, A2, b, E2, e2, box2);
  Vec z0(na);
  z0 << x0, std::max(0.0, (A * x0 - b).maxCoeff()) + 1.0;
  AsResult r = active_set(q, z0);
  out.x = r.x.head(n);
  out.violation = std::max(0.0, r.x(n));
  if (Aeq.rows() > 0)
    out.violation = std::max(out.violation,
                             (Aeq * out.x - beq).cwiseAbs().maxCoeff());
  out.feasible = r.status == QpStatus::kOptimal && out.violation <= 1e-9;
  return out;
}

}  // namespace

QpResult solve_qp(const QpProblem& qp) {
  qp.validate();
  const int n = qp.dim();
  const int m_a = static_cast<int>(qp.A_ineq.rows());

  QpResult out;

  Mat H;
  Vec f;
  Mat A;
  Vec b;
  Box box;
  int nz = n;
  if (qp.slack) {
    nz = n + 1;
    H = Mat::Zero(nz, nz);
    H.topLeftCorner(n, n) = qp.H;
    H(n, n) = qp.slack->rho;
    f = Vec::Zero(nz);
    f.head(n) = qp.f;
    f(n) = qp.slack->rho;
    if (m_a > 0) {
      A.resize(m_a, nz);
      A << qp.A_ineq, Vec::Constant(m_a, -1.0);
      b = qp.b_ineq;
    } else {
      A.resize(0, nz);
      b.resize(0);
    }
    box.lb.resize(nz);
    box.ub.resize(nz);
    box.lb << qp.bounds.lb, 0.0;
    box.ub << qp.bounds.ub, kInf;
  } else {
    H = qp.H;
    f = qp.f;
    A = qp.A_ineq;
    b = qp.b_ineq;
    box = qp.bounds;
  }
  Mat Aeq = qp.A_eq;
  if (qp.slack && Aeq.rows() > 0) {
    Mat tmp(Aeq.rows(), nz);
    tmp << qp.A_eq, Vec::Zero(Aeq.rows());
    Aeq = tmp;
  }

  Phase1 start = phase1(A, b, Aeq, qp.b_eq, box);
  if (!start.feasible) {
    out.status = QpStatus::kInfeasible;
    out.x = start.x.head(n);
    out.kkt_residual = start.violation;
    out.objective = 0.5 * out.x.dot(qp.H * out.x) + qp.f.dot(out.x);
    out.ineq_mult = Vec::Zero(m_a);
    out.lb_mult = Vec::Zero(n);
    out.ub_mult = Vec::Zero(n);
    return out;
  }

  DenseQp dense = expand(H, f, A, b, Aeq, qp.b_eq, box);
  AsResult as = active_set(dense, start.x);
  out.iterations = as.iterations;
  out.x = as.x.head(n);
  out.slack_value = qp.slack ? as.x(n) : 0.0;
  out.objective = 0.5 * out.x.dot(qp.H * out.x) + qp.f.dot(out.x);

  // map multipliers back to caller rows / bounds
  out.ineq_mult = as.lambda.head(m_a);
  out.lb_mult = Vec::Zero(n);
  out.ub_mult = Vec::Zero(n);
  for (size_t r = 0; r < dense.ub_var.size(); ++r) {
    const int var = dense.ub_var[r];
    if (var < n) out.ub_mult(var) = as.lambda(dense.m_a + static_cast<int>(r));
  }
  const int lb_base = dense.m_a + static_cast<int>(dense.ub_var.size());
  for (size_t r = 0; r < dense.lb_var.size(); ++r) {
    const int var = dense.lb_var[r];
    if (var < n) out.lb_mult(var) = as.lambda(lb_base + static_cast<int>(r));
  }

  // KKT residual against the (possibly augmented) data
  double resid = 0.0;
  {
    Vec stat = dense.H * as.x + dense.f + dense.G.transpose() * as.lambda;
    if (dense.E.rows() > 0) stat += dense.E.transpose() * as.mu;
    resid = stat.cwiseAbs().maxCoeff();
    if (dense.G.rows() > 0) {
      Vec slackv = dense.G * as.x - dense.d;
      resid = std::max(resid, slackv.maxCoeff());
      resid = std::max(resid,
                       as.lambda.cwiseProduct(slackv).cwiseAbs().maxCoeff());
    }
    if (dense.E.rows() > 0)
      resid = std::max(resid, (dense.E * as.x - qp.b_eq).cwiseAbs().maxCoeff());
  }
  out.kkt_residual = resid;

  if (as.status == QpStatus::kOptimal) {
    out.status = (qp.slack && out.slack_value > 1e-6) ? QpStatus::kRelaxed
                                                      : QpStatus::kOptimal;
  } else {
    out.status = as.status;
  }
  return out;
}

}  // namespace mpfit
