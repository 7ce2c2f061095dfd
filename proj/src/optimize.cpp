#include "mpfit/optimize.hpp"

#include <cmath>
#include <deque>

namespace mpfit {

void OptimizerConfig::validate() const {
  MPFIT_CHECK(adam.learning_rate > 0.0, "adam: learning_rate must be > 0");
  MPFIT_CHECK(lbfgs.memory >= 1, "lbfgs: memory must be >= 1");
  MPFIT_CHECK(0.0 < lbfgs.wolfe_c1 && lbfgs.wolfe_c1 < lbfgs.wolfe_c2 &&
                  lbfgs.wolfe_c2 < 1.0,
              "lbfgs: need 0 < c1 < c2 < 1");
  MPFIT_CHECK(restarts >= 1, "restarts must be >= 1");
}

namespace {

void check_finite(double f, const Vec& g, const char* who) {
  if (!std::isfinite(f))
    throw NumericalError(std::string(who) + ": non-finite objective value");
  if (!g.allFinite())
    throw NumericalError(std::string(who) + ": non-finite gradient");
}

}  // namespace

OptResult adam(const ObjectiveFn& objective, const Vec& x0,
               const AdamConfig& cfg) {
  MPFIT_CHECK(cfg.learning_rate > 0.0, "adam: learning_rate must be > 0");
  Vec x = x0;
  Vec m = Vec::Zero(x.size());
  Vec v = Vec::Zero(x.size());
  Vec g(x.size());
  double f = 0.0;
  for (int t = 1; t <= cfg.epochs; ++t) {
    f = objective(x, &g);
    check_finite(f, g, "adam");
    m = cfg.beta1 * m + (1.0 - cfg.beta1) * g;
    v = cfg.beta2 * v + (1.0 - cfg.beta2) * g.cwiseProduct(g);
    const double bc1 = 1.0 - std::pow(cfg.beta1, t);
    const double bc2 = 1.0 - std::pow(cfg.beta2, t);
    x.array() -= cfg.learning_rate * (m.array() / bc1) /
                 ((v.array() / bc2).sqrt() + cfg.eps);
  }
  OptResult res;
  res.value = objective(x, &g);
  check_finite(res.value, g, "adam");
  res.x = std::move(x);
  res.gradient_norm = g.norm();
  res.iterations = cfg.epochs;
  res.status = OptStatus::kMaxIters;
  return res;
}

namespace {

// Strong-Wolfe line search (bracket + zoom). Returns the accepted step, or
// 0 on failure; f/g are updated to the accepted point when successful.
struct LineSearchResult {
  double alpha = 0.0;
  double f = 0.0;
  Vec x, g;
  bool ok = false;
  int evals = 0;
};

LineSearchResult wolfe_search(const ObjectiveFn& objective, const Vec& x0,
                              double f0, const Vec& g0, const Vec& d,
                              const LbfgsConfig& cfg) {
  LineSearchResult out;
  const double dg0 = g0.dot(d);
  if (!(dg0 < 0.0)) return out;  // not a descent direction

  auto eval = [&](double a, double& f, Vec& x, Vec& g, double& dg) -> bool {
    x = x0 + a * d;
    f = objective(x, &g);
    ++out.evals;
    if (!std::isfinite(f) || !g.allFinite()) return false;
    dg = g.dot(d);
    return true;
  };

  double a_prev = 0.0, f_prev = f0, dg_prev = dg0;
  double a = 1.0;
  Vec x(x0.size()), g(x0.size());
  double f = 0.0, dg = 0.0;

  double lo = 0.0, hi = 0.0, f_lo = f0, dg_lo = dg0;
  bool bracketed = false;

  for (int it = 0; it < cfg.max_line_search_steps && !bracketed; ++it) {
    if (!eval(a, f, x, g, dg)) {
      a *= 0.5;  // back off from a non-finite region
      continue;
    }
    if (f > f0 + cfg.wolfe_c1 * a * dg0 || (it > 0 && f >= f_prev)) {
      lo = a_prev; hi = a; f_lo = f_prev; dg_lo = dg_prev;
      bracketed = true;
      break;
    }
    if (std::abs(dg) <= -cfg.wolfe_c2 * dg0) {
      out.alpha = a; out.f = f; out.x = std::move(x); out.g = std::move(g);
      out.ok = true;
      return out;
    }
    if (dg >= 0.0) {
      lo = a; hi = a_prev; f_lo = f; dg_lo = dg;
      bracketed = true;
      break;
    }
    a_prev = a; f_prev = f; dg_prev = dg;
    a *= 2.0;
  }
  if (!bracketed) return out;

  // zoom
  for (int it = 0; it < cfg.max_line_search_steps; ++it) {
    a = 0.5 * (lo + hi);
    if (!eval(a, f, x, g, dg)) {
      hi = a;
      continue;
    }
    if (f > f0 + cfg.wolfe_c1 * a * dg0 || f >= f_lo) {
      hi = a;
    } else {
      if (std::abs(dg) <= -cfg.wolfe_c2 * dg0) {
        out.alpha = a; out.f = f; out.x = std::move(x); out.g = std::move(g);
        out.ok = true;
        return out;
      }
      if (dg * (hi - lo) >= 0.0) hi = lo;
      lo = a; f_lo = f; dg_lo = dg;
    }
  }
  // fall back to the best sufficient-decrease point found, if any
  if (f_lo < f0 && lo > 0.0) {
    double f2, dg2;
    if (eval(lo, f2, x, g, dg2)) {
      out.alpha = lo; out.f = f2; out.x = std::move(x); out.g = std::move(g);
      out.ok = true;
    }
  }
  return out;
}

}  // namespace

OptResult lbfgs(const ObjectiveFn& objective, const Vec& x0,
                const LbfgsConfig& cfg) {
  Vec x = x0;
  Vec g(x.size());
  double f = objective(x, &g);
  check_finite(f, g, "lbfgs");

  OptResult res;
  res.x = x;
  res.value = f;
  res.gradient_norm = g.norm();
  res.status = OptStatus::kMaxIters;
  if (res.gradient_norm <= cfg.gradient_tolerance || cfg.max_iters == 0) {
    res.status = res.gradient_norm <= cfg.gradient_tolerance
                     ? OptStatus::kConverged
                     : OptStatus::kMaxIters;
    return res;
  }

  std::deque<Vec> s_hist, y_hist;
  std::deque<double> rho_hist;
  int iter = 0;
  for (; iter < cfg.max_iters; ++iter) {
    // two-loop recursion
    Vec q = g;
    std::vector<double> alpha(s_hist.size());
    for (int i = static_cast<int>(s_hist.size()) - 1; i >= 0; --i) {
      alpha[i] = rho_hist[i] * s_hist[i].dot(q);
      q -= alpha[i] * y_hist[i];
    }
    if (!s_hist.empty()) {
      const double gamma = s_hist.back().dot(y_hist.back()) /
                           y_hist.back().squaredNorm();
      q *= gamma;
    }
    for (size_t i = 0; i < s_hist.size(); ++i) {
      const double beta = rho_hist[i] * y_hist[i].dot(q);
      q += (alpha[i] - beta) * s_hist[i];
    }
    Vec d = -q;

    auto ls = wolfe_search(objective, x, f, g, d, cfg);
    if (!ls.ok) {
      // retry along steepest descent once before giving up
      d = -g;
      ls = wolfe_search(objective, x, f, g, d, cfg);
      if (!ls.ok) {
        res.status = OptStatus::kLineSearchFailed;
        break;
      }
      s_hist.clear(); y_hist.clear(); rho_hist.clear();
    }

    Vec s = ls.x - x;
    Vec y = ls.g - g;
    x = std::move(ls.x);
    f = ls.f;
    g = std::move(ls.g);

    const double sy = s.dot(y);
    if (sy > 1e-10 * s.norm() * y.norm()) {
      s_hist.push_back(std::move(s));
      y_hist.push_back(std::move(y));
      rho_hist.push_back(1.0 / sy);
      if (static_cast<int>(s_hist.size()) > cfg.memory) {
        s_hist.pop_front(); y_hist.pop_front(); rho_hist.pop_front();
      }
    }

    if (f < res.value) {
      res.x = x;
      res.value = f;
    }
    res.gradient_norm = g.norm();
    if (res.gradient_norm <= cfg.gradient_tolerance) {
      res.x = x;
      res.value = f;
      res.status = OptStatus::kConverged;
      ++iter;
      break;
    }
  }
  res.iterations = iter;
  res.gradient_norm = std::min(res.gradient_norm, g.norm());
  return res;
}

OptResult lbfgs_box(const ObjectiveFn& objective, const Vec& x0,
                    const Box& box, const LbfgsConfig& cfg) {
  MPFIT_CHECK(box.dim() == x0.size(), "lbfgs_box: box dim mismatch");
  Vec x = box.clip(x0);
  Vec g(x.size());
  double f = objective(x, &g);
  check_finite(f, g, "lbfgs_box");

  OptResult res;
  res.x = x;
  res.value = f;
  res.status = OptStatus::kMaxIters;

  auto projected_gradient = [&](const Vec& xx, const Vec& gg) {
    Vec pg = gg;
    for (int i = 0; i < xx.size(); ++i) {
      if (xx[i] <= box.lb[i] && gg[i] > 0.0) pg[i] = 0.0;
      if (xx[i] >= box.ub[i] && gg[i] < 0.0) pg[i] = 0.0;
    }
    return pg;
  };

  auto active_mask = [&](const Vec& xx, const Vec& gg) {
    std::vector<bool> act(xx.size(), false);
    const double tol = 1e-12;
    for (int i = 0; i < xx.size(); ++i) {
      if (xx[i] <= box.lb[i] + tol && gg[i] > 0.0) act[i] = true;
      if (xx[i] >= box.ub[i] - tol && gg[i] < 0.0) act[i] = true;
    }
    return act;
  };

  std::deque<Vec> s_hist, y_hist;
  std::deque<double> rho_hist;
  std::vector<bool> prev_act;

  int iter = 0;
  for (; iter < cfg.max_iters; ++iter) {
    Vec pg = projected_gradient(x, g);
    res.gradient_norm = pg.norm();
    if (res.gradient_norm <= cfg.gradient_tolerance) {
      res.status = OptStatus::kConverged;
      break;
    }

    auto act = active_mask(x, g);
    if (act != prev_act) {
      s_hist.clear(); y_hist.clear(); rho_hist.clear();
      prev_act = act;
    }

    // two-loop recursion on the free subspace
    Vec q = pg;
    std::vector<double> alpha(s_hist.size());
    for (int i = static_cast<int>(s_hist.size()) - 1; i >= 0; --i) {
      alpha[i] = rho_hist[i] * s_hist[i].dot(q);
      q -= alpha[i] * y_hist[i];
    }
    if (!s_hist.empty()) {
      q *= s_hist.back().dot(y_hist.back()) / y_hist.back().squaredNorm();
    }
    for (size_t i = 0; i < s_hist.size(); ++i) {
      const double beta = rho_hist[i] * y_hist[i].dot(q);
      q += (alpha[i] - beta) * s_hist[i];
    }
    Vec d = -q;
    for (int i = 0; i < d.size(); ++i)
      if (act[i]) d[i] = 0.0;
    if (d.dot(g) >= 0.0) d = -pg;  // safeguard

    // backtracking Armijo along the projection arc
    double a = 1.0;
    bool accepted = false;
    Vec x_new, g_new(x.size());
    double f_new = 0.0;
    for (int ls = 0; ls < 40; ++ls) {
      x_new = box.clip(x + a * d);
      Vec step = x_new - x;
      if (step.norm() < 1e-18) break;
      f_new = objective(x_new, &g_new);
      if (std::isfinite(f_new) && g_new.allFinite() &&
          f_new <= f + 1e-4 * g.dot(step)) {
        accepted = true;
        break;
      }
      a *= 0.5;
    }
    if (!accepted) {
      res.status = OptStatus::kLineSearchFailed;
      break;
    }

    Vec s = x_new - x;
    Vec y = g_new - g;
    x = std::move(x_new);
    f = f_new;
    g = g_new;
    const double sy = s.dot(y);
    if (sy > 1e-12 * s.norm() * y.norm()) {
      s_hist.push_back(std::move(s));
      y_hist.push_back(std::move(y));
      rho_hist.push_back(1.0 / sy);
      if (static_cast<int>(s_hist.size()) > cfg.memory) {
        s_hist.pop_front(); y_hist.pop_front(); rho_hist.pop_front();
      }
    }
    if (f < res.value) {
      res.x = x;
      res.value = f;
    }
  }
  if (res.status == OptStatus::kConverged || f <= res.value) {
    res.x = x;
    res.value = f;
  }
  res.iterations = iter;
  return res;
}

}  // namespace mpfit
