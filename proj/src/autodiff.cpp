#include "mpfit/autodiff.hpp"

#include <cmath>
#include <utility>

#include "mpfit/mlp.hpp"

namespace mpfit::ad {

Var Tape::push(Mat value, std::function<void(Tape&)> back, bool requires_grad) {
  Node n;
  n.value = std::move(value);
  n.back = std::move(back);
  n.requires_grad = requires_grad;
  nodes_.push_back(std::move(n));
  return Var{static_cast<int>(nodes_.size()) - 1};
}

Var Tape::add(Var a, Var b) {
  MPFIT_CHECK(value(a).rows() == value(b).rows() &&
                  value(a).cols() == value(b).cols(),
              "add: shape mismatch");
  const bool rg = needs_grad(a) || needs_grad(b);
  Var out = push(value(a) + value(b), nullptr, rg);
  nodes_.back().back = [a, b, id = out.id](Tape& t) {
    const Mat& g = t.nodes_[id].adjoint;
    if (t.needs_grad(a)) t.adjoint(a) += g;
    if (t.needs_grad(b)) t.adjoint(b) += g;
  };
  return out;
}

Var Tape::sub(Var a, Var b) {
  MPFIT_CHECK(value(a).rows() == value(b).rows() &&
                  value(a).cols() == value(b).cols(),
              "sub: shape mismatch");
  const bool rg = needs_grad(a) || needs_grad(b);
  Var out = push(value(a) - value(b), nullptr, rg);
  nodes_.back().back = [a, b, id = out.id](Tape& t) {
    const Mat& g = t.nodes_[id].adjoint;
    if (t.needs_grad(a)) t.adjoint(a) += g;
    if (t.needs_grad(b)) t.adjoint(b) -= g;
  };
  return out;
}

Var Tape::scale(Var a, double s) {
  Var out = push(value(a) * s, nullptr, needs_grad(a));
  nodes_.back().back = [a, s, id = out.id](Tape& t) {
    if (t.needs_grad(a)) t.adjoint(a) += s * t.nodes_[id].adjoint;
  };
  return out;
}

Var Tape::add_const(Var a, double c) {
  Var out = push(value(a).array() + c, nullptr, needs_grad(a));
  nodes_.back().back = [a, id = out.id](Tape& t) {
    if (t.needs_grad(a)) t.adjoint(a) += t.nodes_[id].adjoint;
  };
  return out;
}

Var Tape::add_colwise(Var mat, Var col) {
  MPFIT_CHECK(value(mat).rows() == value(col).rows() && value(col).cols() == 1,
              "add_colwise: shape mismatch");
  Mat v = value(mat);
  v.colwise() += value(col).col(0);
  const bool rg = needs_grad(mat) || needs_grad(col);
  Var out = push(std::move(v), nullptr, rg);
  nodes_.back().back = [mat, col, id = out.id](Tape& t) {
    const Mat& g = t.nodes_[id].adjoint;
    if (t.needs_grad(mat)) t.adjoint(mat) += g;
    if (t.needs_grad(col)) t.adjoint(col) += g.rowwise().sum();
  };
  return out;
}

Var Tape::matmul(Var a, Var b) {
  MPFIT_CHECK(value(a).cols() == value(b).rows(), "matmul: inner dim mismatch");
  const bool rg = needs_grad(a) || needs_grad(b);
  Var out = push(value(a) * value(b), nullptr, rg);
  nodes_.back().back = [a, b, id = out.id](Tape& t) {
    const Mat& g = t.nodes_[id].adjoint;
    if (t.needs_grad(a)) t.adjoint(a).noalias() += g * t.value(b).transpose();
    if (t.needs_grad(b)) t.adjoint(b).noalias() += t.value(a).transpose() * g;
  };
  return out;
}

Var Tape::mul_elem(Var a, Var b) {
  MPFIT_CHECK(value(a).rows() == value(b).rows() &&
                  value(a).cols() == value(b).cols(),
              "mul_elem: shape mismatch");
  const bool rg = needs_grad(a) || needs_grad(b);
  Var out = push(value(a).cwiseProduct(value(b)), nullptr, rg);
  nodes_.back().back = [a, b, id = out.id](Tape& t) {
    const Mat& g = t.nodes_[id].adjoint;
    if (t.needs_grad(a)) t.adjoint(a) += g.cwiseProduct(t.value(b));
    if (t.needs_grad(b)) t.adjoint(b) += g.cwiseProduct(t.value(a));
  };
  return out;
}

Var Tape::square(Var a) {
  Var out = push(value(a).array().square(), nullptr, needs_grad(a));
  nodes_.back().back = [a, id = out.id](Tape& t) {
    if (t.needs_grad(a))
      t.adjoint(a).array() +=
          2.0 * t.nodes_[id].adjoint.array() * t.value(a).array();
  };
  return out;
}

Var Tape::abs(Var a) {
  Var out = push(value(a).array().abs(), nullptr, needs_grad(a));
  nodes_.back().back = [a, id = out.id](Tape& t) {
    if (!t.needs_grad(a)) return;
    t.adjoint(a).array() +=
        t.nodes_[id].adjoint.array() * t.value(a).array().sign();
  };
  return out;
}

Var Tape::pos_part(Var a) {
  Var out = push(value(a).array().max(0.0), nullptr, needs_grad(a));
  nodes_.back().back = [a, id = out.id](Tape& t) {
    if (!t.needs_grad(a)) return;
    t.adjoint(a).array() += t.nodes_[id].adjoint.array() *
                            (t.value(a).array() > 0.0).cast<double>();
  };
  return out;
}

Var Tape::sqrt_shift(Var a, double eps) {
  MPFIT_CHECK(eps > 0.0, "sqrt_shift: eps must be positive");
  Mat v = (value(a).array().square() + eps).sqrt();
  Var out = push(std::move(v), nullptr, needs_grad(a));
  nodes_.back().back = [a, id = out.id](Tape& t) {
    if (!t.needs_grad(a)) return;
    t.adjoint(a).array() += t.nodes_[id].adjoint.array() *
                            t.value(a).array() / t.nodes_[id].value.array();
  };
  return out;
}

Var Tape::tanh(Var a) {
  Var out = push(value(a).array().tanh(), nullptr, needs_grad(a));
  nodes_.back().back = [a, id = out.id](Tape& t) {
    if (!t.needs_grad(a)) return;
    t.adjoint(a).array() += t.nodes_[id].adjoint.array() *
                            (1.0 - t.nodes_[id].value.array().square());
  };
  return out;
}

Var Tape::activation(Var a, int act) {
  Mat v = apply_activation(value(a), static_cast<Activation>(act));
  Var out = push(std::move(v), nullptr, needs_grad(a));
  nodes_.back().back = [a, act, id = out.id](Tape& t) {
    if (!t.needs_grad(a)) return;
    Mat d = activation_derivative(t.value(a), static_cast<Activation>(act));
    t.adjoint(a).array() += t.nodes_[id].adjoint.array() * d.array();
  };
  return out;
}

Var Tape::sum_all(Var a) {
  Mat v(1, 1);
  v(0, 0) = value(a).sum();
  Var out = push(std::move(v), nullptr, needs_grad(a));
  nodes_.back().back = [a, id = out.id](Tape& t) {
    if (t.needs_grad(a))
      t.adjoint(a).array() += t.nodes_[id].adjoint(0, 0);
  };
  return out;
}

Var Tape::logsumexp_scaled(Var a, double gamma) {
  const Mat& x = value(a);
  const double m = gamma * x.maxCoeff();
  const double s = (gamma * x.array() - m).exp().sum();
  Mat v(1, 1);
  v(0, 0) = m + std::log(s);
  Var out = push(std::move(v), nullptr, needs_grad(a));
  nodes_.back().back = [a, gamma, m, s, id = out.id](Tape& t) {
    if (!t.needs_grad(a)) return;
    const double g = t.nodes_[id].adjoint(0, 0);
    t.adjoint(a).array() +=
        g * gamma * (gamma * t.value(a).array() - m).exp() / s;
  };
  return out;
}

Var Tape::rows(Var a, std::vector<int> idx) {
  const Mat& x = value(a);
  Mat v(static_cast<int>(idx.size()), x.cols());
  for (size_t r = 0; r < idx.size(); ++r) {
    MPFIT_CHECK(idx[r] >= 0 && idx[r] < x.rows(), "rows: index out of range");
    v.row(static_cast<int>(r)) = x.row(idx[r]);
  }
  Var out = push(std::move(v), nullptr, needs_grad(a));
  nodes_.back().back = [a, idx = std::move(idx), id = out.id](Tape& t) {
    if (!t.needs_grad(a)) return;
    const Mat& g = t.nodes_[id].adjoint;
    for (size_t r = 0; r < idx.size(); ++r)
      t.adjoint(a).row(idx[r]) += g.row(static_cast<int>(r));
  };
  return out;
}

Var Tape::vstack(const std::vector<Var>& parts) {
  MPFIT_CHECK(!parts.empty(), "vstack: empty");
  const auto cols = value(parts[0]).cols();
  int total = 0;
  bool rg = false;
  for (Var p : parts) {
    MPFIT_CHECK(value(p).cols() == cols, "vstack: column mismatch");
    total += static_cast<int>(value(p).rows());
    rg = rg || needs_grad(p);
  }
  Mat v(total, cols);
  int at = 0;
  for (Var p : parts) {
    const int r = static_cast<int>(value(p).rows());
    v.middleRows(at, r) = value(p);
    at += r;
  }
  Var out = push(std::move(v), nullptr, rg);
  nodes_.back().back = [parts, id = out.id](Tape& t) {
    const Mat& g = t.nodes_[id].adjoint;
    int at = 0;
    for (Var p : parts) {
      const int r = static_cast<int>(t.value(p).rows());
      if (t.needs_grad(p)) t.adjoint(p) += g.middleRows(at, r);
      at += r;
    }
  };
  return out;
}

Var Tape::reshape_slice(Var flat, int offset, int r, int c) {
  const Mat& x = value(flat);
  MPFIT_CHECK(x.cols() == 1 && offset >= 0 && offset + r * c <= x.rows(),
              "reshape_slice: out of range");
  using RowMajorMap =
      Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic,
                                     Eigen::RowMajor>>;
  Mat v = RowMajorMap(x.data() + offset, r, c);
  Var out = push(std::move(v), nullptr, needs_grad(flat));
  nodes_.back().back = [flat, offset, r, c, id = out.id](Tape& t) {
    if (!t.needs_grad(flat)) return;
    const Mat& g = t.nodes_[id].adjoint;
    Mat& ga = t.adjoint(flat);
    for (int i = 0; i < r; ++i)
      for (int j = 0; j < c; ++j) ga(offset + i * c + j, 0) += g(i, j);
  };
  return out;
}

Var Tape::saturate(Var a, const Vec& lo, const Vec& hi) {
  const Mat& x = value(a);
  MPFIT_CHECK(lo.size() == x.rows() && hi.size() == x.rows(),
              "saturate: bound size mismatch");
  Mat v = x;
  for (int i = 0; i < x.rows(); ++i) {
    if (!std::isfinite(lo[i]) || !std::isfinite(hi[i])) continue;
    const double mid = 0.5 * (lo[i] + hi[i]);
    const double half = 0.5 * (hi[i] - lo[i]);
    v.row(i) = mid + half * x.row(i).array().tanh();
  }
  Var out = push(std::move(v), nullptr, needs_grad(a));
  nodes_.back().back = [a, lo, hi, id = out.id](Tape& t) {
    if (!t.needs_grad(a)) return;
    const Mat& g = t.nodes_[id].adjoint;
    const Mat& x = t.value(a);
    Mat& ga = t.adjoint(a);
    for (int i = 0; i < x.rows(); ++i) {
      if (!std::isfinite(lo[i]) || !std::isfinite(hi[i])) {
        ga.row(i) += g.row(i);
        continue;
      }
      const double half = 0.5 * (hi[i] - lo[i]);
      ga.row(i).array() +=
          g.row(i).array() * half * (1.0 - x.row(i).array().tanh().square());
    }
  };
  return out;
}

Var Tape::custom(std::vector<Var> inputs, Mat value, Vjp vjp) {
  bool rg = false;
  for (Var v : inputs) rg = rg || needs_grad(v);
  Var out = push(std::move(value), nullptr, rg);
  nodes_.back().back = [inputs = std::move(inputs), vjp = std::move(vjp),
                        id = out.id](Tape& t) {
    vjp(t, t.nodes_[id].adjoint, inputs);
  };
  return out;
}

void Tape::backward(Var out) {
  MPFIT_CHECK(out.id >= 0 && out.id < static_cast<int>(nodes_.size()),
              "backward: bad output var");
  MPFIT_CHECK(value(out).rows() == 1 && value(out).cols() == 1,
              "backward: output must be scalar");
  if (!std::isfinite(value(out)(0, 0))) {
    // locate the first non-finite intermediate for the diagnostic
    for (size_t i = 0; i < nodes_.size(); ++i) {
      if (!nodes_[i].value.allFinite())
        throw NumericalError("non-finite intermediate value at node " +
                             std::to_string(i));
    }
    throw NumericalError("non-finite objective value");
  }
  for (auto& n : nodes_) n.adjoint = Mat::Zero(n.value.rows(), n.value.cols());
  nodes_[out.id].adjoint(0, 0) = 1.0;
  for (int i = out.id; i >= 0; --i) {
    if (nodes_[i].back && nodes_[i].requires_grad) nodes_[i].back(*this);
  }
}

GradResult value_and_grad(const std::function<Var(Tape&, Var)>& build,
                          const Vec& theta) {
  Tape tape;
  Var t = tape.leaf(theta);
  Var out = build(tape, t);
  GradResult res;
  res.value = tape.value(out)(0, 0);
  tape.backward(out);
  res.grad = tape.adjoint(t).col(0);
  return res;
}

Vec grad(const std::function<Var(Tape&, Var)>& build, const Vec& theta) {
  return value_and_grad(build, theta).grad;
}

}  // namespace mpfit::ad
