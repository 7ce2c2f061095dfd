#pragma once

#include <functional>
#include <vector>

#include "mpfit/common.hpp"

namespace mpfit::ad {

/// Handle to a node on a Tape.
struct Var {
  int id = -1;
};

/// Reverse-mode tape over dense matrices. Scalars are 1x1 matrices, vectors
/// one-column matrices. A fresh graph is built per objective evaluation;
/// backward() accumulates adjoints in reverse creation order.
///
/// Supported primitives: affine ops (matmul, add, column broadcast, row
/// selection, stacking, flat-parameter reshaping), elementwise activations,
/// square, |.| and max(.,0) with subgradient 0 at the kink, sqrt(x^2+eps),
/// shifted log-sum-exp, and user-supplied nodes with a custom vector-Jacobian
/// product.
class Tape {
 public:
  Var constant(Mat value) { return push(std::move(value), nullptr, false); }
  Var leaf(Mat value) { return push(std::move(value), nullptr, true); }

  const Mat& value(Var v) const { return nodes_[v.id].value; }
  Mat& adjoint(Var v) { return nodes_[v.id].adjoint; }

  Var add(Var a, Var b);
  Var sub(Var a, Var b);
  Var scale(Var a, double s);
  Var add_const(Var a, double c);
  /// mat (r x c) plus a column vector (r x 1) broadcast over columns.
  Var add_colwise(Var mat, Var col);
  Var matmul(Var a, Var b);
  Var mul_elem(Var a, Var b);

  Var square(Var a);
  Var abs(Var a);       // d/dx = sign(x), 0 at 0
  Var pos_part(Var a);  // max(x,0), subgradient 0 at 0
  Var sqrt_shift(Var a, double eps);  // sqrt(x^2 + eps)
  Var tanh(Var a);

  /// Elementwise activation by enum id shared with the MLP module.
  Var activation(Var a, int act);

  /// Sum of all entries -> 1x1.
  Var sum_all(Var a);
  /// log(sum over all entries of exp(gamma * a)) -> 1x1, max-shifted.
  Var logsumexp_scaled(Var a, double gamma);

  /// Rows of `a` selected by index, in order.
  Var rows(Var a, std::vector<int> idx);
  /// Vertical concatenation; all parts must share the column count.
  Var vstack(const std::vector<Var>& parts);
  /// Reshape a contiguous slice of a flat column vector into an r x c matrix
  /// stored row-major in the flat layout.
  Var reshape_slice(Var flat, int offset, int r, int c);

  /// Per-row affine squash onto [lo, hi] via tanh; rows with a non-finite
  /// bound pass through unchanged.
  Var saturate(Var a, const Vec& lo, const Vec& hi);

  using Vjp = std::function<void(Tape&, const Mat& out_adjoint,
                                 const std::vector<Var>& inputs)>;
  /// User node: `value` computed externally from the inputs' values; `vjp`
  /// must accumulate into the inputs' adjoints.
  Var custom(std::vector<Var> inputs, Mat value, Vjp vjp);

  /// Backpropagate from a scalar output. Throws NumericalError if the output
  /// value is non-finite (the offending intermediate is named if found).
  void backward(Var out);

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Mat value;
    Mat adjoint;
    std::function<void(Tape&)> back;
    bool requires_grad = false;
  };

  Var push(Mat value, std::function<void(Tape&)> back, bool requires_grad);
  bool needs_grad(Var v) const { return nodes_[v.id].requires_grad; }

  std::vector<Node> nodes_;
};

/// Value and gradient of a scalar objective expressed on a fresh tape.
/// `build` receives the tape and the flat parameter leaf and must return a
/// 1x1 output node.
struct GradResult {
  double value = 0.0;
  Vec grad;
};

GradResult value_and_grad(const std::function<Var(Tape&, Var)>& build,
                          const Vec& theta);

/// Gradient only (nn-core surface; matches central finite differences).
Vec grad(const std::function<Var(Tape&, Var)>& build, const Vec& theta);

}  // namespace mpfit::ad
