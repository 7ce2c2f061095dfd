#include "mpfit/expr.hpp"

#include <cmath>
#include <cstdio>
#include <sstream>

namespace mpfit {

namespace {
std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}
}  // namespace

ExprPtr Expr::constant(double v) {
  auto e = std::shared_ptr<Expr>(new Expr(Kind::kConst));
  e->value_ = v;
  return e;
}

ExprPtr Expr::x(int index) {
  auto e = std::shared_ptr<Expr>(new Expr(Kind::kVarX));
  e->index_ = index;
  return e;
}

ExprPtr Expr::p(int index) {
  auto e = std::shared_ptr<Expr>(new Expr(Kind::kVarP));
  e->index_ = index;
  return e;
}

ExprPtr Expr::dot(char a, char b) {
  MPFIT_CHECK((a == 'x' || a == 'p') && (b == 'x' || b == 'p'),
              "expr: dot sides must be x or p");
  auto e = std::shared_ptr<Expr>(new Expr(Kind::kDot));
  e->dot_a_ = a;
  e->dot_b_ = b;
  return e;
}

ExprPtr Expr::add(std::vector<ExprPtr> terms) {
  MPFIT_CHECK(!terms.empty(), "expr: empty sum");
  auto e = std::shared_ptr<Expr>(new Expr(Kind::kAdd));
  e->args_ = std::move(terms);
  return e;
}

ExprPtr Expr::sub(ExprPtr a, ExprPtr b) {
  auto e = std::shared_ptr<Expr>(new Expr(Kind::kSub));
  e->args_ = {std::move(a), std::move(b)};
  return e;
}

ExprPtr Expr::mul(std::vector<ExprPtr> factors) {
  MPFIT_CHECK(!factors.empty(), "expr: empty product");
  auto e = std::shared_ptr<Expr>(new Expr(Kind::kMul));
  e->args_ = std::move(factors);
  return e;
}

ExprPtr Expr::div(ExprPtr a, ExprPtr b) {
  auto e = std::shared_ptr<Expr>(new Expr(Kind::kDiv));
  e->args_ = {std::move(a), std::move(b)};
  return e;
}

ExprPtr Expr::neg(ExprPtr a) {
  auto e = std::shared_ptr<Expr>(new Expr(Kind::kNeg));
  e->args_ = {std::move(a)};
  return e;
}

ExprPtr Expr::unary(Kind k, ExprPtr a) {
  MPFIT_CHECK(k == Kind::kTanh || k == Kind::kExp || k == Kind::kLog ||
                  k == Kind::kSqrt || k == Kind::kNeg,
              "expr: not a unary op");
  auto e = std::shared_ptr<Expr>(new Expr(k));
  e->args_ = {std::move(a)};
  return e;
}

double Expr::eval(const Vec& x, const Vec& p) const {
  switch (kind_) {
    case Kind::kConst: return value_;
    case Kind::kVarX:
      MPFIT_CHECK(index_ < x.size(), "expr: x index out of range");
      return x[index_];
    case Kind::kVarP:
      MPFIT_CHECK(index_ < p.size(), "expr: p index out of range");
      return p[index_];
    case Kind::kDot: {
      const Vec& a = dot_a_ == 'x' ? x : p;
      const Vec& b = dot_b_ == 'x' ? x : p;
      return a.dot(b);
    }
    case Kind::kAdd: {
      double s = 0.0;
      for (const auto& a : args_) s += a->eval(x, p);
      return s;
    }
    case Kind::kSub: return args_[0]->eval(x, p) - args_[1]->eval(x, p);
    case Kind::kMul: {
      double s = 1.0;
      for (const auto& a : args_) s *= a->eval(x, p);
      return s;
    }
    case Kind::kDiv: return args_[0]->eval(x, p) / args_[1]->eval(x, p);
    case Kind::kNeg: return -args_[0]->eval(x, p);
    case Kind::kTanh: return std::tanh(args_[0]->eval(x, p));
    case Kind::kExp: return std::exp(args_[0]->eval(x, p));
    case Kind::kLog: return std::log(args_[0]->eval(x, p));
    case Kind::kSqrt: return std::sqrt(args_[0]->eval(x, p));
  }
  return 0.0;
}

double Expr::eval_grad_x(const Vec& x, const Vec& p, Vec& grad) const {
  const int n = static_cast<int>(x.size());
  switch (kind_) {
    case Kind::kConst:
      grad = Vec::Zero(n);
      return value_;
    case Kind::kVarX:
      grad = Vec::Zero(n);
      grad[index_] = 1.0;
      return x[index_];
    case Kind::kVarP:
      grad = Vec::Zero(n);
      return p[index_];
    case Kind::kDot: {
      const Vec& a = dot_a_ == 'x' ? x : p;
      const Vec& b = dot_b_ == 'x' ? x : p;
      grad = Vec::Zero(n);
      if (dot_a_ == 'x') grad += b;
      if (dot_b_ == 'x') grad += a;
      return a.dot(b);
    }
    case Kind::kAdd: {
      grad = Vec::Zero(n);
      double s = 0.0;
      Vec gi;
      for (const auto& a : args_) {
        s += a->eval_grad_x(x, p, gi);
        grad += gi;
      }
      return s;
    }
    case Kind::kSub: {
      Vec gb;
      const double va = args_[0]->eval_grad_x(x, p, grad);
      const double vb = args_[1]->eval_grad_x(x, p, gb);
      grad -= gb;
      return va - vb;
    }
    case Kind::kMul: {
      // product rule over n factors
      std::vector<double> vals(args_.size());
      std::vector<Vec> grads(args_.size());
      for (size_t i = 0; i < args_.size(); ++i)
        vals[i] = args_[i]->eval_grad_x(x, p, grads[i]);
      grad = Vec::Zero(n);
      double prod = 1.0;
      for (double v : vals) prod *= v;
      for (size_t i = 0; i < args_.size(); ++i) {
        double rest = 1.0;
        for (size_t j = 0; j < args_.size(); ++j)
          if (j != i) rest *= vals[j];
        grad += rest * grads[i];
      }
      return prod;
    }
    case Kind::kDiv: {
      Vec gb;
      const double va = args_[0]->eval_grad_x(x, p, grad);
      const double vb = args_[1]->eval_grad_x(x, p, gb);
      grad = grad / vb - (va / (vb * vb)) * gb;
      return va / vb;
    }
    case Kind::kNeg: {
      const double v = args_[0]->eval_grad_x(x, p, grad);
      grad = -grad;
      return -v;
    }
    case Kind::kTanh: {
      const double v = args_[0]->eval_grad_x(x, p, grad);
      const double t = std::tanh(v);
      grad *= (1.0 - t * t);
      return t;
    }
    case Kind::kExp: {
      const double v = args_[0]->eval_grad_x(x, p, grad);
      const double ev = std::exp(v);
      grad *= ev;
      return ev;
    }
    case Kind::kLog: {
      const double v = args_[0]->eval_grad_x(x, p, grad);
      grad /= v;
      return std::log(v);
    }
    case Kind::kSqrt: {
      const double v = args_[0]->eval_grad_x(x, p, grad);
      const double sv = std::sqrt(v);
      grad *= 0.5 / sv;
      return sv;
    }
  }
  grad = Vec::Zero(n);
  return 0.0;
}

std::string Expr::to_string() const {
  switch (kind_) {
    case Kind::kConst: return fmt(value_);
    case Kind::kVarX: return "x@" + std::to_string(index_);
    case Kind::kVarP: return "p@" + std::to_string(index_);
    case Kind::kDot:
      return std::string("(dot ") + dot_a_ + ' ' + dot_b_ + ')';
    default: break;
  }
  const char* op = nullptr;
  switch (kind_) {
    case Kind::kAdd: op = "+"; break;
    case Kind::kSub: op = "-"; break;
    case Kind::kMul: op = "*"; break;
    case Kind::kDiv: op = "/"; break;
    case Kind::kNeg: op = "neg"; break;
    case Kind::kTanh: op = "tanh"; break;
    case Kind::kExp: op = "exp"; break;
    case Kind::kLog: op = "log"; break;
    case Kind::kSqrt: op = "sqrt"; break;
    default: op = "?"; break;
  }
  std::string out = "(";
  out += op;
  for (const auto& a : args_) {
    out += ' ';
    out += a->to_string();
  }
  out += ')';
  return out;
}

namespace {

struct Lexer {
  std::istringstream in;
  explicit Lexer(const std::string& s) : in(s) {}
  std::string next() {
    std::string tok;
    char c;
    while (in.get(c)) {
      if (std::isspace(static_cast<unsigned char>(c))) {
        if (!tok.empty()) return tok;
        continue;
      }
      if (c == '(' || c == ')') {
        if (!tok.empty()) {
          in.unget();
          return tok;
        }
        return std::string(1, c);
      }
      tok += c;
    }
    return tok;
  }
};

ExprPtr parse_expr(Lexer& lex) {
  const std::string tok = lex.next();
  if (tok.empty()) throw IoError("expr: unexpected end of input");
  if (tok != "(") {
    if (tok.rfind("x@", 0) == 0) return Expr::x(std::stoi(tok.substr(2)));
    if (tok.rfind("p@", 0) == 0) return Expr::p(std::stoi(tok.substr(2)));
    return Expr::constant(std::stod(tok));
  }
  const std::string op = lex.next();
  if (op == "dot") {
    const std::string a = lex.next();
    const std::string b = lex.next();
    if (lex.next() != ")") throw IoError("expr: expected )");
    return Expr::dot(a[0], b[0]);
  }
  std::vector<ExprPtr> args;
  // peek-driven: collect args until ')'
  while (true) {
    const auto pos = lex.in.tellg();
    std::string t = lex.next();
    if (t == ")") break;
    if (t.empty()) throw IoError("expr: missing )");
    lex.in.clear();
    lex.in.seekg(pos);
    args.push_back(parse_expr(lex));
  }
  if (op == "+") return Expr::add(std::move(args));
  if (op == "*") return Expr::mul(std::move(args));
  if (op == "-") {
    MPFIT_CHECK(args.size() == 2, "expr: '-' takes 2 args");
    return Expr::sub(args[0], args[1]);
  }
  if (op == "/") {
    MPFIT_CHECK(args.size() == 2, "expr: '/' takes 2 args");
    return Expr::div(args[0], args[1]);
  }
  MPFIT_CHECK(args.size() == 1, "expr: unary op takes 1 arg");
  if (op == "neg") return Expr::neg(args[0]);
  if (op == "tanh") return Expr::unary(Expr::Kind::kTanh, args[0]);
  if (op == "exp") return Expr::unary(Expr::Kind::kExp, args[0]);
  if (op == "log") return Expr::unary(Expr::Kind::kLog, args[0]);
  if (op == "sqrt") return Expr::unary(Expr::Kind::kSqrt, args[0]);
  throw IoError("expr: unknown op " + op);
}

}  // namespace

ExprPtr Expr::parse(const std::string& text) {
  Lexer lex(text);
  return parse_expr(lex);
}

}  // namespace mpfit
