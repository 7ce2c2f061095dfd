#include "mpfit/mlp.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "mpfit/rng.hpp"

namespace mpfit {

std::string activation_name(Activation a) {
  switch (a) {
    case Activation::kRelu: return "relu";
    case Activation::kLeakyRelu: return "leaky_relu";
    case Activation::kTanh: return "tanh";
    case Activation::kSwish: return "swish";
  }
  return "?";
}

Activation activation_from_name(const std::string& name) {
  if (name == "relu") return Activation::kRelu;
  if (name == "leaky_relu") return Activation::kLeakyRelu;
  if (name == "tanh") return Activation::kTanh;
  if (name == "swish") return Activation::kSwish;
  throw InvalidArgument("unknown activation: " + name);
}

namespace {
constexpr double kLeakySlope = 0.01;

double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }
}  // namespace

Mat apply_activation(const Mat& z, Activation act) {
  switch (act) {
    case Activation::kRelu:
      return z.array().max(0.0);
    case Activation::kLeakyRelu:
      return z.unaryExpr([](double v) { return v > 0.0 ? v : kLeakySlope * v; });
    case Activation::kTanh:
      return z.array().tanh();
    case Activation::kSwish:
      return z.unaryExpr([](double v) { return v * sigmoid(v); });
  }
  return z;
}

Mat activation_derivative(const Mat& z, Activation act) {
  switch (act) {
    case Activation::kRelu:
      return z.unaryExpr([](double v) { return v > 0.0 ? 1.0 : 0.0; });
    case Activation::kLeakyRelu:
      return z.unaryExpr([](double v) { return v > 0.0 ? 1.0 : kLeakySlope; });
    case Activation::kTanh:
      return 1.0 - z.array().tanh().square();
    case Activation::kSwish:
      return z.unaryExpr([](double v) {
        const double s = sigmoid(v);
        return s + v * s * (1.0 - s);
      });
  }
  return Mat::Ones(z.rows(), z.cols());
}

void MlpArchitecture::validate() const {
  MPFIT_CHECK(input_dim >= 1 && output_dim >= 1, "mlp: dims must be >= 1");
  for (int h : hidden_sizes) MPFIT_CHECK(h >= 1, "mlp: hidden size must be >= 1");
}

std::vector<std::pair<int, int>> MlpArchitecture::layer_dims() const {
  std::vector<std::pair<int, int>> dims;
  int in = input_dim;
  for (int h : hidden_sizes) {
    dims.emplace_back(in, h);
    in = h;
  }
  dims.emplace_back(in, output_dim);
  return dims;
}

int MlpArchitecture::parameter_count() const {
  int n = 0;
  for (auto [in, out] : layer_dims()) n += out * (in + 1);
  if (linear_bypass) n += output_dim * (input_dim + 1);
  return n;
}

namespace {

struct Offsets {
  std::vector<int> w, b;  // per layer
  int bypass_c = -1, bypass_d = -1;
};

Offsets layout(const MlpArchitecture& arch) {
  Offsets off;
  int at = 0;
  for (auto [in, out] : arch.layer_dims()) {
    off.w.push_back(at);
    at += out * in;
    off.b.push_back(at);
    at += out;
  }
  if (arch.linear_bypass) {
    off.bypass_c = at;
    at += arch.output_dim * arch.input_dim;
    off.bypass_d = at;
  }
  return off;
}

using RowMajorMap =
    Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic,
                                   Eigen::RowMajor>>;
using RowMajorMutMap =
    Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic,
                             Eigen::RowMajor>>;

}  // namespace

Mat MlpParams::weight(int layer) const {
  const auto dims = arch.layer_dims();
  const auto off = layout(arch);
  return RowMajorMap(theta.data() + off.w[layer], dims[layer].second,
                     dims[layer].first);
}

Vec MlpParams::bias(int layer) const {
  const auto dims = arch.layer_dims();
  const auto off = layout(arch);
  return theta.segment(off.b[layer], dims[layer].second);
}

Mat MlpParams::bypass_matrix() const {
  MPFIT_CHECK(arch.linear_bypass, "mlp: bypass disabled");
  const auto off = layout(arch);
  return RowMajorMap(theta.data() + off.bypass_c, arch.output_dim,
                     arch.input_dim);
}

Vec MlpParams::bypass_bias() const {
  MPFIT_CHECK(arch.linear_bypass, "mlp: bypass disabled");
  const auto off = layout(arch);
  return theta.segment(off.bypass_d, arch.output_dim);
}

void MlpParams::set_weight(int layer, const Mat& w) {
  const auto dims = arch.layer_dims();
  const auto off = layout(arch);
  MPFIT_CHECK(w.rows() == dims[layer].second && w.cols() == dims[layer].first,
              "mlp: weight shape mismatch");
  RowMajorMutMap(theta.data() + off.w[layer], w.rows(), w.cols()) = w;
}

void MlpParams::set_bias(int layer, const Vec& b) {
  const auto dims = arch.layer_dims();
  const auto off = layout(arch);
  MPFIT_CHECK(b.size() == dims[layer].second, "mlp: bias size mismatch");
  theta.segment(off.b[layer], b.size()) = b;
}

void MlpParams::set_bypass(const Mat& c, const Vec& d) {
  MPFIT_CHECK(arch.linear_bypass, "mlp: bypass disabled");
  MPFIT_CHECK(c.rows() == arch.output_dim && c.cols() == arch.input_dim &&
                  d.size() == arch.output_dim,
              "mlp: bypass shape mismatch");
  const auto off = layout(arch);
  RowMajorMutMap(theta.data() + off.bypass_c, c.rows(), c.cols()) = c;
  theta.segment(off.bypass_d, d.size()) = d;
}

MlpParams mlp_init(const MlpArchitecture& arch, std::uint64_t seed) {
  arch.validate();
  MlpParams p;
  p.arch = arch;
  p.theta = Vec::Zero(arch.parameter_count());
  Rng rng(derive_seed(seed, 0x6d6c70));
  const auto off = layout(arch);
  const auto dims = arch.layer_dims();
  for (size_t l = 0; l < dims.size(); ++l) {
    const auto [in, out] = dims[l];
    const double bound = std::sqrt(6.0 / (in + out));
    for (int i = 0; i < out * in; ++i)
      p.theta[off.w[l] + i] = rng.uniform(-bound, bound);
    // biases stay zero
  }
  if (arch.linear_bypass) {
    const double bound = std::sqrt(6.0 / (arch.input_dim + arch.output_dim));
    for (int i = 0; i < arch.output_dim * arch.input_dim; ++i)
      p.theta[off.bypass_c + i] = rng.uniform(-bound, bound);
  }
  return p;
}

Vec mlp_forward(const MlpParams& params, const Vec& input) {
  MPFIT_CHECK(input.size() == params.arch.input_dim,
              "mlp_forward: input dim mismatch");
  const auto dims = params.arch.layer_dims();
  const auto off = layout(params.arch);
  Vec h = input;
  for (size_t l = 0; l < dims.size(); ++l) {
    const auto [in, out] = dims[l];
    Vec z = RowMajorMap(params.theta.data() + off.w[l], out, in) * h +
            params.theta.segment(off.b[l], out);
    h = (l + 1 < dims.size())
            ? Vec(apply_activation(z, params.arch.activation))
            : z;
  }
  if (params.arch.linear_bypass) {
    h += RowMajorMap(params.theta.data() + off.bypass_c,
                     params.arch.output_dim, params.arch.input_dim) *
             input +
         params.theta.segment(off.bypass_d, params.arch.output_dim);
  }
  return h;
}

Mat mlp_forward_batch(const MlpParams& params, const Mat& inputs) {
  MPFIT_CHECK(inputs.rows() == params.arch.input_dim,
              "mlp_forward_batch: input dim mismatch");
  const auto dims = params.arch.layer_dims();
  const auto off = layout(params.arch);
  Mat h = inputs;
  for (size_t l = 0; l < dims.size(); ++l) {
    const auto [in, out] = dims[l];
    Mat z = RowMajorMap(params.theta.data() + off.w[l], out, in) * h;
    z.colwise() += params.theta.segment(off.b[l], out);
    h = (l + 1 < dims.size())
            ? Mat(apply_activation(z, params.arch.activation))
            : std::move(z);
  }
  if (params.arch.linear_bypass) {
    Mat c = RowMajorMap(params.theta.data() + off.bypass_c,
                        params.arch.output_dim, params.arch.input_dim);
    h.noalias() += c * inputs;
    h.colwise() += params.theta.segment(off.bypass_d, params.arch.output_dim);
  }
  return h;
}

ad::Var mlp_forward_graph(ad::Tape& tape, ad::Var theta,
                          const MlpArchitecture& arch, ad::Var inputs) {
  MPFIT_CHECK(tape.value(inputs).rows() == arch.input_dim,
              "mlp_forward_graph: input dim mismatch");
  MPFIT_CHECK(tape.value(theta).rows() == arch.parameter_count(),
              "mlp_forward_graph: parameter count mismatch");
  const auto dims = arch.layer_dims();
  const auto off = layout(arch);
  ad::Var h = inputs;
  for (size_t l = 0; l < dims.size(); ++l) {
    const auto [in, out] = dims[l];
    ad::Var w = tape.reshape_slice(theta, off.w[l], out, in);
    ad::Var b = tape.reshape_slice(theta, off.b[l], out, 1);
    ad::Var z = tape.add_colwise(tape.matmul(w, h), b);
    h = (l + 1 < dims.size())
            ? tape.activation(z, static_cast<int>(arch.activation))
            : z;
  }
  if (arch.linear_bypass) {
    ad::Var c =
        tape.reshape_slice(theta, off.bypass_c, arch.output_dim, arch.input_dim);
    ad::Var d = tape.reshape_slice(theta, off.bypass_d, arch.output_dim, 1);
    h = tape.add(h, tape.add_colwise(tape.matmul(c, inputs), d));
  }
  return h;
}

namespace {

void write_value(std::ostream& out, double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  out << buf;
}

void write_array(std::ostream& out, const std::string& name, const Mat& m) {
  out << name << ' ' << m.rows() << ' ' << m.cols();
  for (int i = 0; i < m.rows(); ++i)
    for (int j = 0; j < m.cols(); ++j) {
      out << ' ';
      write_value(out, m(i, j));
    }
  out << '\n';
}

Mat read_array(std::istream& in, const std::string& expect_name) {
  std::string name;
  int rows = 0, cols = 0;
  if (!(in >> name >> rows >> cols))
    throw IoError("model file: truncated array header");
  if (name != expect_name)
    throw IoError("model file: expected array " + expect_name + ", got " + name);
  Mat m(rows, cols);
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < cols; ++j)
      if (!(in >> m(i, j))) throw IoError("model file: truncated array " + name);
  return m;
}

}  // namespace

void save_mlp(const MlpParams& params, std::ostream& out) {
  const auto& arch = params.arch;
  out << "MPFIT-MODEL v1\n";
  out << "dims=" << arch.input_dim;
  for (int h : arch.hidden_sizes) out << ',' << h;
  out << ',' << arch.output_dim;
  out << " activation=" << activation_name(arch.activation);
  out << " bypass=" << (arch.linear_bypass ? 1 : 0) << '\n';
  const auto dims = arch.layer_dims();
  for (size_t l = 0; l < dims.size(); ++l) {
    write_array(out, "W" + std::to_string(l), params.weight(l));
    write_array(out, "b" + std::to_string(l), params.bias(l));
  }
  if (arch.linear_bypass) {
    write_array(out, "C", params.bypass_matrix());
    write_array(out, "d", params.bypass_bias());
  }
}

MlpParams load_mlp(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || line != "MPFIT-MODEL v1")
    throw IoError("model file: bad magic line");
  if (!std::getline(in, line)) throw IoError("model file: missing descriptor");

  MlpArchitecture arch;
  std::istringstream desc(line);
  std::string tok;
  std::vector<int> all_dims;
  while (desc >> tok) {
    const auto eq = tok.find('=');
    if (eq == std::string::npos) throw IoError("model file: bad descriptor");
    const std::string key = tok.substr(0, eq);
    const std::string val = tok.substr(eq + 1);
    if (key == "dims") {
      std::istringstream ds(val);
      std::string piece;
      while (std::getline(ds, piece, ',')) all_dims.push_back(std::stoi(piece));
    } else if (key == "activation") {
      arch.activation = activation_from_name(val);
    } else if (key == "bypass") {
      arch.linear_bypass = val == "1";
    } else {
      throw IoError("model file: unknown descriptor key " + key);
    }
  }
  if (all_dims.size() < 2) throw IoError("model file: bad dims");
  arch.input_dim = all_dims.front();
  arch.output_dim = all_dims.back();
  arch.hidden_sizes.assign(all_dims.begin() + 1, all_dims.end() - 1);
  arch.validate();

  MlpParams p;
  p.arch = arch;
  p.theta = Vec::Zero(arch.parameter_count());
  const auto dims = arch.layer_dims();
  for (size_t l = 0; l < dims.size(); ++l) {
    p.set_weight(static_cast<int>(l), read_array(in, "W" + std::to_string(l)));
    p.set_bias(static_cast<int>(l),
               Vec(read_array(in, "b" + std::to_string(l)).col(0)));
  }
  if (arch.linear_bypass) {
    Mat c = read_array(in, "C");
    Mat d = read_array(in, "d");
    p.set_bypass(c, d.col(0));
  }
  return p;
}

void save_mlp_file(const MlpParams& params, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open for writing: " + path);
  save_mlp(params, out);
}

MlpParams load_mlp_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open: " + path);
  return load_mlp(in);
}

}  // namespace mpfit
