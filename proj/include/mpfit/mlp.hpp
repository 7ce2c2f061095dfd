#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "mpfit/autodiff.hpp"
#include "mpfit/common.hpp"

namespace mpfit {

enum class Activation { kRelu, kLeakyRelu, kTanh, kSwish };

std::string activation_name(Activation a);
Activation activation_from_name(const std::string& name);

/// Elementwise activation. relu uses subgradient 0 at the kink; leaky_relu
/// has fixed slope 0.01 (used at 0 as well).
Mat apply_activation(const Mat& z, Activation act);
Mat activation_derivative(const Mat& z, Activation act);

/// Feed-forward network shape. With linear_bypass on, the output is
/// head(h_L) + C*input + d for a dedicated affine pair (C, d).
struct MlpArchitecture {
  int input_dim = 1;
  std::vector<int> hidden_sizes;
  int output_dim = 1;
  Activation activation = Activation::kTanh;
  bool linear_bypass = false;

  void validate() const;
  /// Total parameter count of the flat vector layout.
  int parameter_count() const;
  /// Layer dims as (in, out) pairs, input through output.
  std::vector<std::pair<int, int>> layer_dims() const;

  bool operator==(const MlpArchitecture&) const = default;
};

/// Network parameters as a flat vector. Layout: per layer W (row-major,
/// out x in) then b; then C (row-major) and d when the bypass is enabled.
/// flatten/unflatten round-trips bit-exactly.
struct MlpParams {
  MlpArchitecture arch;
  Vec theta;

  Mat weight(int layer) const;
  Vec bias(int layer) const;
  Mat bypass_matrix() const;
  Vec bypass_bias() const;

  void set_weight(int layer, const Mat& w);
  void set_bias(int layer, const Vec& b);
  void set_bypass(const Mat& c, const Vec& d);
};

/// Scaled-uniform init (+-sqrt(6/(fan_in+fan_out))), zero biases,
/// deterministic in the seed.
MlpParams mlp_init(const MlpArchitecture& arch, std::uint64_t seed);

/// Single-input forward pass.
Vec mlp_forward(const MlpParams& params, const Vec& input);
/// Batched forward pass over inputs stored as columns.
Mat mlp_forward_batch(const MlpParams& params, const Mat& inputs);

/// Batched forward pass on a tape; `theta` is the flat parameter node and
/// `inputs` a (input_dim x M) node. Either may be constant or trainable.
ad::Var mlp_forward_graph(ad::Tape& tape, ad::Var theta,
                          const MlpArchitecture& arch, ad::Var inputs);

/// Versioned text model format; round-trips bit-exactly.
void save_mlp(const MlpParams& params, std::ostream& out);
MlpParams load_mlp(std::istream& in);
void save_mlp_file(const MlpParams& params, const std::string& path);
MlpParams load_mlp_file(const std::string& path);

}  // namespace mpfit
