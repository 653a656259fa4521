#pragma once

#include <cstdint>
#include <span>
#include <vector>

namespace ttsnap {

/// Fully connected regressor with tanh hidden layers and a scalar linear
/// output. Parameters live in one flat vector: for each layer, the weight
/// matrix (out x in, row-major) followed by the bias.
class Mlp {
 public:
  struct Workspace {
    std::vector<std::vector<double>> activations;  // per layer, input first
  };

  explicit Mlp(std::vector<int> layer_sizes);

  const std::vector<int>& layer_sizes() const { return sizes_; }
  int input_dim() const { return sizes_.front(); }
  std::size_t param_count() const { return param_count_; }

  double forward(std::span<const double> params, std::span<const double> input,
                 Workspace& ws) const;
  double forward(std::span<const double> params, std::span<const double> input) const;

  /// Adds output_grad * d(output)/d(params) to grad, using the activations
  /// left in ws by the last forward call.
  void backward(std::span<const double> params, const Workspace& ws, double output_grad,
                std::span<double> grad) const;

  /// Glorot-uniform weights, zero biases.
  std::vector<double> init_params(std::uint64_t seed) const;

 private:
  std::vector<int> sizes_;
  std::vector<std::size_t> offsets_;  // start of each layer's weights
  std::size_t param_count_ = 0;
};

}  // namespace ttsnap
