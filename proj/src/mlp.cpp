#include "ttsnap/mlp.hpp"

#include <cmath>

#include "ttsnap/error.hpp"
#include "ttsnap/kernels.hpp"
#include "ttsnap/rng.hpp"

namespace ttsnap {

Mlp::Mlp(std::vector<int> layer_sizes) : sizes_(std::move(layer_sizes)) {
  require(sizes_.size() >= 2, "network needs at least an input and an output layer");
  require(sizes_.back() == 1, "network output must be scalar");
  for (int s : sizes_) require(s > 0, "layer sizes must be positive");
  for (std::size_t l = 0; l + 1 < sizes_.size(); ++l) {
    offsets_.push_back(param_count_);
    param_count_ += static_cast<std::size_t>(sizes_[l + 1]) * sizes_[l] + sizes_[l + 1];
  }
}

double Mlp::forward(std::span<const double> params, std::span<const double> input,
                    Workspace& ws) const {
  require(params.size() == param_count_, "parameter vector has the wrong length");
  require(static_cast<int>(input.size()) == input_dim(), "network input has the wrong length");
  const auto& k = kernels::active();
  const std::size_t layers = sizes_.size() - 1;
  ws.activations.resize(sizes_.size());
  ws.activations[0].assign(input.begin(), input.end());
  for (std::size_t l = 0; l < layers; ++l) {
    const std::size_t in = sizes_[l], out = sizes_[l + 1];
    const double* w = params.data() + offsets_[l];
    auto& next = ws.activations[l + 1];
    next.resize(out);
    k.gemv_bias(w, w + out * in, ws.activations[l].data(), next.data(), out, in);
    if (l + 1 < layers)
      for (double& v : next) v = std::tanh(v);
  }
  return ws.activations.back()[0];
}

double Mlp::forward(std::span<const double> params, std::span<const double> input) const {
  thread_local Workspace ws;
  return forward(params, input, ws);
}

void Mlp::backward(std::span<const double> params, const Workspace& ws, double output_grad,
                   std::span<double> grad) const {
  const auto& k = kernels::active();
  const std::size_t layers = sizes_.size() - 1;
  std::vector<double> delta{output_grad};
  std::vector<double> prev;
  for (std::size_t l = layers; l-- > 0;) {
    const std::size_t in = sizes_[l], out = sizes_[l + 1];
    const double* w = params.data() + offsets_[l];
    double* gw = grad.data() + offsets_[l];
    k.rank1_update(gw, delta.data(), ws.activations[l].data(), out, in);
    k.axpy(1.0, delta.data(), gw + out * in, out);
    if (l == 0) break;
    prev.resize(in);
    k.gemv_transposed(w, delta.data(), prev.data(), out, in);
    const auto& a = ws.activations[l];
    for (std::size_t i = 0; i < in; ++i) prev[i] *= 1.0 - a[i] * a[i];
    delta.swap(prev);
  }
}

std::vector<double> Mlp::init_params(std::uint64_t seed) const {
  std::vector<double> p(param_count_, 0.0);
  Rng rng(seed);
  for (std::size_t l = 0; l + 1 < sizes_.size(); ++l) {
    const double in = sizes_[l], out = sizes_[l + 1];
    const double limit = std::sqrt(6.0 / (in + out));
    std::uniform_real_distribution<double> u(-limit, limit);
    const std::size_t n = static_cast<std::size_t>(in * out);
    for (std::size_t i = 0; i < n; ++i) p[offsets_[l] + i] = u(rng);
  }
  return p;
}

}  // namespace ttsnap
