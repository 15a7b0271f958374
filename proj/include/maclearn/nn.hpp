#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

#include "maclearn/errors.hpp"
#include "maclearn/rng.hpp"

namespace maclearn {

// Minimal dense-network stack: affine layers with tanh / rectifier / softmax
// / identity activations, exact reverse-mode gradients, and Adam updates.
// All math in 64-bit floats for reproducibility.

enum class Activation { Identity, Tanh, Relu, Softmax };

Activation activation_from_name(const std::string& name);
std::string activation_name(Activation act);

struct LayerSpec {
  int in = 0;
  int out = 0;
  Activation act = Activation::Identity;
};

struct DenseLayer {
  Eigen::MatrixXd w;  // out x in
  Eigen::VectorXd b;  // out
  Activation act = Activation::Identity;
};

struct MlpGradients {
  std::vector<Eigen::MatrixXd> dw;
  std::vector<Eigen::VectorXd> db;
};

// Per-layer post-activation outputs from a forward pass, consumed by
// backward(). Row = batch sample.
struct ForwardCache {
  Eigen::MatrixXd input;
  std::vector<Eigen::MatrixXd> post;
};

class Mlp {
 public:
  Mlp() = default;

  // Weights uniform in +-sqrt(6 / (fan_in + fan_out)), biases zero,
  // deterministic under the seed. Softmax is only valid on the final layer.
  Mlp(const std::vector<LayerSpec>& spec, std::uint64_t seed);

  static Mlp from_sizes(const std::vector<int>& dims, const std::vector<Activation>& acts,
                        std::uint64_t seed);

  int in_dim() const;
  int out_dim() const;
  int num_layers() const { return static_cast<int>(layers_.size()); }
  const std::vector<DenseLayer>& layers() const { return layers_; }
  std::vector<DenseLayer>& layers() { return layers_; }
  std::size_t parameter_count() const;

  // Batch forward: rows are samples.
  Eigen::MatrixXd forward(const Eigen::MatrixXd& x) const;
  Eigen::MatrixXd forward(const Eigen::MatrixXd& x, ForwardCache& cache) const;
  // Single-sample forward without cache allocation.
  Eigen::VectorXd forward1(const Eigen::VectorXd& x) const;

  // Exact gradients for all weights and biases given the loss gradient at the
  // post-activation output. Optionally also returns dL/dinput.
  MlpGradients backward(const ForwardCache& cache, const Eigen::MatrixXd& loss_grad_at_output,
                        Eigen::MatrixXd* dldx = nullptr) const;

  MlpGradients zero_gradients() const;

 private:
  std::vector<DenseLayer> layers_;
};

void apply_activation(Activation act, Eigen::MatrixXd& z);

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps_hat = 1e-8;
};

// Bias-corrected Adam update on one flat parameter block.
void adam_update(double* param, double* m, double* v, const double* grad, std::ptrdiff_t n,
                 int step_count, const AdamConfig& cfg);

class AdamOptimizer {
 public:
  AdamOptimizer() = default;
  AdamOptimizer(const Mlp& net, AdamConfig cfg);

  // One update; increments the step count. Shapes must match the network.
  void step(Mlp& net, const MlpGradients& grads);
  int step_count() const { return t_; }
  const AdamConfig& config() const { return cfg_; }

 private:
  AdamConfig cfg_;
  int t_ = 0;
  std::vector<Eigen::MatrixXd> mw_, vw_;
  std::vector<Eigen::VectorXd> mb_, vb_;
};

}  // namespace maclearn
