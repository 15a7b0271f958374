#include "maclearn/nn.hpp"

#include <cmath>

namespace maclearn {

Activation activation_from_name(const std::string& name) {
  if (name == "identity") return Activation::Identity;
  if (name == "tanh") return Activation::Tanh;
  if (name == "relu") return Activation::Relu;
  if (name == "softmax") return Activation::Softmax;
  throw ConfigError("unknown activation: " + name);
}

std::string activation_name(Activation act) {
  switch (act) {
    case Activation::Identity: return "identity";
    case Activation::Tanh: return "tanh";
    case Activation::Relu: return "relu";
    case Activation::Softmax: return "softmax";
  }
  throw ContractError("invalid activation tag");
}

Mlp::Mlp(const std::vector<LayerSpec>& spec, std::uint64_t seed) {
  if (spec.empty()) throw ContractError("mlp: empty layer spec");
  for (std::size_t l = 0; l < spec.size(); ++l) {
    if (spec[l].in < 1 || spec[l].out < 1) throw ContractError("mlp: non-positive layer size");
    if (l > 0 && spec[l].in != spec[l - 1].out)
      throw ContractError("mlp: layer dimensions do not chain");
    if (spec[l].act == Activation::Softmax && l + 1 != spec.size())
      throw ContractError("mlp: softmax only as final activation");
  }
  Rng rng(seed);
  layers_.reserve(spec.size());
  for (const auto& s : spec) {
    DenseLayer layer;
    layer.w.resize(s.out, s.in);
    const double bound = std::sqrt(6.0 / (s.in + s.out));
    // Fixed row-major fill order keeps initialization independent of the
    // matrix storage layout.
    for (int r = 0; r < s.out; ++r) {
      for (int c = 0; c < s.in; ++c) layer.w(r, c) = rng.uniform(-bound, bound);
    }
    layer.b = Eigen::VectorXd::Zero(s.out);
    layer.act = s.act;
    layers_.push_back(std::move(layer));
  }
}

Mlp Mlp::from_sizes(const std::vector<int>& dims, const std::vector<Activation>& acts,
                    std::uint64_t seed) {
  if (dims.size() < 2 || acts.size() + 1 != dims.size())
    throw ContractError("mlp: need one activation per layer");
  std::vector<LayerSpec> spec;
  for (std::size_t i = 0; i + 1 < dims.size(); ++i)
    spec.push_back({dims[i], dims[i + 1], acts[i]});
  return Mlp(spec, seed);
}

int Mlp::in_dim() const {
  if (layers_.empty()) throw ContractError("mlp: uninitialized");
  return static_cast<int>(layers_.front().w.cols());
}

int Mlp::out_dim() const {
  if (layers_.empty()) throw ContractError("mlp: uninitialized");
  return static_cast<int>(layers_.back().w.rows());
}

std::size_t Mlp::parameter_count() const {
  std::size_t n = 0;
  for (const auto& l : layers_) n += static_cast<std::size_t>(l.w.size() + l.b.size());
  return n;
}

void apply_activation(Activation act, Eigen::MatrixXd& z) {
  switch (act) {
    case Activation::Identity:
      return;
    case Activation::Tanh:
      z = z.array().tanh();
      return;
    case Activation::Relu:
      z = z.cwiseMax(0.0);
      return;
    case Activation::Softmax:
      for (Eigen::Index r = 0; r < z.rows(); ++r) {
        auto row = z.row(r).array();
        row -= row.maxCoeff();
        row = row.exp();
        row /= row.sum();
      }
      return;
  }
  throw ContractError("invalid activation tag");
}

Eigen::MatrixXd Mlp::forward(const Eigen::MatrixXd& x) const {
  ForwardCache cache;
  return forward(x, cache);
}

Eigen::MatrixXd Mlp::forward(const Eigen::MatrixXd& x, ForwardCache& cache) const {
  if (layers_.empty()) throw ContractError("mlp: uninitialized");
  if (x.cols() != in_dim()) throw ContractError("mlp: input dimension mismatch");
  cache.input = x;
  cache.post.clear();
  cache.post.reserve(layers_.size());
  Eigen::MatrixXd h = x;
  for (const auto& layer : layers_) {
    Eigen::MatrixXd z = h * layer.w.transpose();
    z.rowwise() += layer.b.transpose();
    apply_activation(layer.act, z);
    cache.post.push_back(z);
    h = std::move(z);
  }
  return cache.post.back();
}

Eigen::VectorXd Mlp::forward1(const Eigen::VectorXd& x) const {
  if (layers_.empty()) throw ContractError("mlp: uninitialized");
  if (x.size() != in_dim()) throw ContractError("mlp: input dimension mismatch");
  Eigen::VectorXd h = x;
  for (const auto& layer : layers_) {
    Eigen::VectorXd z = layer.w * h + layer.b;
    if (layer.act == Activation::Softmax) {
      Eigen::ArrayXd a = z.array();
      a -= a.maxCoeff();
      a = a.exp();
      z = (a / a.sum()).matrix();
    } else if (layer.act == Activation::Tanh) {
      z = z.array().tanh();
    } else if (layer.act == Activation::Relu) {
      z = z.cwiseMax(0.0);
    }
    h = std::move(z);
  }
  return h;
}

MlpGradients Mlp::zero_gradients() const {
  MlpGradients g;
  g.dw.reserve(layers_.size());
  g.db.reserve(layers_.size());
  for (const auto& l : layers_) {
    g.dw.push_back(Eigen::MatrixXd::Zero(l.w.rows(), l.w.cols()));
    g.db.push_back(Eigen::VectorXd::Zero(l.b.size()));
  }
  return g;
}

MlpGradients Mlp::backward(const ForwardCache& cache, const Eigen::MatrixXd& loss_grad_at_output,
                           Eigen::MatrixXd* dldx) const {
  const auto n_layers = layers_.size();
  if (cache.post.size() != n_layers) throw ContractError("mlp: cache does not match network");
  if (loss_grad_at_output.rows() != cache.input.rows() ||
      loss_grad_at_output.cols() != out_dim())
    throw ContractError("mlp: output gradient shape mismatch");

  MlpGradients grads;
  grads.dw.resize(n_layers);
  grads.db.resize(n_layers);

  Eigen::MatrixXd d = loss_grad_at_output;  // dL/dY of current layer
  for (std::size_t li = n_layers; li-- > 0;) {
    const auto& layer = layers_[li];
    const Eigen::MatrixXd& y = cache.post[li];
    if (y.rows() != d.rows() || y.cols() != d.cols())
      throw ContractError("mlp: cache shape mismatch");

    // Activation Jacobian-vector product: dL/dY -> dL/dZ.
    switch (layer.act) {
      case Activation::Identity:
        break;
      case Activation::Tanh:
        d = d.cwiseProduct((1.0 - y.array().square()).matrix());
        break;
      case Activation::Relu:
        d = d.cwiseProduct((y.array() > 0.0).cast<double>().matrix());
        break;
      case Activation::Softmax:
        for (Eigen::Index r = 0; r < d.rows(); ++r) {
          const double dot = y.row(r).dot(d.row(r));
          d.row(r) = y.row(r).cwiseProduct(d.row(r)) - dot * y.row(r);
        }
        break;
    }

    const Eigen::MatrixXd& x = (li == 0) ? cache.input : cache.post[li - 1];
    grads.dw[li].noalias() = d.transpose() * x;
    grads.db[li] = d.colwise().sum();
    if (li > 0 || dldx != nullptr) {
      Eigen::MatrixXd dprev;
      dprev.noalias() = d * layer.w;
      if (li == 0) {
        *dldx = std::move(dprev);
      } else {
        d = std::move(dprev);
      }
    }
  }
  return grads;
}

void adam_update(double* param, double* m, double* v, const double* grad, std::ptrdiff_t n,
                 int step_count, const AdamConfig& cfg) {
  const double bc1 = 1.0 - std::pow(cfg.beta1, step_count);
  const double bc2 = 1.0 - std::pow(cfg.beta2, step_count);
  Eigen::Map<Eigen::ArrayXd> p(param, n), mm(m, n), vv(v, n);
  Eigen::Map<const Eigen::ArrayXd> g(grad, n);
  mm = cfg.beta1 * mm + (1.0 - cfg.beta1) * g;
  vv = cfg.beta2 * vv + (1.0 - cfg.beta2) * g.square();
  p -= cfg.lr * (mm / bc1) / ((vv / bc2).sqrt() + cfg.eps_hat);
}

AdamOptimizer::AdamOptimizer(const Mlp& net, AdamConfig cfg) : cfg_(cfg) {
  for (const auto& l : net.layers()) {
    mw_.push_back(Eigen::MatrixXd::Zero(l.w.rows(), l.w.cols()));
    vw_.push_back(Eigen::MatrixXd::Zero(l.w.rows(), l.w.cols()));
    mb_.push_back(Eigen::VectorXd::Zero(l.b.size()));
    vb_.push_back(Eigen::VectorXd::Zero(l.b.size()));
  }
}

void AdamOptimizer::step(Mlp& net, const MlpGradients& grads) {
  auto& layers = net.layers();
  if (layers.size() != mw_.size() || grads.dw.size() != mw_.size())
    throw ContractError("adam: shape mismatch");
  t_ += 1;
  for (std::size_t l = 0; l < layers.size(); ++l) {
    if (grads.dw[l].rows() != layers[l].w.rows() || grads.dw[l].cols() != layers[l].w.cols() ||
        grads.db[l].size() != layers[l].b.size())
      throw ContractError("adam: shape mismatch");
    adam_update(layers[l].w.data(), mw_[l].data(), vw_[l].data(), grads.dw[l].data(),
                layers[l].w.size(), t_, cfg_);
    adam_update(layers[l].b.data(), mb_[l].data(), vb_[l].data(), grads.db[l].data(),
                layers[l].b.size(), t_, cfg_);
  }
}

}  // namespace maclearn
