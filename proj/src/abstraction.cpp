#include "maclearn/abstraction.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace maclearn {

namespace {

constexpr double kLogClamp = 1e-12;

double safe_log(double x) { return std::log(std::max(x, kLogClamp)); }

std::vector<PolicyFn> resolve_experts(const std::vector<std::string>& names) {
  std::vector<PolicyFn> experts;
  experts.reserve(names.size());
  for (const auto& n : names) experts.push_back(expert_by_name(n));
  return experts;
}

// Expert action distributions stacked as a (batch x 6) matrix.
Eigen::MatrixXd expert_targets(const PolicyFn& expert, const std::vector<Observation>& batch) {
  Eigen::MatrixXd t(static_cast<Eigen::Index>(batch.size()), kNumActions);
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const PolicyDistribution d = expert(batch[i]);
    for (int a = 0; a < kNumActions; ++a) t(static_cast<Eigen::Index>(i), a) = d.probs[static_cast<std::size_t>(a)];
  }
  return t;
}

// Mean over rows of KL(P || clamp(Q)).
double batch_mean_kl(const Eigen::MatrixXd& p, const Eigen::MatrixXd& q) {
  double total = 0.0;
  for (Eigen::Index r = 0; r < p.rows(); ++r) {
    for (Eigen::Index c = 0; c < p.cols(); ++c) {
      const double pv = p(r, c);
      if (pv > 0.0) total += pv * (std::log(pv) - safe_log(q(r, c)));
    }
  }
  return total / static_cast<double>(p.rows());
}

// d/dq of the mean KL above (the clamp zeroes the gradient where it binds).
Eigen::MatrixXd batch_mean_kl_grad_q(const Eigen::MatrixXd& p, const Eigen::MatrixXd& q) {
  Eigen::MatrixXd g = Eigen::MatrixXd::Zero(p.rows(), p.cols());
  const double inv_b = 1.0 / static_cast<double>(p.rows());
  for (Eigen::Index r = 0; r < p.rows(); ++r) {
    for (Eigen::Index c = 0; c < p.cols(); ++c) {
      const double pv = p(r, c);
      if (pv > 0.0 && q(r, c) >= kLogClamp) g(r, c) = -inv_b * pv / q(r, c);
    }
  }
  return g;
}

struct LossBreakdown {
  double total = 0.0, divergence = 0.0, prior = 0.0;
};

// Forward on precomputed inputs; optionally accumulates exact gradients for
// the encoder and all decoder heads.
LossBreakdown forward_backward(const AbstractionModel& model, const Eigen::MatrixXd& x,
                               const std::vector<Eigen::MatrixXd>& targets, double beta,
                               MlpGradients* enc_grads, std::vector<MlpGradients>* dec_grads) {
  const auto batch = static_cast<double>(x.rows());
  ForwardCache enc_cache;
  const Eigen::MatrixXd enc_out = model.encoder.forward(x, enc_cache);

  LossBreakdown loss;
  // Prior term: mean KL(encoder(o) || uniform) = mean sum_k e_k log e_k + log z.
  {
    double acc = 0.0;
    for (Eigen::Index r = 0; r < enc_out.rows(); ++r) {
      for (Eigen::Index c = 0; c < enc_out.cols(); ++c) {
        const double e = enc_out(r, c);
        if (e > 0.0) acc += e * std::log(e);
      }
    }
    loss.prior = acc / batch + std::log(static_cast<double>(model.z_size));
  }

  Eigen::MatrixXd d_enc_out;
  if (enc_grads != nullptr) {
    d_enc_out.resize(enc_out.rows(), enc_out.cols());
    const double inv_b = 1.0 / batch;
    for (Eigen::Index r = 0; r < enc_out.rows(); ++r) {
      for (Eigen::Index c = 0; c < enc_out.cols(); ++c) {
        d_enc_out(r, c) = inv_b * (safe_log(enc_out(r, c)) + 1.0);
      }
    }
  }

  for (std::size_t g = 0; g < model.decoders.size(); ++g) {
    ForwardCache dec_cache;
    const Eigen::MatrixXd dec_out = model.decoders[g].forward(enc_out, dec_cache);
    loss.divergence += batch_mean_kl(targets[g], dec_out);
    if (enc_grads != nullptr) {
      const Eigen::MatrixXd d_dec_out = beta * batch_mean_kl_grad_q(targets[g], dec_out);
      Eigen::MatrixXd d_dec_in;
      (*dec_grads)[g] = model.decoders[g].backward(dec_cache, d_dec_out, &d_dec_in);
      d_enc_out += d_dec_in;
    }
  }
  loss.total = loss.prior + beta * loss.divergence;
  if (enc_grads != nullptr) *enc_grads = model.encoder.backward(enc_cache, d_enc_out);
  return loss;
}

}  // namespace

void AbstractionConfig::validate() const {
  if (z_size < 1) throw ConfigError("abstraction: z_size must be >= 1");
  if (beta < 0.0) throw ConfigError("abstraction: beta must be >= 0");
  if (!(lr > 0.0)) throw ConfigError("abstraction: lr must be > 0");
  if (episodes < 1) throw ConfigError("abstraction: episodes must be >= 1");
  if (experts.empty()) throw ConfigError("abstraction: need at least one expert");
  if (buffer_capacity < 0) throw ConfigError("abstraction: buffer_capacity must be >= 0");
  if (memory_len < 1) throw ConfigError("abstraction: memory_len must be >= 1");
  for (const auto& name : experts) expert_by_name(name);  // throws on unknown names
}

int onehot_dim(int Q, int M) { return (Q + 1) + M * ((Q + 1) + kNumActions + kNumDownlink); }

Eigen::VectorXd encode_obs_onehot(const Observation& obs, int Q, int M) {
  if (static_cast<int>(obs.history.size()) != M)
    throw ContractError("encode_obs_onehot: history length != M");
  Eigen::VectorXd v = Eigen::VectorXd::Zero(onehot_dim(Q, M));
  int off = 0;
  v(obs.buf_now) = 1.0;
  off += Q + 1;
  for (const auto& e : obs.history) {
    v(off + e.buf) = 1.0;
    off += Q + 1;
    v(off + e.action.index()) = 1.0;
    off += kNumActions;
    v(off + static_cast<int>(e.dl)) = 1.0;
    off += kNumDownlink;
  }
  return v;
}

Eigen::MatrixXd encode_obs_batch(const std::vector<Observation>& obs, int Q, int M) {
  Eigen::MatrixXd x(static_cast<Eigen::Index>(obs.size()), onehot_dim(Q, M));
  for (std::size_t i = 0; i < obs.size(); ++i)
    x.row(static_cast<Eigen::Index>(i)) = encode_obs_onehot(obs[i], Q, M).transpose();
  return x;
}

double kl_divergence(std::span<const double> p, std::span<const double> q) {
  if (p.size() != q.size()) throw ContractError("kl_divergence: support mismatch");
  double total = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p[i] > 0.0) total += p[i] * (std::log(p[i]) - safe_log(q[i]));
  }
  return total;
}

double divergence_loss(const AbstractionModel& model, const std::vector<Observation>& batch,
                       const std::vector<PolicyFn>& experts) {
  if (batch.empty()) throw ContractError("divergence_loss: empty batch");
  const Eigen::MatrixXd x = encode_obs_batch(batch, model.q, model.m);
  std::vector<Eigen::MatrixXd> targets;
  targets.reserve(experts.size());
  for (const auto& e : experts) targets.push_back(expert_targets(e, batch));
  const Eigen::MatrixXd enc_out = model.encoder.forward(x);
  double loss = 0.0;
  for (std::size_t g = 0; g < model.decoders.size(); ++g)
    loss += batch_mean_kl(targets[g], model.decoders[g].forward(enc_out));
  return loss;
}

double prior_loss(const AbstractionModel& model, const std::vector<Observation>& batch) {
  if (batch.empty()) throw ContractError("prior_loss: empty batch");
  const Eigen::MatrixXd x = encode_obs_batch(batch, model.q, model.m);
  const Eigen::MatrixXd enc_out = model.encoder.forward(x);
  double acc = 0.0;
  for (Eigen::Index r = 0; r < enc_out.rows(); ++r) {
    for (Eigen::Index c = 0; c < enc_out.cols(); ++c) {
      const double e = enc_out(r, c);
      if (e > 0.0) acc += e * std::log(e);
    }
  }
  return acc / static_cast<double>(enc_out.rows()) + std::log(static_cast<double>(model.z_size));
}

double total_loss(const AbstractionModel& model, const std::vector<Observation>& batch,
                  const std::vector<PolicyFn>& experts, double beta) {
  if (beta < 0.0) throw ContractError("total_loss: beta must be >= 0");
  return prior_loss(model, batch) + beta * divergence_loss(model, batch, experts);
}

double total_loss_gradients(const AbstractionModel& model, const std::vector<Observation>& batch,
                            const std::vector<PolicyFn>& experts, double beta,
                            MlpGradients& encoder_grads, std::vector<MlpGradients>& decoder_grads) {
  if (batch.empty()) throw ContractError("total_loss_gradients: empty batch");
  const Eigen::MatrixXd x = encode_obs_batch(batch, model.q, model.m);
  std::vector<Eigen::MatrixXd> targets;
  targets.reserve(experts.size());
  for (const auto& e : experts) targets.push_back(expert_targets(e, batch));
  decoder_grads.resize(model.decoders.size());
  return forward_backward(model, x, targets, beta, &encoder_grads, &decoder_grads).total;
}

double evaluation_divergence(const AbstractionModel& model, const std::vector<Observation>& batch,
                             const std::vector<PolicyFn>& experts) {
  if (batch.empty()) throw ContractError("evaluation_divergence: empty batch");
  Eigen::MatrixXd hard = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(batch.size()), model.z_size);
  for (std::size_t i = 0; i < batch.size(); ++i)
    hard(static_cast<Eigen::Index>(i), phi_label(model.encoder, batch[i], model.q, model.m)) = 1.0;
  double loss = 0.0;
  for (std::size_t g = 0; g < model.decoders.size(); ++g) {
    loss += batch_mean_kl(expert_targets(experts[g], batch), model.decoders[g].forward(hard));
  }
  return loss;
}

AbstractionResult train_abstraction(const AbstractionConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  const int Q = cfg.buffer_capacity;
  const int M = cfg.memory_len;
  const std::vector<Observation> all_obs = enumerate_observations(Q, M);
  const std::vector<PolicyFn> experts = resolve_experts(cfg.experts);

  AbstractionModel model;
  model.q = Q;
  model.m = M;
  model.z_size = cfg.z_size;
  {
    std::vector<int> dims{onehot_dim(Q, M)};
    dims.insert(dims.end(), cfg.encoder_hidden.begin(), cfg.encoder_hidden.end());
    dims.push_back(cfg.z_size);
    std::vector<Activation> acts(cfg.encoder_hidden.size(), Activation::Relu);
    acts.push_back(Activation::Softmax);
    model.encoder = Mlp::from_sizes(dims, acts, derive_seed(seed, 1));
  }
  for (std::size_t g = 0; g < experts.size(); ++g) {
    std::vector<int> dims{cfg.z_size};
    dims.insert(dims.end(), cfg.decoder_hidden.begin(), cfg.decoder_hidden.end());
    dims.push_back(kNumActions);
    std::vector<Activation> acts(cfg.decoder_hidden.size(), Activation::Relu);
    acts.push_back(Activation::Softmax);
    model.decoders.push_back(Mlp::from_sizes(dims, acts, derive_seed(seed, 100 + g)));
  }

  const Eigen::MatrixXd x = encode_obs_batch(all_obs, Q, M);
  std::vector<Eigen::MatrixXd> targets;
  for (const auto& e : experts) targets.push_back(expert_targets(e, all_obs));

  AdamConfig adam_cfg;
  adam_cfg.lr = cfg.lr;
  AdamOptimizer enc_opt(model.encoder, adam_cfg);
  std::vector<AdamOptimizer> dec_opts;
  for (const auto& d : model.decoders) dec_opts.emplace_back(d, adam_cfg);

  AbstractionResult result;
  result.trace.l_total.reserve(static_cast<std::size_t>(cfg.episodes));
  MlpGradients enc_grads;
  std::vector<MlpGradients> dec_grads(model.decoders.size());

  for (int episode = 0; episode < cfg.episodes; ++episode) {
    const LossBreakdown loss =
        forward_backward(model, x, targets, cfg.beta, &enc_grads, &dec_grads);
    if (!std::isfinite(loss.total)) {
      throw TrainingError("abstraction: non-finite loss at episode " + std::to_string(episode) +
                          " (divergence=" + std::to_string(loss.divergence) +
                          ", prior=" + std::to_string(loss.prior) + ")");
    }
    result.trace.l_total.push_back(loss.total);
    result.trace.l_div.push_back(loss.divergence);
    result.trace.l_prior.push_back(loss.prior);
    enc_opt.step(model.encoder, enc_grads);
    for (std::size_t g = 0; g < model.decoders.size(); ++g)
      dec_opts[g].step(model.decoders[g], dec_grads[g]);
  }

  result.eval_divergence = evaluation_divergence(model, all_obs, experts);
  result.model = std::move(model);
  return result;
}

int phi_label(const Mlp& encoder, const Observation& obs, int Q, int M) {
  const Eigen::VectorXd out = encoder.forward1(encode_obs_onehot(obs, Q, M));
  int best = 0;
  for (Eigen::Index k = 1; k < out.size(); ++k) {
    if (out(k) > out(best)) best = static_cast<int>(k);
  }
  return best;
}

void PhiModel::build_table() {
  const std::int64_t size = observation_space_size(q, m);
  label_table.resize(static_cast<std::size_t>(size));
  for (std::int64_t i = 0; i < size; ++i)
    label_table[static_cast<std::size_t>(i)] = phi_label(encoder, observation_from_index(i, q, m), q, m);
}

int PhiModel::label(const Observation& obs) const {
  if (!label_table.empty()) {
    return label_table[static_cast<std::size_t>(observation_index(obs, q, m))];
  }
  return phi_label(encoder, obs, q, m);
}

std::vector<int> PhiModel::label_histogram() const {
  std::vector<int> hist(static_cast<std::size_t>(z_size), 0);
  const std::int64_t size = observation_space_size(q, m);
  for (std::int64_t i = 0; i < size; ++i) {
    const int k = label_table.empty()
                      ? phi_label(encoder, observation_from_index(i, q, m), q, m)
                      : label_table[static_cast<std::size_t>(i)];
    hist[static_cast<std::size_t>(k)] += 1;
  }
  return hist;
}

PhiModel phi_from_model(const AbstractionModel& model) {
  PhiModel phi;
  phi.encoder = model.encoder;
  phi.q = model.q;
  phi.m = model.m;
  phi.z_size = model.z_size;
  phi.build_table();
  return phi;
}

Checkpoint phi_to_checkpoint(const PhiModel& phi) {
  Checkpoint ckpt;
  ckpt.kind = "phi";
  ckpt.meta["q"] = std::to_string(phi.q);
  ckpt.meta["m"] = std::to_string(phi.m);
  ckpt.meta["z_size"] = std::to_string(phi.z_size);
  ckpt.nets.push_back(phi.encoder);
  return ckpt;
}

PhiModel phi_from_checkpoint(const Checkpoint& ckpt) {
  if (ckpt.kind != "phi") throw IntegrityError("expected a phi checkpoint, got '" + ckpt.kind + "'");
  if (ckpt.nets.size() != 1) throw IntegrityError("phi checkpoint must hold exactly one network");
  PhiModel phi;
  phi.encoder = ckpt.nets[0];
  phi.q = ckpt.meta_int("q");
  phi.m = ckpt.meta_int("m");
  phi.z_size = ckpt.meta_int("z_size");
  if (phi.encoder.in_dim() != onehot_dim(phi.q, phi.m))
    throw IntegrityError("phi checkpoint: encoder input does not match (q, m)");
  if (phi.encoder.out_dim() != phi.z_size)
    throw IntegrityError("phi checkpoint: encoder output does not match z_size");
  phi.build_table();
  return phi;
}

std::string phi_label_table_text(const PhiModel& phi) {
  PhiModel copy;
  const std::vector<int>* table = &phi.label_table;
  if (table->empty()) {
    copy = phi;
    copy.build_table();
    table = &copy.label_table;
  }
  std::ostringstream out;
  for (std::size_t i = 0; i < table->size(); ++i) out << i << ' ' << (*table)[i] << '\n';
  return out.str();
}

ZSearchResult z_size_search(const AbstractionConfig& base, const std::vector<int>& z_values,
                            std::uint64_t seed, double plateau_tol) {
  if (z_values.empty()) throw ContractError("z_size_search: empty z range");
  if (!std::is_sorted(z_values.begin(), z_values.end()))
    throw ContractError("z_size_search: z range must be ascending");
  ZSearchResult result;
  for (int z : z_values) {
    AbstractionConfig cfg = base;
    cfg.z_size = z;
    const AbstractionResult trained = train_abstraction(cfg, derive_seed(seed, static_cast<std::uint64_t>(z)));
    result.table.push_back({z, trained.eval_divergence});
  }
  double best = result.table.front().divergence;
  for (const auto& e : result.table) best = std::min(best, e.divergence);
  result.plateau_z = result.table.back().z;
  for (const auto& e : result.table) {
    if (e.divergence <= best * (1.0 + plateau_tol) + 1e-15) {
      result.plateau_z = e.z;
      break;
    }
  }
  return result;
}

double tail_relative_change(const std::vector<double>& trace, double fraction) {
  if (trace.empty()) throw ContractError("tail_relative_change: empty trace");
  const auto n = trace.size();
  const auto start = static_cast<std::size_t>(static_cast<double>(n) * (1.0 - fraction));
  const double first = trace[std::min(start, n - 1)];
  const double last = trace.back();
  return std::abs(last - first) / std::max(std::abs(first), 1e-12);
}

}  // namespace maclearn
