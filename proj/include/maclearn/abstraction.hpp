#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "maclearn/checkpoint.hpp"
#include "maclearn/env.hpp"
#include "maclearn/nn.hpp"
#include "maclearn/policies.hpp"

namespace maclearn {

// Observation abstraction: an encoder classifies each raw observation into
// one of z_size labels, and one decoder head per expert maps the label
// distribution to an action distribution imitating that expert. Training
// minimizes  L_tot = L_prior + beta * L_div  over the enumerated observation
// set; afterwards only the encoder (argmax label) is used.

struct AbstractionConfig {
  int z_size = 8;
  double beta = 1000.0;
  double lr = 2.5e-4;
  int episodes = 10000;  // full-batch gradient steps over the enumerated set
  std::vector<int> encoder_hidden{512, 512, 512};
  std::vector<int> decoder_hidden{100};
  std::vector<std::string> experts{"grant_based", "grant_free"};
  int buffer_capacity = 10;  // Q
  int memory_len = 1;        // M

  void validate() const;
};

struct AbstractionModel {
  Mlp encoder;                // one-hot observation -> softmax over z_size
  std::vector<Mlp> decoders;  // z_size distribution -> softmax over 6 actions
  int q = 0;
  int m = 0;
  int z_size = 0;
};

struct AbstractionTrace {
  std::vector<double> l_total, l_div, l_prior;
};

struct AbstractionResult {
  AbstractionModel model;
  AbstractionTrace trace;
  double eval_divergence = 0.0;  // L_div with hard (one-hot argmax) labels
};

// One-hot blocks: buf_now (Q+1), then per history entry buf (Q+1), joint
// action (6), downlink message (3).
int onehot_dim(int Q, int M);
Eigen::VectorXd encode_obs_onehot(const Observation& obs, int Q, int M);
Eigen::MatrixXd encode_obs_batch(const std::vector<Observation>& obs, int Q, int M);

// Sum_a p(a) log(p(a)/q(a)); q is clamped below at 1e-12 before the log and
// p(a)=0 terms contribute zero.
double kl_divergence(std::span<const double> p, std::span<const double> q);

// Sum over experts of the batch-mean KL from the expert's distribution to the
// decoder's output; decoders consume the encoder's soft class distribution.
double divergence_loss(const AbstractionModel& model, const std::vector<Observation>& batch,
                       const std::vector<PolicyFn>& experts);

// Batch-mean KL from the encoder's output to the uniform prior over labels.
double prior_loss(const AbstractionModel& model, const std::vector<Observation>& batch);

double total_loss(const AbstractionModel& model, const std::vector<Observation>& batch,
                  const std::vector<PolicyFn>& experts, double beta);

// Total loss plus exact gradients for the encoder and every decoder head, as
// used by the training loop.
double total_loss_gradients(const AbstractionModel& model, const std::vector<Observation>& batch,
                            const std::vector<PolicyFn>& experts, double beta,
                            MlpGradients& encoder_grads, std::vector<MlpGradients>& decoder_grads);

// L_div evaluated the way the artifact is used after training: decoders fed
// the one-hot argmax label.
double evaluation_divergence(const AbstractionModel& model, const std::vector<Observation>& batch,
                             const std::vector<PolicyFn>& experts);

AbstractionResult train_abstraction(const AbstractionConfig& cfg, std::uint64_t seed);

// Argmax label for one observation; ties break toward the lowest index.
int phi_label(const Mlp& encoder, const Observation& obs, int Q, int M);

// Exported abstraction artifact: the encoder plus its observation geometry,
// with an optional precomputed index -> label table for O(1) lookups.
struct PhiModel {
  Mlp encoder;
  int q = 0;
  int m = 0;
  int z_size = 0;
  std::vector<int> label_table;  // indexed by observation_index; empty until built

  void build_table();
  int label(const Observation& obs) const;
  std::vector<int> label_histogram() const;  // counts per label over the enumerated set
};

PhiModel phi_from_model(const AbstractionModel& model);
Checkpoint phi_to_checkpoint(const PhiModel& phi);
PhiModel phi_from_checkpoint(const Checkpoint& ckpt);

// index -> label, one line per enumerated observation.
std::string phi_label_table_text(const PhiModel& phi);

struct ZSearchEntry {
  int z = 0;
  double divergence = 0.0;  // evaluation L_div after training
};

struct ZSearchResult {
  std::vector<ZSearchEntry> table;
  int plateau_z = 0;  // smallest z within plateau_tol of the best divergence seen
};

ZSearchResult z_size_search(const AbstractionConfig& base, const std::vector<int>& z_values,
                            std::uint64_t seed, double plateau_tol = 0.05);

// Relative change of the trace tail: |last - first| / max(|first|, eps) over
// the final `fraction` of entries.
double tail_relative_change(const std::vector<double>& trace, double fraction);

}  // namespace maclearn
