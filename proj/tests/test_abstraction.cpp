#include <doctest.h>

#include <array>
#include <cmath>
#include <set>

#include "maclearn/abstraction.hpp"

using namespace maclearn;

namespace {

AbstractionModel miniature_model(int Q, int M, int z, std::uint64_t seed,
                                 std::size_t n_experts = 2) {
  AbstractionModel model;
  model.q = Q;
  model.m = M;
  model.z_size = z;
  model.encoder = Mlp::from_sizes({onehot_dim(Q, M), 10, z},
                                  {Activation::Relu, Activation::Softmax}, derive_seed(seed, 1));
  for (std::size_t g = 0; g < n_experts; ++g) {
    model.decoders.push_back(Mlp::from_sizes({z, 8, kNumActions},
                                             {Activation::Relu, Activation::Softmax},
                                             derive_seed(seed, 50 + g)));
  }
  return model;
}

// Saturates the encoder so every observation maps to the given label with an
// exactly one-hot softmax output.
void force_constant_label(AbstractionModel& model, int label) {
  auto& last = model.encoder.layers().back();
  last.w.setZero();
  last.b.setConstant(-1000.0);
  last.b(label) = 1000.0;
  for (std::size_t l = 0; l + 1 < model.encoder.layers().size(); ++l) {
    model.encoder.layers()[l].w.setZero();
    model.encoder.layers()[l].b.setZero();
  }
}

void force_uniform_encoder(AbstractionModel& model) {
  auto& last = model.encoder.layers().back();
  last.w.setZero();
  last.b.setZero();
}

void force_uniform_decoder(Mlp& decoder) {
  for (auto& layer : decoder.layers()) {
    layer.w.setZero();
    layer.b.setZero();
  }
}

}  // namespace

TEST_CASE("one-hot encoding dimensions and block structure") {
  CHECK(onehot_dim(10, 1) == 31);
  CHECK(onehot_dim(0, 1) == 11);
  CHECK(onehot_dim(10, 2) == 51);
  const auto all = enumerate_observations(10, 1);
  // One active entry per block: buf_now, history buf, action, dl message.
  for (const auto& obs : all) {
    const Eigen::VectorXd v = encode_obs_onehot(obs, 10, 1);
    REQUIRE(v.size() == 31);
    CHECK(v.segment(0, 11).sum() == doctest::Approx(1.0));
    CHECK(v.segment(11, 11).sum() == doctest::Approx(1.0));
    CHECK(v.segment(22, 6).sum() == doctest::Approx(1.0));
    CHECK(v.segment(28, 3).sum() == doctest::Approx(1.0));
  }
  Observation zero_buf;
  zero_buf.buf_now = 0;
  zero_buf.history = {HistoryEntry{}};
  const Eigen::VectorXd v = encode_obs_onehot(zero_buf, 10, 1);
  CHECK(v(0) == 1.0);
  CHECK(v.segment(1, 10).isZero());
}

TEST_CASE("one-hot encoding is injective over the full space") {
  const auto all = enumerate_observations(10, 1);
  std::set<std::string> seen;
  for (const auto& obs : all) {
    const Eigen::VectorXd v = encode_obs_onehot(obs, 10, 1);
    std::string key;
    for (Eigen::Index i = 0; i < v.size(); ++i) key += v(i) > 0.5 ? '1' : '0';
    seen.insert(key);
  }
  CHECK(seen.size() == all.size());
}

TEST_CASE("kl divergence identities") {
  SUBCASE("identical distributions give zero") {
    const std::array<double, 4> p{0.1, 0.2, 0.3, 0.4};
    CHECK(kl_divergence(p, p) == doctest::Approx(0.0).epsilon(1e-15));
  }
  SUBCASE("one-hot vs fair coin is ln 2") {
    const std::array<double, 2> p{1.0, 0.0};
    const std::array<double, 2> q{0.5, 0.5};
    CHECK(kl_divergence(p, q) == doctest::Approx(std::log(2.0)).epsilon(1e-12));
  }
  SUBCASE("support mismatch is a contract error") {
    const std::array<double, 2> p{0.5, 0.5};
    const std::array<double, 3> q{0.4, 0.3, 0.3};
    CHECK_THROWS_AS(kl_divergence(p, q), ContractError);
  }
  SUBCASE("non-negative on random distribution pairs") {
    Rng rng(44);
    for (int trial = 0; trial < 1000; ++trial) {
      std::array<double, 6> p{}, q{};
      double ps = 0.0, qs = 0.0;
      for (int i = 0; i < 6; ++i) {
        p[static_cast<std::size_t>(i)] = rng.uniform();
        q[static_cast<std::size_t>(i)] = rng.uniform() + 1e-6;
        ps += p[static_cast<std::size_t>(i)];
        qs += q[static_cast<std::size_t>(i)];
      }
      for (int i = 0; i < 6; ++i) {
        p[static_cast<std::size_t>(i)] /= ps;
        q[static_cast<std::size_t>(i)] /= qs;
      }
      CHECK(kl_divergence(p, q) >= -1e-12);
    }
  }
}

TEST_CASE("divergence loss analytic cases") {
  const std::vector<Observation> batch{observation_from_index(20, 1, 1)};

  SUBCASE("uniform decoder against a one-hot expert is ln 6") {
    AbstractionModel model = miniature_model(1, 1, 3, 5, 1);
    force_uniform_decoder(model.decoders[0]);
    // Expert pinned to action 0 regardless of the observation.
    const std::vector<PolicyFn> experts{[](const Observation&) {
      return PolicyDistribution::one_hot(Action{DataAction::NoOp, SignalAction::Silent});
    }};
    CHECK(divergence_loss(model, batch, experts) ==
          doctest::Approx(std::log(6.0)).epsilon(1e-9));
  }
  SUBCASE("matching decoders give zero") {
    AbstractionModel model = miniature_model(1, 1, 3, 5, 1);
    force_uniform_decoder(model.decoders[0]);
    const std::vector<PolicyFn> experts{[](const Observation&) {
      return PolicyDistribution::uniform();
    }};
    CHECK(divergence_loss(model, batch, experts) == doctest::Approx(0.0).epsilon(1e-12));
  }
  SUBCASE("loss is non-negative for the real experts") {
    AbstractionModel model = miniature_model(1, 1, 3, 5);
    const std::vector<PolicyFn> experts{grant_based_expert, grant_free_expert};
    CHECK(divergence_loss(model, enumerate_observations(1, 1), experts) >= 0.0);
  }
}

TEST_CASE("prior loss analytic cases") {
  const std::vector<Observation> batch = enumerate_observations(1, 1);
  SUBCASE("uniform encoder gives zero") {
    AbstractionModel model = miniature_model(1, 1, 8, 6);
    force_uniform_encoder(model);
    CHECK(prior_loss(model, batch) == doctest::Approx(0.0).epsilon(1e-12));
  }
  SUBCASE("one-hot encoder with z=8 gives ln 8") {
    AbstractionModel model = miniature_model(1, 1, 8, 6);
    force_constant_label(model, 3);
    CHECK(prior_loss(model, batch) == doctest::Approx(std::log(8.0)).epsilon(1e-9));
  }
  SUBCASE("bounded above by ln z") {
    AbstractionModel model = miniature_model(1, 1, 5, 6);
    CHECK(prior_loss(model, batch) <= std::log(5.0) + 1e-12);
    CHECK(prior_loss(model, batch) >= 0.0);
  }
}

TEST_CASE("total loss composition and beta linearity") {
  AbstractionModel model = miniature_model(1, 1, 4, 8);
  const std::vector<Observation> batch = enumerate_observations(1, 1);
  const std::vector<PolicyFn> experts{grant_based_expert, grant_free_expert};
  const double prior = prior_loss(model, batch);
  const double div = divergence_loss(model, batch, experts);
  CHECK(total_loss(model, batch, experts, 0.0) == doctest::Approx(prior).epsilon(1e-12));
  const double beta = 37.0;
  const double t1 = total_loss(model, batch, experts, beta);
  const double t2 = total_loss(model, batch, experts, 2 * beta);
  CHECK(t1 == doctest::Approx(prior + beta * div).epsilon(1e-12));
  CHECK(t2 - t1 == doctest::Approx(beta * div).epsilon(1e-9));
}

TEST_CASE("abstraction gradients match finite differences on a miniature instance") {
  AbstractionModel model = miniature_model(1, 1, 3, 123);
  const std::vector<Observation> batch = enumerate_observations(1, 1);
  const std::vector<PolicyFn> experts{grant_based_expert, grant_free_expert};
  const double beta = 2.5;

  MlpGradients enc_grads;
  std::vector<MlpGradients> dec_grads;
  total_loss_gradients(model, batch, experts, beta, enc_grads, dec_grads);

  const double h = 1e-5;
  const double rel_tol = 1e-4;
  auto loss_now = [&]() { return total_loss(model, batch, experts, beta); };
  auto check_param = [&](double& param, double analytic) {
    const double orig = param;
    param = orig + h;
    const double up = loss_now();
    param = orig - h;
    const double down = loss_now();
    param = orig;
    const double fd = (up - down) / (2 * h);
    const double denom = std::max({std::abs(fd), std::abs(analytic), 1e-5});
    CHECK(std::abs(fd - analytic) / denom < rel_tol);
  };

  for (std::size_t l = 0; l < model.encoder.layers().size(); ++l) {
    auto& layer = model.encoder.layers()[l];
    for (Eigen::Index r = 0; r < layer.w.rows(); ++r)
      for (Eigen::Index c = 0; c < layer.w.cols(); ++c)
        check_param(layer.w(r, c), enc_grads.dw[l](r, c));
    for (Eigen::Index r = 0; r < layer.b.size(); ++r)
      check_param(layer.b(r), enc_grads.db[l](r));
  }
  for (std::size_t g = 0; g < model.decoders.size(); ++g) {
    for (std::size_t l = 0; l < model.decoders[g].layers().size(); ++l) {
      auto& layer = model.decoders[g].layers()[l];
      for (Eigen::Index r = 0; r < layer.w.rows(); ++r)
        for (Eigen::Index c = 0; c < layer.w.cols(); ++c)
          check_param(layer.w(r, c), dec_grads[g].dw[l](r, c));
      for (Eigen::Index r = 0; r < layer.b.size(); ++r)
        check_param(layer.b(r), dec_grads[g].db[l](r));
    }
  }
}

TEST_CASE("miniature training is deterministic and improves the divergence") {
  AbstractionConfig cfg;
  cfg.z_size = 4;
  cfg.beta = 100.0;
  cfg.lr = 2e-3;
  cfg.episodes = 250;
  cfg.encoder_hidden = {24};
  cfg.decoder_hidden = {12};
  cfg.buffer_capacity = 1;
  cfg.memory_len = 1;

  const AbstractionResult a = train_abstraction(cfg, 7);
  const AbstractionResult b = train_abstraction(cfg, 7);
  for (std::size_t l = 0; l < a.model.encoder.layers().size(); ++l) {
    CHECK(a.model.encoder.layers()[l].w == b.model.encoder.layers()[l].w);
    CHECK(a.model.encoder.layers()[l].b == b.model.encoder.layers()[l].b);
  }
  CHECK(a.trace.l_total.size() == 250);
  CHECK(a.trace.l_div.front() > a.trace.l_div.back());
  for (std::size_t i = 0; i < a.trace.l_div.size(); ++i) {
    CHECK(a.trace.l_div[i] >= 0.0);
    CHECK(a.trace.l_prior[i] >= -1e-12);
    CHECK(a.trace.l_prior[i] <= std::log(4.0) + 1e-9);
    CHECK(a.trace.l_total[i] ==
          doctest::Approx(a.trace.l_prior[i] + cfg.beta * a.trace.l_div[i]).epsilon(1e-9));
  }
}

TEST_CASE("phi labels are deterministic, exclusive, and bounded by z") {
  AbstractionConfig cfg;
  cfg.z_size = 5;
  cfg.beta = 100.0;
  cfg.lr = 2e-3;
  cfg.episodes = 150;
  cfg.encoder_hidden = {24};
  cfg.decoder_hidden = {12};
  cfg.buffer_capacity = 1;
  cfg.memory_len = 1;
  const AbstractionResult trained = train_abstraction(cfg, 11);
  const auto all = enumerate_observations(1, 1);

  std::set<int> labels;
  for (const auto& obs : all) {
    const int k = phi_label(trained.model.encoder, obs, 1, 1);
    CHECK(k == phi_label(trained.model.encoder, obs, 1, 1));
    CHECK(k >= 0);
    CHECK(k < cfg.z_size);
    labels.insert(k);
  }
  CHECK(static_cast<int>(labels.size()) <= cfg.z_size);

  const PhiModel phi = phi_from_model(trained.model);
  for (const auto& obs : all) {
    CHECK(phi.label(obs) == phi_label(trained.model.encoder, obs, 1, 1));
  }
  int total = 0;
  for (int c : phi.label_histogram()) total += c;
  CHECK(total == static_cast<int>(all.size()));
}

TEST_CASE("a single label cannot beat a larger codomain") {
  AbstractionConfig base;
  base.beta = 100.0;
  base.lr = 2e-3;
  base.episodes = 400;
  base.encoder_hidden = {24};
  base.decoder_hidden = {12};
  base.buffer_capacity = 2;
  base.memory_len = 1;

  base.z_size = 1;
  const AbstractionResult z1 = train_abstraction(base, 9);
  base.z_size = 8;
  const AbstractionResult z8 = train_abstraction(base, 9);
  CHECK(z1.eval_divergence > z8.eval_divergence);
  // With one label the prior is exactly zero.
  CHECK(z1.trace.l_prior.back() == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("z search reports a plateau and roughly monotone divergences") {
  AbstractionConfig base;
  base.beta = 100.0;
  base.lr = 2e-3;
  base.episodes = 300;
  base.encoder_hidden = {24};
  base.decoder_hidden = {12};
  base.buffer_capacity = 1;
  base.memory_len = 1;

  const ZSearchResult result = z_size_search(base, {1, 2, 3, 6}, 21, 0.10);
  REQUIRE(result.table.size() == 4);
  CHECK(result.table.front().z == 1);
  // Larger codomains can only help, up to training noise.
  CHECK(result.table.back().divergence <= result.table.front().divergence + 0.05);
  CHECK(result.plateau_z >= 1);
  CHECK(result.plateau_z <= 6);
  CHECK_THROWS_AS(z_size_search(base, {3, 1}, 21), ContractError);
}

TEST_CASE("phi checkpoints round-trip exactly") {
  AbstractionConfig cfg;
  cfg.z_size = 3;
  cfg.beta = 50.0;
  cfg.lr = 2e-3;
  cfg.episodes = 60;
  cfg.encoder_hidden = {16};
  cfg.decoder_hidden = {8};
  cfg.buffer_capacity = 1;
  cfg.memory_len = 1;
  const AbstractionResult trained = train_abstraction(cfg, 3);
  const PhiModel phi = phi_from_model(trained.model);

  const std::string text = serialize_checkpoint(phi_to_checkpoint(phi));
  const PhiModel restored = phi_from_checkpoint(parse_checkpoint(text));
  CHECK(restored.z_size == phi.z_size);
  CHECK(restored.label_table == phi.label_table);
  for (std::size_t l = 0; l < phi.encoder.layers().size(); ++l) {
    CHECK(restored.encoder.layers()[l].w == phi.encoder.layers()[l].w);
    CHECK(restored.encoder.layers()[l].b == phi.encoder.layers()[l].b);
  }
  // Truncated files are integrity errors.
  CHECK_THROWS_AS(parse_checkpoint(text.substr(0, text.size() / 2)), IntegrityError);
}

TEST_CASE("training trace tail change helper") {
  std::vector<double> flat(100, 2.0);
  CHECK(tail_relative_change(flat, 0.1) == doctest::Approx(0.0));
  std::vector<double> moving;
  for (int i = 0; i < 100; ++i) moving.push_back(1.0 + i * 0.01);
  CHECK(tail_relative_change(moving, 0.1) > 0.0);
}
