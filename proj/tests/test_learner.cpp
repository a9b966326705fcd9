#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <sstream>

#include "flipit/learner.hpp"
#include "support/oracles.hpp"
#include "support/stats.hpp"

using namespace flipit;

namespace {

Knowledge knowledge_at(long long t, std::optional<long long> own,
                       std::optional<long long> opp) {
  Knowledge k;
  k.agent = 0;
  k.t = t;
  k.own_last_flip = own;
  k.last_known_flip = {own, opp};
  return k;
}

}  // namespace

TEST_CASE("state features are elapsed times, unknown counts from game start") {
  FeatureConfig fc;
  fc.scale = 1.0;
  CHECK(encode_state(knowledge_at(100, 90, 60), fc) == FeatureVec{10.0, 40.0});
  CHECK(encode_state(knowledge_at(5, std::nullopt, std::nullopt), fc) == FeatureVec{5.0, 5.0});

  Knowledge k;
  k.agent = 0;
  k.t = 20;
  k.own_last_flip = 10;
  k.last_known_flip = {10, 4, std::nullopt, 16};
  CHECK(encode_state(k, fc) == FeatureVec{10.0, 16.0, 20.0, 4.0});
  fc.include_time_remaining = true;
  CHECK(feature_count(4, fc) == 5);
  CHECK(encode_state(k, fc, 50).back() == 30.0);

  FeatureConfig scaled;  // default /100 keeps inputs near unit scale
  CHECK(encode_state(knowledge_at(100, 90, 60), scaled) == FeatureVec{0.1, 0.4});
}

TEST_CASE("a zero network outputs zero Q-values") {
  const Mlp net = Mlp::zeros({2, 8, 8, 2});
  const auto q = mlp_forward(net, FeatureVec{0.3, -0.7});
  CHECK(q[0] == 0.0);
  CHECK(q[1] == 0.0);
}

TEST_CASE("hidden rectifiers clamp negative pre-activations") {
  Mlp net = Mlp::zeros({1, 1, 2});
  net.weights[0][0] = 1.0;   // hidden = relu(x)
  net.weights[1][0] = 1.0;   // q0 = hidden
  net.weights[1][1] = -1.0;  // q1 = -hidden
  CHECK(mlp_forward(net, FeatureVec{2.0})[0] == 2.0);
  CHECK(mlp_forward(net, FeatureVec{-2.0})[0] == 0.0);  // clamped, not -2
  CHECK(mlp_forward(net, FeatureVec{3.0})[1] == -3.0);  // output stays linear
}

TEST_CASE("forward pass matches an independent re-implementation") {
  Rng rng(11);
  for (int round = 0; round < 100; ++round) {
    const int d_in = 1 + static_cast<int>(rng.below(6));
    Mlp net = Mlp::random_init({d_in, 1 + static_cast<int>(rng.below(32)),
                                1 + static_cast<int>(rng.below(32)), 2},
                               rng);
    FeatureVec x(static_cast<std::size_t>(d_in));
    for (auto& v : x) v = 4.0 * rng.uniform01() - 2.0;
    const auto q = mlp_forward(net, x);
    const auto ref = oracle::naive_forward(net, x);
    for (int a = 0; a < 2; ++a) {
      const double denom = std::max({std::abs(ref[a]), std::abs(q[a]), 1e-6});
      CHECK(std::abs(q[a] - ref[a]) / denom < 1e-12);
    }
  }
  CHECK_THROWS_AS(mlp_forward(Mlp::zeros({3, 4, 2}), FeatureVec{1.0}), std::invalid_argument);
}

namespace {

// central finite differences of the batch loss w.r.t. one parameter
double fd_derivative(Mlp net, const QBatch& batch, int layer, bool bias, std::size_t index) {
  const double h = 1e-5;
  MlpGrad g;
  MlpScratch s;
  auto& slot = bias ? net.biases[layer][index] : net.weights[layer][index];
  const double saved = slot;
  slot = saved + h;
  const double up = mlp_gradient(net, batch, g, s);
  slot = saved - h;
  const double down = mlp_gradient(net, batch, g, s);
  return (up - down) / (2.0 * h);
}

}  // namespace

TEST_CASE("analytic gradients agree with central finite differences") {
  Rng rng(5);
  for (int round = 0; round < 25; ++round) {
    const int d_in = 1 + static_cast<int>(rng.below(4));
    Mlp net = Mlp::zeros({d_in, 5, 4, 2});
    QBatch batch;
    do {
      net = Mlp::random_init({d_in, 5, 4, 2}, rng);
      batch = QBatch{};
      batch.size = 1 + static_cast<int>(rng.below(5));
      batch.states.resize(static_cast<std::size_t>(batch.size) * d_in);
      for (auto& v : batch.states) v = 3.0 * rng.uniform01() - 1.5;
      for (int b = 0; b < batch.size; ++b) {
        batch.actions.push_back(static_cast<int>(rng.below(2)));
        batch.targets.push_back(2.0 * rng.uniform01() - 1.0);
      }
    } while (oracle::min_hidden_preact(net, batch.states, batch.size) < 1e-3);  // kinks off the probe
    MlpGrad grad;
    MlpScratch scratch;
    mlp_gradient(net, batch, grad, scratch);
    for (int l = 0; l < net.n_layers(); ++l) {
      for (std::size_t i = 0; i < grad.weights[l].size(); i += 1 + rng.below(7)) {
        const double fd = fd_derivative(net, batch, l, false, i);
        const double an = grad.weights[l][i];
        CHECK(std::abs(an - fd) / std::max({std::abs(an), std::abs(fd), 1e-6}) < 1e-4);
      }
      for (std::size_t i = 0; i < grad.biases[l].size(); ++i) {
        const double fd = fd_derivative(net, batch, l, true, i);
        const double an = grad.biases[l][i];
        CHECK(std::abs(an - fd) / std::max({std::abs(an), std::abs(fd), 1e-6}) < 1e-4);
      }
    }
  }
}

TEST_CASE("a batch with zero TD error has zero gradient") {
  Rng rng(3);
  Mlp net = Mlp::random_init({2, 6, 6, 2}, rng);
  QBatch batch;
  batch.size = 4;
  for (int b = 0; b < 4; ++b) {
    const FeatureVec s{rng.uniform01(), rng.uniform01()};
    batch.states.insert(batch.states.end(), s.begin(), s.end());
    const int a = static_cast<int>(rng.below(2));
    batch.actions.push_back(a);
    batch.targets.push_back(mlp_forward(net, s)[a]);
  }
  MlpGrad grad;
  MlpScratch scratch;
  CHECK(mlp_gradient(net, batch, grad, scratch) == doctest::Approx(0.0));
  for (const auto& w : grad.weights)
    for (double v : w) CHECK(v == 0.0);
}

TEST_CASE("the untaken action's output head receives no gradient") {
  Rng rng(9);
  Mlp net = Mlp::random_init({2, 5, 5, 2}, rng);
  QBatch batch;
  batch.size = 1;
  batch.states = {0.4, 0.6};
  batch.actions = {1};
  batch.targets = {3.0};
  MlpGrad grad;
  MlpScratch scratch;
  mlp_gradient(net, batch, grad, scratch);
  const int hidden = net.dims[2];
  for (int i = 0; i < hidden; ++i) CHECK(grad.weights[2][static_cast<std::size_t>(i)] == 0.0);  // row 0
  CHECK(grad.biases[2][0] == 0.0);
  CHECK(grad.biases[2][1] != 0.0);
  CHECK_THROWS_AS(mlp_gradient(net, QBatch{}, grad, scratch), std::invalid_argument);
  QBatch bad = batch;
  bad.targets = {std::nan("")};
  CHECK_THROWS_AS(mlp_gradient(net, bad, grad, scratch), std::invalid_argument);
}

TEST_CASE("the first Adam step moves by about -alpha in the gradient direction") {
  Mlp net = Mlp::zeros({1, 1, 2});
  net.weights[0][0] = 0.7;
  AdamState adam = AdamState::zeros_like(net);
  MlpGrad grad = MlpGrad::zeros_like(net);
  grad.weights[0][0] = 0.3;   // positive gradient
  grad.weights[1][1] = -2.5;  // negative gradient
  const AdamConfig cfg{0.01, 0.9, 0.999, 1e-8};
  adam_step(net, adam, grad, cfg);
  CHECK(adam.step == 1);
  CHECK(net.weights[0][0] == doctest::Approx(0.7 - 0.01).epsilon(1e-6));
  CHECK(net.weights[1][1] == doctest::Approx(0.01).epsilon(1e-6));
}

TEST_CASE("zero gradients leave the parameters untouched") {
  Rng rng(2);
  Mlp net = Mlp::random_init({2, 4, 4, 2}, rng);
  const Mlp before = net;
  AdamState adam = AdamState::zeros_like(net);
  const MlpGrad grad = MlpGrad::zeros_like(net);
  for (int i = 0; i < 50; ++i) adam_step(net, adam, grad, {});
  CHECK(net.weights == before.weights);
  CHECK(net.biases == before.biases);
}

TEST_CASE("Adam drives a quadratic toward its minimum") {
  // f(w) = w^2 starting from w = 1, alpha = 0.1
  Mlp net = Mlp::zeros({1, 1, 2});
  net.weights[0][0] = 1.0;
  AdamState adam = AdamState::zeros_like(net);
  MlpGrad grad = MlpGrad::zeros_like(net);
  AdamConfig cfg;
  cfg.alpha = 0.1;
  for (int i = 0; i < 200; ++i) {
    grad.weights[0][0] = 2.0 * net.weights[0][0];
    adam_step(net, adam, grad, cfg);
  }
  CHECK(std::abs(net.weights[0][0]) < 0.1);
}

TEST_CASE("epsilon-greedy selection") {
  Mlp net = Mlp::zeros({2, 3, 2});
  net.biases[1] = {1.0, 2.0};
  Rng rng(4);
  const FeatureVec s{0.1, 0.2};
  SUBCASE("epsilon zero always takes the argmax") {
    for (int i = 0; i < 100; ++i) CHECK(select_action(net, s, 0.0, rng) == 1);
  }
  SUBCASE("an exact tie resolves to no-flip") {
    net.biases[1] = {3.0, 3.0};
    for (int i = 0; i < 100; ++i) CHECK(select_action(net, s, 0.0, rng) == 0);
  }
  SUBCASE("epsilon one is a fair coin") {
    long long flips = 0;
    const int n = 10000;
    for (int i = 0; i < n; ++i) flips += select_action(net, s, 1.0, rng);
    // 3 sigma around n/2
    CHECK(std::abs(static_cast<double>(flips) - n / 2.0) < 3.0 * std::sqrt(n * 0.25));
  }
  SUBCASE("epsilon outside [0,1] is rejected") {
    CHECK_THROWS_AS(select_action(net, s, 1.5, rng), std::invalid_argument);
  }
}

TEST_CASE("TD targets bootstrap from the next state unless terminal") {
  Mlp net = Mlp::zeros({2, 3, 2});
  net.biases[1] = {2.0, 1.5};
  const FeatureVec s{0.0, 0.0};
  std::vector<Transition> batch{
      {s, s, 0, 5.0, true},
      {s, s, 0, 1.0, false},
  };
  const auto targets = td_targets(net, batch, 0.9);
  CHECK(targets[0] == 5.0);
  CHECK(targets[1] == doctest::Approx(1.0 + 0.9 * 2.0));
  CHECK(td_targets(net, batch, 0.0)[1] == doctest::Approx(1.0));
}

TEST_CASE("the replay ring evicts oldest-first") {
  ReplayBuffer buf(2);
  const FeatureVec s{0.0};
  buf.push({s, s, 0, 1.0, false});
  buf.push({s, s, 0, 2.0, false});
  buf.push({s, s, 0, 3.0, false});
  CHECK(buf.size() == 2);
  std::vector<double> rewards{buf.at(0).reward, buf.at(1).reward};
  std::sort(rewards.begin(), rewards.end());
  CHECK(rewards == std::vector<double>{2.0, 3.0});
  buf.push({s, s, 0, 4.0, false});
  rewards = {buf.at(0).reward, buf.at(1).reward};
  std::sort(rewards.begin(), rewards.end());
  CHECK(rewards == std::vector<double>{3.0, 4.0});
}

TEST_CASE("replay sampling is uniform across slots") {
  ReplayBuffer buf(100);
  const FeatureVec s{0.0};
  for (int i = 0; i < 100; ++i) buf.push({s, s, 0, static_cast<double>(i), false});
  Rng rng(12);
  std::vector<std::size_t> indices;
  std::vector<long long> counts(100, 0);
  for (int draw = 0; draw < 6250; ++draw) {  // 6250 batches of 16 -> 1e5 picks
    buf.sample_indices(16, rng, indices);
    CHECK(indices.size() == 16);
    for (std::size_t i : indices) ++counts[i];
  }
  CHECK(teststat::chi2_uniform_ok(counts));
  CHECK_THROWS_AS(buf.sample_indices(101, rng, indices), std::invalid_argument);
}

TEST_CASE("training is skipped until one batch is buffered") {
  TrainConfig cfg;
  cfg.batch_size = 8;
  cfg.buffer_capacity = 64;
  QLearner learner(2, cfg, 77);
  const FeatureVec s{0.1, 0.1};
  for (int i = 0; i < 7; ++i) {
    learner.record({s, s, 0, 1.0, false});
    CHECK_FALSE(learner.train_step().has_value());
  }
  learner.record({s, s, 0, 1.0, false});
  CHECK(learner.train_step().has_value());
}

TEST_CASE("repeated training on one transition drives its TD error down") {
  TrainConfig cfg;
  cfg.batch_size = 8;
  cfg.buffer_capacity = 8;
  cfg.alpha = 3e-3;
  QLearner learner(2, cfg, 13);
  const FeatureVec s{0.25, 0.5};
  for (int i = 0; i < 8; ++i) learner.record({s, s, 1, 2.0, true});
  double loss = 1e9;
  for (int i = 0; i < 5000 && loss > 1e-6; ++i) loss = *learner.train_step();
  CHECK(loss < 1e-6);  // squared TD error < 1e-6 means |error| < 1e-3
  CHECK(learner.q_values(s)[1] == doctest::Approx(2.0).epsilon(1e-2));
}

TEST_CASE("epsilon decays multiplicatively to its floor") {
  TrainConfig cfg;
  cfg.batch_size = 1;
  cfg.buffer_capacity = 4;
  cfg.epsilon0 = 0.6;
  cfg.epsilon_decay = 0.5;
  cfg.epsilon_min = 0.1;
  QLearner learner(2, cfg, 1);
  const FeatureVec s{0.0, 0.0};
  learner.record({s, s, 0, 0.0, true});
  std::vector<double> seen{learner.epsilon()};
  for (int i = 0; i < 4; ++i) {
    learner.train_step();
    seen.push_back(learner.epsilon());
  }
  CHECK(seen == std::vector<double>{0.6, 0.3, 0.15, 0.1, 0.1});
  for (std::size_t i = 1; i < seen.size(); ++i) CHECK(seen[i] <= seen[i - 1]);
}

TEST_CASE("checkpoints round-trip bit-exactly") {
  TrainConfig cfg;
  cfg.batch_size = 4;
  cfg.buffer_capacity = 32;
  cfg.target_sync_period = 3;
  QLearner learner(3, cfg, 2025);
  Rng rng(6);
  for (int i = 0; i < 200; ++i) {
    const FeatureVec s{rng.uniform01(), rng.uniform01(), rng.uniform01()};
    const FeatureVec s2{rng.uniform01(), rng.uniform01(), rng.uniform01()};
    learner.record({s, s2, static_cast<int>(rng.below(2)), rng.uniform01(), i % 50 == 0});
    learner.train_step();
  }
  std::ostringstream out;
  learner.save(out, "cafe1234");
  const std::string text = out.str();
  CHECK(text.rfind("flipit-qlearner v1", 0) == 0);

  std::istringstream in(text);
  QLearner loaded = QLearner::load(in);
  CHECK(loaded.saved_config_hash() == "cafe1234");
  CHECK(loaded.epsilon() == learner.epsilon());
  CHECK(loaded.train_steps() == learner.train_steps());
  CHECK(loaded.adam().step == learner.adam().step);
  CHECK(loaded.net().dims == learner.net().dims);
  for (std::size_t l = 0; l < loaded.net().weights.size(); ++l) {
    CHECK(loaded.net().weights[l] == learner.net().weights[l]);
    CHECK(loaded.net().biases[l] == learner.net().biases[l]);
    CHECK(loaded.adam().m_w[l] == learner.adam().m_w[l]);
    CHECK(loaded.adam().v_w[l] == learner.adam().v_w[l]);
  }
  // a second save of the loaded learner reproduces the bytes exactly
  std::ostringstream again;
  loaded.save(again, "cafe1234");
  CHECK(again.str() == text);

  std::istringstream junk("flipit-qlearner v2");
  CHECK_THROWS_AS(QLearner::load(junk), std::runtime_error);
}

TEST_CASE("tabular update applies the Bellman correction") {
  QTable q(3);
  q.at(1, 0) = 2.0;
  q.at(1, 1) = 1.0;
  tabular_q_update(q, 0, 1, 1.0, 1, 0.5, 0.9);
  CHECK(q.at(0, 1) == doctest::Approx(0.5 * (1.0 + 0.9 * 2.0)));
  const double before = q.at(0, 1);
  tabular_q_update(q, 0, 1, 5.0, 1, 0.0, 0.9);  // alpha = 0 leaves it unchanged
  CHECK(q.at(0, 1) == before);
}

TEST_CASE("tabular Q-learning matches value iteration on a five-state chain") {
  // states 0..4; action 1 walks right for -0.1 until the terminal +1 at 4;
  // action 0 stays put for 0
  TabularMdp mdp;
  mdp.n_states = 5;
  mdp.n_actions = 2;
  mdp.transitions.resize(5, std::vector<std::vector<TabularMdp::Outcome>>(2));
  for (int s = 0; s < 5; ++s) {
    mdp.transitions[s][0] = {{1.0, s, 0.0, false}};
    if (s < 4)
      mdp.transitions[s][1] = {{1.0, s + 1, s + 1 == 4 ? 1.0 : -0.1, s + 1 == 4}};
    else
      mdp.transitions[s][1] = {{1.0, s, -0.1, false}};
  }
  const double gamma = 0.9;
  const auto q_star = value_iteration_q(mdp, gamma);

  QTable table(5);
  for (int sweep = 0; sweep < 2000; ++sweep)
    for (int s = 0; s < 5; ++s)
      for (int a = 0; a < 2; ++a) {
        const auto& outcome = mdp.transitions[s][a][0];
        tabular_q_update(table, s, a, outcome.reward, outcome.next, 0.5, gamma, outcome.terminal);
      }
  for (int s = 0; s < 5; ++s)
    for (int a = 0; a < 2; ++a)
      CHECK(std::abs(table.at(s, a) - q_star[static_cast<std::size_t>(s) * 2 + a]) < 1e-6);
}
