#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "flipit/engine.hpp"
#include "flipit/rng.hpp"

namespace flipit {

using FeatureVec = std::vector<double>;

struct FeatureConfig {
  double scale = 100.0;  // elapsed times are divided by this
  bool include_time_remaining = false;
};

int feature_count(int n_agents, const FeatureConfig& fc);

// Q-network input for one agent: time since its own last flip, then time
// since each opponent's last known flip (ascending agent id). A time that
// was never observed counts from the game start. With time_remaining
// enabled, the iterations left until realized_end are appended.
FeatureVec encode_state(const Knowledge& k, const FeatureConfig& fc, long long realized_end = 0);

// Fully connected net, rectifier on hidden layers, linear output. The output
// layer stays linear so Q-values can go negative when flip costs dominate.
struct Mlp {
  std::vector<int> dims;                      // {d_in, h1, ..., 2}
  std::vector<std::vector<double>> weights;   // weights[l]: dims[l+1] x dims[l], row-major
  std::vector<std::vector<double>> biases;    // biases[l]: dims[l+1]

  static Mlp zeros(std::vector<int> dims);
  // He-uniform weights, zero biases.
  static Mlp random_init(std::vector<int> dims, Rng& rng);

  int n_layers() const { return static_cast<int>(weights.size()); }
  int input_dim() const { return dims.front(); }
  int output_dim() const { return dims.back(); }
};

// Q-values for both actions; throws on an input of the wrong width.
std::array<double, 2> mlp_forward(const Mlp& net, std::span<const double> state);

struct MlpGrad {
  std::vector<std::vector<double>> weights;
  std::vector<std::vector<double>> biases;
  static MlpGrad zeros_like(const Mlp& net);
  void zero();
};

// Flat minibatch for the regression step: one row of `states` per sample,
// a taken action and a TD target per sample.
struct QBatch {
  int size = 0;
  std::vector<double> states;   // size x d_in, row-major
  std::vector<int> actions;     // 0 = no-flip, 1 = flip
  std::vector<double> targets;
};

// Gradient of the mean squared TD error over the taken actions only.
// Returns the loss. Scratch buffers grow on demand and can be reused.
struct MlpScratch {
  std::vector<std::vector<double>> acts;
  std::vector<std::vector<double>> deltas;
};
double mlp_gradient(const Mlp& net, const QBatch& batch, MlpGrad& out, MlpScratch& scratch);

struct AdamConfig {
  double alpha = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  std::vector<std::vector<double>> m_w, v_w, m_b, v_b;
  long long step = 0;
  static AdamState zeros_like(const Mlp& net);
};

// One bias-corrected Adam update of every parameter.
void adam_step(Mlp& net, AdamState& state, const MlpGrad& grad, const AdamConfig& cfg);

// With probability epsilon a uniform action, otherwise the argmax Q-value;
// an exact tie resolves to no-flip.
int select_action(const Mlp& net, std::span<const double> state, double epsilon, Rng& rng);

struct Transition {
  FeatureVec state;
  FeatureVec next_state;
  int action = 0;
  double reward = 0.0;
  bool terminal = false;
};

// r for terminal transitions, else r + gamma * max_a' Q(s', a').
std::vector<double> td_targets(const Mlp& net, std::span<const Transition> batch, double gamma);

// Fixed-capacity ring; eviction is strictly oldest-first.
class ReplayBuffer {
 public:
  explicit ReplayBuffer(std::size_t capacity);
  void push(Transition t);
  std::size_t size() const { return size_; }
  std::size_t capacity() const { return capacity_; }
  const Transition& at(std::size_t i) const { return slots_[i]; }
  // Uniform sample of `count` distinct slot indices.
  void sample_indices(std::size_t count, Rng& rng, std::vector<std::size_t>& out) const;

 private:
  std::size_t capacity_;
  std::size_t size_ = 0;
  std::size_t cursor_ = 0;
  std::vector<Transition> slots_;
};

struct TrainConfig {
  double gamma = 0.99;
  double alpha = 1e-3;
  double epsilon0 = 0.6;
  double epsilon_min = 0.01;
  double epsilon_decay = 0.999;  // multiplicative, applied per training step
  int batch_size = 32;
  std::size_t buffer_capacity = 10000;
  int hidden1 = 64;
  int hidden2 = 64;
  long long target_sync_period = 0;  // 0 disables the target copy
  int train_period = 1;              // environment steps per training step
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  FeatureConfig features;

  void validate() const;
};

// Deep Q-learner: the net, its Adam state, the replay ring and the
// exploration schedule. One instance is owned by one training loop.
class QLearner {
 public:
  QLearner(int n_features, const TrainConfig& cfg, std::uint64_t seed);

  int act(std::span<const double> state, Rng& rng);  // epsilon-greedy at the current epsilon
  std::array<double, 2> q_values(std::span<const double> state) const;
  void record(Transition t) { buffer_.push(std::move(t)); }

  // One minibatch update; nullopt (skipped) while the buffer holds fewer
  // than batch_size transitions. Returns the pre-update loss otherwise.
  std::optional<double> train_step();

  double epsilon() const { return epsilon_; }
  long long train_steps() const { return train_steps_; }
  const Mlp& net() const { return net_; }
  const ReplayBuffer& buffer() const { return buffer_; }
  const TrainConfig& config() const { return cfg_; }
  const AdamState& adam() const { return adam_; }

  void save(std::ostream& out, const std::string& config_hash) const;
  static QLearner load(std::istream& in);
  const std::string& saved_config_hash() const { return config_hash_; }

 private:
  QLearner() = default;

  TrainConfig cfg_;
  Mlp net_;
  Mlp target_net_;
  AdamState adam_;
  ReplayBuffer buffer_{1};
  double epsilon_ = 0.6;
  long long train_steps_ = 0;
  Rng rng_{0};
  std::string config_hash_;

  // scratch reused across train steps
  MlpGrad grad_;
  MlpScratch scratch_;
  QBatch batch_;
  std::vector<std::size_t> indices_;
  std::vector<double> next_states_;
  std::vector<std::vector<double>> next_acts_;
};

// ---- Tabular oracles ------------------------------------------------------

class QTable {
 public:
  QTable(int n_states, int n_actions = 2)
      : n_states_(n_states), n_actions_(n_actions),
        q_(static_cast<std::size_t>(n_states) * n_actions, 0.0) {}
  double& at(int s, int a) { return q_[static_cast<std::size_t>(s) * n_actions_ + a]; }
  double at(int s, int a) const { return q_[static_cast<std::size_t>(s) * n_actions_ + a]; }
  double max_q(int s) const;
  int greedy_action(int s) const;  // tie resolves to action 0
  int n_states() const { return n_states_; }
  int n_actions() const { return n_actions_; }

 private:
  int n_states_;
  int n_actions_;
  std::vector<double> q_;
};

// Q(s,a) += alpha * (r + gamma * max_a' Q(s',a') - Q(s,a)); the bootstrap
// term is dropped on terminal transitions.
void tabular_q_update(QTable& table, int s, int a, double r, int s_next, double alpha,
                      double gamma, bool terminal = false);

struct TabularMdp {
  struct Outcome {
    double prob = 1.0;
    int next = 0;
    double reward = 0.0;
    bool terminal = false;
  };
  int n_states = 0;
  int n_actions = 0;
  std::vector<std::vector<std::vector<Outcome>>> transitions;  // [state][action]
};

// Exact Q* by sweeping the Bellman optimality operator to a fixed point.
std::vector<double> value_iteration_q(const TabularMdp& mdp, double gamma, double tol = 1e-12,
                                      int max_sweeps = 1000000);

}  // namespace flipit
