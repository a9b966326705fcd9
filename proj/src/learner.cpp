#include "flipit/learner.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>

namespace flipit {

int feature_count(int n_agents, const FeatureConfig& fc) {
  return n_agents + (fc.include_time_remaining ? 1 : 0);
}

FeatureVec encode_state(const Knowledge& k, const FeatureConfig& fc, long long realized_end) {
  const int n = static_cast<int>(k.last_known_flip.size());
  FeatureVec f;
  f.reserve(static_cast<std::size_t>(feature_count(n, fc)));
  // value_or(0): an unobserved flip time counts from the game start
  f.push_back(static_cast<double>(k.t - k.own_last_flip.value_or(0)) / fc.scale);
  for (int j = 0; j < n; ++j) {
    if (j == k.agent) continue;
    f.push_back(static_cast<double>(k.t - k.last_known_flip[static_cast<std::size_t>(j)].value_or(0)) /
                fc.scale);
  }
  if (fc.include_time_remaining)
    f.push_back(static_cast<double>(realized_end - k.t) / fc.scale);
  return f;
}

// ---- Mlp -------------------------------------------------------------------

namespace {

void check_dims(const std::vector<int>& dims) {
  if (dims.size() < 2) throw std::invalid_argument("mlp: need at least input and output dims");
  for (int d : dims)
    if (d < 1) throw std::invalid_argument("mlp: every layer width must be >= 1");
  if (dims.back() != 2) throw std::invalid_argument("mlp: output width must be 2 (one Q-value per action)");
}

}  // namespace

Mlp Mlp::zeros(std::vector<int> dims) {
  check_dims(dims);
  Mlp net;
  net.dims = std::move(dims);
  for (std::size_t l = 0; l + 1 < net.dims.size(); ++l) {
    net.weights.emplace_back(static_cast<std::size_t>(net.dims[l + 1]) * net.dims[l], 0.0);
    net.biases.emplace_back(static_cast<std::size_t>(net.dims[l + 1]), 0.0);
  }
  return net;
}

Mlp Mlp::random_init(std::vector<int> dims, Rng& rng) {
  Mlp net = zeros(std::move(dims));
  for (std::size_t l = 0; l < net.weights.size(); ++l) {
    const double limit = std::sqrt(6.0 / net.dims[l]);
    for (double& w : net.weights[l]) w = (2.0 * rng.uniform01() - 1.0) * limit;
  }
  return net;
}

namespace {

// Dense forward over a row-major batch; hidden activations are rectified,
// the last layer stays linear.
void batch_forward(const Mlp& net, const double* x, int batch,
                   std::vector<std::vector<double>>& acts) {
  const int n_layers = net.n_layers();
  acts.resize(static_cast<std::size_t>(n_layers) + 1);
  acts[0].assign(x, x + static_cast<std::size_t>(batch) * net.input_dim());
  for (int l = 0; l < n_layers; ++l) {
    const int in = net.dims[static_cast<std::size_t>(l)];
    const int out = net.dims[static_cast<std::size_t>(l) + 1];
    const bool hidden = l + 1 < n_layers;
    auto& y = acts[static_cast<std::size_t>(l) + 1];
    y.resize(static_cast<std::size_t>(batch) * out);
    const double* w = net.weights[static_cast<std::size_t>(l)].data();
    const double* bias = net.biases[static_cast<std::size_t>(l)].data();
    const double* in_row = acts[static_cast<std::size_t>(l)].data();
    double* out_row = y.data();
    for (int b = 0; b < batch; ++b, in_row += in, out_row += out) {
      for (int o = 0; o < out; ++o) {
        const double* wr = w + static_cast<std::size_t>(o) * in;
        double s = bias[o];
#pragma omp simd reduction(+ : s)
        for (int i = 0; i < in; ++i) s += wr[i] * in_row[i];
        out_row[o] = hidden && s < 0.0 ? 0.0 : s;
      }
    }
  }
}

}  // namespace

std::array<double, 2> mlp_forward(const Mlp& net, std::span<const double> state) {
  if (static_cast<int>(state.size()) != net.input_dim())
    throw std::invalid_argument("mlp_forward: state width does not match the input layer");
  thread_local MlpScratch scratch;
  batch_forward(net, state.data(), 1, scratch.acts);
  const auto& out = scratch.acts.back();
  return {out[0], out[1]};
}

MlpGrad MlpGrad::zeros_like(const Mlp& net) {
  MlpGrad g;
  for (std::size_t l = 0; l < net.weights.size(); ++l) {
    g.weights.emplace_back(net.weights[l].size(), 0.0);
    g.biases.emplace_back(net.biases[l].size(), 0.0);
  }
  return g;
}

void MlpGrad::zero() {
  for (auto& w : weights) std::fill(w.begin(), w.end(), 0.0);
  for (auto& b : biases) std::fill(b.begin(), b.end(), 0.0);
}

double mlp_gradient(const Mlp& net, const QBatch& batch, MlpGrad& out, MlpScratch& scratch) {
  const int n = batch.size;
  if (n < 1) throw std::invalid_argument("mlp_gradient: empty batch");
  if (batch.states.size() != static_cast<std::size_t>(n) * net.input_dim() ||
      batch.actions.size() != static_cast<std::size_t>(n) ||
      batch.targets.size() != static_cast<std::size_t>(n))
    throw std::invalid_argument("mlp_gradient: batch arrays have inconsistent sizes");
  for (double v : batch.states)
    if (!std::isfinite(v)) throw std::invalid_argument("mlp_gradient: non-finite state input");
  for (double v : batch.targets)
    if (!std::isfinite(v)) throw std::invalid_argument("mlp_gradient: non-finite target");

  if (out.weights.empty()) out = MlpGrad::zeros_like(net);
  out.zero();
  batch_forward(net, batch.states.data(), n, scratch.acts);

  const int n_layers = net.n_layers();
  scratch.deltas.resize(static_cast<std::size_t>(n_layers));
  // loss and the top-layer error: only the taken action's output contributes
  const auto& q = scratch.acts[static_cast<std::size_t>(n_layers)];
  auto& top = scratch.deltas[static_cast<std::size_t>(n_layers) - 1];
  top.assign(static_cast<std::size_t>(n) * 2, 0.0);
  double loss = 0.0;
  for (int b = 0; b < n; ++b) {
    const int a = batch.actions[static_cast<std::size_t>(b)];
    if (a != 0 && a != 1) throw std::invalid_argument("mlp_gradient: action must be 0 or 1");
    const double err = q[static_cast<std::size_t>(b) * 2 + a] - batch.targets[static_cast<std::size_t>(b)];
    loss += err * err;
    top[static_cast<std::size_t>(b) * 2 + a] = 2.0 * err / n;
  }
  loss /= n;

  for (int l = n_layers - 1; l >= 0; --l) {
    const int in = net.dims[static_cast<std::size_t>(l)];
    const int width = net.dims[static_cast<std::size_t>(l) + 1];
    const auto& delta = scratch.deltas[static_cast<std::size_t>(l)];
    const auto& act_in = scratch.acts[static_cast<std::size_t>(l)];
    auto& dw = out.weights[static_cast<std::size_t>(l)];
    auto& db = out.biases[static_cast<std::size_t>(l)];
    for (int b = 0; b < n; ++b) {
      const double* d_row = delta.data() + static_cast<std::size_t>(b) * width;
      const double* a_row = act_in.data() + static_cast<std::size_t>(b) * in;
      for (int o = 0; o < width; ++o) {
        const double d = d_row[o];
        if (d == 0.0) continue;
        double* dw_row = dw.data() + static_cast<std::size_t>(o) * in;
        for (int i = 0; i < in; ++i) dw_row[i] += d * a_row[i];
        db[static_cast<std::size_t>(o)] += d;
      }
    }
    if (l == 0) break;
    // error for the layer below, masked by the rectifier
    auto& below = scratch.deltas[static_cast<std::size_t>(l) - 1];
    below.assign(static_cast<std::size_t>(n) * in, 0.0);
    const double* w = net.weights[static_cast<std::size_t>(l)].data();
    for (int b = 0; b < n; ++b) {
      const double* d_row = delta.data() + static_cast<std::size_t>(b) * width;
      double* out_row = below.data() + static_cast<std::size_t>(b) * in;
      for (int o = 0; o < width; ++o) {
        const double d = d_row[o];
        if (d == 0.0) continue;
        const double* wr = w + static_cast<std::size_t>(o) * in;
        for (int i = 0; i < in; ++i) out_row[i] += d * wr[i];
      }
      const double* a_row = act_in.data() + static_cast<std::size_t>(b) * in;
      for (int i = 0; i < in; ++i)
        if (a_row[i] <= 0.0) out_row[i] = 0.0;
    }
  }
  return loss;
}

AdamState AdamState::zeros_like(const Mlp& net) {
  AdamState st;
  for (std::size_t l = 0; l < net.weights.size(); ++l) {
    st.m_w.emplace_back(net.weights[l].size(), 0.0);
    st.v_w.emplace_back(net.weights[l].size(), 0.0);
    st.m_b.emplace_back(net.biases[l].size(), 0.0);
    st.v_b.emplace_back(net.biases[l].size(), 0.0);
  }
  return st;
}

namespace {

void adam_update(std::vector<double>& p, std::vector<double>& m, std::vector<double>& v,
                 const std::vector<double>& g, const AdamConfig& cfg, double bc1, double bc2) {
  // Zero gradients (dead units, untaken heads) decay the moments geometrically
  // toward denormal range, which stalls the whole update loop; cut the decay
  // off far below any meaningful magnitude.
  constexpr double kTiny = 1e-300;
  for (std::size_t i = 0; i < p.size(); ++i) {
    m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g[i];
    v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g[i] * g[i];
    if (m[i] < kTiny && m[i] > -kTiny) m[i] = 0.0;
    if (v[i] < kTiny) v[i] = 0.0;
    p[i] -= cfg.alpha * (m[i] / bc1) / (std::sqrt(v[i] / bc2) + cfg.eps);
  }
}

}  // namespace

void adam_step(Mlp& net, AdamState& state, const MlpGrad& grad, const AdamConfig& cfg) {
  ++state.step;
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
  for (std::size_t l = 0; l < net.weights.size(); ++l) {
    adam_update(net.weights[l], state.m_w[l], state.v_w[l], grad.weights[l], cfg, bc1, bc2);
    adam_update(net.biases[l], state.m_b[l], state.v_b[l], grad.biases[l], cfg, bc1, bc2);
  }
}

int select_action(const Mlp& net, std::span<const double> state, double epsilon, Rng& rng) {
  if (!(epsilon >= 0.0 && epsilon <= 1.0))
    throw std::invalid_argument("select_action: epsilon must lie in [0,1]");
  if (epsilon > 0.0 && rng.uniform01() < epsilon) return static_cast<int>(rng.below(2));
  const auto q = mlp_forward(net, state);
  return q[1] > q[0] ? 1 : 0;  // exact tie -> no-flip
}

std::vector<double> td_targets(const Mlp& net, std::span<const Transition> batch, double gamma) {
  std::vector<double> targets;
  targets.reserve(batch.size());
  for (const Transition& tr : batch) {
    if (tr.terminal) {
      targets.push_back(tr.reward);
    } else {
      const auto q = mlp_forward(net, tr.next_state);
      targets.push_back(tr.reward + gamma * std::max(q[0], q[1]));
    }
  }
  return targets;
}

// ---- ReplayBuffer ----------------------------------------------------------

ReplayBuffer::ReplayBuffer(std::size_t capacity) : capacity_(capacity) {
  if (capacity_ < 1) throw std::invalid_argument("replay buffer: capacity must be >= 1");
  slots_.reserve(capacity_);
}

void ReplayBuffer::push(Transition t) {
  if (size_ < capacity_) {
    slots_.push_back(std::move(t));
    ++size_;
  } else {
    slots_[cursor_] = std::move(t);
    cursor_ = (cursor_ + 1) % capacity_;
  }
}

void ReplayBuffer::sample_indices(std::size_t count, Rng& rng, std::vector<std::size_t>& out) const {
  if (count > size_) throw std::invalid_argument("replay buffer: cannot sample more than size");
  out.clear();
  // Floyd's algorithm: uniform over index subsets of the given size.
  for (std::size_t n = size_ - count; n < size_; ++n) {
    const std::size_t pick = rng.below(n + 1);
    if (std::find(out.begin(), out.end(), pick) != out.end())
      out.push_back(n);
    else
      out.push_back(pick);
  }
}

// ---- QLearner ---------------------------------------------------------------

void TrainConfig::validate() const {
  std::vector<std::string> issues;
  if (!(gamma >= 0.0 && gamma < 1.0)) issues.push_back("train.gamma: must lie in [0,1)");
  if (!(alpha > 0.0)) issues.push_back("train.alpha: must be > 0");
  if (!(epsilon0 >= 0.0 && epsilon0 <= 1.0)) issues.push_back("train.epsilon0: must lie in [0,1]");
  if (!(epsilon_min >= 0.0 && epsilon_min <= epsilon0))
    issues.push_back("train.epsilon_min: must lie in [0, epsilon0]");
  if (!(epsilon_decay > 0.0 && epsilon_decay <= 1.0))
    issues.push_back("train.epsilon_decay: must lie in (0,1]");
  if (batch_size < 1) issues.push_back("train.batch_size: must be >= 1");
  if (buffer_capacity < static_cast<std::size_t>(batch_size))
    issues.push_back("train.buffer_capacity: must hold at least one batch");
  if (hidden1 < 1 || hidden2 < 1) issues.push_back("train.hidden: layer widths must be >= 1");
  if (target_sync_period < 0) issues.push_back("train.target_sync_period: must be >= 0");
  if (train_period < 1) issues.push_back("train.train_period: must be >= 1");
  if (!(features.scale > 0.0)) issues.push_back("train.feature_scale: must be > 0");
  if (!issues.empty()) throw ConfigError(std::move(issues));
}

QLearner::QLearner(int n_features, const TrainConfig& cfg, std::uint64_t seed)
    : cfg_(cfg), buffer_(cfg.buffer_capacity), rng_(derive_seed(seed, 2)) {
  cfg_.validate();
  Rng init_rng(derive_seed(seed, 1));
  net_ = Mlp::random_init({n_features, cfg_.hidden1, cfg_.hidden2, 2}, init_rng);
  if (cfg_.target_sync_period > 0) target_net_ = net_;
  adam_ = AdamState::zeros_like(net_);
  grad_ = MlpGrad::zeros_like(net_);
  epsilon_ = cfg_.epsilon0;
}

int QLearner::act(std::span<const double> state, Rng& rng) {
  return select_action(net_, state, epsilon_, rng);
}

std::array<double, 2> QLearner::q_values(std::span<const double> state) const {
  return mlp_forward(net_, state);
}

std::optional<double> QLearner::train_step() {
  const auto batch_size = static_cast<std::size_t>(cfg_.batch_size);
  if (buffer_.size() < batch_size) return std::nullopt;  // skipped: buffer underfull

  buffer_.sample_indices(batch_size, rng_, indices_);
  const int d = net_.input_dim();
  batch_.size = cfg_.batch_size;
  batch_.states.resize(batch_size * d);
  batch_.actions.resize(batch_size);
  batch_.targets.resize(batch_size);
  next_states_.resize(batch_size * d);
  for (std::size_t b = 0; b < batch_size; ++b) {
    const Transition& tr = buffer_.at(indices_[b]);
    std::copy(tr.state.begin(), tr.state.end(), batch_.states.begin() + b * d);
    std::copy(tr.next_state.begin(), tr.next_state.end(), next_states_.begin() + b * d);
    batch_.actions[b] = tr.action;
  }
  const Mlp& value_net = cfg_.target_sync_period > 0 ? target_net_ : net_;
  batch_forward(value_net, next_states_.data(), cfg_.batch_size, next_acts_);
  const auto& next_q = next_acts_.back();
  for (std::size_t b = 0; b < batch_size; ++b) {
    const Transition& tr = buffer_.at(indices_[b]);
    batch_.targets[b] =
        tr.terminal ? tr.reward
                    : tr.reward + cfg_.gamma * std::max(next_q[b * 2], next_q[b * 2 + 1]);
  }

  const double loss = mlp_gradient(net_, batch_, grad_, scratch_);
  adam_step(net_, adam_, grad_, {cfg_.alpha, cfg_.adam_beta1, cfg_.adam_beta2, cfg_.adam_eps});
  ++train_steps_;
  if (cfg_.target_sync_period > 0 && train_steps_ % cfg_.target_sync_period == 0)
    target_net_ = net_;
  epsilon_ = std::max(cfg_.epsilon_min, epsilon_ * cfg_.epsilon_decay);
  return loss;
}

// ---- checkpoint io ----------------------------------------------------------

namespace {

void write_value(std::ostream& out, double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%a", v);  // hex float: exact round trip
  out << buf;
}

void write_tensor(std::ostream& out, const std::string& tag, const std::vector<double>& values) {
  out << "tensor " << tag << ' ' << values.size() << '\n';
  for (std::size_t i = 0; i < values.size(); ++i) {
    write_value(out, values[i]);
    out << (i + 1 == values.size() ? '\n' : ' ');
  }
  if (values.empty()) out << '\n';
}

std::string next_token(std::istream& in) {
  std::string tok;
  if (!(in >> tok)) throw std::runtime_error("checkpoint: unexpected end of file");
  return tok;
}

double read_value(std::istream& in) {
  const std::string tok = next_token(in);
  char* end = nullptr;
  const double v = std::strtod(tok.c_str(), &end);
  if (end == tok.c_str()) throw std::runtime_error("checkpoint: bad numeric value '" + tok + "'");
  return v;
}

long long read_int(std::istream& in) { return static_cast<long long>(read_value(in)); }

void expect(std::istream& in, const std::string& want) {
  const std::string tok = next_token(in);
  if (tok != want) throw std::runtime_error("checkpoint: expected '" + want + "', found '" + tok + "'");
}

std::vector<double> read_tensor(std::istream& in, const std::string& tag) {
  expect(in, "tensor");
  expect(in, tag);
  const auto count = static_cast<std::size_t>(read_int(in));
  std::vector<double> values(count);
  for (auto& v : values) v = read_value(in);
  return values;
}

}  // namespace

void QLearner::save(std::ostream& out, const std::string& config_hash) const {
  out << "flipit-qlearner v1\n";
  out << "config_hash " << (config_hash.empty() ? "-" : config_hash) << '\n';
  out << "dims " << net_.dims.size();
  for (int d : net_.dims) out << ' ' << d;
  out << '\n';
  const auto field = [&](const char* name, double v) {
    out << name << ' ';
    write_value(out, v);
    out << '\n';
  };
  field("gamma", cfg_.gamma);
  field("alpha", cfg_.alpha);
  field("epsilon0", cfg_.epsilon0);
  field("epsilon_min", cfg_.epsilon_min);
  field("epsilon_decay", cfg_.epsilon_decay);
  out << "batch_size " << cfg_.batch_size << '\n';
  out << "buffer_capacity " << cfg_.buffer_capacity << '\n';
  out << "target_sync_period " << cfg_.target_sync_period << '\n';
  out << "train_period " << cfg_.train_period << '\n';
  field("adam_beta1", cfg_.adam_beta1);
  field("adam_beta2", cfg_.adam_beta2);
  field("adam_eps", cfg_.adam_eps);
  field("feature_scale", cfg_.features.scale);
  out << "include_time_remaining " << (cfg_.features.include_time_remaining ? 1 : 0) << '\n';
  field("epsilon", epsilon_);
  out << "train_steps " << train_steps_ << '\n';
  out << "adam_step " << adam_.step << '\n';
  for (std::size_t l = 0; l < net_.weights.size(); ++l) {
    const std::string suffix = std::to_string(l);
    write_tensor(out, "W" + suffix, net_.weights[l]);
    write_tensor(out, "b" + suffix, net_.biases[l]);
    write_tensor(out, "mW" + suffix, adam_.m_w[l]);
    write_tensor(out, "vW" + suffix, adam_.v_w[l]);
    write_tensor(out, "mb" + suffix, adam_.m_b[l]);
    write_tensor(out, "vb" + suffix, adam_.v_b[l]);
  }
  out << "target " << (cfg_.target_sync_period > 0 ? 1 : 0) << '\n';
  if (cfg_.target_sync_period > 0) {
    for (std::size_t l = 0; l < target_net_.weights.size(); ++l) {
      const std::string suffix = std::to_string(l);
      write_tensor(out, "tW" + suffix, target_net_.weights[l]);
      write_tensor(out, "tb" + suffix, target_net_.biases[l]);
    }
  }
  out << "end\n";
}

QLearner QLearner::load(std::istream& in) {
  expect(in, "flipit-qlearner");
  expect(in, "v1");
  expect(in, "config_hash");
  std::string hash = next_token(in);
  if (hash == "-") hash.clear();
  expect(in, "dims");
  const auto n_dims = static_cast<std::size_t>(read_int(in));
  std::vector<int> dims(n_dims);
  for (auto& d : dims) d = static_cast<int>(read_int(in));

  TrainConfig cfg;
  const auto named = [&](const char* name) {
    expect(in, name);
    return read_value(in);
  };
  cfg.gamma = named("gamma");
  cfg.alpha = named("alpha");
  cfg.epsilon0 = named("epsilon0");
  cfg.epsilon_min = named("epsilon_min");
  cfg.epsilon_decay = named("epsilon_decay");
  expect(in, "batch_size");
  cfg.batch_size = static_cast<int>(read_int(in));
  expect(in, "buffer_capacity");
  cfg.buffer_capacity = static_cast<std::size_t>(read_int(in));
  expect(in, "target_sync_period");
  cfg.target_sync_period = read_int(in);
  expect(in, "train_period");
  cfg.train_period = static_cast<int>(read_int(in));
  cfg.adam_beta1 = named("adam_beta1");
  cfg.adam_beta2 = named("adam_beta2");
  cfg.adam_eps = named("adam_eps");
  cfg.features.scale = named("feature_scale");
  expect(in, "include_time_remaining");
  cfg.features.include_time_remaining = read_int(in) != 0;
  if (dims.size() == 4) {
    cfg.hidden1 = dims[1];
    cfg.hidden2 = dims[2];
  }

  QLearner learner;
  learner.cfg_ = cfg;
  learner.config_hash_ = hash;
  expect(in, "epsilon");
  learner.epsilon_ = read_value(in);
  expect(in, "train_steps");
  learner.train_steps_ = read_int(in);
  expect(in, "adam_step");
  const long long adam_steps = read_int(in);

  learner.net_ = Mlp::zeros(dims);
  learner.adam_ = AdamState::zeros_like(learner.net_);
  learner.adam_.step = adam_steps;
  for (std::size_t l = 0; l < learner.net_.weights.size(); ++l) {
    const std::string suffix = std::to_string(l);
    learner.net_.weights[l] = read_tensor(in, "W" + suffix);
    learner.net_.biases[l] = read_tensor(in, "b" + suffix);
    learner.adam_.m_w[l] = read_tensor(in, "mW" + suffix);
    learner.adam_.v_w[l] = read_tensor(in, "vW" + suffix);
    learner.adam_.m_b[l] = read_tensor(in, "mb" + suffix);
    learner.adam_.v_b[l] = read_tensor(in, "vb" + suffix);
  }
  expect(in, "target");
  if (read_int(in) != 0) {
    learner.target_net_ = Mlp::zeros(dims);
    for (std::size_t l = 0; l < learner.target_net_.weights.size(); ++l) {
      const std::string suffix = std::to_string(l);
      learner.target_net_.weights[l] = read_tensor(in, "tW" + suffix);
      learner.target_net_.biases[l] = read_tensor(in, "tb" + suffix);
    }
  }
  expect(in, "end");
  learner.buffer_ = ReplayBuffer(cfg.buffer_capacity);
  learner.grad_ = MlpGrad::zeros_like(learner.net_);
  learner.rng_ = Rng(derive_seed(0, 2));
  return learner;
}

// ---- tabular ----------------------------------------------------------------

double QTable::max_q(int s) const {
  double best = at(s, 0);
  for (int a = 1; a < n_actions_; ++a) best = std::max(best, at(s, a));
  return best;
}

int QTable::greedy_action(int s) const {
  int best = 0;
  for (int a = 1; a < n_actions_; ++a)
    if (at(s, a) > at(s, best)) best = a;
  return best;
}

void tabular_q_update(QTable& table, int s, int a, double r, int s_next, double alpha,
                      double gamma, bool terminal) {
  const double bootstrap = terminal ? 0.0 : gamma * table.max_q(s_next);
  table.at(s, a) += alpha * (r + bootstrap - table.at(s, a));
}

std::vector<double> value_iteration_q(const TabularMdp& mdp, double gamma, double tol,
                                      int max_sweeps) {
  std::vector<double> q(static_cast<std::size_t>(mdp.n_states) * mdp.n_actions, 0.0);
  std::vector<double> next(q.size(), 0.0);
  for (int sweep = 0; sweep < max_sweeps; ++sweep) {
    double delta = 0.0;
    for (int s = 0; s < mdp.n_states; ++s) {
      for (int a = 0; a < mdp.n_actions; ++a) {
        double value = 0.0;
        for (const auto& outcome : mdp.transitions[static_cast<std::size_t>(s)][static_cast<std::size_t>(a)]) {
          double future = 0.0;
          if (!outcome.terminal) {
            const double* row = q.data() + static_cast<std::size_t>(outcome.next) * mdp.n_actions;
            future = *std::max_element(row, row + mdp.n_actions);
          }
          value += outcome.prob * (outcome.reward + gamma * future);
        }
        next[static_cast<std::size_t>(s) * mdp.n_actions + a] = value;
        delta = std::max(delta, std::abs(value - q[static_cast<std::size_t>(s) * mdp.n_actions + a]));
      }
    }
    q.swap(next);
    if (delta < tol) break;
  }
  return q;
}

}  // namespace flipit
