#include "flipit/harness.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <future>
#include <numeric>
#include <sstream>

#include "flipit/hash.hpp"
#include "json.hpp"

namespace flipit {

namespace {

using nlohmann::json;

std::string to_lower(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

std::string trim(std::string_view s) {
  const auto begin = s.find_first_not_of(" \t\r\n");
  if (begin == std::string_view::npos) return {};
  const auto end = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(begin, end - begin + 1));
}

// Shortest decimal that round-trips; used everywhere numbers reach a file.
std::string fmt_double(double v) {
  char buf[40];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

std::string renewal_token(const RenewalSpec& spec) {
  if (const auto* p = std::get_if<Periodic>(&spec)) return "periodic:" + std::to_string(p->period);
  if (const auto* prp = std::get_if<PeriodicRandomPhase>(&spec))
    return "periodic_rp:" + std::to_string(prp->period);
  return "exponential:" + fmt_double(std::get<Exponential>(spec).rate);
}

}  // namespace

// ---- strategy grammar -------------------------------------------------------

StrategySpec parse_strategy(std::string_view raw_token) {
  const std::string token = to_lower(trim(raw_token));
  const auto fail = [&](const std::string& why) {
    throw ConfigError({"strategy '" + std::string(raw_token) + "': " + why});
  };
  if (token.empty()) fail("empty strategy token");

  const auto colon = token.find(':');
  const std::string head = token.substr(0, colon);
  const std::string rest = colon == std::string::npos ? "" : token.substr(colon + 1);

  StrategySpec spec;
  if (head == "dqn" || head == "random") {
    if (!rest.empty()) fail("'" + head + "' takes no parameter");
    spec.kind = head == "dqn" ? StrategySpec::Kind::Dqn : StrategySpec::Kind::Random;
    spec.token = head;
    return spec;
  }
  if (head == "greedy") {
    if (rest.empty()) fail("expected an opponent spec, e.g. greedy:periodic:50");
    StrategySpec opponent = parse_strategy(rest);
    if (opponent.kind != StrategySpec::Kind::Renewal)
      fail("the greedy opponent spec must be a renewal strategy");
    spec.kind = StrategySpec::Kind::Greedy;
    spec.greedy_opponent = opponent.renewal;
    spec.token = "greedy:" + opponent.token;
    return spec;
  }
  if (head == "periodic" || head == "periodic_rp") {
    long long period = 0;
    const auto res = std::from_chars(rest.data(), rest.data() + rest.size(), period);
    if (res.ec != std::errc{} || res.ptr != rest.data() + rest.size())
      fail("expected an integer period, e.g. " + head + ":50");
    spec.kind = StrategySpec::Kind::Renewal;
    if (head == "periodic")
      spec.renewal = Periodic{period};
    else
      spec.renewal = PeriodicRandomPhase{period};
    try {
      validate(*spec.renewal);
    } catch (const ConfigError& e) {
      fail(e.issues().front());
    }
    spec.token = renewal_token(*spec.renewal);
    return spec;
  }
  if (head == "exponential") {
    double rate = 0.0;
    const auto res = std::from_chars(rest.data(), rest.data() + rest.size(), rate);
    if (res.ec != std::errc{} || res.ptr != rest.data() + rest.size())
      fail("expected a rate, e.g. exponential:0.05");
    spec.kind = StrategySpec::Kind::Renewal;
    spec.renewal = Exponential{rate};
    try {
      validate(*spec.renewal);
    } catch (const ConfigError& e) {
      fail(e.issues().front());
    }
    spec.token = renewal_token(*spec.renewal);
    return spec;
  }
  fail("unknown strategy '" + head + "'");
  return spec;  // unreachable
}

// ---- config -----------------------------------------------------------------

namespace {

Feedback default_feedback(StrategySpec::Kind kind) {
  switch (kind) {
    case StrategySpec::Kind::Dqn:
    case StrategySpec::Kind::Greedy:
      return Feedback::LastMove;
    default:
      return Feedback::NonAdaptive;
  }
}

std::string feedback_name(Feedback f) {
  switch (f) {
    case Feedback::NonAdaptive: return "non_adaptive";
    case Feedback::LastMove: return "last_move";
    default: return "full_history";
  }
}

std::optional<Feedback> feedback_from_name(const std::string& name) {
  const std::string n = to_lower(name);
  if (n == "non_adaptive" || n == "none" || n == "na") return Feedback::NonAdaptive;
  if (n == "last_move" || n == "lm") return Feedback::LastMove;
  if (n == "full_history" || n == "fh") return Feedback::FullHistory;
  return std::nullopt;
}

void check_known_keys(const json& obj, std::initializer_list<const char*> known,
                      const std::string& path, std::vector<std::string>& issues) {
  for (const auto& [key, value] : obj.items()) {
    (void)value;
    if (std::find_if(known.begin(), known.end(),
                     [&](const char* k) { return key == k; }) == known.end())
      issues.push_back(path + key + ": unknown field");
  }
}

// Broadcast helpers: reward/flip_cost accept a scalar or a per-agent array.
std::vector<double> per_agent_values(const json& v, int n, const std::string& path,
                                     std::vector<std::string>& issues) {
  std::vector<double> out;
  if (v.is_number()) {
    out.assign(static_cast<std::size_t>(n), v.get<double>());
  } else if (v.is_array()) {
    for (const auto& e : v) {
      if (!e.is_number()) {
        issues.push_back(path + ": entries must be numbers");
        return out;
      }
      out.push_back(e.get<double>());
    }
  } else {
    issues.push_back(path + ": expected a number or an array of numbers");
  }
  return out;
}

}  // namespace

ExperimentConfig ExperimentConfig::from_json_text(const std::string& text,
                                                  const std::string& origin) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError({origin + ": parse error: " + e.what()});
  }
  std::vector<std::string> issues;
  ExperimentConfig cfg;

  check_known_keys(j, {"game", "agents", "train", "n_games", "base_seed", "random_move_rate",
                       "window", "tail_fraction", "out", "sweep"},
                   "", issues);

  // game section
  int n_agents = 2;
  if (j.contains("game")) {
    const json& g = j["game"];
    if (!g.is_object()) {
      issues.push_back("game: expected an object");
    } else {
      check_known_keys(g, {"n_agents", "reward", "flip_cost", "horizon", "tie_priority", "feedback"},
                       "game.", issues);
      if (g.contains("n_agents")) {
        if (g["n_agents"].is_number_integer())
          n_agents = g["n_agents"].get<int>();
        else
          issues.push_back("game.n_agents: expected an integer");
      }
      cfg.game.n_agents = n_agents;
      cfg.game.reward_per_iteration.assign(static_cast<std::size_t>(std::max(n_agents, 0)), 1.0);
      cfg.game.flip_cost.assign(static_cast<std::size_t>(std::max(n_agents, 0)), 4.0);
      if (g.contains("reward"))
        cfg.game.reward_per_iteration = per_agent_values(g["reward"], n_agents, "game.reward", issues);
      if (g.contains("flip_cost"))
        cfg.game.flip_cost = per_agent_values(g["flip_cost"], n_agents, "game.flip_cost", issues);
      if (g.contains("horizon")) {
        const json& h = g["horizon"];
        if (!h.is_object() || !h.contains("type")) {
          issues.push_back("game.horizon: expected {\"type\": \"fixed\"|\"geometric\", ...}");
        } else {
          const std::string type = to_lower(h["type"].is_string() ? h["type"].get<std::string>() : "");
          if (type == "fixed") {
            check_known_keys(h, {"type", "length"}, "game.horizon.", issues);
            if (h.contains("length") && h["length"].is_number_integer())
              cfg.game.horizon = FixedHorizon{h["length"].get<long long>()};
            else
              issues.push_back("game.horizon.length: expected an integer");
          } else if (type == "geometric") {
            check_known_keys(h, {"type", "stop_prob"}, "game.horizon.", issues);
            if (h.contains("stop_prob") && h["stop_prob"].is_number())
              cfg.game.horizon = GeometricStop{h["stop_prob"].get<double>()};
            else
              issues.push_back("game.horizon.stop_prob: expected a number");
          } else {
            issues.push_back("game.horizon.type: expected 'fixed' or 'geometric'");
          }
        }
      }
      if (g.contains("tie_priority")) {
        if (g["tie_priority"].is_array()) {
          cfg.game.tie_priority.clear();
          for (const auto& e : g["tie_priority"])
            cfg.game.tie_priority.push_back(e.is_number_integer() ? e.get<int>() : -1);
        } else {
          issues.push_back("game.tie_priority: expected an array of agent ids");
        }
      }
      if (g.contains("feedback")) {
        if (g["feedback"].is_array()) {
          cfg.game.feedback.clear();
          std::size_t idx = 0;
          for (const auto& e : g["feedback"]) {
            const auto f = e.is_string() ? feedback_from_name(e.get<std::string>()) : std::nullopt;
            if (!f)
              issues.push_back("game.feedback[" + std::to_string(idx) +
                               "]: expected non_adaptive|last_move|full_history");
            cfg.game.feedback.push_back(f.value_or(Feedback::NonAdaptive));
            ++idx;
          }
        } else {
          issues.push_back("game.feedback: expected an array");
        }
      }
    }
  }
  if (cfg.game.n_agents >= 2) {
    if (cfg.game.tie_priority.empty()) {
      cfg.game.tie_priority.resize(static_cast<std::size_t>(cfg.game.n_agents));
      std::iota(cfg.game.tie_priority.begin(), cfg.game.tie_priority.end(), 0);
    }
  }

  // agents
  if (j.contains("agents") && j["agents"].is_array()) {
    for (const auto& e : j["agents"]) {
      if (e.is_string())
        cfg.agent_tokens.push_back(e.get<std::string>());
      else
        issues.push_back("agents: entries must be strategy strings");
    }
  } else {
    issues.push_back("agents: expected an array of strategy strings");
  }
  // normalize tokens and derive feedback modes where not explicit
  std::vector<Feedback> derived;
  for (std::size_t i = 0; i < cfg.agent_tokens.size(); ++i) {
    try {
      StrategySpec spec = parse_strategy(cfg.agent_tokens[i]);
      cfg.agent_tokens[i] = spec.token;
      derived.push_back(default_feedback(spec.kind));
    } catch (const ConfigError& e) {
      for (const auto& msg : e.issues()) issues.push_back("agents[" + std::to_string(i) + "]: " + msg);
      derived.push_back(Feedback::NonAdaptive);
    }
  }
  if (cfg.game.feedback.empty()) cfg.game.feedback = derived;

  // train section
  if (j.contains("train")) {
    const json& t = j["train"];
    if (!t.is_object()) {
      issues.push_back("train: expected an object");
    } else {
      check_known_keys(t,
                       {"gamma", "alpha", "epsilon0", "epsilon_min", "epsilon_decay", "batch_size",
                        "buffer_capacity", "hidden1", "hidden2", "target_sync_period", "train_period",
                        "adam_beta1", "adam_beta2", "adam_eps", "feature_scale",
                        "include_time_remaining"},
                       "train.", issues);
      const auto num = [&](const char* key, double& out) {
        if (!t.contains(key)) return;
        if (t[key].is_number())
          out = t[key].get<double>();
        else
          issues.push_back(std::string("train.") + key + ": expected a number");
      };
      const auto integer = [&](const char* key, auto& out) {
        if (!t.contains(key)) return;
        if (t[key].is_number_integer())
          out = t[key].get<std::decay_t<decltype(out)>>();
        else
          issues.push_back(std::string("train.") + key + ": expected an integer");
      };
      num("gamma", cfg.train.gamma);
      num("alpha", cfg.train.alpha);
      num("epsilon0", cfg.train.epsilon0);
      num("epsilon_min", cfg.train.epsilon_min);
      num("epsilon_decay", cfg.train.epsilon_decay);
      integer("batch_size", cfg.train.batch_size);
      integer("buffer_capacity", cfg.train.buffer_capacity);
      integer("hidden1", cfg.train.hidden1);
      integer("hidden2", cfg.train.hidden2);
      integer("target_sync_period", cfg.train.target_sync_period);
      integer("train_period", cfg.train.train_period);
      num("adam_beta1", cfg.train.adam_beta1);
      num("adam_beta2", cfg.train.adam_beta2);
      num("adam_eps", cfg.train.adam_eps);
      num("feature_scale", cfg.train.features.scale);
      if (t.contains("include_time_remaining")) {
        if (t["include_time_remaining"].is_boolean())
          cfg.train.features.include_time_remaining = t["include_time_remaining"].get<bool>();
        else
          issues.push_back("train.include_time_remaining: expected a boolean");
      }
    }
  }

  const auto top_integer = [&](const char* key, auto& out) {
    if (!j.contains(key)) return;
    if (j[key].is_number_integer())
      out = j[key].get<std::decay_t<decltype(out)>>();
    else
      issues.push_back(std::string(key) + ": expected an integer");
  };
  top_integer("n_games", cfg.n_games);
  top_integer("base_seed", cfg.base_seed);
  top_integer("window", cfg.window);
  if (j.contains("random_move_rate")) {
    if (j["random_move_rate"].is_number())
      cfg.random_move_rate = j["random_move_rate"].get<double>();
    else
      issues.push_back("random_move_rate: expected a number");
  }
  if (j.contains("tail_fraction")) {
    if (j["tail_fraction"].is_number())
      cfg.tail_fraction = j["tail_fraction"].get<double>();
    else
      issues.push_back("tail_fraction: expected a number");
  }

  if (j.contains("out")) {
    const json& o = j["out"];
    if (!o.is_object()) {
      issues.push_back("out: expected an object");
    } else {
      check_known_keys(o, {"dir", "format"}, "out.", issues);
      if (o.contains("dir")) {
        if (o["dir"].is_string())
          cfg.out.dir = o["dir"].get<std::string>();
        else
          issues.push_back("out.dir: expected a string");
      }
      if (o.contains("format")) {
        const std::string f = to_lower(o["format"].is_string() ? o["format"].get<std::string>() : "");
        if (f == "csv")
          cfg.out.format = OutputFormat::Csv;
        else if (f == "json")
          cfg.out.format = OutputFormat::Json;
        else
          issues.push_back("out.format: expected 'csv' or 'json'");
      }
    }
  }

  if (j.contains("sweep")) {
    if (!j["sweep"].is_array()) {
      issues.push_back("sweep: expected an array of axes");
    } else {
      std::size_t idx = 0;
      for (const auto& axis : j["sweep"]) {
        const std::string path = "sweep[" + std::to_string(idx) + "]";
        SweepAxis out_axis;
        if (!axis.is_object() || !axis.contains("param") || !axis.contains("values")) {
          issues.push_back(path + ": expected {\"param\": ..., \"values\": [...]}");
        } else {
          check_known_keys(axis, {"param", "values"}, path + ".", issues);
          out_axis.param = axis["param"].is_string() ? to_lower(axis["param"].get<std::string>()) : "";
          if (axis["values"].is_array())
            for (const auto& v : axis["values"]) {
              if (v.is_number())
                out_axis.values.push_back(v.get<double>());
              else
                issues.push_back(path + ".values: entries must be numbers");
            }
          else
            issues.push_back(path + ".values: expected an array");
        }
        cfg.sweep.push_back(std::move(out_axis));
        ++idx;
      }
    }
  }

  if (!issues.empty()) throw ConfigError(std::move(issues));
  cfg.validate();
  return cfg;
}

ExperimentConfig ExperimentConfig::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError({path + ": cannot open config file"});
  std::ostringstream buf;
  buf << in.rdbuf();
  return from_json_text(buf.str(), path);
}

void ExperimentConfig::validate() const {
  std::vector<std::string> issues;
  try {
    game.validate();
  } catch (const ConfigError& e) {
    for (const auto& msg : e.issues()) issues.push_back("game." + msg);
  }
  try {
    train.validate();
  } catch (const ConfigError& e) {
    issues.insert(issues.end(), e.issues().begin(), e.issues().end());
  }
  if (agent_tokens.size() != static_cast<std::size_t>(game.n_agents))
    issues.push_back("agents: got " + std::to_string(agent_tokens.size()) + " strategies for " +
                     std::to_string(game.n_agents) + " agents");
  int dqn_count = 0;
  bool has_random = false;
  for (std::size_t i = 0; i < agent_tokens.size(); ++i) {
    const std::string path = "agents[" + std::to_string(i) + "]";
    try {
      const StrategySpec spec = parse_strategy(agent_tokens[i]);
      if (spec.kind == StrategySpec::Kind::Dqn) ++dqn_count;
      if (spec.kind == StrategySpec::Kind::Random) has_random = true;
      if (spec.kind == StrategySpec::Kind::Greedy && game.n_agents != 2)
        issues.push_back(path + ": greedy supports two-player games only");
      if (i < game.feedback.size()) {
        const Feedback f = game.feedback[i];
        if ((spec.kind == StrategySpec::Kind::Dqn || spec.kind == StrategySpec::Kind::Greedy) &&
            f == Feedback::NonAdaptive)
          issues.push_back(path + ": adaptive strategies need last_move or full_history feedback");
      }
    } catch (const ConfigError& e) {
      for (const auto& msg : e.issues()) issues.push_back(path + ": " + msg);
    }
  }
  if (dqn_count > 1) issues.push_back("agents: at most one dqn agent is supported per game");
  bool sweeps_move_rate = false;
  for (std::size_t a = 0; a < sweep.size(); ++a) {
    const std::string path = "sweep[" + std::to_string(a) + "]";
    const auto& axis = sweep[a];
    if (axis.param != "periodic_period" && axis.param != "exponential_rate" &&
        axis.param != "move_rate" && axis.param != "n_agents")
      issues.push_back(path + ".param: unknown sweep parameter '" + axis.param + "'");
    if (axis.values.empty()) issues.push_back(path + ".values: must not be empty");
    if (axis.param == "move_rate") sweeps_move_rate = true;
  }
  if (has_random && !(random_move_rate > 0.0) && !sweeps_move_rate)
    issues.push_back("random_move_rate: required (and > 0) when 'random' agents are present");
  if (n_games < 1) issues.push_back("n_games: must be >= 1");
  if (window < 1) issues.push_back("window: must be >= 1");
  if (!(tail_fraction > 0.0 && tail_fraction <= 1.0))
    issues.push_back("tail_fraction: must lie in (0,1]");
  if (train.features.include_time_remaining && !std::holds_alternative<FixedHorizon>(game.horizon))
    issues.push_back("train.include_time_remaining: needs a fixed horizon (the end is unknown otherwise)");
  if (!issues.empty()) throw ConfigError(std::move(issues));
}

std::string ExperimentConfig::to_json_text() const {
  json g;
  g["n_agents"] = game.n_agents;
  g["reward"] = game.reward_per_iteration;
  g["flip_cost"] = game.flip_cost;
  if (const auto* fixed = std::get_if<FixedHorizon>(&game.horizon))
    g["horizon"] = {{"type", "fixed"}, {"length", fixed->length}};
  else
    g["horizon"] = {{"type", "geometric"}, {"stop_prob", std::get<GeometricStop>(game.horizon).stop_prob}};
  g["tie_priority"] = game.tie_priority;
  std::vector<std::string> feedback_names;
  for (Feedback f : game.feedback) feedback_names.push_back(feedback_name(f));
  g["feedback"] = feedback_names;

  json t;
  t["gamma"] = train.gamma;
  t["alpha"] = train.alpha;
  t["epsilon0"] = train.epsilon0;
  t["epsilon_min"] = train.epsilon_min;
  t["epsilon_decay"] = train.epsilon_decay;
  t["batch_size"] = train.batch_size;
  t["buffer_capacity"] = train.buffer_capacity;
  t["hidden1"] = train.hidden1;
  t["hidden2"] = train.hidden2;
  t["target_sync_period"] = train.target_sync_period;
  t["train_period"] = train.train_period;
  t["adam_beta1"] = train.adam_beta1;
  t["adam_beta2"] = train.adam_beta2;
  t["adam_eps"] = train.adam_eps;
  t["feature_scale"] = train.features.scale;
  t["include_time_remaining"] = train.features.include_time_remaining;

  json root;
  root["game"] = g;
  root["agents"] = agent_tokens;
  root["train"] = t;
  root["n_games"] = n_games;
  root["base_seed"] = base_seed;
  root["random_move_rate"] = random_move_rate;
  root["window"] = window;
  root["tail_fraction"] = tail_fraction;
  root["out"] = {{"dir", out.dir}, {"format", out.format == OutputFormat::Csv ? "csv" : "json"}};
  json axes = json::array();
  for (const auto& axis : sweep) axes.push_back({{"param", axis.param}, {"values", axis.values}});
  root["sweep"] = axes;
  return root.dump(2);
}

std::string ExperimentConfig::config_hash() const { return sha256_hex(to_json_text()); }

// ---- agents -----------------------------------------------------------------

std::vector<std::unique_ptr<Agent>> make_agents(const ExperimentConfig& cfg,
                                                std::uint64_t cell_seed) {
  cfg.validate();
  const int n = cfg.game.n_agents;
  const std::uint64_t agents_root = derive_seed(cell_seed, 2);

  const auto rank_of = [&](AgentId a) {
    return std::find(cfg.game.tie_priority.begin(), cfg.game.tie_priority.end(), a) -
           cfg.game.tie_priority.begin();
  };

  std::vector<std::unique_ptr<Agent>> agents;
  for (int i = 0; i < n; ++i) {
    StrategySpec spec = parse_strategy(cfg.agent_tokens[static_cast<std::size_t>(i)]);
    if (spec.kind == StrategySpec::Kind::Random) {
      // resolved once per cell: a renewal strategy whose rate is an equal
      // share of the requested combined move rate
      Rng pick(derive_seed(agents_root, static_cast<std::uint64_t>(i)));
      const double share = cfg.random_move_rate / static_cast<double>(n - 1);
      const long long period = std::max<long long>(1, std::llround(1.0 / share));
      RenewalSpec resolved;
      switch (pick.below(3)) {
        case 0: resolved = Periodic{period}; break;
        case 1: resolved = PeriodicRandomPhase{period}; break;
        default: resolved = Exponential{std::min(1.0, share)}; break;
      }
      spec.kind = StrategySpec::Kind::Renewal;
      spec.renewal = resolved;
      spec.token = renewal_token(resolved);
    }
    switch (spec.kind) {
      case StrategySpec::Kind::Renewal:
        agents.push_back(std::make_unique<RenewalAgent>(i, *spec.renewal, spec.token));
        break;
      case StrategySpec::Kind::Greedy: {
        const AgentId opponent = 1 - i;
        GreedySpec gs;
        gs.opponent_gaps = GapPmf::from_spec(*spec.greedy_opponent);
        gs.reward = cfg.game.reward_per_iteration[static_cast<std::size_t>(i)];
        gs.flip_cost = cfg.game.flip_cost[static_cast<std::size_t>(i)];
        gs.has_tie_priority = rank_of(i) < rank_of(opponent);
        agents.push_back(std::make_unique<GreedyAgent>(i, opponent, std::move(gs), spec.token));
        break;
      }
      case StrategySpec::Kind::Dqn:
        agents.push_back(std::make_unique<DqnAgent>(
            i, n, cfg.train, derive_seed(agents_root, 0x100u + static_cast<std::uint64_t>(i))));
        break;
      default:
        throw std::logic_error("make_agents: unresolved strategy kind");
    }
  }
  return agents;
}

// ---- running ----------------------------------------------------------------

GameResult run_game(const GameConfig& game_cfg, std::vector<std::unique_ptr<Agent>>& agents,
                    std::uint64_t game_seed, std::vector<FlipEvent>* trace) {
  if (agents.size() != static_cast<std::size_t>(game_cfg.n_agents))
    throw std::invalid_argument("run_game: agent count does not match the config");
  Game game(game_cfg, derive_seed(game_seed, 0));
  std::vector<Rng> streams;
  streams.reserve(agents.size());
  for (std::size_t i = 0; i < agents.size(); ++i)
    streams.emplace_back(derive_seed(game_seed, 1 + i));
  for (std::size_t i = 0; i < agents.size(); ++i) agents[i]->begin_game(game, streams[i]);

  std::vector<Action> actions(agents.size(), Action::NoFlip);
  while (!game.over()) {
    const long long t = game.now();
    for (std::size_t i = 0; i < agents.size(); ++i) actions[i] = agents[i]->act(t, streams[i]);
    const StepOutcome outcome = game.step(actions);
    for (std::size_t i = 0; i < agents.size(); ++i) agents[i]->post_step(outcome, game, streams[i]);
  }

  GameResult result;
  result.realized_length = game.realized_end();
  result.agents = game.final_scores();
  for (const auto& totals : result.agents)
    result.score_per_iteration.push_back(totals.score / static_cast<double>(result.realized_length));

  // audit: the engine identity must hold before the result is used anywhere
  double ownership = 0.0;
  for (const auto& totals : result.agents) ownership += totals.ownership_fraction;
  if (std::abs(ownership - 1.0) > 1e-9)
    throw std::logic_error("run_game: ownership fractions do not sum to 1");
  const bool shared =
      std::equal(game_cfg.reward_per_iteration.begin() + 1, game_cfg.reward_per_iteration.end(),
                 game_cfg.reward_per_iteration.begin()) &&
      std::equal(game_cfg.flip_cost.begin() + 1, game_cfg.flip_cost.end(),
                 game_cfg.flip_cost.begin());
  if (shared) {
    double total = 0.0;
    long long flips = 0;
    for (const auto& totals : result.agents) {
      total += totals.score;
      flips += totals.flips;
    }
    const double expected = game_cfg.reward_per_iteration[0] * static_cast<double>(result.realized_length) -
                            game_cfg.flip_cost[0] * static_cast<double>(flips);
    if (std::abs(total - expected) > 1e-9 * (1.0 + std::abs(expected)))
      throw std::logic_error("run_game: score identity violated");
  }

  if (trace) *trace = game.history();
  return result;
}

RunSummary run_games(const ExperimentConfig& cfg, std::vector<std::unique_ptr<Agent>>& agents,
                     std::uint64_t cell_index) {
  cfg.validate();
  if (cfg.n_games < cfg.window)
    throw ConfigError({"n_games: need at least window=" + std::to_string(cfg.window) + " games"});
  const auto start = std::chrono::steady_clock::now();

  DqnAgent* dqn = nullptr;
  for (auto& agent : agents)
    if (auto* d = dynamic_cast<DqnAgent*>(agent.get())) dqn = d;

  const std::uint64_t cseed = derive_seed(cfg.base_seed, cell_index);
  const std::uint64_t games_root = derive_seed(cseed, 1);

  std::vector<GameResult> results;
  results.reserve(static_cast<std::size_t>(cfg.n_games));
  long long floor_game = -1;
  for (long long g = 0; g < cfg.n_games; ++g) {
    if (dqn && floor_game < 0 &&
        dqn->learner().epsilon() <= dqn->learner().config().epsilon_min + 1e-15)
      floor_game = g;
    GameResult result = run_game(cfg.game, agents, derive_seed(games_root, static_cast<std::uint64_t>(g)));
    result.game_index = g;
    results.push_back(std::move(result));
  }
  if (!dqn) floor_game = 0;
  if (floor_game < 0) floor_game = cfg.n_games;  // exploration never reached the floor

  std::vector<std::string> strategies;
  for (const auto& agent : agents) strategies.push_back(agent->token());
  RunSummary summary = summarize(std::move(results), std::move(strategies), cfg.window,
                                 cfg.tail_fraction, floor_game);
  summary.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return summary;
}

RunSummary run_training(const ExperimentConfig& cfg, std::string* checkpoint_text) {
  cfg.validate();
  int dqn_count = 0;
  for (const auto& token : cfg.agent_tokens)
    if (parse_strategy(token).kind == StrategySpec::Kind::Dqn) ++dqn_count;
  if (dqn_count != 1) throw ConfigError({"agents: training requires exactly one dqn agent"});

  auto agents = make_agents(cfg, derive_seed(cfg.base_seed, 0));
  RunSummary summary = run_games(cfg, agents, 0);
  if (checkpoint_text) {
    for (auto& agent : agents) {
      if (auto* d = dynamic_cast<DqnAgent*>(agent.get())) {
        std::ostringstream out;
        d->learner().save(out, cfg.config_hash());
        *checkpoint_text = out.str();
      }
    }
  }
  return summary;
}

RunSummary run_bench(const ExperimentConfig& cfg) {
  cfg.validate();
  for (const auto& token : cfg.agent_tokens)
    if (parse_strategy(token).kind == StrategySpec::Kind::Dqn)
      throw ConfigError({"agents: bench runs take no dqn agent; use a training run"});
  auto agents = make_agents(cfg, derive_seed(cfg.base_seed, 0));
  return run_games(cfg, agents, 0);
}

RunSummary summarize(std::vector<GameResult> games, std::vector<std::string> strategies,
                     int window, double tail_fraction, long long floor_game) {
  const auto n = static_cast<long long>(games.size());
  if (window < 1) throw std::invalid_argument("summarize: window must be >= 1");
  if (n < window)
    throw std::invalid_argument("summarize: need at least " + std::to_string(window) + " games");
  if (!(tail_fraction > 0.0 && tail_fraction <= 1.0))
    throw std::invalid_argument("summarize: tail_fraction must lie in (0,1]");
  const auto n_agents = games.front().agents.size();

  RunSummary s;
  s.window = window;
  s.tail_fraction = tail_fraction;
  s.strategies = std::move(strategies);
  s.moving_average_score.assign(n_agents, {});
  s.moving_average_per_iter.assign(n_agents, {});
  for (std::size_t a = 0; a < n_agents; ++a) {
    double acc_score = 0.0, acc_rate = 0.0;
    auto& ma_score = s.moving_average_score[a];
    auto& ma_rate = s.moving_average_per_iter[a];
    for (long long g = 0; g < n; ++g) {
      acc_score += games[static_cast<std::size_t>(g)].agents[a].score;
      acc_rate += games[static_cast<std::size_t>(g)].score_per_iteration[a];
      if (g >= window) {
        acc_score -= games[static_cast<std::size_t>(g - window)].agents[a].score;
        acc_rate -= games[static_cast<std::size_t>(g - window)].score_per_iteration[a];
      }
      if (g >= window - 1) {
        ma_score.push_back(acc_score / window);
        ma_rate.push_back(acc_rate / window);
      }
    }
  }

  s.floor_game = std::clamp<long long>(floor_game, 0, n - 1);
  const long long post_floor = n - s.floor_game;
  const auto tail = std::max<long long>(
      1, static_cast<long long>(std::ceil(tail_fraction * static_cast<double>(post_floor))));
  s.converged_from = n - tail;

  s.converged_score.assign(n_agents, 0.0);
  s.converged_per_iter.assign(n_agents, 0.0);
  s.converged_flip_rate.assign(n_agents, 0.0);
  s.converged_ownership.assign(n_agents, 0.0);
  for (std::size_t a = 0; a < n_agents; ++a) {
    double score = 0.0, rate = 0.0, ownership = 0.0;
    long long flips = 0, iterations = 0;
    for (long long g = s.converged_from; g < n; ++g) {
      const auto& game = games[static_cast<std::size_t>(g)];
      score += game.agents[a].score;
      rate += game.score_per_iteration[a];
      ownership += game.agents[a].ownership_fraction;
      flips += game.agents[a].flips;
      iterations += game.realized_length;
    }
    s.converged_score[a] = score / static_cast<double>(tail);
    s.converged_per_iter[a] = rate / static_cast<double>(tail);
    s.converged_ownership[a] = ownership / static_cast<double>(tail);
    s.converged_flip_rate[a] = static_cast<double>(flips) / static_cast<double>(iterations);
  }
  s.games = std::move(games);
  return s;
}

// ---- sweeps -----------------------------------------------------------------

namespace {

void apply_sweep_param(ExperimentConfig& cfg, const std::string& param, double value) {
  const auto as_period = [&]() {
    const auto p = static_cast<long long>(std::llround(value));
    if (p < 1 || std::abs(value - static_cast<double>(p)) > 1e-9)
      throw ConfigError({"sweep." + param + ": value " + fmt_double(value) + " is not a period >= 1"});
    return p;
  };
  const auto rewrite_tokens = [&](auto&& edit) {
    for (auto& token : cfg.agent_tokens) {
      StrategySpec spec = parse_strategy(token);
      if (spec.kind == StrategySpec::Kind::Renewal) {
        edit(*spec.renewal);
        token = renewal_token(*spec.renewal);
      } else if (spec.kind == StrategySpec::Kind::Greedy) {
        edit(*spec.greedy_opponent);
        token = "greedy:" + renewal_token(*spec.greedy_opponent);
      }
    }
  };
  if (param == "periodic_period") {
    const long long p = as_period();
    rewrite_tokens([&](RenewalSpec& spec) {
      if (auto* pa = std::get_if<Periodic>(&spec)) pa->period = p;
      if (auto* prp = std::get_if<PeriodicRandomPhase>(&spec)) prp->period = p;
    });
  } else if (param == "exponential_rate") {
    rewrite_tokens([&](RenewalSpec& spec) {
      if (auto* ea = std::get_if<Exponential>(&spec)) ea->rate = value;
    });
  } else if (param == "move_rate") {
    cfg.random_move_rate = value;
  } else if (param == "n_agents") {
    const int n = static_cast<int>(std::llround(value));
    if (n < 2) throw ConfigError({"sweep.n_agents: need at least 2 agents"});
    const std::string lead = cfg.agent_tokens.empty() ? "dqn" : cfg.agent_tokens.front();
    cfg.agent_tokens.assign(static_cast<std::size_t>(n), "random");
    cfg.agent_tokens.front() = lead;
    const double reward = cfg.game.reward_per_iteration.empty() ? 1.0 : cfg.game.reward_per_iteration.front();
    const double cost = cfg.game.flip_cost.empty() ? 4.0 : cfg.game.flip_cost.front();
    cfg.game = GameConfig::uniform(n, reward, cost, cfg.game.horizon);
    cfg.game.feedback.assign(static_cast<std::size_t>(n), Feedback::NonAdaptive);
    for (std::size_t i = 0; i < cfg.agent_tokens.size(); ++i)
      cfg.game.feedback[i] = default_feedback(parse_strategy(cfg.agent_tokens[i]).kind);
  } else {
    throw ConfigError({"sweep: unknown parameter '" + param + "'"});
  }
}

}  // namespace

std::vector<SweepCell> expand_sweep(const ExperimentConfig& cfg) {
  cfg.validate();
  if (cfg.sweep.empty()) throw ConfigError({"sweep: no axes configured"});
  std::size_t total = 1;
  for (const auto& axis : cfg.sweep) total *= axis.values.size();

  std::vector<SweepCell> cells;
  cells.reserve(total);
  for (std::size_t idx = 0; idx < total; ++idx) {
    SweepCell cell;
    cell.index = idx;
    cell.config = cfg;
    cell.config.sweep.clear();
    // row-major decode: the last declared axis varies fastest
    std::size_t rem = idx;
    for (std::size_t a = cfg.sweep.size(); a-- > 0;) {
      const auto& axis = cfg.sweep[a];
      const double value = axis.values[rem % axis.values.size()];
      rem /= axis.values.size();
      cell.params[axis.param] = value;
    }
    // apply in declared order so n_agents rewrites happen before rate params
    for (const auto& axis : cfg.sweep) apply_sweep_param(cell.config, axis.param, cell.params[axis.param]);
    cell.config.validate();
    cells.push_back(std::move(cell));
  }
  return cells;
}

std::vector<SweepCell> run_sweep(const ExperimentConfig& cfg, int jobs) {
  std::vector<SweepCell> cells = expand_sweep(cfg);
  const auto run_cell = [](SweepCell& cell) {
    auto agents = make_agents(cell.config, derive_seed(cell.config.base_seed, cell.index));
    cell.summary = run_games(cell.config, agents, cell.index);
    for (auto& agent : agents) {
      if (auto* d = dynamic_cast<DqnAgent*>(agent.get())) {
        std::ostringstream out;
        d->learner().save(out, cell.config.config_hash());
        cell.checkpoint_text = out.str();
      }
    }
  };
  if (jobs <= 1) {
    for (auto& cell : cells) run_cell(cell);
    return cells;
  }
  // cells are independent; results are keyed by index, so completion order
  // does not matter
  std::size_t next = 0;
  while (next < cells.size()) {
    const std::size_t batch = std::min<std::size_t>(static_cast<std::size_t>(jobs), cells.size() - next);
    std::vector<std::future<void>> futures;
    for (std::size_t k = 0; k < batch; ++k)
      futures.push_back(std::async(std::launch::async, run_cell, std::ref(cells[next + k])));
    for (auto& f : futures) f.get();
    next += batch;
  }
  return cells;
}

// ---- writers ----------------------------------------------------------------

namespace {

void write_file(const std::filesystem::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("write_results: cannot open " + path.string());
  out << content;
  if (!out) throw std::runtime_error("write_results: short write to " + path.string());
}

bool is_active_strategy(const std::string& token, double flip_cost) {
  const StrategySpec spec = parse_strategy(token);
  if (spec.kind != StrategySpec::Kind::Renewal) return false;
  return expected_gap(*spec.renewal) < flip_cost;
}

std::string results_csv(const RunSummary& s) {
  std::ostringstream out;
  out << "game,agent,strategy,score,score_per_iter,flips,ownership\n";
  for (const auto& game : s.games)
    for (std::size_t a = 0; a < game.agents.size(); ++a)
      out << game.game_index << ',' << a << ',' << s.strategies[a] << ','
          << fmt_double(game.agents[a].score) << ',' << fmt_double(game.score_per_iteration[a])
          << ',' << game.agents[a].flips << ',' << fmt_double(game.agents[a].ownership_fraction)
          << '\n';
  return out.str();
}

json results_json(const RunSummary& s) {
  json rows = json::array();
  for (const auto& game : s.games)
    for (std::size_t a = 0; a < game.agents.size(); ++a)
      rows.push_back({{"game", game.game_index},
                      {"agent", a},
                      {"strategy", s.strategies[a]},
                      {"score", game.agents[a].score},
                      {"score_per_iter", game.score_per_iteration[a]},
                      {"flips", game.agents[a].flips},
                      {"ownership", game.agents[a].ownership_fraction}});
  return rows;
}

std::string summary_csv(const RunSummary& s) {
  std::ostringstream out;
  out << "game,agent,moving_avg_score,moving_avg_score_per_iter\n";
  for (std::size_t k = 0; k < s.moving_average_score.front().size(); ++k)
    for (std::size_t a = 0; a < s.moving_average_score.size(); ++a)
      out << (k + static_cast<std::size_t>(s.window) - 1) << ',' << a << ','
          << fmt_double(s.moving_average_score[a][k]) << ','
          << fmt_double(s.moving_average_per_iter[a][k]) << '\n';
  return out.str();
}

json summary_json(const RunSummary& s) {
  json rows = json::array();
  for (std::size_t k = 0; k < s.moving_average_score.front().size(); ++k)
    for (std::size_t a = 0; a < s.moving_average_score.size(); ++a)
      rows.push_back({{"game", k + static_cast<std::size_t>(s.window) - 1},
                      {"agent", a},
                      {"moving_avg_score", s.moving_average_score[a][k]},
                      {"moving_avg_score_per_iter", s.moving_average_per_iter[a][k]}});
  return rows;
}

json meta_json(const RunSummary& s, const ExperimentConfig& cfg, std::uint64_t cell_index) {
  json agents = json::array();
  for (std::size_t a = 0; a < s.strategies.size(); ++a)
    agents.push_back({{"agent", a},
                      {"strategy", s.strategies[a]},
                      {"active", is_active_strategy(s.strategies[a],
                                                    cfg.game.flip_cost[std::min(a, cfg.game.flip_cost.size() - 1)])},
                      {"converged_score", s.converged_score[a]},
                      {"converged_score_per_iter", s.converged_per_iter[a]},
                      {"converged_flip_rate", s.converged_flip_rate[a]},
                      {"converged_ownership", s.converged_ownership[a]}});
  return json{{"format_version", 1},
              {"base_seed", cfg.base_seed},
              {"cell_index", cell_index},
              {"config_hash", cfg.config_hash()},
              {"config", json::parse(cfg.to_json_text())},
              {"n_games", s.games.size()},
              {"window", s.window},
              {"tail_fraction", s.tail_fraction},
              {"floor_game", s.floor_game},
              {"converged_from", s.converged_from},
              {"agents", agents}};
}

}  // namespace

std::filesystem::path write_run_files(const RunSummary& summary, const ExperimentConfig& cfg,
                                      std::uint64_t cell_index, const std::filesystem::path& dir,
                                      const std::string& checkpoint_text) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw std::runtime_error("write_results: cannot create " + dir.string() + ": " + ec.message());
  if (cfg.out.format == OutputFormat::Csv) {
    write_file(dir / "results.csv", results_csv(summary));
    write_file(dir / "summary.csv", summary_csv(summary));
  } else {
    write_file(dir / "results.json", results_json(summary).dump(2) + "\n");
    write_file(dir / "summary.json", summary_json(summary).dump(2) + "\n");
  }
  write_file(dir / "meta.json", meta_json(summary, cfg, cell_index).dump(2) + "\n");
  if (!checkpoint_text.empty()) write_file(dir / "checkpoint.txt", checkpoint_text);
  return dir;
}

std::filesystem::path write_trace_file(const std::vector<FlipEvent>& events,
                                       const GameResult& result,
                                       const std::vector<std::string>& strategies,
                                       const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw std::runtime_error("write_results: cannot create " + dir.string() + ": " + ec.message());
  std::ostringstream out;
  out << "t,agent_id,event\n";
  for (const auto& event : events) out << event.time << ',' << event.agent << ",flip\n";
  const auto joined = [&](auto&& field) {
    std::string text;
    for (std::size_t a = 0; a < result.agents.size(); ++a) {
      if (a) text += '|';
      text += field(a);
    }
    return text;
  };
  out << result.realized_length << ",-1,end"
      << " strategies=" << joined([&](std::size_t a) { return strategies[a]; })
      << " scores=" << joined([&](std::size_t a) { return fmt_double(result.agents[a].score); })
      << " flips=" << joined([&](std::size_t a) { return std::to_string(result.agents[a].flips); })
      << " ownership="
      << joined([&](std::size_t a) { return fmt_double(result.agents[a].ownership_fraction); })
      << '\n';
  const auto path = dir / "trace.csv";
  write_file(path, out.str());
  return path;
}

std::filesystem::path write_sweep_files(const std::vector<SweepCell>& cells,
                                        const ExperimentConfig& cfg,
                                        const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw std::runtime_error("write_results: cannot create " + dir.string() + ": " + ec.message());

  for (const auto& cell : cells) {
    char name[16];
    std::snprintf(name, sizeof name, "cell_%04zu", cell.index);
    write_run_files(cell.summary, cell.config, cell.index, dir / name, cell.checkpoint_text);
  }

  // one row per cell: the adaptive agent plus its best-scoring opponent
  std::vector<std::string> axis_names;
  for (const auto& axis : cfg.sweep) axis_names.push_back(axis.param);
  std::ostringstream out;
  out << "cell";
  for (const auto& name : axis_names) out << ',' << name;
  out << ",adaptive_agent,adaptive_strategy,adaptive_score_per_iter,adaptive_flip_rate,"
         "best_opponent_agent,best_opponent_strategy,best_opponent_score_per_iter\n";
  json cells_meta = json::array();
  for (const auto& cell : cells) {
    std::size_t adaptive = 0;
    for (std::size_t a = 0; a < cell.summary.strategies.size(); ++a)
      if (parse_strategy(cell.summary.strategies[a]).kind == StrategySpec::Kind::Dqn) adaptive = a;
    std::size_t best = adaptive == 0 ? 1 : 0;
    for (std::size_t a = 0; a < cell.summary.strategies.size(); ++a) {
      if (a == adaptive) continue;
      if (cell.summary.converged_per_iter[a] > cell.summary.converged_per_iter[best]) best = a;
    }
    out << cell.index;
    for (const auto& name : axis_names) out << ',' << fmt_double(cell.params.at(name));
    out << ',' << adaptive << ',' << cell.summary.strategies[adaptive] << ','
        << fmt_double(cell.summary.converged_per_iter[adaptive]) << ','
        << fmt_double(cell.summary.converged_flip_rate[adaptive]) << ',' << best << ','
        << cell.summary.strategies[best] << ','
        << fmt_double(cell.summary.converged_per_iter[best]) << '\n';
    cells_meta.push_back({{"cell", cell.index},
                          {"params", cell.params},
                          {"config_hash", cell.config.config_hash()},
                          {"strategies", cell.summary.strategies}});
  }
  write_file(dir / "sweep.csv", out.str());
  const json meta{{"format_version", 1},
                  {"base_seed", cfg.base_seed},
                  {"config_hash", cfg.config_hash()},
                  {"config", json::parse(cfg.to_json_text())},
                  {"cells", cells_meta}};
  write_file(dir / "sweep_meta.json", meta.dump(2) + "\n");
  return dir;
}

}  // namespace flipit
