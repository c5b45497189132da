#pragma once

#include <charconv>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "diffcon/controller/composed.hpp"
#include "diffcon/diffusion/data.hpp"
#include "diffcon/errors.hpp"
#include "diffcon/fdiv.hpp"
#include "diffcon/harness/csv.hpp"
#include "diffcon/lsmdp/chain.hpp"
#include "diffcon/rlft/finetune.hpp"
#include "diffcon/rlft/reward.hpp"
#include "diffcon/schedule.hpp"

namespace diffcon {

/// Every experiment setting. Global keys come first in a config file;
/// the rest live under [pretrain], [finetune], [eval] and [oracle].
struct ExperimentConfig {
  std::uint64_t seed = 0;

  std::string schedule = "linear";  // linear | geometric | constant
  int horizon = 50;
  double beta_min = 1e-3;
  double beta_max = 0.2;
  double beta = 0.05;  // constant schedule

  std::string data = "conditional-mixture";  // gaussian | mixture | conditional-mixture
  std::size_t data_dim = 1;
  Vec data_mean{0.0};
  Vec data_var{1.0};
  Vec mixture_weights{0.5, 0.5};
  std::vector<Vec> component_means{{-1.0}, {1.0}};
  std::vector<Vec> component_vars{{0.25}, {0.25}};
  Vec cond_probs{0.5, 0.5};

  std::size_t time_dim = 8;
  std::size_t cond_dim = 4;
  std::size_t hidden = 64;
  std::size_t depth = 2;
  Activation activation = Activation::tanh;

  std::string reward = "region";  // linear | quadratic | region
  Vec reward_direction{1.0};
  double reward_kappa = 1.0;
  Vec region_center{1.0};
  double region_radius = 0.5;
  double region_high = 1.0;
  double region_low = 0.0;

  std::optional<double> tau;  // unset: 5e-4 for sft / rwl, 1e-4 for pg / ppo
  std::string divergence = "kl";
  double lambda_cfg = 7.5;
  double lambda_model = 1.0;
  double p_drop = 0.1;
  bool time_log = false;

  struct Pretrain {
    std::size_t iterations = 2000;
    std::size_t batch = 128;
    double lr = 1e-3;
    std::optional<double> lr_final;  // unset: constant learning rate
  } pretrain;

  struct Finetune {
    Algorithm algorithm = Algorithm::rwl;
    Mode parameterization = Mode::graybox_gated;
    WeightFamily weights = WeightFamily::exponential;
    std::optional<double> alpha;  // unset: 1 + tau
    BaselineMode baseline_mode = BaselineMode::first_batch_mean;
    double baseline = 0.0;
    RwlSource rwl_source = RwlSource::online;
    std::size_t rwl_pool = 4096;
    double clip_delta = 0.2;
    double lr_side = 1e-5;
    double lr_decay = 1.0;
    std::optional<double> lr_lora;  // unset: 1e-4 for RL algorithms, 1e-5 for sft
    std::size_t lora_rank = 16;
    double lora_scale = 1.0;
    std::size_t side_hidden = 64;
    std::size_t side_depth = 2;
    std::size_t batch = 64;
    std::size_t iterations = 100;
    std::size_t sample_every = 2;
    bool reuse_noise = false;
    bool rollout_cfg = false;
    std::size_t monitor_every = 10;
    std::size_t monitor_batch = 64;
    std::size_t sft_pool = 4096;
  } finetune;

  struct Eval {
    std::size_t samples = 1000;
    Vec lambda_sweep{1.0};
    std::size_t target_pool = 20;  // SIR pool size per target sample
  } eval;

  struct Oracle {
    std::string chain = "random";  // random | explicit
    std::size_t states = 3;
    int steps = 4;
    double reward_scale = 1.0;
    Vec init{0.5, 0.5};
    std::vector<Vec> kernel{{0.9, 0.1}, {0.2, 0.8}};
    Vec rewards{0.0, 1.0};
    double tau = 1.0;
    std::string divergence = "kl";
  } oracle;

  double finetune_alpha() const { return finetune.alpha.value_or(1.0 + finetune_tau()); }
  double finetune_lr_lora() const {
    return finetune.lr_lora.value_or(finetune.algorithm == Algorithm::sft ? 1e-5 : 1e-4);
  }
  /// Regularization temperature of the configured algorithm.
  double finetune_tau() const {
    if (tau) return *tau;
    return finetune.algorithm == Algorithm::pg || finetune.algorithm == Algorithm::ppo ? 1e-4 : 5e-4;
  }

  void validate() const;
  NoiseSchedule build_schedule() const;
  DataSpec data_spec() const;
  RewardSpec reward_spec() const;
  ScoreModelDims model_dims() const;
  ControllerSpec controller_spec() const;
  FinetuneOptions finetune_options() const;
  TabularChain oracle_chain() const;
};

namespace config_detail {

inline std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

inline std::vector<std::string> split(std::string_view s, char sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = s.find(sep, start);
    out.push_back(trim(s.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start)));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

inline double to_double(const std::string& s) {
  double v = 0.0;
  const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size() || s.empty()) throw ParseError("expected a number, got '" + s + "'");
  return v;
}

template <class Int>
Int to_int(const std::string& s) {
  Int v = 0;
  const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size() || s.empty())
    throw ParseError("expected a non-negative integer, got '" + s + "'");
  return v;
}

inline bool to_bool(const std::string& s) {
  if (s == "true") return true;
  if (s == "false") return false;
  throw ParseError("expected true or false, got '" + s + "'");
}

inline Vec to_vec(const std::string& s) {
  Vec out;
  for (const auto& item : split(s, ',')) out.push_back(to_double(item));
  return out;
}

inline std::vector<Vec> to_vec_list(const std::string& s) {
  std::vector<Vec> out;
  for (const auto& group : split(s, ';')) out.push_back(to_vec(group));
  return out;
}

inline std::string fmt(double v) { return format_double(v); }

inline std::string fmt(const Vec& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) out += (i ? "," : "") + fmt(v[i]);
  return out;
}

inline std::string fmt(const std::vector<Vec>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) out += (i ? ";" : "") + fmt(v[i]);
  return out;
}

inline std::string fmt_opt(const std::optional<double>& v) { return v ? fmt(*v) : "auto"; }
inline std::optional<double> to_opt(const std::string& s) {
  if (s == "auto") return std::nullopt;
  return to_double(s);
}

inline Activation to_activation(const std::string& s) {
  for (Activation a : {Activation::identity, Activation::tanh, Activation::relu})
    if (s == activation_name(a)) return a;
  throw ParseError("unknown activation '" + s + "' (expected identity, tanh or relu)");
}

struct Key {
  const char* section;  // "" for global keys
  const char* name;
  std::function<void(ExperimentConfig&, const std::string&)> set;
  std::function<std::string(const ExperimentConfig&)> get;
};

#define DIFFCON_KEY(sec, name, field, parse, print)                                            \
  Key {                                                                                        \
    sec, name, [](ExperimentConfig& c, const std::string& v) { c.field = parse(v); },          \
        [](const ExperimentConfig& c) -> std::string { return print(c.field); }               \
  }

inline std::string ident(const std::string& s) { return s; }
inline std::string fmt_size(std::size_t v) { return std::to_string(v); }
inline std::string fmt_int(int v) { return std::to_string(v); }
inline std::string fmt_u64(std::uint64_t v) { return std::to_string(v); }
inline std::string fmt_bool(bool v) { return v ? "true" : "false"; }
inline std::size_t to_size(const std::string& s) { return to_int<std::size_t>(s); }
inline int to_steps(const std::string& s) { return to_int<int>(s); }
inline std::uint64_t to_u64(const std::string& s) { return to_int<std::uint64_t>(s); }
inline std::string fmt_act(Activation a) { return activation_name(a); }
inline std::string fmt_alg(Algorithm a) { return algorithm_name(a); }
inline std::string fmt_mode(Mode m) { return mode_name(m); }
inline std::string fmt_family(WeightFamily f) { return weight_family_name(f); }
inline std::string fmt_bmode(BaselineMode m) { return baseline_mode_name(m); }
inline std::string fmt_source(RwlSource s) { return rwl_source_name(s); }
inline Mode to_mode(const std::string& s) { return parse_mode(s); }

inline const std::vector<Key>& keys() {
  static const std::vector<Key> table = {
      DIFFCON_KEY("", "seed", seed, to_u64, fmt_u64),
      DIFFCON_KEY("", "schedule", schedule, ident, ident),
      DIFFCON_KEY("", "horizon", horizon, to_steps, fmt_int),
      DIFFCON_KEY("", "beta_min", beta_min, to_double, fmt),
      DIFFCON_KEY("", "beta_max", beta_max, to_double, fmt),
      DIFFCON_KEY("", "beta", beta, to_double, fmt),
      DIFFCON_KEY("", "data", data, ident, ident),
      DIFFCON_KEY("", "data_dim", data_dim, to_size, fmt_size),
      DIFFCON_KEY("", "data_mean", data_mean, to_vec, fmt),
      DIFFCON_KEY("", "data_var", data_var, to_vec, fmt),
      DIFFCON_KEY("", "mixture_weights", mixture_weights, to_vec, fmt),
      DIFFCON_KEY("", "component_means", component_means, to_vec_list, fmt),
      DIFFCON_KEY("", "component_vars", component_vars, to_vec_list, fmt),
      DIFFCON_KEY("", "cond_probs", cond_probs, to_vec, fmt),
      DIFFCON_KEY("", "time_dim", time_dim, to_size, fmt_size),
      DIFFCON_KEY("", "cond_dim", cond_dim, to_size, fmt_size),
      DIFFCON_KEY("", "hidden", hidden, to_size, fmt_size),
      DIFFCON_KEY("", "depth", depth, to_size, fmt_size),
      DIFFCON_KEY("", "activation", activation, to_activation, fmt_act),
      DIFFCON_KEY("", "reward", reward, ident, ident),
      DIFFCON_KEY("", "reward_direction", reward_direction, to_vec, fmt),
      DIFFCON_KEY("", "reward_kappa", reward_kappa, to_double, fmt),
      DIFFCON_KEY("", "region_center", region_center, to_vec, fmt),
      DIFFCON_KEY("", "region_radius", region_radius, to_double, fmt),
      DIFFCON_KEY("", "region_high", region_high, to_double, fmt),
      DIFFCON_KEY("", "region_low", region_low, to_double, fmt),
      DIFFCON_KEY("", "tau", tau, to_opt, fmt_opt),
      DIFFCON_KEY("", "divergence", divergence, ident, ident),
      DIFFCON_KEY("", "lambda_cfg", lambda_cfg, to_double, fmt),
      DIFFCON_KEY("", "lambda_model", lambda_model, to_double, fmt),
      DIFFCON_KEY("", "p_drop", p_drop, to_double, fmt),
      DIFFCON_KEY("", "time_log", time_log, to_bool, fmt_bool),

      DIFFCON_KEY("pretrain", "iterations", pretrain.iterations, to_size, fmt_size),
      DIFFCON_KEY("pretrain", "batch", pretrain.batch, to_size, fmt_size),
      DIFFCON_KEY("pretrain", "lr", pretrain.lr, to_double, fmt),
      DIFFCON_KEY("pretrain", "lr_final", pretrain.lr_final, to_opt, fmt_opt),

      DIFFCON_KEY("finetune", "algorithm", finetune.algorithm, parse_algorithm, fmt_alg),
      DIFFCON_KEY("finetune", "parameterization", finetune.parameterization, to_mode, fmt_mode),
      DIFFCON_KEY("finetune", "weights", finetune.weights, parse_weight_family, fmt_family),
      DIFFCON_KEY("finetune", "alpha", finetune.alpha, to_opt, fmt_opt),
      DIFFCON_KEY("finetune", "baseline_mode", finetune.baseline_mode, parse_baseline_mode, fmt_bmode),
      DIFFCON_KEY("finetune", "baseline", finetune.baseline, to_double, fmt),
      DIFFCON_KEY("finetune", "rwl_source", finetune.rwl_source, parse_rwl_source, fmt_source),
      DIFFCON_KEY("finetune", "rwl_pool", finetune.rwl_pool, to_size, fmt_size),
      DIFFCON_KEY("finetune", "clip_delta", finetune.clip_delta, to_double, fmt),
      DIFFCON_KEY("finetune", "lr_side", finetune.lr_side, to_double, fmt),
      DIFFCON_KEY("finetune", "lr_lora", finetune.lr_lora, to_opt, fmt_opt),
      DIFFCON_KEY("finetune", "lr_decay", finetune.lr_decay, to_double, fmt),
      DIFFCON_KEY("finetune", "lora_rank", finetune.lora_rank, to_size, fmt_size),
      DIFFCON_KEY("finetune", "lora_scale", finetune.lora_scale, to_double, fmt),
      DIFFCON_KEY("finetune", "side_hidden", finetune.side_hidden, to_size, fmt_size),
      DIFFCON_KEY("finetune", "side_depth", finetune.side_depth, to_size, fmt_size),
      DIFFCON_KEY("finetune", "batch", finetune.batch, to_size, fmt_size),
      DIFFCON_KEY("finetune", "iterations", finetune.iterations, to_size, fmt_size),
      DIFFCON_KEY("finetune", "sample_every", finetune.sample_every, to_size, fmt_size),
      DIFFCON_KEY("finetune", "reuse_noise", finetune.reuse_noise, to_bool, fmt_bool),
      DIFFCON_KEY("finetune", "rollout_cfg", finetune.rollout_cfg, to_bool, fmt_bool),
      DIFFCON_KEY("finetune", "monitor_every", finetune.monitor_every, to_size, fmt_size),
      DIFFCON_KEY("finetune", "monitor_batch", finetune.monitor_batch, to_size, fmt_size),
      DIFFCON_KEY("finetune", "sft_pool", finetune.sft_pool, to_size, fmt_size),

      DIFFCON_KEY("eval", "samples", eval.samples, to_size, fmt_size),
      DIFFCON_KEY("eval", "lambda_sweep", eval.lambda_sweep, to_vec, fmt),
      DIFFCON_KEY("eval", "target_pool", eval.target_pool, to_size, fmt_size),

      DIFFCON_KEY("oracle", "chain", oracle.chain, ident, ident),
      DIFFCON_KEY("oracle", "states", oracle.states, to_size, fmt_size),
      DIFFCON_KEY("oracle", "steps", oracle.steps, to_steps, fmt_int),
      DIFFCON_KEY("oracle", "reward_scale", oracle.reward_scale, to_double, fmt),
      DIFFCON_KEY("oracle", "init", oracle.init, to_vec, fmt),
      DIFFCON_KEY("oracle", "kernel", oracle.kernel, to_vec_list, fmt),
      DIFFCON_KEY("oracle", "rewards", oracle.rewards, to_vec, fmt),
      DIFFCON_KEY("oracle", "tau", oracle.tau, to_double, fmt),
      DIFFCON_KEY("oracle", "divergence", oracle.divergence, ident, ident),
  };
  return table;
}

#undef DIFFCON_KEY

inline const char* kSections[] = {"", "pretrain", "finetune", "eval", "oracle"};

inline void require(bool ok, const std::string& msg) {
  if (!ok) throw ConfigError(msg);
}

inline void require_positive(double v, const char* name) {
  require(v > 0.0 && std::isfinite(v), std::string(name) + " must be positive and finite");
}

}  // namespace config_detail

/// Parses the flat `key = value` format. `#` starts a comment; `[name]`
/// opens a section. Errors carry the 1-based line number.
inline ExperimentConfig parse_config(std::string_view text) {
  using namespace config_detail;
  ExperimentConfig cfg;
  std::string section;
  std::vector<std::string> seen;
  std::istringstream in{std::string(text)};
  std::string raw;
  int line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    const auto where = "line " + std::to_string(line_no) + ": ";
    const std::string line = trim(std::string_view(raw).substr(0, raw.find('#')));
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') throw ParseError(where + "unterminated section header");
      section = trim(std::string_view(line).substr(1, line.size() - 2));
      bool known = false;
      for (const char* s : kSections) known = known || (section == s && !section.empty());
      if (!known) throw ParseError(where + "unknown section [" + section + "]");
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ParseError(where + "expected key = value");
    const std::string key = trim(std::string_view(line).substr(0, eq));
    const std::string value = trim(std::string_view(line).substr(eq + 1));
    const Key* match = nullptr;
    for (const auto& k : keys())
      if (section == k.section && key == k.name) match = &k;
    if (!match)
      throw ConfigError(where + "unknown key '" + key + "'" + (section.empty() ? "" : " in [" + section + "]"));
    const std::string qualified = section + "." + key;
    for (const auto& s : seen)
      if (s == qualified) throw ParseError(where + "duplicate key '" + key + "'");
    seen.push_back(qualified);
    try {
      match->set(cfg, value);
    } catch (const std::exception& e) {
      throw ParseError(where + key + ": " + e.what());
    }
  }
  cfg.validate();
  return cfg;
}

inline ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot read config " + path.string());
  std::ostringstream ss;
  ss << f.rdbuf();
  return parse_config(ss.str());
}

/// Canonical text with every key written out; parse(serialize(c)) == c.
inline std::string serialize_config(const ExperimentConfig& cfg) {
  using namespace config_detail;
  std::string out;
  for (const char* sec : kSections) {
    if (*sec) out += std::string("\n[") + sec + "]\n";
    for (const auto& k : keys())
      if (std::string_view(k.section) == sec) out += std::string(k.name) + " = " + k.get(cfg) + "\n";
  }
  return out;
}

inline void ExperimentConfig::validate() const {
  using config_detail::require;
  using config_detail::require_positive;
  require(schedule == "linear" || schedule == "geometric" || schedule == "constant",
          "schedule must be linear, geometric or constant");
  require(horizon >= 2, "horizon must be at least 2");
  build_schedule();
  require(data_dim >= 1 && data_dim <= 4, "data_dim must lie in [1, 4]");
  data_spec().validate();
  require(time_dim >= 2 && time_dim % 2 == 0, "time_dim must be even and at least 2");
  require(hidden >= 1 && depth >= 1, "hidden and depth must be at least 1");
  reward_spec().validate(data_dim);
  require(std::isfinite(lambda_cfg) && lambda_cfg >= 0.0, "lambda_cfg must be finite and non-negative");
  require(std::isfinite(lambda_model), "lambda_model must be finite");
  require(p_drop >= 0.0 && p_drop < 1.0, "p_drop must lie in [0, 1)");

  require(pretrain.batch >= 1, "[pretrain] batch must be positive");
  require_positive(pretrain.lr, "[pretrain] lr");
  if (pretrain.lr_final) require_positive(*pretrain.lr_final, "[pretrain] lr_final");

  const double t = finetune_tau();
  require(t >= 0.0 && std::isfinite(t), "tau must be finite and non-negative");
  if (finetune.algorithm == Algorithm::sft || finetune.algorithm == Algorithm::rwl)
    require(t > 0.0, "tau must be positive for sft and rwl");
  FDiv::parse(divergence);
  if (finetune.weights == WeightFamily::polynomial) FDiv::alpha(finetune_alpha());
  require(finetune.clip_delta > 0.0 && finetune.clip_delta < 1.0, "[finetune] clip_delta must lie in (0, 1)");
  require_positive(finetune.lr_side, "[finetune] lr_side");
  require_positive(finetune_lr_lora(), "[finetune] lr_lora");
  require_positive(finetune.lr_decay, "[finetune] lr_decay");
  require(finetune.lora_rank >= 1, "[finetune] lora_rank must be positive");
  require(finetune.side_hidden >= 1 && finetune.side_depth >= 1, "[finetune] side net sizes must be positive");
  require(finetune.batch >= 1, "[finetune] batch must be positive");
  require(finetune.sample_every >= 1, "[finetune] sample_every must be at least 1");
  require(finetune.rwl_pool >= 1 && finetune.sft_pool >= 1, "[finetune] pool sizes must be positive");

  require(eval.samples >= 1, "[eval] samples must be positive");
  require(!eval.lambda_sweep.empty(), "[eval] lambda_sweep must not be empty");
  require(eval.target_pool >= 1, "[eval] target_pool must be positive");

  require(oracle.chain == "random" || oracle.chain == "explicit", "[oracle] chain must be random or explicit");
  require_positive(oracle.tau, "[oracle] tau");
  FDiv::parse(oracle.divergence);
  oracle_chain();
}

inline NoiseSchedule ExperimentConfig::build_schedule() const {
  if (schedule == "constant") return build_constant(horizon, beta);
  if (schedule == "geometric") return build_geometric(horizon, beta_min, beta_max);
  return build_linear(horizon, beta_min, beta_max);
}

inline DataSpec ExperimentConfig::data_spec() const {
  if (data == "gaussian") return {data_dim, GaussianData{data_mean, data_var}};
  if (data == "mixture") return {data_dim, MixtureData{mixture_weights, component_means, component_vars}};
  if (data == "conditional-mixture")
    return {data_dim, ConditionalMixtureData{cond_probs, component_means, component_vars}};
  throw ConfigError("data must be gaussian, mixture or conditional-mixture");
}

inline RewardSpec ExperimentConfig::reward_spec() const {
  if (reward == "linear") return {LinearRewardForm{reward_direction}};
  if (reward == "quadratic") return {QuadraticRewardForm{reward_kappa}};
  if (reward == "region") return {RegionRewardForm{region_center, region_radius, region_high, region_low}};
  throw ConfigError("reward must be linear, quadratic or region");
}

inline ScoreModelDims ExperimentConfig::model_dims() const {
  return {data_dim, time_dim, data_spec().num_conditions(), cond_dim, hidden, depth, activation};
}

inline ControllerSpec ExperimentConfig::controller_spec() const {
  return {finetune.lora_rank, finetune.lora_scale, finetune.side_hidden, finetune.side_depth, activation};
}

inline FinetuneOptions ExperimentConfig::finetune_options() const {
  FinetuneOptions o;
  o.algorithm = finetune.algorithm;
  o.tau = finetune_tau();
  o.fd = FDiv::parse(divergence);
  o.weights = {finetune.weights, finetune_tau(), finetune_alpha()};
  o.baseline_mode = finetune.baseline_mode;
  o.baseline = finetune.baseline;
  o.rwl_source = finetune.rwl_source;
  o.rwl_pool = finetune.rwl_pool;
  o.lambda_cfg = lambda_cfg;
  o.rollout_cfg = finetune.rollout_cfg;
  o.p_drop = p_drop;
  o.clip_delta = finetune.clip_delta;
  o.lr_side = finetune.lr_side;
  o.lr_lora = finetune_lr_lora();
  o.lr_decay = finetune.lr_decay;
  o.batch = finetune.batch;
  o.iterations = finetune.iterations;
  o.sample_every = finetune.sample_every;
  o.reuse_noise = finetune.reuse_noise;
  o.monitor_every = finetune.monitor_every;
  o.monitor_batch = finetune.monitor_batch;
  o.time_log = time_log;
  return o;
}

/// Random chains are drawn from a stream derived from the seed; explicit
/// chains repeat one kernel at every step.
inline TabularChain ExperimentConfig::oracle_chain() const {
  if (oracle.steps < 1) throw ConfigError("[oracle] steps must be at least 1");
  if (oracle.chain == "random") {
    if (oracle.states < 1) throw ConfigError("[oracle] states must be positive");
    Rng rng = Rng(seed).split(0x0c4a1e);
    return random_chain(oracle.states, oracle.steps, rng, oracle.reward_scale);
  }
  TabularChain c;
  c.states = oracle.init.size();
  c.steps = oracle.steps;
  c.init = oracle.init;
  c.reward = oracle.rewards;
  Matrix k(c.states, c.states);
  if (oracle.kernel.size() != c.states) throw ConfigError("[oracle] kernel must have one row per state");
  for (std::size_t i = 0; i < c.states; ++i) {
    if (oracle.kernel[i].size() != c.states) throw ConfigError("[oracle] kernel rows must have one entry per state");
    for (std::size_t j = 0; j < c.states; ++j) k(i, j) = oracle.kernel[i][j];
  }
  c.kernels.assign(static_cast<std::size_t>(c.steps - 1), k);
  c.validate();
  return c;
}

}  // namespace diffcon
