#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "diffcon/controller/composed.hpp"
#include "diffcon/diffusion/train.hpp"
#include "diffcon/errors.hpp"
#include "diffcon/fdiv.hpp"
#include "diffcon/harness/config.hpp"
#include "diffcon/harness/csv.hpp"
#include "diffcon/harness/eval.hpp"
#include "diffcon/lsmdp/gauss_tilt.hpp"
#include "diffcon/lsmdp/oracle.hpp"
#include "diffcon/numkit/checkpoint.hpp"
#include "diffcon/rlft/finetune.hpp"
#include "json.hpp"

namespace diffcon {

// Output file names inside the --out directory.
inline constexpr const char* kPretrainedFile = "pretrained.ckpt";
inline constexpr const char* kPretrainLogFile = "pretrain_log.csv";
inline constexpr const char* kFinetunedFile = "finetuned.ckpt";
inline constexpr const char* kFinetuneLogFile = "finetune_log.csv";
inline constexpr const char* kEvalCsvFile = "eval.csv";
inline constexpr const char* kEvalJsonFile = "eval.json";
inline constexpr const char* kOracleFile = "oracle.csv";

// Independent streams derived from the config seed.
namespace streams {
inline constexpr std::uint64_t model_init = 1;
inline constexpr std::uint64_t pretrain = 2;
inline constexpr std::uint64_t controller_init = 3;
inline constexpr std::uint64_t finetune = 4;
inline constexpr std::uint64_t sft_targets = 5;
inline constexpr std::uint64_t eval = 6;
}  // namespace streams

namespace detail {

inline void ensure_dir(const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create output directory " + dir.string() + ": " + ec.message());
}

inline ScoreModel load_pretrained(const std::filesystem::path& path, const ExperimentConfig& cfg) {
  ScoreModel m = deserialize_pretrained(read_file_bytes(path));
  if (m.horizon() != cfg.horizon)
    throw ConfigError("checkpoint " + path.string() + " was trained with horizon " + std::to_string(m.horizon()) +
                      ", config has " + std::to_string(cfg.horizon));
  if (m.dim() != cfg.data_dim) throw ConfigError("checkpoint " + path.string() + " has a different data dimension");
  return m;
}

}  // namespace detail

/// Trains a fresh score model on the configured data. Writes the checkpoint
/// and the training log; returns the checkpoint path.
inline std::filesystem::path cmd_pretrain(const ExperimentConfig& cfg, const std::filesystem::path& out) {
  detail::ensure_dir(out);
  const Rng root(cfg.seed);
  Rng init = root.split(streams::model_init);
  Rng train = root.split(streams::pretrain);
  const NoiseSchedule sched = cfg.build_schedule();
  ScoreModel model(cfg.model_dims(), cfg.horizon, init);
  PretrainOptions opt{cfg.pretrain.iterations, cfg.pretrain.batch, cfg.pretrain.lr, cfg.p_drop, cfg.time_log};
  opt.lr_final = cfg.pretrain.lr_final;
  const auto log = pretrain(model, sched, cfg.data_spec(), opt, train);
  const auto ckpt = out / kPretrainedFile;
  write_file_atomic(ckpt, serialize_pretrained(model));
  write_file_atomic(out / kPretrainLogFile, log_csv(log));
  return ckpt;
}

/// SFT targets: samples of p_data(x | c) exp(r(x) / tau) with c ~ p_c.
inline std::vector<Sample> sft_targets(const ExperimentConfig& cfg, Rng& rng) {
  const DataSpec data = cfg.data_spec();
  std::vector<int> conds(cfg.finetune.sft_pool);
  for (auto& c : conds) c = data.sample_condition(rng);
  const auto xs = tilted_target_samples(data, cfg.reward_spec(), cfg.finetune_tau(), conds, cfg.eval.target_pool, rng);
  std::vector<Sample> out;
  for (std::size_t i = 0; i < xs.size(); ++i) out.push_back({xs[i], conds[i]});
  return out;
}

/// Fine-tunes a controller around the pretrained checkpoint with the
/// configured algorithm and parameterization.
inline std::filesystem::path cmd_finetune(const ExperimentConfig& cfg, const std::filesystem::path& pretrained,
                                          const std::filesystem::path& out) {
  detail::ensure_dir(out);
  const Rng root(cfg.seed);
  Rng init = root.split(streams::controller_init);
  Rng train = root.split(streams::finetune);
  const NoiseSchedule sched = cfg.build_schedule();
  const ScoreModel core = detail::load_pretrained(pretrained, cfg);
  ComposedModel model =
      ComposedModel::make(core, sched, cfg.finetune.parameterization, cfg.controller_spec(), cfg.lambda_model, init);
  std::vector<Sample> targets;
  if (cfg.finetune.algorithm == Algorithm::sft) {
    Rng trng = root.split(streams::sft_targets);
    targets = sft_targets(cfg, trng);
  }
  const auto log = finetune(model, cfg.reward_spec(), cfg.data_spec(), cfg.finetune_options(), train, &targets);
  const auto ckpt = out / kFinetunedFile;
  write_file_atomic(ckpt, serialize_composed(model));
  write_file_atomic(out / kFinetuneLogFile, log_csv(log));
  return ckpt;
}

inline std::string eval_csv(const EvalReport& rep) {
  auto row_fields = [](const EvalRow& r, std::string lambda) {
    return std::vector<std::string>{std::move(lambda),          format_double(r.win_rate),
                                    format_double(r.wr_ci),     format_double(r.mean_reward_ft),
                                    format_double(r.mean_reward_pre), format_double(r.mc_kl),
                                    format_double(r.target_distance), std::to_string(r.n)};
  };
  std::string out = std::string(kEvalCsvHeader) + "\n";
  for (const auto& r : rep.rows) out += csv_line(row_fields(r, format_double(r.lambda_model)));
  out += csv_line(row_fields(rep.rows[rep.best], "best"));
  return out;
}

inline std::string eval_json(const EvalReport& rep, const ExperimentConfig& cfg) {
  auto row_json = [](const EvalRow& r) {
    return nlohmann::ordered_json{{"lambda_model", r.lambda_model},
                                  {"win_rate", r.win_rate},
                                  {"wr_ci", r.wr_ci},
                                  {"mean_reward_ft", r.mean_reward_ft},
                                  {"mean_reward_pre", r.mean_reward_pre},
                                  {"mc_kl", r.mc_kl},
                                  {"target_distance", r.target_distance},
                                  {"n", r.n}};
  };
  nlohmann::ordered_json j;
  j["seed"] = cfg.seed;
  j["lambda_cfg"] = cfg.lambda_cfg;
  j["target_tau"] = rep.target_tau;
  j["rows"] = nlohmann::ordered_json::array();
  for (const auto& r : rep.rows) j["rows"].push_back(row_json(r));
  j["best"] = row_json(rep.rows[rep.best]);
  return j.dump(2) + "\n";
}

/// Compares a fine-tuned checkpoint with the pretrained model it was built
/// on. A pretrained checkpoint in place of the fine-tuned one is evaluated
/// as a zero-initialized controller (identical outputs).
inline EvalReport cmd_eval(const ExperimentConfig& cfg, const std::filesystem::path& pretrained,
                           const std::filesystem::path& finetuned, const std::filesystem::path& out) {
  detail::ensure_dir(out);
  const NoiseSchedule sched = cfg.build_schedule();
  const ScoreModel core = detail::load_pretrained(pretrained, cfg);
  const auto bytes = read_file_bytes(finetuned);
  const CheckpointContents contents = parse_checkpoint(bytes);
  const Rng root(cfg.seed);
  std::optional<ComposedModel> model;
  if (contents.mode) {
    model = deserialize_composed(bytes, sched);
  } else {
    Rng init = root.split(streams::controller_init);
    model = ComposedModel::make(contents.core, sched, Mode::graybox_gated, cfg.controller_spec(), cfg.lambda_model, init);
  }
  if (serialize_pretrained(model->pretrained()) != serialize_pretrained(core))
    throw ConfigError("fine-tuned checkpoint " + finetuned.string() + " was not built on " + pretrained.string());
  Rng rng = root.split(streams::eval);
  const EvalReport rep = evaluate(*model, cfg, rng);
  write_file_atomic(out / kEvalCsvFile, eval_csv(rep));
  write_file_atomic(out / kEvalJsonFile, eval_json(rep, cfg));
  return rep;
}

inline const char* kOracleCsvHeader = "table,t,row,col,value";

/// Long-format dump of the tabular oracle (and the Gaussian tilt when the
/// data and reward admit one). Step-indexed tables use t = 0 for the
/// initial-distribution control.
inline std::string oracle_csv(const ExperimentConfig& cfg) {
  const TabularChain chain = cfg.oracle_chain();
  const double tau = cfg.oracle.tau;
  const FDiv fd = FDiv::parse(cfg.oracle.divergence);
  std::string out = std::string(kOracleCsvHeader) + "\n";
  auto put = [&](const std::string& table, std::size_t t, std::size_t row, std::size_t col, double v) {
    out += csv_line({table, std::to_string(t), std::to_string(row), std::to_string(col), format_double(v)});
  };
  auto put_rows = [&](const std::string& table, const std::vector<Vec>& rows, std::size_t t0) {
    for (std::size_t t = 0; t < rows.size(); ++t)
      for (std::size_t s = 0; s < rows[t].size(); ++s) put(table, t + t0, s, 0, rows[t][s]);
  };
  auto put_kernels = [&](const std::string& table, const std::vector<Matrix>& ks) {
    for (std::size_t t = 0; t < ks.size(); ++t)
      for (std::size_t i = 0; i < ks[t].rows; ++i)
        for (std::size_t j = 0; j < ks[t].cols; ++j) put(table, t, i, j, ks[t](i, j));
  };

  const OracleResult kl = solve_kl(chain, tau);
  put_rows("z", kl.z, 0);
  put_rows("log_z", kl.log_z, 0);
  put_rows("value_kl", kl.value, 0);
  put_kernels("kernel_kl", kl.kernels);
  put_rows("marginal_kl", kl.marginals, 1);
  put_rows("p_star_kl", {kl.p_star}, static_cast<std::size_t>(chain.steps));

  const GeneralValueResult gen = value_general_f(chain, tau, fd);
  put_rows("value_f", gen.value, 0);
  put_kernels("kernel_f", gen.kernels);
  put_rows("marginal_f", gen.marginals, 1);
  put_rows("p_star_f", {gen.p_star}, static_cast<std::size_t>(chain.steps));

  const Vec passive = passive_marginals(chain).back();
  put_rows("baseline_f", {{solve_baseline(fd, chain.reward, passive, tau)}}, static_cast<std::size_t>(chain.steps));

  const DataSpec data = cfg.data_spec();
  if (const auto* g = std::get_if<GaussianData>(&data.generator)) {
    const RewardSpec r = cfg.reward_spec();
    std::optional<GaussTiltSpec> spec;
    if (const auto* l = std::get_if<LinearRewardForm>(&r.form)) spec = GaussTiltSpec{g->mean, g->var, LinearReward{l->a}, tau};
    if (const auto* q = std::get_if<QuadraticRewardForm>(&r.form))
      spec = GaussTiltSpec{g->mean, g->var, QuadraticReward{q->kappa}, tau};
    if (spec) {
      const DiagGaussian tilt = gauss_tilt(*spec);
      put_rows("gauss_tilt_mean", {tilt.mean}, 0);
      put_rows("gauss_tilt_var", {tilt.var}, 0);
    }
  }
  return out;
}

inline std::filesystem::path cmd_oracle(const ExperimentConfig& cfg, const std::filesystem::path& out) {
  detail::ensure_dir(out);
  const auto path = out / kOracleFile;
  write_file_atomic(path, oracle_csv(cfg));
  return path;
}

}  // namespace diffcon
