// diffcon pretrain|finetune|eval|oracle --config <path> [--seed N] [--out DIR]

#include <cstdint>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "diffcon/harness/commands.hpp"

namespace fs = std::filesystem;

int main(int argc, char** argv) {
  CLI::App app{"Controlled fine-tuning of toy diffusion models"};
  app.require_subcommand(1);

  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out_dir = "out";
  std::string pretrained;
  std::string finetuned;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "experiment config file")->required()->check(CLI::ExistingFile);
    sub->add_option("--seed", seed, "override the config seed");
    sub->add_option("--out", out_dir, "output directory")->capture_default_str();
  };
  auto* pre = app.add_subcommand("pretrain", "train a score model on the configured data");
  add_common(pre);
  auto* ft = app.add_subcommand("finetune", "fine-tune a controller around a pretrained checkpoint");
  add_common(ft);
  ft->add_option("--pretrained", pretrained, "pretrained checkpoint (default: OUT/pretrained.ckpt)");
  auto* ev = app.add_subcommand("eval", "compare a fine-tuned checkpoint with its pretrained model");
  add_common(ev);
  ev->add_option("--pretrained", pretrained, "pretrained checkpoint (default: OUT/pretrained.ckpt)");
  ev->add_option("--finetuned", finetuned, "fine-tuned checkpoint (default: OUT/finetuned.ckpt)");
  auto* orc = app.add_subcommand("oracle", "dump exact tabular and Gaussian oracle tables");
  add_common(orc);

  CLI11_PARSE(app, argc, argv);

  try {
    diffcon::ExperimentConfig cfg = diffcon::load_config(config_path);
    if (seed) cfg.seed = *seed;
    const fs::path out(out_dir);
    const fs::path pre_path = pretrained.empty() ? out / diffcon::kPretrainedFile : fs::path(pretrained);
    const fs::path ft_path = finetuned.empty() ? out / diffcon::kFinetunedFile : fs::path(finetuned);

    if (pre->parsed()) {
      std::cout << "wrote " << diffcon::cmd_pretrain(cfg, out).string() << "\n";
    } else if (ft->parsed()) {
      std::cout << "wrote " << diffcon::cmd_finetune(cfg, pre_path, out).string() << "\n";
    } else if (ev->parsed()) {
      const auto rep = diffcon::cmd_eval(cfg, pre_path, ft_path, out);
      const auto& b = rep.rows[rep.best];
      std::cout << "best lambda_model " << b.lambda_model << ": win rate " << b.win_rate << " +/- " << b.wr_ci
                << " over " << b.n << " pairs\n";
    } else if (orc->parsed()) {
      std::cout << "wrote " << diffcon::cmd_oracle(cfg, out).string() << "\n";
    }
  } catch (const std::exception& e) {
    std::cerr << "diffcon: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
