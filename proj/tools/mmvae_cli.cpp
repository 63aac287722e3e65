// Copyright 2026 The mmvae Authors
// SPDX-License-Identifier: Apache-2.0

// mmvae: dataset generation, training, cross-modal evaluation and ablations.
//
// Exit codes: 0 success, 2 invalid configuration or arguments, 3 runtime failure.

#include <cstdint>
#include <exception>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "mmvae/experiment.hpp"

namespace {

constexpr int kExitValidation = 2;
constexpr int kExitRuntime = 3;

struct CommonOptions {
  std::string config_path;
  std::optional<std::string> out;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> variant;
  bool paper_scale = false;
};

void add_common(CLI::App* cmd, CommonOptions& o) {
  cmd->add_option("--config", o.config_path, "Experiment config (JSON)");
  cmd->add_option("--out", o.out, "Output directory");
  cmd->add_option("--seed", o.seed, "Root seed");
  cmd->add_option("--variant", o.variant, "Taxonomy variant")
      ->check(CLI::IsMember({"base", "ablation_wide", "ablation_deep"}));
  cmd->add_flag("--paper-scale", o.paper_scale, "Use full-size network and feature dimensions");
}

mmvae::ExperimentConfig build_config(const CommonOptions& o) {
  mmvae::ExperimentConfig c = o.config_path.empty() ? mmvae::ExperimentConfig{} : mmvae::load_config_file(o.config_path);
  if (o.out) c.out_dir = *o.out;
  if (o.seed) c.seed = *o.seed;
  if (o.variant) {
    c.variant = *o.variant;
    c.taxonomy_path.clear();
  }
  if (o.paper_scale) c.apply_paper_scale();
  return c;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Mixture-of-experts multimodal VAE for hierarchical concept learning"};
  app.require_subcommand(1);

  CommonOptions gen_opts, train_opts, eval_opts, ablate_opts;
  std::string checkpoint;
  std::string report_dir = "out";

  auto* gen = app.add_subcommand("gen-data", "Generate the paired dataset and write it with a summary");
  add_common(gen, gen_opts);
  auto* trn = app.add_subcommand("train", "Train the model; writes checkpoint.json and trace.csv");
  add_common(trn, train_opts);
  auto* evl = app.add_subcommand("eval", "Run language understanding and naming tests on a checkpoint");
  add_common(evl, eval_opts);
  evl->add_option("--checkpoint", checkpoint, "Checkpoint path (default <out>/checkpoint.json)");
  auto* abl = app.add_subcommand("ablate", "Train and evaluate base, ablation_wide and ablation_deep");
  add_common(abl, ablate_opts);
  auto* rep = app.add_subcommand("report", "Print the tables stored in an output directory");
  rep->add_option("--out", report_dir, "Directory holding report.json / ablation.json");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitValidation;
  }

  try {
    if (gen->parsed()) {
      const auto summary = mmvae::cmd_gen_data(build_config(gen_opts));
      std::cout << "superordinate " << summary["superordinate"] << ", basic " << summary["basic"]
                << ", subordinate " << summary["subordinate"] << ", examples " << summary["examples"] << " (train "
                << summary["train"] << ", test " << summary["test"] << ")\n";
    } else if (trn->parsed()) {
      const auto config = build_config(train_opts);
      const auto result = mmvae::cmd_train(config);
      std::cout << "trained " << result.trace.size() << " steps";
      if (!result.trace.empty()) std::cout << ", final negative ELBO " << result.trace.back();
      std::cout << "\nwrote " << config.out_dir << "/checkpoint.json and trace.csv\n";
    } else if (evl->parsed()) {
      const auto config = build_config(eval_opts);
      const std::string path =
          checkpoint.empty() ? (std::filesystem::path(config.out_dir) / "checkpoint.json").string() : checkpoint;
      mmvae::cmd_eval(config, path);
      mmvae::cmd_report(config.out_dir, std::cout);
    } else if (abl->parsed()) {
      const auto config = build_config(ablate_opts);
      mmvae::cmd_ablate(config);
      mmvae::cmd_report(config.out_dir, std::cout);
    } else if (rep->parsed()) {
      mmvae::cmd_report(report_dir, std::cout);
    }
  } catch (const mmvae::ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitValidation;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return 0;
}
