// mora: train, evaluate and inspect molecule-conditioned adapters.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "mora/checkpoint.hpp"
#include "mora/config.hpp"
#include "mora/dataset.hpp"
#include "mora/errors.hpp"
#include "mora/eval.hpp"
#include "mora/molecule.hpp"
#include "mora/training.hpp"

namespace fs = std::filesystem;
using namespace mora;

namespace {

struct Common {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string preset;
  std::vector<std::string> overrides;
};

RunConfig resolve_config(const Common& c) {
  std::string text;
  if (!c.preset.empty()) text += "preset = " + c.preset + "\n";
  if (!c.config_path.empty()) {
    std::ifstream in(c.config_path, std::ios::binary);
    if (!in) throw ConfigError("cannot open config file " + c.config_path);
    text += std::string(std::istreambuf_iterator<char>(in), {});
    text += "\n";
  }
  RunConfig cfg = RunConfig::from_text(text);
  cfg.apply_environment();
  if (c.seed) cfg.set("seed", std::to_string(*c.seed));
  for (const auto& kv : c.overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw ConfigError("--set expects key=value, got \"" + kv + "\"");
    cfg.set(kv.substr(0, eq), kv.substr(eq + 1));
  }
  cfg.validate();
  return cfg;
}

void write_file(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  out << text;
}

std::vector<TrainingExample> dataset_from(const std::string& data, const std::string& task, std::size_t n,
                                          std::uint64_t seed) {
  if (!data.empty()) return load_dataset(data);
  if (task.empty()) throw ConfigError("give --data PATH or --task NAME");
  return synth_dataset(parse_task(task), n, seed);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Molecule-conditioned low-rank adaptation of a small frozen language model"};
  app.require_subcommand(1);
  app.fallthrough();

  Common common;
  app.add_option("--config", common.config_path, "Config file (key = value lines)");
  app.add_option("--seed", common.seed, "Seed; overrides the config and MORA_SEED");
  app.add_option("--preset", common.preset, "Base preset")->check(CLI::IsMember({"desk", "paper"}));
  app.add_option("--set", common.overrides, "Config override key=value (repeatable)");

  // train
  auto* train_cmd = app.add_subcommand("train", "Train the generator (or the static baseline) on a dataset");
  std::string train_data, train_out = "run", train_mode;
  train_cmd->add_option("--data", train_data, "JSONL dataset")->required();
  train_cmd->add_option("--out", train_out, "Output directory")->capture_default_str();
  train_cmd->add_option("--mode", train_mode, "dynamic or static (default: training.mode)")
      ->check(CLI::IsMember({"dynamic", "static"}));

  // eval
  auto* eval_cmd = app.add_subcommand("eval", "Evaluate a checkpoint");
  std::string eval_ckpt, eval_data, eval_out, eval_split = "holdout";
  eval_cmd->add_option("--checkpoint", eval_ckpt, "Checkpoint file")->required();
  eval_cmd->add_option("--data", eval_data, "JSONL dataset")->required();
  eval_cmd->add_option("--split", eval_split, "holdout, train or all")
      ->check(CLI::IsMember({"holdout", "train", "all"}))
      ->capture_default_str();
  eval_cmd->add_option("--out", eval_out, "Report CSV path");

  // generate
  auto* gen_cmd = app.add_subcommand("generate", "Decode an answer for one molecule and instruction");
  std::string gen_ckpt, gen_smiles, gen_instruction;
  std::size_t gen_max_new = 0;
  gen_cmd->add_option("--checkpoint", gen_ckpt, "Checkpoint file")->required();
  gen_cmd->add_option("--smiles", gen_smiles, "Molecule (omit for the text-only path)");
  gen_cmd->add_option("--instruction", gen_instruction, "Instruction text")->required();
  gen_cmd->add_option("--max-new", gen_max_new, "Token budget (default: eval.max_new)");

  // parse
  auto* parse_cmd = app.add_subcommand("parse", "Print the graph of a SMILES string");
  std::string parse_smiles_arg;
  parse_cmd->add_option("smiles", parse_smiles_arg, "SMILES string")->required();

  // synth
  auto* synth_cmd = app.add_subcommand("synth", "Write a synthetic dataset");
  std::string synth_task, synth_out;
  std::size_t synth_n = 0;
  std::uint64_t synth_seed = 0;
  synth_cmd->add_option("--task", synth_task, "atom_count, bond_count, element_presence, graph_copy, text_only")
      ->required();
  synth_cmd->add_option("--n", synth_n, "Number of examples")->required()->check(CLI::PositiveNumber);
  synth_cmd->add_option("--seed", synth_seed, "Generation seed")->required();
  synth_cmd->add_option("--out", synth_out, "Output JSONL (stdout when omitted)");

  // ablate
  auto* ablate_cmd = app.add_subcommand("ablate", "Run an ablation sweep");
  std::string ablate_kind, ablate_data, ablate_task, ablate_out = "ablation";
  std::size_t ablate_n = 500;
  ablate_cmd->add_option("--kind", ablate_kind, "targets, depth, static_vs_dynamic or passthrough")->required();
  ablate_cmd->add_option("--data", ablate_data, "JSONL dataset");
  ablate_cmd->add_option("--task", ablate_task, "Synthesize this task instead of --data");
  ablate_cmd->add_option("--n", ablate_n, "Synthetic example count")->capture_default_str();
  ablate_cmd->add_option("--out", ablate_out, "Output directory")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  }

  try {
    const RunConfig resolved = resolve_config(common);
    if (*parse_cmd) {
      std::cout << adjacency_listing(parse_smiles(parse_smiles_arg));
      return 0;
    }
    if (*synth_cmd) {
      const auto data = synth_dataset(parse_task(synth_task), synth_n, synth_seed);
      if (synth_out.empty()) {
        std::cout << to_jsonl(data);
      } else {
        save_dataset(synth_out, data);
      }
      return 0;
    }
    if (*train_cmd) {
      RunConfig cfg = resolved;
      if (!train_mode.empty()) cfg.set("training.mode", train_mode);
      const auto data = load_dataset(train_data);
      const fs::path out = train_out;
      fs::create_directories(out);
      TrainOptions opts;
      opts.checkpoint_dir = out;
      const std::size_t total = planned_steps(cfg.training(), data.size());
      opts.on_step = [total](const LossRecord& r) {
        if (r.step % 100 == 0 || r.step == total) {
          std::fprintf(stderr, "step %zu/%zu lr %.3g loss %.5f\n", r.step, total, r.lr, r.loss);
        }
        return true;
      };
      TrainResult res = cfg.training().mode == TrainMode::static_lora ? static_lora_train(cfg, data, opts)
                                                                      : train(cfg, data, opts);
      write_file(out / "config.cfg", cfg.to_text());
      write_file(out / "loss.csv", loss_csv(res.log));
      save_checkpoint(out / "checkpoint.ckpt", res.model, res.optimizer);
      std::cout << "wrote " << (out / "checkpoint.ckpt").string() << " after " << res.log.size() << " steps\n";
      return 0;
    }
    if (*eval_cmd) {
      const Checkpoint ck = load_checkpoint(eval_ckpt);
      const auto data = load_dataset(eval_data);
      std::vector<TrainingExample> subset = data;
      if (eval_split != "all") {
        auto [tr, te] = split_holdout(data, ck.model.config.eval().holdout, ck.model.config.seed());
        subset = eval_split == "holdout" ? te : tr;
      }
      const EvalReport rep = evaluate(ck.model, subset, eval_split);
      std::cout << reports_table({rep});
      if (!eval_out.empty()) write_file(eval_out, reports_csv({rep}));
      return 0;
    }
    if (*gen_cmd) {
      const Checkpoint ck = load_checkpoint(gen_ckpt);
      TrainingExample ex;
      if (!gen_smiles.empty()) ex.smiles = gen_smiles;
      ex.instruction = gen_instruction;
      ex.answer = "?";
      const auto prepared = prepare(ck.model, {ex});
      const std::size_t budget = gen_max_new > 0 ? gen_max_new : ck.model.config.eval().max_new;
      std::cout << predict(ck.model, prepared[0], budget) << "\n";
      return 0;
    }
    if (*ablate_cmd) {
      const RunConfig& cfg = resolved;
      const auto data = dataset_from(ablate_data, ablate_task, ablate_n, cfg.seed());
      AblationOptions opts;
      opts.on_run = [](const std::string& label) { std::fprintf(stderr, "== %s\n", label.c_str()); };
      const auto reports = run_ablation(parse_ablation(ablate_kind), cfg, data, opts);
      const fs::path out = ablate_out;
      write_file(out / (ablate_kind + ".csv"), reports_csv(reports));
      const std::string table = reports_table(reports);
      write_file(out / (ablate_kind + ".txt"), table);
      std::cout << table;
      return 0;
    }
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
  return 1;
}
