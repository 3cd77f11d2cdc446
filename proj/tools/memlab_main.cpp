#include <exception>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "memlab/experiments.hpp"

namespace {

using memlab::experiments::ExperimentConfig;

ExperimentConfig resolve_config(const std::string& config_path, const std::string& task_name,
                                std::uint64_t seed_override, int threads_override) {
  ExperimentConfig cfg;
  if (!config_path.empty()) {
    cfg = memlab::experiments::load_config(config_path);
  } else if (!task_name.empty()) {
    cfg = memlab::experiments::default_config(memlab::task_from(task_name));
  } else {
    throw CLI::ValidationError("either --config or --task is required");
  }
  if (seed_override != 0) cfg.seed = seed_override;
  if (threads_override > 0) cfg.threads = threads_override;
  return cfg;
}

std::vector<int> parse_t_values(const std::string& csv) {
  std::vector<int> out;
  std::string token;
  std::istringstream in(csv);
  while (std::getline(in, token, ',')) {
    if (!token.empty()) out.push_back(std::stoi(token));
  }
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"memlab: a desk-scale lab for probing sequential vs. random parametric-memory "
               "access in tiny language models"};
  app.require_subcommand(1);

  std::string config_path, task_name, out_dir, checkpoint_path, report_out, t_values_csv;
  std::uint64_t seed = 0;
  int threads = 0;
  bool verbose = false;
  std::vector<std::string> run_dirs;

  app.add_option("--config", config_path, "config file (flat key = value lines)");
  app.add_option("--seed", seed, "override the config seed");
  app.add_option("--out", out_dir, "output directory");
  app.add_option("--threads", threads, "evaluation threads (1 = fully serial)");
  app.add_flag("-v,--verbose", verbose, "per-epoch progress on stderr");

  CLI::App* gen = app.add_subcommand("gen", "generate corpus, vocab and instance files");
  gen->add_option("--task", task_name, "task defaults when no --config is given");

  CLI::App* train_cmd = app.add_subcommand("train", "train from a directory prepared by gen");
  train_cmd->add_option("--dir", out_dir, "run directory")->required();

  CLI::App* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint on the withheld read set");
  eval_cmd->add_option("--dir", out_dir, "run directory")->required();
  eval_cmd->add_option("--checkpoint", checkpoint_path, "checkpoint override");

  CLI::App* run_cmd = app.add_subcommand("run", "generate + train + evaluate in one go");
  run_cmd->add_option("--task", task_name, "task defaults when no --config is given");

  CLI::App* sweep_cmd = app.add_subcommand("sweep", "capacity sweep over training-passage counts");
  sweep_cmd->add_option("--task", task_name, "task defaults when no --config is given");
  sweep_cmd->add_option("--t-values", t_values_csv, "comma-separated ascending T values")
      ->required();

  CLI::App* report_cmd = app.add_subcommand("report", "comparison table over finished runs");
  report_cmd->add_option("dirs", run_dirs, "run directories")->required();
  report_cmd->add_option("--table-out", report_out, "write the machine-readable TSV here");

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen->parsed()) {
      ExperimentConfig cfg = resolve_config(config_path, task_name, seed, threads);
      if (out_dir.empty()) throw CLI::ValidationError("gen needs --out");
      memlab::experiments::generate_artifacts(cfg, out_dir);
      std::cout << "wrote corpus, vocab and instance files to " << out_dir << "\n";
    } else if (train_cmd->parsed()) {
      memlab::experiments::RunRecord record = memlab::experiments::train_from_dir(out_dir, verbose);
      std::cout << "best epoch " << record.history.best_epoch << "\n"
                << record.metrics.to_text();
    } else if (eval_cmd->parsed()) {
      memlab::eval::MetricsReport report =
          memlab::experiments::eval_from_dir(out_dir, checkpoint_path);
      std::cout << report.to_text();
    } else if (run_cmd->parsed()) {
      ExperimentConfig cfg = resolve_config(config_path, task_name, seed, threads);
      memlab::experiments::RunRecord record = memlab::experiments::run(cfg, out_dir, verbose);
      std::cout << record.cfg.label << " -> " << record.run_dir << "\n"
                << record.metrics.to_text();
    } else if (sweep_cmd->parsed()) {
      ExperimentConfig cfg = resolve_config(config_path, task_name, seed, threads);
      if (out_dir.empty()) throw CLI::ValidationError("sweep needs --out");
      std::vector<memlab::experiments::RunRecord> records =
          memlab::experiments::sweep_capacity(cfg, parse_t_values(t_values_csv), out_dir, verbose);
      std::cout << memlab::experiments::sweep_table(records);
    } else if (report_cmd->parsed()) {
      std::vector<memlab::experiments::RunRecord> records;
      records.reserve(run_dirs.size());
      for (const std::string& dir : run_dirs) {
        records.push_back(memlab::experiments::load_run_record(dir));
      }
      std::cout << memlab::experiments::report_table(records);
      if (!report_out.empty()) {
        std::ofstream out(report_out, std::ios::binary);
        if (!out) throw std::runtime_error("cannot open " + report_out);
        out << memlab::experiments::report_tsv(records);
      }
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
