#include "cfb/driver.hpp"
#include "cfb/report.hpp"
#include "cfb/svg_plot.hpp"

#include "CLI11.hpp"
#include "json.hpp"

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>

namespace {

using cfb::ExperimentConfig;

// Config file values sit between built-in defaults and command-line flags.
void apply_config_file(ExperimentConfig& cfg, const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config file " + path);
  nlohmann::json j;
  in >> j;
  cfg.model = j.value("model", cfg.model);
  cfg.task = j.value("task", cfg.task);
  cfg.paradigm = j.value("paradigm", cfg.paradigm);
  cfg.seed = j.value("seed", cfg.seed);
  cfg.replicas = j.value("replicas", cfg.replicas);
  cfg.t_max = j.value("t_max", cfg.t_max);
  cfg.batch_size = j.value("batch_size", cfg.batch_size);
  cfg.eval_every = j.value("eval_every", cfg.eval_every);
  cfg.parallel = j.value("parallel", cfg.parallel);
  cfg.fisher_samples = j.value("fisher_samples", cfg.fisher_samples);
  cfg.permute_d1 = j.value("permute_d1", cfg.permute_d1);
  cfg.data_dir = j.value("data_dir", cfg.data_dir);
  cfg.out_dir = j.value("out_dir", cfg.out_dir);
  if (j.contains("layers")) cfg.grid.hidden_layers = j["layers"].get<std::vector<int>>();
  if (j.contains("sizes")) cfg.grid.layer_sizes = j["sizes"].get<std::vector<int>>();
  if (j.contains("eps_d1")) cfg.grid.eps_d1 = j["eps_d1"].get<std::vector<double>>();
  if (j.contains("eps_d2")) cfg.grid.eps_d2 = j["eps_d2"].get<std::vector<double>>();
}

std::string prescan_config(int argc, char** argv) {
  for (int i = 1; i < argc; ++i) {
    const std::string arg = argv[i];
    if (arg == "--config" && i + 1 < argc) return argv[i + 1];
    if (arg.rfind("--config=", 0) == 0) return arg.substr(9);
  }
  return {};
}

void add_experiment_options(CLI::App* cmd, ExperimentConfig& cfg) {
  cmd->add_option("--model", cfg.model, "Model family: fc, D-fc, conv, D-conv, LWTA, EWC");
  cmd->add_option("--task", cfg.task, "Task preset: D5-5a..h, D9-1a..c, DP10-10");
  cmd->add_option("--paradigm", cfg.paradigm, "Evaluation paradigm: prescient or realistic");
  cmd->add_option("--seed", cfg.seed, "Experiment seed");
  cmd->add_option("--replicas", cfg.replicas, "Repeat with consecutive seeds")
      ->check(CLI::PositiveNumber);
  cmd->add_option("--tmax", cfg.t_max, "Iterations per training phase");
  cmd->add_option("--batch-size", cfg.batch_size, "Minibatch size");
  cmd->add_option("--eval-every", cfg.eval_every, "Evaluation interval in iterations");
  cmd->add_option("--parallel", cfg.parallel, "Concurrent grid runs")
      ->check(CLI::PositiveNumber);
  cmd->add_option("--fisher-samples", cfg.fisher_samples,
                  "Sample count for the Fisher estimate (EWC)");
  cmd->add_flag("--permute-d1", cfg.permute_d1,
                "DP10-10: apply a random pixel permutation to the first sub-task too");
  cmd->add_option("--data-dir", cfg.data_dir, "Directory with the four MNIST IDX files");
  cmd->add_option("--out-dir", cfg.out_dir, "Output directory for records and summaries");
  cmd->add_option("--layers", cfg.grid.hidden_layers, "Hidden layer counts to scan")
      ->delimiter(',');
  cmd->add_option("--sizes", cfg.grid.layer_sizes, "Layer sizes to scan")->delimiter(',');
  cmd->add_option("--eps1", cfg.grid.eps_d1, "Initial-training learning rates")->delimiter(',');
  cmd->add_option("--eps2", cfg.grid.eps_d2, "Retraining learning rates")->delimiter(',');
  std::string dummy;
  cmd->add_option("--config", dummy, "JSON config file (flags take precedence)");
}

int run_experiments(const ExperimentConfig& cfg, bool resume, bool verbose) {
  const cfb::MnistData mnist = cfb::load_mnist_dir(cfg.data_dir);
  for (int k = 0; k < cfg.replicas; ++k) {
    const std::uint64_t seed = cfg.seed + static_cast<std::uint64_t>(k);
    const cfb::ExperimentSummary summary =
        cfb::run_experiment(cfg, mnist, seed, resume, verbose);
    std::printf("%s %s %s seed=%llu: q* = %.4f (chance %.2f)\n", summary.model.c_str(),
                summary.task.c_str(), summary.paradigm.c_str(),
                static_cast<unsigned long long>(seed), summary.q_star, summary.chance);
    std::printf("summary: %s\n",
                cfb::summary_path(cfg.out_dir, summary.id).string().c_str());
  }
  return 0;
}

int run_report(const std::string& records_dir, const std::string& out_dir) {
  const cfb::RecordScan scan = cfb::scan_records(records_dir);
  for (const std::string& err : scan.errors) std::cerr << "warning: " << err << "\n";
  if (scan.summaries.empty()) {
    std::cerr << "error: no records found in " << records_dir << "\n";
    return 1;
  }
  int written = 0;
  for (const char* paradigm : {"prescient", "realistic"}) {
    const cfb::ResultTable table = cfb::build_table(scan.summaries, paradigm);
    bool any = false;
    for (const auto& row : table.cells)
      for (double v : row) any = any || v >= 0.0;
    if (!any) continue;
    const std::string text = cfb::render_text(table);
    std::cout << text << "\n";
    const auto base = std::filesystem::path(out_dir);
    std::filesystem::create_directories(base);
    const auto txt = base / ("report-" + std::string(paradigm) + ".txt");
    const auto csv = base / ("report-" + std::string(paradigm) + ".csv");
    std::ofstream(txt) << text;
    std::ofstream(csv) << cfb::render_csv(table);
    std::cout << "wrote " << txt.string() << " and " << csv.string() << "\n";
    ++written;
  }
  return written > 0 ? 0 : 1;
}

int run_plot(const std::string& record_file, std::string out_file) {
  const cfb::RunRecord rec = cfb::read_run_record(record_file);
  if (out_file.empty())
    out_file = std::filesystem::path(record_file).replace_extension(".svg").string();
  cfb::write_run_svg(rec, out_file);
  std::cout << "wrote " << out_file << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Incremental-learning benchmark: catastrophic forgetting of DNNs on "
               "MNIST-derived task pairs"};
  app.require_subcommand(1);

  ExperimentConfig cfg;
  if (const char* env = std::getenv("CFBENCH_DATA_DIR")) cfg.data_dir = env;
  const std::string config_file = prescan_config(argc, argv);
  try {
    if (!config_file.empty()) apply_config_file(cfg, config_file);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }

  bool verbose = false;
  CLI::App* cmd_run = app.add_subcommand("run", "Run one experiment (model, task, paradigm)");
  add_experiment_options(cmd_run, cfg);
  cmd_run->add_flag("--verbose", verbose, "Print per-run progress");

  CLI::App* cmd_grid = app.add_subcommand(
      "grid", "Run an experiment with resume: persisted runs are skipped");
  add_experiment_options(cmd_grid, cfg);

  std::string records_dir, report_out;
  CLI::App* cmd_report =
      app.add_subcommand("report", "Render result tables from persisted summaries");
  cmd_report->add_option("records", records_dir, "Directory with experiment records")
      ->required();
  cmd_report->add_option("--out-dir", report_out,
                         "Where to write report files (default: records dir)");

  std::string record_file, plot_out;
  CLI::App* cmd_plot = app.add_subcommand("plot", "Render a run record as an SVG chart");
  cmd_plot->add_option("record", record_file, "Run record JSON file")->required();
  cmd_plot->add_option("--out", plot_out, "Output SVG path");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    if (*cmd_run) return run_experiments(cfg, /*resume=*/false, verbose);
    if (*cmd_grid) return run_experiments(cfg, /*resume=*/true, /*verbose=*/true);
    if (*cmd_report)
      return run_report(records_dir, report_out.empty() ? records_dir : report_out);
    if (*cmd_plot) return run_plot(record_file, plot_out);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
