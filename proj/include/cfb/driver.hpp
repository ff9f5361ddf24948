#pragma once

#include "cfb/record_io.hpp"

#include <cstdint>
#include <string>

namespace cfb {

// One experiment as configured from the command line or a config file.
// Defaults reproduce the benchmark settings: 2500 iterations per phase,
// batch size 100, evaluation every 100 iterations, the full hyperparameter
// grids per model family.
struct ExperimentConfig {
  std::string model = "fc";
  std::string task = "D5-5a";
  std::string paradigm = "realistic";  // or "prescient"
  std::uint64_t seed = 1;
  int replicas = 1;           // consecutive seeds starting at `seed`
  long t_max = 2500;
  Index batch_size = 100;
  long eval_every = 100;
  int parallel = 1;
  Index fisher_samples = 1000;
  bool permute_d1 = false;    // DP10-10: permute the first sub-task too
  std::string data_dir = "data/mnist";
  std::string out_dir = "out";
  GridRanges grid;            // empty fields fall back to family defaults
};

// Canonical identity of the experiment under one seed; covers every field
// that influences results (not directories or parallelism).
std::string experiment_descriptor(const ExperimentConfig& cfg, std::uint64_t seed);

// Executes the configured experiment for one seed: builds the task, runs the
// chosen evaluation strategy over the grid, persists run records and the
// summary under cfg.out_dir. With resume, persisted runs are reused.
ExperimentSummary run_experiment(const ExperimentConfig& cfg, const MnistData& mnist,
                                 std::uint64_t seed, bool resume, bool verbose);

}  // namespace cfb
