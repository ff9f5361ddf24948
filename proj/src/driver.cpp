#include "cfb/driver.hpp"

#include "cfb/rng.hpp"

#include <algorithm>
#include <sstream>

namespace cfb {

namespace {

std::string joined(const std::vector<int>& v) {
  std::string s;
  for (int x : v) s += (s.empty() ? "" : ",") + std::to_string(x);
  return s;
}

std::string joined(const std::vector<double>& v) {
  std::string s;
  for (double x : v) s += (s.empty() ? "" : ",") + format_double(x);
  return s;
}

void validate_config(const ExperimentConfig& cfg) {
  const auto& names = task_names();
  if (std::find(names.begin(), names.end(), cfg.task) == names.end()) {
    std::string valid;
    for (const std::string& n : names) valid += (valid.empty() ? "" : ", ") + n;
    throw std::invalid_argument("unknown task '" + cfg.task + "' (valid presets: " + valid + ")");
  }
  if (cfg.paradigm != "prescient" && cfg.paradigm != "realistic")
    throw std::invalid_argument("unknown paradigm '" + cfg.paradigm +
                                "' (valid: prescient, realistic)");
  if (cfg.t_max <= 0) throw std::invalid_argument("t_max must be positive");
  if (cfg.batch_size <= 0) throw std::invalid_argument("batch size must be positive");
  if (cfg.eval_every <= 0) throw std::invalid_argument("eval-every must be positive");
  parse_family(cfg.model);  // throws with the list of valid families
}

}  // namespace

std::string experiment_descriptor(const ExperimentConfig& cfg, std::uint64_t seed) {
  const ModelFamily family = parse_family(cfg.model);
  const GridRanges ranges = apply_overrides(family, cfg.grid);
  std::ostringstream os;
  os << "experiment|model=" << cfg.model << "|task=" << cfg.task
     << "|paradigm=" << cfg.paradigm << "|seed=" << seed << "|tmax=" << cfg.t_max
     << "|batch=" << cfg.batch_size << "|eval=" << cfg.eval_every
     << "|L=" << joined(ranges.hidden_layers) << "|S=" << joined(ranges.layer_sizes)
     << "|eps1=" << joined(ranges.eps_d1) << "|eps2=" << joined(ranges.eps_d2);
  if (family_is_ewc(family)) os << "|fisher=" << cfg.fisher_samples;
  if (cfg.task == "DP10-10") os << "|permute_d1=" << (cfg.permute_d1 ? 1 : 0);
  return os.str();
}

ExperimentSummary run_experiment(const ExperimentConfig& cfg, const MnistData& mnist,
                                 std::uint64_t seed, bool resume, bool verbose) {
  validate_config(cfg);
  const ModelFamily family = parse_family(cfg.model);
  const GridRanges ranges = apply_overrides(family, cfg.grid);

  const TaskSpec task =
      make_task(mnist, cfg.task, derive_seed(seed, fnv1a64("task-permutation")), cfg.permute_d1);

  ProtocolOptions popt;
  popt.t_max = cfg.t_max;
  popt.batch_size = cfg.batch_size;
  popt.eval_every = cfg.eval_every;
  popt.seed = seed;
  popt.threads = cfg.parallel;
  popt.fisher_samples = cfg.fisher_samples;

  FileRunStore store(cfg.out_dir, resume, verbose);
  const ExperimentOutcome outcome =
      cfg.paradigm == "prescient"
          ? prescient_eval(family, task, full_grid(family, ranges), popt, &store)
          : realistic_eval(family, task, phase1_grid(family, ranges), ranges.eps_d2, popt,
                           &store);

  ExperimentSummary summary;
  summary.descriptor = experiment_descriptor(cfg, seed);
  summary.id = hash_hex(summary.descriptor);
  summary.model = cfg.model;
  summary.task = cfg.task;
  summary.paradigm = cfg.paradigm;
  summary.seed = seed;
  summary.t_max = cfg.t_max;
  summary.eval_every = cfg.eval_every;
  summary.batch_size = cfg.batch_size;
  summary.chance = chance_level(task);
  summary.q_star = outcome.q_star;
  summary.best_run = outcome.best_run;
  for (const RunRecord& r : outcome.runs)
    summary.runs.push_back({r.id, r.role, r.hp, r.q, r.t_e, r.failed});

  write_summary(cfg.out_dir, summary);
  return summary;
}

}  // namespace cfb
