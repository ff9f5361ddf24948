#pragma once

#include "cfb/dataset.hpp"
#include "cfb/ewc.hpp"
#include "cfb/models.hpp"
#include "cfb/network.hpp"
#include "cfb/optimizer.hpp"

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace cfb {

// Accuracy-over-iteration curves. Names follow the recorded quantities:
// chi(A,B) is accuracy on test set B while training on A.
inline constexpr const char* kCurveD1 = "chi(D1,D1)";
inline constexpr const char* kCurveD2 = "chi(D2,D2)";
inline constexpr const char* kCurveUnion = "chi(D2,D1uD2)";

struct CurvePoint {
  long iter = 0;
  double acc = 0.0;
};

struct Curve {
  std::string name;
  std::vector<CurvePoint> points;
};

// Outcome of one run. Roles: "prescient" (train + retrain under one grid
// point), "phase1" (initial training only), "phase2" (retraining of the
// selected model under one retraining rate).
struct RunRecord {
  std::string id;          // content hash of the descriptor
  std::string descriptor;  // canonical run identity string
  std::string role;
  HyperParams hp;
  std::uint64_t seed = 0;  // derived per-run seed
  long t_max = 2500;
  long eval_every = 100;
  Index batch_size = 100;
  std::vector<Curve> curves;
  bool failed = false;
  std::string error;

  double q = -1.0;       // headline quality (role-specific)
  long best_iter = -1;   // iteration achieving q
  double q_r_star = -1;  // phase2: max chi(D2,D2,t) over retraining
  long t_e = -1;         // phase2: stopping iteration, local to retraining
};

struct EvalTarget {
  std::string curve_name;
  SetGuard set;
};

// Consolidation term applied during retraining.
struct EwcTerm {
  std::shared_ptr<const AnchorParams<Real>> anchor;
  std::shared_ptr<const FisherDiag<Real>> fisher;
  double lambda = 0.0;
};

struct TrainPhaseOptions {
  long iters = 2500;
  double learning_rate = 0.01;
  double momentum = 0.99;
  long eval_every = 100;
  Index batch_size = 100;
  std::uint64_t seed = 0;   // drives batch order and dropout sampling
  long iter_offset = 0;     // global iteration carried by curve points
  const EwcTerm* ewc = nullptr;
  bool keep_best = false;   // snapshot the best point of the first eval target
};

struct PhaseOutcome {
  std::vector<Curve> curves;  // one per eval target, aligned point by point
  double best_q = -1.0;       // best first-curve accuracy (when keep_best)
  long best_iter = -1;        // its global iteration
  NetworkState<Real> best_state;
};

// Momentum-SGD training loop: evaluates every eval target at iteration 0,
// every eval_every iterations and at the final iteration. Throws
// std::runtime_error on numeric failure.
PhaseOutcome train_phase(NetworkState<Real>& state, const SetGuard& train,
                         const std::vector<EvalTarget>& evals, const TrainPhaseOptions& opt);

double accuracy_on(const NetworkState<Real>& state, const LabeledSet& set);

// Index of the earliest recorded point whose accuracy exceeds 99% of the
// curve maximum (the retraining stopping rule, applied post hoc).
std::size_t stop_point_index(const Curve& curve);

// Accuracy of complete forgetting on the union test set: the class-count
// share of the second sub-task for splits, a uniform guess for permutation
// tasks. Report annotation only.
double chance_level(const TaskSpec& task);

struct ProtocolOptions {
  long t_max = 2500;
  Index batch_size = 100;
  long eval_every = 100;
  std::uint64_t seed = 1;
  int threads = 1;
  Index fisher_samples = 1000;
};

// Phase-1 winner of the realistic strategy, with the consolidation
// artifacts captured while the first sub-task is still accessible.
struct SelectedModel {
  std::string run_id;
  long iter = -1;
  double q = -1.0;
  NetworkState<Real> state;
  std::optional<FisherDiag<Real>> fisher;
};

// Persistence and progress hooks. All methods default to no-ops; a store
// that returns previously saved runs makes experiments resumable.
class RunStore {
 public:
  virtual ~RunStore() = default;
  virtual std::optional<RunRecord> load_run(const std::string& id) {
    (void)id;
    return std::nullopt;
  }
  virtual void save_run(const RunRecord& rec) { (void)rec; }
  virtual std::optional<SelectedModel> load_selected(const std::string& key) {
    (void)key;
    return std::nullopt;
  }
  virtual void save_selected(const std::string& key, const SelectedModel& model) {
    (void)key;
    (void)model;
  }
  virtual void progress(const std::string& line) { (void)line; }
};

struct ExperimentOutcome {
  double q_star = -1.0;
  std::string best_run;
  std::vector<RunRecord> runs;
};

struct AllRunsFailed : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Strategy with full knowledge: every grid point trains on D1 and retrains
// on D2; the quality of a run is the maximum union-test accuracy seen at any
// point of retraining, and the experiment reports the best run.
ExperimentOutcome prescient_eval(ModelFamily family, const TaskSpec& task,
                                 const std::vector<HyperParams>& grid,
                                 const ProtocolOptions& opt, RunStore* store = nullptr);

// Application-view strategy: model selection on the first sub-task alone,
// retraining controlled by the second alone. Phase 1 trains every
// (L,S,eps_d1) point on D1 and snapshots the best D1-test accuracy; phase 2
// retrains that snapshot under each retraining rate, stops at the point
// chosen by the 99%-of-best rule on the D2 curve, and scores the union-test
// accuracy there. D1 access is revoked once phase 2 starts.
ExperimentOutcome realistic_eval(ModelFamily family, const TaskSpec& task,
                                 const std::vector<HyperParams>& phase1_grid,
                                 const std::vector<double>& retrain_rates,
                                 const ProtocolOptions& opt, RunStore* store = nullptr);

// Canonical identity strings; hashes of these name persisted artifacts.
std::string format_double(double v);
std::string d1_descriptor(const std::string& task, const HyperParams& hp,
                          const ProtocolOptions& opt);
std::string run_descriptor(const std::string& task, const std::string& role,
                           const HyperParams& hp, const ProtocolOptions& opt,
                           const std::string& extra = "");
std::string hash_hex(const std::string& s);

}  // namespace cfb
