#pragma once

#include "cfb/protocol.hpp"

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace cfb {

struct RunBrief {
  std::string id;
  std::string role;
  HyperParams hp;
  double q = -1.0;
  long t_e = -1;
  bool failed = false;
};

// One experiment = one (model, task, paradigm) search. The summary carries
// everything the report needs without reopening run files.
struct ExperimentSummary {
  std::string id;
  std::string descriptor;
  std::string model;
  std::string task;
  std::string paradigm;
  std::uint64_t seed = 1;
  long t_max = 2500;
  long eval_every = 100;
  Index batch_size = 100;
  double chance = 0.0;
  double q_star = -1.0;
  std::string best_run;
  std::vector<RunBrief> runs;
};

std::filesystem::path run_record_path(const std::filesystem::path& out_dir,
                                      const std::string& run_id);
std::filesystem::path run_curves_path(const std::filesystem::path& out_dir,
                                      const std::string& run_id);
std::filesystem::path summary_path(const std::filesystem::path& out_dir,
                                   const std::string& experiment_id);

// Run records persist as pretty-printed JSON plus a flat CSV of curve
// samples (iteration, curve_name, accuracy). Writing is deterministic:
// identical records produce identical bytes.
void write_run_record(const std::filesystem::path& out_dir, const RunRecord& rec);
RunRecord read_run_record(const std::filesystem::path& file);
std::string curves_csv(const RunRecord& rec);

void write_summary(const std::filesystem::path& out_dir, const ExperimentSummary& summary);
ExperimentSummary read_summary(const std::filesystem::path& file);

// Phase-1 winner snapshot (+ Fisher/anchor for the consolidation model), so
// retraining can resume without the first sub-task's data.
void write_selected_model(const std::filesystem::path& out_dir, const std::string& key,
                          const SelectedModel& model);
std::optional<SelectedModel> read_selected_model(const std::filesystem::path& out_dir,
                                                 const std::string& key);

struct RecordScan {
  std::vector<ExperimentSummary> summaries;
  std::vector<std::string> errors;  // unreadable or corrupt files
};

// Collects every summary-*.json below dir; bad files land in errors.
RecordScan scan_records(const std::filesystem::path& dir);

// Store backed by an output directory. With resume enabled, runs whose
// record file already exists are served from disk instead of recomputed.
class FileRunStore : public RunStore {
 public:
  FileRunStore(std::filesystem::path out_dir, bool resume, bool verbose);

  std::optional<RunRecord> load_run(const std::string& id) override;
  void save_run(const RunRecord& rec) override;
  std::optional<SelectedModel> load_selected(const std::string& key) override;
  void save_selected(const std::string& key, const SelectedModel& model) override;
  void progress(const std::string& line) override;

 private:
  std::filesystem::path dir_;
  bool resume_;
  bool verbose_;
};

}  // namespace cfb
