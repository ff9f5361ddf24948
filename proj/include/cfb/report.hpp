#pragma once

#include "cfb/record_io.hpp"

#include <string>
#include <vector>

namespace cfb {

// Result grid in the layout of the benchmark tables: model families as rows,
// task presets as columns (D5-5 block, D9-1 block, DP10-10), the best quality
// q* per cell. Cells without a persisted experiment stay at -1.
struct ResultTable {
  std::string paradigm;
  std::vector<std::string> models;
  std::vector<std::string> tasks;
  std::vector<std::vector<double>> cells;  // [model][task], -1 = missing
  std::vector<double> chance;              // per task column
};

// Chance level (complete-forgetting accuracy) for a preset, from its class
// partition alone.
double chance_level_for_preset(const std::string& preset);

ResultTable build_table(const std::vector<ExperimentSummary>& summaries,
                        const std::string& paradigm);

// Fixed-width text rendering; missing cells print as an em dash.
std::string render_text(const ResultTable& table);

// CSV with one row per model plus a leading chance row; full-precision
// values so the table round-trips exactly.
std::string render_csv(const ResultTable& table);
ResultTable parse_csv(const std::string& csv);

}  // namespace cfb
