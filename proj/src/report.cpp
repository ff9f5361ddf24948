#include "cfb/report.hpp"

#include <algorithm>
#include <cstdio>
#include <sstream>
#include <stdexcept>

namespace cfb {

double chance_level_for_preset(const std::string& preset) {
  const auto& presets = task_presets();
  auto it = presets.find(preset);
  if (it == presets.end()) throw std::invalid_argument("unknown task preset: " + preset);
  TaskSpec pseudo;
  pseudo.kind = preset == "DP10-10" ? TaskKind::permutation : TaskKind::class_split;
  pseudo.d1_classes = it->second.d1;
  pseudo.d2_classes = it->second.d2;
  return chance_level(pseudo);
}

ResultTable build_table(const std::vector<ExperimentSummary>& summaries,
                        const std::string& paradigm) {
  ResultTable table;
  table.paradigm = paradigm;
  for (ModelFamily f : all_families()) table.models.push_back(family_name(f));
  table.tasks = task_names();
  table.cells.assign(table.models.size(), std::vector<double>(table.tasks.size(), -1.0));
  table.chance.reserve(table.tasks.size());
  for (const std::string& t : table.tasks) table.chance.push_back(chance_level_for_preset(t));

  for (const ExperimentSummary& s : summaries) {
    if (s.paradigm != paradigm) continue;
    const auto row = std::find(table.models.begin(), table.models.end(), s.model);
    const auto col = std::find(table.tasks.begin(), table.tasks.end(), s.task);
    if (row == table.models.end() || col == table.tasks.end()) continue;
    double& cell = table.cells[static_cast<std::size_t>(row - table.models.begin())]
                              [static_cast<std::size_t>(col - table.tasks.begin())];
    cell = std::max(cell, s.q_star);  // several seeds: keep the best
  }
  return table;
}

namespace {

std::string pad_left(const std::string& s, std::size_t width) {
  return s.size() >= width ? s : std::string(width - s.size(), ' ') + s;
}

std::string pad_right(const std::string& s, std::size_t width) {
  return s.size() >= width ? s : s + std::string(width - s.size(), ' ');
}

std::string cell_text(double v) {
  if (v < 0.0) return "—";  // em dash for missing experiments
  char buf[16];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

}  // namespace

std::string render_text(const ResultTable& table) {
  const std::size_t name_w = 8;
  const std::size_t cell_w = 8;
  std::ostringstream os;
  os << "Results, " << table.paradigm << " evaluation (q*; columns annotated with the"
     << " complete-forgetting chance level)\n\n";

  os << pad_right("model", name_w);
  for (const std::string& t : table.tasks) os << pad_left(t, cell_w);
  os << "\n";
  os << pad_right("chance", name_w);
  for (double c : table.chance) os << pad_left(cell_text(c), cell_w);
  os << "\n";
  os << std::string(name_w + cell_w * table.tasks.size(), '-') << "\n";
  for (std::size_t r = 0; r < table.models.size(); ++r) {
    os << pad_right(table.models[r], name_w);
    for (std::size_t c = 0; c < table.tasks.size(); ++c)
      os << pad_left(cell_text(table.cells[r][c]), cell_w);
    os << "\n";
  }
  return os.str();
}

std::string render_csv(const ResultTable& table) {
  std::string csv = "model";
  for (const std::string& t : table.tasks) csv += "," + t;
  csv += "\n";
  csv += "chance";
  for (double c : table.chance) csv += "," + format_double(c);
  csv += "\n";
  for (std::size_t r = 0; r < table.models.size(); ++r) {
    csv += table.models[r];
    for (std::size_t c = 0; c < table.tasks.size(); ++c)
      csv += "," + (table.cells[r][c] < 0.0 ? "" : format_double(table.cells[r][c]));
    csv += "\n";
  }
  return csv;
}

ResultTable parse_csv(const std::string& csv) {
  std::istringstream in(csv);
  std::string line;
  auto split = [](const std::string& s) {
    std::vector<std::string> fields;
    std::string cur;
    for (char ch : s) {
      if (ch == ',') {
        fields.push_back(cur);
        cur.clear();
      } else {
        cur += ch;
      }
    }
    fields.push_back(cur);
    return fields;
  };

  ResultTable table;
  if (!std::getline(in, line)) throw std::invalid_argument("csv: empty input");
  auto header = split(line);
  if (header.empty() || header[0] != "model") throw std::invalid_argument("csv: bad header");
  table.tasks.assign(header.begin() + 1, header.end());

  if (!std::getline(in, line)) throw std::invalid_argument("csv: missing chance row");
  auto chance = split(line);
  if (chance.size() != header.size() || chance[0] != "chance")
    throw std::invalid_argument("csv: bad chance row");
  for (std::size_t i = 1; i < chance.size(); ++i) table.chance.push_back(std::stod(chance[i]));

  while (std::getline(in, line)) {
    if (line.empty()) continue;
    auto fields = split(line);
    if (fields.size() != header.size())
      throw std::invalid_argument("csv: ragged row '" + line + "'");
    table.models.push_back(fields[0]);
    std::vector<double> row;
    for (std::size_t i = 1; i < fields.size(); ++i)
      row.push_back(fields[i].empty() ? -1.0 : std::stod(fields[i]));
    table.cells.push_back(std::move(row));
  }
  return table;
}

}  // namespace cfb
