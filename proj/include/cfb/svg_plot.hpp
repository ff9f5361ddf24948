#pragma once

#include "cfb/protocol.hpp"

#include <filesystem>
#include <string>

namespace cfb {

// Accuracy-over-iteration chart for one run record: x spans the full
// training+retraining window, y is accuracy in [0,1]. The retraining half is
// shaded grey; chi(D1,D1) draws blue, chi(D2,D2) green, chi(D2,D1uD2) red.
// Throws if the record has no curve points.
std::string render_run_svg(const RunRecord& rec);

void write_run_svg(const RunRecord& rec, const std::filesystem::path& file);

}  // namespace cfb
