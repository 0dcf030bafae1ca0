#pragma once

#include <optional>
#include <string>
#include <vector>

#include "maxmi/discovery.hpp"
#include "maxmi/mi_estimation.hpp"

namespace maxmi {

/// Optional overlays for the profile plot.
struct PlotMarks {
    std::vector<std::pair<std::string, double>> event_marks;  // mean normalized marks
    std::vector<double> concept_indices;                      // concept mean indices
};

/// Deterministic SVG line plot of an MI profile with vertical markers for
/// discovered concepts and ground-truth events. Identical inputs produce
/// identical bytes.
std::string plot_profile_svg(const MIProfile& profile, const PlotMarks& marks = {},
                             const std::string& title = "");

}  // namespace maxmi
