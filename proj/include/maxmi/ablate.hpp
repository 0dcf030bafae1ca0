#pragma once

#include <string>
#include <vector>

#include "maxmi/discovery.hpp"
#include "maxmi/trajectory.hpp"

namespace maxmi {

/// Max pairwise distance between concept mean indices (0 for <2 concepts).
double concept_spread(const ConceptSet& concepts);

/// Mean over (trajectory, event mark) of the distance from the mark's
/// normalized position to the nearest concept index in that trajectory.
double mae_to_events(const ConceptSet& concepts, const Dataset& dataset, int T);

struct AblationArm {
    std::string name;  // full | maxmi_only | pd_only
    ConceptSet concepts;
    double spread = 0.0;
    double mae = 0.0;
    double final_loss = 0.0;
};

struct AblationReport {
    std::vector<AblationArm> arms;
    std::string to_csv(const std::string& config_hash = "") const;
};

/// Three coordinate-ascent runs from a shared neutral init (all concepts
/// at the trajectory midpoint): diversity-only, MaxMI-only (lambda = 0),
/// and the full loss.
AblationReport run_ablation(const NormalizedDataset& nd, const Dataset& dataset,
                            const DiscoveryConfig& cfg);

}  // namespace maxmi
