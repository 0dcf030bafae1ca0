#include "maxmi/ablate.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace maxmi {

double concept_spread(const ConceptSet& concepts) {
    auto means = concepts.mean_indices();
    double spread = 0.0;
    for (std::size_t a = 0; a < means.size(); ++a)
        for (std::size_t b = a + 1; b < means.size(); ++b)
            spread = std::max(spread, std::abs(means[a] - means[b]));
    return spread;
}

double mae_to_events(const ConceptSet& concepts, const Dataset& dataset, int T) {
    if (concepts.num_concepts() == 0) throw Error("mae_to_events: empty concept set");
    double total = 0.0;
    int count = 0;
    for (int i = 0; i < dataset.size(); ++i) {
        const Trajectory& tr = dataset.trajectories[static_cast<std::size_t>(i)];
        for (const auto& [label, mark] : normalized_marks(tr, T)) {
            double best = std::numeric_limits<double>::infinity();
            for (int c = 0; c < concepts.num_concepts(); ++c)
                best = std::min(best, std::abs(concepts.assignment.indices(i, c) - mark));
            total += best;
            ++count;
        }
    }
    if (count == 0) throw Error("mae_to_events: dataset has no event marks");
    return total / count;
}

AblationReport run_ablation(const NormalizedDataset& nd, const Dataset& dataset,
                            const DiscoveryConfig& cfg) {
    cfg.validate(true);
    AblationReport report;

    struct ArmSpec {
        const char* name;
        DiscoveryConfig::LossTerms terms;
    };
    const ArmSpec arm_specs[] = {
        {"pd_only", DiscoveryConfig::LossTerms::diversity_only},
        {"maxmi_only", DiscoveryConfig::LossTerms::maxmi_only},
        {"full", DiscoveryConfig::LossTerms::full},
    };

    for (const auto& spec : arm_specs) {
        DiscoveryConfig arm_cfg = cfg;
        arm_cfg.engine = DiscoveryConfig::Engine::coordinate_ascent;
        arm_cfg.loss_terms = spec.terms;
        ConceptSet cs =
            discover_coordinate_ascent(nd, arm_cfg, center_init(nd.size(), cfg.K, nd.T));

        AblationArm arm;
        arm.name = spec.name;
        arm.spread = concept_spread(cs);
        arm.mae = mae_to_events(cs, dataset, nd.T);
        arm.final_loss = cs.sweep_losses.empty() ? 0.0 : cs.sweep_losses.back();
        arm.concepts = std::move(cs);
        report.arms.push_back(std::move(arm));
    }
    return report;
}

std::string AblationReport::to_csv(const std::string& config_hash) const {
    std::string out;
    if (!config_hash.empty()) out += "# config_hash=" + config_hash + "\n";
    out += "arm,n_concepts,spread,mae_to_events,final_loss,lambda\n";
    for (const auto& a : arms)
        out += a.name + "," + std::to_string(a.concepts.num_concepts()) + "," +
               format_double(a.spread) + "," + format_double(a.mae) + "," +
               format_double(a.final_loss) + "," + format_double(a.concepts.lambda_used) + "\n";
    return out;
}

}  // namespace maxmi
