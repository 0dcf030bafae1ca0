#pragma once

#include <optional>
#include <string>
#include <vector>

#include "maxmi/common.hpp"
#include "maxmi/mi_estimation.hpp"
#include "maxmi/trajectory.hpp"

namespace maxmi {

struct LocalizerConfig {
    int embed_dim = 16;  // concept embedding size P
    int channels = 32;
    int kernel = 5;
    int conv_layers = 3;
    int head_hidden = 64;
    int es_population = 32;  // even; antithetic pairs
    int es_iterations = 120;
    double es_sigma = 0.08;
    double es_lr = 0.2;

    void validate() const;
};

struct DiscoveryConfig {
    enum class Engine { profile_peaks, coordinate_ascent, localizer };
    enum class LossTerms { full, maxmi_only, diversity_only };

    int K = 10;
    std::optional<double> lambda;  // nullopt: auto-scale from the profile peaks
    int delta_t = 8;
    int nms_window = 8;
    Engine engine = Engine::coordinate_ascent;
    LossTerms loss_terms = LossTerms::full;
    MIEstimatorConfig estimator;
    LocalizerConfig localizer;
    std::uint64_t seed = 0;
    int max_sweeps = 20;
    double sweep_tol = 1e-4;

    /// lambda = 0 and disabled loss terms are only legal for the ablation
    /// harness.
    void validate(bool ablation = false) const;
};

DiscoveryConfig::Engine parse_engine(const std::string& name);
std::string engine_name(DiscoveryConfig::Engine e);

/// Per-trajectory, per-concept key-state indices (real values in [0, T-1]).
struct IndexAssignment {
    Mat indices;  // N x K

    int n() const { return static_cast<int>(indices.rows()); }
    int k() const { return static_cast<int>(indices.cols()); }
    void validate(int T) const;
};

IndexAssignment uniform_spread_init(int n, int k, int T, int delta_t);
/// All concepts at the trajectory midpoint: the neutral start used by the
/// ablation harness (soft-argmax of an untrained uniform distribution).
IndexAssignment center_init(int n, int k, int T);

struct ConceptSet {
    IndexAssignment assignment;  // N x K' (post-NMS)
    std::vector<double> scores;  // MI per concept at convergence, nats
    Mat raw_indices;             // N x K', real raw-time indices
    std::vector<std::string> trajectory_ids;
    int T = 0;

    std::string engine;
    std::string status = "ok";  // ok | low_confidence | empty | not_converged
    std::string config_hash;
    std::string dataset_hash;
    double lambda_used = 0.0;
    std::vector<double> sweep_losses;  // per-sweep loss trace (coordinate ascent)

    int num_concepts() const { return assignment.k(); }
    std::vector<double> mean_indices() const;

    std::string to_json() const;
    static ConceptSet from_json(const std::string& content);
    std::string to_csv() const;  // trajectory_id,concept,raw_index
};

double softplus(double x);

/// Expected index under p: chi . p with chi = [0, 1, ..., T-1]. Linear in p.
double soft_argmax(const Vec& p);

/// -sum_k I(s_that ; s_that-dt) over gathered pairs; indices are rounded
/// to the grid and clamped to [delta_t, T-1] before gathering.
double maxmi_objective(const NormalizedDataset& nd, const IndexAssignment& assignment,
                       const DiscoveryConfig& cfg);

/// sum_i sum_{u<v} softplus(-|t_iu - t_iv|)
double diversity_penalty(const IndexAssignment& assignment);

double total_loss(const NormalizedDataset& nd, const IndexAssignment& assignment,
                  const DiscoveryConfig& cfg);

struct Peak {
    double index = 0.0;
    double score = 0.0;
};

/// Greedy non-maximum suppression: keep the best-scoring candidate,
/// drop everything within `window` of it, repeat. Ties keep the smaller
/// index. Output ordered by score.
std::vector<Peak> nms(std::vector<Peak> candidates, int window);

ConceptSet discover_profile_peaks(const NormalizedDataset& nd, const DiscoveryConfig& cfg);

ConceptSet discover_coordinate_ascent(const NormalizedDataset& nd, const DiscoveryConfig& cfg,
                                      std::optional<IndexAssignment> init = std::nullopt);

/// Engine dispatch.
ConceptSet discover(const NormalizedDataset& nd, const DiscoveryConfig& cfg);

/// Resolved diversity weight: the configured value, or
/// 0.05 * (mean profile peak) / softplus(0) when lambda is auto.
double resolve_lambda(const NormalizedDataset& nd, const DiscoveryConfig& cfg);

/// Interior local maxima of a profile (plus rising endpoints), as
/// (absolute t, value) peaks.
std::vector<Peak> profile_local_maxima(const MIProfile& profile);

}  // namespace maxmi
