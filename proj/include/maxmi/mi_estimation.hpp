#pragma once

#include <string>
#include <vector>

#include "maxmi/common.hpp"
#include "maxmi/trajectory.hpp"

namespace maxmi {

/// Paired samples from an empirical joint distribution: row i of xs is
/// paired with row i of ys.
struct SamplePairs {
    Mat xs;  // N x Dx
    Mat ys;  // N x Dy

    int size() const { return static_cast<int>(xs.rows()); }
    void validate() const;
};

struct MIEstimatorConfig {
    enum class Method { ksg, binned, gaussian_copula };

    Method method = Method::ksg;
    int k_neighbors = 3;      // ksg
    int bins_per_dim = 16;    // binned
    double jitter_sd = 1e-10; // deterministic k-NN tie-breaking noise

    void validate() const;
};

MIEstimatorConfig::Method parse_estimator_method(const std::string& name);
std::string estimator_method_name(MIEstimatorConfig::Method m);

/// Mutual information estimate in nats. May be slightly negative
/// (estimator noise); never clamped.
///
/// ksg:            Kraskov-Stoegbauer-Grassberger variant 1, max-norm,
///                 deterministic jitter keyed by (row, dim, side).
/// binned:         plug-in entropy on an equal-width per-dimension grid.
/// gaussian_copula: normal scores per dimension, then
///                 -1/2 (log det C - log det Cxx - log det Cyy).
double estimate_mi(const SamplePairs& pairs, const MIEstimatorConfig& cfg);

/// values[idx] = I(s_t ; s_{t-delta_t}) at t = delta_t + idx, in nats.
struct MIProfile {
    int delta_t = 0;
    std::vector<double> values;

    int t_at(std::size_t idx) const { return delta_t + static_cast<int>(idx); }
    std::string to_csv(const std::string& config_hash = "") const;
};

MIProfile mi_profile(const NormalizedDataset& nd, int delta_t, const MIEstimatorConfig& cfg);
MIProfile profile_from_csv(const std::string& content);

/// Applies the deterministic tie-breaking jitter in place. side
/// distinguishes the two members of a pair so identical columns never
/// jitter identically.
void apply_ksg_jitter(Mat& m, int side, double jitter_sd);

/// Incremental KSG evaluator for block-coordinate search: holds cached
/// pairwise distances and answers "what would the estimate be if row i
/// changed to (x, y)" exactly as a fresh estimate_mi call would, in
/// O(N (D + k)) per trial instead of O(N^2 D).
///
/// Expects already-jittered samples; trial rows must carry the same
/// jitter for the row they replace.
class KsgIncremental {
public:
    KsgIncremental(Mat x_jittered, Mat y_jittered, int k);

    double estimate() const;

    /// Prepares row-i caches; subsequent trial() calls evaluate candidate
    /// replacements for row i.
    void begin_row_trials(int i);
    double trial(const double* x_row, const double* y_row) const;
    void commit_row(const double* x_row, const double* y_row);

    int size() const { return n_; }

private:
    double point_contribution(int j, const std::vector<double>& dxi,
                              const std::vector<double>& dyi, const std::vector<double>& dzi,
                              int trial_row) const;

    int n_ = 0;
    int k_ = 0;
    Mat x_, y_;
    Mat dx_, dy_, dz_;  // max-norm pairwise distances; diagonal unused

    int trial_i_ = -1;
    std::vector<double> base_kth_;   // k-th NN distance of j, excluding trial row
    std::vector<double> base_km1_;   // (k-1)-th, for merged-radius updates
    std::vector<int> base_nx_, base_ny_;
};

}  // namespace maxmi
