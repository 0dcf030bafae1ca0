#pragma once

#include "maxmi/discovery.hpp"

namespace maxmi {

/// Key-state localization network: a learnable embedding per concept is
/// appended to every state row, a 1-D conv stack encodes the sequence,
/// max-pooling over time feeds an MLP emitting T logits, and softmax
/// yields the key-state selection probability.
struct LocalizerModel {
    LocalizerConfig arch;
    int T = 0, Q = 0, K = 0;

    Mat embeddings;            // K x P
    std::vector<Mat> conv_w;   // layer l: C_out x (kernel * C_in)
    std::vector<Vec> conv_b;
    Mat head_w1;               // hidden x channels
    Vec head_b1;
    Mat head_w2;               // T x hidden
    Vec head_b2;

    int param_count() const;
    Vec to_params() const;
    void from_params(const Vec& p);

    static LocalizerModel init(int T, int Q, int K, const LocalizerConfig& arch,
                               std::uint64_t seed);
};

/// Probability vector of length T for concept k on one normalized
/// trajectory; non-negative, sums to 1.
Vec localizer_forward(const LocalizerModel& model, const Mat& traj_states, int k);

/// Soft-argmax indices for all (trajectory, concept) pairs.
IndexAssignment localizer_assignment(const LocalizerModel& model, const NormalizedDataset& nd);

struct LocalizerTrainResult {
    LocalizerModel model;
    std::vector<double> best_loss_trace;  // best-so-far per iteration
};

/// Evolution-strategies training of the localizer on total_loss: antithetic
/// Gaussian perturbations, centered-rank updates, elitism on the best
/// evaluated parameter vector.
LocalizerTrainResult train_localizer(const NormalizedDataset& nd, const DiscoveryConfig& cfg);

ConceptSet discover_localizer(const NormalizedDataset& nd, const DiscoveryConfig& cfg);

}  // namespace maxmi
