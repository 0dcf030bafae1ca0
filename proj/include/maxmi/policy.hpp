#pragma once

#include <functional>
#include <string>
#include <vector>

#include "maxmi/common.hpp"
#include "maxmi/discovery.hpp"
#include "maxmi/synth_tasks.hpp"
#include "maxmi/trajectory.hpp"

namespace maxmi {

struct PolicyConfig {
    double alpha = 0.1;  // key-state auxiliary weight
    double learning_rate = 3e-3;
    int epochs = 60;
    int batch_size = 256;
    std::vector<int> hidden_sizes = {64, 64};
    std::uint64_t seed = 0;
    double grad_clip = 10.0;

    void validate() const;
};

/// MLP trunk with one action head and one full-state prediction head per
/// discovered concept.
struct PolicyModel {
    int q = 0, a = 0, k = 0;
    std::vector<int> hidden;

    std::vector<Mat> trunk_w;  // layer l: hidden[l] x fan_in
    std::vector<Vec> trunk_b;
    Mat action_w;  // a x hidden.back()
    Vec action_b;
    std::vector<Mat> key_w;  // per concept: q x hidden.back()
    std::vector<Vec> key_b;

    Vec act(const Vec& state) const;
    Mat key_predictions(const Vec& state) const;  // k x q

    Vec to_params() const;
    void from_params(const Vec& p);
    int param_count() const;

    std::string serialize(const std::string& config_hash = "") const;
    static PolicyModel deserialize(const std::string& content);

    static PolicyModel init(int q, int a, int k, const std::vector<int>& hidden,
                            std::uint64_t seed);
};

struct PolicyBatch {
    Mat states;                    // B x Q
    Mat actions;                   // B x A
    std::vector<Mat> key_targets;  // per concept: B x Q
};

/// Batch loss: mean over samples of ||a_hat - a||_2 + alpha * sum_k
/// ||s_hat_k - s_key_k||_2. When grads is non-null the analytic gradients
/// (same parameter layout as to_params) are written there.
double policy_loss(const PolicyModel& model, const PolicyBatch& batch, double alpha,
                   Vec* grads = nullptr);

struct TrainResult {
    PolicyModel model;
    std::vector<double> loss_trace;  // per-epoch mean loss
};

/// Behavior cloning on raw-time trajectories; key-head targets are the
/// states at each concept's (rounded) raw indices, constant across t
/// within a trajectory. Plain SGD, fixed learning rate, global grad-norm
/// clipping. Seed-deterministic.
TrainResult train_bc(const Dataset& data, const ConceptSet& concepts, const PolicyConfig& cfg);

struct EpisodeRecord {
    EventTracker tracker;
    bool success = false;
    int steps = 0;
};

using PolicyFn = std::function<Eigen::Vector3d(const EnvState& state, const Vec& obs)>;

EpisodeRecord rollout_fn(const PolicyFn& policy, const TaskSpec& spec, const EnvState& init,
                         std::uint64_t seed);
EpisodeRecord rollout(const PolicyModel& policy, const TaskSpec& spec, std::uint64_t seed);
EpisodeRecord rollout_from(const PolicyModel& policy, const TaskSpec& spec, const EnvState& init,
                           std::uint64_t seed);

struct EvalReport {
    std::string split;
    int n = 0;
    std::vector<std::pair<std::string, double>> subtask_rates;
    double task_success = 0.0;

    double rate(const std::string& label) const;
    std::string to_json(const std::string& config_hash = "") const;
};

/// split "seen" replays the training set's initial states (train_data
/// required); "unseen" samples fresh initial states from a disjoint seed
/// range.
EvalReport evaluate(const PolicyModel& policy, const TaskSpec& spec, int n_episodes,
                    const std::string& split, const Dataset* train_data = nullptr);

}  // namespace maxmi
