#pragma once

#include <string>

#include "maxmi/discovery.hpp"
#include "maxmi/policy.hpp"
#include "maxmi/synth_tasks.hpp"

namespace maxmi {

/// One experiment: task generation, normalization, discovery, policy and
/// evaluation settings, plus the output directory and global seed.
/// Parsed from a flat key=value config file with [section] headers.
struct RunConfig {
    std::uint64_t seed = 0;
    std::string output_dir = "out";
    int normalize_T = 128;

    TaskSpec task;
    int gen_n = 200;

    DiscoveryConfig discovery;
    PolicyConfig policy;

    int eval_episodes = 100;
    std::string eval_split = "seen";

    static RunConfig parse(const std::string& content);
    static RunConfig from_file(const std::string& path);

    void apply_override(const std::string& key, const std::string& value);
    void finalize();  // propagate the global seed into unseeded blocks
    void validate() const;

    // canonical serializations; hashes are stable across runs
    std::string canonical_task() const;
    std::string canonical_profile() const;    // task + normalization + estimator
    std::string canonical_discovery() const;  // + discovery block
    std::string canonical_policy() const;     // + policy block

    std::string hash_task() const;
    std::string hash_profile() const;
    std::string hash_discovery() const;
    std::string hash_policy() const;

    // artifact paths inside output_dir
    std::string dataset_path() const;
    std::string profile_csv_path() const;
    std::string profile_svg_path() const;
    std::string concepts_path() const;
    std::string policy_path() const;
    std::string policy_loss_path() const;
    std::string eval_path() const;
    std::string ablate_path() const;
    std::string plot_path() const;

private:
    bool task_seed_set_ = false;
    bool policy_seed_set_ = false;
    bool discovery_seed_set_ = false;
};

}  // namespace maxmi
