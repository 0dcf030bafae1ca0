#pragma once

#include <cstdint>
#include <optional>
#include <string>

#include "maxmi/common.hpp"
#include "maxmi/rng.hpp"
#include "maxmi/trajectory.hpp"

namespace maxmi {

enum class TaskKind { reach_grasp_place, peg_align_insert };

TaskKind parse_task_kind(const std::string& name);
std::string task_kind_name(TaskKind k);

struct Box {
    double xmin = 0.0, ymin = 0.0, xmax = 1.0, ymax = 1.0;
    double width() const { return xmax - xmin; }
    double height() const { return ymax - ymin; }
};

struct TaskSpec {
    TaskKind kind = TaskKind::reach_grasp_place;
    int horizon = 300;
    double state_noise_sd = 0.01;   // per-step, task length units
    double action_noise_sd = 0.005;
    std::uint64_t seed = 0;
    Box workspace_bounds;

    void validate() const;
    int state_dim() const { return kind == TaskKind::reach_grasp_place ? 8 : 9; }
    static constexpr int kActionDim = 3;  // (dx, dy, dgrip)

    std::vector<std::string> expected_events() const;
};

// Tuned kinematic constants (unit-box workspace).
namespace task_constants {
inline constexpr double eps_contact = 0.02;
inline constexpr double eps_goal = 0.03;
inline constexpr double eps_align = 0.025;
inline constexpr double angle_tol = 0.10;
inline constexpr double v_max = 0.05;
inline constexpr double grip_rate = 0.05;
inline constexpr double hold_rate = 0.05;
inline constexpr double kp = 0.05;
// cruise/docking floor: strong enough to reject per-step process noise,
// and makes phase durations near-linear in the leg distances
inline constexpr double v_dock = 0.016;
// the expert squeezes to grip_hold rather than 0, which places the 0.5
// latch crossing late in the closing ramp
extern double grip_hold;
extern double grip_slip;  // relaxed-but-latched grip before the slip
extern double close_dist;
extern double release_reach;  // relax-grip distances per task
extern double release_peg;
extern double seat_gate;     // force level that ends the post-grasp seat wait
extern double ring_start;    // hover-ring radii for the placement wait
extern double ring_shrink;
extern double relax_rate;    // grip relaxation speed during the placement wait
extern double dock_gain;     // final-approach taper
inline constexpr double v_insert = 0.010;  // corridor speed inside the hole approach
inline constexpr double v_retreat = 0.013; // sloppy homing speed after the task is done
inline constexpr double standoff = 0.16;   // align waypoint offset from the hole
inline constexpr double insert_depth = 0.04;
inline constexpr double retreat_hyst = 0.045;  // done-state hysteresis for the retreat
inline constexpr double relax_noise = 4.0;  // action-noise factor once the task is done
inline constexpr int settle_steps = 20;
inline constexpr int retry_cap = 10;
}  // namespace task_constants

/// Full environment state. The observed state vector (to_observation) is
/// the per-task subset; gripper closure is reported through the smoothed
/// hold_level channel rather than the raw latch so every observed
/// dimension carries process noise.
struct EnvState {
    Eigen::Vector2d agent{0, 0};
    Eigen::Vector2d object{0, 0};
    Eigen::Vector2d goal{0, 0};
    Eigen::Vector2d hole{0, 0};  // peg task
    double gripper = 1.0;        // 1 open .. 0 closed
    double hold_level = 0.0;
    double peg_angle = 0.0;
    bool held = false;

    // carry pose: the grip settles onto a per-grasp handle sampled at the
    // latch (where the fingers happened to land)
    Eigen::Vector2d handle{0, 0};
    Eigen::Vector2d carry_pose{0, 0};

    // rest anchors for the mean-reverting jitter of passive entities
    Eigen::Vector2d object_rest{0, 0};
    Eigen::Vector2d goal_anchor{0, 0};
    Eigen::Vector2d hole_anchor{0, 0};
    double angle_anchor = 0.0;

    Vec to_observation(const TaskSpec& spec) const;
    static EnvState from_observation(const TaskSpec& spec, const Vec& row);

    Eigen::Vector2d align_waypoint() const {
        return hole - Eigen::Vector2d(task_constants::standoff, 0.0);
    }
    Eigen::Vector2d insertion_goal() const {
        return hole + Eigen::Vector2d(task_constants::insert_depth, 0.0);
    }
};

EnvState sample_initial_state(const TaskSpec& spec, Rng& rng);

/// Proportional controller toward the current phase target; the returned
/// action satisfies the env caps (planar norm <= v_max, |dgrip| <= grip_rate).
Eigen::Vector3d scripted_expert_step(const EnvState& state, const TaskSpec& spec);

/// Kinematic update with per-step truncated-Gaussian process noise and
/// bound clamping. Per-dimension displacements stay within
/// v_max + 3 * state_noise_sd.
EnvState env_step(const EnvState& state, const Eigen::Vector3d& action, const TaskSpec& spec,
                  Rng& rng);

/// Shared event predicates: the generator derives marks from them and the
/// rollout harness derives success flags, so both sides always agree.
struct EventTracker {
    std::optional<int> grasp_t, place_t, align_t, insert_t;

    void update(const EnvState& state, const TaskSpec& spec, int t);
    bool done(const TaskSpec& spec) const;
    std::vector<EventMark> marks(const TaskSpec& spec) const;
    bool flag(const std::string& label) const;
};

/// n scripted-expert demonstrations with ground-truth event marks.
/// Pure function of (spec, n): each trajectory owns an rng stream derived
/// from (spec.seed, index, attempt). Failed attempts are regenerated up to
/// task_constants::retry_cap, then generation fails.
Dataset generate(const TaskSpec& spec, int n);

}  // namespace maxmi
