#include "maxmi/synth_tasks.hpp"

#include <cmath>

namespace maxmi {

namespace task_constants {
double grip_hold = 0.42;
double grip_slip = 0.49;
double close_dist = 0.13;
double release_reach = 0.078;
double release_peg = 0.06;
double seat_gate = 0.30;
double ring_start = 0.0295;
double ring_shrink = 0.0135;
double relax_rate = 0.007;
double dock_gain = 0.30;
}  // namespace task_constants

using namespace task_constants;

TaskKind parse_task_kind(const std::string& name) {
    if (name == "reach_grasp_place") return TaskKind::reach_grasp_place;
    if (name == "peg_align_insert") return TaskKind::peg_align_insert;
    throw ConfigError("unknown task kind '" + name + "'");
}

std::string task_kind_name(TaskKind k) {
    return k == TaskKind::reach_grasp_place ? "reach_grasp_place" : "peg_align_insert";
}

void TaskSpec::validate() const {
    if (horizon < 20) throw ConfigError("task: horizon must be >= 20");
    if (!(state_noise_sd >= 0.0) || !std::isfinite(state_noise_sd))
        throw ConfigError("task: state_noise_sd must be finite and >= 0");
    if (!(action_noise_sd >= 0.0) || !std::isfinite(action_noise_sd))
        throw ConfigError("task: action_noise_sd must be finite and >= 0");
    if (!(workspace_bounds.width() > 0.0) || !(workspace_bounds.height() > 0.0))
        throw ConfigError("task: degenerate workspace bounds");
}

std::vector<std::string> TaskSpec::expected_events() const {
    if (kind == TaskKind::reach_grasp_place) return {"grasp", "place"};
    return {"grasp", "align", "insert"};
}

Vec EnvState::to_observation(const TaskSpec& spec) const {
    Vec v(spec.state_dim());
    v[0] = agent.x();
    v[1] = agent.y();
    v[2] = object.x();
    v[3] = object.y();
    if (spec.kind == TaskKind::reach_grasp_place) {
        v[4] = goal.x();
        v[5] = goal.y();
        v[6] = gripper;
        v[7] = hold_level;
    } else {
        v[4] = hole.x();
        v[5] = hole.y();
        v[6] = gripper;
        v[7] = hold_level;
        v[8] = peg_angle;
    }
    return v;
}

EnvState EnvState::from_observation(const TaskSpec& spec, const Vec& row) {
    if (row.size() != spec.state_dim())
        throw Error("from_observation: state dim mismatch");
    EnvState s;
    s.agent = {row[0], row[1]};
    s.object = {row[2], row[3]};
    if (spec.kind == TaskKind::reach_grasp_place) {
        s.goal = {row[4], row[5]};
        s.gripper = row[6];
        s.hold_level = row[7];
    } else {
        s.hole = {row[4], row[5]};
        s.gripper = row[6];
        s.hold_level = row[7];
        s.peg_angle = row[8];
        s.goal = s.insertion_goal();
    }
    s.held = s.hold_level > 0.5;
    if (s.held) {
        s.handle = s.object - s.agent;
        s.carry_pose = s.handle;
    }
    s.object_rest = s.object;
    s.goal_anchor = s.goal;
    s.hole_anchor = s.hole;
    s.angle_anchor = s.peg_angle;
    return s;
}

namespace {

Eigen::Vector2d box_point(const Box& b, double fx0, double fx1, double fy0, double fy1, Rng& rng) {
    return {b.xmin + b.width() * rng.uniform(fx0, fx1),
            b.ymin + b.height() * rng.uniform(fy0, fy1)};
}

inline double truncated_noise(Rng& rng, double sd) {
    if (sd <= 0.0) {
        rng.gaussian();  // keep the stream layout independent of sd
        return 0.0;
    }
    double g = rng.gaussian();
    if (g > 3.0) g = 3.0;
    if (g < -3.0) g = -3.0;
    return sd * g;
}

inline double clamp(double v, double lo, double hi) { return v < lo ? lo : (v > hi ? hi : v); }

inline Eigen::Vector2d clamp_box(Eigen::Vector2d p, const Box& b) {
    p.x() = clamp(p.x(), b.xmin, b.xmax);
    p.y() = clamp(p.y(), b.ymin, b.ymax);
    return p;
}

// AR(1) jitter of a passive entity around its rest anchor
inline double settle(double value, double anchor, double rate, Rng& rng, double sd) {
    double pull = rate * (anchor - value);
    pull = clamp(pull, -v_max, v_max);
    return value + pull + truncated_noise(rng, sd);
}

inline Eigen::Vector2d planar_cap(Eigen::Vector2d v, double cap) {
    double n = v.norm();
    if (n > cap) v *= cap / n;
    return v;
}

}  // namespace

EnvState sample_initial_state(const TaskSpec& spec, Rng& rng) {
    const Box& b = spec.workspace_bounds;
    EnvState s;
    s.agent = box_point(b, 0.11, 0.17, 0.11, 0.17, rng);
    s.object = box_point(b, 0.47, 0.53, 0.47, 0.53, rng);
    if (spec.kind == TaskKind::reach_grasp_place) {
        s.goal = box_point(b, 0.82, 0.92, 0.44, 0.56, rng);
    } else {
        s.hole = box_point(b, 0.905, 0.935, 0.44, 0.56, rng);
        s.goal = s.insertion_goal();
        s.peg_angle = rng.uniform(-0.25, 0.25);
    }
    s.gripper = rng.uniform(0.93, 1.0);
    s.hold_level = rng.uniform(-0.02, 0.02);
    s.held = false;
    s.object_rest = s.object;
    s.goal_anchor = s.goal;
    s.hole_anchor = s.hole;
    s.angle_anchor = s.peg_angle;
    return s;
}

namespace {

// proportional step with a docking floor: noise cannot stall the approach
Eigen::Vector2d control_step(const Eigen::Vector2d& from, const Eigen::Vector2d& to) {
    Eigen::Vector2d gap = to - from;
    double d = gap.norm();
    if (d < 1e-12) return {0.0, 0.0};
    double speed = std::min(v_max, std::max(kp * d, std::min(d, v_dock)));
    return (speed / d) * gap;
}

}  // namespace

Eigen::Vector3d scripted_expert_step(const EnvState& state, const TaskSpec& spec) {
    Eigen::Vector2d target = state.agent;
    double grip_target = state.gripper;

    // hysteresis above eps_goal so post-release jitter cannot trigger a re-grasp
    const bool placed = (state.object - state.goal).norm() < retreat_hyst;

    double speed_cap = v_max;

    if (!state.held) {
        const double dist = (state.agent - state.object).norm();
        const bool closing = state.gripper < 0.9;  // docking already under way
        if (placed) {
            // done: open up and amble home, easing out of the goal area so
            // the placement gets a short verification dwell
            grip_target = 1.0;
            const Box& b = spec.workspace_bounds;
            target = {b.xmin + 0.14 * b.width(), b.ymin + 0.14 * b.height()};
            speed_cap = std::min(v_retreat, 0.5 * dist + 0.004);
        } else if (dist > (closing ? 2.0 * close_dist : close_dist)) {
            target = state.object;
            grip_target = 1.0;
        } else {
            // pre-shape while still approaching; squeeze to grip_hold
            target = state.object;
            grip_target = grip_hold;
        }
    } else {
        grip_target = grip_hold;
        double open_rate = grip_rate;
        const Eigen::Vector2d carry_offset = state.agent - state.object;
        const double release_at =
            spec.kind == TaskKind::reach_grasp_place ? release_reach : release_peg;
        const double d_goal = (state.object - state.goal).norm();

        // seat the grasp before departing: station-keep over the pickup
        // spot until the force channel reports a firm hold
        if (state.hold_level < seat_gate && d_goal > release_at) {
            Eigen::Vector2d step =
                planar_cap(control_step(state.agent, state.object_rest + carry_offset), v_dock);
            double dgrip = clamp(grip_target - state.gripper, -grip_rate, grip_rate);
            return {step.x(), step.y(), dgrip};
        }

        // placement wait: inside release_at the grip relaxes slowly toward
        // grip_slip while the approach follows a shrinking hover ring keyed
        // to the relaxation, so the goal-crossing sits mid-wait; the grip
        // slips fully open only once relaxed and deep inside
        const double relax_frac =
            clamp((state.gripper - grip_hold) / (grip_slip - grip_hold), 0.0, 1.0);
        Eigen::Vector2d hover_target;
        bool hovering = false;
        if (d_goal < release_at) {
            grip_target = grip_slip;
            open_rate = relax_rate;
            const double ring = ring_start - ring_shrink * relax_frac;
            if (d_goal <= ring) {
                Eigen::Vector2d out = state.object - state.goal;
                double on = out.norm();
                if (on > 1e-9) out /= on;
                hover_target = state.goal + ring * out + carry_offset;
                hovering = true;
            }
            if (relax_frac >= 0.92 && d_goal < 0.026) {
                grip_target = 1.0;  // slip
                open_rate = grip_rate;
            }
        }

        // long tapered final approach: a slow synchronized corridor into
        // the goal so the arrival itself is a pin
        const double dock_cap = std::max(dock_gain * d_goal + 0.004, 0.006);
        speed_cap = std::min(speed_cap, dock_cap);
        if (spec.kind == TaskKind::reach_grasp_place) {
            target = hovering ? hover_target : state.goal + carry_offset;
        } else {
            const Eigen::Vector2d waypoint = state.align_waypoint();
            const bool past_waypoint = state.object.x() > waypoint.x() - eps_align;
            const bool on_axis =
                std::abs(state.object.y() - state.hole.y()) < 2.0 * eps_align && past_waypoint;
            const bool angle_ok = std::abs(state.peg_angle) < 2.0 * angle_tol;
            if (on_axis && angle_ok) {
                target = hovering ? hover_target : state.goal + carry_offset;
                speed_cap = std::min(speed_cap, v_insert);
            } else {
                target = waypoint + carry_offset;  // carry, and dwell until straight
            }
        }
        Eigen::Vector2d step = planar_cap(control_step(state.agent, target), speed_cap);
        double dgrip = clamp(grip_target - state.gripper, -grip_rate, open_rate);
        return {step.x(), step.y(), dgrip};
    }

    Eigen::Vector2d step = planar_cap(control_step(state.agent, target), speed_cap);
    double dgrip = clamp(grip_target - state.gripper, -grip_rate, grip_rate);
    return {step.x(), step.y(), dgrip};
}

EnvState env_step(const EnvState& state, const Eigen::Vector3d& action, const TaskSpec& spec,
                  Rng& rng) {
    const Box& b = spec.workspace_bounds;
    const double sd = spec.state_noise_sd;
    EnvState s = state;

    Eigen::Vector2d step = planar_cap({action[0], action[1]}, v_max);
    step.x() += truncated_noise(rng, sd);
    step.y() += truncated_noise(rng, sd);
    s.agent = clamp_box(state.agent + step, b);
    const Eigen::Vector2d agent_disp = s.agent - state.agent;

    const double grip_cmd = clamp(action[2], -grip_rate, grip_rate);
    double dgrip = grip_cmd + truncated_noise(rng, sd);
    s.gripper = clamp(state.gripper + dgrip, 0.0, 1.0);

    // grasp latch: contact while squeezing (or already fully closed); a
    // half-open gripper that is opening cannot re-latch mid-release
    if (!s.held && (s.agent - state.object).norm() < eps_contact && s.gripper < 0.5 &&
        (grip_cmd < -0.005 || s.gripper < 0.1)) {
        s.held = true;
        // the grip lands where the fingers happened to close: a random
        // handle pose the carried load will settle into
        double a = rng.uniform(0.0, 6.283185307179586);
        double len = rng.uniform(0.022, 0.045);
        s.handle = {len * std::cos(a), len * std::sin(a)};
        s.carry_pose = state.object - s.agent;
    } else if (s.held && s.gripper > 0.5) {
        s.held = false;
        s.object_rest = state.object;
    }

    // passive entities jitter at a fraction of the actuation noise
    const double psd = 0.6 * sd;
    if (s.held) {
        // the pose glides toward the handle; settling pauses while the
        // agent jerks so the object's per-step displacement stays bounded
        Eigen::Vector2d pose = state.held ? state.carry_pose : s.carry_pose;
        Eigen::Vector2d gap = s.handle - pose;
        double budget = std::min(0.010, std::max(0.0, v_max + 3.0 * sd -
                                                          agent_disp.cwiseAbs().maxCoeff()));
        double gn = gap.norm();
        if (gn > budget) gap *= budget / std::max(gn, 1e-12);
        s.carry_pose = pose + gap;
        s.object = clamp_box(s.agent + s.carry_pose, b);
    } else {
        s.object.x() = settle(state.object.x(), s.object_rest.x(), 0.5, rng, psd);
        s.object.y() = settle(state.object.y(), s.object_rest.y(), 0.5, rng, psd);
        s.object = clamp_box(s.object, b);
    }

    s.goal.x() = settle(state.goal.x(), s.goal_anchor.x(), 0.5, rng, psd);
    s.goal.y() = settle(state.goal.y(), s.goal_anchor.y(), 0.5, rng, psd);
    s.goal = clamp_box(s.goal, b);

    if (spec.kind == TaskKind::peg_align_insert) {
        s.hole.x() = settle(state.hole.x(), s.hole_anchor.x(), 0.5, rng, psd);
        s.hole.y() = settle(state.hole.y(), s.hole_anchor.y(), 0.5, rng, psd);
        s.hole = clamp_box(s.hole, b);
        s.goal = s.insertion_goal();
        double angle_target = s.held ? 0.0 : s.angle_anchor;
        double pull = clamp(0.05 * (angle_target - state.peg_angle), -v_max, v_max);
        s.peg_angle = state.peg_angle + pull + truncated_noise(rng, sd);
    }

    // grip-force channel: rises with gripper closure once in contact, so
    // its ramp straddles the grasp moment instead of trailing the latch
    const bool in_contact =
        s.held || ((s.agent - s.object).norm() < 1.5 * eps_contact && s.gripper < 0.9);
    double hold_target = in_contact ? 1.0 - s.gripper : 0.0;
    double dhold = clamp(hold_target - state.hold_level, -hold_rate, hold_rate);
    s.hold_level = state.hold_level + dhold + truncated_noise(rng, sd);

    return s;
}

void EventTracker::update(const EnvState& state, const TaskSpec& spec, int t) {
    if (!grasp_t && state.held) grasp_t = t;
    if (spec.kind == TaskKind::reach_grasp_place) {
        if (grasp_t && !place_t && state.held &&
            (state.object - state.goal).norm() < eps_goal)
            place_t = t;
    } else {
        const Eigen::Vector2d waypoint = state.align_waypoint();
        if (grasp_t && !align_t && state.held &&
            (state.object - waypoint).norm() < eps_align &&
            std::abs(state.peg_angle) < angle_tol)
            align_t = t;
        if (align_t && !insert_t && t > *align_t &&
            (state.object - state.goal).norm() < eps_goal &&
            std::abs(state.object.y() - state.hole.y()) < eps_align)
            insert_t = t;
    }
}

bool EventTracker::done(const TaskSpec& spec) const {
    return spec.kind == TaskKind::reach_grasp_place ? place_t.has_value() : insert_t.has_value();
}

std::vector<EventMark> EventTracker::marks(const TaskSpec& spec) const {
    std::vector<EventMark> out;
    if (grasp_t) out.push_back({"grasp", *grasp_t});
    if (spec.kind == TaskKind::reach_grasp_place) {
        if (place_t) out.push_back({"place", *place_t});
    } else {
        if (align_t) out.push_back({"align", *align_t});
        if (insert_t) out.push_back({"insert", *insert_t});
    }
    return out;
}

bool EventTracker::flag(const std::string& label) const {
    if (label == "grasp") return grasp_t.has_value();
    if (label == "place") return place_t.has_value();
    if (label == "align") return align_t.has_value();
    if (label == "insert") return insert_t.has_value();
    return false;
}

namespace {

struct RolloutResult {
    Trajectory traj;
    EventTracker tracker;
    bool success = false;
};

RolloutResult run_expert(const TaskSpec& spec, Rng& rng) {
    EnvState state = sample_initial_state(spec, rng);
    std::vector<Vec> rows{state.to_observation(spec)};
    std::vector<Eigen::Vector3d> acts;
    EventTracker tracker;
    tracker.update(state, spec, 0);

    int settle_count = 0;
    double gait = 0.0;  // AR(1) pace wobble; in-transit position is a poor clock
    for (int t = 1; t <= spec.horizon; ++t) {
        Eigen::Vector3d a = scripted_expert_step(state, spec);
        gait = 0.9 * gait + truncated_noise(rng, 0.11);
        const double pace = clamp(1.0 + gait, 0.4, 1.6);
        a[0] *= pace;
        a[1] *= pace;
        // after verifying the placement the expert ambles off sloppily; the
        // wander decorrelates the tail so it cannot outshine the key states
        const bool far_retreat =
            tracker.done(spec) && (state.agent - state.object).norm() > 0.04;
        const double an = spec.action_noise_sd * (far_retreat ? relax_noise : 1.0);
        a[0] += truncated_noise(rng, an);
        a[1] += truncated_noise(rng, an);
        a[2] += truncated_noise(rng, an);
        Eigen::Vector2d planar = planar_cap({a[0], a[1]}, v_max);
        a[0] = planar.x();
        a[1] = planar.y();
        a[2] = clamp(a[2], -grip_rate, grip_rate);

        state = env_step(state, a, spec, rng);
        acts.push_back(a);
        rows.push_back(state.to_observation(spec));
        tracker.update(state, spec, t);
        if (tracker.done(spec) && ++settle_count > settle_steps) break;
    }

    RolloutResult r;
    r.tracker = tracker;
    r.success = tracker.done(spec) &&
                (state.object - state.goal).norm() < eps_goal;

    const int len = static_cast<int>(rows.size());
    r.traj.states.resize(len, spec.state_dim());
    for (int t = 0; t < len; ++t) r.traj.states.row(t) = rows[static_cast<std::size_t>(t)];
    Mat actions = Mat::Zero(len, TaskSpec::kActionDim);
    for (int t = 0; t + 1 < len; ++t)
        actions.row(t) = acts[static_cast<std::size_t>(t)];  // last row: terminal no-op
    r.traj.actions = actions;
    r.traj.event_marks = tracker.marks(spec);
    return r;
}

}  // namespace

Dataset generate(const TaskSpec& spec, int n) {
    spec.validate();
    if (n < 1) throw Error("generate: n must be >= 1");

    Dataset ds;
    ds.trajectories.resize(static_cast<std::size_t>(n));
    std::vector<std::string> failures(static_cast<std::size_t>(n));

    parallel_for(static_cast<std::size_t>(n), [&](std::size_t i) {
        for (int attempt = 0; attempt < retry_cap; ++attempt) {
            Rng rng(hash_combine(hash_combine(spec.seed, i),
                                 static_cast<std::uint64_t>(attempt)));
            RolloutResult r = run_expert(spec, rng);
            if (r.success) {
                r.traj.id = "traj" + std::to_string(i);
                ds.trajectories[i] = std::move(r.traj);
                return;
            }
        }
        failures[i] = "trajectory " + std::to_string(i) + ": expert failed " +
                      std::to_string(retry_cap) + " attempts";
    });

    for (const auto& f : failures)
        if (!f.empty()) throw Error("generate: " + f + " (noise too high for the horizon?)");
    ds.validate();
    return ds;
}

}  // namespace maxmi
