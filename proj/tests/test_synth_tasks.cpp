#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <set>

#include "maxmi/rng.hpp"
#include "maxmi/synth_tasks.hpp"

using namespace maxmi;
using namespace maxmi::task_constants;

namespace {

TaskSpec reach_spec(double noise = 0.01, std::uint64_t seed = 0) {
    TaskSpec s;
    s.kind = TaskKind::reach_grasp_place;
    s.horizon = 300;
    s.state_noise_sd = noise;
    s.action_noise_sd = noise > 0 ? 0.005 : 0.0;
    s.seed = seed;
    return s;
}

TaskSpec peg_spec(double noise = 0.01, std::uint64_t seed = 0) {
    TaskSpec s = reach_spec(noise, seed);
    s.kind = TaskKind::peg_align_insert;
    return s;
}

}  // namespace

TEST_CASE("zero-noise grasp mark matches the contact + gripper definition") {
    TaskSpec spec = reach_spec(0.0, 0);
    Dataset ds = generate(spec, 1);
    const Trajectory& tr = ds.trajectories[0];
    auto grasp = tr.mark_index("grasp");
    REQUIRE(grasp.has_value());

    // replay: the mark must be the first index where the agent touches the
    // object with the gripper past the 0.5 threshold
    int first = -1;
    for (int t = 0; t < tr.length(); ++t) {
        double ax = tr.states(t, 0), ay = tr.states(t, 1);
        double ox = tr.states(t, 2), oy = tr.states(t, 3);
        double grip = tr.states(t, 6);
        double dist = std::hypot(ax - ox, ay - oy);
        if (dist < eps_contact && grip < 0.5) {
            first = t;
            break;
        }
    }
    CHECK(*grasp == first);
}

TEST_CASE("generation is a pure function of (spec, n)") {
    TaskSpec spec = reach_spec(0.01, 7);
    Dataset a = generate(spec, 5);
    Dataset b = generate(spec, 5);
    REQUIRE(a.size() == b.size());
    for (int i = 0; i < a.size(); ++i) {
        CHECK((a.trajectories[i].states - b.trajectories[i].states).cwiseAbs().maxCoeff() ==
              0.0);
        CHECK((*a.trajectories[i].actions - *b.trajectories[i].actions).cwiseAbs().maxCoeff() ==
              0.0);
    }
}

TEST_CASE("all generated trajectories end with the object at the goal") {
    TaskSpec spec = reach_spec(0.01, 3);
    Dataset ds = generate(spec, 100);
    for (const auto& tr : ds.trajectories) {
        int last = tr.length() - 1;
        double dx = tr.states(last, 2) - tr.states(last, 4);
        double dy = tr.states(last, 3) - tr.states(last, 5);
        CHECK(std::hypot(dx, dy) < eps_goal);
        CHECK(tr.mark_index("grasp").has_value());
        CHECK(tr.mark_index("place").has_value());
    }
}

TEST_CASE("peg task: marks exist and are ordered grasp < align < insert") {
    TaskSpec spec = peg_spec(0.01, 5);
    Dataset ds = generate(spec, 40);
    for (const auto& tr : ds.trajectories) {
        auto g = tr.mark_index("grasp");
        auto a = tr.mark_index("align");
        auto i = tr.mark_index("insert");
        REQUIRE(g.has_value());
        REQUIRE(a.has_value());
        REQUIRE(i.has_value());
        CHECK(*g < *a);
        CHECK(*a < *i);
    }
}

TEST_CASE("expert: carry phase points the action toward the goal") {
    TaskSpec spec = reach_spec();
    Rng rng(1);
    EnvState s = sample_initial_state(spec, rng);
    s.held = true;
    s.hold_level = 0.6;
    s.gripper = 0.42;
    s.object = s.agent;  // grasped at zero offset
    s.handle = {0, 0};
    s.carry_pose = {0, 0};
    Eigen::Vector3d a = scripted_expert_step(s, spec);
    Eigen::Vector2d dir(a[0], a[1]);
    Eigen::Vector2d to_goal = s.goal - s.object;
    CHECK(dir.dot(to_goal.normalized()) > 0.9 * dir.norm());
}

TEST_CASE("expert: holding the object at the goal gives near-zero action, gripper opens") {
    TaskSpec spec = reach_spec();
    Rng rng(2);
    EnvState s = sample_initial_state(spec, rng);
    s.held = true;
    s.hold_level = 0.6;
    s.gripper = 0.49;  // relaxation complete
    s.object = s.goal;
    s.agent = s.goal + Eigen::Vector2d(0.01, 0.0);
    s.handle = s.agent - s.object;
    s.carry_pose = s.handle;
    Eigen::Vector3d a = scripted_expert_step(s, spec);
    CHECK(std::hypot(a[0], a[1]) < 0.012);
    CHECK(a[2] > 0.0);
}

TEST_CASE("expert action norms respect the caps on random states") {
    TaskSpec spec = reach_spec();
    Rng rng(99);
    for (int i = 0; i < 10000; ++i) {
        EnvState s = sample_initial_state(spec, rng);
        s.agent = {rng.uniform(), rng.uniform()};
        s.object = {rng.uniform(), rng.uniform()};
        s.gripper = rng.uniform();
        s.hold_level = rng.uniform(-0.1, 1.1);
        s.held = s.hold_level > 0.5;
        if (s.held) {
            s.handle = s.agent - s.object;
            s.carry_pose = s.handle;
        }
        Eigen::Vector3d a = scripted_expert_step(s, spec);
        CHECK(std::hypot(a[0], a[1]) <= v_max + 1e-12);
        CHECK(std::abs(a[2]) <= grip_rate + 1e-12);
    }
}

TEST_CASE("env_step: zero action and zero noise leave the state unchanged") {
    TaskSpec spec = reach_spec(0.0);
    spec.action_noise_sd = 0.0;
    Rng rng(4);
    EnvState s = sample_initial_state(spec, rng);
    s.gripper = 1.0;     // rest values: zero action holds the fixed point
    s.hold_level = 0.0;
    EnvState next = env_step(s, {0, 0, 0}, spec, rng);
    CHECK((next.agent - s.agent).norm() == 0.0);
    CHECK((next.object - s.object).norm() == 0.0);
    CHECK((next.goal - s.goal).norm() == 0.0);
    CHECK(next.gripper == s.gripper);
    CHECK(next.hold_level == s.hold_level);
}

TEST_CASE("env_step: a settled held object tracks agent displacement exactly at zero noise") {
    TaskSpec spec = reach_spec(0.0);
    Rng rng(4);
    EnvState s = sample_initial_state(spec, rng);
    s.held = true;
    s.gripper = 0.42;
    s.hold_level = 0.8;
    s.object = s.agent + Eigen::Vector2d(0.02, -0.01);
    s.handle = {0.02, -0.01};
    s.carry_pose = s.handle;  // settled grip
    EnvState next = env_step(s, {0.03, 0.01, 0}, spec, rng);
    Eigen::Vector2d agent_disp = next.agent - s.agent;
    Eigen::Vector2d object_disp = next.object - s.object;
    CHECK((agent_disp - object_disp).norm() < 1e-15);
}

TEST_CASE("env_step: 1000 random steps stay inside the workspace bounds") {
    TaskSpec spec = reach_spec(0.02, 8);
    Rng rng(8);
    EnvState s = sample_initial_state(spec, rng);
    for (int t = 0; t < 1000; ++t) {
        Eigen::Vector3d a{rng.uniform(-0.1, 0.1), rng.uniform(-0.1, 0.1),
                          rng.uniform(-0.1, 0.1)};
        s = env_step(s, a, spec, rng);
        const Box& b = spec.workspace_bounds;
        CHECK(s.agent.x() >= b.xmin);
        CHECK(s.agent.x() <= b.xmax);
        CHECK(s.agent.y() >= b.ymin);
        CHECK(s.agent.y() <= b.ymax);
        CHECK(s.object.x() >= b.xmin);
        CHECK(s.object.x() <= b.xmax);
        CHECK(s.gripper >= 0.0);
        CHECK(s.gripper <= 1.0);
    }
}

TEST_CASE("state continuity: per-dimension steps bounded by v_max + 3 sd") {
    for (auto kind : {TaskKind::reach_grasp_place, TaskKind::peg_align_insert}) {
        TaskSpec spec = kind == TaskKind::reach_grasp_place ? reach_spec(0.01, 11)
                                                            : peg_spec(0.01, 11);
        Dataset ds = generate(spec, 30);
        const double bound = v_max + 3.0 * spec.state_noise_sd + 1e-9;
        for (const auto& tr : ds.trajectories)
            for (int t = 0; t + 1 < tr.length(); ++t) {
                double step = (tr.states.row(t + 1) - tr.states.row(t)).cwiseAbs().maxCoeff();
                CHECK(step <= bound);
            }
    }
}

TEST_CASE("event marks are strictly increasing and unique per label") {
    TaskSpec spec = peg_spec(0.01, 13);
    Dataset ds = generate(spec, 30);
    for (const auto& tr : ds.trajectories) {
        std::set<std::string> labels;
        int prev = -1;
        for (const auto& m : tr.event_marks) {
            CHECK(m.index > prev);
            prev = m.index;
            CHECK(labels.insert(m.label).second);
        }
    }
}

TEST_CASE("zero-noise event times are deterministic functions of the initial state") {
    TaskSpec spec = reach_spec(0.0, 21);
    spec.action_noise_sd = 0.0;
    Dataset a = generate(spec, 3);
    Dataset b = generate(spec, 3);
    for (int i = 0; i < 3; ++i) {
        REQUIRE(a.trajectories[i].event_marks.size() ==
                b.trajectories[i].event_marks.size());
        for (std::size_t m = 0; m < a.trajectories[i].event_marks.size(); ++m)
            CHECK(a.trajectories[i].event_marks[m].index ==
                  b.trajectories[i].event_marks[m].index);
    }
}

TEST_CASE("observation round-trip through from_observation") {
    TaskSpec spec = peg_spec(0.01, 2);
    Rng rng(3);
    EnvState s = sample_initial_state(spec, rng);
    Vec obs = s.to_observation(spec);
    REQUIRE(obs.size() == 9);
    EnvState back = EnvState::from_observation(spec, obs);
    CHECK((back.agent - s.agent).norm() == 0.0);
    CHECK((back.object - s.object).norm() == 0.0);
    CHECK((back.hole - s.hole).norm() == 0.0);
    CHECK(back.gripper == s.gripper);
    CHECK(back.peg_angle == s.peg_angle);
    CHECK(back.held == s.held);
}

TEST_CASE("trajectory lengths land in the intended range") {
    TaskSpec spec = reach_spec(0.01, 17);
    Dataset ds = generate(spec, 50);
    double mean = 0;
    for (const auto& tr : ds.trajectories) mean += tr.length();
    mean /= ds.size();
    CHECK(mean > 60.0);
    CHECK(mean < 220.0);
}

TEST_CASE("invalid specs are rejected") {
    TaskSpec spec = reach_spec();
    spec.horizon = 10;
    CHECK_THROWS_AS(spec.validate(), ConfigError);
    spec = reach_spec();
    spec.state_noise_sd = -1.0;
    CHECK_THROWS_AS(spec.validate(), ConfigError);
    spec = reach_spec();
    spec.workspace_bounds = {0, 0, 0, 1};
    CHECK_THROWS_AS(spec.validate(), ConfigError);
}
