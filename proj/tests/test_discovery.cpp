#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "maxmi/ablate.hpp"
#include "maxmi/discovery.hpp"
#include "maxmi/rng.hpp"
#include "maxmi/synth_tasks.hpp"

using namespace maxmi;

namespace {

// synthetic normalized dataset with two injected correlated events:
// near t=40 and t=90 the states become functions of per-trajectory
// latents, ramping in and cutting off after the event
NormalizedDataset two_event_dataset(int n, std::uint64_t seed) {
    Rng rng(seed);
    NormalizedDataset nd;
    nd.T = 128;
    for (int i = 0; i < n; ++i) {
        double z1 = rng.gaussian();
        double z2 = rng.gaussian();
        double z3 = rng.gaussian();
        Mat s(128, 3);
        for (int t = 0; t < 128; ++t) {
            double a1 = t <= 42 ? std::max(0.0, 1.0 - std::abs(t - 40) / 15.0) : 0.0;
            double a2 = t <= 92 ? std::max(0.0, 1.0 - std::abs(t - 90) / 15.0) : 0.0;
            s(t, 0) = a1 * z1 + 0.3 * rng.gaussian();
            s(t, 1) = a2 * z2 + 0.3 * rng.gaussian();
            s(t, 2) = (a1 + a2) * z3 + 0.3 * rng.gaussian();
        }
        nd.states.push_back(std::move(s));
        nd.ids.push_back("t" + std::to_string(i));
        nd.raw_lengths.push_back(128);
    }
    return nd;
}

NormalizedDataset noise_dataset(int n, int T, std::uint64_t seed) {
    Rng rng(seed);
    NormalizedDataset nd;
    nd.T = T;
    for (int i = 0; i < n; ++i) {
        Mat s(T, 2);
        for (int t = 0; t < T; ++t)
            for (int d = 0; d < 2; ++d) s(t, d) = rng.gaussian();
        nd.states.push_back(std::move(s));
        nd.ids.push_back("t" + std::to_string(i));
        nd.raw_lengths.push_back(T);
    }
    return nd;
}

}  // namespace

TEST_CASE("soft_argmax basics") {
    Vec p = Vec::Zero(10);
    p[7] = 1.0;
    CHECK(soft_argmax(p) == doctest::Approx(7.0));

    p.setConstant(0.1);
    CHECK(soft_argmax(p) == doctest::Approx(4.5));

    p.setZero();
    p[2] = 0.5;
    p[4] = 0.5;
    CHECK(soft_argmax(p) == doctest::Approx(3.0));
}

TEST_CASE("soft_argmax rejects bad distributions") {
    Vec p = Vec::Zero(4);
    p[0] = 0.7;
    p[1] = 0.7;
    CHECK_THROWS_AS(soft_argmax(p), Error);
    p[0] = -0.2;
    p[1] = 1.2;
    CHECK_THROWS_AS(soft_argmax(p), Error);
}

TEST_CASE("soft_argmax is linear in the distribution") {
    Rng rng(5);
    Vec p = Vec::Zero(16), q = Vec::Zero(16);
    for (int i = 0; i < 16; ++i) {
        p[i] = rng.uniform();
        q[i] = rng.uniform();
    }
    p /= p.sum();
    q /= q.sum();
    for (double alpha : {0.0, 0.25, 0.5, 0.9, 1.0}) {
        Vec mix = alpha * p + (1.0 - alpha) * q;
        CHECK(soft_argmax(mix) ==
              doctest::Approx(alpha * soft_argmax(p) + (1.0 - alpha) * soft_argmax(q))
                  .epsilon(1e-12));
    }
}

TEST_CASE("diversity_penalty closed-form values") {
    IndexAssignment a;
    a.indices.resize(1, 2);
    a.indices << 5.0, 5.0;
    CHECK(diversity_penalty(a) == doctest::Approx(std::log(2.0)));

    a.indices << 5.0, 10.0;
    CHECK(diversity_penalty(a) == doctest::Approx(std::log1p(std::exp(-5.0))));

    IndexAssignment single;
    single.indices.resize(3, 1);
    single.indices.setConstant(4.0);
    CHECK(diversity_penalty(single) == 0.0);
}

TEST_CASE("diversity_penalty: translation invariant, decreasing in gaps") {
    IndexAssignment a;
    a.indices.resize(2, 3);
    a.indices << 10, 20, 35, 12, 30, 31;
    double base = diversity_penalty(a);

    IndexAssignment shifted = a;
    shifted.indices.array() += 7.0;
    CHECK(diversity_penalty(shifted) == doctest::Approx(base).epsilon(1e-12));

    IndexAssignment wider = a;
    wider.indices(0, 2) += 5.0;  // one pairwise gap grows
    CHECK(diversity_penalty(wider) < base);
}

TEST_CASE("total_loss identities") {
    NormalizedDataset nd = noise_dataset(32, 32, 9);
    IndexAssignment a = uniform_spread_init(32, 3, 32, 4);
    DiscoveryConfig cfg;
    cfg.K = 3;
    cfg.delta_t = 4;

    cfg.lambda = 1e-12;  // effectively zero while staying "full"
    double l0 = total_loss(nd, a, cfg);
    double obj = maxmi_objective(nd, a, cfg);
    CHECK(l0 == doctest::Approx(obj).epsilon(1e-9));

    cfg.lambda = 0.7;
    double l1 = total_loss(nd, a, cfg);
    cfg.lambda = 1.9;
    double l2 = total_loss(nd, a, cfg);
    double pen = diversity_penalty(a);
    CHECK(l2 - l1 == doctest::Approx((1.9 - 0.7) * pen).epsilon(1e-9));
    CHECK(l2 >= l1);
}

TEST_CASE("maxmi_objective equals the negated sum of per-concept estimates") {
    NormalizedDataset nd = noise_dataset(24, 40, 3);
    IndexAssignment a = uniform_spread_init(24, 2, 40, 5);
    DiscoveryConfig cfg;
    cfg.K = 2;
    cfg.delta_t = 5;

    double direct = 0.0;
    for (int k = 0; k < 2; ++k) {
        SamplePairs pairs;
        pairs.xs.resize(24, 2);
        pairs.ys.resize(24, 2);
        for (int i = 0; i < 24; ++i) {
            int t = static_cast<int>(std::lround(a.indices(i, k)));
            pairs.xs.row(i) = nd.states[i].row(t);
            pairs.ys.row(i) = nd.states[i].row(t - 5);
        }
        direct -= estimate_mi(pairs, cfg.estimator);
    }
    CHECK(maxmi_objective(nd, a, cfg) == direct);
}

TEST_CASE("maxmi_objective on pure noise is near zero") {
    NormalizedDataset nd = noise_dataset(600, 24, 4);
    IndexAssignment a;
    a.indices.resize(600, 1);
    a.indices.setConstant(15.0);
    DiscoveryConfig cfg;
    cfg.K = 1;
    cfg.delta_t = 8;
    CHECK(std::abs(maxmi_objective(nd, a, cfg)) < 0.1);
}

TEST_CASE("nms: greedy suppression with tie-break") {
    std::vector<Peak> in = {{10, 0.9}, {12, 0.8}, {50, 0.7}};
    auto out = nms(in, 5);
    REQUIRE(out.size() == 2);
    CHECK(out[0].index == 10);
    CHECK(out[1].index == 50);

    std::vector<Peak> spread = {{5, 0.3}, {20, 0.9}, {40, 0.5}};
    auto all = nms(spread, 5);
    REQUIRE(all.size() == 3);
    CHECK(all[0].index == 20);  // ordered by score
    CHECK(all[1].index == 40);
    CHECK(all[2].index == 5);

    std::vector<Peak> tie = {{10, 0.5}, {12, 0.5}};
    auto kept = nms(tie, 5);
    REQUIRE(kept.size() == 1);
    CHECK(kept[0].index == 10);

    CHECK(nms({}, 5).empty());
}

TEST_CASE("nms output gaps all exceed the window") {
    Rng rng(31);
    std::vector<Peak> in;
    for (int i = 0; i < 60; ++i) in.push_back({rng.uniform(0, 100), rng.uniform()});
    auto out = nms(in, 7);
    for (std::size_t a = 0; a < out.size(); ++a)
        for (std::size_t b = a + 1; b < out.size(); ++b)
            CHECK(std::abs(out[a].index - out[b].index) > 7.0);
    CHECK(out.size() <= in.size());
}

TEST_CASE("profile peaks on an i.i.d. noise dataset are low-confidence") {
    NormalizedDataset nd = noise_dataset(400, 32, 6);
    DiscoveryConfig cfg;
    cfg.K = 4;
    cfg.delta_t = 8;
    cfg.nms_window = 4;
    ConceptSet cs = discover_profile_peaks(nd, cfg);
    if (cs.num_concepts() == 0) {
        CHECK(cs.status == "empty");
    } else {
        CHECK(cs.status == "low_confidence");
        for (double s : cs.scores) CHECK(s < 0.1);
    }
}

TEST_CASE("profile peaks recover two injected correlated events") {
    NormalizedDataset nd = two_event_dataset(400, 12);
    DiscoveryConfig cfg;
    cfg.K = 6;
    cfg.delta_t = 8;
    cfg.nms_window = 8;
    ConceptSet cs = discover_profile_peaks(nd, cfg);

    // strong peaks (above noise level) must sit within +-3 of the events
    std::vector<double> strong;
    for (int c = 0; c < cs.num_concepts(); ++c)
        if (cs.scores[c] > 0.25) strong.push_back(cs.assignment.indices(0, c));
    REQUIRE(strong.size() == 2);
    std::sort(strong.begin(), strong.end());
    CHECK(std::abs(strong[0] - 40.0) <= 3.0);
    CHECK(std::abs(strong[1] - 90.0) <= 3.0);
}

TEST_CASE("coordinate ascent: a local optimum is a fixed point") {
    NormalizedDataset nd = two_event_dataset(64, 21);
    DiscoveryConfig cfg;
    cfg.K = 1;
    cfg.delta_t = 8;
    cfg.seed = 1;
    cfg.max_sweeps = 6;

    ConceptSet first = discover_coordinate_ascent(nd, cfg);
    REQUIRE(first.num_concepts() == 1);

    IndexAssignment again;
    again.indices = first.assignment.indices;
    ConceptSet second = discover_coordinate_ascent(nd, cfg, again);
    CHECK((second.assignment.indices - first.assignment.indices).cwiseAbs().maxCoeff() ==
          0.0);
    REQUIRE(second.sweep_losses.size() >= 2);
    CHECK(second.sweep_losses[0] ==
          doctest::Approx(second.sweep_losses.back()).epsilon(1e-9));
}

TEST_CASE("coordinate ascent: loss trace is non-increasing") {
    NormalizedDataset nd = two_event_dataset(80, 33);
    DiscoveryConfig cfg;
    cfg.K = 3;
    cfg.delta_t = 8;
    cfg.seed = 2;
    cfg.max_sweeps = 8;
    ConceptSet cs = discover_coordinate_ascent(nd, cfg);
    REQUIRE(cs.sweep_losses.size() >= 2);
    for (std::size_t i = 1; i < cs.sweep_losses.size(); ++i)
        CHECK(cs.sweep_losses[i] <= cs.sweep_losses[i - 1] + 1e-9);
    CHECK(cs.num_concepts() >= 1);
    // columns sorted by mean index
    auto means = cs.mean_indices();
    for (std::size_t i = 1; i < means.size(); ++i) CHECK(means[i] >= means[i - 1]);
}

TEST_CASE("ablation arms: lambda=0 collapses, full model spreads") {
    TaskSpec spec;
    spec.kind = TaskKind::reach_grasp_place;
    spec.horizon = 300;
    spec.state_noise_sd = 0.01;
    spec.action_noise_sd = 0.005;
    spec.seed = 44;
    Dataset ds = generate(spec, 64);
    NormalizedDataset nd = normalize(ds, 128);

    DiscoveryConfig cfg;
    cfg.K = 4;
    cfg.delta_t = 8;
    cfg.nms_window = 8;
    cfg.seed = 3;
    cfg.max_sweeps = 10;

    AblationReport report = run_ablation(nd, ds, cfg);
    REQUIRE(report.arms.size() == 3);
    const AblationArm* collapsed = nullptr;
    const AblationArm* full = nullptr;
    const AblationArm* pd = nullptr;
    for (const auto& arm : report.arms) {
        if (arm.name == "maxmi_only") collapsed = &arm;
        if (arm.name == "full") full = &arm;
        if (arm.name == "pd_only") pd = &arm;
    }
    REQUIRE(collapsed);
    REQUIRE(full);
    REQUIRE(pd);
    CHECK(collapsed->spread < cfg.nms_window);
    CHECK(full->spread > collapsed->spread);
    // the diversity-only arm spreads but ignores the events
    CHECK(pd->spread > cfg.nms_window);

    std::string csv = report.to_csv("beef");
    CHECK(csv.find("maxmi_only") != std::string::npos);
    CHECK(csv.rfind("# config_hash=beef", 0) == 0);
}

TEST_CASE("concept set json round-trip") {
    NormalizedDataset nd = two_event_dataset(16, 50);
    DiscoveryConfig cfg;
    cfg.K = 2;
    cfg.delta_t = 8;
    ConceptSet cs = discover_profile_peaks(nd, cfg);
    cs.config_hash = "cafe";
    cs.dataset_hash = "f00d";
    std::string json = cs.to_json();
    ConceptSet back = ConceptSet::from_json(json);
    CHECK(back.config_hash == "cafe");
    CHECK(back.dataset_hash == "f00d");
    CHECK(back.engine == cs.engine);
    CHECK(back.num_concepts() == cs.num_concepts());
    if (cs.num_concepts() > 0) {
        CHECK((back.assignment.indices - cs.assignment.indices).cwiseAbs().maxCoeff() == 0.0);
        CHECK((back.raw_indices - cs.raw_indices).cwiseAbs().maxCoeff() == 0.0);
    }
    CHECK(back.to_json() == json);
}

TEST_CASE("discovery config validation") {
    DiscoveryConfig cfg;
    cfg.K = 0;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    cfg = {};
    cfg.lambda = 0.0;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    CHECK_NOTHROW(cfg.validate(true));  // ablation-only
    cfg = {};
    cfg.loss_terms = DiscoveryConfig::LossTerms::diversity_only;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    CHECK_NOTHROW(cfg.validate(true));
}
