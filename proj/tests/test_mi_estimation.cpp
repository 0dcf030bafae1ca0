#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "maxmi/mi_estimation.hpp"
#include "maxmi/rng.hpp"
#include "maxmi/trajectory.hpp"

using namespace maxmi;

namespace {

// closed-form oracle: bivariate Gaussian with correlation rho has
// I = -1/2 ln(1 - rho^2)
double gaussian_mi(double rho) { return -0.5 * std::log(1.0 - rho * rho); }

SamplePairs correlated_gaussians(int n, double rho, std::uint64_t seed) {
    Rng rng(seed);
    SamplePairs p;
    p.xs.resize(n, 1);
    p.ys.resize(n, 1);
    for (int i = 0; i < n; ++i) {
        double a = rng.gaussian();
        double b = rng.gaussian();
        p.xs(i, 0) = a;
        p.ys(i, 0) = rho * a + std::sqrt(1.0 - rho * rho) * b;
    }
    return p;
}

SamplePairs independent_uniforms(int n, std::uint64_t seed) {
    Rng rng(seed);
    SamplePairs p;
    p.xs.resize(n, 1);
    p.ys.resize(n, 1);
    for (int i = 0; i < n; ++i) {
        p.xs(i, 0) = rng.uniform();
        p.ys(i, 0) = rng.uniform();
    }
    return p;
}

}  // namespace

TEST_CASE("ksg: independent uniforms give near-zero MI") {
    MIEstimatorConfig cfg;
    double mi = estimate_mi(independent_uniforms(2000, 42), cfg);
    CHECK(std::abs(mi) < 0.05);
}

TEST_CASE("ksg: correlated Gaussians match the closed form") {
    MIEstimatorConfig cfg;
    SUBCASE("rho = 0.9") {
        double mi = estimate_mi(correlated_gaussians(2000, 0.9, 7), cfg);
        CHECK(std::abs(mi - gaussian_mi(0.9)) < 0.10);
    }
    SUBCASE("rho = 0.5") {
        double mi = estimate_mi(correlated_gaussians(2000, 0.5, 8), cfg);
        CHECK(std::abs(mi - gaussian_mi(0.5)) < 0.10);
    }
}

TEST_CASE("gaussian_copula matches the closed form tightly") {
    MIEstimatorConfig cfg;
    cfg.method = MIEstimatorConfig::Method::gaussian_copula;
    for (double rho : {0.0, 0.5, 0.9}) {
        double mi = estimate_mi(correlated_gaussians(2000, rho, 11), cfg);
        CHECK(std::abs(mi - gaussian_mi(rho)) < 0.05);
    }
}

TEST_CASE("binned estimator tracks the closed form loosely") {
    MIEstimatorConfig cfg;
    cfg.method = MIEstimatorConfig::Method::binned;
    double mi = estimate_mi(correlated_gaussians(4000, 0.9, 3), cfg);
    // plug-in estimators carry grid bias; just require the right ballpark
    CHECK(mi > 0.5);
    CHECK(mi < 1.3);
}

TEST_CASE("symmetry: estimate_mi(X,Y) == estimate_mi(Y,X)") {
    SamplePairs p = correlated_gaussians(500, 0.7, 21);
    SamplePairs swapped;
    swapped.xs = p.ys;
    swapped.ys = p.xs;
    for (auto m : {MIEstimatorConfig::Method::ksg, MIEstimatorConfig::Method::gaussian_copula,
                   MIEstimatorConfig::Method::binned}) {
        MIEstimatorConfig cfg;
        cfg.method = m;
        CHECK(estimate_mi(p, cfg) == doctest::Approx(estimate_mi(swapped, cfg)).epsilon(1e-9));
    }
}

TEST_CASE("joint permutation of rows leaves the estimate unchanged") {
    SamplePairs p = correlated_gaussians(400, 0.6, 33);
    SamplePairs shuffled = p;
    Rng rng(5);
    for (int i = 399; i > 0; --i) {
        int j = static_cast<int>(rng.uniform_index(static_cast<std::uint64_t>(i + 1)));
        shuffled.xs.row(i).swap(shuffled.xs.row(j));
        shuffled.ys.row(i).swap(shuffled.ys.row(j));
    }
    MIEstimatorConfig cfg;
    // jitter is keyed by row index; tie-free continuous data still matches
    // to high precision because only the counts enter the estimate
    CHECK(estimate_mi(p, cfg) == doctest::Approx(estimate_mi(shuffled, cfg)).epsilon(1e-9));
}

TEST_CASE("gaussian_copula is exactly invariant under monotone transforms") {
    SamplePairs p = correlated_gaussians(300, 0.8, 17);
    SamplePairs warped = p;
    for (int i = 0; i < 300; ++i) {
        warped.xs(i, 0) = std::exp(warped.xs(i, 0));
        warped.ys(i, 0) = std::atan(warped.ys(i, 0)) * 3.0 + 1.0;
    }
    MIEstimatorConfig cfg;
    cfg.method = MIEstimatorConfig::Method::gaussian_copula;
    CHECK(estimate_mi(p, cfg) == estimate_mi(warped, cfg));

    cfg.method = MIEstimatorConfig::Method::ksg;
    CHECK(std::abs(estimate_mi(p, cfg) - estimate_mi(warped, cfg)) < 0.08);
}

TEST_CASE("ksg rejects degenerate inputs") {
    MIEstimatorConfig cfg;
    SUBCASE("constant column") {
        SamplePairs p = correlated_gaussians(100, 0.5, 3);
        p.ys.col(0).setConstant(1.25);
        CHECK_THROWS_AS(estimate_mi(p, cfg), EstimatorError);
    }
    SUBCASE("too few samples") {
        SamplePairs p = correlated_gaussians(4, 0.5, 3);
        CHECK_THROWS_AS(estimate_mi(p, cfg), EstimatorError);
    }
    SUBCASE("k out of range") {
        SamplePairs p = correlated_gaussians(10, 0.5, 3);
        cfg.k_neighbors = 10;
        CHECK_THROWS_AS(estimate_mi(p, cfg), EstimatorError);
    }
    SUBCASE("non-finite entries") {
        SamplePairs p = correlated_gaussians(100, 0.5, 3);
        p.xs(5, 0) = std::numeric_limits<double>::quiet_NaN();
        CHECK_THROWS_AS(estimate_mi(p, cfg), EstimatorError);
    }
}

TEST_CASE("incremental ksg matches the batch estimator exactly") {
    SamplePairs p = correlated_gaussians(64, 0.6, 9);
    p.xs.conservativeResize(64, 2);
    p.ys.conservativeResize(64, 2);
    Rng rng(77);
    for (int i = 0; i < 64; ++i) {
        p.xs(i, 1) = rng.gaussian();
        p.ys(i, 1) = 0.4 * p.xs(i, 1) + rng.gaussian();
    }
    MIEstimatorConfig cfg;

    Mat xj = p.xs, yj = p.ys;
    apply_ksg_jitter(xj, 0, cfg.jitter_sd);
    apply_ksg_jitter(yj, 1, cfg.jitter_sd);
    KsgIncremental inc(xj, yj, cfg.k_neighbors);
    CHECK(inc.estimate() == estimate_mi(p, cfg));

    // replacing a row via trial/commit must agree with a fresh batch run
    SamplePairs q = p;
    q.xs(10, 0) = -0.33;
    q.xs(10, 1) = 1.7;
    q.ys(10, 0) = 0.6;
    q.ys(10, 1) = -0.2;
    Mat xq = q.xs, yq = q.ys;
    apply_ksg_jitter(xq, 0, cfg.jitter_sd);
    apply_ksg_jitter(yq, 1, cfg.jitter_sd);

    inc.begin_row_trials(10);
    double trial = inc.trial(xq.row(10).data(), yq.row(10).data());
    CHECK(trial == estimate_mi(q, cfg));
    inc.commit_row(xq.row(10).data(), yq.row(10).data());
    CHECK(inc.estimate() == estimate_mi(q, cfg));

    // and restoring the original row restores the original estimate
    double back = inc.trial(xj.row(10).data(), yj.row(10).data());
    CHECK(back == estimate_mi(p, cfg));
}

TEST_CASE("mi_profile: i.i.d. noise states give a near-zero profile") {
    Rng rng(123);
    NormalizedDataset nd;
    nd.T = 32;
    const int n = 800;
    for (int i = 0; i < n; ++i) {
        Mat s(32, 2);
        for (int t = 0; t < 32; ++t)
            for (int d = 0; d < 2; ++d) s(t, d) = rng.gaussian();
        nd.states.push_back(std::move(s));
        nd.ids.push_back("t" + std::to_string(i));
        nd.raw_lengths.push_back(32);
    }
    MIEstimatorConfig cfg;
    MIProfile prof = mi_profile(nd, 8, cfg);
    REQUIRE(prof.values.size() == 32 - 8);
    for (std::size_t i = 0; i < prof.values.size(); ++i) {
        CHECK(std::abs(prof.values[i]) < 0.1);
        CHECK(prof.t_at(i) == 8 + static_cast<int>(i));
    }
}

TEST_CASE("mi_profile csv round-trip") {
    MIProfile p;
    p.delta_t = 5;
    p.values = {0.25, 0.5, 1.0 / 3.0};
    std::string csv = p.to_csv("deadbeef");
    CHECK(csv.rfind("# config_hash=deadbeef\nt,mi_nats\n", 0) == 0);
    MIProfile q = profile_from_csv(csv);
    CHECK(q.delta_t == 5);
    REQUIRE(q.values.size() == 3);
    for (int i = 0; i < 3; ++i) CHECK(q.values[i] == p.values[i]);
}
