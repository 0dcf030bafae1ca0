#include "maxmi/discovery.hpp"

#include <algorithm>
#include <cmath>
#include <memory>

#include <nlohmann/json.hpp>

#include "maxmi/rng.hpp"

namespace maxmi {

using json = nlohmann::ordered_json;

namespace {
constexpr double kLowConfidenceMi = 0.1;  // peaks below this are noise-level
}

void DiscoveryConfig::validate(bool ablation) const {
    if (K < 1) throw ConfigError("discovery: K must be >= 1");
    if (nms_window < 1) throw ConfigError("discovery: nms_window must be >= 1");
    if (delta_t < 1) throw ConfigError("discovery: delta_t must be >= 1");
    if (max_sweeps < 1) throw ConfigError("discovery: max_sweeps must be >= 1");
    estimator.validate();
    localizer.validate();
    if (!ablation) {
        if (lambda && !(*lambda > 0.0))
            throw ConfigError("discovery: lambda must be > 0 (0 is ablation-only)");
        if (loss_terms != LossTerms::full)
            throw ConfigError("discovery: partial loss terms are ablation-only");
    }
    if (lambda && *lambda < 0.0) throw ConfigError("discovery: lambda must be >= 0");
}

void LocalizerConfig::validate() const {
    if (embed_dim < 1 || channels < 1 || head_hidden < 1)
        throw ConfigError("localizer: dimensions must be >= 1");
    if (kernel < 1 || kernel % 2 == 0)
        throw ConfigError("localizer: kernel must be odd and >= 1");
    if (conv_layers < 1) throw ConfigError("localizer: conv_layers must be >= 1");
    if (es_population < 2 || es_population % 2 != 0)
        throw ConfigError("localizer: es_population must be even and >= 2");
    if (es_iterations < 1) throw ConfigError("localizer: es_iterations must be >= 1");
    if (!(es_sigma > 0.0) || !(es_lr > 0.0))
        throw ConfigError("localizer: es_sigma and es_lr must be > 0");
}

DiscoveryConfig::Engine parse_engine(const std::string& name) {
    if (name == "profile_peaks") return DiscoveryConfig::Engine::profile_peaks;
    if (name == "coordinate_ascent") return DiscoveryConfig::Engine::coordinate_ascent;
    if (name == "localizer") return DiscoveryConfig::Engine::localizer;
    throw ConfigError("unknown discovery engine '" + name + "'");
}

std::string engine_name(DiscoveryConfig::Engine e) {
    switch (e) {
        case DiscoveryConfig::Engine::profile_peaks: return "profile_peaks";
        case DiscoveryConfig::Engine::coordinate_ascent: return "coordinate_ascent";
        case DiscoveryConfig::Engine::localizer: return "localizer";
    }
    return "?";
}

void IndexAssignment::validate(int T) const {
    if (indices.rows() < 1 || indices.cols() < 1)
        throw Error("index assignment: empty");
    if (!indices.allFinite()) throw Error("index assignment: non-finite index");
    if (indices.minCoeff() < 0.0 || indices.maxCoeff() > static_cast<double>(T - 1))
        throw Error("index assignment: index outside [0, T-1]");
}

IndexAssignment uniform_spread_init(int n, int k, int T, int delta_t) {
    IndexAssignment a;
    a.indices.resize(n, k);
    const double lo = static_cast<double>(delta_t);
    const double hi = static_cast<double>(T - 1);
    for (int c = 0; c < k; ++c) {
        double v = std::round(lo + (hi - lo) * (c + 0.5) / k);
        a.indices.col(c).setConstant(v);
    }
    return a;
}

IndexAssignment center_init(int n, int k, int T) {
    IndexAssignment a;
    a.indices.resize(n, k);
    a.indices.setConstant(std::round(static_cast<double>(T - 1) / 2.0));
    return a;
}

double softplus(double x) {
    if (x > 30.0) return x;
    return std::log1p(std::exp(x));
}

double soft_argmax(const Vec& p) {
    if (p.size() < 1) throw Error("soft_argmax: empty distribution");
    double sum = 0.0;
    for (int t = 0; t < p.size(); ++t) {
        if (p[t] < 0.0) throw Error("soft_argmax: negative probability");
        sum += p[t];
    }
    if (std::abs(sum - 1.0) > 1e-6) throw Error("soft_argmax: distribution does not sum to 1");
    double v = 0.0;
    for (int t = 0; t < p.size(); ++t) v += static_cast<double>(t) * p[t];
    return v;
}

namespace {

int gather_index(double idx, int delta_t, int T) {
    long r = std::lround(idx);
    if (r < delta_t) r = delta_t;  // keep the (t, t - delta_t) pair on the grid
    if (r > T - 1) r = T - 1;
    return static_cast<int>(r);
}

SamplePairs gather_concept(const NormalizedDataset& nd, const IndexAssignment& a, int concept_id,
                           int delta_t) {
    const int n = a.n();
    const int q = nd.state_dim();
    SamplePairs pairs;
    pairs.xs.resize(n, q);
    pairs.ys.resize(n, q);
    for (int i = 0; i < n; ++i) {
        int t = gather_index(a.indices(i, concept_id), delta_t, nd.T);
        pairs.xs.row(i) = nd.states[static_cast<std::size_t>(i)].row(t);
        pairs.ys.row(i) = nd.states[static_cast<std::size_t>(i)].row(t - delta_t);
    }
    return pairs;
}

}  // namespace

double maxmi_objective(const NormalizedDataset& nd, const IndexAssignment& assignment,
                       const DiscoveryConfig& cfg) {
    assignment.validate(nd.T);
    double total = 0.0;
    for (int k = 0; k < assignment.k(); ++k) {
        try {
            total -= estimate_mi(gather_concept(nd, assignment, k, cfg.delta_t), cfg.estimator);
        } catch (const EstimatorError& e) {
            throw EstimatorError("concept " + std::to_string(k) + ": " + e.what());
        }
    }
    return total;
}

double diversity_penalty(const IndexAssignment& assignment) {
    double total = 0.0;
    for (int i = 0; i < assignment.n(); ++i)
        for (int u = 0; u < assignment.k(); ++u)
            for (int v = u + 1; v < assignment.k(); ++v)
                total += softplus(-std::abs(assignment.indices(i, u) - assignment.indices(i, v)));
    return total;
}

double total_loss(const NormalizedDataset& nd, const IndexAssignment& assignment,
                  const DiscoveryConfig& cfg) {
    const double lam = cfg.lambda.value_or(0.0);
    switch (cfg.loss_terms) {
        case DiscoveryConfig::LossTerms::full:
            return maxmi_objective(nd, assignment, cfg) + lam * diversity_penalty(assignment);
        case DiscoveryConfig::LossTerms::maxmi_only:
            return maxmi_objective(nd, assignment, cfg);
        case DiscoveryConfig::LossTerms::diversity_only:
            return lam * diversity_penalty(assignment);
    }
    throw Error("unreachable loss terms");
}

std::vector<Peak> nms(std::vector<Peak> candidates, int window) {
    std::sort(candidates.begin(), candidates.end(), [](const Peak& a, const Peak& b) {
        if (a.score != b.score) return a.score > b.score;
        return a.index < b.index;
    });
    std::vector<Peak> kept;
    for (const auto& c : candidates) {
        bool suppressed = false;
        for (const auto& k : kept)
            if (std::abs(c.index - k.index) <= static_cast<double>(window)) {
                suppressed = true;
                break;
            }
        if (!suppressed) kept.push_back(c);
    }
    return kept;
}

std::vector<Peak> profile_local_maxima(const MIProfile& profile) {
    const auto& v = profile.values;
    std::vector<Peak> peaks;
    const std::size_t m = v.size();
    for (std::size_t idx = 0; idx < m; ++idx) {
        bool rising = idx == 0 || v[idx] > v[idx - 1];
        bool falling = idx + 1 == m || v[idx] >= v[idx + 1];
        if (idx == 0 && m > 1 && !(v[0] > v[1])) continue;
        if (idx + 1 == m && m > 1 && !(v[m - 1] > v[m - 2])) continue;
        if (rising && falling)
            peaks.push_back({static_cast<double>(profile.t_at(idx)), v[idx]});
    }
    return peaks;
}

// ---------------------------------------------------------------------------
// profile peaks engine

namespace {

ConceptSet finalize_concepts(const NormalizedDataset& nd, IndexAssignment assignment,
                             std::vector<double> scores, const DiscoveryConfig& cfg,
                             std::string status) {
    // order concepts by mean index
    const int k = assignment.k();
    std::vector<int> order(static_cast<std::size_t>(k));
    std::vector<double> means(static_cast<std::size_t>(k));
    for (int c = 0; c < k; ++c) {
        order[static_cast<std::size_t>(c)] = c;
        means[static_cast<std::size_t>(c)] = assignment.indices.col(c).mean();
    }
    std::sort(order.begin(), order.end(), [&](int a, int b) {
        return means[static_cast<std::size_t>(a)] < means[static_cast<std::size_t>(b)];
    });

    ConceptSet cs;
    cs.T = nd.T;
    cs.engine = engine_name(cfg.engine);
    cs.status = std::move(status);
    cs.trajectory_ids = nd.ids;
    cs.assignment.indices.resize(assignment.n(), k);
    cs.raw_indices.resize(assignment.n(), k);
    cs.scores.resize(static_cast<std::size_t>(k));
    for (int c = 0; c < k; ++c) {
        int src = order[static_cast<std::size_t>(c)];
        cs.assignment.indices.col(c) = assignment.indices.col(src);
        cs.scores[static_cast<std::size_t>(c)] = scores[static_cast<std::size_t>(src)];
        for (int i = 0; i < assignment.n(); ++i)
            cs.raw_indices(i, c) = nd.to_raw(i, assignment.indices(i, src));
    }
    return cs;
}

ConceptSet empty_concepts(const NormalizedDataset& nd, const DiscoveryConfig& cfg,
                          const std::string& status) {
    ConceptSet cs;
    cs.T = nd.T;
    cs.engine = engine_name(cfg.engine);
    cs.status = status;
    cs.trajectory_ids = nd.ids;
    return cs;
}

}  // namespace

namespace {

double lambda_from_profile(const MIProfile& profile) {
    auto peaks = profile_local_maxima(profile);
    double mean_peak = 0.0;
    if (!peaks.empty()) {
        for (const auto& p : peaks) mean_peak += p.score;
        mean_peak /= static_cast<double>(peaks.size());
    }
    mean_peak = std::max(mean_peak, kLowConfidenceMi);  // keep lambda positive on flat profiles
    return 0.05 * mean_peak / softplus(0.0);
}

}  // namespace

double resolve_lambda(const NormalizedDataset& nd, const DiscoveryConfig& cfg) {
    if (cfg.lambda) return *cfg.lambda;
    return lambda_from_profile(mi_profile(nd, cfg.delta_t, cfg.estimator));
}

ConceptSet discover_profile_peaks(const NormalizedDataset& nd, const DiscoveryConfig& cfg) {
    MIProfile profile = mi_profile(nd, cfg.delta_t, cfg.estimator);
    auto peaks = nms(profile_local_maxima(profile), cfg.nms_window);
    if (peaks.size() > static_cast<std::size_t>(cfg.K)) peaks.resize(static_cast<std::size_t>(cfg.K));

    if (peaks.empty()) return empty_concepts(nd, cfg, "empty");

    IndexAssignment a;
    a.indices.resize(nd.size(), static_cast<int>(peaks.size()));
    std::vector<double> scores(peaks.size());
    for (std::size_t c = 0; c < peaks.size(); ++c) {
        a.indices.col(static_cast<int>(c)).setConstant(peaks[c].index);
        scores[c] = peaks[c].score;
    }

    bool low = true;
    for (double s : scores) low = low && s < kLowConfidenceMi;
    return finalize_concepts(nd, std::move(a), std::move(scores), cfg,
                             low ? "low_confidence" : "ok");
}

// ---------------------------------------------------------------------------
// coordinate ascent engine

namespace {

// Jittered gather row for trajectory i at grid index t (x side = t,
// y side = t - delta_t). Must match what estimate_mi sees for the same
// assignment so incremental and definitional losses agree exactly.
void jittered_rows(const NormalizedDataset& nd, int i, int t, int delta_t, double jitter_sd,
                   std::vector<double>& x_row, std::vector<double>& y_row) {
    const Mat& s = nd.states[static_cast<std::size_t>(i)];
    const int q = static_cast<int>(s.cols());
    x_row.resize(static_cast<std::size_t>(q));
    y_row.resize(static_cast<std::size_t>(q));
    for (int d = 0; d < q; ++d) {
        double jx = jitter_sd == 0.0
                        ? 0.0
                        : jitter_sd * hashed_gaussian(static_cast<std::uint64_t>(i),
                                                      static_cast<std::uint64_t>(d), 0);
        double jy = jitter_sd == 0.0
                        ? 0.0
                        : jitter_sd * hashed_gaussian(static_cast<std::uint64_t>(i),
                                                      static_cast<std::uint64_t>(d), 1);
        x_row[static_cast<std::size_t>(d)] = s(t, d) + jx;
        y_row[static_cast<std::size_t>(d)] = s(t - delta_t, d) + jy;
    }
}

struct ConceptEvaluator {
    // Wraps KsgIncremental when the estimator is ksg; otherwise falls back
    // to full re-estimation per candidate.
    const NormalizedDataset& nd;
    const DiscoveryConfig& cfg;
    IndexAssignment& assignment;
    int concept_k;
    std::unique_ptr<KsgIncremental> ksg;

    ConceptEvaluator(const NormalizedDataset& nd_, const DiscoveryConfig& cfg_,
                     IndexAssignment& a, int k)
        : nd(nd_), cfg(cfg_), assignment(a), concept_k(k) {
        if (cfg.estimator.method == MIEstimatorConfig::Method::ksg) {
            SamplePairs pairs = gather_concept(nd, assignment, concept_k, cfg.delta_t);
            pairs.validate();
            for (int d = 0; d < pairs.xs.cols(); ++d) {
                if (pairs.xs.col(d).minCoeff() == pairs.xs.col(d).maxCoeff() ||
                    pairs.ys.col(d).minCoeff() == pairs.ys.col(d).maxCoeff())
                    throw EstimatorError("concept " + std::to_string(concept_k) +
                                         ": ksg: degenerate constant column in gathered states");
            }
            apply_ksg_jitter(pairs.xs, 0, cfg.estimator.jitter_sd);
            apply_ksg_jitter(pairs.ys, 1, cfg.estimator.jitter_sd);
            ksg = std::make_unique<KsgIncremental>(std::move(pairs.xs), std::move(pairs.ys),
                                                   cfg.estimator.k_neighbors);
        }
    }

    void begin_row(int i) {
        if (ksg) ksg->begin_row_trials(i);
    }

    double mi_with_index(int i, int t) {
        if (ksg) {
            std::vector<double> xr, yr;
            jittered_rows(nd, i, t, cfg.delta_t, cfg.estimator.jitter_sd, xr, yr);
            return ksg->trial(xr.data(), yr.data());
        }
        double old = assignment.indices(i, concept_k);
        assignment.indices(i, concept_k) = t;
        double mi = estimate_mi(gather_concept(nd, assignment, concept_k, cfg.delta_t),
                                cfg.estimator);
        assignment.indices(i, concept_k) = old;
        return mi;
    }

    void commit(int i, int t) {
        assignment.indices(i, concept_k) = t;
        if (ksg) {
            std::vector<double> xr, yr;
            jittered_rows(nd, i, t, cfg.delta_t, cfg.estimator.jitter_sd, xr, yr);
            ksg->commit_row(xr.data(), yr.data());
        }
    }
};

double concept_mi(const NormalizedDataset& nd, const IndexAssignment& a, int k,
                  const DiscoveryConfig& cfg) {
    return estimate_mi(gather_concept(nd, a, k, cfg.delta_t), cfg.estimator);
}

}  // namespace

ConceptSet discover_coordinate_ascent(const NormalizedDataset& nd, const DiscoveryConfig& cfg,
                                      std::optional<IndexAssignment> init) {
    const int n = nd.size();
    const int T = nd.T;
    const bool use_mi = cfg.loss_terms != DiscoveryConfig::LossTerms::diversity_only;
    const bool use_div = cfg.loss_terms != DiscoveryConfig::LossTerms::maxmi_only;

    std::optional<MIProfile> profile;
    auto the_profile = [&]() -> const MIProfile& {
        if (!profile) profile = mi_profile(nd, cfg.delta_t, cfg.estimator);
        return *profile;
    };

    DiscoveryConfig local = cfg;
    double lam = 0.0;
    if (use_div) lam = cfg.lambda ? *cfg.lambda : lambda_from_profile(the_profile());
    local.lambda = lam;

    IndexAssignment a;
    if (init) {
        a = std::move(*init);
        a.validate(T);
        if (a.n() != n) throw Error("coordinate ascent: init row count mismatch");
    } else {
        auto peaks = nms(profile_local_maxima(the_profile()), cfg.nms_window);
        if (peaks.size() > static_cast<std::size_t>(cfg.K))
            peaks.resize(static_cast<std::size_t>(cfg.K));
        a = uniform_spread_init(n, cfg.K, T, cfg.delta_t);
        // seed the leading columns with profile peaks, keep temporal order
        std::vector<double> cols(static_cast<std::size_t>(cfg.K));
        for (int c = 0; c < cfg.K; ++c) cols[static_cast<std::size_t>(c)] = a.indices(0, c);
        for (std::size_t c = 0; c < peaks.size(); ++c) cols[c] = peaks[c].index;
        std::sort(cols.begin(), cols.end());
        for (int c = 0; c < cfg.K; ++c)
            a.indices.col(c).setConstant(cols[static_cast<std::size_t>(c)]);
    }
    const int k_total = a.k();

    const int half_window = std::max(1, T / 8);
    std::vector<double> trace;
    trace.push_back(total_loss(nd, a, local));

    bool converged = false;
    for (int sweep = 0; sweep < cfg.max_sweeps && !converged; ++sweep) {
        for (int k = 0; k < k_total; ++k) {
            std::optional<ConceptEvaluator> ev;
            if (use_mi) ev.emplace(nd, local, a, k);
            for (int i = 0; i < n; ++i) {
                const int cur = gather_index(a.indices(i, k), cfg.delta_t, T);
                const int lo = std::max(cfg.delta_t, cur - half_window);
                const int hi = std::min(T - 1, cur + half_window);
                if (ev) ev->begin_row(i);

                auto candidate_loss = [&](int t) {
                    double loss = 0.0;
                    if (use_mi) loss -= ev->mi_with_index(i, t);
                    if (use_div) {
                        double div = 0.0;
                        for (int u = 0; u < k_total; ++u) {
                            if (u == k) continue;
                            div += softplus(-std::abs(static_cast<double>(t) -
                                                      a.indices(i, u)));
                        }
                        loss += lam * div;
                    }
                    return loss;
                };

                int best_t = cur;
                double best = candidate_loss(cur);
                for (int t = lo; t <= hi; ++t) {
                    if (t == cur) continue;
                    double l = candidate_loss(t);
                    if (l < best) {
                        best = l;
                        best_t = t;
                    }
                }
                if (best_t != cur) {
                    if (ev)
                        ev->commit(i, best_t);
                    else
                        a.indices(i, k) = best_t;
                }
            }
        }
        trace.push_back(total_loss(nd, a, local));
        const double improvement = trace[trace.size() - 2] - trace.back();
        if (improvement < cfg.sweep_tol) converged = true;
    }

    // score and merge with NMS on concept means
    std::vector<double> scores(static_cast<std::size_t>(k_total), 0.0);
    for (int k = 0; k < k_total; ++k)
        scores[static_cast<std::size_t>(k)] = concept_mi(nd, a, k, local);

    std::vector<Peak> cands;
    for (int k = 0; k < k_total; ++k)
        cands.push_back({a.indices.col(k).mean(), scores[static_cast<std::size_t>(k)]});
    // tag candidates with their column via index lookup after nms
    std::vector<Peak> kept = nms(cands, cfg.nms_window);

    std::vector<int> keep_cols;
    for (const auto& p : kept)
        for (int k = 0; k < k_total; ++k)
            if (cands[static_cast<std::size_t>(k)].index == p.index &&
                cands[static_cast<std::size_t>(k)].score == p.score) {
                if (std::find(keep_cols.begin(), keep_cols.end(), k) == keep_cols.end())
                    keep_cols.push_back(k);
                break;
            }

    IndexAssignment pruned;
    pruned.indices.resize(n, static_cast<int>(keep_cols.size()));
    std::vector<double> pruned_scores;
    for (std::size_t c = 0; c < keep_cols.size(); ++c) {
        pruned.indices.col(static_cast<int>(c)) = a.indices.col(keep_cols[c]);
        pruned_scores.push_back(scores[static_cast<std::size_t>(keep_cols[c])]);
    }

    ConceptSet cs = finalize_concepts(nd, std::move(pruned), std::move(pruned_scores), cfg,
                                      converged ? "ok" : "not_converged");
    cs.engine = engine_name(DiscoveryConfig::Engine::coordinate_ascent);
    cs.lambda_used = lam;
    cs.sweep_losses = std::move(trace);
    return cs;
}

// ---------------------------------------------------------------------------

std::vector<double> ConceptSet::mean_indices() const {
    std::vector<double> out;
    for (int c = 0; c < assignment.k(); ++c) out.push_back(assignment.indices.col(c).mean());
    return out;
}

std::string ConceptSet::to_json() const {
    json j;
    j["format"] = "maxmi-concepts-v1";
    j["config_hash"] = config_hash;
    j["dataset_hash"] = dataset_hash;
    j["engine"] = engine;
    j["status"] = status;
    j["lambda"] = lambda_used;
    j["T"] = T;
    j["trajectory_ids"] = trajectory_ids;
    j["sweep_losses"] = sweep_losses;
    json concepts = json::array();
    for (int c = 0; c < num_concepts(); ++c) {
        json jc;
        jc["score"] = scores[static_cast<std::size_t>(c)];
        jc["mean_index"] = assignment.indices.col(c).mean();
        std::vector<double> ni, ri;
        for (int i = 0; i < assignment.n(); ++i) {
            ni.push_back(assignment.indices(i, c));
            ri.push_back(raw_indices(i, c));
        }
        jc["normalized_indices"] = ni;
        jc["raw_indices"] = ri;
        concepts.push_back(jc);
    }
    j["concepts"] = concepts;
    return j.dump(2) + "\n";
}

ConceptSet ConceptSet::from_json(const std::string& content) {
    json j = json::parse(content);
    if (j.value("format", "") != "maxmi-concepts-v1")
        throw ParseError("concept json: unknown format");
    ConceptSet cs;
    cs.config_hash = j.value("config_hash", "");
    cs.dataset_hash = j.value("dataset_hash", "");
    cs.engine = j.value("engine", "");
    cs.status = j.value("status", "ok");
    cs.lambda_used = j.value("lambda", 0.0);
    cs.T = j.value("T", 0);
    cs.trajectory_ids = j.value("trajectory_ids", std::vector<std::string>{});
    cs.sweep_losses = j.value("sweep_losses", std::vector<double>{});
    const auto& concepts = j.at("concepts");
    const int k = static_cast<int>(concepts.size());
    const int n = static_cast<int>(cs.trajectory_ids.size());
    cs.assignment.indices.resize(n, k);
    cs.raw_indices.resize(n, k);
    cs.scores.resize(static_cast<std::size_t>(k));
    for (int c = 0; c < k; ++c) {
        const auto& jc = concepts[static_cast<std::size_t>(c)];
        cs.scores[static_cast<std::size_t>(c)] = jc.at("score").get<double>();
        auto ni = jc.at("normalized_indices").get<std::vector<double>>();
        auto ri = jc.at("raw_indices").get<std::vector<double>>();
        if (static_cast<int>(ni.size()) != n || static_cast<int>(ri.size()) != n)
            throw ParseError("concept json: index vector size mismatch");
        for (int i = 0; i < n; ++i) {
            cs.assignment.indices(i, c) = ni[static_cast<std::size_t>(i)];
            cs.raw_indices(i, c) = ri[static_cast<std::size_t>(i)];
        }
    }
    return cs;
}

std::string ConceptSet::to_csv() const {
    std::string out = "trajectory_id,concept,raw_index\n";
    for (int i = 0; i < assignment.n(); ++i)
        for (int c = 0; c < num_concepts(); ++c)
            out += trajectory_ids[static_cast<std::size_t>(i)] + "," + std::to_string(c) + "," +
                   format_double(raw_indices(i, c)) + "\n";
    return out;
}

}  // namespace maxmi
