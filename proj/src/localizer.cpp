#include "maxmi/localizer.hpp"

#include <algorithm>
#include <cmath>

#include "maxmi/rng.hpp"

namespace maxmi {

namespace {

// zero-padded 1-D convolution as a sum of shifted GEMMs; w row co holds
// kernel blocks of c_in values (block dk at columns [dk*c_in, (dk+1)*c_in)):
// out(t, co) = b(co) + sum_dk in(t + dk - kernel/2, :) . w(co, block dk)
Mat conv1d(const Mat& in, const Mat& w, const Vec& b, int kernel) {
    const int t_len = static_cast<int>(in.rows());
    const int c_in = static_cast<int>(in.cols());
    const int half = kernel / 2;
    Mat out = b.transpose().replicate(t_len, 1);
    for (int dk = 0; dk < kernel; ++dk) {
        const int shift = dk - half;
        const int src_lo = std::max(0, shift);
        const int src_hi = std::min(t_len, t_len + shift);
        if (src_lo >= src_hi) continue;
        const int dst_lo = src_lo - shift;
        const int len = src_hi - src_lo;
        out.middleRows(dst_lo, len).noalias() +=
            in.middleRows(src_lo, len) * w.middleCols(dk * c_in, c_in).transpose();
    }
    return out;
}

inline void relu_inplace(Mat& m) { m = m.cwiseMax(0.0); }

Vec softmax(const Vec& logits) {
    double mx = logits.maxCoeff();
    Vec e = (logits.array() - mx).exp();
    return e / e.sum();
}

double glorot_limit(int fan_in, int fan_out) { return std::sqrt(6.0 / (fan_in + fan_out)); }

void fill_uniform(Mat& m, Rng& rng, double limit) {
    for (int r = 0; r < m.rows(); ++r)
        for (int c = 0; c < m.cols(); ++c) m(r, c) = rng.uniform(-limit, limit);
}

}  // namespace

LocalizerModel LocalizerModel::init(int T, int Q, int K, const LocalizerConfig& arch,
                                    std::uint64_t seed) {
    arch.validate();
    LocalizerModel m;
    m.arch = arch;
    m.T = T;
    m.Q = Q;
    m.K = K;
    Rng rng(hash_combine(seed, 0x10ca112e4ull));

    m.embeddings.resize(K, arch.embed_dim);
    fill_uniform(m.embeddings, rng, 0.5);

    int c_in = Q + arch.embed_dim;
    for (int l = 0; l < arch.conv_layers; ++l) {
        Mat w(arch.channels, arch.kernel * c_in);
        fill_uniform(w, rng, glorot_limit(arch.kernel * c_in, arch.channels));
        m.conv_w.push_back(std::move(w));
        m.conv_b.push_back(Vec::Zero(arch.channels));
        c_in = arch.channels;
    }

    m.head_w1.resize(arch.head_hidden, arch.channels);
    fill_uniform(m.head_w1, rng, glorot_limit(arch.channels, arch.head_hidden));
    m.head_b1 = Vec::Zero(arch.head_hidden);
    m.head_w2.resize(T, arch.head_hidden);
    fill_uniform(m.head_w2, rng, glorot_limit(arch.head_hidden, T));
    m.head_b2 = Vec::Zero(T);
    return m;
}

int LocalizerModel::param_count() const {
    int n = static_cast<int>(embeddings.size());
    for (std::size_t l = 0; l < conv_w.size(); ++l)
        n += static_cast<int>(conv_w[l].size() + conv_b[l].size());
    n += static_cast<int>(head_w1.size() + head_b1.size());
    n += static_cast<int>(head_w2.size() + head_b2.size());
    return n;
}

Vec LocalizerModel::to_params() const {
    Vec p(param_count());
    int at = 0;
    auto put_mat = [&](const Mat& m) {
        std::copy(m.data(), m.data() + m.size(), p.data() + at);
        at += static_cast<int>(m.size());
    };
    auto put_vec = [&](const Vec& v) {
        std::copy(v.data(), v.data() + v.size(), p.data() + at);
        at += static_cast<int>(v.size());
    };
    put_mat(embeddings);
    for (std::size_t l = 0; l < conv_w.size(); ++l) {
        put_mat(conv_w[l]);
        put_vec(conv_b[l]);
    }
    put_mat(head_w1);
    put_vec(head_b1);
    put_mat(head_w2);
    put_vec(head_b2);
    return p;
}

void LocalizerModel::from_params(const Vec& p) {
    int at = 0;
    auto get_mat = [&](Mat& m) {
        std::copy(p.data() + at, p.data() + at + m.size(), m.data());
        at += static_cast<int>(m.size());
    };
    auto get_vec = [&](Vec& v) {
        std::copy(p.data() + at, p.data() + at + v.size(), v.data());
        at += static_cast<int>(v.size());
    };
    get_mat(embeddings);
    for (std::size_t l = 0; l < conv_w.size(); ++l) {
        get_mat(conv_w[l]);
        get_vec(conv_b[l]);
    }
    get_mat(head_w1);
    get_vec(head_b1);
    get_mat(head_w2);
    get_vec(head_b2);
    if (at != p.size()) throw Error("localizer: parameter vector size mismatch");
}

Vec localizer_forward(const LocalizerModel& model, const Mat& traj_states, int k) {
    if (traj_states.rows() != model.T || traj_states.cols() != model.Q)
        throw Error("localizer_forward: trajectory shape mismatch");
    if (k < 0 || k >= model.K) throw Error("localizer_forward: concept id out of range");

    const int t_len = model.T;
    Mat h(t_len, model.Q + model.arch.embed_dim);
    h.leftCols(model.Q) = traj_states;
    h.rightCols(model.arch.embed_dim) = model.embeddings.row(k).replicate(t_len, 1);

    for (std::size_t l = 0; l < model.conv_w.size(); ++l) {
        h = conv1d(h, model.conv_w[l], model.conv_b[l], model.arch.kernel);
        relu_inplace(h);
    }

    Vec pooled = h.colwise().maxCoeff().transpose();
    Vec hidden = (model.head_w1 * pooled + model.head_b1).cwiseMax(0.0);
    Vec logits = model.head_w2 * hidden + model.head_b2;
    return softmax(logits);
}

IndexAssignment localizer_assignment(const LocalizerModel& model, const NormalizedDataset& nd) {
    IndexAssignment a;
    a.indices.resize(nd.size(), model.K);
    for (int i = 0; i < nd.size(); ++i)
        for (int k = 0; k < model.K; ++k)
            a.indices(i, k) =
                soft_argmax(localizer_forward(model, nd.states[static_cast<std::size_t>(i)], k));
    return a;
}

LocalizerTrainResult train_localizer(const NormalizedDataset& nd, const DiscoveryConfig& cfg) {
    const LocalizerConfig& arch = cfg.localizer;
    arch.validate();
    const int t_len = nd.T;
    const int q = nd.state_dim();

    LocalizerModel model = LocalizerModel::init(t_len, q, cfg.K, arch, cfg.seed);

    DiscoveryConfig local = cfg;
    local.lambda = cfg.loss_terms == DiscoveryConfig::LossTerms::maxmi_only
                       ? 0.0
                       : resolve_lambda(nd, cfg);

    auto loss_of = [&](const LocalizerModel& m) {
        IndexAssignment a = localizer_assignment(m, nd);
        return total_loss(nd, a, local);
    };

    Vec theta = model.to_params();
    const int dim = static_cast<int>(theta.size());
    const int pop = arch.es_population;
    const int pairs = pop / 2;

    double best_loss = loss_of(model);
    if (!std::isfinite(best_loss))
        throw Error("train_localizer: non-finite loss at initialization");
    Vec best_theta = theta;

    LocalizerTrainResult result;
    result.best_loss_trace.push_back(best_loss);

    std::vector<Vec> noise(static_cast<std::size_t>(pairs));
    std::vector<double> losses(static_cast<std::size_t>(pop));

    for (int iter = 0; iter < arch.es_iterations; ++iter) {
        Rng rng(hash_combine(hash_combine(cfg.seed, 0xe5e5e5e5ull), static_cast<std::uint64_t>(iter)));
        for (int j = 0; j < pairs; ++j) {
            noise[static_cast<std::size_t>(j)].resize(dim);
            for (int d = 0; d < dim; ++d)
                noise[static_cast<std::size_t>(j)][d] = arch.es_sigma * rng.gaussian();
        }

        parallel_for(static_cast<std::size_t>(pop), [&](std::size_t member) {
            const int j = static_cast<int>(member) / 2;
            const double sign = (member % 2 == 0) ? 1.0 : -1.0;
            LocalizerModel trial = model;
            trial.from_params(theta + sign * noise[static_cast<std::size_t>(j)]);
            losses[member] = loss_of(trial);
        });

        for (double l : losses)
            if (!std::isfinite(l))
                throw Error("train_localizer: non-finite loss at iteration " +
                            std::to_string(iter));

        // centered ranks: best member gets +0.5, worst -0.5
        std::vector<int> order(static_cast<std::size_t>(pop));
        for (int j = 0; j < pop; ++j) order[static_cast<std::size_t>(j)] = j;
        std::sort(order.begin(), order.end(), [&](int a, int b) {
            if (losses[static_cast<std::size_t>(a)] != losses[static_cast<std::size_t>(b)])
                return losses[static_cast<std::size_t>(a)] < losses[static_cast<std::size_t>(b)];
            return a < b;
        });
        std::vector<double> weight(static_cast<std::size_t>(pop));
        for (int r = 0; r < pop; ++r)
            weight[static_cast<std::size_t>(order[static_cast<std::size_t>(r)])] =
                0.5 - static_cast<double>(r) / static_cast<double>(pop - 1);

        Vec grad = Vec::Zero(dim);
        for (int member = 0; member < pop; ++member) {
            const int j = member / 2;
            const double sign = (member % 2 == 0) ? 1.0 : -1.0;
            grad += weight[static_cast<std::size_t>(member)] * sign *
                    noise[static_cast<std::size_t>(j)];
        }

        // elitism over the members evaluated this iteration (perturbations
        // are relative to the pre-update theta)
        for (int member = 0; member < pop; ++member) {
            if (losses[static_cast<std::size_t>(member)] < best_loss) {
                best_loss = losses[static_cast<std::size_t>(member)];
                const int j = member / 2;
                const double sign = (member % 2 == 0) ? 1.0 : -1.0;
                best_theta = theta + sign * noise[static_cast<std::size_t>(j)];
            }
        }

        theta += (arch.es_lr / (arch.es_sigma * pop)) * grad;
        model.from_params(theta);
        double mean_loss = loss_of(model);
        if (!std::isfinite(mean_loss))
            throw Error("train_localizer: non-finite loss at iteration " + std::to_string(iter));
        if (mean_loss < best_loss) {
            best_loss = mean_loss;
            best_theta = theta;
        }
        result.best_loss_trace.push_back(best_loss);
    }

    model.from_params(best_theta);
    result.model = std::move(model);
    return result;
}

ConceptSet discover_localizer(const NormalizedDataset& nd, const DiscoveryConfig& cfg) {
    LocalizerTrainResult trained = train_localizer(nd, cfg);
    IndexAssignment a = localizer_assignment(trained.model, nd);

    // score concepts at their (rounded) indices, then merge with NMS
    std::vector<double> scores(static_cast<std::size_t>(a.k()), 0.0);
    for (int k = 0; k < a.k(); ++k) {
        SamplePairs pairs;
        const int n = a.n();
        const int q = nd.state_dim();
        pairs.xs.resize(n, q);
        pairs.ys.resize(n, q);
        for (int i = 0; i < n; ++i) {
            long t = std::lround(a.indices(i, k));
            t = std::max<long>(cfg.delta_t, std::min<long>(t, nd.T - 1));
            pairs.xs.row(i) = nd.states[static_cast<std::size_t>(i)].row(t);
            pairs.ys.row(i) = nd.states[static_cast<std::size_t>(i)].row(t - cfg.delta_t);
        }
        scores[static_cast<std::size_t>(k)] = estimate_mi(pairs, cfg.estimator);
    }

    std::vector<Peak> cands;
    for (int k = 0; k < a.k(); ++k)
        cands.push_back({a.indices.col(k).mean(), scores[static_cast<std::size_t>(k)]});
    std::vector<Peak> kept = nms(cands, cfg.nms_window);

    std::vector<int> keep_cols;
    for (const auto& p : kept)
        for (int k = 0; k < a.k(); ++k)
            if (cands[static_cast<std::size_t>(k)].index == p.index &&
                cands[static_cast<std::size_t>(k)].score == p.score) {
                if (std::find(keep_cols.begin(), keep_cols.end(), k) == keep_cols.end())
                    keep_cols.push_back(k);
                break;
            }

    IndexAssignment pruned;
    pruned.indices.resize(a.n(), static_cast<int>(keep_cols.size()));
    std::vector<double> pruned_scores;
    Mat raw(a.n(), static_cast<int>(keep_cols.size()));
    for (std::size_t c = 0; c < keep_cols.size(); ++c) {
        pruned.indices.col(static_cast<int>(c)) = a.indices.col(keep_cols[c]);
        pruned_scores.push_back(scores[static_cast<std::size_t>(keep_cols[c])]);
    }

    // reuse the shared finishing path via a small local sort
    ConceptSet cs;
    cs.T = nd.T;
    cs.engine = engine_name(DiscoveryConfig::Engine::localizer);
    cs.status = "ok";
    cs.trajectory_ids = nd.ids;
    const int kk = pruned.k();
    std::vector<int> order(static_cast<std::size_t>(kk));
    std::vector<double> means(static_cast<std::size_t>(kk));
    for (int c = 0; c < kk; ++c) {
        order[static_cast<std::size_t>(c)] = c;
        means[static_cast<std::size_t>(c)] = pruned.indices.col(c).mean();
    }
    std::sort(order.begin(), order.end(), [&](int x, int y) {
        return means[static_cast<std::size_t>(x)] < means[static_cast<std::size_t>(y)];
    });
    cs.assignment.indices.resize(pruned.n(), kk);
    cs.raw_indices.resize(pruned.n(), kk);
    cs.scores.resize(static_cast<std::size_t>(kk));
    for (int c = 0; c < kk; ++c) {
        int src = order[static_cast<std::size_t>(c)];
        cs.assignment.indices.col(c) = pruned.indices.col(src);
        cs.scores[static_cast<std::size_t>(c)] = pruned_scores[static_cast<std::size_t>(src)];
        for (int i = 0; i < pruned.n(); ++i)
            cs.raw_indices(i, c) = nd.to_raw(i, pruned.indices(i, src));
    }
    cs.lambda_used = cfg.lambda.value_or(0.0);
    cs.sweep_losses = trained.best_loss_trace;
    return cs;
}

ConceptSet discover(const NormalizedDataset& nd, const DiscoveryConfig& cfg) {
    switch (cfg.engine) {
        case DiscoveryConfig::Engine::profile_peaks: return discover_profile_peaks(nd, cfg);
        case DiscoveryConfig::Engine::coordinate_ascent:
            return discover_coordinate_ascent(nd, cfg);
        case DiscoveryConfig::Engine::localizer: return discover_localizer(nd, cfg);
    }
    throw Error("unreachable engine");
}

}  // namespace maxmi
