#include "maxmi/policy.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include <nlohmann/json.hpp>

#include "maxmi/rng.hpp"

namespace maxmi {

using json = nlohmann::ordered_json;

void PolicyConfig::validate() const {
    if (!(alpha >= 0.0)) throw ConfigError("policy: alpha must be >= 0");
    if (!(learning_rate > 0.0)) throw ConfigError("policy: learning_rate must be > 0");
    if (epochs < 1) throw ConfigError("policy: epochs must be >= 1");
    if (batch_size < 1) throw ConfigError("policy: batch_size must be >= 1");
    if (hidden_sizes.empty()) throw ConfigError("policy: needs at least one hidden layer");
    for (int h : hidden_sizes)
        if (h < 1) throw ConfigError("policy: hidden sizes must be >= 1");
}

namespace {

double glorot(int fan_in, int fan_out) { return std::sqrt(6.0 / (fan_in + fan_out)); }

void fill_uniform(Mat& m, Rng& rng, double limit) {
    for (int r = 0; r < m.rows(); ++r)
        for (int c = 0; c < m.cols(); ++c) m(r, c) = rng.uniform(-limit, limit);
}

}  // namespace

PolicyModel PolicyModel::init(int q, int a, int k, const std::vector<int>& hidden,
                              std::uint64_t seed) {
    PolicyModel m;
    m.q = q;
    m.a = a;
    m.k = k;
    m.hidden = hidden;
    Rng rng(hash_combine(seed, 0xb0bb15ull));
    int fan_in = q;
    for (int h : hidden) {
        Mat w(h, fan_in);
        fill_uniform(w, rng, glorot(fan_in, h));
        m.trunk_w.push_back(std::move(w));
        m.trunk_b.push_back(Vec::Zero(h));
        fan_in = h;
    }
    m.action_w.resize(a, fan_in);
    fill_uniform(m.action_w, rng, glorot(fan_in, a));
    m.action_b = Vec::Zero(a);
    for (int c = 0; c < k; ++c) {
        Mat w(q, fan_in);
        fill_uniform(w, rng, glorot(fan_in, q));
        m.key_w.push_back(std::move(w));
        m.key_b.push_back(Vec::Zero(q));
    }
    return m;
}

Vec PolicyModel::act(const Vec& state) const {
    Vec h = state;
    for (std::size_t l = 0; l < trunk_w.size(); ++l)
        h = ((trunk_w[l] * h) + trunk_b[l]).cwiseMax(0.0);
    return action_w * h + action_b;
}

Mat PolicyModel::key_predictions(const Vec& state) const {
    Vec h = state;
    for (std::size_t l = 0; l < trunk_w.size(); ++l)
        h = ((trunk_w[l] * h) + trunk_b[l]).cwiseMax(0.0);
    Mat out(k, q);
    for (int c = 0; c < k; ++c) out.row(c) = (key_w[static_cast<std::size_t>(c)] * h +
                                              key_b[static_cast<std::size_t>(c)]).transpose();
    return out;
}

int PolicyModel::param_count() const {
    int n = 0;
    for (std::size_t l = 0; l < trunk_w.size(); ++l)
        n += static_cast<int>(trunk_w[l].size() + trunk_b[l].size());
    n += static_cast<int>(action_w.size() + action_b.size());
    for (std::size_t c = 0; c < key_w.size(); ++c)
        n += static_cast<int>(key_w[c].size() + key_b[c].size());
    return n;
}

Vec PolicyModel::to_params() const {
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
    for (std::size_t l = 0; l < trunk_w.size(); ++l) {
        put_mat(trunk_w[l]);
        put_vec(trunk_b[l]);
    }
    put_mat(action_w);
    put_vec(action_b);
    for (std::size_t c = 0; c < key_w.size(); ++c) {
        put_mat(key_w[c]);
        put_vec(key_b[c]);
    }
    return p;
}

void PolicyModel::from_params(const Vec& p) {
    int at = 0;
    auto get_mat = [&](Mat& m) {
        std::copy(p.data() + at, p.data() + at + m.size(), m.data());
        at += static_cast<int>(m.size());
    };
    auto get_vec = [&](Vec& v) {
        std::copy(p.data() + at, p.data() + at + v.size(), v.data());
        at += static_cast<int>(v.size());
    };
    for (std::size_t l = 0; l < trunk_w.size(); ++l) {
        get_mat(trunk_w[l]);
        get_vec(trunk_b[l]);
    }
    get_mat(action_w);
    get_vec(action_b);
    for (std::size_t c = 0; c < key_w.size(); ++c) {
        get_mat(key_w[c]);
        get_vec(key_b[c]);
    }
    if (at != p.size()) throw Error("policy: parameter vector size mismatch");
}

double policy_loss(const PolicyModel& model, const PolicyBatch& batch, double alpha, Vec* grads) {
    const int b = static_cast<int>(batch.states.rows());
    if (b < 1) throw Error("policy_loss: empty batch");
    if (static_cast<int>(batch.key_targets.size()) != model.k)
        throw Error("policy_loss: key target count mismatch");
    const double inv_b = 1.0 / static_cast<double>(b);
    constexpr double norm_eps = 1e-12;
    const std::size_t layers = model.trunk_w.size();

    // forward
    std::vector<Mat> h(layers + 1);  // h[0] = input, h[l] post-relu
    h[0] = batch.states;
    for (std::size_t l = 0; l < layers; ++l) {
        h[l + 1] = h[l] * model.trunk_w[l].transpose();
        h[l + 1].rowwise() += model.trunk_b[l].transpose();
        h[l + 1] = h[l + 1].cwiseMax(0.0);
    }
    const Mat& feat = h[layers];
    Mat a_hat = feat * model.action_w.transpose();
    a_hat.rowwise() += model.action_b.transpose();

    std::vector<Mat> key_hat(static_cast<std::size_t>(model.k));
    for (int c = 0; c < model.k; ++c) {
        key_hat[static_cast<std::size_t>(c)] =
            feat * model.key_w[static_cast<std::size_t>(c)].transpose();
        key_hat[static_cast<std::size_t>(c)].rowwise() +=
            model.key_b[static_cast<std::size_t>(c)].transpose();
    }

    // loss and residual-direction terms
    double loss = 0.0;
    Mat d_a = Mat::Zero(b, model.a);
    for (int i = 0; i < b; ++i) {
        Vec r = (a_hat.row(i) - batch.actions.row(i)).transpose();
        double n = r.norm();
        loss += inv_b * n;
        if (n > norm_eps) d_a.row(i) = (inv_b / n) * r.transpose();
    }
    std::vector<Mat> d_key(static_cast<std::size_t>(model.k));
    for (int c = 0; c < model.k; ++c) {
        d_key[static_cast<std::size_t>(c)] = Mat::Zero(b, model.q);
        for (int i = 0; i < b; ++i) {
            Vec r = (key_hat[static_cast<std::size_t>(c)].row(i) -
                     batch.key_targets[static_cast<std::size_t>(c)].row(i))
                        .transpose();
            double n = r.norm();
            loss += alpha * inv_b * n;
            if (n > norm_eps)
                d_key[static_cast<std::size_t>(c)].row(i) = (alpha * inv_b / n) * r.transpose();
        }
    }
    if (!grads) return loss;

    // backward
    PolicyModel g = model;  // reuse the layout for gradient storage
    Mat d_feat = d_a * model.action_w;
    g.action_w = d_a.transpose() * feat;
    g.action_b = d_a.colwise().sum().transpose();
    for (int c = 0; c < model.k; ++c) {
        const Mat& dk = d_key[static_cast<std::size_t>(c)];
        d_feat += dk * model.key_w[static_cast<std::size_t>(c)];
        g.key_w[static_cast<std::size_t>(c)] = dk.transpose() * feat;
        g.key_b[static_cast<std::size_t>(c)] = dk.colwise().sum().transpose();
    }
    Mat d_h = d_feat;
    for (std::size_t l = layers; l-- > 0;) {
        // relu mask: h[l+1] > 0
        Mat d_z = (h[l + 1].array() > 0.0).select(d_h, Mat::Zero(b, h[l + 1].cols()));
        g.trunk_w[l] = d_z.transpose() * h[l];
        g.trunk_b[l] = d_z.colwise().sum().transpose();
        if (l > 0) d_h = d_z * model.trunk_w[l];
    }
    *grads = g.to_params();
    return loss;
}

TrainResult train_bc(const Dataset& data, const ConceptSet& concepts, const PolicyConfig& cfg) {
    cfg.validate();
    data.validate();
    if (data.action_dim() < 1) throw Error("train_bc: dataset has no actions");
    if (concepts.trajectory_ids != [&] {
            std::vector<std::string> ids;
            for (const auto& t : data.trajectories) ids.push_back(t.id);
            return ids;
        }())
        throw Error("train_bc: concept set does not reference this dataset");

    const int q = data.state_dim();
    const int a_dim = data.action_dim();
    const int k = concepts.num_concepts();
    const int n = data.size();

    // key targets per (trajectory, concept): state at the rounded raw index
    std::vector<Mat> traj_key_targets(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        const Trajectory& tr = data.trajectories[static_cast<std::size_t>(i)];
        Mat kt(k, q);
        for (int c = 0; c < k; ++c) {
            long r = std::lround(concepts.raw_indices(i, c));
            r = std::max<long>(0, std::min<long>(r, tr.length() - 1));
            kt.row(c) = tr.states.row(static_cast<int>(r));
        }
        traj_key_targets[static_cast<std::size_t>(i)] = std::move(kt);
    }

    std::vector<std::pair<int, int>> samples;  // (trajectory, t)
    for (int i = 0; i < n; ++i)
        for (int t = 0; t < data.trajectories[static_cast<std::size_t>(i)].length(); ++t)
            samples.emplace_back(i, t);

    PolicyModel model = PolicyModel::init(q, a_dim, k, cfg.hidden_sizes, cfg.seed);
    Rng rng(hash_combine(cfg.seed, 0x7a17bcULL));

    TrainResult result;
    Vec grads;
    const std::size_t total = samples.size();
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        // Fisher-Yates shuffle
        for (std::size_t i = total - 1; i > 0; --i) {
            std::size_t j = rng.uniform_index(i + 1);
            std::swap(samples[i], samples[j]);
        }
        double epoch_loss = 0.0;
        std::size_t at = 0;
        while (at < total) {
            const std::size_t bsz = std::min<std::size_t>(cfg.batch_size, total - at);
            PolicyBatch batch;
            batch.states.resize(static_cast<int>(bsz), q);
            batch.actions.resize(static_cast<int>(bsz), a_dim);
            batch.key_targets.assign(static_cast<std::size_t>(k), Mat(static_cast<int>(bsz), q));
            for (std::size_t s = 0; s < bsz; ++s) {
                auto [i, t] = samples[at + s];
                const Trajectory& tr = data.trajectories[static_cast<std::size_t>(i)];
                batch.states.row(static_cast<int>(s)) = tr.states.row(t);
                batch.actions.row(static_cast<int>(s)) = tr.actions->row(t);
                for (int c = 0; c < k; ++c)
                    batch.key_targets[static_cast<std::size_t>(c)].row(static_cast<int>(s)) =
                        traj_key_targets[static_cast<std::size_t>(i)].row(c);
            }
            double loss = policy_loss(model, batch, cfg.alpha, &grads);
            epoch_loss += loss * static_cast<double>(bsz);

            double gn = grads.norm();
            if (gn > cfg.grad_clip) grads *= cfg.grad_clip / gn;
            Vec params = model.to_params();
            params -= cfg.learning_rate * grads;
            model.from_params(params);
            at += bsz;
        }
        result.loss_trace.push_back(epoch_loss / static_cast<double>(total));
        if (!std::isfinite(result.loss_trace.back()))
            throw Error("train_bc: non-finite loss at epoch " + std::to_string(epoch));
    }
    result.model = std::move(model);
    return result;
}

// ---------------------------------------------------------------------------
// rollout / evaluation

EpisodeRecord rollout_fn(const PolicyFn& policy, const TaskSpec& spec, const EnvState& init,
                         std::uint64_t seed) {
    Rng rng(hash_combine(seed, 0x4011ull));
    EnvState state = init;
    EventTracker tracker;
    tracker.update(state, spec, 0);
    int t = 0;
    for (t = 1; t <= spec.horizon; ++t) {
        Vec obs = state.to_observation(spec);
        Eigen::Vector3d action = policy(state, obs);
        state = env_step(state, action, spec, rng);
        tracker.update(state, spec, t);
        if (tracker.done(spec)) break;
    }
    EpisodeRecord rec;
    rec.tracker = tracker;
    rec.success = tracker.done(spec);
    rec.steps = std::min(t, spec.horizon);
    return rec;
}

EpisodeRecord rollout_from(const PolicyModel& policy, const TaskSpec& spec, const EnvState& init,
                           std::uint64_t seed) {
    if (policy.q != spec.state_dim())
        throw Error("rollout: policy state dim does not match the task");
    PolicyFn fn = [&](const EnvState&, const Vec& obs) {
        Vec a = policy.act(obs);
        return Eigen::Vector3d(a[0], a[1], a[2]);
    };
    return rollout_fn(fn, spec, init, seed);
}

EpisodeRecord rollout(const PolicyModel& policy, const TaskSpec& spec, std::uint64_t seed) {
    Rng init_rng(hash_combine(seed, 0x1417ull));
    EnvState init = sample_initial_state(spec, init_rng);
    return rollout_from(policy, spec, init, seed);
}

double EvalReport::rate(const std::string& label) const {
    for (const auto& [l, r] : subtask_rates)
        if (l == label) return r;
    throw Error("eval report: no subtask '" + label + "'");
}

std::string EvalReport::to_json(const std::string& config_hash) const {
    json j;
    j["format"] = "maxmi-eval-v1";
    if (!config_hash.empty()) j["config_hash"] = config_hash;
    j["split"] = split;
    j["n"] = n;
    json rates;
    for (const auto& [l, r] : subtask_rates) rates[l] = r;
    j["subtask_rates"] = rates;
    j["task_success"] = task_success;
    return j.dump(2) + "\n";
}

EvalReport evaluate(const PolicyModel& policy, const TaskSpec& spec, int n_episodes,
                    const std::string& split, const Dataset* train_data) {
    if (n_episodes < 1) throw Error("evaluate: n_episodes must be >= 1");
    if (split != "seen" && split != "unseen")
        throw Error("evaluate: split must be 'seen' or 'unseen'");
    if (split == "seen" && (!train_data || train_data->size() < 1))
        throw Error("evaluate: seen split requires the training dataset");

    std::vector<EpisodeRecord> records(static_cast<std::size_t>(n_episodes));
    parallel_for(static_cast<std::size_t>(n_episodes), [&](std::size_t e) {
        if (split == "seen") {
            const Trajectory& tr =
                train_data->trajectories[e % static_cast<std::size_t>(train_data->size())];
            EnvState init = EnvState::from_observation(spec, tr.states.row(0).transpose());
            records[e] = rollout_from(policy, spec, init,
                                      hash_combine(hash_combine(spec.seed, 0x5ee2ull), e));
        } else {
            Rng rng(hash_combine(hash_combine(spec.seed, 0xf2e5ull), e));
            EnvState init = sample_initial_state(spec, rng);
            records[e] = rollout_from(policy, spec, init,
                                      hash_combine(hash_combine(spec.seed, 0x0dd5ull), e));
        }
    });

    EvalReport report;
    report.split = split;
    report.n = n_episodes;
    double success = 0.0;
    for (const auto& label : spec.expected_events()) {
        double rate = 0.0;
        for (const auto& r : records) rate += r.tracker.flag(label) ? 1.0 : 0.0;
        report.subtask_rates.emplace_back(label, rate / n_episodes);
    }
    for (const auto& r : records) success += r.success ? 1.0 : 0.0;
    report.task_success = success / n_episodes;
    return report;
}

// ---------------------------------------------------------------------------
// serialization

std::string PolicyModel::serialize(const std::string& config_hash) const {
    std::string out = "MAXMI-POLICY v1 Q=" + std::to_string(q) + " A=" + std::to_string(a) +
                      " K=" + std::to_string(k) + " HIDDEN=";
    for (std::size_t i = 0; i < hidden.size(); ++i) {
        if (i) out += ',';
        out += std::to_string(hidden[static_cast<std::size_t>(i)]);
    }
    out += '\n';
    if (!config_hash.empty()) out += "# config_hash=" + config_hash + "\n";
    auto put_mat = [&](const std::string& name, const Mat& m) {
        out += name + " " + std::to_string(m.rows()) + " " + std::to_string(m.cols()) + "\n";
        for (int r = 0; r < m.rows(); ++r) {
            for (int c = 0; c < m.cols(); ++c) {
                if (c) out += ' ';
                out += format_double(m(r, c));
            }
            out += '\n';
        }
    };
    auto put_vec = [&](const std::string& name, const Vec& v) {
        out += name + " " + std::to_string(v.size()) + "\n";
        for (int i = 0; i < v.size(); ++i) {
            if (i) out += ' ';
            out += format_double(v[i]);
        }
        out += '\n';
    };
    for (std::size_t l = 0; l < trunk_w.size(); ++l) {
        put_mat("TRUNK" + std::to_string(l) + "_W", trunk_w[l]);
        put_vec("TRUNK" + std::to_string(l) + "_B", trunk_b[l]);
    }
    put_mat("ACTION_W", action_w);
    put_vec("ACTION_B", action_b);
    for (std::size_t c = 0; c < key_w.size(); ++c) {
        put_mat("KEY" + std::to_string(c) + "_W", key_w[c]);
        put_vec("KEY" + std::to_string(c) + "_B", key_b[c]);
    }
    return out;
}

PolicyModel PolicyModel::deserialize(const std::string& content) {
    std::istringstream in(content);
    std::string line;
    if (!std::getline(in, line)) throw ParseError("policy file: empty");
    std::istringstream head(line);
    std::string magic, version, qs, as, ks, hs;
    head >> magic >> version >> qs >> as >> ks >> hs;
    if (magic != "MAXMI-POLICY" || version != "v1")
        throw ParseError("policy file: bad header '" + line + "'");
    auto kv_int = [](const std::string& tok, const char* key) {
        std::string prefix = std::string(key) + "=";
        if (tok.rfind(prefix, 0) != 0) throw ParseError("policy file: expected " + prefix);
        return std::atoi(tok.c_str() + prefix.size());
    };
    PolicyModel m;
    m.q = kv_int(qs, "Q");
    m.a = kv_int(as, "A");
    m.k = kv_int(ks, "K");
    if (hs.rfind("HIDDEN=", 0) != 0) throw ParseError("policy file: expected HIDDEN=");
    std::istringstream hss(hs.substr(7));
    std::string tok;
    while (std::getline(hss, tok, ',')) m.hidden.push_back(std::atoi(tok.c_str()));

    while (in.peek() == '#') std::getline(in, line);  // metadata comment lines

    auto get_mat = [&](Mat& dst) {
        std::string name;
        int rows, cols;
        if (!(in >> name >> rows >> cols)) throw ParseError("policy file: truncated block header");
        dst.resize(rows, cols);
        for (int r = 0; r < rows; ++r)
            for (int c = 0; c < cols; ++c)
                if (!(in >> dst(r, c))) throw ParseError("policy file: truncated matrix " + name);
    };
    auto get_vec = [&](Vec& dst) {
        std::string name;
        int size;
        if (!(in >> name >> size)) throw ParseError("policy file: truncated block header");
        dst.resize(size);
        for (int i = 0; i < size; ++i)
            if (!(in >> dst[i])) throw ParseError("policy file: truncated vector " + name);
    };
    int fan_in = m.q;
    for (int h : m.hidden) {
        Mat w;
        Vec b;
        get_mat(w);
        get_vec(b);
        if (w.rows() != h || w.cols() != fan_in) throw ParseError("policy file: trunk shape");
        m.trunk_w.push_back(std::move(w));
        m.trunk_b.push_back(std::move(b));
        fan_in = h;
    }
    get_mat(m.action_w);
    get_vec(m.action_b);
    for (int c = 0; c < m.k; ++c) {
        Mat w;
        Vec b;
        get_mat(w);
        get_vec(b);
        m.key_w.push_back(std::move(w));
        m.key_b.push_back(std::move(b));
    }
    return m;
}

}  // namespace maxmi
