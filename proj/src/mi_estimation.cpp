#include "maxmi/mi_estimation.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdlib>
#include <limits>
#include <sstream>
#include <unordered_map>

#include "maxmi/rng.hpp"

namespace maxmi {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

inline double max_norm(const double* a, const double* b, int d) {
    double m = 0.0;
    for (int i = 0; i < d; ++i) {
        double v = std::abs(a[i] - b[i]);
        if (v > m) m = v;
    }
    return m;
}

}  // namespace

void SamplePairs::validate() const {
    if (xs.rows() != ys.rows()) throw EstimatorError("sample pairs: row count mismatch");
    if (xs.rows() < 8) throw EstimatorError("sample pairs: too few samples (need >= 8)");
    if (xs.cols() < 1 || ys.cols() < 1) throw EstimatorError("sample pairs: empty dimension");
    if (!xs.allFinite() || !ys.allFinite())
        throw EstimatorError("sample pairs: non-finite entries");
}

void MIEstimatorConfig::validate() const {
    if (k_neighbors < 1) throw ConfigError("estimator: k_neighbors must be >= 1");
    if (bins_per_dim < 2) throw ConfigError("estimator: bins_per_dim must be >= 2");
    if (!(jitter_sd >= 0.0)) throw ConfigError("estimator: jitter_sd must be >= 0");
}

MIEstimatorConfig::Method parse_estimator_method(const std::string& name) {
    if (name == "ksg") return MIEstimatorConfig::Method::ksg;
    if (name == "binned") return MIEstimatorConfig::Method::binned;
    if (name == "gaussian_copula") return MIEstimatorConfig::Method::gaussian_copula;
    throw ConfigError("unknown estimator method '" + name + "'");
}

std::string estimator_method_name(MIEstimatorConfig::Method m) {
    switch (m) {
        case MIEstimatorConfig::Method::ksg: return "ksg";
        case MIEstimatorConfig::Method::binned: return "binned";
        case MIEstimatorConfig::Method::gaussian_copula: return "gaussian_copula";
    }
    return "?";
}

void apply_ksg_jitter(Mat& m, int side, double jitter_sd) {
    if (jitter_sd <= 0.0) return;
    for (int i = 0; i < m.rows(); ++i)
        for (int d = 0; d < m.cols(); ++d)
            m(i, d) += jitter_sd * hashed_gaussian(static_cast<std::uint64_t>(i),
                                                   static_cast<std::uint64_t>(d),
                                                   static_cast<std::uint64_t>(side));
}

// ---------------------------------------------------------------------------
// KSG (Kraskov variant 1)

KsgIncremental::KsgIncremental(Mat x_jittered, Mat y_jittered, int k)
    : n_(static_cast<int>(x_jittered.rows())),
      k_(k),
      x_(std::move(x_jittered)),
      y_(std::move(y_jittered)) {
    if (k_ < 1 || k_ > n_ - 1)
        throw EstimatorError("ksg: k_neighbors must be in [1, N-1], got k=" + std::to_string(k_) +
                             ", N=" + std::to_string(n_));
    const int dxdim = static_cast<int>(x_.cols());
    const int dydim = static_cast<int>(y_.cols());
    dx_.setConstant(n_, n_, kInf);
    dy_.setConstant(n_, n_, kInf);
    dz_.setConstant(n_, n_, kInf);
    for (int j = 0; j < n_; ++j) {
        const double* xj = x_.row(j).data();
        const double* yj = y_.row(j).data();
        for (int l = j + 1; l < n_; ++l) {
            double a = max_norm(xj, x_.row(l).data(), dxdim);
            double b = max_norm(yj, y_.row(l).data(), dydim);
            double z = std::max(a, b);
            dx_(j, l) = dx_(l, j) = a;
            dy_(j, l) = dy_(l, j) = b;
            dz_(j, l) = dz_(l, j) = z;
        }
    }
}

double KsgIncremental::estimate() const {
    std::vector<double> buf(static_cast<std::size_t>(n_));
    double sum = 0.0;
    for (int j = 0; j < n_; ++j) {
        const double* dzr = dz_.row(j).data();
        std::copy(dzr, dzr + n_, buf.begin());
        std::nth_element(buf.begin(), buf.begin() + (k_ - 1), buf.end());
        const double eps = buf[static_cast<std::size_t>(k_ - 1)];
        const double* dxr = dx_.row(j).data();
        const double* dyr = dy_.row(j).data();
        int nx = 0, ny = 0;
        for (int l = 0; l < n_; ++l) {
            nx += dxr[l] < eps;
            ny += dyr[l] < eps;
        }
        sum += digamma_int(nx + 1) + digamma_int(ny + 1);
    }
    return digamma_int(k_) + digamma_int(n_) - sum / static_cast<double>(n_);
}

void KsgIncremental::begin_row_trials(int i) {
    trial_i_ = i;
    base_kth_.assign(static_cast<std::size_t>(n_), 0.0);
    base_km1_.assign(static_cast<std::size_t>(n_), 0.0);
    base_nx_.assign(static_cast<std::size_t>(n_), 0);
    base_ny_.assign(static_cast<std::size_t>(n_), 0);

    std::vector<double> buf(static_cast<std::size_t>(n_));
    for (int j = 0; j < n_; ++j) {
        if (j == i) continue;
        const double* dzr = dz_.row(j).data();
        std::copy(dzr, dzr + n_, buf.begin());
        buf[static_cast<std::size_t>(i)] = kInf;  // exclude the trial row
        std::nth_element(buf.begin(), buf.begin() + (k_ - 1), buf.end());
        const double kth = buf[static_cast<std::size_t>(k_ - 1)];
        base_kth_[static_cast<std::size_t>(j)] = kth;
        if (k_ >= 2) {
            std::nth_element(buf.begin(), buf.begin() + (k_ - 2), buf.begin() + (k_ - 1));
            base_km1_[static_cast<std::size_t>(j)] = buf[static_cast<std::size_t>(k_ - 2)];
        }
        const double* dxr = dx_.row(j).data();
        const double* dyr = dy_.row(j).data();
        int nx = 0, ny = 0;
        for (int l = 0; l < n_; ++l) {
            if (l == i) continue;
            nx += dxr[l] < kth;
            ny += dyr[l] < kth;
        }
        base_nx_[static_cast<std::size_t>(j)] = nx;
        base_ny_[static_cast<std::size_t>(j)] = ny;
    }
}

double KsgIncremental::trial(const double* x_row, const double* y_row) const {
    const int i = trial_i_;
    if (i < 0) throw EstimatorError("ksg trial without begin_row_trials");
    const int dxdim = static_cast<int>(x_.cols());
    const int dydim = static_cast<int>(y_.cols());

    std::vector<double> dxi(static_cast<std::size_t>(n_));
    std::vector<double> dyi(static_cast<std::size_t>(n_));
    std::vector<double> dzi(static_cast<std::size_t>(n_));
    for (int l = 0; l < n_; ++l) {
        double a = max_norm(x_row, x_.row(l).data(), dxdim);
        double b = max_norm(y_row, y_.row(l).data(), dydim);
        dxi[static_cast<std::size_t>(l)] = a;
        dyi[static_cast<std::size_t>(l)] = b;
        dzi[static_cast<std::size_t>(l)] = std::max(a, b);
    }
    dxi[static_cast<std::size_t>(i)] = kInf;
    dyi[static_cast<std::size_t>(i)] = kInf;
    dzi[static_cast<std::size_t>(i)] = kInf;

    double sum = 0.0;
    std::vector<double> buf;
    for (int j = 0; j < n_; ++j) {
        if (j == i) {
            buf = dzi;
            std::nth_element(buf.begin(), buf.begin() + (k_ - 1), buf.end());
            const double eps = buf[static_cast<std::size_t>(k_ - 1)];
            int nx = 0, ny = 0;
            for (int l = 0; l < n_; ++l) {
                nx += dxi[static_cast<std::size_t>(l)] < eps;
                ny += dyi[static_cast<std::size_t>(l)] < eps;
            }
            sum += digamma_int(nx + 1) + digamma_int(ny + 1);
            continue;
        }
        const double v = dzi[static_cast<std::size_t>(j)];
        const double bkth = base_kth_[static_cast<std::size_t>(j)];
        double eps;
        if (k_ == 1)
            eps = std::min(bkth, v);
        else
            eps = (v >= bkth) ? bkth : std::max(base_km1_[static_cast<std::size_t>(j)], v);

        int nx, ny;
        if (eps == bkth) {
            nx = base_nx_[static_cast<std::size_t>(j)] + (dxi[static_cast<std::size_t>(j)] < eps);
            ny = base_ny_[static_cast<std::size_t>(j)] + (dyi[static_cast<std::size_t>(j)] < eps);
        } else {
            const double* dxr = dx_.row(j).data();
            const double* dyr = dy_.row(j).data();
            nx = ny = 0;
            for (int l = 0; l < n_; ++l) {
                if (l == i) continue;
                nx += dxr[l] < eps;
                ny += dyr[l] < eps;
            }
            nx += dxi[static_cast<std::size_t>(j)] < eps;
            ny += dyi[static_cast<std::size_t>(j)] < eps;
        }
        sum += digamma_int(nx + 1) + digamma_int(ny + 1);
    }
    return digamma_int(k_) + digamma_int(n_) - sum / static_cast<double>(n_);
}

void KsgIncremental::commit_row(const double* x_row, const double* y_row) {
    const int i = trial_i_;
    if (i < 0) throw EstimatorError("ksg commit without begin_row_trials");
    const int dxdim = static_cast<int>(x_.cols());
    const int dydim = static_cast<int>(y_.cols());
    for (int d = 0; d < dxdim; ++d) x_(i, d) = x_row[d];
    for (int d = 0; d < dydim; ++d) y_(i, d) = y_row[d];
    for (int l = 0; l < n_; ++l) {
        if (l == i) continue;
        double a = max_norm(x_.row(i).data(), x_.row(l).data(), dxdim);
        double b = max_norm(y_.row(i).data(), y_.row(l).data(), dydim);
        double z = std::max(a, b);
        dx_(i, l) = dx_(l, i) = a;
        dy_(i, l) = dy_(l, i) = b;
        dz_(i, l) = dz_(l, i) = z;
    }
    // base caches exclude row i entirely, so they remain valid
}

namespace {

double ksg_estimate(const SamplePairs& pairs, const MIEstimatorConfig& cfg) {
    for (int d = 0; d < pairs.xs.cols(); ++d)
        if (pairs.xs.col(d).minCoeff() == pairs.xs.col(d).maxCoeff())
            throw EstimatorError("ksg: degenerate constant column " + std::to_string(d) +
                                 " in X (all samples identical)");
    for (int d = 0; d < pairs.ys.cols(); ++d)
        if (pairs.ys.col(d).minCoeff() == pairs.ys.col(d).maxCoeff())
            throw EstimatorError("ksg: degenerate constant column " + std::to_string(d) +
                                 " in Y (all samples identical)");
    Mat x = pairs.xs;
    Mat y = pairs.ys;
    apply_ksg_jitter(x, 0, cfg.jitter_sd);
    apply_ksg_jitter(y, 1, cfg.jitter_sd);
    return KsgIncremental(std::move(x), std::move(y), cfg.k_neighbors).estimate();
}

double binned_estimate(const SamplePairs& pairs, const MIEstimatorConfig& cfg) {
    const int n = pairs.size();
    const int dx = static_cast<int>(pairs.xs.cols());
    const int dy = static_cast<int>(pairs.ys.cols());
    const int bins = cfg.bins_per_dim;
    const unsigned bits = std::bit_width(static_cast<unsigned>(bins - 1));
    if (bits * static_cast<unsigned>(dx + dy) > 64)
        throw EstimatorError("binned: too many dimensions for the grid encoding");

    auto bin_column = [&](const Mat& m, int col, std::vector<std::uint64_t>& cell, unsigned shift) {
        double lo = m.col(col).minCoeff();
        double hi = m.col(col).maxCoeff();
        double width = (hi - lo) / static_cast<double>(bins);
        for (int i = 0; i < n; ++i) {
            int b = 0;
            if (width > 0.0) {
                b = static_cast<int>((m(i, col) - lo) / width);
                if (b >= bins) b = bins - 1;
            }
            cell[static_cast<std::size_t>(i)] |= static_cast<std::uint64_t>(b) << shift;
        }
    };

    std::vector<std::uint64_t> cx(static_cast<std::size_t>(n), 0);
    std::vector<std::uint64_t> cy(static_cast<std::size_t>(n), 0);
    for (int d = 0; d < dx; ++d) bin_column(pairs.xs, d, cx, bits * static_cast<unsigned>(d));
    for (int d = 0; d < dy; ++d) bin_column(pairs.ys, d, cy, bits * static_cast<unsigned>(d));

    std::unordered_map<std::uint64_t, int> hx, hy;
    std::unordered_map<std::uint64_t, std::unordered_map<std::uint64_t, int>> hxy;
    for (int i = 0; i < n; ++i) {
        ++hx[cx[static_cast<std::size_t>(i)]];
        ++hy[cy[static_cast<std::size_t>(i)]];
        ++hxy[cx[static_cast<std::size_t>(i)]][cy[static_cast<std::size_t>(i)]];
    }
    double mi = 0.0;
    const double dn = static_cast<double>(n);
    for (const auto& [kx, row] : hxy)
        for (const auto& [ky, cnt] : row) {
            double pxy = cnt / dn;
            mi += pxy * std::log(pxy * dn * dn / (static_cast<double>(hx[kx]) * hy[ky]));
        }
    return mi;
}

// per-dimension normal scores; rank ties broken by row index (stable sort)
Mat normal_scores(const Mat& m) {
    const int n = static_cast<int>(m.rows());
    Mat z(n, m.cols());
    std::vector<int> order(static_cast<std::size_t>(n));
    for (int d = 0; d < m.cols(); ++d) {
        for (int i = 0; i < n; ++i) order[static_cast<std::size_t>(i)] = i;
        std::stable_sort(order.begin(), order.end(),
                         [&](int a, int b) { return m(a, d) < m(b, d); });
        for (int r = 0; r < n; ++r)
            z(order[static_cast<std::size_t>(r)], d) =
                inverse_normal_cdf(static_cast<double>(r + 1) / static_cast<double>(n + 1));
    }
    return z;
}

double logdet_correlation(const Eigen::MatrixXd& c, const char* what) {
    Eigen::LLT<Eigen::MatrixXd> llt(c);
    if (llt.info() != Eigen::Success)
        throw EstimatorError(std::string("gaussian_copula: singular correlation matrix (") + what +
                             "); input is degenerate");
    double ld = 0.0;
    const auto& l = llt.matrixLLT();
    for (int i = 0; i < c.rows(); ++i) ld += 2.0 * std::log(l(i, i));
    return ld;
}

double copula_estimate(const SamplePairs& pairs) {
    const int dx = static_cast<int>(pairs.xs.cols());
    const int dy = static_cast<int>(pairs.ys.cols());
    const int n = pairs.size();
    Mat z(n, dx + dy);
    z.leftCols(dx) = normal_scores(pairs.xs);
    z.rightCols(dy) = normal_scores(pairs.ys);

    Eigen::MatrixXd c = (z.transpose() * z) / static_cast<double>(n);
    Eigen::VectorXd sd = c.diagonal().array().sqrt();
    for (int a = 0; a < c.rows(); ++a)
        for (int b = 0; b < c.cols(); ++b) c(a, b) /= sd(a) * sd(b);

    double ld_joint = logdet_correlation(c, "joint");
    double ld_x = dx == 1 ? 0.0 : logdet_correlation(c.topLeftCorner(dx, dx), "X block");
    double ld_y = dy == 1 ? 0.0 : logdet_correlation(c.bottomRightCorner(dy, dy), "Y block");
    return -0.5 * (ld_joint - ld_x - ld_y);
}

}  // namespace

double estimate_mi(const SamplePairs& pairs, const MIEstimatorConfig& cfg) {
    pairs.validate();
    cfg.validate();
    switch (cfg.method) {
        case MIEstimatorConfig::Method::ksg: return ksg_estimate(pairs, cfg);
        case MIEstimatorConfig::Method::binned: return binned_estimate(pairs, cfg);
        case MIEstimatorConfig::Method::gaussian_copula: return copula_estimate(pairs);
    }
    throw EstimatorError("unreachable estimator method");
}

// ---------------------------------------------------------------------------
// MI profile along the normalized time axis

MIProfile mi_profile(const NormalizedDataset& nd, int delta_t, const MIEstimatorConfig& cfg) {
    const int t_len = nd.T;
    if (delta_t < 1 || delta_t >= t_len)
        throw ConfigError("mi_profile: delta_t must be in [1, T-1]");
    const int n = nd.size();
    const int q = nd.state_dim();

    MIProfile profile;
    profile.delta_t = delta_t;
    profile.values.assign(static_cast<std::size_t>(t_len - delta_t), 0.0);

    parallel_for(profile.values.size(), [&](std::size_t idx) {
        const int t = delta_t + static_cast<int>(idx);
        SamplePairs pairs;
        pairs.xs.resize(n, q);
        pairs.ys.resize(n, q);
        for (int i = 0; i < n; ++i) {
            pairs.xs.row(i) = nd.states[static_cast<std::size_t>(i)].row(t);
            pairs.ys.row(i) = nd.states[static_cast<std::size_t>(i)].row(t - delta_t);
        }
        try {
            profile.values[idx] = estimate_mi(pairs, cfg);
        } catch (const EstimatorError& e) {
            throw EstimatorError("mi_profile at t=" + std::to_string(t) + ": " + e.what());
        }
    });
    return profile;
}

std::string MIProfile::to_csv(const std::string& config_hash) const {
    std::string out;
    if (!config_hash.empty()) out += "# config_hash=" + config_hash + "\n";
    out += "t,mi_nats\n";
    for (std::size_t i = 0; i < values.size(); ++i)
        out += std::to_string(t_at(i)) + "," + format_double(values[i]) + "\n";
    return out;
}

MIProfile profile_from_csv(const std::string& content) {
    std::istringstream in(content);
    std::string line;
    MIProfile p;
    bool saw_header = false;
    bool first_row = true;
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#') continue;
        if (!saw_header) {
            if (line != "t,mi_nats") throw ParseError("profile csv: bad header '" + line + "'");
            saw_header = true;
            continue;
        }
        auto comma = line.find(',');
        if (comma == std::string::npos) throw ParseError("profile csv: bad row '" + line + "'");
        int t = std::atoi(line.substr(0, comma).c_str());
        double v = std::strtod(line.c_str() + comma + 1, nullptr);
        if (first_row) {
            p.delta_t = t;
            first_row = false;
        }
        p.values.push_back(v);
    }
    if (!saw_header || p.values.empty()) throw ParseError("profile csv: no data rows");
    return p;
}

}  // namespace maxmi
