#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <functional>
#include <mutex>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace maxmi {

// Row-major throughout: a state matrix row is one time step.
using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vec = Eigen::VectorXd;

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct ParseError : Error {
    using Error::Error;
};
struct ConfigError : Error {
    using Error::Error;
};
struct EstimatorError : Error {
    using Error::Error;
};
struct IoError : Error {
    using Error::Error;
};

/// Run fn(i) for i in [0, n). Work is split into contiguous chunks so
/// writes to per-index output slots are race-free; results are identical
/// to serial execution regardless of worker count.
inline void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn) {
    unsigned hw = std::thread::hardware_concurrency();
    std::size_t workers = std::max(1u, hw);
    if (workers <= 1 || n < 4) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    workers = std::min<std::size_t>(workers, n);
    std::vector<std::thread> pool;
    pool.reserve(workers);
    std::exception_ptr first_error;
    std::mutex err_mu;
    for (std::size_t w = 0; w < workers; ++w) {
        std::size_t lo = n * w / workers;
        std::size_t hi = n * (w + 1) / workers;
        pool.emplace_back([&, lo, hi] {
            try {
                for (std::size_t i = lo; i < hi; ++i) fn(i);
            } catch (...) {
                std::lock_guard<std::mutex> g(err_mu);
                if (!first_error) first_error = std::current_exception();
            }
        });
    }
    for (auto& t : pool) t.join();
    if (first_error) std::rethrow_exception(first_error);
}

/// Digamma at positive integer n: psi(n) = -gamma + H_{n-1}.
inline double digamma_int(std::int64_t n) {
    constexpr double euler_gamma = 0.57721566490153286060651209008;
    if (n < 1) throw EstimatorError("digamma_int: argument must be >= 1");
    if (n < 64) {
        double h = 0.0;
        for (std::int64_t m = 1; m < n; ++m) h += 1.0 / static_cast<double>(m);
        return -euler_gamma + h;
    }
    // asymptotic expansion, exact enough for the sample counts we see
    double x = static_cast<double>(n);
    double inv = 1.0 / x;
    double inv2 = inv * inv;
    return std::log(x) - 0.5 * inv - inv2 * (1.0 / 12.0 - inv2 * (1.0 / 120.0 - inv2 / 252.0));
}

/// Inverse standard normal CDF (Acklam's rational approximation with one
/// Halley refinement against std::erfc; ~1e-15 accurate on (0,1)).
double inverse_normal_cdf(double p);

/// FNV-1a 64-bit over bytes; the config-hash primitive.
inline std::uint64_t fnv1a64(const std::string& bytes) {
    std::uint64_t h = 1469598103934665603ull;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

std::string hex64(std::uint64_t v);

/// Shortest decimal rendering that round-trips a double exactly.
std::string format_double(double v);

/// Write content to path atomically (temp file + rename).
void atomic_write(const std::string& path, const std::string& content);

std::string read_file(const std::string& path);

}  // namespace maxmi
