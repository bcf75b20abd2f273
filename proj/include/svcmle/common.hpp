#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstddef>
#include <cstdlib>
#include <exception>
#include <functional>
#include <mutex>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace svcmle {

using Index = Eigen::Index;
using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

// Locations are stored row-wise: one row per site, one column per coordinate.
using Locations = Eigen::MatrixXd;

// Base class of every error this library throws on purpose.
class SvcError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class InvalidArgument : public SvcError {
public:
    using SvcError::SvcError;
};

class DimensionMismatch : public SvcError {
public:
    using SvcError::SvcError;
};

class NotPositiveDefinite : public SvcError {
public:
    using SvcError::SvcError;
};

class SingularGram : public SvcError {
public:
    using SvcError::SvcError;
};

namespace detail {

inline std::atomic<int>& thread_setting()
{
    static std::atomic<int> threads{0};
    return threads;
}

inline thread_local bool inside_parallel_region = false;

} // namespace detail

// Number of worker threads used by parallel_for. 0 means hardware concurrency.
inline void set_num_threads(int n) { detail::thread_setting().store(std::max(0, n)); }

inline int num_threads()
{
    int n = detail::thread_setting().load();
    if (n <= 0) {
        n = static_cast<int>(std::thread::hardware_concurrency());
    }
    return std::max(1, n);
}

// Runs body(i) for i in [0, count). Every index is executed exactly once and
// writes only to its own output slot, so results do not depend on the thread
// count. Nested calls run serially on the calling thread. The first exception
// (lowest index) is rethrown after all workers join.
inline void parallel_for(Index count, const std::function<void(Index)>& body)
{
    if (count <= 0) {
        return;
    }
    const int workers = static_cast<int>(std::min<Index>(num_threads(), count));
    if (workers <= 1 || detail::inside_parallel_region) {
        for (Index i = 0; i < count; ++i) {
            body(i);
        }
        return;
    }

    std::atomic<Index> next{0};
    std::vector<std::exception_ptr> errors(static_cast<std::size_t>(count));
    auto worker = [&]() {
        detail::inside_parallel_region = true;
        for (Index i = next.fetch_add(1); i < count; i = next.fetch_add(1)) {
            try {
                body(i);
            } catch (...) {
                errors[static_cast<std::size_t>(i)] = std::current_exception();
            }
        }
        detail::inside_parallel_region = false;
    };
    {
        std::vector<std::jthread> pool;
        pool.reserve(static_cast<std::size_t>(workers));
        for (int w = 0; w < workers; ++w) {
            pool.emplace_back(worker);
        }
    }
    for (auto& e : errors) {
        if (e) {
            std::rethrow_exception(e);
        }
    }
}

inline double squared_distance(const Locations& a, Index i, const Locations& b, Index j)
{
    double s = 0.0;
    for (Index c = 0; c < a.cols(); ++c) {
        const double d = a(i, c) - b(j, c);
        s += d * d;
    }
    return s;
}

inline double distance(const Locations& a, Index i, const Locations& b, Index j)
{
    return std::sqrt(squared_distance(a, i, b, j));
}

} // namespace svcmle
