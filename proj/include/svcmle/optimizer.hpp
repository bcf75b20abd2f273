#pragma once

#include "likelihood.hpp"

#include <deque>
#include <limits>
#include <mutex>
#include <random>

namespace svcmle {

enum class FdScheme { forward, central };
enum class FitMode { profile, joint };
enum class ParamSpace { log, box };

struct OptimizerConfig {
    Index max_iterations = 500;
    double gradient_tolerance = 1e-5;
    double objective_tolerance = 1e-9;
    FdScheme fd_scheme = FdScheme::central;
    double fd_step = 1e-6;
    Index history = 10;
    Index starts = 1;
    std::uint64_t seed = 0;
    FitMode mode = FitMode::profile;
    ParamSpace space = ParamSpace::log;
    // Lower bound of the raw parameters in box mode. In log mode variances
    // and the nugget are floored at box_lower times their initial value.
    double box_lower = 1e-10;
    // Largest coordinate change of the first trial point of a line search.
    double max_step = 2.0;
    Index max_line_search = 30;
    // Consecutive iterations within objective_tolerance before giving up.
    Index stall_iterations = 10;

    void validate() const
    {
        if (max_iterations < 1 || history < 1 || starts < 1 || max_line_search < 1 || stall_iterations < 1) {
            throw InvalidArgument("optimizer: iteration counts must be positive");
        }
        auto in_unit = [](double v) { return v > 0.0 && v < 1.0; };
        if (!in_unit(gradient_tolerance) || !in_unit(objective_tolerance) || !in_unit(fd_step)) {
            throw InvalidArgument("optimizer: tolerances and the finite-difference step must lie in (0, 1)");
        }
        if (!(box_lower > 0.0) || !(max_step > 0.0)) {
            throw InvalidArgument("optimizer: box lower bound and step cap must be positive");
        }
    }
};

struct TraceRow {
    Index iteration = 0;
    double objective = 0.0;
    double step = 0.0;
    double gradient_norm = 0.0;
};

using ObjectiveFn = std::function<double(const Vector&)>;

// Finite-difference gradient. The 2n (central) or n (forward) stencil points
// are evaluated concurrently and combined in index order. `lower`, when
// given, switches coordinates whose backward point would leave the box to a
// forward difference. A one-sided difference is also used when one side of a
// central stencil is not finite.
inline Vector fd_gradient(const ObjectiveFn& f, const Vector& x, double fx, FdScheme scheme, const Vector& steps,
                          const Vector* lower = nullptr)
{
    const Index n = x.size();
    std::vector<double> plus(static_cast<std::size_t>(n)), minus(static_cast<std::size_t>(n),
                                                                 std::numeric_limits<double>::quiet_NaN());
    std::vector<char> two_sided(static_cast<std::size_t>(n), 0);
    for (Index i = 0; i < n; ++i) {
        two_sided[i] = scheme == FdScheme::central && !(lower && x[i] - steps[i] < (*lower)[i]);
    }
    parallel_for(2 * n, [&](Index k) {
        const Index i = k / 2;
        const bool backward = (k % 2) == 1;
        if (backward && !two_sided[i]) {
            return;
        }
        Vector xs = x;
        if (backward) {
            xs[i] -= steps[i];
            minus[i] = f(xs);
        } else {
            xs[i] += steps[i];
            plus[i] = f(xs);
        }
    });
    Vector g(n);
    for (Index i = 0; i < n; ++i) {
        const double h = steps[i];
        const bool fp = std::isfinite(plus[i]);
        const bool fm = std::isfinite(minus[i]);
        if (two_sided[i] && fp && fm) {
            g[i] = (plus[i] - minus[i]) / (2.0 * h);
        } else if (fp) {
            g[i] = (plus[i] - fx) / h;
        } else if (two_sided[i] && fm) {
            g[i] = (fx - minus[i]) / h;
        } else {
            g[i] = std::numeric_limits<double>::quiet_NaN();
        }
    }
    return g;
}

inline Vector fd_gradient(const ObjectiveFn& f, const Vector& x, double fx, FdScheme scheme, double step)
{
    return fd_gradient(f, x, fx, scheme, Vector::Constant(x.size(), step));
}

struct MinimizeResult {
    Vector x;
    double f = std::numeric_limits<double>::infinity();
    Vector g;
    double gradient_norm = std::numeric_limits<double>::infinity();
    bool converged = false;
    Index iterations = 0;
    std::string message;
    std::vector<TraceRow> trace;
};

namespace detail {

class LbfgsMemory {
public:
    explicit LbfgsMemory(Index capacity) : capacity_(capacity) {}

    void clear() { pairs_.clear(); }
    bool empty() const { return pairs_.empty(); }

    void push(const Vector& s, const Vector& y)
    {
        const double sy = s.dot(y);
        if (!(sy > 1e-12 * s.norm() * y.norm())) {
            return;
        }
        pairs_.push_back({s, y, 1.0 / sy});
        if (static_cast<Index>(pairs_.size()) > capacity_) {
            pairs_.pop_front();
        }
    }

    // -H g via the two-loop recursion; `mask` zeroes fixed coordinates.
    Vector direction(const Vector& g, const std::vector<char>* fixed = nullptr) const
    {
        auto apply_mask = [&](Vector& v) {
            if (fixed) {
                for (Index i = 0; i < v.size(); ++i) {
                    if ((*fixed)[i]) {
                        v[i] = 0.0;
                    }
                }
            }
        };
        Vector q = g;
        apply_mask(q);
        std::vector<double> alpha(pairs_.size());
        for (std::size_t k = pairs_.size(); k-- > 0;) {
            Vector s = pairs_[k].s, y = pairs_[k].y;
            apply_mask(s);
            apply_mask(y);
            alpha[k] = pairs_[k].rho * s.dot(q);
            q -= alpha[k] * y;
        }
        if (!pairs_.empty()) {
            const auto& last = pairs_.back();
            q *= last.s.dot(last.y) / last.y.squaredNorm();
        }
        for (std::size_t k = 0; k < pairs_.size(); ++k) {
            Vector s = pairs_[k].s, y = pairs_[k].y;
            apply_mask(s);
            apply_mask(y);
            const double beta = pairs_[k].rho * y.dot(q);
            q += (alpha[k] - beta) * s;
        }
        apply_mask(q);
        return -q;
    }

private:
    struct Pair {
        Vector s, y;
        double rho;
    };
    Index capacity_;
    std::deque<Pair> pairs_;
};

struct Probe {
    double alpha = 0.0;
    double f = 0.0;
    Vector g;
    double dg = 0.0;
};

// Line search for the strong Wolfe conditions (bracketing followed by
// zoom with safeguarded quadratic interpolation). Gradients are only
// computed at points that pass the sufficient-decrease test.
template <typename Value, typename Grad>
std::optional<Probe> strong_wolfe(const Vector& x, double f0, const Vector& g0, const Vector& d, double alpha0,
                                  double alpha_max, Index budget, Value&& value, Grad&& grad)
{
    constexpr double c1 = 1e-4;
    constexpr double c2 = 0.9;
    const double dg0 = g0.dot(d);
    Index used = 0;

    auto evaluate_f = [&](double a) {
        ++used;
        const double v = value(Vector(x + a * d));
        return std::isfinite(v) ? v : std::numeric_limits<double>::infinity();
    };
    auto evaluate_g = [&](Probe& p) {
        p.g = grad(Vector(x + p.alpha * d), p.f);
        p.dg = p.g.dot(d);
        return p.g.allFinite();
    };

    auto zoom = [&](Probe lo, Probe hi) -> std::optional<Probe> {
        std::optional<Probe> best;
        if (lo.alpha > 0.0) {
            best = lo;
        }
        while (used < budget) {
            const double width = hi.alpha - lo.alpha;
            double a = 0.5 * (lo.alpha + hi.alpha);
            if (std::isfinite(hi.f)) {
                // minimizer of the quadratic through f(lo), f'(lo), f(hi)
                const double denom = 2.0 * (hi.f - lo.f - lo.dg * width);
                if (denom > 0.0) {
                    a = lo.alpha - lo.dg * width * width / denom;
                }
            }
            const double lo_edge = std::min(lo.alpha, hi.alpha) + 0.1 * std::abs(width);
            const double hi_edge = std::max(lo.alpha, hi.alpha) - 0.1 * std::abs(width);
            a = std::clamp(a, lo_edge, hi_edge);
            Probe p;
            p.alpha = a;
            p.f = evaluate_f(a);
            if (p.f > f0 + c1 * a * dg0 || p.f >= lo.f) {
                hi = p;
                hi.dg = 0.0;
                continue;
            }
            if (!evaluate_g(p)) {
                hi = p;
                continue;
            }
            if (std::abs(p.dg) <= -c2 * dg0) {
                return p;
            }
            if (p.dg * (hi.alpha - lo.alpha) >= 0.0) {
                hi = lo;
            }
            lo = p;
            best = p;
        }
        return best;
    };

    Probe prev;
    prev.alpha = 0.0;
    prev.f = f0;
    prev.g = g0;
    prev.dg = dg0;
    double a = alpha0;
    for (Index i = 0; used < budget; ++i) {
        Probe p;
        p.alpha = a;
        p.f = evaluate_f(a);
        if (p.f > f0 + c1 * a * dg0 || (i > 0 && p.f >= prev.f)) {
            return zoom(prev, p);
        }
        if (!evaluate_g(p)) {
            return zoom(prev, p);
        }
        if (std::abs(p.dg) <= -c2 * dg0) {
            return p;
        }
        if (p.dg >= 0.0) {
            return zoom(p, prev);
        }
        if (a >= alpha_max) {
            return p;
        }
        prev = p;
        a = std::min(2.0 * a, alpha_max);
    }
    return std::nullopt;
}

inline bool stalled(double f_old, double f_new, double tol)
{
    return std::abs(f_old - f_new) <= tol * std::max({std::abs(f_old), std::abs(f_new), 1.0});
}

} // namespace detail

// Limited-memory BFGS with finite-difference gradients and optional lower
// bounds. Coordinates sitting on their bound with the gradient pointing out
// of the feasible set are held fixed; the others follow the two-loop
// direction, and the strong-Wolfe search never steps past a bound. Converged
// means the inf-norm of the projected gradient reached the tolerance.
inline MinimizeResult minimize_lbfgs(const ObjectiveFn& f, const Vector& x0, const OptimizerConfig& cfg,
                                     const Vector& fd_steps, const Vector* lower = nullptr)
{
    MinimizeResult out;
    const Index n = x0.size();
    auto grad = [&](const Vector& x, double fx) { return fd_gradient(f, x, fx, cfg.fd_scheme, fd_steps, lower); };
    auto pinned = [&](const Vector& x, const Vector& g, Index i) {
        return lower && x[i] <= (*lower)[i] && g[i] > 0.0;
    };
    auto projected_norm = [&](const Vector& x, const Vector& g) {
        if (!g.allFinite()) {
            return std::numeric_limits<double>::infinity();
        }
        double m = 0.0;
        for (Index i = 0; i < n; ++i) {
            m = std::max(m, pinned(x, g, i) ? 0.0 : std::abs(g[i]));
        }
        return m;
    };

    Vector x = lower ? Vector(x0.cwiseMax(*lower)) : x0;
    double fx = f(x);
    if (!std::isfinite(fx)) {
        out.x = x;
        out.message = "objective is not finite at the starting point";
        return out;
    }
    Vector g = grad(x, fx);
    detail::LbfgsMemory memory(cfg.history);
    Index stall_count = 0;
    out.trace.push_back({0, fx, 0.0, projected_norm(x, g)});

    Index iter = 0;
    std::string message = "maximum iterations reached";
    while (true) {
        if (!g.allFinite()) {
            message = "gradient is not finite";
            break;
        }
        if (projected_norm(x, g) <= cfg.gradient_tolerance) {
            message = "gradient tolerance reached";
            break;
        }
        if (iter >= cfg.max_iterations) {
            break;
        }
        std::vector<char> fixed(static_cast<std::size_t>(n), 0);
        for (Index i = 0; i < n; ++i) {
            fixed[i] = pinned(x, g, i);
        }
        // Direction restricted to free coordinates; a coordinate on its bound
        // that the direction would push outward is fixed as well.
        auto search_direction = [&](bool steepest) {
            Vector d = steepest ? Vector(-g) : memory.direction(g, &fixed);
            for (Index i = 0; i < n; ++i) {
                if (fixed[i] || (lower && x[i] <= (*lower)[i] && d[i] < 0.0)) {
                    d[i] = 0.0;
                }
            }
            return d;
        };
        auto line_search = [&](const Vector& d) -> std::optional<detail::Probe> {
            double bound = std::numeric_limits<double>::infinity();
            if (lower) {
                for (Index i = 0; i < n; ++i) {
                    if (d[i] < 0.0) {
                        bound = std::min(bound, ((*lower)[i] - x[i]) / d[i]);
                    }
                }
            }
            const double a0 = std::min({1.0, cfg.max_step / d.lpNorm<Eigen::Infinity>(), bound});
            if (!(a0 > 0.0)) {
                return std::nullopt;
            }
            const double a_max = std::min(20.0 * a0, bound);
            auto value = [&](const Vector& y) { return f(lower ? Vector(y.cwiseMax(*lower)) : y); };
            auto gradient = [&](const Vector& y, double fy) {
                return grad(lower ? Vector(y.cwiseMax(*lower)) : y, fy);
            };
            return detail::strong_wolfe(x, fx, g, d, a0, a_max, cfg.max_line_search, value, gradient);
        };

        Vector d = search_direction(false);
        if (!(g.dot(d) < 0.0)) {
            memory.clear();
            d = search_direction(true);
        }
        std::optional<detail::Probe> probe;
        if (g.dot(d) < 0.0) {
            probe = line_search(d);
            if (!probe && !memory.empty()) {
                memory.clear();
                d = search_direction(true);
                if (g.dot(d) < 0.0) {
                    probe = line_search(d);
                }
            }
        }
        if (!probe) {
            message = "line search failed";
            break;
        }
        ++iter;
        Vector x_new = x + probe->alpha * d;
        if (lower) {
            x_new = x_new.cwiseMax(*lower);
        }
        memory.push(x_new - x, probe->g - g);
        const double f_old = fx;
        x = x_new;
        fx = probe->f;
        g = probe->g;
        out.trace.push_back({iter, fx, probe->alpha, projected_norm(x, g)});
        stall_count = detail::stalled(f_old, fx, cfg.objective_tolerance) ? stall_count + 1 : 0;
        if (stall_count >= cfg.stall_iterations) {
            message = "objective stalled";
            break;
        }
    }
    out.x = x;
    out.f = fx;
    out.g = g;
    out.gradient_norm = projected_norm(x, g);
    out.converged = out.gradient_norm <= cfg.gradient_tolerance;
    out.iterations = iter;
    out.message = out.converged ? "gradient tolerance reached" : message;
    return out;
}

// Largest pairwise distance between locations.
inline double domain_diameter(const Locations& locs)
{
    double best = 0.0;
    for (Index i = 0; i < locs.rows(); ++i) {
        for (Index j = i + 1; j < locs.rows(); ++j) {
            best = std::max(best, squared_distance(locs, i, locs, j));
        }
    }
    return std::sqrt(best);
}

// Ranges at a quarter of the domain diameter; the sample variance of y
// (n - 1 denominator) split equally over the p processes and the nugget.
inline CovParams default_init(const SvcDataset& d, double nu = 0.5)
{
    d.check_shape();
    double rho = domain_diameter(d.locations) / 4.0;
    if (!(rho > 0.0)) {
        rho = 1.0;
    }
    double var = 0.0;
    if (d.n() > 1) {
        var = (d.y.array() - d.y.mean()).square().sum() / static_cast<double>(d.n() - 1);
    }
    if (!(var > 0.0) || !std::isfinite(var)) {
        var = 1.0;
    }
    const double share = var / static_cast<double>(d.p() + 1);
    return CovParams::uniform(d.p(), rho, share, share, nu);
}

namespace detail {

inline CovParams theta_from(const Vector& x, Index p, const std::vector<double>& nu, ParamSpace space)
{
    if (space == ParamSpace::log) {
        return unpack(ParamVector{x.head(2 * p + 1)}, p, nu);
    }
    CovParams theta;
    theta.svc.resize(static_cast<std::size_t>(p));
    for (Index j = 0; j < p; ++j) {
        theta.svc[j] = {x[2 * j], x[2 * j + 1], nu[j]};
    }
    theta.nugget = x[2 * p];
    return theta;
}

inline Vector theta_to(const CovParams& theta, ParamSpace space)
{
    if (space == ParamSpace::log) {
        return pack(theta).values;
    }
    Vector x(2 * theta.p() + 1);
    for (Index j = 0; j < theta.p(); ++j) {
        x[2 * j] = theta.svc[j].rho;
        x[2 * j + 1] = theta.svc[j].sigma2;
    }
    x[2 * theta.p()] = theta.nugget;
    return x;
}

inline bool lexicographically_less(const Vector& a, const Vector& b)
{
    return std::lexicographical_compare(a.data(), a.data() + a.size(), b.data(), b.data() + b.size());
}

} // namespace detail

// Evaluation of the fitting objective over the optimizer's vector, with the
// bookkeeping fit() reports: evaluation and jitter counts, and the failing
// parameter vector when a factorization could not be completed.
class FitObjective {
public:
    FitObjective(const SvcLikelihood& lik, std::vector<double> nu, std::optional<PcPriorSpec> reg, FitMode mode,
                 ParamSpace space)
        : lik_(&lik), nu_(std::move(nu)), reg_(std::move(reg)), mode_(mode), space_(space)
    {
    }

    Index p() const { return static_cast<Index>(nu_.size()); }
    Index size() const { return mode_ == FitMode::joint ? 3 * p() + 1 : 2 * p() + 1; }

    double operator()(const Vector& x) const
    {
        evaluations_.fetch_add(1);
        const Index p = this->p();
        CovParams theta;
        try {
            theta = detail::theta_from(x, p, nu_, space_);
        } catch (const SvcError&) {
            return std::numeric_limits<double>::infinity();
        }
        if (!theta.strictly_positive()) {
            return std::numeric_limits<double>::infinity();
        }
        try {
            double value = 0.0;
            double jitter = 0.0;
            if (mode_ == FitMode::joint) {
                value = lik_->n2ll(theta, MeanParams{x.tail(p)}, &jitter);
            } else {
                const ProfileValue v = lik_->profile(theta);
                value = v.value;
                jitter = v.jitter;
            }
            if (jitter > 0.0) {
                jitter_events_.fetch_add(1);
            }
            if (reg_) {
                value += pc_penalty(theta, *reg_);
            }
            return std::isfinite(value) ? value : std::numeric_limits<double>::infinity();
        } catch (const NotPositiveDefinite&) {
            note_failure(x);
        } catch (const SingularGram&) {
            note_failure(x);
        }
        return std::numeric_limits<double>::infinity();
    }

    Index evaluations() const { return evaluations_.load(); }
    Index jitter_events() const { return jitter_events_.load(); }

    std::optional<CovParams> failing_theta() const
    {
        std::lock_guard lock(mutex_);
        if (!failing_) {
            return std::nullopt;
        }
        return detail::theta_from(*failing_, p(), nu_, space_);
    }

private:
    // Keeps the lexicographically smallest failing vector so the report does
    // not depend on evaluation order.
    void note_failure(const Vector& x) const
    {
        std::lock_guard lock(mutex_);
        if (!failing_ || detail::lexicographically_less(x, *failing_)) {
            failing_ = x;
        }
    }

    const SvcLikelihood* lik_;
    std::vector<double> nu_;
    std::optional<PcPriorSpec> reg_;
    FitMode mode_;
    ParamSpace space_;
    mutable std::atomic<Index> evaluations_{0};
    mutable std::atomic<Index> jitter_events_{0};
    mutable std::mutex mutex_;
    mutable std::optional<Vector> failing_;
};

inline FitResult fit(const SvcDataset& d, const CovParams& init, const TaperSpec& taper,
                     const std::optional<PcPriorSpec>& reg, const OptimizerConfig& cfg,
                     std::vector<TraceRow>* trace = nullptr)
{
    cfg.validate();
    d.check_shape();
    for (const auto& finding : validate_dataset(d)) {
        if (finding.severity == Finding::Severity::error) {
            throw InvalidArgument("fit: dataset rejected: " + finding.message);
        }
    }
    init.validate();
    if (!init.strictly_positive()) {
        throw InvalidArgument("fit: initial variances and nugget must be positive");
    }
    if (init.p() != d.p()) {
        throw DimensionMismatch("fit: initial parameters describe " + std::to_string(init.p()) +
                                " processes, data has " + std::to_string(d.p()) + " covariates");
    }
    if (reg) {
        reg->check(d.p());
    }

    const Index p = d.p();
    std::vector<double> nu;
    for (const auto& m : init.svc) {
        nu.push_back(m.nu);
    }
    const SvcLikelihood lik(d, taper);
    const FitObjective objective(lik, nu, reg, cfg.mode, cfg.space);

    Vector x0(objective.size());
    x0.head(2 * p + 1) = detail::theta_to(init, cfg.space);
    if (cfg.mode == FitMode::joint) {
        // ordinary least squares start for the mean
        x0.tail(p) = d.x.colPivHouseholderQr().solve(d.y);
    }

    Vector lower = Vector::Constant(x0.size(), -std::numeric_limits<double>::infinity());
    Vector steps = Vector::Constant(x0.size(), cfg.fd_step);
    if (cfg.space == ParamSpace::box) {
        lower.head(2 * p + 1).setConstant(cfg.box_lower);
        for (Index i = 0; i < 2 * p + 1; ++i) {
            steps[i] = cfg.fd_step * std::max(std::abs(x0[i]), 1.0);
        }
    } else {
        // A vanishing variance leaves a flat direction in log space that
        // would otherwise be followed indefinitely.
        for (Index j = 0; j <= p; ++j) {
            const Index i = j < p ? 2 * j + 1 : 2 * p;
            lower[i] = x0[i] + std::log(cfg.box_lower);
        }
    }

    std::vector<Vector> starts(static_cast<std::size_t>(cfg.starts), x0);
    for (Index s = 1; s < cfg.starts; ++s) {
        std::mt19937_64 rng(cfg.seed + static_cast<std::uint64_t>(s));
        std::uniform_real_distribution<double> factor(0.5, 1.5);
        for (Index i = 0; i < 2 * p + 1; ++i) {
            const double u = factor(rng);
            starts[s][i] = cfg.space == ParamSpace::log ? x0[i] + std::log(u) : x0[i] * u;
        }
    }

    const ObjectiveFn f = [&objective](const Vector& x) { return objective(x); };
    std::vector<MinimizeResult> runs(starts.size());
    parallel_for(static_cast<Index>(starts.size()), [&](Index s) {
        runs[s] = minimize_lbfgs(f, starts[s], cfg, steps, &lower);
    });
    std::size_t best = 0;
    for (std::size_t s = 1; s < runs.size(); ++s) {
        if (runs[s].f < runs[best].f) {
            best = s;
        }
    }
    MinimizeResult& run = runs[best];

    FitResult out;
    out.function_evaluations = objective.evaluations();
    out.jitter_events = objective.jitter_events();
    out.iterations = run.iterations;
    out.objective = run.f;
    out.gradient_norm = run.gradient_norm;
    out.converged = run.converged && std::isfinite(run.f);
    out.diagnostics.message = run.message;
    out.diagnostics.failing_theta = objective.failing_theta();
    if (trace) {
        *trace = std::move(run.trace);
    }
    if (!std::isfinite(run.f)) {
        out.theta = init;
        out.mu.mu = Vector::Zero(p);
        return out;
    }
    out.theta = detail::theta_from(run.x, p, nu, cfg.space);
    out.mu = cfg.mode == FitMode::joint ? MeanParams{run.x.tail(p)} : lik.gls_mu(out.theta);
    return out;
}

} // namespace svcmle
