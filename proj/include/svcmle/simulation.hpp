#pragma once

// Synthetic SVC data on perturbed grids, fold partitions, replicated
// experiments, moving-window validation and neighbor-count diagnostics.

#include "prediction.hpp"

#include <array>
#include <set>

namespace svcmle {

// Independent random streams derived from one seed.
enum class Stream : std::uint32_t { locations = 0, covariates = 1, fields = 2, noise = 3, partition = 4, periods = 5 };

inline std::mt19937_64 make_rng(std::uint64_t seed, Stream stream)
{
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(stream)};
    return std::mt19937_64(seq);
}

struct PerturbedGridSpec {
    Index q = 5;
    double delta = 0.2;

    Index size() const { return 4 * q * q; }

    void validate() const
    {
        if (q < 1) {
            throw InvalidArgument("perturbed grid: q must be at least 1");
        }
        if (!(delta >= 0.0 && delta < 0.5)) {
            throw InvalidArgument("perturbed grid: delta must lie in [0, 0.5)");
        }
    }
};

// One uniform point in each cell [r + delta, r + 1 - delta] x [s + delta,
// s + 1 - delta] of a 2q x 2q grid, scaled to the unit square. Row r * 2q + s
// holds cell (r, s).
inline Locations perturbed_grid(const PerturbedGridSpec& spec, std::uint64_t seed)
{
    spec.validate();
    const Index side = 2 * spec.q;
    auto rng = make_rng(seed, Stream::locations);
    std::uniform_real_distribution<double> u(spec.delta, 1.0 - spec.delta);
    Locations out(side * side, 2);
    for (Index r = 0; r < side; ++r) {
        for (Index s = 0; s < side; ++s) {
            const double a = u(rng);
            const double b = u(rng);
            out(r * side + s, 0) = (static_cast<double>(r) + a) / static_cast<double>(side);
            out(r * side + s, 1) = (static_cast<double>(s) + b) / static_cast<double>(side);
        }
    }
    return out;
}

struct TrueModelSpec {
    Vector mu;
    CovParams theta;

    Index p() const { return theta.p(); }

    void validate() const
    {
        theta.validate();
        if (mu.size() != theta.p()) {
            throw DimensionMismatch("true model: mean vector length must equal the number of processes");
        }
        if (!mu.allFinite()) {
            throw InvalidArgument("true model: means must be finite");
        }
    }

    // Three processes, exponential covariance.
    static TrueModelSpec sim1()
    {
        TrueModelSpec t;
        t.mu = Vector::Zero(3);
        t.theta.svc = {{0.10, 0.20, 0.5}, {0.20, 0.10, 0.5}, {0.15, 0.05, 0.5}};
        t.theta.nugget = 0.03;
        return t;
    }

    static TrueModelSpec sim2() { return sim1(); }

    // Ten processes with a larger nugget.
    static TrueModelSpec sim3()
    {
        const std::array<double, 10> rho{0.10, 0.20, 0.15, 0.10, 0.05, 0.05, 0.15, 0.15, 0.20, 0.20};
        const std::array<double, 10> sigma2{0.20, 0.10, 0.05, 0.05, 0.10, 0.05, 0.10, 0.15, 0.15, 0.20};
        TrueModelSpec t;
        t.mu = Vector::Zero(10);
        for (std::size_t j = 0; j < rho.size(); ++j) {
            t.theta.svc.push_back({rho[j], sigma2[j], 0.5});
        }
        t.theta.nugget = 0.10;
        return t;
    }

    // First p processes of the ten-process model; the three-process nugget
    // for p <= 3, the ten-process nugget otherwise.
    static TrueModelSpec leading(Index p)
    {
        if (p < 1 || p > 10) {
            throw InvalidArgument("true model: without explicit parameters p must lie in [1, 10]");
        }
        TrueModelSpec t = sim3();
        t.mu = Vector::Zero(p);
        t.theta.svc.resize(static_cast<std::size_t>(p));
        t.theta.nugget = p <= 3 ? 0.03 : 0.10;
        return t;
    }
};

struct SimulatedData {
    SvcDataset data;
    Matrix beta; // true coefficients, n x p
};

inline constexpr Index kDefaultDenseSampleCap = 10000;

// x^(1) = 1, remaining covariates iid N(0, 1); each eta_j from the dense
// (untapered) covariance; y = sum_j beta_j x^(j) + N(0, tau2) noise.
inline SimulatedData sample_svc_dataset(const Locations& locs, const TrueModelSpec& truth, std::uint64_t seed,
                                        Index dense_cap = kDefaultDenseSampleCap)
{
    truth.validate();
    check_locations(locs, "sample_svc_dataset");
    const Index n = locs.rows();
    const Index p = truth.p();
    if (n > dense_cap) {
        throw InvalidArgument("sample_svc_dataset: " + std::to_string(n) + " locations exceed the dense sampling cap of " +
                              std::to_string(dense_cap));
    }

    SimulatedData out;
    out.data.locations = locs;
    out.data.x.resize(n, p);
    out.data.x.col(0).setOnes();
    {
        auto rng = make_rng(seed, Stream::covariates);
        std::normal_distribution<double> normal;
        for (Index j = 1; j < p; ++j) {
            for (Index i = 0; i < n; ++i) {
                out.data.x(i, j) = normal(rng);
            }
        }
    }

    out.beta.resize(n, p);
    {
        auto rng = make_rng(seed, Stream::fields);
        std::normal_distribution<double> normal;
        Matrix dist(n, n);
        for (Index j = 0; j < n; ++j) {
            for (Index i = j; i < n; ++i) {
                dist(i, j) = distance(locs, i, locs, j);
            }
        }
        for (Index m = 0; m < p; ++m) {
            Vector z(n);
            for (Index i = 0; i < n; ++i) {
                z[i] = normal(rng);
            }
            const MaternParams& par = truth.theta.svc[m];
            if (par.sigma2 == 0.0) {
                out.beta.col(m).setConstant(truth.mu[m]);
                continue;
            }
            SymmetricMatrix cov{Matrix::Zero(n, n)};
            for (Index j = 0; j < n; ++j) {
                cov.values.col(j).tail(n - j) = matern_cov(Eigen::ArrayXd(dist.col(j).tail(n - j)), par).matrix();
            }
            const Vector eta = cholesky(cov).lower_product(z).col(0);
            out.beta.col(m) = eta.array() + truth.mu[m];
        }
    }

    out.data.y = (out.data.x.array() * out.beta.array()).rowwise().sum().matrix();
    if (truth.theta.nugget > 0.0) {
        auto rng = make_rng(seed, Stream::noise);
        std::normal_distribution<double> normal(0.0, std::sqrt(truth.theta.nugget));
        for (Index i = 0; i < n; ++i) {
            out.data.y[i] += normal(rng);
        }
    }
    return out;
}

struct FoldPartition {
    std::vector<Index> train;
    std::vector<Index> interpolate;
    std::vector<Index> extrapolate;
};

enum class Fold { train, interpolate, extrapolate };

inline std::string_view to_string(Fold f)
{
    switch (f) {
    case Fold::train: return "train";
    case Fold::interpolate: return "interpolate";
    case Fold::extrapolate: return "extrapolate";
    }
    return "train";
}

inline const std::vector<Index>& fold_indices(const FoldPartition& part, Fold f)
{
    switch (f) {
    case Fold::train: return part.train;
    case Fold::interpolate: return part.interpolate;
    case Fold::extrapolate: return part.extrapolate;
    }
    return part.train;
}

// Lower-right quadrant x in [0.5, 1], y in [0, 0.5) is extrapolate. A third
// of the remaining points, chosen uniformly at random, is interpolate.
inline FoldPartition partition(const Locations& locs, std::uint64_t seed)
{
    check_locations(locs, "partition");
    if (locs.cols() != 2) {
        throw InvalidArgument("partition: locations must be two-dimensional");
    }
    std::array<Index, 4> quadrant_counts{};
    FoldPartition out;
    std::vector<Index> rest;
    for (Index i = 0; i < locs.rows(); ++i) {
        const bool right = locs(i, 0) >= 0.5;
        const bool upper = locs(i, 1) >= 0.5;
        ++quadrant_counts[static_cast<std::size_t>(2 * right + upper)];
        if (right && !upper) {
            out.extrapolate.push_back(i);
        } else {
            rest.push_back(i);
        }
    }
    if (std::find(quadrant_counts.begin(), quadrant_counts.end(), 0) != quadrant_counts.end()) {
        throw InvalidArgument("partition: degenerate design, a quadrant of the unit square holds no location");
    }
    auto rng = make_rng(seed, Stream::partition);
    std::vector<Index> shuffled = rest;
    std::shuffle(shuffled.begin(), shuffled.end(), rng);
    const auto k = static_cast<std::size_t>(std::llround(static_cast<double>(rest.size()) / 3.0));
    out.interpolate.assign(shuffled.begin(), shuffled.begin() + static_cast<std::ptrdiff_t>(k));
    out.train.assign(shuffled.begin() + static_cast<std::ptrdiff_t>(k), shuffled.end());
    std::sort(out.interpolate.begin(), out.interpolate.end());
    std::sort(out.train.begin(), out.train.end());
    return out;
}

inline double rmse(const Vector& truth, const Vector& estimate, const std::vector<Index>& fold)
{
    if (truth.size() != estimate.size()) {
        throw DimensionMismatch("rmse: vectors differ in length");
    }
    if (fold.empty()) {
        throw InvalidArgument("rmse: empty fold");
    }
    double s = 0.0;
    for (Index i : fold) {
        if (i < 0 || i >= truth.size()) {
            throw InvalidArgument("rmse: fold index out of range");
        }
        const double e = truth[i] - estimate[i];
        s += e * e;
    }
    return std::sqrt(s / static_cast<double>(fold.size()));
}

inline double rmse_beta(const Vector& true_beta, const Vector& est_beta, const std::vector<Index>& fold)
{
    return rmse(true_beta, est_beta, fold);
}

inline double rmse_y(const Vector& y, const Vector& y_hat, const std::vector<Index>& fold)
{
    return rmse(y, y_hat, fold);
}

// Everything needed to fit one model: taper, regularization, optimizer
// settings and the smoothness of each process.
struct ModelConfig {
    TaperSpec taper;
    std::optional<PcPriorSpec> reg;
    OptimizerConfig optimizer;
    double nu = 0.5;
};

struct ExperimentSetting {
    PerturbedGridSpec grid;
    TrueModelSpec truth;
    ModelConfig model;
    Index replications = 1;
    std::uint64_t base_seed = 1;
    Index dense_cap = kDefaultDenseSampleCap;

    void validate() const
    {
        grid.validate();
        truth.validate();
        model.taper.validate();
        model.optimizer.validate();
        if (model.reg) {
            model.reg->check(truth.p());
        }
        if (replications < 1) {
            throw InvalidArgument("experiment: need at least one replication");
        }
    }
};

// Simulation presets. PC priors P(rho < 0.075) = 0.05 and
// P(sigma > 0.25) = 0.05 for every process.
inline PcPriorSpec simulation_pc_prior() { return PcPriorSpec::global(0.075, 0.05, 0.25, 0.05); }

inline ExperimentSetting preset_setting(std::string_view name)
{
    ExperimentSetting s;
    s.model.reg = simulation_pc_prior();
    s.grid.q = 25;
    if (name == "sim1") {
        s.truth = TrueModelSpec::sim1();
    } else if (name == "sim2") {
        s.truth = TrueModelSpec::sim2();
        s.grid.q = 50;
        s.model.taper = TaperSpec::wendland1(0.2);
    } else if (name == "sim3") {
        s.truth = TrueModelSpec::sim3();
    } else {
        throw InvalidArgument("unknown preset '" + std::string(name) + "' (expected sim1, sim2 or sim3)");
    }
    return s;
}

struct MetricRow {
    Index replication = 0;
    std::uint64_t seed = 0;
    Fold fold = Fold::train;
    std::string target; // beta_1..beta_p or y
    double rmse = 0.0;
};

struct EstimateRow {
    Index replication = 0;
    std::uint64_t seed = 0;
    std::string parameter; // rho_j, sigma2_j, mu_j, nugget, objective, ...
    double value = 0.0;
};

struct FailureRow {
    Index replication = 0;
    std::uint64_t seed = 0;
    std::string message;
};

struct ExperimentTable {
    std::vector<MetricRow> metrics;
    std::vector<EstimateRow> estimates;
    std::vector<FailureRow> failures;
};

struct ReplicationResult {
    FitResult fit;
    std::vector<MetricRow> metrics;
    std::vector<EstimateRow> estimates;
};

inline FitResult fit_model(const SvcDataset& d, const ModelConfig& model)
{
    CovParams init = default_init(d, model.nu);
    return fit(d, init, model.taper, model.reg, model.optimizer);
}

// One replication: grid, data, partition, fit on train, predict everywhere.
inline ReplicationResult run_replication(const ExperimentSetting& setting, Index w)
{
    const std::uint64_t seed = setting.base_seed + static_cast<std::uint64_t>(w);
    const Locations locs = perturbed_grid(setting.grid, seed);
    const SimulatedData sim = sample_svc_dataset(locs, setting.truth, seed, setting.dense_cap);
    const FoldPartition part = partition(locs, seed);
    const SvcDataset train = sim.data.subset(part.train);

    ReplicationResult out;
    out.fit = fit_model(train, setting.model);
    const PredictionResult pred =
        predict(out.fit, train, PredictionRequest{locs, sim.data.x}, setting.model.taper);

    const Index p = setting.truth.p();
    for (Fold f : {Fold::train, Fold::interpolate, Fold::extrapolate}) {
        const auto& idx = fold_indices(part, f);
        for (Index j = 0; j < p; ++j) {
            out.metrics.push_back(
                {w, seed, f, "beta_" + std::to_string(j + 1), rmse_beta(sim.beta.col(j), pred.beta.col(j), idx)});
        }
        out.metrics.push_back({w, seed, f, "y", rmse_y(sim.data.y, *pred.y_hat, idx)});
    }
    const FitResult& r = out.fit;
    for (Index j = 0; j < p; ++j) {
        const std::string k = std::to_string(j + 1);
        out.estimates.push_back({w, seed, "rho_" + k, r.theta.svc[j].rho});
        out.estimates.push_back({w, seed, "sigma2_" + k, r.theta.svc[j].sigma2});
        out.estimates.push_back({w, seed, "mu_" + k, r.mu.mu[j]});
    }
    out.estimates.push_back({w, seed, "nugget", r.theta.nugget});
    out.estimates.push_back({w, seed, "objective", r.objective});
    out.estimates.push_back({w, seed, "converged", r.converged ? 1.0 : 0.0});
    out.estimates.push_back({w, seed, "iterations", static_cast<double>(r.iterations)});
    return out;
}

// Replications run concurrently; rows are gathered in replication order and
// failures are recorded without stopping the run.
inline ExperimentTable run_replicated_experiment(const ExperimentSetting& setting)
{
    setting.validate();
    const Index reps = setting.replications;
    std::vector<std::optional<ReplicationResult>> results(static_cast<std::size_t>(reps));
    std::vector<std::string> failures(static_cast<std::size_t>(reps));
    parallel_for(reps, [&](Index w) {
        try {
            results[w] = run_replication(setting, w);
        } catch (const std::exception& e) {
            failures[w] = e.what();
        }
    });
    ExperimentTable table;
    for (Index w = 0; w < reps; ++w) {
        const std::uint64_t seed = setting.base_seed + static_cast<std::uint64_t>(w);
        if (!results[w]) {
            table.failures.push_back({w, seed, failures[w]});
            continue;
        }
        auto& r = *results[w];
        table.metrics.insert(table.metrics.end(), r.metrics.begin(), r.metrics.end());
        table.estimates.insert(table.estimates.end(), r.estimates.begin(), r.estimates.end());
    }
    return table;
}

struct ValidationErrorRow {
    Index fold = 0;
    Index row = 0; // index into the input dataset
    double period = 0.0;
    double y = 0.0;
    double y_hat = 0.0;
    double error = 0.0; // y - y_hat
    double sd = 0.0;
    double crps = 0.0;
};

struct ValidationFold {
    Index fold = 0;
    double first_train_period = 0.0;
    double last_train_period = 0.0;
    double first_test_period = 0.0;
    double last_test_period = 0.0;
    Index n_train = 0;
    Index n_test = 0;
    double rmse = 0.0;
    double crps = 0.0;
    bool converged = false;
};

struct ValidationResult {
    std::vector<ValidationFold> folds;
    std::vector<ValidationErrorRow> errors;
};

// CRPS with a degenerate predictive distribution falls back to |y - mean|.
inline double crps_or_absolute(double y, double mean, double sd)
{
    return sd > 0.0 ? crps_gaussian(y, mean, sd) : std::abs(y - mean);
}

inline Index moving_window_folds(Index periods, Index window, Index horizon)
{
    return periods - window - horizon + 1;
}

// Fold f trains on distinct periods f .. f + window - 1 and tests on the
// following `horizon` periods.
inline ValidationResult moving_window_validate(const SvcDataset& d, const Vector& time, Index window, Index horizon,
                                               const ModelConfig& model)
{
    d.check_shape();
    if (time.size() != d.n()) {
        throw DimensionMismatch("moving window: time column length differs from the dataset");
    }
    if (!time.allFinite()) {
        throw InvalidArgument("moving window: time column must be finite");
    }
    if (window < 1 || horizon < 1) {
        throw InvalidArgument("moving window: window and horizon must be positive");
    }
    const std::set<double> distinct(time.data(), time.data() + time.size());
    const std::vector<double> periods(distinct.begin(), distinct.end());
    const Index folds = moving_window_folds(static_cast<Index>(periods.size()), window, horizon);
    if (folds < 1) {
        throw InvalidArgument("moving window: insufficient periods (" + std::to_string(periods.size()) +
                              " available, window " + std::to_string(window) + " + horizon " +
                              std::to_string(horizon) + " needed)");
    }

    ValidationResult out;
    out.folds.resize(static_cast<std::size_t>(folds));
    std::vector<std::vector<ValidationErrorRow>> rows(static_cast<std::size_t>(folds));
    std::vector<std::string> failures(static_cast<std::size_t>(folds));
    parallel_for(folds, [&](Index f) {
        try {
            const double train_lo = periods[f];
            const double train_hi = periods[f + window - 1];
            const double test_lo = periods[f + window];
            const double test_hi = periods[f + window + horizon - 1];
            std::vector<Index> train_rows, test_rows;
            for (Index i = 0; i < d.n(); ++i) {
                if (time[i] >= train_lo && time[i] <= train_hi) {
                    train_rows.push_back(i);
                } else if (time[i] >= test_lo && time[i] <= test_hi) {
                    test_rows.push_back(i);
                }
            }
            if (test_rows.empty()) {
                throw InvalidArgument("moving window: fold " + std::to_string(f + 1) + " has no test rows");
            }
            const SvcDataset train = d.subset(train_rows);
            const SvcDataset test = d.subset(test_rows);
            const FitResult fit = fit_model(train, model);
            const PredictionResult pred = predict(fit, train, PredictionRequest{test.locations, test.x}, model.taper);

            ValidationFold& fold = out.folds[f];
            fold.fold = f + 1;
            fold.first_train_period = train_lo;
            fold.last_train_period = train_hi;
            fold.first_test_period = test_lo;
            fold.last_test_period = test_hi;
            fold.n_train = train.n();
            fold.n_test = test.n();
            fold.converged = fit.converged;
            double sq = 0.0;
            double crps = 0.0;
            for (Index k = 0; k < test.n(); ++k) {
                ValidationErrorRow row;
                row.fold = f + 1;
                row.row = test_rows[k];
                row.period = time[test_rows[k]];
                row.y = test.y[k];
                row.y_hat = (*pred.y_hat)[k];
                row.error = row.y - row.y_hat;
                row.sd = std::sqrt((*pred.pred_var)[k]);
                row.crps = crps_or_absolute(row.y, row.y_hat, row.sd);
                sq += row.error * row.error;
                crps += row.crps;
                rows[f].push_back(row);
            }
            fold.rmse = std::sqrt(sq / static_cast<double>(test.n()));
            fold.crps = crps / static_cast<double>(test.n());
        } catch (const std::exception& e) {
            failures[f] = e.what();
        }
    });
    for (Index f = 0; f < folds; ++f) {
        if (!failures[f].empty()) {
            throw SvcError("moving window: fold " + std::to_string(f + 1) + " failed: " + failures[f]);
        }
        out.errors.insert(out.errors.end(), rows[f].begin(), rows[f].end());
    }
    return out;
}

// Sample quantile with linear interpolation between order statistics
// (h = (n - 1) q).
inline double quantile(std::vector<double> values, double q)
{
    if (values.empty()) {
        throw InvalidArgument("quantile: empty sample");
    }
    std::sort(values.begin(), values.end());
    const double h = (static_cast<double>(values.size()) - 1.0) * q;
    const auto lo = static_cast<std::size_t>(std::floor(h));
    const std::size_t hi = std::min(lo + 1, values.size() - 1);
    return values[lo] + (h - static_cast<double>(lo)) * (values[hi] - values[lo]);
}

struct NeighborProfile {
    std::vector<Index> counts;
    // minimum, first quartile, median, third quartile, maximum
    std::array<double, 5> summary{};
};

// nn_i = #{j != i : |s_i - s_j| <= range}.
inline NeighborProfile neighbor_count_profile(const Locations& locs, double range)
{
    if (!(range > 0.0) || !std::isfinite(range)) {
        throw InvalidArgument("neighbor counts: taper range must be positive and finite");
    }
    check_locations(locs, "neighbor counts");
    const NeighborGrid grid(locs, range);
    NeighborProfile out;
    out.counts.assign(static_cast<std::size_t>(locs.rows()), 0);
    parallel_for(locs.rows(), [&](Index i) {
        Index c = 0;
        grid.for_each_within(locs.row(i).transpose(), range, true, [&](Index j, double) { c += j != i; });
        out.counts[i] = c;
    });
    std::vector<double> v(out.counts.begin(), out.counts.end());
    const std::array<double, 5> probs{0.0, 0.25, 0.5, 0.75, 1.0};
    for (std::size_t k = 0; k < probs.size(); ++k) {
        out.summary[k] = quantile(v, probs[k]);
    }
    return out;
}

} // namespace svcmle
