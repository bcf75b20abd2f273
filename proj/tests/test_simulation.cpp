#include "support.hpp"

#include <gtest/gtest.h>

#include <set>

using namespace svctest;

namespace {

// Synthetic panel: `per` observations in each of `periods` periods.
struct Panel {
    SvcDataset data;
    Vector time;
};

Panel synthetic_panel(Index periods, Index per, Index p, std::uint64_t seed)
{
    std::mt19937_64 rng(seed);
    const Locations locs = random_locations(periods * per, 2, rng);
    Panel out{sample_svc_dataset(locs, TrueModelSpec::leading(p), seed).data, Vector(periods * per)};
    for (Index i = 0; i < periods * per; ++i) {
        out.time[i] = static_cast<double>(2000 + i % periods);
    }
    return out;
}

ModelConfig quick_model()
{
    ModelConfig m;
    m.reg = simulation_pc_prior();
    return m;
}

} // namespace

TEST(PerturbedGrid, Size)
{
    EXPECT_EQ(perturbed_grid({5, 0.2}, 1).rows(), 100);
    EXPECT_EQ(perturbed_grid({25, 0.2}, 1).rows(), 2500);
    EXPECT_EQ(perturbed_grid({1, 0.0}, 1).rows(), 4);
}

TEST(PerturbedGrid, InUnitSquareAndDeterministic)
{
    const Locations a = perturbed_grid({8, 0.2}, 42);
    EXPECT_TRUE((a.array() > 0.0).all() && (a.array() < 1.0).all());
    EXPECT_EQ(a, perturbed_grid({8, 0.2}, 42));
    EXPECT_NE(a, perturbed_grid({8, 0.2}, 43));
}

TEST(PerturbedGrid, NarrowMarginHugsCellCenters)
{
    const Index q = 4;
    const Locations l = perturbed_grid({q, 0.499}, 3);
    const double side = 2.0 * q;
    for (Index r = 0; r < 2 * q; ++r) {
        for (Index s = 0; s < 2 * q; ++s) {
            const Index i = r * 2 * q + s;
            EXPECT_LE(std::abs(l(i, 0) - (r + 0.5) / side), 0.001 / side + 1e-15);
            EXPECT_LE(std::abs(l(i, 1) - (s + 0.5) / side), 0.001 / side + 1e-15);
        }
    }
}

TEST(PerturbedGrid, MinimumSeparation)
{
    const Index q = 5;
    const double delta = 0.2;
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
        const Locations l = perturbed_grid({q, delta}, seed);
        double best = std::numeric_limits<double>::infinity();
        for (Index i = 0; i < l.rows(); ++i) {
            for (Index j = i + 1; j < l.rows(); ++j) {
                best = std::min(best, euclid(l, i, l, j));
            }
        }
        EXPECT_GE(best, 2.0 * delta / (2.0 * q) - 1e-15) << seed;
    }
}

TEST(PerturbedGrid, RejectsInvalidSpec)
{
    EXPECT_THROW(perturbed_grid({0, 0.2}, 1), InvalidArgument);
    EXPECT_THROW(perturbed_grid({2, 0.5}, 1), InvalidArgument);
    EXPECT_THROW(perturbed_grid({2, -0.1}, 1), InvalidArgument);
}

TEST(Sample, DegenerateModelIsDeterministicMean)
{
    TrueModelSpec t = TrueModelSpec::sim1();
    t.mu << 1.0, -2.0, 0.5;
    for (auto& m : t.theta.svc) {
        m.sigma2 = 0.0;
    }
    t.theta.nugget = 0.0;
    const SimulatedData s = sample_svc_dataset(perturbed_grid({4, 0.2}, 1), t, 9);
    EXPECT_LT((s.data.y - s.data.x * t.mu).cwiseAbs().maxCoeff(), 1e-14);
    EXPECT_TRUE((s.data.x.col(0).array() == 1.0).all());
}

TEST(Sample, ResponseIsSumOfCoefficientsPlusNoise)
{
    const SimulatedData s = sample_svc_dataset(perturbed_grid({5, 0.2}, 2), TrueModelSpec::sim1(), 2);
    const Vector signal = (s.data.x.array() * s.beta.array()).rowwise().sum();
    const Vector noise = s.data.y - signal;
    const double var = noise.squaredNorm() / static_cast<double>(noise.size());
    EXPECT_NEAR(var, 0.03, 0.012);
    EXPECT_EQ(s.data.p(), 3);
    EXPECT_EQ(s.beta.rows(), 100);
}

TEST(Sample, MarginalVarianceMonteCarlo)
{
    const Locations locs = perturbed_grid({2, 0.2}, 1);
    const TrueModelSpec t = TrueModelSpec::sim1();
    std::array<double, 3> ss{};
    const int reps = 200;
    for (int w = 0; w < reps; ++w) {
        const SimulatedData s = sample_svc_dataset(locs, t, 5000 + w);
        for (Index j = 0; j < 3; ++j) {
            ss[j] += std::pow(s.beta(5, j) - t.mu[j], 2);
        }
    }
    for (Index j = 0; j < 3; ++j) {
        EXPECT_NEAR(ss[j] / reps, t.theta.svc[j].sigma2, 0.15 * t.theta.svc[j].sigma2) << j;
    }
}

TEST(Sample, CorrelationAtRangeMonteCarlo)
{
    Locations locs(2, 2);
    const TrueModelSpec t = TrueModelSpec::sim1();
    for (Index j = 0; j < 3; ++j) {
        const double rho = t.theta.svc[j].rho;
        locs << 0.3, 0.3, 0.3 + rho, 0.3;
        double sab = 0.0, saa = 0.0, sbb = 0.0;
        for (int w = 0; w < 500; ++w) {
            const SimulatedData s = sample_svc_dataset(locs, t, 9000 + w);
            sab += s.beta(0, j) * s.beta(1, j);
            saa += s.beta(0, j) * s.beta(0, j);
            sbb += s.beta(1, j) * s.beta(1, j);
        }
        EXPECT_NEAR(sab / std::sqrt(saa * sbb), std::exp(-1.0), 0.1) << j;
    }
}

TEST(Sample, DeterministicAndCapped)
{
    const Locations locs = perturbed_grid({3, 0.2}, 1);
    const SimulatedData a = sample_svc_dataset(locs, TrueModelSpec::sim1(), 4);
    const SimulatedData b = sample_svc_dataset(locs, TrueModelSpec::sim1(), 4);
    EXPECT_EQ(a.data.y, b.data.y);
    EXPECT_EQ(a.beta, b.beta);
    EXPECT_THROW(sample_svc_dataset(locs, TrueModelSpec::sim1(), 4, 10), InvalidArgument);
}

TEST(Partition, SizesForHundred)
{
    const Locations l = perturbed_grid({5, 0.2}, 11);
    const FoldPartition p = partition(l, 11);
    EXPECT_EQ(p.train.size(), 50u);
    EXPECT_EQ(p.interpolate.size(), 25u);
    EXPECT_EQ(p.extrapolate.size(), 25u);
}

TEST(Partition, ExtrapolateInLowerRightAndDisjoint)
{
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        const Locations l = perturbed_grid({7, 0.2}, seed);
        const FoldPartition p = partition(l, seed);
        for (Index i : p.extrapolate) {
            EXPECT_GE(l(i, 0), 0.5);
            EXPECT_LE(l(i, 1), 0.5);
        }
        std::set<Index> all;
        for (const auto* f : {&p.train, &p.interpolate, &p.extrapolate}) {
            for (Index i : *f) {
                EXPECT_TRUE(all.insert(i).second);
            }
        }
        EXPECT_EQ(static_cast<Index>(all.size()), l.rows());
        const double n = static_cast<double>(l.rows());
        EXPECT_LE(std::abs(static_cast<double>(p.train.size()) - n / 2.0), 1.0);
        EXPECT_LE(std::abs(static_cast<double>(p.interpolate.size()) - n / 4.0), 1.0);
    }
}

TEST(Partition, DeterministicPerSeed)
{
    const Locations l = perturbed_grid({6, 0.2}, 5);
    const FoldPartition a = partition(l, 5);
    const FoldPartition b = partition(l, 5);
    EXPECT_EQ(a.train, b.train);
    EXPECT_EQ(a.interpolate, b.interpolate);
    EXPECT_NE(a.interpolate, partition(l, 6).interpolate);
}

TEST(Partition, EmptyQuadrantIsReported)
{
    Locations l(4, 2);
    l << 0.1, 0.1, 0.2, 0.7, 0.7, 0.8, 0.9, 0.9;
    EXPECT_THROW(partition(l, 1), InvalidArgument);
}

TEST(Rmse, Basics)
{
    Vector t(3), e(3);
    t << 1.0, 2.0, 3.0;
    e = t;
    EXPECT_EQ(rmse_beta(t, e, {0, 1, 2}), 0.0);
    EXPECT_NEAR(rmse_beta(t, Vector(t.array() + 0.7), {0, 2}), 0.7, 1e-15);
    Vector a(2), b(2);
    a << 1.0, 2.0;
    b << 1.5, 1.5;
    EXPECT_NEAR(rmse_beta(a, b, {0, 1}), 0.5, 1e-15);
    EXPECT_NEAR(rmse_y(a, b, {0, 1}), 0.5, 1e-15);
    EXPECT_EQ(rmse_y(t, e, {1}), 0.0);
    EXPECT_THROW(rmse_y(t, e, {}), InvalidArgument);
    EXPECT_THROW(rmse_y(t, Vector(Vector::Zero(2)), {0}), DimensionMismatch);
}

TEST(Presets, EncodeTables)
{
    const ExperimentSetting s1 = preset_setting("sim1");
    EXPECT_EQ(s1.grid.size(), 2500);
    EXPECT_EQ(s1.truth.p(), 3);
    EXPECT_EQ(s1.truth.theta.nugget, 0.03);
    EXPECT_FALSE(s1.model.taper.active());
    ASSERT_TRUE(s1.model.reg.has_value());
    EXPECT_NEAR(s1.model.reg->rates_for(2).lambda_rho, 0.4493598410330986, 1e-15);
    const ExperimentSetting s2 = preset_setting("sim2");
    EXPECT_EQ(s2.grid.size(), 10000);
    EXPECT_EQ(s2.model.taper.range, 0.2);
    const ExperimentSetting s3 = preset_setting("sim3");
    EXPECT_EQ(s3.truth.p(), 10);
    EXPECT_EQ(s3.truth.theta.nugget, 0.10);
    EXPECT_EQ(s3.truth.theta.svc[4].rho, 0.05);
    EXPECT_EQ(s3.truth.theta.svc[7].sigma2, 0.15);
    EXPECT_THROW(preset_setting("sim4"), InvalidArgument);
}

TEST(Experiment, TableShapeAndDeterminism)
{
    ExperimentSetting s = preset_setting("sim1");
    s.grid.q = 6;
    s.replications = 3;
    s.base_seed = 100;
    set_num_threads(1);
    const ExperimentTable a = run_replicated_experiment(s);
    set_num_threads(3);
    const ExperimentTable b = run_replicated_experiment(s);
    set_num_threads(1);
    EXPECT_TRUE(a.failures.empty());
    // 3 folds x (3 coefficients + y) per replication
    ASSERT_EQ(a.metrics.size(), 3u * 3u * 4u);
    ASSERT_EQ(a.metrics.size(), b.metrics.size());
    for (std::size_t k = 0; k < a.metrics.size(); ++k) {
        EXPECT_EQ(a.metrics[k].rmse, b.metrics[k].rmse);
        EXPECT_EQ(a.metrics[k].target, b.metrics[k].target);
        EXPECT_EQ(a.metrics[k].seed, 100u + static_cast<std::uint64_t>(a.metrics[k].replication));
        EXPECT_GE(a.metrics[k].rmse, 0.0);
    }
    ASSERT_EQ(a.estimates.size(), b.estimates.size());
    for (std::size_t k = 0; k < a.estimates.size(); ++k) {
        EXPECT_EQ(a.estimates[k].value, b.estimates[k].value);
    }
}

TEST(Experiment, FailuresAreRecorded)
{
    ExperimentSetting s = preset_setting("sim1");
    s.grid.q = 4;
    s.replications = 2;
    s.dense_cap = 10; // every replication fails to sample
    const ExperimentTable t = run_replicated_experiment(s);
    EXPECT_EQ(t.failures.size(), 2u);
    EXPECT_TRUE(t.metrics.empty());
}

TEST(MovingWindow, FoldCount)
{
    EXPECT_EQ(moving_window_folds(10, 6, 1), 4);
    const Panel panel = synthetic_panel(10, 25, 2, 3);
    const ValidationResult r = moving_window_validate(panel.data, panel.time, 6, 1, quick_model());
    ASSERT_EQ(r.folds.size(), 4u);
    for (std::size_t f = 0; f < 4; ++f) {
        EXPECT_EQ(r.folds[f].n_train, 150);
        EXPECT_EQ(r.folds[f].n_test, 25);
        EXPECT_EQ(r.folds[f].first_test_period, 2006.0 + static_cast<double>(f));
        EXPECT_GE(r.folds[f].rmse, 0.0);
    }
    EXPECT_EQ(r.errors.size(), 100u);
}

TEST(MovingWindow, FoldRmseMatchesErrorRows)
{
    const Panel panel = synthetic_panel(8, 20, 2, 4);
    const ValidationResult r = moving_window_validate(panel.data, panel.time, 5, 1, quick_model());
    for (const auto& fold : r.folds) {
        std::vector<Index> idx;
        Vector y(static_cast<Index>(r.errors.size())), yh(static_cast<Index>(r.errors.size()));
        double crps = 0.0;
        for (std::size_t k = 0; k < r.errors.size(); ++k) {
            const auto& e = r.errors[k];
            y[static_cast<Index>(k)] = e.y;
            yh[static_cast<Index>(k)] = e.y_hat;
            if (e.fold == fold.fold) {
                idx.push_back(static_cast<Index>(k));
                crps += crps_gaussian(e.y, e.y_hat, e.sd);
                EXPECT_EQ(e.error, e.y - e.y_hat);
            }
        }
        EXPECT_NEAR(fold.rmse, rmse_y(y, yh, idx), 1e-14);
        EXPECT_NEAR(fold.crps, crps / static_cast<double>(idx.size()), 1e-14);
    }
}

TEST(MovingWindow, ConstantResponseHasZeroRmse)
{
    Panel panel = synthetic_panel(9, 15, 1, 5);
    panel.data.y.setConstant(2.5);
    const ValidationResult r = moving_window_validate(panel.data, panel.time, 6, 1, quick_model());
    for (const auto& f : r.folds) {
        EXPECT_LT(f.rmse, 1e-10);
    }
}

TEST(MovingWindow, InsufficientPeriods)
{
    const Panel panel = synthetic_panel(5, 10, 1, 6);
    EXPECT_THROW(moving_window_validate(panel.data, panel.time, 5, 1, quick_model()), InvalidArgument);
}

TEST(Quantile, TypeSeven)
{
    EXPECT_EQ(quantile({3.0, 1.0, 2.0, 4.0}, 0.5), 2.5);
    EXPECT_EQ(quantile({1.0, 2.0, 3.0, 4.0, 5.0}, 0.25), 2.0);
    EXPECT_NEAR(quantile({1.0, 2.0, 3.0, 4.0}, 0.25), 1.75, 1e-15);
    EXPECT_THROW(quantile({}, 0.5), InvalidArgument);
}

TEST(Neighbors, PairAndIsolated)
{
    Locations l(3, 2);
    l << 0.0, 0.0, 0.1, 0.0, 5.0, 5.0;
    const NeighborProfile p = neighbor_count_profile(l, 0.2);
    EXPECT_EQ(p.counts, (std::vector<Index>{1, 1, 0}));
    EXPECT_EQ(p.summary[0], 0.0);
    EXPECT_EQ(p.summary[4], 1.0);
}

TEST(Neighbors, MatchesBruteForce)
{
    std::mt19937_64 rng(77);
    const Locations l = random_locations(1000, 2, rng);
    for (double range : {0.03, 0.1, 0.2}) {
        const NeighborProfile p = neighbor_count_profile(l, range);
        for (Index i = 0; i < 1000; ++i) {
            Index c = 0;
            for (Index j = 0; j < 1000; ++j) {
                c += j != i && euclid(l, i, l, j) <= range;
            }
            ASSERT_EQ(p.counts[i], c) << i;
        }
    }
    EXPECT_THROW(neighbor_count_profile(l, 0.0), InvalidArgument);
}

TEST(Rng, StreamsAreIndependentOfEachOther)
{
    auto a = make_rng(5, Stream::locations);
    auto b = make_rng(5, Stream::noise);
    auto c = make_rng(5, Stream::locations);
    const auto va = a();
    EXPECT_NE(va, b());
    EXPECT_EQ(va, c());
}
