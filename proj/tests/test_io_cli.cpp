#include "support.hpp"

#include <svcmle/cli.hpp>

#include <gtest/gtest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <unistd.h>

using namespace svctest;
namespace fs = std::filesystem;

namespace {

struct CliRun {
    int code;
    std::string out;
    std::string err;
};

CliRun run_cli(std::vector<std::string> args)
{
    args.insert(args.begin(), "svcmle");
    std::vector<const char*> argv;
    for (const auto& a : args) {
        argv.push_back(a.c_str());
    }
    std::ostringstream out, err;
    const int code = cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
    set_num_threads(1);
    return {code, out.str(), err.str()};
}

class CliTest : public ::testing::Test {
protected:
    void SetUp() override
    {
        const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
        dir_ = fs::temp_directory_path() /
               ("svcmle_" + std::to_string(::getpid()) + "_" + info->test_suite_name() + "_" + info->name());
        fs::remove_all(dir_);
        fs::create_directories(dir_);
    }

    void TearDown() override { fs::remove_all(dir_); }

    std::string path(const std::string& name) const { return (dir_ / name).string(); }

    fs::path dir_;
};

std::string slurp(const std::string& p) { return read_text(p); }

Index data_rows(const std::string& p) { return read_csv(p).data.rows(); }

} // namespace

TEST(Io, FormatDoubleRoundTrips)
{
    std::mt19937_64 rng(1);
    std::uniform_real_distribution<double> u(-1e6, 1e6);
    for (int k = 0; k < 1000; ++k) {
        const double v = u(rng) * std::pow(10.0, k % 20 - 10);
        EXPECT_EQ(parse_double(format_double(v), "test"), v);
    }
    EXPECT_EQ(format_double(0.1), "0.10000000000000001");
    EXPECT_TRUE(std::isnan(parse_double(format_double(std::nan("")), "test")));
    EXPECT_EQ(parse_double(format_double(-INFINITY), "test"), -INFINITY);
    EXPECT_THROW(parse_double("1.5x", "test"), IoError);
    EXPECT_THROW(parse_double("", "test"), IoError);
}

TEST_F(CliTest, CsvRoundTrip)
{
    Matrix m(3, 2);
    m << 1.0 / 3.0, -2.5, 1e-300, 7.0, 0.1, 0.2;
    write_csv(path("t.csv"), {"a", "b"}, m);
    const CsvTable t = read_csv(path("t.csv"));
    EXPECT_EQ(t.header, (std::vector<std::string>{"a", "b"}));
    EXPECT_EQ(t.data, m);
    EXPECT_THROW(t.column("c"), IoError);
    EXPECT_THROW(read_csv(path("missing.csv")), IoError);
    write_text(path("bad.csv"), "a,b\n1,2\n3\n");
    EXPECT_THROW(read_csv(path("bad.csv")), IoError);
}

TEST(Io, DatasetTableRoundTrip)
{
    std::mt19937_64 rng(2);
    const SvcDataset d = random_dataset(10, 3, rng);
    CsvTable t{dataset_header(3, 2), dataset_matrix(d)};
    const SvcDataset back = dataset_from_table(t);
    EXPECT_EQ(back.y, d.y);
    EXPECT_EQ(back.x, d.x);
    EXPECT_EQ(back.locations, d.locations);
}

TEST(Io, RegularizationParsing)
{
    EXPECT_FALSE(parse_regularization("off").has_value());
    const auto spec = parse_regularization("pc:rho0=0.075,alpha=0.05,sigma0=0.25,alpha=0.05");
    ASSERT_TRUE(spec.has_value());
    EXPECT_NEAR(spec->rates_for(0).lambda_rho, 0.4493598410330986, 1e-15);
    EXPECT_NEAR(spec->rates_for(4).lambda_sigma, 11.982929094215963, 1e-13);
    const auto named = parse_regularization("pc:lambda_rho=1,lambda_sigma=2;lambda_rho=3,lambda_sigma=4");
    ASSERT_EQ(named->rates.size(), 2u);
    EXPECT_EQ(named->rates[1].lambda_sigma, 4.0);
    EXPECT_THROW(parse_regularization("pc:alpha=0.05"), InvalidArgument);
    EXPECT_THROW(parse_regularization("pc:rho0=0.1,alpha=0.05"), InvalidArgument);
    EXPECT_THROW(parse_regularization("ridge"), InvalidArgument);
    EXPECT_THROW(parse_regularization("pc:rho0=0.1,alpha=1.5,sigma0=1,alpha=0.1"), InvalidArgument);
}

TEST(Io, FitJsonRoundTripIsExact)
{
    std::mt19937_64 rng(3);
    FitRecord rec;
    rec.fit.theta = random_theta(3, rng, true);
    rec.fit.mu.mu = Vector::Random(3);
    rec.fit.objective = -123.456789012345678;
    rec.fit.converged = true;
    rec.fit.iterations = 17;
    rec.fit.gradient_norm = 3.3e-6;
    rec.fit.diagnostics.message = "gradient tolerance reached";
    rec.taper = TaperSpec::wendland1(0.2);
    rec.reg = simulation_pc_prior();
    const FitRecord back = fit_from_json(fit_to_json(rec));
    EXPECT_TRUE(back.fit.theta == rec.fit.theta);
    EXPECT_EQ(back.fit.mu.mu, rec.fit.mu.mu);
    EXPECT_EQ(back.fit.objective, rec.fit.objective);
    EXPECT_EQ(back.fit.iterations, 17);
    EXPECT_EQ(back.taper.range, 0.2);
    EXPECT_EQ(back.taper.family, TaperFamily::wendland1);
    ASSERT_TRUE(back.reg.has_value());
    EXPECT_EQ(back.reg->rates_for(1).lambda_sigma, rec.reg->rates_for(1).lambda_sigma);
    EXPECT_EQ(fit_to_json(back), fit_to_json(rec));
    // the packed parameter vector survives serialization bit for bit
    EXPECT_EQ(pack(back.fit.theta).values, pack(rec.fit.theta).values);
    rec.fit.objective = INFINITY;
    EXPECT_EQ(fit_from_json(fit_to_json(rec)).fit.objective, INFINITY);
    EXPECT_THROW(fit_from_json("{\"format\": \"other\"}"), IoError);
    EXPECT_THROW(fit_from_json("not json"), IoError);
}

TEST_F(CliTest, SimulateSizes)
{
    auto r = run_cli({"simulate", "--q", "5", "--p", "1", "--out", path("a")});
    ASSERT_EQ(r.code, 0) << r.err;
    EXPECT_EQ(data_rows(path("a/dataset.csv")), 100);
    EXPECT_EQ(read_csv(path("a/dataset.csv")).header, (std::vector<std::string>{"y", "x1", "s1", "s2"}));
    r = run_cli({"simulate", "--q", "25", "--p", "3", "--preset", "sim1", "--seed", "7", "--out", path("b")});
    ASSERT_EQ(r.code, 0) << r.err;
    EXPECT_EQ(data_rows(path("b/dataset.csv")), 2500);
    EXPECT_EQ(data_rows(path("b/true_beta.csv")), 2500);
    const std::string part = slurp(path("b/partition.csv"));
    EXPECT_EQ(part.rfind("row,fold\n", 0), 0u);
    EXPECT_EQ(std::count(part.begin(), part.end(), '\n'), 2501);
}

TEST_F(CliTest, SimulateIsByteIdentical)
{
    ASSERT_EQ(run_cli({"simulate", "--q", "6", "--seed", "9", "--periods", "4", "--out", path("a")}).code, 0);
    ASSERT_EQ(run_cli({"--threads", "4", "simulate", "--q", "6", "--seed", "9", "--periods", "4", "--out", path("b")}).code,
              0);
    for (const char* f : {"dataset.csv", "true_beta.csv", "partition.csv"}) {
        EXPECT_EQ(slurp(path(std::string("a/") + f)), slurp(path(std::string("b/") + f))) << f;
    }
    ASSERT_EQ(run_cli({"simulate", "--q", "6", "--seed", "10", "--out", path("c")}).code, 0);
    EXPECT_NE(slurp(path("a/true_beta.csv")), slurp(path("c/true_beta.csv")));
}

TEST_F(CliTest, FitProducesConvergedJson)
{
    ASSERT_EQ(run_cli({"simulate", "--q", "8", "--preset", "sim1", "--seed", "3", "--out", path("s")}).code, 0);
    const auto r = run_cli({"fit", "--data", path("s/dataset.csv"), "--partition", path("s/partition.csv"), "--fold",
                            "train", "--reg", "pc:rho0=0.075,alpha=0.05,sigma0=0.25,alpha=0.05", "--out",
                            path("fit.json"), "--trace", path("trace.csv")});
    ASSERT_EQ(r.code, 0) << r.err;
    const FitRecord rec = fit_from_json(slurp(path("fit.json")));
    EXPECT_TRUE(rec.fit.converged) << rec.fit.diagnostics.message;
    EXPECT_EQ(rec.fit.theta.p(), 3);
    const CsvTable trace = read_csv(path("trace.csv"));
    EXPECT_EQ(trace.header, (std::vector<std::string>{"iteration", "objective", "step", "gradient_norm"}));
    EXPECT_EQ(trace.data(trace.data.rows() - 1, 1), rec.fit.objective);
}

TEST_F(CliTest, FitRecordsTaperAndRegularizationMatters)
{
    ASSERT_EQ(run_cli({"simulate", "--q", "7", "--seed", "4", "--out", path("s")}).code, 0);
    ASSERT_EQ(run_cli({"fit", "--data", path("s/dataset.csv"), "--taper-range", "0.2", "--out", path("t.json")}).code, 0);
    const std::string text = slurp(path("t.json"));
    EXPECT_NE(text.find("\"range\": 0.2"), std::string::npos);
    EXPECT_EQ(fit_from_json(text).taper.range, 0.2);

    ASSERT_EQ(run_cli({"fit", "--data", path("s/dataset.csv"), "--reg", "off", "--out", path("off.json")}).code, 0);
    ASSERT_EQ(run_cli({"fit", "--data", path("s/dataset.csv"), "--reg",
                       "pc:rho0=0.075,alpha=0.05,sigma0=0.25,alpha=0.05", "--out", path("pc.json")})
                  .code,
              0);
    EXPECT_NE(fit_from_json(slurp(path("off.json"))).fit.objective, fit_from_json(slurp(path("pc.json"))).fit.objective);
}

TEST_F(CliTest, PredictRowsAndInterpolation)
{
    ASSERT_EQ(run_cli({"simulate", "--q", "5", "--seed", "5", "--out", path("s")}).code, 0);
    ASSERT_EQ(run_cli({"fit", "--data", path("s/dataset.csv"), "--out", path("fit.json")}).code, 0);
    // shrink the nugget so the predictor nearly interpolates
    FitRecord rec = fit_from_json(slurp(path("fit.json")));
    rec.fit.theta.nugget = 1e-9;
    write_text(path("small.json"), fit_to_json(rec));
    const auto r = run_cli({"predict", "--fit", path("small.json"), "--data", path("s/dataset.csv"), "--new",
                            path("s/dataset.csv"), "--out", path("pred.csv")});
    ASSERT_EQ(r.code, 0) << r.err;
    const CsvTable pred = read_csv(path("pred.csv"));
    const CsvTable data = read_csv(path("s/dataset.csv"));
    EXPECT_EQ(pred.data.rows(), data.data.rows());
    EXPECT_EQ(pred.header, (std::vector<std::string>{"s1", "s2", "beta1", "beta2", "beta3", "y_hat", "pred_sd"}));
    const Vector diff = pred.data.col(pred.column("y_hat")) - data.data.col(data.column("y"));
    EXPECT_LT(diff.cwiseAbs().maxCoeff(), 1e-4);
    EXPECT_TRUE((pred.data.col(pred.column("pred_sd")).array() >= 0.0).all());

    // coordinates only: coefficient surfaces without responses
    Matrix locs(2, 2);
    locs << 0.5, 0.5, 0.1, 0.9;
    write_csv(path("new.csv"), {"s1", "s2"}, locs);
    ASSERT_EQ(run_cli({"predict", "--fit", path("fit.json"), "--data", path("s/dataset.csv"), "--new", path("new.csv"),
                       "--out", path("surf.csv")})
                  .code,
              0);
    const CsvTable surf = read_csv(path("surf.csv"));
    EXPECT_EQ(surf.data.rows(), 2);
    EXPECT_FALSE(surf.has_column("y_hat"));
}

TEST_F(CliTest, ValidateFoldsAndPipelineConsistency)
{
    ASSERT_EQ(run_cli({"simulate", "--q", "6", "--p", "2", "--seed", "6", "--periods", "10", "--out", path("s")}).code,
              0);
    const auto r = run_cli({"validate", "--data", path("s/dataset.csv"), "--window", "6", "--out", path("val.csv"),
                            "--errors", path("err.csv")});
    ASSERT_EQ(r.code, 0) << r.err;
    const CsvTable val = read_csv(path("val.csv"));
    ASSERT_EQ(val.data.rows(), 4);
    EXPECT_TRUE((val.data.col(val.column("rmse")).array() >= 0.0).all());
    const CsvTable err = read_csv(path("err.csv"));
    for (Index f = 0; f < 4; ++f) {
        double crps = 0.0;
        Index count = 0;
        for (Index k = 0; k < err.data.rows(); ++k) {
            if (err.data(k, err.column("fold")) == static_cast<double>(f + 1)) {
                crps += crps_gaussian(err.data(k, err.column("y")), err.data(k, err.column("y_hat")),
                                      err.data(k, err.column("pred_sd")));
                ++count;
            }
        }
        EXPECT_EQ(count, val.data(f, val.column("n_test")));
        EXPECT_NEAR(val.data(f, val.column("crps")), crps / static_cast<double>(count), 1e-12);
    }

    // fold 1 by hand: fit on periods 1..6, predict period 7, score
    const CsvTable all = read_csv(path("s/dataset.csv"));
    const Index pcol = all.column("period");
    std::vector<Index> train_rows, test_rows;
    for (Index i = 0; i < all.data.rows(); ++i) {
        const double per = all.data(i, pcol);
        if (per <= 6.0) {
            train_rows.push_back(i);
        } else if (per == 7.0) {
            test_rows.push_back(i);
        }
    }
    auto rows_of = [&](const std::vector<Index>& idx) {
        Matrix m(static_cast<Index>(idx.size()), all.data.cols());
        for (std::size_t k = 0; k < idx.size(); ++k) {
            m.row(static_cast<Index>(k)) = all.data.row(idx[k]);
        }
        return m;
    };
    write_csv(path("train.csv"), all.header, rows_of(train_rows));
    write_csv(path("test.csv"), all.header, rows_of(test_rows));
    ASSERT_EQ(run_cli({"fit", "--data", path("train.csv"), "--out", path("f1.json")}).code, 0);
    ASSERT_EQ(run_cli({"predict", "--fit", path("f1.json"), "--data", path("train.csv"), "--new", path("test.csv"),
                       "--out", path("p1.csv")})
                  .code,
              0);
    const CsvTable pred = read_csv(path("p1.csv"));
    const CsvTable test = read_csv(path("test.csv"));
    std::vector<Index> idx(static_cast<std::size_t>(test.data.rows()));
    std::iota(idx.begin(), idx.end(), Index{0});
    const double by_hand = rmse_y(test.data.col(test.column("y")), pred.data.col(pred.column("y_hat")), idx);
    EXPECT_NEAR(by_hand, val.data(0, val.column("rmse")), 1e-12);
}

TEST_F(CliTest, ValidateInsufficientPeriodsIsUsageError)
{
    ASSERT_EQ(run_cli({"simulate", "--q", "3", "--periods", "4", "--out", path("s")}).code, 0);
    const auto r = run_cli({"validate", "--data", path("s/dataset.csv"), "--window", "6"});
    EXPECT_EQ(r.code, 2);
    EXPECT_NE(r.err.find("insufficient periods"), std::string::npos);
}

TEST_F(CliTest, NeighborsSummary)
{
    Matrix locs(3, 2);
    locs << 0.0, 0.0, 0.1, 0.0, 5.0, 5.0;
    write_csv(path("l.csv"), {"s1", "s2"}, locs);
    const auto r = run_cli({"neighbors", "--data", path("l.csv"), "--range", "0.2", "--out", path("n.csv")});
    ASSERT_EQ(r.code, 0) << r.err;
    EXPECT_NE(r.out.find("median=1"), std::string::npos) << r.out;
    EXPECT_EQ(slurp(path("n.csv")), "row,neighbors\n0,1\n1,1\n2,0\n");
}

TEST_F(CliTest, ExperimentWritesTables)
{
    const auto r = run_cli({"experiment", "--preset", "sim1", "--q", "4", "--replications", "2", "--seed", "3",
                            "--out", path("e")});
    ASSERT_EQ(r.code, 0) << r.err;
    const std::string m = slurp(path("e/metrics.csv"));
    EXPECT_EQ(std::count(m.begin(), m.end(), '\n'), 1 + 2 * 3 * 4);
    EXPECT_TRUE(fs::exists(path("e/estimates.csv")));
    EXPECT_EQ(slurp(path("e/failures.csv")), "replication,seed,message\n");
}

TEST_F(CliTest, ExitCodes)
{
    EXPECT_EQ(run_cli({"--help"}).code, 0);
    EXPECT_EQ(run_cli({"fit", "--help"}).code, 0);
    EXPECT_EQ(run_cli({}).code, 2);
    EXPECT_EQ(run_cli({"simulate", "--bogus"}).code, 2);
    EXPECT_EQ(run_cli({"frobnicate"}).code, 2);
    EXPECT_EQ(run_cli({"fit", "--data", path("nope.csv")}).code, 2);
    EXPECT_EQ(run_cli({"simulate", "--q", "0", "--out", path("x")}).code, 2);
    EXPECT_EQ(run_cli({"simulate", "--preset", "sim3", "--p", "2", "--out", path("x")}).code, 2);
    ASSERT_EQ(run_cli({"simulate", "--q", "3", "--out", path("s")}).code, 0);
    EXPECT_EQ(run_cli({"fit", "--data", path("s/dataset.csv"), "--reg", "pc:bad"}).code, 2);
    EXPECT_EQ(run_cli({"fit", "--data", path("s/dataset.csv"), "--gtol", "2"}).code, 2);
    EXPECT_EQ(run_cli({"--threads", "-1", "fit", "--data", path("s/dataset.csv")}).code, 2);
    // sampling above the dense cap is a runtime failure
    EXPECT_EQ(run_cli({"simulate", "--q", "3", "--dense-cap", "10", "--out", path("y")}).code, 1);
}

TEST_F(CliTest, HelpListsEveryFitFlag)
{
    const auto r = run_cli({"fit", "--help"});
    for (const char* flag : {"--data", "--y", "--x", "--coords", "--partition", "--fold", "--taper-range",
                             "--taper-family", "--reg", "--nu", "--max-iter", "--gtol", "--ftol", "--fd-scheme",
                             "--fd-step", "--history", "--starts", "--opt-seed", "--mode", "--space", "--out",
                             "--trace"}) {
        EXPECT_NE(r.out.find(flag), std::string::npos) << flag;
    }
}

TEST_F(CliTest, ConfigFileAndUnknownKeys)
{
    ASSERT_EQ(run_cli({"simulate", "--q", "3", "--out", path("s")}).code, 0);
    write_text(path("ok.toml"), "[fit]\ndata = \"" + path("s/dataset.csv") + "\"\nout = \"" + path("c.json") +
                                    "\"\nmax-iter = 50\n");
    auto r = run_cli({"--config", path("ok.toml"), "fit"});
    EXPECT_EQ(r.code, 0) << r.err;
    EXPECT_TRUE(fs::exists(path("c.json")));
    write_text(path("bad.toml"), "[fit]\ndata = \"" + path("s/dataset.csv") + "\"\nwobble = 3\n");
    r = run_cli({"--config", path("bad.toml"), "fit"});
    EXPECT_EQ(r.code, 2);
}

TEST_F(CliTest, EnvironmentSetsThreads)
{
    ::setenv("SVCMLE_THREADS", "3", 1);
    ASSERT_EQ(run_cli({"simulate", "--q", "2", "--out", path("s")}).code, 0);
    ::unsetenv("SVCMLE_THREADS");
    ::setenv("SVCMLE_THREADS", "banana", 1);
    EXPECT_EQ(run_cli({"simulate", "--q", "2", "--out", path("s")}).code, 2);
    ::unsetenv("SVCMLE_THREADS");
}

TEST_F(CliTest, BinaryDeterministicAcrossThreadCounts)
{
    const std::string exe = SVCMLE_CLI_PATH;
    auto sh = [&](const std::string& cmd) { return std::system((cmd + " >/dev/null 2>&1").c_str()); };
    ASSERT_EQ(sh(exe + " simulate --q 6 --seed 11 --out " + path("s")), 0);
    ASSERT_EQ(sh(exe + " --threads 1 fit --data " + path("s/dataset.csv") + " --out " + path("a.json")), 0);
    ASSERT_EQ(sh(exe + " --threads 8 fit --data " + path("s/dataset.csv") + " --out " + path("b.json")), 0);
    EXPECT_EQ(slurp(path("a.json")), slurp(path("b.json")));
    EXPECT_EQ(WEXITSTATUS(sh(exe + " fit --no-such-flag")), 2);
}
