#pragma once

// Command-line workflows: simulate, fit, predict, validate, neighbors and
// experiment. Every subcommand reads and writes files only, so a run is a
// function of its inputs, flags and seed.

#include "io.hpp"

#include <CLI11.hpp>

#include <filesystem>
#include <iostream>

namespace svcmle::cli {

enum ExitCode : int { ok = 0, runtime_failure = 1, usage_error = 2 };

// Raised while turning flags into settings; reported with exit code 2.
class UsageError : public SvcError {
public:
    using SvcError::SvcError;
};

template <typename F>
auto configure(F&& f) -> decltype(f())
{
    try {
        return f();
    } catch (const UsageError&) {
        throw;
    } catch (const std::exception& e) {
        throw UsageError(e.what());
    }
}

struct DataOptions {
    std::string path;
    std::string y = "y";
    std::vector<std::string> x;
    std::vector<std::string> coords;
    std::string partition;
    std::string fold = "train";

    void add(CLI::App& app, bool required = true)
    {
        auto* opt = app.add_option("--data", path, "Dataset CSV with a header row");
        if (required) {
            opt->required();
        }
        opt->check(CLI::ExistingFile);
        app.add_option("--y", y, "Response column")->capture_default_str();
        app.add_option("--x", x, "Covariate columns (default x1, x2, ...)")->delimiter(',');
        app.add_option("--coords", coords, "Coordinate columns (default s1, s2, ...)")->delimiter(',');
        app.add_option("--partition", partition, "Partition CSV from simulate; restricts rows to --fold")
            ->check(CLI::ExistingFile);
        app.add_option("--fold", fold, "Fold used with --partition")
            ->check(CLI::IsMember({"train", "interpolate", "extrapolate"}))
            ->capture_default_str();
    }

    CsvTable table() const { return read_csv(path); }

    std::vector<Index> rows(Index n) const
    {
        std::vector<Index> out;
        if (partition.empty()) {
            out.resize(static_cast<std::size_t>(n));
            std::iota(out.begin(), out.end(), Index{0});
            return out;
        }
        std::ifstream in(partition);
        std::string line;
        if (!std::getline(in, line) || trim(line) != "row,fold") {
            throw IoError("partition: '" + partition + "' must start with the header row,fold");
        }
        while (std::getline(in, line)) {
            const auto cells = split(trim(line), ',');
            if (cells.size() != 2) {
                continue;
            }
            if (trim(cells[1]) == fold) {
                const auto r = static_cast<Index>(parse_double(cells[0], "partition"));
                if (r < 0 || r >= n) {
                    throw IoError("partition: row index out of range");
                }
                out.push_back(r);
            }
        }
        if (out.empty()) {
            throw IoError("partition: fold '" + fold + "' is empty");
        }
        return out;
    }

    SvcDataset dataset() const
    {
        const CsvTable t = table();
        return load(t);
    }

    SvcDataset load(const CsvTable& t) const
    {
        const SvcDataset all = dataset_from_table(t, ColumnRoles{y, x, coords});
        return partition.empty() ? all : all.subset(rows(all.n()));
    }
};

struct ModelOptions {
    double taper_range = 0.0;
    std::string taper_family = "wendland1";
    std::string reg = "off";
    double nu = 0.5;
    Index max_iterations = 500;
    double gtol = 1e-5;
    double ftol = 1e-9;
    std::string fd_scheme = "central";
    double fd_step = 1e-6;
    Index history = 10;
    Index starts = 1;
    std::uint64_t seed = 0;
    std::string mode = "profile";
    std::string space = "log";

    void add(CLI::App& app)
    {
        app.add_option("--taper-range", taper_range, "Taper range; 0 disables tapering")->capture_default_str();
        app.add_option("--taper-family", taper_family, "Taper family")
            ->check(CLI::IsMember({"wendland1", "spherical"}))
            ->capture_default_str();
        app.add_option("--reg", reg, "Regularization: off or pc:rho0=R,alpha=A,sigma0=S,alpha=B")
            ->capture_default_str();
        app.add_option("--nu", nu, "Matern smoothness of every process")->capture_default_str();
        app.add_option("--max-iter", max_iterations, "Optimizer iteration limit")->capture_default_str();
        app.add_option("--gtol", gtol, "Gradient inf-norm tolerance")->capture_default_str();
        app.add_option("--ftol", ftol, "Relative objective tolerance")->capture_default_str();
        app.add_option("--fd-scheme", fd_scheme, "Finite-difference scheme")
            ->check(CLI::IsMember({"central", "forward"}))
            ->capture_default_str();
        app.add_option("--fd-step", fd_step, "Finite-difference step")->capture_default_str();
        app.add_option("--history", history, "Curvature pairs kept by L-BFGS")->capture_default_str();
        app.add_option("--starts", starts, "Number of optimizer starts")->capture_default_str();
        app.add_option("--opt-seed", seed, "Seed for perturbed restarts")->capture_default_str();
        app.add_option("--mode", mode, "profile (mean profiled out) or joint")
            ->check(CLI::IsMember({"profile", "joint"}))
            ->capture_default_str();
        app.add_option("--space", space, "log (log parameters) or box (bounded raw parameters)")
            ->check(CLI::IsMember({"log", "box"}))
            ->capture_default_str();
    }

    ModelConfig resolve() const
    {
        return configure([&] {
            ModelConfig m;
            if (taper_range < 0.0) {
                throw InvalidArgument("--taper-range must be nonnegative");
            }
            if (taper_range > 0.0) {
                m.taper = TaperSpec{parse_taper_family(taper_family), taper_range};
                m.taper.check_supports(nu);
            }
            m.reg = parse_regularization(reg);
            m.nu = nu;
            OptimizerConfig& c = m.optimizer;
            c.max_iterations = max_iterations;
            c.gradient_tolerance = gtol;
            c.objective_tolerance = ftol;
            c.fd_scheme = parse_fd_scheme(fd_scheme);
            c.fd_step = fd_step;
            c.history = history;
            c.starts = starts;
            c.seed = seed;
            c.mode = parse_fit_mode(mode);
            c.space = parse_param_space(space);
            c.validate();
            if (!(nu > 0.0)) {
                throw InvalidArgument("--nu must be positive");
            }
            return m;
        });
    }
};

struct Context {
    std::ostream& out;
    std::ostream& err;
    int verbosity = 0;
};

inline std::string join_path(const std::string& dir, const std::string& file)
{
    return (std::filesystem::path(dir) / file).string();
}

inline void ensure_dir(const std::string& dir)
{
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) {
        throw IoError("cannot create directory '" + dir + "': " + ec.message());
    }
}

// simulate -------------------------------------------------------------------

struct SimulateOptions {
    Index q = 5;
    double delta = 0.2;
    Index p = 0;
    std::string preset;
    std::uint64_t seed = 1;
    Index periods = 0;
    Index dense_cap = kDefaultDenseSampleCap;
    std::string out_dir = ".";
};

inline TrueModelSpec resolve_truth(const std::string& preset, Index p)
{
    if (preset.empty()) {
        return TrueModelSpec::leading(p == 0 ? 3 : p);
    }
    TrueModelSpec t = preset_setting(preset).truth;
    if (p != 0 && p != t.p()) {
        throw InvalidArgument("--p " + std::to_string(p) + " conflicts with preset " + preset + " (p = " +
                              std::to_string(t.p()) + ")");
    }
    return t;
}

inline int cmd_simulate(const SimulateOptions& o, Context& ctx)
{
    const auto [grid, truth] = configure([&] {
        PerturbedGridSpec g{o.q, o.delta};
        g.validate();
        TrueModelSpec t = resolve_truth(o.preset, o.p);
        if (o.periods < 0) {
            throw InvalidArgument("--periods must be nonnegative");
        }
        return std::pair{g, t};
    });
    const Locations locs = perturbed_grid(grid, o.seed);
    const SimulatedData sim = sample_svc_dataset(locs, truth, o.seed, o.dense_cap);
    const FoldPartition part = partition(locs, o.seed);
    ensure_dir(o.out_dir);

    std::vector<std::string> header = dataset_header(truth.p(), 2);
    Matrix table = dataset_matrix(sim.data);
    if (o.periods > 0) {
        auto rng = make_rng(o.seed, Stream::periods);
        std::uniform_int_distribution<Index> period(1, o.periods);
        header.push_back("period");
        table.conservativeResize(Eigen::NoChange, table.cols() + 1);
        for (Index i = 0; i < table.rows(); ++i) {
            table(i, table.cols() - 1) = static_cast<double>(period(rng));
        }
    }
    write_csv(join_path(o.out_dir, "dataset.csv"), header, table);

    std::vector<std::string> beta_header;
    for (Index j = 1; j <= truth.p(); ++j) {
        beta_header.push_back("beta" + std::to_string(j));
    }
    write_csv(join_path(o.out_dir, "true_beta.csv"), beta_header, sim.beta);

    std::vector<std::string> fold_of(static_cast<std::size_t>(locs.rows()));
    for (Fold f : {Fold::train, Fold::interpolate, Fold::extrapolate}) {
        for (Index i : fold_indices(part, f)) {
            fold_of[i] = std::string(to_string(f));
        }
    }
    auto pf = open_output(join_path(o.out_dir, "partition.csv"));
    pf << "row,fold\n";
    for (std::size_t i = 0; i < fold_of.size(); ++i) {
        pf << i << ',' << fold_of[i] << '\n';
    }

    ctx.out << "simulated " << locs.rows() << " observations, p = " << truth.p() << ", seed " << o.seed
            << " (train " << part.train.size() << ", interpolate " << part.interpolate.size() << ", extrapolate "
            << part.extrapolate.size() << ") -> " << o.out_dir << "\n";
    return ok;
}

// fit ------------------------------------------------------------------------

struct FitOptions {
    DataOptions data;
    ModelOptions model;
    std::string out = "fit.json";
    std::string trace;
};

inline int cmd_fit(const FitOptions& o, Context& ctx)
{
    const ModelConfig model = o.model.resolve();
    const SvcDataset d = configure([&] { return o.data.dataset(); });
    for (const auto& f : validate_dataset(d)) {
        if (ctx.verbosity > 0 || f.severity == Finding::Severity::error) {
            ctx.err << "dataset: " << f.code << ": " << f.message << "\n";
        }
    }
    std::vector<TraceRow> trace;
    const CovParams init = default_init(d, model.nu);
    FitRecord rec;
    rec.fit = fit(d, init, model.taper, model.reg, model.optimizer, &trace);
    rec.taper = model.taper;
    rec.reg = model.reg;
    rec.optimizer = model.optimizer;
    write_text(o.out, fit_to_json(rec));
    if (!o.trace.empty()) {
        auto t = open_output(o.trace);
        write_trace_csv(t, trace);
    }
    ctx.out << "objective " << format_double(rec.fit.objective) << ", converged "
            << (rec.fit.converged ? "true" : "false") << ", iterations " << rec.fit.iterations << " ("
            << rec.fit.diagnostics.message << ") -> " << o.out << "\n";
    return rec.fit.converged || std::isfinite(rec.fit.objective) ? ok : runtime_failure;
}

// predict --------------------------------------------------------------------

struct PredictOptionsCli {
    DataOptions data;
    std::string fit_path;
    std::string new_path;
    std::vector<std::string> new_x;
    std::vector<std::string> new_coords;
    std::string out = "predictions.csv";
    bool latent = false;
    Index batch = 256;
};

inline int cmd_predict(const PredictOptionsCli& o, Context& ctx)
{
    const FitRecord rec = configure([&] { return fit_from_json(read_text(o.fit_path)); });
    const SvcDataset train = configure([&] { return o.data.dataset(); });
    const CsvTable fresh = configure([&] { return read_csv(o.new_path); });
    PredictionRequest req;
    configure([&] {
        const auto ss = o.new_coords.empty() ? fresh.numbered("s") : o.new_coords;
        if (ss.empty()) {
            throw IoError("new locations: no coordinate columns");
        }
        req.locations = fresh.columns(ss);
        const auto xs = o.new_x.empty() ? fresh.numbered("x") : o.new_x;
        if (!xs.empty()) {
            req.x = fresh.columns(xs);
        }
        if (rec.fit.theta.p() != train.p()) {
            throw DimensionMismatch("fit has " + std::to_string(rec.fit.theta.p()) + " processes, data has " +
                                    std::to_string(train.p()) + " covariates");
        }
        return 0;
    });
    if (!rec.fit.converged) {
        ctx.err << "warning: predicting from a fit that did not converge\n";
    }
    const PredictionResult pred = predict(rec.fit, train, req, rec.taper, PredictOptions{!o.latent, o.batch});

    const Index m = req.locations.rows();
    const Index p = train.p();
    const Index dim = req.locations.cols();
    std::vector<std::string> header;
    for (Index c = 1; c <= dim; ++c) {
        header.push_back("s" + std::to_string(c));
    }
    for (Index j = 1; j <= p; ++j) {
        header.push_back("beta" + std::to_string(j));
    }
    Matrix table(m, dim + p + (req.x ? 2 : 0));
    table.leftCols(dim) = req.locations;
    table.middleCols(dim, p) = pred.beta;
    if (req.x) {
        header.push_back("y_hat");
        header.push_back("pred_sd");
        table.col(dim + p) = *pred.y_hat;
        table.col(dim + p + 1) = pred.pred_var->cwiseSqrt();
    }
    write_csv(o.out, header, table);
    if (pred.clamped > 0) {
        ctx.err << "note: " << pred.clamped << " predictive variances were slightly negative and set to 0\n";
    }
    ctx.out << "predicted " << m << " locations -> " << o.out << "\n";
    return ok;
}

// validate -------------------------------------------------------------------

struct ValidateOptions {
    DataOptions data;
    ModelOptions model;
    std::string time_column = "period";
    Index window = 6;
    Index horizon = 1;
    std::string out = "validation.csv";
    std::string errors;
};

inline int cmd_validate(const ValidateOptions& o, Context& ctx)
{
    const ModelConfig model = o.model.resolve();
    const auto [d, time] = configure([&] {
        const CsvTable t = o.data.table();
        const SvcDataset all = dataset_from_table(t, ColumnRoles{o.data.y, o.data.x, o.data.coords});
        return std::pair{all, Vector(t.data.col(t.column(o.time_column)))};
    });
    const auto [window, horizon] = configure([&] {
        std::set<double> distinct(time.data(), time.data() + time.size());
        if (moving_window_folds(static_cast<Index>(distinct.size()), o.window, o.horizon) < 1 || o.window < 1 ||
            o.horizon < 1) {
            throw InvalidArgument("insufficient periods: " + std::to_string(distinct.size()) +
                                  " distinct values for window " + std::to_string(o.window) + " and horizon " +
                                  std::to_string(o.horizon));
        }
        return std::pair{o.window, o.horizon};
    });
    const ValidationResult res = moving_window_validate(d, time, window, horizon, model);

    auto out = open_output(o.out);
    out << "fold,first_train_period,last_train_period,first_test_period,last_test_period,n_train,n_test,rmse,crps,"
           "converged\n";
    for (const auto& f : res.folds) {
        out << f.fold << ',' << format_double(f.first_train_period) << ',' << format_double(f.last_train_period)
            << ',' << format_double(f.first_test_period) << ',' << format_double(f.last_test_period) << ','
            << f.n_train << ',' << f.n_test << ',' << format_double(f.rmse) << ',' << format_double(f.crps) << ','
            << (f.converged ? 1 : 0) << '\n';
    }
    if (!o.errors.empty()) {
        auto e = open_output(o.errors);
        e << "fold,row,period,y,y_hat,error,pred_sd,crps\n";
        for (const auto& r : res.errors) {
            e << r.fold << ',' << r.row << ',' << format_double(r.period) << ',' << format_double(r.y) << ','
              << format_double(r.y_hat) << ',' << format_double(r.error) << ',' << format_double(r.sd) << ','
              << format_double(r.crps) << '\n';
        }
    }
    ctx.out << res.folds.size() << " folds -> " << o.out << "\n";
    return ok;
}

// neighbors ------------------------------------------------------------------

struct NeighborsOptions {
    DataOptions data;
    double range = 0.0;
    std::string out;
};

inline int cmd_neighbors(const NeighborsOptions& o, Context& ctx)
{
    const Locations locs = configure([&] {
        if (!(o.range > 0.0)) {
            throw InvalidArgument("--range must be positive");
        }
        const CsvTable t = o.data.table();
        const auto ss = o.data.coords.empty() ? t.numbered("s") : o.data.coords;
        if (ss.empty()) {
            throw IoError("neighbors: no coordinate columns");
        }
        return Locations(t.columns(ss));
    });
    const NeighborProfile prof = neighbor_count_profile(locs, o.range);
    if (!o.out.empty()) {
        auto f = open_output(o.out);
        f << "row,neighbors\n";
        for (std::size_t i = 0; i < prof.counts.size(); ++i) {
            f << i << ',' << prof.counts[i] << '\n';
        }
    }
    const char* names[] = {"min", "q1", "median", "q3", "max"};
    ctx.out << "neighbors within " << format_double(o.range) << ":";
    for (std::size_t k = 0; k < prof.summary.size(); ++k) {
        ctx.out << ' ' << names[k] << '=' << format_double(prof.summary[k]);
    }
    ctx.out << "\n";
    return ok;
}

// experiment -----------------------------------------------------------------

struct ExperimentOptions {
    ModelOptions model;
    std::string preset = "sim1";
    Index q = 0;
    double delta = 0.2;
    Index replications = 1;
    std::uint64_t seed = 1;
    Index dense_cap = kDefaultDenseSampleCap;
    bool keep_preset_model = true;
    std::string out_dir = ".";
};

inline int cmd_experiment(const ExperimentOptions& o, Context& ctx)
{
    const ExperimentSetting setting = configure([&] {
        ExperimentSetting s = preset_setting(o.preset);
        if (o.q > 0) {
            s.grid.q = o.q;
        }
        s.grid.delta = o.delta;
        s.replications = o.replications;
        s.base_seed = o.seed;
        s.dense_cap = o.dense_cap;
        const ModelConfig m = o.model.resolve();
        s.model.optimizer = m.optimizer;
        s.model.nu = m.nu;
        if (!o.keep_preset_model) {
            s.model.taper = m.taper;
            s.model.reg = m.reg;
        }
        s.validate();
        return s;
    });
    const ExperimentTable t = run_replicated_experiment(setting);
    ensure_dir(o.out_dir);
    auto metrics = open_output(join_path(o.out_dir, "metrics.csv"));
    auto estimates = open_output(join_path(o.out_dir, "estimates.csv"));
    write_experiment_csv(metrics, estimates, t);
    auto failures = open_output(join_path(o.out_dir, "failures.csv"));
    failures << "replication,seed,message\n";
    for (const auto& f : t.failures) {
        std::string msg = f.message;
        std::replace(msg.begin(), msg.end(), ',', ';');
        std::replace(msg.begin(), msg.end(), '\n', ' ');
        failures << f.replication << ',' << f.seed << ',' << msg << '\n';
    }
    ctx.out << setting.replications << " replications (" << t.failures.size() << " failed) -> " << o.out_dir
            << "\n";
    return t.failures.size() == static_cast<std::size_t>(setting.replications) ? runtime_failure : ok;
}

// entry point ------------------------------------------------------------------

inline int run(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr)
{
    CLI::App app{"Maximum-likelihood estimation and prediction of spatially varying coefficient models", "svcmle"};
    app.require_subcommand(1);
    app.set_config("--config", "", "Read options from a TOML/INI file")->check(CLI::ExistingFile);
    app.allow_config_extras(false);
    int threads = 0;
    int verbosity = 0;
    app.add_option("--threads", threads, "Worker threads (0: all cores)")->envname("SVCMLE_THREADS");
    app.add_option("--verbose", verbosity, "Verbosity level")->envname("SVCMLE_VERBOSE");

    SimulateOptions sim;
    auto* s = app.add_subcommand("simulate", "Simulate an SVC dataset on a perturbed grid");
    s->add_option("--q", sim.q, "Grid parameter; n = (2q)^2 locations")->capture_default_str();
    s->add_option("--delta", sim.delta, "Cell margin in [0, 0.5)")->capture_default_str();
    s->add_option("--p", sim.p, "Number of coefficient processes (default: preset or 3)");
    s->add_option("--preset", sim.preset, "True model preset")->check(CLI::IsMember({"sim1", "sim2", "sim3"}));
    s->add_option("--seed", sim.seed, "Random seed")->capture_default_str();
    s->add_option("--periods", sim.periods, "Add a period column with this many periods")->capture_default_str();
    s->add_option("--dense-cap", sim.dense_cap, "Largest n sampled with a dense Cholesky")->capture_default_str();
    s->add_option("--out", sim.out_dir, "Output directory")->capture_default_str();

    FitOptions fo;
    auto* f = app.add_subcommand("fit", "Fit an SVC model by (regularized) maximum likelihood");
    fo.data.add(*f);
    fo.model.add(*f);
    f->add_option("--out", fo.out, "Fit result JSON")->capture_default_str();
    f->add_option("--trace", fo.trace, "Iteration trace CSV");

    PredictOptionsCli po;
    auto* pr = app.add_subcommand("predict", "Predict coefficients and responses at new locations");
    po.data.add(*pr);
    pr->add_option("--fit", po.fit_path, "Fit result JSON")->required()->check(CLI::ExistingFile);
    pr->add_option("--new", po.new_path, "CSV with new coordinates (s1, s2, ...) and optional covariates")
        ->required()
        ->check(CLI::ExistingFile);
    pr->add_option("--new-x", po.new_x, "Covariate columns of the new CSV")->delimiter(',');
    pr->add_option("--new-coords", po.new_coords, "Coordinate columns of the new CSV")->delimiter(',');
    pr->add_option("--out", po.out, "Prediction CSV")->capture_default_str();
    pr->add_flag("--latent", po.latent, "Exclude the nugget from predictive variances");
    pr->add_option("--batch", po.batch, "Locations per prediction batch")->capture_default_str();

    ValidateOptions vo;
    auto* v = app.add_subcommand("validate", "Moving-window validation over time periods");
    vo.data.add(*v);
    vo.model.add(*v);
    v->add_option("--time-column", vo.time_column, "Period column")->capture_default_str();
    v->add_option("--window", vo.window, "Training window length in periods")->capture_default_str();
    v->add_option("--horizon", vo.horizon, "Test periods after each window")->capture_default_str();
    v->add_option("--out", vo.out, "Per-fold RMSE and CRPS CSV")->capture_default_str();
    v->add_option("--errors", vo.errors, "Per-observation error CSV");

    NeighborsOptions no;
    auto* nb = app.add_subcommand("neighbors", "Count neighbors within a taper range");
    no.data.add(*nb);
    nb->add_option("--range", no.range, "Taper range")->required();
    nb->add_option("--out", no.out, "Per-point count CSV");

    ExperimentOptions eo;
    auto* ex = app.add_subcommand("experiment", "Replicated simulation study");
    eo.model.add(*ex);
    ex->add_option("--preset", eo.preset, "Setting preset")
        ->check(CLI::IsMember({"sim1", "sim2", "sim3"}))
        ->capture_default_str();
    ex->add_option("--q", eo.q, "Grid parameter (default: preset)");
    ex->add_option("--delta", eo.delta, "Cell margin")->capture_default_str();
    ex->add_option("--replications", eo.replications, "Number of replications")->capture_default_str();
    ex->add_option("--seed", eo.seed, "Base seed; replication w uses seed + w")->capture_default_str();
    ex->add_option("--dense-cap", eo.dense_cap, "Largest n sampled with a dense Cholesky")->capture_default_str();
    bool custom_model = false;
    ex->add_flag("--custom-model", custom_model, "Use --taper-* and --reg instead of the preset's");
    ex->add_option("--out", eo.out_dir, "Output directory")->capture_default_str();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e, out, err);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e, out, err);
    } catch (const CLI::CallForVersion& e) {
        return app.exit(e, out, err);
    } catch (const CLI::ParseError& e) {
        app.exit(e, out, err);
        return usage_error;
    }
    eo.keep_preset_model = !custom_model;
    if (threads < 0) {
        err << "error: --threads must be nonnegative\n";
        return usage_error;
    }
    set_num_threads(threads);

    Context ctx{out, err, verbosity};
    try {
        if (*s) {
            return cmd_simulate(sim, ctx);
        }
        if (*f) {
            return cmd_fit(fo, ctx);
        }
        if (*pr) {
            return cmd_predict(po, ctx);
        }
        if (*v) {
            return cmd_validate(vo, ctx);
        }
        if (*nb) {
            return cmd_neighbors(no, ctx);
        }
        if (*ex) {
            return cmd_experiment(eo, ctx);
        }
    } catch (const UsageError& e) {
        err << "error: " << e.what() << "\n";
        return usage_error;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return runtime_failure;
    }
    return usage_error;
}

} // namespace svcmle::cli
