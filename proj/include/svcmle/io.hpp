#pragma once

// File formats: CSV with a header row for tables, JSON for fit results.
// Floating-point values are written so that reading them back gives the same
// doubles.

#include "simulation.hpp"

#include <json.hpp>

#include <cstdio>
#include <fstream>
#include <sstream>

namespace svcmle {

class IoError : public SvcError {
public:
    using SvcError::SvcError;
};

inline std::string format_double(double v)
{
    if (std::isnan(v)) {
        return "nan";
    }
    if (std::isinf(v)) {
        return v > 0 ? "inf" : "-inf";
    }
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

inline double parse_double(const std::string& s, std::string_view what)
{
    std::size_t used = 0;
    double v = 0.0;
    try {
        v = std::stod(s, &used);
    } catch (const std::exception&) {
        throw IoError(std::string(what) + ": cannot parse '" + s + "' as a number");
    }
    while (used < s.size() && std::isspace(static_cast<unsigned char>(s[used]))) {
        ++used;
    }
    if (used != s.size()) {
        throw IoError(std::string(what) + ": cannot parse '" + s + "' as a number");
    }
    return v;
}

inline std::vector<std::string> split(const std::string& s, char sep)
{
    std::vector<std::string> out;
    std::string cur;
    std::istringstream in(s);
    while (std::getline(in, cur, sep)) {
        out.push_back(cur);
    }
    if (!s.empty() && s.back() == sep) {
        out.emplace_back();
    }
    return out;
}

inline std::string trim(std::string s)
{
    const auto issp = [](unsigned char c) { return std::isspace(c) != 0; };
    while (!s.empty() && issp(static_cast<unsigned char>(s.back()))) {
        s.pop_back();
    }
    std::size_t i = 0;
    while (i < s.size() && issp(static_cast<unsigned char>(s[i]))) {
        ++i;
    }
    return s.substr(i);
}

// Numeric table with named columns.
struct CsvTable {
    std::vector<std::string> header;
    Matrix data;

    Index column(std::string_view name) const
    {
        for (std::size_t c = 0; c < header.size(); ++c) {
            if (header[c] == name) {
                return static_cast<Index>(c);
            }
        }
        throw IoError("csv: no column named '" + std::string(name) + "'");
    }

    bool has_column(std::string_view name) const
    {
        return std::find(header.begin(), header.end(), name) != header.end();
    }

    Matrix columns(const std::vector<std::string>& names) const
    {
        Matrix out(data.rows(), static_cast<Index>(names.size()));
        for (std::size_t k = 0; k < names.size(); ++k) {
            out.col(static_cast<Index>(k)) = data.col(column(names[k]));
        }
        return out;
    }

    // Columns named prefix1, prefix2, ... in numeric order.
    std::vector<std::string> numbered(std::string_view prefix) const
    {
        std::vector<std::string> out;
        for (Index k = 1;; ++k) {
            std::string name = std::string(prefix) + std::to_string(k);
            if (!has_column(name)) {
                break;
            }
            out.push_back(std::move(name));
        }
        return out;
    }
};

inline CsvTable read_csv(const std::string& path)
{
    std::ifstream in(path);
    if (!in) {
        throw IoError("csv: cannot open '" + path + "'");
    }
    CsvTable t;
    std::string line;
    if (!std::getline(in, line)) {
        throw IoError("csv: '" + path + "' is empty");
    }
    if (!line.empty() && line.back() == '\r') {
        line.pop_back();
    }
    for (auto& h : split(line, ',')) {
        t.header.push_back(trim(h));
    }
    std::vector<double> values;
    Index rows = 0;
    Index lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') {
            line.pop_back();
        }
        if (trim(line).empty()) {
            continue;
        }
        const auto cells = split(line, ',');
        if (cells.size() != t.header.size()) {
            throw IoError("csv: '" + path + "' line " + std::to_string(lineno) + " has " +
                          std::to_string(cells.size()) + " fields, header has " + std::to_string(t.header.size()));
        }
        for (const auto& c : cells) {
            values.push_back(parse_double(trim(c), path + " line " + std::to_string(lineno)));
        }
        ++rows;
    }
    const auto cols = static_cast<Index>(t.header.size());
    t.data = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(values.data(),
                                                                                                      rows, cols);
    return t;
}

inline void write_csv(std::ostream& out, const std::vector<std::string>& header, const Matrix& data)
{
    for (std::size_t c = 0; c < header.size(); ++c) {
        out << (c ? "," : "") << header[c];
    }
    out << '\n';
    for (Index i = 0; i < data.rows(); ++i) {
        for (Index c = 0; c < data.cols(); ++c) {
            out << (c ? "," : "") << format_double(data(i, c));
        }
        out << '\n';
    }
}

inline std::ofstream open_output(const std::string& path)
{
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw IoError("cannot write '" + path + "'");
    }
    return out;
}

inline void write_csv(const std::string& path, const std::vector<std::string>& header, const Matrix& data)
{
    auto out = open_output(path);
    write_csv(out, header, data);
}

struct ColumnRoles {
    std::string y = "y";
    std::vector<std::string> x;      // empty: x1, x2, ...
    std::vector<std::string> coords; // empty: s1, s2, ...
};

inline SvcDataset dataset_from_table(const CsvTable& t, const ColumnRoles& roles = {})
{
    const auto xs = roles.x.empty() ? t.numbered("x") : roles.x;
    const auto ss = roles.coords.empty() ? t.numbered("s") : roles.coords;
    if (xs.empty()) {
        throw IoError("dataset: no covariate columns (expected x1, x2, ...)");
    }
    if (ss.empty()) {
        throw IoError("dataset: no coordinate columns (expected s1, s2, ...)");
    }
    SvcDataset d;
    d.y = t.data.col(t.column(roles.y));
    d.x = t.columns(xs);
    d.locations = t.columns(ss);
    return d;
}

inline std::vector<std::string> dataset_header(Index p, Index dim)
{
    std::vector<std::string> h{"y"};
    for (Index j = 1; j <= p; ++j) {
        h.push_back("x" + std::to_string(j));
    }
    for (Index c = 1; c <= dim; ++c) {
        h.push_back("s" + std::to_string(c));
    }
    return h;
}

inline Matrix dataset_matrix(const SvcDataset& d)
{
    Matrix m(d.n(), 1 + d.p() + d.dim());
    m << d.y, d.x, d.locations;
    return m;
}

// "off", or "pc:rho0=R,alpha=A,sigma0=S,alpha=B". An `alpha` refers to the
// most recent rho0 or sigma0; alpha_rho, alpha_sigma, lambda_rho and
// lambda_sigma may also be given by name. Several groups separated by ';'
// give one rate pair per coefficient process.
inline std::optional<PcPriorSpec> parse_regularization(const std::string& text)
{
    const std::string s = trim(text);
    if (s.empty() || s == "off" || s == "none") {
        return std::nullopt;
    }
    if (s.rfind("pc:", 0) != 0) {
        throw InvalidArgument("regularization: expected 'off' or 'pc:key=value,...', got '" + s + "'");
    }
    std::vector<PcPriorSpec::Rates> rates;
    for (const auto& group : split(s.substr(3), ';')) {
        std::optional<double> rho0, sigma0, alpha_rho, alpha_sigma, lambda_rho, lambda_sigma;
        enum class Last { none, rho, sigma } last = Last::none;
        for (const auto& item : split(group, ',')) {
            const auto eq = item.find('=');
            if (eq == std::string::npos) {
                throw InvalidArgument("regularization: expected key=value, got '" + item + "'");
            }
            const std::string key = trim(item.substr(0, eq));
            const double v = parse_double(trim(item.substr(eq + 1)), "regularization");
            if (key == "rho0") {
                rho0 = v;
                last = Last::rho;
            } else if (key == "sigma0") {
                sigma0 = v;
                last = Last::sigma;
            } else if (key == "alpha_rho") {
                alpha_rho = v;
            } else if (key == "alpha_sigma") {
                alpha_sigma = v;
            } else if (key == "lambda_rho") {
                lambda_rho = v;
            } else if (key == "lambda_sigma") {
                lambda_sigma = v;
            } else if (key == "alpha") {
                if (last == Last::rho) {
                    alpha_rho = v;
                } else if (last == Last::sigma) {
                    alpha_sigma = v;
                } else {
                    throw InvalidArgument("regularization: 'alpha' must follow rho0 or sigma0");
                }
            } else {
                throw InvalidArgument("regularization: unknown key '" + key + "'");
            }
        }
        PcPriorSpec::Rates r;
        if (lambda_rho) {
            r.lambda_rho = *lambda_rho;
        } else if (rho0 && alpha_rho) {
            r.lambda_rho = PcPriorSpec::rates_from_tails(*rho0, *alpha_rho, 1.0, 0.5).lambda_rho;
        } else {
            throw InvalidArgument("regularization: need rho0 with alpha, or lambda_rho");
        }
        if (lambda_sigma) {
            r.lambda_sigma = *lambda_sigma;
        } else if (sigma0 && alpha_sigma) {
            r.lambda_sigma = PcPriorSpec::rates_from_tails(1.0, 0.5, *sigma0, *alpha_sigma).lambda_sigma;
        } else {
            throw InvalidArgument("regularization: need sigma0 with alpha, or lambda_sigma");
        }
        rates.push_back(r);
    }
    PcPriorSpec spec = PcPriorSpec::from_rates(std::move(rates));
    spec.check(static_cast<Index>(spec.rates.size()));
    return spec;
}

// A fit together with the settings that produced it.
struct FitRecord {
    FitResult fit;
    TaperSpec taper;
    std::optional<PcPriorSpec> reg;
    OptimizerConfig optimizer;
};

namespace detail {

using nlohmann::json;

inline json number(double v)
{
    if (std::isfinite(v)) {
        return v;
    }
    return format_double(v);
}

inline double number_from(const json& j)
{
    if (j.is_string()) {
        const auto s = j.get<std::string>();
        if (s == "inf") {
            return std::numeric_limits<double>::infinity();
        }
        if (s == "-inf") {
            return -std::numeric_limits<double>::infinity();
        }
        if (s == "nan") {
            return std::numeric_limits<double>::quiet_NaN();
        }
        throw IoError("fit json: bad number '" + s + "'");
    }
    return j.get<double>();
}

inline json theta_json(const CovParams& t)
{
    json svc = json::array();
    for (const auto& m : t.svc) {
        svc.push_back({{"rho", m.rho}, {"sigma2", m.sigma2}, {"nu", m.nu}});
    }
    return {{"svc", svc}, {"nugget", t.nugget}};
}

inline CovParams theta_from_json(const json& j)
{
    CovParams t;
    for (const auto& m : j.at("svc")) {
        t.svc.push_back({m.at("rho").get<double>(), m.at("sigma2").get<double>(), m.at("nu").get<double>()});
    }
    t.nugget = j.at("nugget").get<double>();
    return t;
}

inline std::string_view to_string(FdScheme s) { return s == FdScheme::central ? "central" : "forward"; }
inline std::string_view to_string(FitMode m) { return m == FitMode::profile ? "profile" : "joint"; }
inline std::string_view to_string(ParamSpace s) { return s == ParamSpace::log ? "log" : "box"; }

} // namespace detail

inline FdScheme parse_fd_scheme(std::string_view s)
{
    if (s == "central") {
        return FdScheme::central;
    }
    if (s == "forward") {
        return FdScheme::forward;
    }
    throw InvalidArgument("unknown finite-difference scheme '" + std::string(s) + "'");
}

inline FitMode parse_fit_mode(std::string_view s)
{
    if (s == "profile") {
        return FitMode::profile;
    }
    if (s == "joint") {
        return FitMode::joint;
    }
    throw InvalidArgument("unknown fit mode '" + std::string(s) + "'");
}

inline ParamSpace parse_param_space(std::string_view s)
{
    if (s == "log") {
        return ParamSpace::log;
    }
    if (s == "box") {
        return ParamSpace::box;
    }
    throw InvalidArgument("unknown parameter space '" + std::string(s) + "'");
}

inline std::string fit_to_json(const FitRecord& rec)
{
    using detail::json;
    const FitResult& r = rec.fit;
    json j;
    j["format"] = "svcmle-fit";
    j["version"] = 1;
    j["theta"] = detail::theta_json(r.theta);
    j["mu"] = std::vector<double>(r.mu.mu.data(), r.mu.mu.data() + r.mu.mu.size());
    j["objective"] = detail::number(r.objective);
    j["converged"] = r.converged;
    j["iterations"] = r.iterations;
    j["function_evaluations"] = r.function_evaluations;
    j["jitter_events"] = r.jitter_events;
    j["gradient_norm"] = detail::number(r.gradient_norm);
    j["diagnostics"] = {{"message", r.diagnostics.message}};
    if (r.diagnostics.failing_theta) {
        j["diagnostics"]["failing_theta"] = detail::theta_json(*r.diagnostics.failing_theta);
    }
    j["taper"] = {{"family", std::string(to_string(rec.taper.family))}};
    if (rec.taper.active()) {
        j["taper"]["range"] = rec.taper.range;
    }
    if (rec.reg && rec.reg->enabled()) {
        json rates = json::array();
        for (const auto& x : rec.reg->rates) {
            rates.push_back({{"lambda_rho", x.lambda_rho}, {"lambda_sigma", x.lambda_sigma}});
        }
        j["regularization"] = {{"family", "pc"}, {"rates", rates}};
    } else {
        j["regularization"] = {{"family", "off"}};
    }
    const OptimizerConfig& c = rec.optimizer;
    j["optimizer"] = {{"mode", std::string(detail::to_string(c.mode))},
                      {"space", std::string(detail::to_string(c.space))},
                      {"max_iterations", c.max_iterations},
                      {"gradient_tolerance", c.gradient_tolerance},
                      {"objective_tolerance", c.objective_tolerance},
                      {"fd_scheme", std::string(detail::to_string(c.fd_scheme))},
                      {"fd_step", c.fd_step},
                      {"history", c.history},
                      {"starts", c.starts},
                      {"seed", c.seed}};
    return j.dump(2) + "\n";
}

inline FitRecord fit_from_json(const std::string& text)
{
    using detail::json;
    FitRecord rec;
    try {
        const json j = json::parse(text);
        if (j.value("format", "") != "svcmle-fit") {
            throw IoError("fit json: not a fit result file");
        }
        FitResult& r = rec.fit;
        r.theta = detail::theta_from_json(j.at("theta"));
        const auto mu = j.at("mu").get<std::vector<double>>();
        r.mu.mu = Eigen::Map<const Vector>(mu.data(), static_cast<Index>(mu.size()));
        r.objective = detail::number_from(j.at("objective"));
        r.converged = j.at("converged").get<bool>();
        r.iterations = j.at("iterations").get<Index>();
        r.function_evaluations = j.at("function_evaluations").get<Index>();
        r.jitter_events = j.at("jitter_events").get<Index>();
        r.gradient_norm = detail::number_from(j.at("gradient_norm"));
        const json& diag = j.at("diagnostics");
        r.diagnostics.message = diag.value("message", "");
        if (diag.contains("failing_theta")) {
            r.diagnostics.failing_theta = detail::theta_from_json(diag.at("failing_theta"));
        }
        const json& tap = j.at("taper");
        rec.taper.family = parse_taper_family(tap.at("family").get<std::string>());
        if (rec.taper.active()) {
            rec.taper.range = tap.at("range").get<double>();
        }
        const json& reg = j.at("regularization");
        if (reg.at("family").get<std::string>() == "pc") {
            std::vector<PcPriorSpec::Rates> rates;
            for (const auto& x : reg.at("rates")) {
                rates.push_back({x.at("lambda_rho").get<double>(), x.at("lambda_sigma").get<double>()});
            }
            rec.reg = PcPriorSpec::from_rates(std::move(rates));
        }
        if (j.contains("optimizer")) {
            const json& o = j.at("optimizer");
            OptimizerConfig& c = rec.optimizer;
            c.mode = parse_fit_mode(o.at("mode").get<std::string>());
            c.space = parse_param_space(o.at("space").get<std::string>());
            c.max_iterations = o.at("max_iterations").get<Index>();
            c.gradient_tolerance = o.at("gradient_tolerance").get<double>();
            c.objective_tolerance = o.at("objective_tolerance").get<double>();
            c.fd_scheme = parse_fd_scheme(o.at("fd_scheme").get<std::string>());
            c.fd_step = o.at("fd_step").get<double>();
            c.history = o.at("history").get<Index>();
            c.starts = o.at("starts").get<Index>();
            c.seed = o.at("seed").get<std::uint64_t>();
        }
    } catch (const json::exception& e) {
        throw IoError(std::string("fit json: ") + e.what());
    }
    return rec;
}

inline std::string read_text(const std::string& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw IoError("cannot open '" + path + "'");
    }
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline void write_text(const std::string& path, const std::string& text)
{
    auto out = open_output(path);
    out << text;
}

inline void write_trace_csv(std::ostream& out, const std::vector<TraceRow>& trace)
{
    out << "iteration,objective,step,gradient_norm\n";
    for (const auto& r : trace) {
        out << r.iteration << ',' << format_double(r.objective) << ',' << format_double(r.step) << ','
            << format_double(r.gradient_norm) << '\n';
    }
}

inline void write_experiment_csv(std::ostream& metrics, std::ostream& estimates, const ExperimentTable& t)
{
    metrics << "replication,seed,fold,target,rmse\n";
    for (const auto& r : t.metrics) {
        metrics << r.replication << ',' << r.seed << ',' << to_string(r.fold) << ',' << r.target << ','
                << format_double(r.rmse) << '\n';
    }
    estimates << "replication,seed,parameter,value\n";
    for (const auto& r : t.estimates) {
        estimates << r.replication << ',' << r.seed << ',' << r.parameter << ',' << format_double(r.value) << '\n';
    }
}

} // namespace svcmle
