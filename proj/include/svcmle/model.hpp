#pragma once

#include "covariance.hpp"

#include <map>
#include <optional>
#include <string>
#include <vector>

namespace svcmle {

// Response y (n), covariates X (n x p, one column per coefficient process)
// and observation locations (n x d). Locations need not be distinct.
struct SvcDataset {
    Vector y;
    Matrix x;
    Locations locations;

    Index n() const { return y.size(); }
    Index p() const { return x.cols(); }
    Index dim() const { return locations.cols(); }

    // Hard consistency checks; softer issues are reported by validate_dataset.
    void check_shape() const
    {
        if (x.rows() != y.size() || locations.rows() != y.size()) {
            throw DimensionMismatch("dataset: y, X and locations must have the same number of rows");
        }
        if (y.size() < 1 || x.cols() < 1 || locations.cols() < 1) {
            throw InvalidArgument("dataset: need n >= 1, p >= 1 and d >= 1");
        }
    }

    SvcDataset subset(const std::vector<Index>& rows) const
    {
        SvcDataset out;
        out.y.resize(static_cast<Index>(rows.size()));
        out.x.resize(static_cast<Index>(rows.size()), x.cols());
        out.locations.resize(static_cast<Index>(rows.size()), locations.cols());
        for (std::size_t k = 0; k < rows.size(); ++k) {
            const Index i = rows[k];
            out.y[k] = y[i];
            out.x.row(k) = x.row(i);
            out.locations.row(k) = locations.row(i);
        }
        return out;
    }
};

// Covariance parameters theta = (rho_1, sigma2_1, ..., rho_p, sigma2_p, tau2).
struct CovParams {
    std::vector<MaternParams> svc;
    double nugget = 1.0;

    Index p() const { return static_cast<Index>(svc.size()); }

    // Ranges must be positive; variances and the nugget may be zero here
    // (degenerate processes), which the optimizer itself never proposes.
    void validate() const
    {
        if (svc.empty()) {
            throw InvalidArgument("covariance parameters: need at least one coefficient process");
        }
        for (const auto& m : svc) {
            m.validate();
        }
        if (!(nugget >= 0.0) || !std::isfinite(nugget)) {
            throw InvalidArgument("covariance parameters: nugget must be nonnegative and finite");
        }
    }

    bool strictly_positive() const
    {
        for (const auto& m : svc) {
            if (!(m.sigma2 > 0.0)) {
                return false;
            }
        }
        return nugget > 0.0;
    }

    static CovParams uniform(Index p, double rho, double sigma2, double nugget, double nu = 0.5)
    {
        CovParams out;
        out.svc.assign(static_cast<std::size_t>(p), MaternParams{rho, sigma2, nu});
        out.nugget = nugget;
        return out;
    }

    bool operator==(const CovParams& o) const
    {
        if (svc.size() != o.svc.size() || nugget != o.nugget) {
            return false;
        }
        for (std::size_t j = 0; j < svc.size(); ++j) {
            if (svc[j].rho != o.svc[j].rho || svc[j].sigma2 != o.svc[j].sigma2 || svc[j].nu != o.svc[j].nu) {
                return false;
            }
        }
        return true;
    }
};

struct MeanParams {
    Vector mu;
};

// Optimizer-space vector: (log rho_1, log sigma2_1, ..., log rho_p,
// log sigma2_p, log tau2). The order is part of the serialized format.
struct ParamVector {
    Vector values;
};

inline ParamVector pack(const CovParams& theta)
{
    theta.validate();
    if (!theta.strictly_positive()) {
        throw InvalidArgument("pack: all variances and the nugget must be positive");
    }
    ParamVector out{Vector(2 * theta.p() + 1)};
    for (Index j = 0; j < theta.p(); ++j) {
        out.values[2 * j] = std::log(theta.svc[j].rho);
        out.values[2 * j + 1] = std::log(theta.svc[j].sigma2);
    }
    out.values[2 * theta.p()] = std::log(theta.nugget);
    return out;
}

// Smoothness values are not part of the packed vector; they default to the
// exponential case unless given.
inline CovParams unpack(const ParamVector& v, Index p, const std::vector<double>& nu = {})
{
    if (v.values.size() != 2 * p + 1) {
        throw DimensionMismatch("unpack: expected " + std::to_string(2 * p + 1) + " values, got " +
                                std::to_string(v.values.size()));
    }
    if (!nu.empty() && static_cast<Index>(nu.size()) != p) {
        throw DimensionMismatch("unpack: smoothness list has the wrong length");
    }
    if (!v.values.allFinite()) {
        throw InvalidArgument("unpack: non-finite parameter");
    }
    CovParams out;
    out.svc.resize(static_cast<std::size_t>(p));
    for (Index j = 0; j < p; ++j) {
        out.svc[j].rho = std::exp(v.values[2 * j]);
        out.svc[j].sigma2 = std::exp(v.values[2 * j + 1]);
        out.svc[j].nu = nu.empty() ? 0.5 : nu[j];
    }
    out.nugget = std::exp(v.values[2 * p]);
    return out;
}

struct Finding {
    enum class Severity { info, warning, error };
    Severity severity;
    std::string code;
    std::string message;
};

// Report-only checks; an empty list means the dataset is clean.
inline std::vector<Finding> validate_dataset(const SvcDataset& d)
{
    std::vector<Finding> out;
    using S = Finding::Severity;
    if (d.x.rows() != d.y.size() || d.locations.rows() != d.y.size()) {
        out.push_back({S::error, "shape", "y, X and locations have different row counts"});
        return out;
    }
    if (!d.y.allFinite()) {
        out.push_back({S::error, "nan", "response contains NaN or infinite values"});
    }
    if (!d.x.allFinite()) {
        out.push_back({S::error, "nan", "covariates contain NaN or infinite values"});
    }
    if (!d.locations.allFinite()) {
        out.push_back({S::error, "nan", "coordinates contain NaN or infinite values"});
    }
    if (d.n() < d.p()) {
        out.push_back({S::error, "n_lt_p", "fewer observations than covariates"});
    }
    for (Index j = 0; j < d.p(); ++j) {
        if ((d.x.col(j).array() == 0.0).all()) {
            out.push_back({S::error, "degenerate covariate", "covariate column " + std::to_string(j + 1) + " is all zeros"});
        }
    }
    std::map<std::vector<double>, Index> seen;
    Index duplicates = 0;
    for (Index i = 0; i < d.locations.rows(); ++i) {
        std::vector<double> key(static_cast<std::size_t>(d.dim()));
        for (Index c = 0; c < d.dim(); ++c) {
            key[c] = d.locations(i, c);
        }
        if (seen[key]++ > 0) {
            ++duplicates;
        }
    }
    if (duplicates > 0) {
        out.push_back({S::info, "duplicate locations", std::to_string(duplicates) + " observations share a location with an earlier one"});
    }
    return out;
}

struct FitDiagnostics {
    std::string message;
    std::optional<CovParams> failing_theta;
};

struct FitResult {
    CovParams theta;
    MeanParams mu;
    double objective = 0.0;
    bool converged = false;
    Index iterations = 0;
    Index function_evaluations = 0;
    Index jitter_events = 0;
    double gradient_norm = 0.0;
    FitDiagnostics diagnostics;
};

} // namespace svcmle
