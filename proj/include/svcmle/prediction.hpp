#pragma once

// EBLUP of the latent coefficient surfaces, coefficients and responses at new
// locations, given a fitted model and its training data.

#include "optimizer.hpp"

namespace svcmle {

struct PredictionRequest {
    Locations locations;
    // Needed for y_hat and pred_var; coefficient surfaces only need locations.
    std::optional<Matrix> x;
};

struct PredictionResult {
    Matrix eta;  // n' x p
    Matrix beta; // n' x p, eta + mu
    std::optional<Vector> y_hat;
    std::optional<Vector> pred_var;
    // Predictive variances that came out slightly negative and were set to 0.
    Index clamped = 0;
};

struct PredictOptions {
    // Variance of a new noisy observation; false gives the latent variance.
    bool include_nugget = true;
    Index batch = 256;
};

namespace detail {

// Covariance between training point i and a new point at distance r for
// process m, including the taper weight.
inline double cross_cov(double r, const MaternParams& m, const TaperSpec& taper)
{
    if (taper.active() && r >= taper.range) {
        return 0.0;
    }
    return matern_cov(r, m) * taper_weight(r, taper);
}

} // namespace detail

inline PredictionResult predict(const FitResult& fit, const SvcDataset& train, const PredictionRequest& req,
                                const TaperSpec& taper, const PredictOptions& opts = {})
{
    train.check_shape();
    const CovParams& theta = fit.theta;
    theta.validate();
    const Index n = train.n();
    const Index p = train.p();
    if (theta.p() != p || fit.mu.mu.size() != p) {
        throw DimensionMismatch("predict: fitted model has " + std::to_string(theta.p()) +
                                " coefficient processes, training data has " + std::to_string(p));
    }
    check_locations(req.locations, "predict");
    if (req.locations.cols() != train.dim()) {
        throw DimensionMismatch("predict: new locations have a different dimension than the training locations");
    }
    const Index m = req.locations.rows();
    if (req.x && (req.x->rows() != m || req.x->cols() != p)) {
        throw DimensionMismatch("predict: new covariates must be n' x p");
    }
    if (opts.batch < 1) {
        throw InvalidArgument("predict: batch size must be positive");
    }

    const ResponseCovariance cov(train.locations, taper);
    const CholeskyFactor factor = cov.factorize(train.x, theta);
    const Vector alpha = factor.solve(Vector(train.y - train.x * fit.mu.mu));
    std::optional<NeighborGrid> grid;
    if (taper.active()) {
        grid.emplace(train.locations, taper.range);
    }

    PredictionResult out;
    out.eta = Matrix::Zero(m, p);
    const bool variances = req.x.has_value();
    Vector var(variances ? m : 0);
    std::vector<char> clamped(static_cast<std::size_t>(variances ? m : 0), 0);
    std::vector<std::string> errors(static_cast<std::size_t>(m));

    const Index batches = (m + opts.batch - 1) / opts.batch;
    parallel_for(batches, [&](Index b) {
        const Index first = b * opts.batch;
        const Index count = std::min(opts.batch, m - first);
        // Sigma_{Y Y'} for the batch, one column per new location.
        Matrix cyy = variances ? Matrix::Zero(n, count) : Matrix();
        std::vector<Index> rows;
        std::vector<double> dist;
        for (Index c = 0; c < count; ++c) {
            const Index k = first + c;
            rows.clear();
            dist.clear();
            const Vector point = req.locations.row(k).transpose();
            if (grid) {
                grid->for_each_within(point, taper.range, false, [&](Index i, double r) {
                    rows.push_back(i);
                    dist.push_back(r);
                });
            } else {
                for (Index i = 0; i < n; ++i) {
                    rows.push_back(i);
                    dist.push_back(distance(train.locations, i, req.locations, k));
                }
            }
            for (std::size_t t = 0; t < rows.size(); ++t) {
                const Index i = rows[t];
                for (Index j = 0; j < p; ++j) {
                    const double cij = detail::cross_cov(dist[t], theta.svc[j], taper) * train.x(i, j);
                    out.eta(k, j) += cij * alpha[i];
                    if (variances) {
                        cyy(i, c) += cij * (*req.x)(k, j);
                    }
                }
            }
        }
        if (!variances) {
            return;
        }
        const Matrix w = factor.whiten(cyy);
        for (Index c = 0; c < count; ++c) {
            const Index k = first + c;
            double prior = opts.include_nugget ? theta.nugget : 0.0;
            for (Index j = 0; j < p; ++j) {
                const double xkj = (*req.x)(k, j);
                prior += theta.svc[j].sigma2 * xkj * xkj;
            }
            double v = prior - w.col(c).squaredNorm();
            if (v < 0.0) {
                if (v >= -1e-10 * std::max(prior, 1.0)) {
                    v = 0.0;
                    clamped[k] = 1;
                } else {
                    errors[k] = "predict: negative predictive variance " + std::to_string(v) + " at row " +
                                std::to_string(k + 1);
                }
            }
            var[k] = v;
        }
    });
    for (const auto& e : errors) {
        if (!e.empty()) {
            throw NotPositiveDefinite(e);
        }
    }

    out.beta = out.eta.rowwise() + fit.mu.mu.transpose();
    if (variances) {
        out.y_hat = (req.x->array() * out.beta.array()).rowwise().sum().matrix();
        out.pred_var = var;
        out.clamped = std::count(clamped.begin(), clamped.end(), 1);
    }
    return out;
}

// Continuous ranked probability score of N(mean, sd^2) at y.
inline double crps_gaussian(double y, double mean, double sd)
{
    if (!(sd > 0.0) || !std::isfinite(sd)) {
        throw InvalidArgument("crps_gaussian: standard deviation must be positive and finite");
    }
    const double z = (y - mean) / sd;
    const double cdf = 0.5 * std::erfc(-z / std::numbers::sqrt2);
    const double pdf = std::exp(-0.5 * z * z) / std::sqrt(2.0 * std::numbers::pi);
    return sd * (z * (2.0 * cdf - 1.0) + 2.0 * pdf - std::numbers::inv_sqrtpi);
}

} // namespace svcmle
