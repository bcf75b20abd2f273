#pragma once

// Assembly of the response covariance
//
//   Sigma_Y = sum_j Sigma^(j) o (x^(j) x^(j)^T) + tau2 I
//
// (o is the entrywise product), optionally multiplied entrywise by a
// compactly supported taper, in which case the result is sparse.

#include "linalg.hpp"
#include "model.hpp"

#include <variant>

namespace svcmle {

using ResponseMatrix = std::variant<SymmetricMatrix, SparseSymmetricMatrix>;

// Distances (and, when tapering, the sparsity pattern, taper weights and the
// symbolic factorization) depend only on the locations, so they are computed
// once here and reused for every parameter value.
class ResponseCovariance {
public:
    ResponseCovariance(const Locations& locations, TaperSpec taper) : taper_(taper), n_(locations.rows())
    {
        check_locations(locations, "response covariance");
        taper_.validate();
        if (taper_.active()) {
            build_tapered(locations);
        } else {
            dist_.resize(n_, n_);
            for (Index j = 0; j < n_; ++j) {
                for (Index i = j; i < n_; ++i) {
                    dist_(i, j) = distance(locations, i, locations, j);
                }
            }
        }
    }

    Index n() const { return n_; }
    bool tapered() const { return taper_.active(); }
    const TaperSpec& taper() const { return taper_; }
    const std::shared_ptr<const SparseSymbolic>& symbolic() const { return symbolic_; }
    Index pattern_nnz() const { return pattern_ ? pattern_->nnz() : n_ * (n_ + 1) / 2; }

    void check(const Matrix& x, const CovParams& theta) const
    {
        theta.validate();
        if (x.rows() != n_) {
            throw DimensionMismatch("response covariance: covariate rows do not match the locations");
        }
        if (x.cols() != theta.p()) {
            throw DimensionMismatch("response covariance: " + std::to_string(x.cols()) + " covariates but " +
                                    std::to_string(theta.p()) + " coefficient processes");
        }
        for (const auto& m : theta.svc) {
            taper_.check_supports(m.nu);
        }
    }

    // True when tapering produced a pattern with structural zeros, so the
    // sparse path is used. A full pattern is stored densely.
    bool sparse() const { return pattern_ != nullptr; }

    ResponseMatrix assemble(const Matrix& x, const CovParams& theta) const
    {
        check(x, theta);
        if (sparse()) {
            return assemble_sparse(x, theta);
        }
        return assemble_dense(x, theta);
    }

    CholeskyFactor factorize(const Matrix& x, const CovParams& theta) const
    {
        ResponseMatrix m = assemble(x, theta);
        if (auto* d = std::get_if<SymmetricMatrix>(&m)) {
            return cholesky(*d);
        }
        return cholesky(std::get<SparseSymmetricMatrix>(m), symbolic_);
    }

private:
    SymmetricMatrix assemble_dense(const Matrix& x, const CovParams& theta) const
    {
        SymmetricMatrix out{Matrix::Zero(n_, n_)};
        for (Index j = 0; j < n_; ++j) {
            const Index len = n_ - j;
            const Eigen::ArrayXd r = dist_.col(j).tail(len).array();
            auto col = out.values.col(j).tail(len).array();
            for (Index m = 0; m < theta.p(); ++m) {
                const double xj = x(j, m);
                if (xj == 0.0 || theta.svc[m].sigma2 == 0.0) {
                    continue;
                }
                col += matern_cov(r, theta.svc[m]) * x.col(m).tail(len).array() * xj;
            }
            if (tapered()) {
                col *= weight_.col(j).tail(len).array();
            }
            out.values(j, j) += theta.nugget;
        }
        return out;
    }

    SparseSymmetricMatrix assemble_sparse(const Matrix& x, const CovParams& theta) const
    {
        const Index nnz = pattern_->nnz();
        Eigen::ArrayXd acc = Eigen::ArrayXd::Zero(nnz);
        for (Index m = 0; m < theta.p(); ++m) {
            if (theta.svc[m].sigma2 == 0.0) {
                continue;
            }
            const Eigen::ArrayXd c = matern_cov(nz_dist_, theta.svc[m]);
            for (Index q = 0; q < nnz; ++q) {
                acc[q] += c[q] * x(pattern_->rowidx[q], m) * x(nz_col_[q], m);
            }
        }
        acc *= nz_weight_;
        SparseSymmetricMatrix out{pattern_, std::vector<double>(acc.data(), acc.data() + nnz)};
        for (Index j = 0; j < n_; ++j) {
            out.values[pattern_->colptr[j]] += theta.nugget;
        }
        return out;
    }

    void build_tapered(const Locations& locations)
    {
        NeighborGrid grid(locations, taper_.range);
        auto pattern = std::make_shared<SparsePattern>();
        pattern->n = n_;
        pattern->colptr.assign(n_ + 1, 0);
        std::vector<double> dist;
        for (Index j = 0; j < n_; ++j) {
            pattern->rowidx.push_back(j);
            dist.push_back(0.0);
            nz_col_.push_back(j);
            const Vector point = locations.row(j).transpose();
            grid.for_each_within(point, taper_.range, false, [&](Index i, double r) {
                if (i > j) {
                    pattern->rowidx.push_back(i);
                    dist.push_back(r);
                    nz_col_.push_back(j);
                }
            });
            pattern->colptr[j + 1] = static_cast<Index>(pattern->rowidx.size());
        }
        if (pattern->nnz() == n_ * (n_ + 1) / 2) {
            // every pair lies within the taper range
            dist_.resize(n_, n_);
            weight_.resize(n_, n_);
            for (Index j = 0; j < n_; ++j) {
                for (Index q = pattern->colptr[j]; q < pattern->colptr[j + 1]; ++q) {
                    dist_(pattern->rowidx[q], j) = dist[q];
                }
                const Index len = n_ - j;
                weight_.col(j).tail(len) = taper_weight(Eigen::ArrayXd(dist_.col(j).tail(len)), taper_).matrix();
            }
            nz_col_.clear();
            return;
        }
        nz_dist_ = Eigen::Map<const Eigen::ArrayXd>(dist.data(), static_cast<Index>(dist.size()));
        nz_weight_ = taper_weight(nz_dist_, taper_);
        pattern_ = std::move(pattern);
        symbolic_ = std::make_shared<const SparseSymbolic>(pattern_);
    }

    TaperSpec taper_;
    Index n_;
    Matrix dist_;   // lower triangle only, dense case
    Matrix weight_; // lower triangle taper weights, dense tapered case
    std::shared_ptr<const SparsePattern> pattern_;
    std::vector<Index> nz_col_;
    Eigen::ArrayXd nz_dist_;
    Eigen::ArrayXd nz_weight_;
    std::shared_ptr<const SparseSymbolic> symbolic_;
};

inline ResponseMatrix response_cov(const SvcDataset& d, const CovParams& theta, const TaperSpec& taper)
{
    d.check_shape();
    return ResponseCovariance(d.locations, taper).assemble(d.x, theta);
}

inline Matrix to_dense(const ResponseMatrix& m)
{
    if (const auto* d = std::get_if<SymmetricMatrix>(&m)) {
        return d->full();
    }
    return std::get<SparseSymmetricMatrix>(m).to_dense();
}

} // namespace svcmle
