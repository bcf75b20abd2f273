#pragma once

// Dense and sparse symmetric factorization kernels.
//
// The sparse path is an up-looking Cholesky (one row of L per step) on a
// fill-reducing permutation of the matrix. All structural work (ordering,
// elimination tree, column layout of L) lives in SparseSymbolic, which is
// immutable once built and can be shared by concurrent numeric
// factorizations of matrices with the same pattern.

#include "common.hpp"

#include <Eigen/Cholesky>
#include <Eigen/OrderingMethods>
#include <Eigen/SparseCore>

#include <array>
#include <memory>
#include <numeric>
#include <optional>
#include <variant>

namespace svcmle {

// Dense symmetric matrix. Only the lower triangle is referenced.
struct SymmetricMatrix {
    Matrix values;

    Index order() const { return values.rows(); }

    Matrix full() const
    {
        Matrix m = values.triangularView<Eigen::Lower>();
        m.triangularView<Eigen::StrictlyUpper>() = values.transpose().triangularView<Eigen::StrictlyUpper>();
        return m;
    }
};

// Lower-triangular compressed-column pattern. Rows are sorted within each
// column and every column starts with its diagonal entry.
struct SparsePattern {
    Index n = 0;
    std::vector<Index> colptr;
    std::vector<Index> rowidx;

    Index nnz() const { return static_cast<Index>(rowidx.size()); }

    void check() const
    {
        if (static_cast<Index>(colptr.size()) != n + 1 || colptr.front() != 0 || colptr.back() != nnz()) {
            throw InvalidArgument("sparse pattern: malformed column pointers");
        }
        for (Index j = 0; j < n; ++j) {
            if (colptr[j] >= colptr[j + 1] || rowidx[colptr[j]] != j) {
                throw InvalidArgument("sparse pattern: column " + std::to_string(j) + " lacks a leading diagonal");
            }
            for (Index p = colptr[j] + 1; p < colptr[j + 1]; ++p) {
                if (rowidx[p] <= rowidx[p - 1] || rowidx[p] >= n) {
                    throw InvalidArgument("sparse pattern: rows must be sorted and below the diagonal");
                }
            }
        }
    }
};

struct SparseSymmetricMatrix {
    std::shared_ptr<const SparsePattern> pattern;
    std::vector<double> values;

    Index order() const { return pattern ? pattern->n : 0; }

    Matrix to_dense() const
    {
        const Index n = order();
        Matrix m = Matrix::Zero(n, n);
        for (Index j = 0; j < n; ++j) {
            for (Index p = pattern->colptr[j]; p < pattern->colptr[j + 1]; ++p) {
                const Index i = pattern->rowidx[p];
                m(i, j) = values[p];
                m(j, i) = values[p];
            }
        }
        return m;
    }

    double diagonal(Index j) const { return values[pattern->colptr[j]]; }
};

enum class Ordering { natural, amd };

class SparseSymbolic {
public:
    explicit SparseSymbolic(std::shared_ptr<const SparsePattern> pattern, Ordering ordering = Ordering::amd)
        : pattern_(std::move(pattern))
    {
        const SparsePattern& a = *pattern_;
        a.check();
        n_ = a.n;

        order_.resize(n_);
        std::iota(order_.begin(), order_.end(), Index{0});
        if (ordering == Ordering::amd && n_ > 1) {
            Eigen::SparseMatrix<double, Eigen::ColMajor, int> lower(n_, n_);
            std::vector<Eigen::Triplet<double, int>> trip;
            trip.reserve(a.rowidx.size());
            for (Index j = 0; j < n_; ++j) {
                for (Index p = a.colptr[j]; p < a.colptr[j + 1]; ++p) {
                    trip.emplace_back(static_cast<int>(a.rowidx[p]), static_cast<int>(j), 1.0);
                }
            }
            lower.setFromTriplets(trip.begin(), trip.end());
            Eigen::AMDOrdering<int>::PermutationType perm;
            Eigen::AMDOrdering<int> amd;
            amd(lower.selfadjointView<Eigen::Lower>(), perm);
            for (Index k = 0; k < n_; ++k) {
                order_[k] = perm.indices()[k];
            }
        }
        inverse_.resize(n_);
        for (Index k = 0; k < n_; ++k) {
            inverse_[order_[k]] = k;
        }

        // Upper triangle of the permuted matrix, plus the position every
        // original nonzero lands at.
        cp_.assign(n_ + 1, 0);
        for (Index j = 0; j < n_; ++j) {
            for (Index p = a.colptr[j]; p < a.colptr[j + 1]; ++p) {
                const Index col = std::max(inverse_[a.rowidx[p]], inverse_[j]);
                ++cp_[col + 1];
            }
        }
        std::partial_sum(cp_.begin(), cp_.end(), cp_.begin());
        ci_.resize(a.rowidx.size());
        scatter_.resize(a.rowidx.size());
        std::vector<Index> fill(cp_.begin(), cp_.end() - 1);
        for (Index j = 0; j < n_; ++j) {
            for (Index p = a.colptr[j]; p < a.colptr[j + 1]; ++p) {
                const Index r = inverse_[a.rowidx[p]];
                const Index c = inverse_[j];
                const Index col = std::max(r, c);
                const Index q = fill[col]++;
                ci_[q] = std::min(r, c);
                scatter_[p] = q;
            }
        }

        // Elimination tree.
        parent_.assign(n_, -1);
        std::vector<Index> ancestor(n_, -1);
        for (Index k = 0; k < n_; ++k) {
            for (Index p = cp_[k]; p < cp_[k + 1]; ++p) {
                for (Index i = ci_[p]; i != -1 && i < k;) {
                    const Index next = ancestor[i];
                    ancestor[i] = k;
                    if (next == -1) {
                        parent_[i] = k;
                    }
                    i = next;
                }
            }
        }

        // Column counts of L from the row patterns.
        std::vector<Index> counts(n_, 1);
        std::vector<Index> stack(n_), mark(n_, -1);
        for (Index k = 0; k < n_; ++k) {
            const Index top = row_pattern(k, stack, mark);
            for (Index t = top; t < n_; ++t) {
                ++counts[stack[t]];
            }
        }
        lp_.assign(n_ + 1, 0);
        std::partial_sum(counts.begin(), counts.end(), lp_.begin() + 1);
    }

    Index order() const { return n_; }
    Index factor_nnz() const { return lp_.back(); }
    const SparsePattern& pattern() const { return *pattern_; }
    const std::shared_ptr<const SparsePattern>& pattern_ptr() const { return pattern_; }
    const std::vector<Index>& permutation() const { return order_; }

    // Nonzero column indices of row k of L, written to stack[top..n).
    Index row_pattern(Index k, std::vector<Index>& stack, std::vector<Index>& mark) const
    {
        Index top = n_;
        mark[k] = k;
        for (Index p = cp_[k]; p < cp_[k + 1]; ++p) {
            Index i = ci_[p];
            if (i > k) {
                continue;
            }
            Index len = 0;
            for (; mark[i] != k; i = parent_[i]) {
                stack[len++] = i;
                mark[i] = k;
            }
            while (len > 0) {
                stack[--top] = stack[--len];
            }
        }
        return top;
    }

private:
    friend class CholeskyFactor;
    friend struct SparseNumeric;

    std::shared_ptr<const SparsePattern> pattern_;
    Index n_ = 0;
    std::vector<Index> order_;   // order_[k] = original index placed at k
    std::vector<Index> inverse_; // inverse_[original] = k
    std::vector<Index> cp_, ci_; // upper triangle of the permuted matrix
    std::vector<Index> scatter_; // original nonzero -> permuted upper nonzero
    std::vector<Index> parent_;
    std::vector<Index> lp_;      // column pointers of L
};

struct SparseNumeric {
    std::shared_ptr<const SparseSymbolic> symbolic;
    std::vector<Index> li;
    std::vector<double> lx;

    // Returns false when a nonpositive pivot is met.
    bool factorize(const std::vector<double>& values, double diagonal_shift)
    {
        const SparseSymbolic& s = *symbolic;
        const Index n = s.n_;
        std::vector<double> cx(s.ci_.size());
        for (std::size_t p = 0; p < values.size(); ++p) {
            cx[s.scatter_[p]] = values[p];
        }
        li.assign(s.lp_.back(), 0);
        lx.assign(s.lp_.back(), 0.0);
        std::vector<Index> next(s.lp_.begin(), s.lp_.end() - 1);
        std::vector<Index> stack(n), mark(n, -1);
        std::vector<double> x(n, 0.0);

        for (Index k = 0; k < n; ++k) {
            const Index top = s.row_pattern(k, stack, mark);
            x[k] = 0.0;
            for (Index p = s.cp_[k]; p < s.cp_[k + 1]; ++p) {
                if (s.ci_[p] <= k) {
                    x[s.ci_[p]] = cx[p];
                }
            }
            double d = x[k] + diagonal_shift;
            x[k] = 0.0;
            for (Index t = top; t < n; ++t) {
                const Index i = stack[t];
                const double lki = x[i] / lx[s.lp_[i]];
                x[i] = 0.0;
                for (Index p = s.lp_[i] + 1; p < next[i]; ++p) {
                    x[li[p]] -= lx[p] * lki;
                }
                d -= lki * lki;
                const Index p = next[i]++;
                li[p] = k;
                lx[p] = lki;
            }
            if (!(d > 0.0) || !std::isfinite(d)) {
                return false;
            }
            const Index p = next[k]++;
            li[p] = k;
            lx[p] = std::sqrt(d);
        }
        return true;
    }
};

// Immutable Cholesky factor L with L L^T = P A P^T (P is the identity on the
// dense path).
class CholeskyFactor {
public:
    static CholeskyFactor dense(Eigen::LLT<Matrix> llt, double jitter)
    {
        CholeskyFactor f;
        f.storage_ = std::move(llt);
        f.jitter_ = jitter;
        return f;
    }

    static CholeskyFactor sparse(SparseNumeric numeric, double jitter)
    {
        CholeskyFactor f;
        f.storage_ = std::move(numeric);
        f.jitter_ = jitter;
        return f;
    }

    bool is_sparse() const { return std::holds_alternative<SparseNumeric>(storage_); }

    // Absolute amount added to the diagonal before the factorization succeeded.
    double jitter() const { return jitter_; }
    bool jittered() const { return jitter_ > 0.0; }

    Index order() const
    {
        if (const auto* d = std::get_if<Eigen::LLT<Matrix>>(&storage_)) {
            return d->rows();
        }
        return std::get<SparseNumeric>(storage_).symbolic->order();
    }

    double logdet() const
    {
        double s = 0.0;
        if (const auto* d = std::get_if<Eigen::LLT<Matrix>>(&storage_)) {
            const Matrix& l = d->matrixLLT();
            for (Index i = 0; i < l.rows(); ++i) {
                s += std::log(l(i, i));
            }
        } else {
            const auto& sp = std::get<SparseNumeric>(storage_);
            const auto& lp = sp.symbolic->lp_;
            for (Index j = 0; j < sp.symbolic->order(); ++j) {
                s += std::log(sp.lx[lp[j]]);
            }
        }
        return 2.0 * s;
    }

    // L^{-1} P B. Squared column norms of the result are quadratic forms
    // b^T A^{-1} b.
    Matrix whiten(const Matrix& b) const
    {
        check_rows(b.rows());
        if (const auto* d = std::get_if<Eigen::LLT<Matrix>>(&storage_)) {
            return d->matrixL().solve(b);
        }
        const auto& sp = std::get<SparseNumeric>(storage_);
        Matrix out(b.rows(), b.cols());
        std::vector<double> x(static_cast<std::size_t>(b.rows()));
        for (Index c = 0; c < b.cols(); ++c) {
            permute(sp, b.col(c), x);
            lower_solve(sp, x);
            for (Index i = 0; i < b.rows(); ++i) {
                out(i, c) = x[i];
            }
        }
        return out;
    }

    Vector whiten(const Vector& b) const { return whiten(Matrix(b)).col(0); }

    Matrix solve(const Matrix& b) const
    {
        check_rows(b.rows());
        if (const auto* d = std::get_if<Eigen::LLT<Matrix>>(&storage_)) {
            return d->solve(b);
        }
        const auto& sp = std::get<SparseNumeric>(storage_);
        const auto& order = sp.symbolic->order_;
        Matrix out(b.rows(), b.cols());
        std::vector<double> x(static_cast<std::size_t>(b.rows()));
        for (Index c = 0; c < b.cols(); ++c) {
            permute(sp, b.col(c), x);
            lower_solve(sp, x);
            upper_solve(sp, x);
            for (Index k = 0; k < b.rows(); ++k) {
                out(order[k], c) = x[k];
            }
        }
        return out;
    }

    Vector solve(const Vector& b) const { return solve(Matrix(b)).col(0); }

    // P^T L Z. With Z standard normal the columns have covariance A.
    Matrix lower_product(const Matrix& z) const
    {
        check_rows(z.rows());
        if (const auto* d = std::get_if<Eigen::LLT<Matrix>>(&storage_)) {
            return d->matrixL() * z;
        }
        const auto& sp = std::get<SparseNumeric>(storage_);
        const auto& lp = sp.symbolic->lp_;
        const auto& perm = sp.symbolic->order_;
        const Index n = order();
        Matrix out = Matrix::Zero(n, z.cols());
        for (Index c = 0; c < z.cols(); ++c) {
            for (Index j = 0; j < n; ++j) {
                for (Index p = lp[j]; p < lp[j + 1]; ++p) {
                    out(perm[sp.li[p]], c) += sp.lx[p] * z(j, c);
                }
            }
        }
        return out;
    }

    // P^T L L^T P as a dense matrix; used to check factorizations.
    Matrix reconstruct() const
    {
        if (const auto* d = std::get_if<Eigen::LLT<Matrix>>(&storage_)) {
            return d->reconstructedMatrix();
        }
        const auto& sp = std::get<SparseNumeric>(storage_);
        const Index n = order();
        Matrix l = Matrix::Zero(n, n);
        const auto& lp = sp.symbolic->lp_;
        for (Index j = 0; j < n; ++j) {
            for (Index p = lp[j]; p < lp[j + 1]; ++p) {
                l(sp.li[p], j) = sp.lx[p];
            }
        }
        const Matrix llt = l * l.transpose();
        Matrix out(n, n);
        const auto& order_ = sp.symbolic->order_;
        for (Index j = 0; j < n; ++j) {
            for (Index i = 0; i < n; ++i) {
                out(order_[i], order_[j]) = llt(i, j);
            }
        }
        return out;
    }

private:
    CholeskyFactor() = default;

    void check_rows(Index rows) const
    {
        if (rows != order()) {
            throw DimensionMismatch("solve: right-hand side has " + std::to_string(rows) + " rows, factor has order " +
                                    std::to_string(order()));
        }
    }

    template <typename Col>
    static void permute(const SparseNumeric& sp, const Col& b, std::vector<double>& x)
    {
        const auto& order = sp.symbolic->order_;
        for (std::size_t k = 0; k < x.size(); ++k) {
            x[k] = b(order[k]);
        }
    }

    static void lower_solve(const SparseNumeric& sp, std::vector<double>& x)
    {
        const auto& lp = sp.symbolic->lp_;
        const Index n = sp.symbolic->order();
        for (Index j = 0; j < n; ++j) {
            x[j] /= sp.lx[lp[j]];
            for (Index p = lp[j] + 1; p < lp[j + 1]; ++p) {
                x[sp.li[p]] -= sp.lx[p] * x[j];
            }
        }
    }

    static void upper_solve(const SparseNumeric& sp, std::vector<double>& x)
    {
        const auto& lp = sp.symbolic->lp_;
        for (Index j = sp.symbolic->order() - 1; j >= 0; --j) {
            for (Index p = lp[j] + 1; p < lp[j + 1]; ++p) {
                x[j] -= sp.lx[p] * x[sp.li[p]];
            }
            x[j] /= sp.lx[lp[j]];
        }
    }

    std::variant<Eigen::LLT<Matrix>, SparseNumeric> storage_;
    double jitter_ = 0.0;
};

// Relative diagonal shifts tried after a failed factorization.
inline constexpr std::array<double, 5> kJitterLadder{1e-10, 1e-9, 1e-8, 1e-7, 1e-6};

inline CholeskyFactor cholesky(const SymmetricMatrix& a)
{
    const Index n = a.order();
    if (n < 1 || a.values.cols() != n) {
        throw DimensionMismatch("cholesky: matrix must be square with order >= 1");
    }
    auto attempt = [&](double shift) -> std::optional<Eigen::LLT<Matrix>> {
        Matrix work = a.values;
        if (shift != 0.0) {
            work.diagonal().array() += shift;
        }
        Eigen::LLT<Matrix> llt(work);
        if (llt.info() != Eigen::Success) {
            return std::nullopt;
        }
        const auto diag = llt.matrixLLT().diagonal();
        if (!diag.allFinite() || (diag.array() <= 0.0).any()) {
            return std::nullopt;
        }
        return llt;
    };
    if (auto llt = attempt(0.0)) {
        return CholeskyFactor::dense(std::move(*llt), 0.0);
    }
    const double scale = a.values.diagonal().mean();
    if (std::isfinite(scale) && scale > 0.0) {
        for (double eps : kJitterLadder) {
            if (auto llt = attempt(eps * scale)) {
                return CholeskyFactor::dense(std::move(*llt), eps * scale);
            }
        }
    }
    throw NotPositiveDefinite("cholesky: matrix is not positive definite after diagonal jitter up to 1e-6");
}

// Passing the symbolic analysis of the pattern skips the ordering step; the
// numeric result is identical either way.
inline CholeskyFactor cholesky(const SparseSymmetricMatrix& a, std::shared_ptr<const SparseSymbolic> symbolic = nullptr)
{
    if (!a.pattern || a.order() < 1 || static_cast<Index>(a.values.size()) != a.pattern->nnz()) {
        throw DimensionMismatch("cholesky: sparse matrix values do not match its pattern");
    }
    if (!symbolic) {
        symbolic = std::make_shared<const SparseSymbolic>(a.pattern);
    } else if (symbolic->pattern_ptr() != a.pattern && symbolic->pattern_ptr()->rowidx != a.pattern->rowidx) {
        throw DimensionMismatch("cholesky: symbolic analysis belongs to a different pattern");
    }
    SparseNumeric numeric{symbolic, {}, {}};
    if (numeric.factorize(a.values, 0.0)) {
        return CholeskyFactor::sparse(std::move(numeric), 0.0);
    }
    double scale = 0.0;
    for (Index j = 0; j < a.order(); ++j) {
        scale += a.diagonal(j);
    }
    scale /= static_cast<double>(a.order());
    if (std::isfinite(scale) && scale > 0.0) {
        for (double eps : kJitterLadder) {
            if (numeric.factorize(a.values, eps * scale)) {
                return CholeskyFactor::sparse(std::move(numeric), eps * scale);
            }
        }
    }
    throw NotPositiveDefinite("cholesky: sparse matrix is not positive definite after diagonal jitter up to 1e-6");
}

inline double logdet(const CholeskyFactor& f) { return f.logdet(); }

inline Matrix solve(const CholeskyFactor& f, const Matrix& b) { return f.solve(b); }

inline Vector solve(const CholeskyFactor& f, const Vector& b) { return f.solve(b); }

// b^T A^{-1} b
inline double quadratic_form(const CholeskyFactor& f, const Vector& b) { return f.whiten(b).squaredNorm(); }

} // namespace svcmle
