#pragma once

// Random instances and brute-force reference implementations shared by the
// unit and acceptance tests. The references deliberately avoid the library's
// assembly, factorization and prediction code paths.

#include <svcmle/svcmle.hpp>

#include <Eigen/Dense>

#include <random>

namespace svctest {

using namespace svcmle;

inline Locations random_locations(Index n, Index d, std::mt19937_64& rng)
{
    std::uniform_real_distribution<double> u(0.0, 1.0);
    Locations l(n, d);
    for (Index i = 0; i < n; ++i) {
        for (Index c = 0; c < d; ++c) {
            l(i, c) = u(rng);
        }
    }
    return l;
}

// Intercept column followed by standard normal covariates; normal response.
inline SvcDataset random_dataset(Index n, Index p, std::mt19937_64& rng, Index d = 2)
{
    std::normal_distribution<double> z;
    SvcDataset ds;
    ds.locations = random_locations(n, d, rng);
    ds.x.resize(n, p);
    ds.y.resize(n);
    for (Index i = 0; i < n; ++i) {
        ds.x(i, 0) = 1.0;
        for (Index j = 1; j < p; ++j) {
            ds.x(i, j) = z(rng);
        }
        ds.y[i] = z(rng);
    }
    return ds;
}

inline CovParams random_theta(Index p, std::mt19937_64& rng, bool random_nu = false)
{
    std::uniform_real_distribution<double> rho(0.05, 0.5), s2(0.05, 1.0), tau(0.01, 0.5);
    std::uniform_int_distribution<int> pick(0, 2);
    const double nus[] = {0.5, 1.5, 2.5};
    CovParams t;
    for (Index j = 0; j < p; ++j) {
        t.svc.push_back({rho(rng), s2(rng), random_nu ? nus[pick(rng)] : 0.5});
    }
    t.nugget = tau(rng);
    return t;
}

inline double exp_cov(double r, const MaternParams& m) { return m.sigma2 * std::exp(-r / m.rho); }

inline double euclid(const Locations& a, Index i, const Locations& b, Index j)
{
    return (a.row(i) - b.row(j)).norm();
}

// Matern covariance written out for the closed-form smoothness values.
inline double ref_matern(double r, const MaternParams& m)
{
    const double h = r / m.rho;
    if (m.nu == 0.5) {
        return m.sigma2 * std::exp(-h);
    }
    if (m.nu == 1.5) {
        return m.sigma2 * (1.0 + std::sqrt(3.0) * h) * std::exp(-std::sqrt(3.0) * h);
    }
    if (m.nu == 2.5) {
        return m.sigma2 * (1.0 + std::sqrt(5.0) * h + 5.0 * h * h / 3.0) * std::exp(-std::sqrt(5.0) * h);
    }
    throw std::logic_error("ref_matern: unsupported smoothness");
}

inline double ref_wendland1(double r, double range)
{
    if (r >= range) {
        return 0.0;
    }
    const double h = r / range;
    return std::pow(1.0 - h, 4) * (4.0 * h + 1.0);
}

// Block covariance of the stacked latent vector (eta_1 over all sites, ...,
// eta_p over all sites), optionally tapered.
inline Matrix ref_latent_cov(const Locations& s, const CovParams& theta, double taper_range = 0.0)
{
    const Index n = s.rows();
    const Index p = theta.p();
    Matrix out = Matrix::Zero(n * p, n * p);
    for (Index j = 0; j < p; ++j) {
        for (Index a = 0; a < n; ++a) {
            for (Index b = 0; b < n; ++b) {
                const double r = euclid(s, a, s, b);
                const double w = taper_range > 0.0 ? ref_wendland1(r, taper_range) : 1.0;
                out(j * n + a, j * n + b) = ref_matern(r, theta.svc[j]) * w;
            }
        }
    }
    return out;
}

// W with W(i, j n + i) = x_ij.
inline Matrix ref_design(const Matrix& x)
{
    const Index n = x.rows();
    const Index p = x.cols();
    Matrix w = Matrix::Zero(n, n * p);
    for (Index j = 0; j < p; ++j) {
        for (Index i = 0; i < n; ++i) {
            w(i, j * n + i) = x(i, j);
        }
    }
    return w;
}

// W Sigma_eta W^T + tau2 I.
inline Matrix ref_response_cov(const SvcDataset& d, const CovParams& theta, double taper_range = 0.0)
{
    const Matrix w = ref_design(d.x);
    return w * ref_latent_cov(d.locations, theta, taper_range) * w.transpose() +
           theta.nugget * Matrix::Identity(d.n(), d.n());
}

// -2 log N(y; mean, cov) - n log(2 pi), via LU.
inline double ref_n2ll(const Vector& y, const Vector& mean, const Matrix& cov)
{
    const Index n = y.size();
    Eigen::PartialPivLU<Matrix> lu(cov);
    double logdet = 0.0;
    for (Index i = 0; i < n; ++i) {
        logdet += std::log(std::abs(lu.matrixLU()(i, i)));
    }
    const Vector r = y - mean;
    const double quad = r.dot(lu.solve(r));
    const double log_density = -0.5 * (static_cast<double>(n) * std::log(2.0 * std::numbers::pi) + logdet + quad);
    return -2.0 * log_density - static_cast<double>(n) * std::log(2.0 * std::numbers::pi);
}

// Conditional mean of the latent values at new sites and of the new responses
// from the joint normal of (eta, eta', Y), built explicitly.
struct JointConditional {
    Matrix eta;   // n' x p
    Vector var_y; // predictive variances of Y'
};

inline JointConditional ref_joint_conditional(const SvcDataset& train, const Locations& fresh, const Matrix& x_new,
                                              const CovParams& theta, const Vector& mu)
{
    const Index n = train.n();
    const Index m = fresh.rows();
    const Index p = theta.p();
    Locations all(n + m, train.dim());
    all << train.locations, fresh;
    // latent covariance over all n + m sites, per process blocks
    const Matrix k_all = ref_latent_cov(all, theta);
    // select eta (training sites) and eta' (new sites) in stacked order
    std::vector<Index> idx_eta, idx_new;
    for (Index j = 0; j < p; ++j) {
        for (Index i = 0; i < n; ++i) {
            idx_eta.push_back(j * (n + m) + i);
        }
    }
    for (Index j = 0; j < p; ++j) {
        for (Index k = 0; k < m; ++k) {
            idx_new.push_back(j * (n + m) + n + k);
        }
    }
    auto block = [&](const std::vector<Index>& a, const std::vector<Index>& b) {
        Matrix out(static_cast<Index>(a.size()), static_cast<Index>(b.size()));
        for (std::size_t r = 0; r < a.size(); ++r) {
            for (std::size_t c = 0; c < b.size(); ++c) {
                out(static_cast<Index>(r), static_cast<Index>(c)) = k_all(a[r], b[c]);
            }
        }
        return out;
    };
    const Matrix w = ref_design(train.x);
    const Matrix w_new = ref_design(x_new);
    const Matrix s_eta = block(idx_eta, idx_eta);
    const Matrix s_new_eta = block(idx_new, idx_eta);
    const Matrix s_new = block(idx_new, idx_new);
    const Matrix s_y = w * s_eta * w.transpose() + theta.nugget * Matrix::Identity(n, n);
    const Matrix s_new_y = s_new_eta * w.transpose();
    const Matrix s_y_inv = s_y.inverse();
    const Vector cond = s_new_y * s_y_inv * (train.y - train.x * mu);
    JointConditional out;
    out.eta.resize(m, p);
    for (Index j = 0; j < p; ++j) {
        out.eta.col(j) = cond.segment(j * m, m);
    }
    const Matrix c_ynew_y = w_new * s_new_y;
    const Matrix c_ynew = w_new * s_new * w_new.transpose() + theta.nugget * Matrix::Identity(m, m);
    out.var_y = (c_ynew - c_ynew_y * s_y_inv * c_ynew_y.transpose()).diagonal();
    return out;
}

inline double max_abs(const Matrix& a) { return a.cwiseAbs().maxCoeff(); }

} // namespace svctest
