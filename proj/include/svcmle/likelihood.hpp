#pragma once

#include "response_covariance.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/QR>

namespace svcmle {

// Penalized-complexity regularization of the ranges and standard deviations.
// Each coefficient process j contributes
//
//   lambda_rho_j / rho_j + 4 log rho_j + 2 lambda_sigma_j sigma_j
//
// to -2 log-likelihood. Additive constants of the log prior are dropped.
struct PcPriorSpec {
    struct Rates {
        double lambda_rho = 0.0;
        double lambda_sigma = 0.0;
    };

    enum class Family { off, pc };

    Family family = Family::pc;
    // One entry applies to every process; otherwise one entry per process.
    std::vector<Rates> rates;

    // P(rho < rho0) = alpha_rho and P(sigma > sigma0) = alpha_sigma.
    static Rates rates_from_tails(double rho0, double alpha_rho, double sigma0, double alpha_sigma)
    {
        if (!(rho0 > 0.0) || !(sigma0 > 0.0)) {
            throw InvalidArgument("pc prior: rho0 and sigma0 must be positive");
        }
        if (!(alpha_rho > 0.0 && alpha_rho < 1.0) || !(alpha_sigma > 0.0 && alpha_sigma < 1.0)) {
            throw InvalidArgument("pc prior: tail probabilities must lie in (0, 1)");
        }
        return {-2.0 * std::log(alpha_rho) * rho0, -std::log(alpha_sigma) / sigma0};
    }

    static PcPriorSpec global(double rho0, double alpha_rho, double sigma0, double alpha_sigma)
    {
        return {Family::pc, {rates_from_tails(rho0, alpha_rho, sigma0, alpha_sigma)}};
    }

    static PcPriorSpec from_rates(std::vector<Rates> r) { return {Family::pc, std::move(r)}; }

    static PcPriorSpec off() { return {Family::off, {}}; }

    bool enabled() const { return family == Family::pc; }

    const Rates& rates_for(Index j) const
    {
        if (rates.size() == 1) {
            return rates.front();
        }
        return rates.at(static_cast<std::size_t>(j));
    }

    void check(Index p) const
    {
        if (!enabled()) {
            return;
        }
        if (rates.size() != 1 && static_cast<Index>(rates.size()) != p) {
            throw DimensionMismatch("pc prior: need one global rate pair or one per coefficient process");
        }
        for (const auto& r : rates) {
            if (!(r.lambda_rho >= 0.0) || !(r.lambda_sigma >= 0.0)) {
                throw InvalidArgument("pc prior: rates must be nonnegative");
            }
        }
    }
};

inline double pc_penalty(const CovParams& theta, const PcPriorSpec& spec)
{
    if (!spec.enabled()) {
        return 0.0;
    }
    spec.check(theta.p());
    double s = 0.0;
    for (Index j = 0; j < theta.p(); ++j) {
        const auto& r = spec.rates_for(j);
        const double rho = theta.svc[j].rho;
        s += r.lambda_rho / rho + 4.0 * std::log(rho) + 2.0 * r.lambda_sigma * std::sqrt(theta.svc[j].sigma2);
    }
    return s;
}

struct ProfileValue {
    double value = 0.0;
    MeanParams mu;
    double jitter = 0.0;
};

// Likelihood evaluator bound to one dataset and taper. Evaluations are const
// and may run concurrently; each one factorizes Sigma_Y exactly once.
class SvcLikelihood {
public:
    SvcLikelihood(SvcDataset data, TaperSpec taper)
        : data_(checked(std::move(data))), cov_(data_.locations, taper)
    {
    }

    const SvcDataset& data() const { return data_; }
    const ResponseCovariance& covariance() const { return cov_; }

    // log det Sigma_Y + (y - X mu)^T Sigma_Y^{-1} (y - X mu)
    double n2ll(const CovParams& theta, const MeanParams& mu, double* jitter = nullptr) const
    {
        if (mu.mu.size() != data_.p()) {
            throw DimensionMismatch("n2ll: mean vector length does not match the covariates");
        }
        const CholeskyFactor f = cov_.factorize(data_.x, theta);
        if (jitter) {
            *jitter = f.jitter();
        }
        const Vector r = data_.y - data_.x * mu.mu;
        return f.logdet() + f.whiten(r).squaredNorm();
    }

    MeanParams gls_mu(const CovParams& theta) const { return profile(theta).mu; }

    ProfileValue profile(const CovParams& theta) const
    {
        const CholeskyFactor f = cov_.factorize(data_.x, theta);
        const Matrix zx = f.whiten(data_.x);
        const Vector zy = f.whiten(data_.y);
        const Vector mu = gls_from_whitened(zx, zy);
        ProfileValue out;
        out.mu.mu = mu;
        // Same arithmetic as n2ll, so profile(theta) == n2ll(theta, gls_mu(theta)) bit for bit.
        const Vector r = data_.y - data_.x * mu;
        out.value = f.logdet() + f.whiten(r).squaredNorm();
        out.jitter = f.jitter();
        return out;
    }

    ProfileValue regularized(const CovParams& theta, const PcPriorSpec& spec) const
    {
        ProfileValue v = profile(theta);
        v.value += pc_penalty(theta, spec);
        return v;
    }

private:
    static SvcDataset checked(SvcDataset d)
    {
        d.check_shape();
        return d;
    }

    static Vector gls_from_whitened(const Matrix& zx, const Vector& zy)
    {
        const Matrix gram = zx.transpose() * zx;
        Eigen::SelfAdjointEigenSolver<Matrix> eig(gram, Eigen::EigenvaluesOnly);
        const double lo = eig.eigenvalues().minCoeff();
        const double hi = eig.eigenvalues().maxCoeff();
        if (!(lo > 0.0) || hi / lo > 1e12) {
            throw SingularGram("gls: X^T Sigma^-1 X is numerically singular (condition estimate " +
                               std::to_string(lo > 0.0 ? hi / lo : INFINITY) + ")");
        }
        return zx.colPivHouseholderQr().solve(zy);
    }

    SvcDataset data_;
    ResponseCovariance cov_;
};

inline double n2ll(const SvcDataset& d, const CovParams& theta, const MeanParams& mu, const TaperSpec& taper)
{
    return SvcLikelihood(d, taper).n2ll(theta, mu);
}

inline MeanParams gls_mu(const SvcDataset& d, const CovParams& theta, const TaperSpec& taper)
{
    return SvcLikelihood(d, taper).gls_mu(theta);
}

inline std::pair<double, MeanParams> profile_n2ll(const SvcDataset& d, const CovParams& theta, const TaperSpec& taper)
{
    auto v = SvcLikelihood(d, taper).profile(theta);
    return {v.value, std::move(v.mu)};
}

inline std::pair<double, MeanParams> regularized_objective(const SvcDataset& d, const CovParams& theta,
                                                           const TaperSpec& taper, const PcPriorSpec& spec)
{
    auto v = SvcLikelihood(d, taper).regularized(theta, spec);
    return {v.value, std::move(v.mu)};
}

} // namespace svcmle
