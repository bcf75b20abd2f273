#pragma once

#include "common.hpp"

#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <string>
#include <string_view>
#include <unordered_map>

namespace svcmle {

// Matérn covariance parameters of one coefficient process. The smoothness is
// treated as known and is never estimated.
struct MaternParams {
    double rho = 1.0;
    double sigma2 = 1.0;
    double nu = 0.5;

    // Zero variance is accepted (a degenerate, identically zero process).
    void validate() const
    {
        if (!(rho > 0.0) || !std::isfinite(rho)) {
            throw InvalidArgument("matern: range must be positive and finite, got " + std::to_string(rho));
        }
        if (!(sigma2 >= 0.0) || !std::isfinite(sigma2)) {
            throw InvalidArgument("matern: variance must be nonnegative and finite, got " + std::to_string(sigma2));
        }
        if (!(nu > 0.0) || !std::isfinite(nu)) {
            throw InvalidArgument("matern: smoothness must be positive, got " + std::to_string(nu));
        }
    }
};

namespace detail {

inline bool is_half_integer(double nu, double target) { return std::abs(nu - target) < 1e-14; }

// sigma2 * 2^(1-nu)/Gamma(nu) * z^nu * K_nu(z) with z = sqrt(2 nu) r / rho.
inline double matern_bessel(double r, const MaternParams& p)
{
    if (r == 0.0) {
        return p.sigma2;
    }
    const double z = std::sqrt(2.0 * p.nu) * r / p.rho;
    if (z > 700.0) {
        return 0.0;
    }
    const double log_scale = (1.0 - p.nu) * std::numbers::ln2 - std::lgamma(p.nu) + p.nu * std::log(z);
    return p.sigma2 * std::exp(log_scale) * std::cyl_bessel_k(p.nu, z);
}

} // namespace detail

inline double matern_cov(double r, const MaternParams& p)
{
    if (std::isnan(r) || std::isnan(p.rho) || std::isnan(p.sigma2) || std::isnan(p.nu)) {
        throw InvalidArgument("matern_cov: NaN input");
    }
    if (r < 0.0) {
        throw InvalidArgument("matern_cov: negative distance");
    }
    if (r == 0.0) {
        return p.sigma2;
    }
    const double h = r / p.rho;
    if (detail::is_half_integer(p.nu, 0.5)) {
        return p.sigma2 * std::exp(-h);
    }
    if (detail::is_half_integer(p.nu, 1.5)) {
        const double a = std::sqrt(3.0) * h;
        return p.sigma2 * (1.0 + a) * std::exp(-a);
    }
    if (detail::is_half_integer(p.nu, 2.5)) {
        const double a = std::sqrt(5.0) * h;
        return p.sigma2 * (1.0 + a + a * a / 3.0) * std::exp(-a);
    }
    return detail::matern_bessel(r, p);
}

// Elementwise matern_cov over a block of distances. Closed-form smoothness
// values take the vectorized path.
inline Eigen::ArrayXd matern_cov(const Eigen::ArrayXd& r, const MaternParams& p)
{
    const double s = 1.0 / p.rho;
    if (detail::is_half_integer(p.nu, 0.5)) {
        return p.sigma2 * (-s * r).exp();
    }
    if (detail::is_half_integer(p.nu, 1.5)) {
        const Eigen::ArrayXd a = (std::sqrt(3.0) * s) * r;
        return p.sigma2 * (1.0 + a) * (-a).exp();
    }
    if (detail::is_half_integer(p.nu, 2.5)) {
        const Eigen::ArrayXd a = (std::sqrt(5.0) * s) * r;
        return p.sigma2 * (1.0 + a + a.square() / 3.0) * (-a).exp();
    }
    Eigen::ArrayXd out(r.size());
    for (Index i = 0; i < r.size(); ++i) {
        out[i] = matern_cov(r[i], p);
    }
    return out;
}

enum class TaperFamily { none, wendland1, spherical };

inline std::string_view to_string(TaperFamily f)
{
    switch (f) {
    case TaperFamily::none: return "none";
    case TaperFamily::wendland1: return "wendland1";
    case TaperFamily::spherical: return "spherical";
    }
    return "none";
}

inline TaperFamily parse_taper_family(std::string_view s)
{
    if (s == "none" || s == "off") {
        return TaperFamily::none;
    }
    if (s == "wendland1") {
        return TaperFamily::wendland1;
    }
    if (s == "spherical") {
        return TaperFamily::spherical;
    }
    throw InvalidArgument("unknown taper family '" + std::string(s) + "'");
}

struct TaperSpec {
    TaperFamily family = TaperFamily::none;
    double range = std::numeric_limits<double>::infinity();

    static TaperSpec none() { return {}; }
    static TaperSpec wendland1(double range) { return {TaperFamily::wendland1, range}; }
    static TaperSpec spherical(double range) { return {TaperFamily::spherical, range}; }

    bool active() const { return family != TaperFamily::none; }

    void validate() const
    {
        if (active() && !(range > 0.0 && std::isfinite(range))) {
            throw InvalidArgument("taper range must be positive and finite");
        }
    }

    // Tapering a Matérn covariance keeps positive definiteness in the plane
    // only up to a family-specific smoothness.
    void check_supports(double nu) const
    {
        if (family == TaperFamily::wendland1 && nu > 1.5 + 1e-12) {
            throw InvalidArgument("wendland1 taper supports Matern smoothness <= 1.5");
        }
        if (family == TaperFamily::spherical && nu > 0.5 + 1e-12) {
            throw InvalidArgument("spherical taper supports Matern smoothness <= 0.5");
        }
    }
};

inline double taper_weight(double r, const TaperSpec& t)
{
    if (!t.active()) {
        return 1.0;
    }
    const double h = std::min(r / t.range, 1.0);
    switch (t.family) {
    case TaperFamily::wendland1: {
        const double u = 1.0 - h;
        return u * u * u * u * (4.0 * h + 1.0);
    }
    case TaperFamily::spherical:
        return 1.0 - 1.5 * h + 0.5 * h * h * h;
    case TaperFamily::none:
        break;
    }
    return 1.0;
}

inline Eigen::ArrayXd taper_weight(const Eigen::ArrayXd& r, const TaperSpec& t)
{
    if (!t.active()) {
        return Eigen::ArrayXd::Ones(r.size());
    }
    const Eigen::ArrayXd h = (r / t.range).min(1.0);
    if (t.family == TaperFamily::wendland1) {
        return (1.0 - h).square().square() * (4.0 * h + 1.0);
    }
    return 1.0 - 1.5 * h + 0.5 * h.cube();
}

inline void check_locations(const Locations& locs, std::string_view what)
{
    if (locs.rows() < 1 || locs.cols() < 1) {
        throw InvalidArgument(std::string(what) + ": need at least one location with d >= 1");
    }
    if (!locs.allFinite()) {
        throw InvalidArgument(std::string(what) + ": coordinates must be finite");
    }
}

// Matérn covariance between two location sets (Euclidean distance).
inline Matrix cov_matrix(const Locations& a, const Locations& b, const MaternParams& p)
{
    check_locations(a, "cov_matrix");
    check_locations(b, "cov_matrix");
    if (a.cols() != b.cols()) {
        throw DimensionMismatch("cov_matrix: location sets have different dimensions");
    }
    p.validate();
    Matrix out(a.rows(), b.rows());
    for (Index l = 0; l < b.rows(); ++l) {
        for (Index k = 0; k < a.rows(); ++k) {
            out(k, l) = matern_cov(distance(a, k, b, l), p);
        }
    }
    return out;
}

// Uniform bin index over a point set, used to enumerate pairs closer than a
// cutoff without visiting all n^2 pairs.
class NeighborGrid {
public:
    NeighborGrid(const Locations& locs, double cell) : locs_(&locs), cell_(cell)
    {
        if (!(cell > 0.0) || !std::isfinite(cell)) {
            throw InvalidArgument("neighbor grid: cell size must be positive and finite");
        }
        check_locations(locs, "neighbor grid");
        origin_ = locs.colwise().minCoeff().transpose();
        for (Index i = 0; i < locs.rows(); ++i) {
            bins_[key_of(cell_coords(locs.row(i).transpose()))].push_back(i);
        }
    }

    // Calls visit(j, r) for every indexed point j with distance r to `point`
    // satisfying r < cutoff (or r <= cutoff when inclusive). Points are
    // visited in increasing index order.
    template <typename Visit>
    void for_each_within(const Vector& point, double cutoff, bool inclusive, Visit&& visit) const
    {
        const Index d = locs_->cols();
        const auto center = cell_coords(point);
        const auto reach = static_cast<std::int64_t>(std::ceil(cutoff / cell_));
        std::vector<Index> hits;
        std::vector<std::int64_t> offset(static_cast<std::size_t>(d), -reach);
        std::vector<std::int64_t> probe(static_cast<std::size_t>(d));
        while (true) {
            for (Index c = 0; c < d; ++c) {
                probe[c] = center[c] + offset[c];
            }
            if (auto it = bins_.find(key_of(probe)); it != bins_.end()) {
                hits.insert(hits.end(), it->second.begin(), it->second.end());
            }
            Index c = 0;
            for (; c < d; ++c) {
                if (++offset[c] <= reach) {
                    break;
                }
                offset[c] = -reach;
            }
            if (c == d) {
                break;
            }
        }
        std::sort(hits.begin(), hits.end());
        hits.erase(std::unique(hits.begin(), hits.end()), hits.end());
        const double c2 = cutoff * cutoff;
        for (Index j : hits) {
            double s = 0.0;
            for (Index c = 0; c < d; ++c) {
                const double diff = point[c] - (*locs_)(j, c);
                s += diff * diff;
            }
            if (s < c2 || (inclusive && s <= c2)) {
                visit(j, std::sqrt(s));
            }
        }
    }

private:
    std::vector<std::int64_t> cell_coords(const Vector& x) const
    {
        std::vector<std::int64_t> out(static_cast<std::size_t>(x.size()));
        for (Index c = 0; c < x.size(); ++c) {
            out[c] = static_cast<std::int64_t>(std::floor((x[c] - origin_[c]) / cell_));
        }
        return out;
    }

    static std::uint64_t key_of(const std::vector<std::int64_t>& cell)
    {
        std::uint64_t h = 1469598103934665603ull;
        for (auto v : cell) {
            h ^= static_cast<std::uint64_t>(v) + 0x9e3779b97f4a7c15ull + (h << 6) + (h >> 2);
        }
        return h;
    }

    const Locations* locs_;
    double cell_;
    Vector origin_;
    // Hash collisions only add candidates; distances are always rechecked.
    std::unordered_map<std::uint64_t, std::vector<Index>> bins_;
};

} // namespace svcmle
