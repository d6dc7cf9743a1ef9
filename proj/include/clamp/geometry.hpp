#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <string>

#include "clamp/common.hpp"

namespace clamp::geometry {

inline constexpr double kNormEpsilon = 1e-12;
inline constexpr double kDefaultAxisTol = 1e-8;
inline constexpr std::size_t kDefaultAxisMaxIter = 1000;

// A batch of projected embeddings before and after hypersphere
// normalization. Layout is row-major [image][view][dim].
struct EmbeddingBatch {
    std::size_t b = 0;    // images per batch
    std::size_t m = 0;    // views per image
    std::size_t dim = 0;  // embedding dimension

    std::vector<double> raw;            // b*m*dim
    std::vector<double> normalized;     // b*m*dim
    std::vector<double> global_center;  // dim
    std::vector<double> deviation_norm; // b*m, ||z - c|| per row
    std::vector<std::uint8_t> degenerate;  // b*m flags

    std::size_t rows() const { return b * m; }

    std::span<const double> raw_row(std::size_t i, std::size_t k) const {
        return {raw.data() + (i * m + k) * dim, dim};
    }
    std::span<const double> normalized_row(std::size_t i, std::size_t k) const {
        return {normalized.data() + (i * m + k) * dim, dim};
    }
};

// Ellipsoidal summary of one augmentation sub-manifold.
struct SubManifoldSummary {
    std::vector<double> centroid;
    std::vector<double> cov_diag;
    double trace = 0.0;
    double radius = 0.0;
    std::optional<Matrix> cov_full;
    std::optional<std::vector<double>> principal_axis;
};

// Subtract the batch mean and project every row to the unit hypersphere.
// Rows that coincide with the global center map to a near-zero vector and
// are flagged degenerate instead of raising; collapse detection is a
// diagnostics concern.
inline EmbeddingBatch center_and_normalize(std::span<const double> raw,
                                           std::size_t b, std::size_t m,
                                           std::size_t dim) {
    if (b < 1 || m < 1 || dim < 1 || b * m < 2)
        throw ValidationError("center_and_normalize: need at least two rows");
    if (raw.size() != b * m * dim)
        throw ValidationError("center_and_normalize: raw size does not match b*m*dim");
    for (std::size_t i = 0; i < raw.size(); ++i) {
        if (!std::isfinite(raw[i]))
            throw ValidationError("center_and_normalize: non-finite input at flat index " +
                                  std::to_string(i));
    }

    EmbeddingBatch batch;
    batch.b = b;
    batch.m = m;
    batch.dim = dim;
    batch.raw.assign(raw.begin(), raw.end());
    batch.global_center.assign(dim, 0.0);
    batch.normalized.assign(raw.size(), 0.0);
    batch.deviation_norm.assign(b * m, 0.0);
    batch.degenerate.assign(b * m, 0);

    const std::size_t n = b * m;
    // Fixed reduction order: rows in storage order.
    for (std::size_t r = 0; r < n; ++r)
        for (std::size_t d = 0; d < dim; ++d)
            batch.global_center[d] += raw[r * dim + d];
    for (std::size_t d = 0; d < dim; ++d) batch.global_center[d] /= static_cast<double>(n);

    for (std::size_t r = 0; r < n; ++r) {
        double nrm = 0.0;
        for (std::size_t d = 0; d < dim; ++d) {
            const double u = raw[r * dim + d] - batch.global_center[d];
            nrm += u * u;
        }
        nrm = std::sqrt(nrm);
        batch.deviation_norm[r] = nrm;
        if (nrm <= kNormEpsilon) batch.degenerate[r] = 1;
        const double inv = 1.0 / (nrm + kNormEpsilon);
        for (std::size_t d = 0; d < dim; ++d)
            batch.normalized[r * dim + d] = (raw[r * dim + d] - batch.global_center[d]) * inv;
    }
    return batch;
}

// Centroid, biased (1/m) covariance diagonal, trace and radius of one
// sub-manifold. The full covariance is only materialized on request.
inline SubManifoldSummary summarize_sub_manifold(std::span<const double> views,
                                                 std::size_t m, std::size_t dim,
                                                 double r_s,
                                                 bool with_full_cov = false) {
    if (m < 2) throw ValidationError("summarize_sub_manifold: need m >= 2 views");
    if (r_s <= 0.0) throw ValidationError("summarize_sub_manifold: r_s must be positive");
    if (views.size() != m * dim)
        throw ValidationError("summarize_sub_manifold: views size does not match m*dim");

    SubManifoldSummary s;
    s.centroid.assign(dim, 0.0);
    for (std::size_t k = 0; k < m; ++k)
        for (std::size_t d = 0; d < dim; ++d) s.centroid[d] += views[k * dim + d];
    for (std::size_t d = 0; d < dim; ++d) s.centroid[d] /= static_cast<double>(m);

    s.cov_diag.assign(dim, 0.0);
    for (std::size_t k = 0; k < m; ++k)
        for (std::size_t d = 0; d < dim; ++d) {
            const double u = views[k * dim + d] - s.centroid[d];
            s.cov_diag[d] += u * u;
        }
    for (std::size_t d = 0; d < dim; ++d) s.cov_diag[d] /= static_cast<double>(m);

    s.trace = 0.0;
    for (double v : s.cov_diag) s.trace += v;
    s.radius = r_s * std::sqrt(s.trace / static_cast<double>(m));

    if (with_full_cov) {
        Matrix cov(dim, dim);
        for (std::size_t k = 0; k < m; ++k)
            for (std::size_t a = 0; a < dim; ++a) {
                const double ua = views[k * dim + a] - s.centroid[a];
                for (std::size_t c = 0; c < dim; ++c)
                    cov(a, c) += ua * (views[k * dim + c] - s.centroid[c]);
            }
        for (double& v : cov.data) v /= static_cast<double>(m);
        s.cov_full = std::move(cov);
    }
    return s;
}

// Top eigenvector by power iteration with angular convergence. The sign is
// fixed so the largest-magnitude component is nonnegative, which makes
// alignment statistics reproducible.
inline std::vector<double> principal_axis(const Matrix& cov,
                                          double tol = kDefaultAxisTol,
                                          std::size_t max_iter = kDefaultAxisMaxIter) {
    if (cov.rows != cov.cols || cov.rows == 0)
        throw ValidationError("principal_axis: matrix must be square");
    if (tol <= 0.0) throw ValidationError("principal_axis: tol must be positive");
    if (frobenius_norm(cov) == 0.0) throw ValidationError("principal_axis: no principal axis");

    const std::size_t n = cov.rows;
    Rng rng(0x243f6a8885a308d3ULL);  // fixed start for determinism
    std::vector<double> v = random_unit_vector(n, rng);
    std::vector<double> w(n, 0.0);

    for (std::size_t it = 0; it < max_iter; ++it) {
        for (std::size_t r = 0; r < n; ++r) w[r] = dot(cov.row(r), v);
        const double wn = norm2(w);
        if (wn == 0.0) {
            // landed in the null space; restart from a fresh direction
            v = random_unit_vector(n, rng);
            continue;
        }
        for (auto& x : w) x /= wn;
        const double cos_angle = std::min(1.0, std::abs(dot(w, v)));
        v = w;
        if (std::acos(cos_angle) < tol) break;
    }

    std::size_t imax = 0;
    for (std::size_t i = 1; i < n; ++i)
        if (std::abs(v[i]) > std::abs(v[imax])) imax = i;
    if (v[imax] < 0.0)
        for (auto& x : v) x = -x;
    const double vn = norm2(v);
    for (auto& x : v) x /= vn;
    return v;
}

// Ellipsoid volume from semi-axes r_s*sqrt(lambda_j), and the AM-based
// upper bound obtained by replacing every semi-axis with the RMS semi-axis.
inline std::pair<double, double> volume_and_bound(std::span<const double> eigenvalues,
                                                  double r_s) {
    if (eigenvalues.empty()) throw ValidationError("volume_and_bound: need K >= 1 eigenvalues");
    if (r_s <= 0.0) throw ValidationError("volume_and_bound: r_s must be positive");
    const double k = static_cast<double>(eigenvalues.size());

    double log_ball = (k / 2.0) * std::log(M_PI) - std::lgamma(k / 2.0 + 1.0);
    double log_prod = 0.0;
    double sum = 0.0;
    for (double lam : eigenvalues) {
        if (lam <= 0.0) throw ValidationError("volume_and_bound: eigenvalues must be positive");
        log_prod += std::log(r_s) + 0.5 * std::log(lam);
        sum += lam;
    }
    const double volume = std::exp(log_ball + log_prod);
    const double rms_axis = r_s * std::sqrt(sum / k);
    const double bound = std::exp(log_ball + k * std::log(rms_axis));
    return {volume, bound};
}

}  // namespace clamp::geometry
