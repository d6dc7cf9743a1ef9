#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

#include "clamp/geometry.hpp"

namespace clamp::packing {

inline constexpr double kLogEpsilon = 1e-12;

struct PairRecord {
    std::size_t i = 0;
    std::size_t j = 0;
    double distance = 0.0;
    double energy = 0.0;
};

struct PackingLossReport {
    double overlap_energy = 0.0;
    double log_loss = 0.0;
    bool absorbing = false;
    std::vector<PairRecord> pairs;                  // ordered overlapping pairs
    std::vector<std::size_t> per_manifold_neighbors;
    std::vector<double> grad_raw;                    // b*m*dim, empty unless requested
    std::vector<geometry::SubManifoldSummary> summaries;
};

// Quadratic short-range repulsion between two sub-manifolds a chordal
// distance `dist` apart. Zero at and beyond contact, including the
// degenerate point-manifold case r_i + r_j = 0.
inline double pair_energy(double dist, double r_i, double r_j) {
    const double s = r_i + r_j;
    if (s <= 0.0 || dist >= s) return 0.0;
    const double t = 1.0 - dist / s;
    return t * t;
}

namespace detail {

inline void validate_batch(const geometry::EmbeddingBatch& batch, double r_s) {
    if (batch.b < 2) throw ValidationError("batch_loss: need b >= 2 images");
    if (batch.m < 2) throw ValidationError("batch_loss: need m >= 2 views");
    if (r_s <= 0.0) throw ValidationError("batch_loss: r_s must be positive");
    if (batch.normalized.size() != batch.b * batch.m * batch.dim)
        throw ValidationError("batch_loss: batch is not normalized");
}

// Shared forward pass over the normalized embeddings: summaries, pair
// energies and neighbor counts. Covariance stays diagonal-only here.
inline PackingLossReport forward(const geometry::EmbeddingBatch& batch, double r_s) {
    PackingLossReport rep;
    rep.summaries.reserve(batch.b);
    for (std::size_t i = 0; i < batch.b; ++i) {
        std::span<const double> views{batch.normalized.data() + i * batch.m * batch.dim,
                                      batch.m * batch.dim};
        rep.summaries.push_back(
            geometry::summarize_sub_manifold(views, batch.m, batch.dim, r_s));
    }

    rep.per_manifold_neighbors.assign(batch.b, 0);
    for (std::size_t i = 0; i < batch.b; ++i) {
        for (std::size_t j = i + 1; j < batch.b; ++j) {
            double d2 = 0.0;
            for (std::size_t d = 0; d < batch.dim; ++d) {
                const double u = rep.summaries[i].centroid[d] - rep.summaries[j].centroid[d];
                d2 += u * u;
            }
            const double dist = std::sqrt(d2);
            const double rsum = rep.summaries[i].radius + rep.summaries[j].radius;
            if (dist < rsum) {
                const double e = pair_energy(dist, rep.summaries[i].radius,
                                             rep.summaries[j].radius);
                rep.overlap_energy += 2.0 * e;  // ordered sum counts (i,j) and (j,i)
                rep.pairs.push_back({i, j, dist, e});
                rep.pairs.push_back({j, i, dist, e});
                ++rep.per_manifold_neighbors[i];
                ++rep.per_manifold_neighbors[j];
            }
        }
    }
    rep.absorbing = rep.overlap_energy == 0.0;
    rep.log_loss = std::log(rep.overlap_energy + kLogEpsilon);
    return rep;
}

}  // namespace detail

inline PackingLossReport batch_loss(const geometry::EmbeddingBatch& batch, double r_s) {
    detail::validate_batch(batch, r_s);
    return detail::forward(batch, r_s);
}

// Exact gradient of log_loss with respect to the raw embeddings. The chain
// runs through pair energies, centroids, radii (via the covariance trace),
// the unit-norm projection and the shared batch-mean centering.
inline PackingLossReport batch_loss_gradient(const geometry::EmbeddingBatch& batch,
                                             double r_s) {
    detail::validate_batch(batch, r_s);
    PackingLossReport rep = detail::forward(batch, r_s);

    const std::size_t b = batch.b, m = batch.m, dim = batch.dim;
    rep.grad_raw.assign(b * m * dim, 0.0);
    if (rep.absorbing) return rep;  // flat zero-energy plateau

    const double dloss_denergy = 1.0 / (rep.overlap_energy + kLogEpsilon);

    // Per-manifold adjoints: gradient into centroids and into traces.
    Matrix grad_centroid(b, dim);
    std::vector<double> grad_trace(b, 0.0);

    for (std::size_t p = 0; p < rep.pairs.size(); p += 2) {
        const auto& pr = rep.pairs[p];  // unordered pair stored twice; use one copy
        const std::size_t i = pr.i, j = pr.j;
        const double s = rep.summaries[i].radius + rep.summaries[j].radius;
        const double t = 1.0 - pr.distance / s;
        const double g = 2.0 * dloss_denergy;  // ordered double count

        // dE/ddist = -2t/s; dE/ds = 2t*dist/s^2
        const double de_ddist = -2.0 * t / s;
        const double de_ds = 2.0 * t * pr.distance / (s * s);

        if (pr.distance > 0.0) {
            for (std::size_t d = 0; d < dim; ++d) {
                const double dir =
                    (rep.summaries[i].centroid[d] - rep.summaries[j].centroid[d]) / pr.distance;
                grad_centroid(i, d) += g * de_ddist * dir;
                grad_centroid(j, d) -= g * de_ddist * dir;
            }
        }
        // r = r_s*sqrt(trace/m) => dr/dtrace = r_s / (2*sqrt(trace*m))
        for (std::size_t idx : {i, j}) {
            const double tr = rep.summaries[idx].trace;
            if (tr > 0.0)
                grad_trace[idx] += g * de_ds * r_s / (2.0 * std::sqrt(tr * static_cast<double>(m)));
        }
    }

    // Back through centroid and trace to the normalized embeddings:
    //   dZ_i/dz~_ik = I/m,  dTr_i/dz~_ik = (2/m)(z~_ik - Z_i).
    std::vector<double> grad_norm(b * m * dim, 0.0);
    for (std::size_t i = 0; i < b; ++i) {
        const auto& cent = rep.summaries[i].centroid;
        for (std::size_t k = 0; k < m; ++k) {
            const std::size_t base = (i * m + k) * dim;
            for (std::size_t d = 0; d < dim; ++d) {
                const double zt = batch.normalized[base + d];
                grad_norm[base + d] =
                    grad_centroid(i, d) / static_cast<double>(m) +
                    grad_trace[i] * 2.0 / static_cast<double>(m) * (zt - cent[d]);
            }
        }
    }

    // Back through z~ = u/(|u| + eps) with u = z - c.
    std::vector<double> grad_centered(b * m * dim, 0.0);
    const std::size_t n = b * m;
    for (std::size_t r = 0; r < n; ++r) {
        const double nrm = batch.deviation_norm[r];
        const std::size_t base = r * dim;
        if (batch.degenerate[r]) continue;  // near-zero row, treated as constant
        const double denom = nrm + geometry::kNormEpsilon;
        double udotg = 0.0;
        for (std::size_t d = 0; d < dim; ++d) {
            const double u = batch.raw[base + d] - batch.global_center[d];
            udotg += u * grad_norm[base + d];
        }
        const double corr = udotg / (nrm * denom * denom);
        for (std::size_t d = 0; d < dim; ++d) {
            const double u = batch.raw[base + d] - batch.global_center[d];
            grad_centered[base + d] = grad_norm[base + d] / denom - u * corr;
        }
    }

    // Back through centering: u_r = z_r - mean(z); the mean couples all rows.
    std::vector<double> col_sum(dim, 0.0);
    for (std::size_t r = 0; r < n; ++r)
        for (std::size_t d = 0; d < dim; ++d) col_sum[d] += grad_centered[r * dim + d];
    for (std::size_t d = 0; d < dim; ++d) col_sum[d] /= static_cast<double>(n);
    for (std::size_t r = 0; r < n; ++r)
        for (std::size_t d = 0; d < dim; ++d)
            rep.grad_raw[r * dim + d] = grad_centered[r * dim + d] - col_sum[d];

    return rep;
}

// Per-manifold neighbor counts under the centroid-distance criterion.
inline std::vector<std::size_t> neighbor_count(const geometry::EmbeddingBatch& batch,
                                               double r_s) {
    detail::validate_batch(batch, r_s);
    return detail::forward(batch, r_s).per_manifold_neighbors;
}

}  // namespace clamp::packing
