#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>
#include <vector>

#include "clamp/geometry.hpp"

namespace clamp::analysis {

struct Histogram {
    std::vector<double> edges;  // bins+1
    std::vector<double> mass;   // bins, sums to 1 when nonempty
};

// 50 uniform bins over the observed range, normalized to unit mass.
inline Histogram make_histogram(std::span<const double> samples, std::size_t bins = 50) {
    Histogram h;
    if (samples.empty()) return h;
    double lo = samples[0], hi = samples[0];
    for (double v : samples) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    if (hi == lo) hi = lo + 1.0;  // degenerate range: single occupied bin
    h.edges.resize(bins + 1);
    for (std::size_t i = 0; i <= bins; ++i)
        h.edges[i] = lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(bins);
    h.mass.assign(bins, 0.0);
    for (double v : samples) {
        auto idx = static_cast<std::size_t>((v - lo) / (hi - lo) * static_cast<double>(bins));
        if (idx >= bins) idx = bins - 1;
        h.mass[idx] += 1.0;
    }
    for (auto& m : h.mass) m /= static_cast<double>(samples.size());
    return h;
}

inline double histogram_mean(const Histogram& h) {
    double mean = 0.0;
    for (std::size_t i = 0; i < h.mass.size(); ++i)
        mean += h.mass[i] * 0.5 * (h.edges[i] + h.edges[i + 1]);
    return mean;
}

// Fraction of mass in bins whose center lies below `threshold`.
inline double histogram_mass_below(const Histogram& h, double threshold) {
    double acc = 0.0;
    for (std::size_t i = 0; i < h.mass.size(); ++i)
        if (0.5 * (h.edges[i] + h.edges[i + 1]) < threshold) acc += h.mass[i];
    return acc;
}

struct PairedHistogram {
    Histogram intra;
    Histogram inter;
};

struct GeometryReport {
    PairedHistogram centroid_distance;
    PairedHistogram centroid_cosine;
    PairedHistogram alignment_sq_cosine;
    double mean_intra_centroid_distance = 0.0;
    double mean_inter_centroid_distance = 0.0;
    double mean_intra_alignment_sq_cosine = 0.0;
    double mean_inter_alignment_sq_cosine = 0.0;
    std::size_t samples_used = 0;
    std::size_t augmentations_per_sample = 0;
};

// One augmentation sub-manifold in representation space: the m_a x h block
// of representations of the augmented views of a single sample.
struct SubManifoldSample {
    Matrix views;
    std::size_t class_id = 0;
};

// Centroid / orientation statistics over intra- and inter-class pairs of
// sub-manifolds. `repeats` resamples a subset of the provided manifolds;
// samples accumulate across repeats before binning.
inline GeometryReport geometry_report(const std::vector<SubManifoldSample>& manifolds,
                                      std::size_t repeats, std::size_t subset_size, Rng& rng) {
    if (manifolds.size() < 2) throw ValidationError("geometry_report: need >= 2 sub-manifolds");
    std::vector<std::size_t> class_counts;
    for (const auto& s : manifolds) {
        if (s.views.rows < 2)
            throw ValidationError("geometry_report: each sub-manifold needs >= 2 views");
        if (s.class_id >= class_counts.size()) class_counts.resize(s.class_id + 1, 0);
        ++class_counts[s.class_id];
    }
    std::size_t populated = 0;
    for (auto c : class_counts) populated += c > 0;
    if (populated < 2) throw ValidationError("geometry_report: need >= 2 classes");
    if (repeats == 0) throw ValidationError("geometry_report: repeats must be >= 1");
    subset_size = std::min(subset_size, manifolds.size());

    struct Summary {
        std::vector<double> centroid;
        std::vector<double> axis;
        std::size_t class_id;
    };
    // Per-manifold summaries are deterministic; compute once.
    std::vector<Summary> all;
    all.reserve(manifolds.size());
    for (const auto& s : manifolds) {
        auto sm = geometry::summarize_sub_manifold(
            {s.views.data.data(), s.views.data.size()}, s.views.rows, s.views.cols,
            /*r_s=*/1.0, /*with_full_cov=*/true);
        Summary rec;
        rec.centroid = sm.centroid;
        rec.class_id = s.class_id;
        if (sm.trace > 0.0)
            rec.axis = geometry::principal_axis(*sm.cov_full);
        else
            rec.axis.assign(s.views.cols, 0.0);
        all.push_back(std::move(rec));
    }

    std::vector<double> intra_dist, inter_dist, intra_cos, inter_cos, intra_align, inter_align;
    std::vector<std::size_t> order(manifolds.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

    for (std::size_t rep = 0; rep < repeats; ++rep) {
        std::shuffle(order.begin(), order.end(), rng);
        for (std::size_t a = 0; a < subset_size; ++a)
            for (std::size_t b = a + 1; b < subset_size; ++b) {
                const auto& sa = all[order[a]];
                const auto& sb = all[order[b]];
                double d2 = 0.0;
                for (std::size_t d = 0; d < sa.centroid.size(); ++d) {
                    const double u = sa.centroid[d] - sb.centroid[d];
                    d2 += u * u;
                }
                const double dist = std::sqrt(d2);
                const double na = norm2(sa.centroid), nb = norm2(sb.centroid);
                const double cosine =
                    (na > 0.0 && nb > 0.0) ? dot(sa.centroid, sb.centroid) / (na * nb) : 0.0;
                const double ac = dot(sa.axis, sb.axis);
                const double sq_cos = ac * ac;
                const bool intra = sa.class_id == sb.class_id;
                (intra ? intra_dist : inter_dist).push_back(dist);
                (intra ? intra_cos : inter_cos).push_back(cosine);
                (intra ? intra_align : inter_align).push_back(sq_cos);
            }
    }

    auto mean_of = [](const std::vector<double>& v) {
        if (v.empty()) return 0.0;
        double s = 0.0;
        for (double x : v) s += x;
        return s / static_cast<double>(v.size());
    };

    GeometryReport report;
    report.centroid_distance = {make_histogram(intra_dist), make_histogram(inter_dist)};
    report.centroid_cosine = {make_histogram(intra_cos), make_histogram(inter_cos)};
    report.alignment_sq_cosine = {make_histogram(intra_align), make_histogram(inter_align)};
    report.mean_intra_centroid_distance = mean_of(intra_dist);
    report.mean_inter_centroid_distance = mean_of(inter_dist);
    report.mean_intra_alignment_sq_cosine = mean_of(intra_align);
    report.mean_inter_alignment_sq_cosine = mean_of(inter_align);
    report.samples_used = subset_size;
    report.augmentations_per_sample = manifolds.front().views.rows;
    return report;
}

inline std::vector<double> jacobi_eigenvalues(Matrix a, double off_tol = 1e-10,
                                              std::size_t max_sweeps = 100);

// Eigenvalues of the h x h covariance (1/n convention) of the rows, by
// cyclic Jacobi sweeps, returned in descending order.
inline std::vector<double> eigenspectrum(const Matrix& representations) {
    if (representations.rows < 2) throw ValidationError("eigenspectrum: need n >= 2 rows");
    for (double v : representations.data)
        if (!std::isfinite(v)) throw ValidationError("eigenspectrum: non-finite input");

    const std::size_t n = representations.rows, h = representations.cols;
    std::vector<double> mean(h, 0.0);
    for (std::size_t r = 0; r < n; ++r)
        for (std::size_t c = 0; c < h; ++c) mean[c] += representations(r, c);
    for (auto& m : mean) m /= static_cast<double>(n);

    Matrix cov(h, h);
    for (std::size_t r = 0; r < n; ++r)
        for (std::size_t a = 0; a < h; ++a) {
            const double ua = representations(r, a) - mean[a];
            for (std::size_t b = 0; b < h; ++b)
                cov(a, b) += ua * (representations(r, b) - mean[b]);
        }
    for (auto& v : cov.data) v /= static_cast<double>(n);

    return jacobi_eigenvalues(cov);
}

// Cyclic Jacobi rotations until the off-diagonal Frobenius norm drops
// below 1e-10 (relative to the matrix norm).
inline std::vector<double> jacobi_eigenvalues(Matrix a, double off_tol,
                                              std::size_t max_sweeps) {
    const std::size_t h = a.rows;
    if (a.cols != h) throw ValidationError("jacobi_eigenvalues: matrix must be square");
    const double scale = std::max(frobenius_norm(a), 1.0);

    for (std::size_t sweep = 0; sweep < max_sweeps; ++sweep) {
        double off = 0.0;
        for (std::size_t p = 0; p < h; ++p)
            for (std::size_t q = p + 1; q < h; ++q) off += 2.0 * a(p, q) * a(p, q);
        if (std::sqrt(off) <= off_tol * scale) break;

        for (std::size_t p = 0; p < h; ++p)
            for (std::size_t q = p + 1; q < h; ++q) {
                if (a(p, q) == 0.0) continue;
                const double theta = (a(q, q) - a(p, p)) / (2.0 * a(p, q));
                const double t = (theta >= 0.0 ? 1.0 : -1.0) /
                                 (std::abs(theta) + std::sqrt(theta * theta + 1.0));
                const double c = 1.0 / std::sqrt(t * t + 1.0);
                const double s = t * c;
                for (std::size_t k = 0; k < h; ++k) {
                    const double akp = a(k, p), akq = a(k, q);
                    a(k, p) = c * akp - s * akq;
                    a(k, q) = s * akp + c * akq;
                }
                for (std::size_t k = 0; k < h; ++k) {
                    const double apk = a(p, k), aqk = a(q, k);
                    a(p, k) = c * apk - s * aqk;
                    a(q, k) = s * apk + c * aqk;
                }
            }
    }
    std::vector<double> eig(h);
    for (std::size_t i = 0; i < h; ++i) eig[i] = a(i, i);
    std::sort(eig.begin(), eig.end(), std::greater<>());
    return eig;
}

struct SpectrumFit {
    std::vector<double> eigenvalues;  // descending
    std::size_t rank_min = 0;
    std::size_t rank_max = 0;
    double exponent = 0.0;   // alpha in lambda_n ~ n^(-alpha)
    double fit_residual = 0.0;
};

// OLS on (ln n, ln lambda_n) over ranks [rank_min, rank_max], 1-based.
inline SpectrumFit power_law_fit(std::span<const double> eigenvalues, std::size_t rank_min,
                                 std::size_t rank_max) {
    if (rank_min < 1 || rank_max <= rank_min)
        throw ValidationError("power_law_fit: need rank_max > rank_min >= 1");
    if (rank_max > eigenvalues.size())
        throw ValidationError("power_law_fit: rank_max exceeds spectrum length");

    std::vector<double> xs, ys;
    for (std::size_t r = rank_min; r <= rank_max; ++r) {
        const double lam = eigenvalues[r - 1];
        if (lam <= 0.0)
            throw ValidationError("power_law_fit: nonpositive eigenvalue at rank " +
                                  std::to_string(r));
        xs.push_back(std::log(static_cast<double>(r)));
        ys.push_back(std::log(lam));
    }
    const double n = static_cast<double>(xs.size());
    double sx = 0.0, sy = 0.0, sxx = 0.0, sxy = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        sx += xs[i];
        sy += ys[i];
        sxx += xs[i] * xs[i];
        sxy += xs[i] * ys[i];
    }
    const double slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
    const double intercept = (sy - slope * sx) / n;

    double rss = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        const double e = ys[i] - (intercept + slope * xs[i]);
        rss += e * e;
    }
    SpectrumFit fit;
    fit.eigenvalues.assign(eigenvalues.begin(), eigenvalues.end());
    fit.rank_min = rank_min;
    fit.rank_max = rank_max;
    fit.exponent = -slope;
    fit.fit_residual = std::sqrt(rss / n);
    return fit;
}

// Default fit window: [max(5, h/20), min(0.7h, count of positive eigenvalues)].
inline std::pair<std::size_t, std::size_t> default_fit_window(
    std::span<const double> eigenvalues) {
    const std::size_t h = eigenvalues.size();
    std::size_t positive = 0;
    for (double v : eigenvalues)
        if (v > 0.0) ++positive;
    std::size_t lo = std::max<std::size_t>(5, h / 20);
    std::size_t hi = std::min<std::size_t>(static_cast<std::size_t>(0.7 * static_cast<double>(h)),
                                           positive);
    if (hi <= lo) {
        lo = 1;
        hi = std::max<std::size_t>(2, positive);
    }
    return {lo, hi};
}

// Multinomial logistic regression on frozen representations, full-batch
// gradient descent with cosine-decayed learning rate. Deterministic: the
// classifier starts from zero.
inline double linear_probe(const Matrix& train_x, std::span<const std::uint16_t> train_y,
                           const Matrix& test_x, std::span<const std::uint16_t> test_y,
                           std::size_t epochs = 200, double lr = 0.5) {
    if (train_x.rows == 0 || test_x.rows == 0)
        throw ValidationError("linear_probe: empty inputs");
    if (train_x.cols != test_x.cols)
        throw ValidationError("linear_probe: train/test width mismatch");
    if (train_y.size() != train_x.rows || test_y.size() != test_x.rows)
        throw ValidationError("linear_probe: label count mismatch");

    std::uint16_t num_classes = 0;
    for (auto y : train_y) num_classes = std::max<std::uint16_t>(num_classes, y + 1);
    if (num_classes < 2) throw ValidationError("linear_probe: need >= 2 classes");
    for (auto y : test_y)
        if (y >= num_classes) throw ValidationError("linear_probe: test label outside train label set");

    const std::size_t h = train_x.cols, n = train_x.rows, c = num_classes;
    Matrix w(c, h);
    std::vector<double> bias(c, 0.0);
    std::vector<double> logits(c), prob(c);

    for (std::size_t epoch = 0; epoch < epochs; ++epoch) {
        const double lr_t =
            lr * 0.5 * (1.0 + std::cos(std::numbers::pi * static_cast<double>(epoch) /
                                       static_cast<double>(epochs)));
        Matrix dw(c, h);
        std::vector<double> db(c, 0.0);
        for (std::size_t r = 0; r < n; ++r) {
            double mx = -1e300;
            for (std::size_t k = 0; k < c; ++k) {
                logits[k] = dot(w.row(k), train_x.row(r)) + bias[k];
                mx = std::max(mx, logits[k]);
            }
            double z = 0.0;
            for (std::size_t k = 0; k < c; ++k) {
                prob[k] = std::exp(logits[k] - mx);
                z += prob[k];
            }
            for (std::size_t k = 0; k < c; ++k) {
                const double g = prob[k] / z - (train_y[r] == k ? 1.0 : 0.0);
                db[k] += g;
                for (std::size_t d = 0; d < h; ++d) dw(k, d) += g * train_x(r, d);
            }
        }
        const double inv_n = 1.0 / static_cast<double>(n);
        for (std::size_t k = 0; k < c; ++k) {
            bias[k] -= lr_t * db[k] * inv_n;
            for (std::size_t d = 0; d < h; ++d) w(k, d) -= lr_t * dw(k, d) * inv_n;
        }
    }

    std::size_t correct = 0;
    for (std::size_t r = 0; r < test_x.rows; ++r) {
        std::size_t best = 0;
        double best_v = -1e300;
        for (std::size_t k = 0; k < c; ++k) {
            const double v = dot(w.row(k), test_x.row(r)) + bias[k];
            if (v > best_v) {
                best_v = v;
                best = k;
            }
        }
        if (best == test_y[r]) ++correct;
    }
    return static_cast<double>(correct) / static_cast<double>(test_x.rows);
}

}  // namespace clamp::analysis
