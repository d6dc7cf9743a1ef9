#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <string>
#include <vector>

#include "clamp/analysis.hpp"
#include "clamp/dataset.hpp"
#include "clamp/nn.hpp"
#include "clamp/packing.hpp"

namespace clamp::trainer {

// Vector-data augmentation pipelines. T1 is additive Gaussian noise only;
// T2 adds coordinate dropout and a global random scale on top of it.
struct AugmentConfig {
    double noise_sigma = 0.1;
    double dropout_prob = 0.1;
    double scale_min = 0.9;
    double scale_max = 1.1;

    void validate() const {
        if (noise_sigma < 0.0) throw ValidationError("augment: noise_sigma >= 0");
        if (dropout_prob < 0.0 || dropout_prob >= 1.0)
            throw ValidationError("augment: dropout_prob in [0,1)");
        if (scale_min > scale_max) throw ValidationError("augment: scale_min <= scale_max");
    }
};

struct TrainConfig {
    std::size_t batch = 64;
    std::size_t views = 4;
    double r_s = 3.0;
    std::size_t epochs = 30;
    std::size_t warmup_steps = 10;
    double base_lr = 0.5;
    double momentum = 0.9;
    double weight_decay = 1e-6;
    double trust_coefficient = 0.001;
    nn::OptimizerKind optimizer = nn::OptimizerKind::kLars;
    AugmentConfig aug;
    std::uint64_t seed = 0;
    double val_fraction = 0.01;
    std::vector<std::size_t> backbone = {64, 64};
    std::vector<std::size_t> head = {16};

    void validate() const {
        if (batch < 2) throw ValidationError("train: batch >= 2 required");
        if (views < 2) throw ValidationError("train: views >= 2 required");
        if (views % 2 != 0) throw ValidationError("train: views must be even");
        if (r_s <= 0.0) throw ValidationError("train: r_s must be positive");
        if (val_fraction <= 0.0 || val_fraction >= 1.0)
            throw ValidationError("train: val_fraction in (0,1)");
        aug.validate();
    }
};

struct MetricsRecord {
    std::size_t epoch = 0;
    double mean_log_loss = 0.0;
    double mean_neighbors = 0.0;
    double mean_manifold_size = 0.0;  // E_i[sqrt(Tr(cov_i)/m)] = r_i / r_s
    double absorbing_batch_fraction = 0.0;
    double wall_seconds = 0.0;
};

struct TrainResult {
    nn::DenseNet net;
    std::vector<MetricsRecord> metrics;
    std::vector<std::size_t> train_indices;
    std::vector<std::size_t> val_indices;
};

// m augmented views of one sample: the first m/2 from T1 (noise only), the
// last m/2 from T2 (noise + dropout + scale). Each view consumes fresh
// rng draws.
inline Matrix augment_views(std::span<const float> sample, std::size_t m,
                            const AugmentConfig& cfg, Rng& rng) {
    if (m % 2 != 0 || m == 0) throw ValidationError("augment_views: m must be even and positive");
    cfg.validate();
    const std::size_t d = sample.size();
    Matrix out(m, d);
    std::normal_distribution<double> noise(0.0, cfg.noise_sigma);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::uniform_real_distribution<double> scale(cfg.scale_min, cfg.scale_max);

    for (std::size_t k = 0; k < m; ++k) {
        for (std::size_t i = 0; i < d; ++i)
            out(k, i) = static_cast<double>(sample[i]) +
                        (cfg.noise_sigma > 0.0 ? noise(rng) : 0.0);
        if (k >= m / 2) {
            if (cfg.dropout_prob > 0.0)
                for (std::size_t i = 0; i < d; ++i)
                    if (unit(rng) < cfg.dropout_prob) out(k, i) = 0.0;
            const double s = scale(rng);
            for (std::size_t i = 0; i < d; ++i) out(k, i) *= s;
        }
    }
    return out;
}

namespace detail {

// Seeded validation split: at least two held-out samples.
inline void split_indices(std::size_t n, double val_fraction, std::uint64_t seed,
                          std::vector<std::size_t>& train, std::vector<std::size_t>& val) {
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    Rng rng(mix_seed(seed, 0x73706c69ULL));
    std::shuffle(order.begin(), order.end(), rng);
    std::size_t n_val = static_cast<std::size_t>(std::ceil(val_fraction * static_cast<double>(n)));
    n_val = std::max<std::size_t>(2, std::min(n_val, n - 2));
    val.assign(order.begin(), order.begin() + n_val);
    train.assign(order.begin() + n_val, order.end());
}

inline Rng sample_rng(std::uint64_t seed, std::size_t epoch, std::size_t sample_index) {
    return Rng(mix_seed(mix_seed(seed, epoch + 1), sample_index));
}

}  // namespace detail

// Validation diagnostics: one sub-manifold per held-out sample.
inline MetricsRecord validation_metrics(const nn::DenseNet& net, const data::Dataset& ds,
                                        std::span<const std::size_t> val_indices,
                                        const TrainConfig& cfg, std::size_t epoch) {
    MetricsRecord rec;
    rec.epoch = epoch;
    const std::size_t bv = val_indices.size();
    Matrix inputs(bv * cfg.views, ds.d);
    for (std::size_t i = 0; i < bv; ++i) {
        Rng rng = detail::sample_rng(mix_seed(cfg.seed, 0x76616cULL), epoch, val_indices[i]);
        Matrix views = augment_views(ds.row(val_indices[i]), cfg.views, cfg.aug, rng);
        for (std::size_t k = 0; k < cfg.views; ++k)
            std::copy(views.row(k).begin(), views.row(k).end(),
                      inputs.row(i * cfg.views + k).begin());
    }
    auto fwd = nn::forward(net, inputs);
    auto batch = geometry::center_and_normalize(
        {fwd.embeddings.data.data(), fwd.embeddings.data.size()}, bv, cfg.views,
        fwd.embeddings.cols);
    auto report = packing::batch_loss(batch, cfg.r_s);
    double nb = 0.0, size = 0.0;
    for (std::size_t i = 0; i < bv; ++i) {
        nb += static_cast<double>(report.per_manifold_neighbors[i]);
        size += report.summaries[i].radius / cfg.r_s;
    }
    rec.mean_neighbors = nb / static_cast<double>(bv);
    rec.mean_manifold_size = size / static_cast<double>(bv);
    rec.mean_log_loss = report.log_loss;
    return rec;
}

// The pretraining loop: sample batch, augment, forward, normalize, packing
// loss gradient, backward, optimizer step under the warmup-cosine schedule.
// Absorbing batches skip the parameter update but still advance the
// schedule so step counts stay comparable across runs.
inline TrainResult train(const TrainConfig& cfg, const data::Dataset& ds) {
    cfg.validate();
    ds.validate();
    if (ds.size() < 4) throw ValidationError("train: dataset too small");

    TrainResult result;
    detail::split_indices(ds.size(), cfg.val_fraction, cfg.seed, result.train_indices,
                          result.val_indices);
    if (result.train_indices.size() < cfg.batch)
        throw ValidationError("train: fewer training samples than batch size");

    Rng init_rng(mix_seed(cfg.seed, 0x696e6974ULL));
    result.net = nn::make_net(ds.d, cfg.backbone, cfg.head, init_rng);
    if (cfg.epochs == 0) return result;

    auto opt = nn::make_optimizer(result.net, cfg.optimizer, cfg.base_lr, cfg.momentum,
                                  cfg.weight_decay, cfg.trust_coefficient);
    const double effective_lr = cfg.base_lr * static_cast<double>(cfg.batch) / 256.0;

    const std::size_t steps_per_epoch = result.train_indices.size() / cfg.batch;
    if (steps_per_epoch == 0) throw ValidationError("train: batch larger than training split");
    const std::size_t total_steps = cfg.epochs * steps_per_epoch;
    const std::size_t warmup = std::min(cfg.warmup_steps, total_steps - 1);

    std::size_t step = 0;
    for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
        const auto t0 = std::chrono::steady_clock::now();
        std::vector<std::size_t> order = result.train_indices;
        Rng shuffle_rng(mix_seed(cfg.seed, epoch));
        std::shuffle(order.begin(), order.end(), shuffle_rng);

        double loss_sum = 0.0;
        std::size_t absorbing_batches = 0;
        for (std::size_t bstep = 0; bstep < steps_per_epoch; ++bstep) {
            Matrix inputs(cfg.batch * cfg.views, ds.d);
            for (std::size_t i = 0; i < cfg.batch; ++i) {
                const std::size_t sample_idx = order[bstep * cfg.batch + i];
                Rng rng = detail::sample_rng(cfg.seed, epoch, sample_idx);
                Matrix views = augment_views(ds.row(sample_idx), cfg.views, cfg.aug, rng);
                for (std::size_t k = 0; k < cfg.views; ++k)
                    std::copy(views.row(k).begin(), views.row(k).end(),
                              inputs.row(i * cfg.views + k).begin());
            }

            auto fwd = nn::forward(result.net, inputs);
            auto batch = geometry::center_and_normalize(
                {fwd.embeddings.data.data(), fwd.embeddings.data.size()}, cfg.batch, cfg.views,
                fwd.embeddings.cols);
            auto report = packing::batch_loss_gradient(batch, cfg.r_s);
            if (!std::isfinite(report.log_loss))
                throw std::runtime_error("train: non-finite loss at epoch " +
                                         std::to_string(epoch) + " batch " +
                                         std::to_string(bstep));
            loss_sum += report.log_loss;

            const double lr_t = nn::lr_schedule(step, warmup, total_steps, effective_lr);
            ++step;
            if (report.absorbing) {
                ++absorbing_batches;
            } else {
                Matrix upstream(cfg.batch * cfg.views, fwd.embeddings.cols);
                upstream.data = report.grad_raw;
                auto grads = nn::backward(result.net, fwd.tape, upstream);
                nn::apply_update(opt, result.net, grads, lr_t);
            }
        }

        MetricsRecord rec = validation_metrics(result.net, ds, result.val_indices, cfg, epoch);
        rec.mean_log_loss = loss_sum / static_cast<double>(steps_per_epoch);
        rec.absorbing_batch_fraction =
            static_cast<double>(absorbing_batches) / static_cast<double>(steps_per_epoch);
        rec.wall_seconds =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        result.metrics.push_back(rec);
    }
    return result;
}

// Backbone representations of selected dataset rows (no augmentation).
inline Matrix compute_representations(const nn::DenseNet& net, const data::Dataset& ds,
                                      std::span<const std::size_t> indices) {
    Matrix inputs(indices.size(), ds.d);
    for (std::size_t i = 0; i < indices.size(); ++i) {
        auto row = ds.row(indices[i]);
        for (std::size_t c = 0; c < ds.d; ++c) inputs(i, c) = row[c];
    }
    return nn::forward(net, inputs).representations;
}

enum class SweepAxis { kRs, kViews, kLr };

struct SweepRow {
    double value = 0.0;
    MetricsRecord final_metrics;
    double probe_accuracy = 0.0;
};

// Independent seeded training runs along one hyperparameter axis; probe
// accuracy is measured on the held-out split with a linear classifier on
// frozen backbone representations.
inline std::vector<SweepRow> sweep(const TrainConfig& cfg_template, SweepAxis axis,
                                   std::span<const double> values, const data::Dataset& ds) {
    if (values.empty()) throw ValidationError("sweep: values must be nonempty");
    std::vector<SweepRow> rows;
    for (std::size_t vi = 0; vi < values.size(); ++vi) {
        TrainConfig cfg = cfg_template;
        switch (axis) {
            case SweepAxis::kRs: cfg.r_s = values[vi]; break;
            case SweepAxis::kViews: cfg.views = static_cast<std::size_t>(values[vi]); break;
            case SweepAxis::kLr: cfg.base_lr = values[vi]; break;
        }
        cfg.seed = mix_seed(cfg_template.seed, vi);
        auto res = train(cfg, ds);

        SweepRow row;
        row.value = values[vi];
        if (!res.metrics.empty()) row.final_metrics = res.metrics.back();

        Matrix train_x = compute_representations(res.net, ds, res.train_indices);
        Matrix val_x = compute_representations(res.net, ds, res.val_indices);
        std::vector<std::uint16_t> train_y, val_y;
        for (auto i : res.train_indices) train_y.push_back(ds.labels[i]);
        for (auto i : res.val_indices) val_y.push_back(ds.labels[i]);
        row.probe_accuracy = analysis::linear_probe(train_x, train_y, val_x, val_y);
        rows.push_back(row);
    }
    return rows;
}

}  // namespace clamp::trainer
