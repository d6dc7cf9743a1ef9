// Acceptance suite: one criterion per test case, each printing a single
// PASS/FAIL line so the run reads as a checklist.
#include <catch2/catch_amalgamated.hpp>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <iostream>

#include "clamp/analysis.hpp"
#include "clamp/packing.hpp"
#include "clamp/randorg.hpp"
#include "clamp/trainer.hpp"

using namespace clamp;

namespace {

void report(int number, const char* name, bool pass) {
    std::printf("[criterion %2d] %-28s %s\n", number, name, pass ? "PASS" : "FAIL");
    std::fflush(stdout);
    CHECK(pass);
}

// ---- pinned constants (pilot-calibrated) -----------------------------------
// criterion 3: direct descent on the embeddings
constexpr std::size_t kDescentMaxSteps = 20000;
constexpr double kDescentStep = 0.5;
// criterion 4/5/9: blob benchmark and training budget
constexpr std::size_t kBlobClasses = 8;
constexpr std::size_t kBlobPerClass = 150;
constexpr std::size_t kBlobDim = 32;
constexpr double kBlobSeparation = 5.0;
constexpr std::size_t kTrainEpochs = 40;
constexpr double kAugNoiseSigma = 0.5;
// criterion 6: random-organization transition radii
constexpr double kRadiusLow = 0.02;
constexpr double kRadiusHigh = 0.25;

geometry::EmbeddingBatch direct_batch(std::size_t b, std::size_t m, std::size_t dim,
                                      std::vector<double> normalized) {
    geometry::EmbeddingBatch batch;
    batch.b = b;
    batch.m = m;
    batch.dim = dim;
    batch.normalized = std::move(normalized);
    batch.raw = batch.normalized;
    batch.global_center.assign(dim, 0.0);
    batch.deviation_norm.assign(b * m, 1.0);
    batch.degenerate.assign(b * m, 0);
    return batch;
}

// shared training run for criteria 4, 5 and 9
struct TrainedModel {
    data::Dataset ds;
    trainer::TrainConfig cfg;
    trainer::TrainResult result;
};

const TrainedModel& trained_model() {
    static const TrainedModel model = [] {
        TrainedModel m;
        m.ds = data::gen_blobs(kBlobClasses, kBlobPerClass, kBlobDim, kBlobSeparation, 1);
        m.cfg.batch = 64;
        m.cfg.views = 4;
        m.cfg.r_s = 2.0;
        m.cfg.epochs = kTrainEpochs;
        m.cfg.warmup_steps = 10;
        m.cfg.base_lr = 0.5;
        m.cfg.val_fraction = 0.05;
        m.cfg.backbone = {64, 64};
        m.cfg.head = {32};
        m.cfg.aug.noise_sigma = kAugNoiseSigma;
        m.cfg.seed = 3;
        m.result = trainer::train(m.cfg, m.ds);
        return m;
    }();
    return model;
}

double probe_on_split(const nn::DenseNet& net, const data::Dataset& ds,
                      std::span<const std::size_t> train_idx,
                      std::span<const std::size_t> val_idx) {
    Matrix train_x = trainer::compute_representations(net, ds, train_idx);
    Matrix val_x = trainer::compute_representations(net, ds, val_idx);
    std::vector<std::uint16_t> train_y, val_y;
    for (auto i : train_idx) train_y.push_back(ds.labels[i]);
    for (auto i : val_idx) val_y.push_back(ds.labels[i]);
    return analysis::linear_probe(train_x, train_y, val_x, val_y);
}

}  // namespace

TEST_CASE("criterion 1: gradient exactness") {
    Rng rng(101);
    std::uniform_int_distribution<std::size_t> bs(2, 8), ms(2, 4), ds(2, 10);
    std::normal_distribution<double> g;
    const double h = 1e-5;
    double worst = 0.0;
    std::size_t checked = 0;

    for (int inst = 0; inst < 100; ++inst) {
        const std::size_t b = bs(rng), m = ms(rng), D = ds(rng);
        std::vector<double> raw(b * m * D);
        // clustered draws so overlaps are common
        for (std::size_t i = 0; i < b; ++i) {
            std::vector<double> c(D);
            for (auto& v : c) v = 0.3 * g(rng);
            for (std::size_t k = 0; k < m; ++k)
                for (std::size_t d = 0; d < D; ++d)
                    raw[(i * m + k) * D + d] = c[d] + 0.2 * g(rng);
        }
        auto batch = geometry::center_and_normalize(raw, b, m, D);
        auto rep = packing::batch_loss_gradient(batch, 3.0);
        if (rep.absorbing) {
            // plateau: the exact gradient must be identically zero
            for (double v : rep.grad_raw)
                if (v != 0.0) worst = 1.0;
            continue;
        }
        ++checked;
        double scale = 0.0;
        for (double v : rep.grad_raw) scale = std::max(scale, std::abs(v));
        for (std::size_t p = 0; p < raw.size(); ++p) {
            auto perturbed = raw;
            perturbed[p] += h;
            const double up =
                packing::batch_loss(geometry::center_and_normalize(perturbed, b, m, D), 3.0)
                    .log_loss;
            perturbed[p] -= 2.0 * h;
            const double dn =
                packing::batch_loss(geometry::center_and_normalize(perturbed, b, m, D), 3.0)
                    .log_loss;
            const double fd = (up - dn) / (2.0 * h);
            worst = std::max(worst, std::abs(rep.grad_raw[p] - fd) / std::max(scale, 1e-8));
        }
    }
    report(1, "gradient exactness", checked >= 50 && worst <= 1e-5);
}

TEST_CASE("criterion 2: hand-computed losses") {
    bool pass = true;
    const double r_s = 3.0;
    const double delta = 0.5 * std::sqrt(2.0) / r_s;  // radius r_s*delta/sqrt(2) = 0.5

    // coincident pair of manifolds with positive radii: E = 1 per ordered pair
    {
        std::vector<double> z = {-delta, 0.0, delta, 0.0,   // manifold 0, centroid (0,0)
                                 -delta, 0.0, delta, 0.0};  // manifold 1, same centroid
        auto rep = packing::batch_loss(direct_batch(2, 2, 2, z), r_s);
        pass = pass && std::abs(rep.overlap_energy - 2.0) <= 1e-12;
        pass = pass && std::abs(rep.log_loss - std::log(2.0 + 1e-12)) <= 1e-12;
    }
    // collinear triple at x = 0, 0.5, 1.0 with radii 0.5:
    // adjacent pairs overlap at half depth, the outer pair just touches
    {
        std::vector<double> z;
        for (double c : {0.0, 0.5, 1.0}) {
            z.insert(z.end(), {c - delta, 0.0});
            z.insert(z.end(), {c + delta, 0.0});
        }
        auto rep = packing::batch_loss(direct_batch(3, 2, 2, z), r_s);
        pass = pass && std::abs(rep.overlap_energy - 1.0) <= 1e-12;
        pass = pass && rep.per_manifold_neighbors == std::vector<std::size_t>{1, 2, 1};
    }
    // well separated: absorbing state, log of the epsilon floor, zero grad
    {
        std::vector<double> z;
        for (double c : {0.0, 10.0}) {
            z.insert(z.end(), {c - delta, 0.0});
            z.insert(z.end(), {c + delta, 0.0});
        }
        auto rep = packing::batch_loss_gradient(direct_batch(2, 2, 2, z), r_s);
        pass = pass && rep.absorbing && rep.overlap_energy == 0.0;
        pass = pass && std::abs(rep.log_loss - std::log(1e-12)) <= 1e-12;
        for (double v : rep.grad_raw) pass = pass && v == 0.0;
    }
    report(2, "hand-computed losses", pass);
}

TEST_CASE("criterion 3: direct packing descent") {
    const std::size_t b = 10, m = 60, D = 3;
    const double r_s = 3.0;
    Rng rng(303);
    std::normal_distribution<double> g;
    std::vector<double> raw(b * m * D);
    for (auto& v : raw) v = g(rng);

    bool absorbed = false;
    std::size_t step = 0;
    for (; step < kDescentMaxSteps; ++step) {
        auto batch = geometry::center_and_normalize(raw, b, m, D);
        auto rep = packing::batch_loss_gradient(batch, r_s);
        if (rep.absorbing) {
            absorbed = true;
            break;
        }
        // descend on L_overlap itself: d(L)/dz = L' * d(ln L')/dz with
        // L' = L + eps, so the step stays bounded as the energy vanishes
        const double scale = rep.overlap_energy + packing::kLogEpsilon;
        for (std::size_t p = 0; p < raw.size(); ++p)
            raw[p] -= kDescentStep * scale * rep.grad_raw[p];
    }

    // final configuration: every centroid pair separated beyond contact
    auto batch = geometry::center_and_normalize(raw, b, m, D);
    auto rep = packing::batch_loss(batch, r_s);
    bool separated = true;
    for (std::size_t i = 0; i < b; ++i)
        for (std::size_t j = i + 1; j < b; ++j) {
            double d2 = 0.0;
            for (std::size_t d = 0; d < D; ++d) {
                const double u = rep.summaries[i].centroid[d] - rep.summaries[j].centroid[d];
                d2 += u * u;
            }
            if (std::sqrt(d2) < rep.summaries[i].radius + rep.summaries[j].radius)
                separated = false;
        }
    INFO("steps used: " << step);
    report(3, "direct packing descent", absorbed && separated);
}

TEST_CASE("criterion 4: training dynamics") {
    const auto& model = trained_model();
    const auto& metrics = model.result.metrics;
    REQUIRE(metrics.size() == kTrainEpochs);
    const double n0 = metrics.front().mean_neighbors;
    const double n1 = metrics.back().mean_neighbors;
    const double s0 = metrics.front().mean_manifold_size;
    const double s1 = metrics.back().mean_manifold_size;
    INFO("neighbors " << n0 << " -> " << n1 << ", size " << s0 << " -> " << s1);
    report(4, "training dynamics", n1 < 0.2 * n0 && s1 < s0);
}

TEST_CASE("criterion 5: no collapse, probe beats untrained") {
    const auto& model = trained_model();

    // mean pairwise centroid distance over validation sub-manifolds
    trainer::MetricsRecord rec;
    const auto& val = model.result.val_indices;
    Matrix inputs(val.size() * model.cfg.views, model.ds.d);
    for (std::size_t i = 0; i < val.size(); ++i) {
        Rng rng = trainer::detail::sample_rng(model.cfg.seed, 9999, val[i]);
        Matrix views = trainer::augment_views(model.ds.row(val[i]), model.cfg.views,
                                              model.cfg.aug, rng);
        for (std::size_t k = 0; k < model.cfg.views; ++k)
            std::copy(views.row(k).begin(), views.row(k).end(),
                      inputs.row(i * model.cfg.views + k).begin());
    }
    auto fwd = nn::forward(model.result.net, inputs);
    auto batch = geometry::center_and_normalize(
        {fwd.embeddings.data.data(), fwd.embeddings.data.size()}, val.size(), model.cfg.views,
        fwd.embeddings.cols);
    auto rep = packing::batch_loss(batch, model.cfg.r_s);
    double dist_sum = 0.0;
    std::size_t pairs = 0;
    for (std::size_t i = 0; i < val.size(); ++i)
        for (std::size_t j = i + 1; j < val.size(); ++j) {
            double d2 = 0.0;
            for (std::size_t d = 0; d < batch.dim; ++d) {
                const double u = rep.summaries[i].centroid[d] - rep.summaries[j].centroid[d];
                d2 += u * u;
            }
            dist_sum += std::sqrt(d2);
            ++pairs;
        }
    const double mean_dist = dist_sum / static_cast<double>(pairs);

    const double trained_acc = probe_on_split(model.result.net, model.ds,
                                              model.result.train_indices,
                                              model.result.val_indices);
    // frozen untrained control: identical architecture and init stream
    Rng init_rng(mix_seed(model.cfg.seed, 0x696e6974ULL));
    auto untrained = nn::make_net(model.ds.d, model.cfg.backbone, model.cfg.head, init_rng);
    const double control_acc = probe_on_split(untrained, model.ds,
                                              model.result.train_indices,
                                              model.result.val_indices);

    INFO("mean centroid distance " << mean_dist << ", trained probe " << trained_acc
                                   << ", untrained probe " << control_acc);
    report(5, "no collapse + probe",
           mean_dist >= 0.5 && trained_acc >= 0.95 && control_acc < trained_acc);
}

TEST_CASE("criterion 6: random-organization transition") {
    randorg::RandOrgConfig cfg;
    cfg.n_particles = 64;
    cfg.dim = 3;
    cfg.kick_amplitude = 0.1;
    cfg.max_steps = 50000;
    std::vector<std::uint64_t> seeds;
    for (std::uint64_t s = 0; s < 20; ++s) seeds.push_back(s);
    const std::vector<double> radii = {kRadiusLow, kRadiusHigh};
    auto cells = randorg::run_density_sweep(cfg, radii, seeds);

    std::size_t low_absorbed = 0, high_absorbed = 0;
    for (const auto& c : cells)
        (c.radius == kRadiusLow ? low_absorbed : high_absorbed) += c.absorbed;

    // absorbing permanence, bit-exactly, on one absorbed low-radius run
    bool permanent = true;
    {
        randorg::RandOrgConfig one = cfg;
        one.radius = kRadiusLow;
        one.seed = mix_seed(seeds[0], 0);
        auto st = randorg::init_state(one);
        std::size_t step = 0;
        while (!randorg::is_absorbing(st) && step < one.max_steps) {
            st = randorg::randorg_step(st, one);
            ++step;
        }
        permanent = randorg::is_absorbing(st);
        auto frozen = st.positions.data;
        for (int k = 0; k < 1000 && permanent; ++k) {
            st = randorg::randorg_step(st, one);
            permanent = st.positions.data == frozen;
        }
    }
    INFO("absorbed low " << low_absorbed << "/20, high " << high_absorbed << "/20");
    report(6, "random-organization transition",
           low_absorbed >= 19 && high_absorbed == 0 && permanent);
}

TEST_CASE("criterion 7: power-law fit") {
    std::vector<double> paper, pure;
    for (std::size_t n = 1; n <= 2000; ++n) {
        paper.push_back(2.0 * std::pow(static_cast<double>(n), -1.013));
        pure.push_back(1.0 / static_cast<double>(n));
    }
    auto fit_paper = analysis::power_law_fit(paper, 15, 1400);
    auto fit_pure = analysis::power_law_fit(pure, 15, 1400);
    report(7, "power-law fit",
           std::abs(fit_paper.exponent - 1.013) <= 1e-6 &&
               std::abs(fit_pure.exponent - 1.0) <= 1e-9);
}

TEST_CASE("criterion 8: complexity scaling") {
    auto make_batch = [](std::size_t b, std::size_t D) {
        Rng rng(808);
        std::normal_distribution<double> g;
        std::vector<double> raw(b * 2 * D);
        for (auto& v : raw) v = g(rng);
        return geometry::center_and_normalize(raw, b, 2, D);
    };
    auto time_loss = [](const geometry::EmbeddingBatch& batch) {
        std::vector<double> samples;
        volatile double warm = packing::batch_loss(batch, 3.0).overlap_energy;
        (void)warm;
        for (int rep = 0; rep < 10; ++rep) {
            const auto t0 = std::chrono::steady_clock::now();
            volatile double sink = packing::batch_loss(batch, 3.0).overlap_energy;
            (void)sink;
            samples.push_back(
                std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
        }
        std::sort(samples.begin(), samples.end());
        return samples[samples.size() / 2];
    };

    // D large enough that the O(b^2 D) centroid-distance term dominates the
    // O(b^2) bookkeeping of the overlapping-pair records
    const double tb1 = time_loss(make_batch(256, 512));
    const double tb2 = time_loss(make_batch(512, 512));
    const double td2 = time_loss(make_batch(256, 1024));
    const double b_factor = tb2 / tb1;
    const double d_factor = td2 / tb1;
    INFO("b-doubling factor " << b_factor << ", D-doubling factor " << d_factor);
    report(8, "complexity scaling",
           b_factor >= 3.0 && b_factor <= 6.0 && d_factor >= 1.5 && d_factor <= 3.0);
}

TEST_CASE("criterion 9: geometry separation") {
    const auto& model = trained_model();
    // augmentation sub-manifolds of 200 random samples in representation space
    std::vector<std::size_t> order(model.ds.size());
    std::iota(order.begin(), order.end(), 0);
    Rng rng(909);
    std::shuffle(order.begin(), order.end(), rng);
    std::vector<analysis::SubManifoldSample> manifolds;
    for (std::size_t s = 0; s < 200; ++s) {
        Rng arng(mix_seed(909, order[s]));
        Matrix views =
            trainer::augment_views(model.ds.row(order[s]), 8, model.cfg.aug, arng);
        analysis::SubManifoldSample rec;
        rec.views = nn::forward(model.result.net, views).representations;
        rec.class_id = model.ds.labels[order[s]];
        manifolds.push_back(std::move(rec));
    }
    Rng grng(910);
    auto report_geo = analysis::geometry_report(manifolds, 5, manifolds.size(), grng);
    const double inter_mass_below_intra_mean = analysis::histogram_mass_below(
        report_geo.alignment_sq_cosine.inter,
        analysis::histogram_mean(report_geo.alignment_sq_cosine.intra));
    INFO("centroid dist intra " << report_geo.mean_intra_centroid_distance << " inter "
                                << report_geo.mean_inter_centroid_distance
                                << ", inter alignment mass below intra mean "
                                << inter_mass_below_intra_mean);
    report(9, "geometry separation",
           report_geo.mean_inter_centroid_distance > report_geo.mean_intra_centroid_distance &&
               inter_mass_below_intra_mean > 0.5);
}

TEST_CASE("criterion 10: volume bound") {
    Rng rng(1010);
    std::uniform_real_distribution<double> logu(std::log(0.1), std::log(10.0));
    std::uniform_int_distribution<std::size_t> ks(1, 16);
    bool pass = true;
    for (int rep = 0; rep < 1000; ++rep) {
        const std::size_t k = ks(rng);
        std::vector<double> eig(k);
        const bool equal_case = rep % 5 == 0;
        const double base = std::exp(logu(rng));
        for (auto& v : eig) v = equal_case ? base : std::exp(logu(rng));
        auto [volume, bound] = geometry::volume_and_bound(eig, 3.0);
        if (volume > bound * (1.0 + 1e-9)) pass = false;
        double spread = 0.0;
        for (double v : eig) spread = std::max(spread, std::abs(v - eig[0]));
        if (k == 1 || equal_case || spread == 0.0) {
            if (std::abs(volume - bound) > 1e-9 * bound) pass = false;
        } else {
            if (bound - volume <= 1e-9 * bound) pass = false;  // strict inequality
        }
    }
    report(10, "volume bound", pass);
}
