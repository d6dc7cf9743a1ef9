#pragma once

#include <chrono>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <openssl/evp.h>

#include <json.hpp>

#include "clamp/analysis.hpp"
#include "clamp/config.hpp"
#include "clamp/dataset.hpp"
#include "clamp/randorg.hpp"
#include "clamp/trainer.hpp"

namespace clamp::cli {

using nlohmann::json;

inline constexpr int kExitOk = 0;
inline constexpr int kExitValidation = 1;
inline constexpr int kExitIo = 2;

// Git-style content hash of a file: SHA-1 over "blob <size>\0" + bytes.
inline std::string content_hash(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot hash, missing file: " + path);
    std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    const std::string header = "blob " + std::to_string(bytes.size()) + '\0';

    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    EVP_MD_CTX* ctx = EVP_MD_CTX_new();
    EVP_DigestInit_ex(ctx, EVP_sha1(), nullptr);
    EVP_DigestUpdate(ctx, header.data(), header.size());
    EVP_DigestUpdate(ctx, bytes.data(), bytes.size());
    EVP_DigestFinal_ex(ctx, digest, &len);
    EVP_MD_CTX_free(ctx);

    static const char* hex = "0123456789abcdef";
    std::string out;
    for (unsigned int i = 0; i < len; ++i) {
        out.push_back(hex[digest[i] >> 4]);
        out.push_back(hex[digest[i] & 0xf]);
    }
    return out;
}

inline std::string timestamp_utc() {
    const auto now = std::chrono::system_clock::now();
    const std::time_t t = std::chrono::system_clock::to_time_t(now);
    char buf[32];
    std::tm tm{};
    gmtime_r(&t, &tm);
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

struct CommonArgs {
    std::string config_path;
    std::vector<std::string> overrides;  // key=value
    std::string out_dir = "out";
    bool seed_given = false;
    std::uint64_t seed = 0;
};

inline config::Config resolve_config(const CommonArgs& args) {
    config::Config cfg;
    if (!args.config_path.empty()) cfg = config::load_config(args.config_path);
    for (const auto& ov : args.overrides) config::apply_override(cfg, ov);
    if (args.seed_given) cfg.set("seed", std::to_string(args.seed));
    return cfg;
}

inline trainer::TrainConfig read_train_config(config::Config& cfg) {
    trainer::TrainConfig tc;
    tc.batch = static_cast<std::size_t>(cfg.get_int("train.batch", 64));
    tc.views = static_cast<std::size_t>(cfg.get_int("train.views", 4));
    tc.r_s = cfg.get_double("train.r_s", 3.0);
    tc.epochs = static_cast<std::size_t>(cfg.get_int("train.epochs", 30));
    tc.warmup_steps = static_cast<std::size_t>(cfg.get_int("train.warmup_steps", 10));
    tc.base_lr = cfg.get_double("train.base_lr", 0.5);
    tc.momentum = cfg.get_double("train.momentum", 0.9);
    tc.weight_decay = cfg.get_double("train.weight_decay", 1e-6);
    tc.trust_coefficient = cfg.get_double("train.trust_coefficient", 0.001);
    const std::string opt = cfg.get_string("train.optimizer", "lars");
    if (opt == "lars")
        tc.optimizer = nn::OptimizerKind::kLars;
    else if (opt == "sgd_momentum")
        tc.optimizer = nn::OptimizerKind::kSgdMomentum;
    else
        throw ValidationError("config: train.optimizer must be lars or sgd_momentum");
    tc.aug.noise_sigma = cfg.get_double("augment.noise_sigma", 0.1);
    tc.aug.dropout_prob = cfg.get_double("augment.dropout_prob", 0.1);
    tc.aug.scale_min = cfg.get_double("augment.scale_min", 0.9);
    tc.aug.scale_max = cfg.get_double("augment.scale_max", 1.1);
    tc.seed = static_cast<std::uint64_t>(cfg.get_int("seed", 0));
    tc.val_fraction = cfg.get_double("train.val_fraction", 0.01);
    tc.backbone = cfg.get_size_list("net.backbone", "64,64");
    tc.head = cfg.get_size_list("net.head", "16");
    return tc;
}

inline json metrics_to_json(const trainer::MetricsRecord& rec) {
    return json{{"epoch", rec.epoch},
                {"mean_log_loss", rec.mean_log_loss},
                {"mean_neighbors", rec.mean_neighbors},
                {"mean_manifold_size", rec.mean_manifold_size},
                {"absorbing_batch_fraction", rec.absorbing_batch_fraction},
                {"wall_seconds", rec.wall_seconds}};
}

inline json histogram_to_json(const analysis::Histogram& h) {
    return json{{"edges", h.edges}, {"mass", h.mass}};
}

inline json geometry_report_to_json(const analysis::GeometryReport& rep) {
    return json{
        {"centroid_distance",
         {{"intra", histogram_to_json(rep.centroid_distance.intra)},
          {"inter", histogram_to_json(rep.centroid_distance.inter)}}},
        {"centroid_cosine",
         {{"intra", histogram_to_json(rep.centroid_cosine.intra)},
          {"inter", histogram_to_json(rep.centroid_cosine.inter)}}},
        {"alignment_sq_cosine",
         {{"intra", histogram_to_json(rep.alignment_sq_cosine.intra)},
          {"inter", histogram_to_json(rep.alignment_sq_cosine.inter)}}},
        {"mean_intra_centroid_distance", rep.mean_intra_centroid_distance},
        {"mean_inter_centroid_distance", rep.mean_inter_centroid_distance},
        {"mean_intra_alignment_sq_cosine", rep.mean_intra_alignment_sq_cosine},
        {"mean_inter_alignment_sq_cosine", rep.mean_inter_alignment_sq_cosine},
        {"samples_used", rep.samples_used},
        {"augmentations_per_sample", rep.augmentations_per_sample}};
}

inline void write_manifest(const std::string& path, const config::Config& cfg,
                           std::uint64_t seed, const std::string& start,
                           const json& artifacts, const std::string& dataset_hash,
                           const json& extra = json::object()) {
    json m;
    m["config"] = cfg.resolved();
    m["seed"] = seed;
    m["start_time"] = start;
    m["end_time"] = timestamp_utc();
    m["artifacts"] = artifacts;
    m["dataset_hash"] = dataset_hash;
    for (auto it = extra.begin(); it != extra.end(); ++it) m[it.key()] = it.value();
    std::ofstream out(path);
    if (!out) throw IoError("cannot write manifest: " + path);
    out << m.dump(2) << "\n";
}

// ---- subcommands ----------------------------------------------------------

inline int cmd_pretrain(const CommonArgs& args, std::ostream& err = std::cerr) {
    try {
        const std::string start = timestamp_utc();
        auto cfg = resolve_config(args);
        const std::string dataset_path = cfg.get_string("dataset", "");
        if (dataset_path.empty()) throw ValidationError("missing required key 'dataset'");
        auto tc = read_train_config(cfg);

        auto ds = data::read_dataset(dataset_path);
        auto result = trainer::train(tc, ds);

        std::filesystem::create_directories(args.out_dir);
        const std::string ckpt = args.out_dir + "/checkpoint.clmp";
        const std::string metrics_path = args.out_dir + "/metrics.jsonl";
        nn::save_checkpoint(ckpt, result.net);
        std::ofstream metrics(metrics_path);
        if (!metrics) throw IoError("cannot write metrics: " + metrics_path);
        for (const auto& rec : result.metrics) metrics << metrics_to_json(rec).dump() << "\n";
        metrics.close();

        write_manifest(args.out_dir + "/manifest.json", cfg, tc.seed, start,
                       json{{"checkpoint", ckpt}, {"metrics", metrics_path}},
                       content_hash(dataset_path));
        return kExitOk;
    } catch (const ValidationError& e) {
        err << "error: " << e.what() << "\n";
        return kExitValidation;
    } catch (const IoError& e) {
        err << "io error: " << e.what() << "\n";
        return kExitIo;
    }
}

inline int cmd_simulate(const CommonArgs& args, std::ostream& err = std::cerr) {
    try {
        const std::string start = timestamp_utc();
        auto cfg = resolve_config(args);
        randorg::RandOrgConfig rc;
        rc.n_particles = static_cast<std::size_t>(cfg.get_int("randorg.n", 64));
        rc.dim = static_cast<std::size_t>(cfg.get_int("randorg.d", 3));
        rc.kick_amplitude = cfg.get_double("randorg.kick_amplitude", 0.1);
        rc.reciprocal = cfg.get_bool("randorg.reciprocal", true);
        rc.max_steps = static_cast<std::size_t>(cfg.get_int("randorg.max_steps", 50000));
        const std::uint64_t seed = static_cast<std::uint64_t>(cfg.get_int("seed", 0));
        auto radii = cfg.get_double_list("randorg.radii", "");
        if (radii.empty()) throw ValidationError("randorg.radii must be a nonempty list");
        const auto n_seeds = static_cast<std::size_t>(cfg.get_int("randorg.n_seeds", 20));
        std::vector<std::uint64_t> seeds;
        for (std::size_t i = 0; i < n_seeds; ++i) seeds.push_back(mix_seed(seed, i));

        auto cells = randorg::run_density_sweep(rc, radii, seeds);

        std::filesystem::create_directories(args.out_dir);
        const std::string sweep_path = args.out_dir + "/sweep.jsonl";
        std::ofstream out(sweep_path);
        if (!out) throw IoError("cannot write sweep: " + sweep_path);
        for (const auto& c : cells)
            out << json{{"radius", c.radius},
                        {"seed", c.seed},
                        {"absorbed", c.absorbed},
                        {"steps_to_absorb", c.steps_to_absorb},
                        {"final_active_fraction", c.final_active_fraction}}
                       .dump()
                << "\n";
        out.close();
        write_manifest(args.out_dir + "/manifest.json", cfg, seed, start,
                       json{{"sweep", sweep_path}}, "");
        return kExitOk;
    } catch (const ValidationError& e) {
        err << "error: " << e.what() << "\n";
        return kExitValidation;
    } catch (const IoError& e) {
        err << "io error: " << e.what() << "\n";
        return kExitIo;
    }
}

namespace detail {

// Augmentation sub-manifolds in representation space, one per sampled
// dataset row, for the geometry report.
inline std::vector<analysis::SubManifoldSample> build_manifolds(
    const nn::DenseNet& backbone, const data::Dataset& ds, std::size_t samples,
    std::size_t augmentations, const trainer::AugmentConfig& aug, std::uint64_t seed) {
    std::vector<std::size_t> order(ds.size());
    std::iota(order.begin(), order.end(), 0);
    Rng rng(mix_seed(seed, 0x67656f6dULL));
    std::shuffle(order.begin(), order.end(), rng);
    samples = std::min(samples, ds.size());

    std::vector<analysis::SubManifoldSample> manifolds;
    for (std::size_t s = 0; s < samples; ++s) {
        const std::size_t idx = order[s];
        Rng arng(mix_seed(seed, idx));
        Matrix views = trainer::augment_views(ds.row(idx), augmentations, aug, arng);
        analysis::SubManifoldSample rec;
        rec.views = nn::forward(backbone, views).representations;
        rec.class_id = ds.labels[idx];
        manifolds.push_back(std::move(rec));
    }
    return manifolds;
}

}  // namespace detail

inline int cmd_analyze(const CommonArgs& args, const std::string& checkpoint_path,
                       const std::string& dataset_path, std::ostream& err = std::cerr) {
    try {
        const std::string start = timestamp_utc();
        auto cfg = resolve_config(args);
        auto net = nn::load_checkpoint(checkpoint_path, /*backbone_only=*/true);
        auto ds = data::read_dataset(dataset_path);
        if (net.input_width() != ds.d)
            throw ValidationError("width mismatch: checkpoint expects input width " +
                                  std::to_string(net.input_width()) + ", dataset has d = " +
                                  std::to_string(ds.d));

        const std::uint64_t seed = static_cast<std::uint64_t>(cfg.get_int("seed", 0));
        const auto samples = static_cast<std::size_t>(cfg.get_int("analyze.samples", 200));
        const auto m_a = static_cast<std::size_t>(cfg.get_int("analyze.augmentations", 16));
        const auto repeats = static_cast<std::size_t>(cfg.get_int("analyze.repeats", 10));
        trainer::AugmentConfig aug;
        aug.noise_sigma = cfg.get_double("augment.noise_sigma", 0.1);
        aug.dropout_prob = cfg.get_double("augment.dropout_prob", 0.1);
        aug.scale_min = cfg.get_double("augment.scale_min", 0.9);
        aug.scale_max = cfg.get_double("augment.scale_max", 1.1);

        std::vector<std::size_t> all(ds.size());
        std::iota(all.begin(), all.end(), 0);
        Matrix reprs = trainer::compute_representations(net, ds, all);
        auto eigs = analysis::eigenspectrum(reprs);

        auto window = analysis::default_fit_window(eigs);
        const auto rank_min =
            static_cast<std::size_t>(cfg.get_int("analyze.rank_min", static_cast<long>(window.first)));
        const auto rank_max =
            static_cast<std::size_t>(cfg.get_int("analyze.rank_max", static_cast<long>(window.second)));
        auto fit = analysis::power_law_fit(eigs, rank_min, rank_max);

        auto manifolds = detail::build_manifolds(net, ds, samples, m_a, aug, seed);
        Rng grng(mix_seed(seed, 0x7265706fULL));
        auto report =
            analysis::geometry_report(manifolds, repeats, manifolds.size(), grng);

        std::filesystem::create_directories(args.out_dir);
        const std::string spectrum_csv = args.out_dir + "/spectrum.csv";
        const std::string fit_json = args.out_dir + "/spectrum_fit.json";
        const std::string report_json = args.out_dir + "/geometry_report.json";

        std::ofstream csv(spectrum_csv);
        if (!csv) throw IoError("cannot write spectrum: " + spectrum_csv);
        csv << "rank,eigenvalue\n";
        csv.precision(17);
        for (std::size_t i = 0; i < eigs.size(); ++i) csv << (i + 1) << "," << eigs[i] << "\n";
        csv.close();

        std::ofstream fj(fit_json);
        fj << json{{"rank_min", fit.rank_min},
                   {"rank_max", fit.rank_max},
                   {"exponent", fit.exponent},
                   {"fit_residual", fit.fit_residual}}
                  .dump(2)
           << "\n";
        fj.close();

        std::ofstream rj(report_json);
        rj << geometry_report_to_json(report).dump(2) << "\n";
        rj.close();

        write_manifest(args.out_dir + "/manifest.json", cfg, seed, start,
                       json{{"spectrum_csv", spectrum_csv},
                            {"spectrum_fit", fit_json},
                            {"geometry_report", report_json}},
                       content_hash(dataset_path));
        return kExitOk;
    } catch (const ValidationError& e) {
        err << "error: " << e.what() << "\n";
        return kExitValidation;
    } catch (const IoError& e) {
        err << "io error: " << e.what() << "\n";
        return kExitIo;
    }
}

inline int cmd_probe(const CommonArgs& args, const std::string& checkpoint_path,
                     const std::string& train_path, const std::string& test_path,
                     std::ostream& out = std::cout, std::ostream& err = std::cerr) {
    try {
        const std::string start = timestamp_utc();
        auto cfg = resolve_config(args);
        auto net = nn::load_checkpoint(checkpoint_path, /*backbone_only=*/true);
        auto train_ds = data::read_dataset(train_path);
        auto test_ds = data::read_dataset(test_path);
        if (net.input_width() != train_ds.d || net.input_width() != test_ds.d)
            throw ValidationError("width mismatch: checkpoint expects input width " +
                                  std::to_string(net.input_width()) + ", datasets have d = " +
                                  std::to_string(train_ds.d) + " and " +
                                  std::to_string(test_ds.d));
        if (train_ds.num_classes != test_ds.num_classes)
            throw ValidationError("label space mismatch: " + std::to_string(train_ds.num_classes) +
                                  " vs " + std::to_string(test_ds.num_classes) + " classes");

        const auto epochs = static_cast<std::size_t>(cfg.get_int("probe.epochs", 200));
        const double lr = cfg.get_double("probe.lr", 0.5);
        const std::uint64_t seed = static_cast<std::uint64_t>(cfg.get_int("seed", 0));

        std::vector<std::size_t> train_idx(train_ds.size()), test_idx(test_ds.size());
        std::iota(train_idx.begin(), train_idx.end(), 0);
        std::iota(test_idx.begin(), test_idx.end(), 0);
        Matrix train_x = trainer::compute_representations(net, train_ds, train_idx);
        Matrix test_x = trainer::compute_representations(net, test_ds, test_idx);
        const double acc = analysis::linear_probe(train_x, train_ds.labels, test_x,
                                                  test_ds.labels, epochs, lr);
        out << "accuracy=" << acc << "\n";

        std::filesystem::create_directories(args.out_dir);
        write_manifest(args.out_dir + "/manifest.json", cfg, seed, start, json::object(),
                       content_hash(train_path), json{{"accuracy", acc}});
        return kExitOk;
    } catch (const ValidationError& e) {
        err << "error: " << e.what() << "\n";
        return kExitValidation;
    } catch (const IoError& e) {
        err << "io error: " << e.what() << "\n";
        return kExitIo;
    }
}

inline int cmd_sweep(const CommonArgs& args, std::ostream& err = std::cerr) {
    try {
        const std::string start = timestamp_utc();
        auto cfg = resolve_config(args);
        const std::string dataset_path = cfg.get_string("dataset", "");
        if (dataset_path.empty()) throw ValidationError("missing required key 'dataset'");
        auto tc = read_train_config(cfg);
        auto ds = data::read_dataset(dataset_path);

        const std::string axis_name = cfg.get_string("sweep.axis", "r_s");
        trainer::SweepAxis axis;
        if (axis_name == "r_s")
            axis = trainer::SweepAxis::kRs;
        else if (axis_name == "m" || axis_name == "views")
            axis = trainer::SweepAxis::kViews;
        else if (axis_name == "lr")
            axis = trainer::SweepAxis::kLr;
        else
            throw ValidationError("sweep.axis must be one of r_s, m, lr");
        auto values = cfg.get_double_list("sweep.values", "");
        if (values.empty()) throw ValidationError("sweep.values must be a nonempty list");

        auto rows = trainer::sweep(tc, axis, values, ds);

        std::filesystem::create_directories(args.out_dir);
        const std::string path = args.out_dir + "/sweep.jsonl";
        std::ofstream out(path);
        if (!out) throw IoError("cannot write sweep table: " + path);
        for (const auto& row : rows)
            out << json{{"value", row.value},
                        {"probe_accuracy", row.probe_accuracy},
                        {"final_metrics", metrics_to_json(row.final_metrics)}}
                       .dump()
                << "\n";
        out.close();
        write_manifest(args.out_dir + "/manifest.json", cfg, tc.seed, start,
                       json{{"sweep", path}}, content_hash(dataset_path));
        return kExitOk;
    } catch (const ValidationError& e) {
        err << "error: " << e.what() << "\n";
        return kExitValidation;
    } catch (const IoError& e) {
        err << "io error: " << e.what() << "\n";
        return kExitIo;
    }
}

inline int cmd_gen_blobs(const CommonArgs& args, const std::string& out_path,
                         std::ostream& err = std::cerr) {
    try {
        auto cfg = resolve_config(args);
        const auto classes = static_cast<std::size_t>(cfg.get_int("blobs.classes", 10));
        const auto per_class = static_cast<std::size_t>(cfg.get_int("blobs.per_class", 200));
        const auto d = static_cast<std::size_t>(cfg.get_int("blobs.d", 32));
        const double separation = cfg.get_double("blobs.separation", 8.0);
        const std::uint64_t seed = static_cast<std::uint64_t>(cfg.get_int("seed", 0));
        auto ds = data::gen_blobs(classes, per_class, d, separation, seed);
        data::write_dataset(out_path, ds);
        return kExitOk;
    } catch (const ValidationError& e) {
        err << "error: " << e.what() << "\n";
        return kExitValidation;
    } catch (const IoError& e) {
        err << "io error: " << e.what() << "\n";
        return kExitIo;
    }
}

}  // namespace clamp::cli
