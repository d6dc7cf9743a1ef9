#include <catch2/catch_amalgamated.hpp>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "clamp/cli.hpp"

using namespace clamp;
namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    TempDir() {
        path = fs::temp_directory_path() /
               ("clamp_cli_" + std::to_string(Catch::rngSeed()) + "_" +
                std::to_string(reinterpret_cast<std::uintptr_t>(this)));
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
    std::string str(const std::string& name) const { return (path / name).string(); }
};

void write_file(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    out << text;
}

std::size_t count_lines(const std::string& path) {
    std::ifstream in(path);
    REQUIRE(in.good());
    std::size_t n = 0;
    std::string line;
    while (std::getline(in, line)) ++n;
    return n;
}

std::string tiny_dataset(const TempDir& dir, std::uint64_t seed = 5,
                         const std::string& name = "blobs.clmp") {
    auto ds = data::gen_blobs(3, 40, 8, 6.0, seed);
    const std::string path = dir.str(name);
    data::write_dataset(path, ds);
    return path;
}

// cheap-but-real training settings shared by the pipeline tests
std::vector<std::string> tiny_train_overrides() {
    return {"train.epochs=1", "train.batch=8",        "train.views=2",
            "net.backbone=16", "net.head=8",           "train.val_fraction=0.1"};
}

}  // namespace

TEST_CASE("config parsing") {
    std::istringstream text(
        "# comment line\n"
        "train.r_s = 2.5\n"
        "net.backbone = 64,32   # trailing comment\n"
        "flag = true\n"
        "\n");
    auto cfg = config::parse_config_text(text);
    CHECK(cfg.get_double("train.r_s", 0.0) == 2.5);
    CHECK(cfg.get_size_list("net.backbone", "") == std::vector<std::size_t>{64, 32});
    CHECK(cfg.get_bool("flag", false));
    CHECK(cfg.get_int("missing", 7) == 7);
    // every touched key lands in the resolved map, defaults included
    CHECK(cfg.resolved().at("missing") == "7");
    CHECK(cfg.resolved().at("train.r_s") == "2.5");

    std::istringstream bad("keyonly\n");
    CHECK_THROWS_AS(config::parse_config_text(bad), ValidationError);
    std::istringstream badnum("x = 1.5q\n");
    auto c2 = config::parse_config_text(badnum);
    CHECK_THROWS_AS(c2.get_double("x", 0.0), ValidationError);
    CHECK_THROWS_AS(c2.get_int("x", 0), ValidationError);
}

TEST_CASE("overrides win over file values") {
    TempDir dir;
    write_file(dir.str("c.cfg"), "a = 1\nb = 2\n");
    cli::CommonArgs args;
    args.config_path = dir.str("c.cfg");
    args.overrides = {"b=20", "c=3"};
    args.seed_given = true;
    args.seed = 99;
    auto cfg = cli::resolve_config(args);
    CHECK(cfg.get_int("a", 0) == 1);
    CHECK(cfg.get_int("b", 0) == 20);
    CHECK(cfg.get_int("c", 0) == 3);
    CHECK(cfg.get_int("seed", 0) == 99);
    CHECK_THROWS_AS(config::apply_override(cfg, "novalue"), ValidationError);
}

TEST_CASE("content_hash matches git blob hashes") {
    TempDir dir;
    write_file(dir.str("empty"), "");
    write_file(dir.str("hello"), "hello\n");
    CHECK(cli::content_hash(dir.str("empty")) == "e69de29bb2d1d6434b8b29ae775ad8c2e48c5391");
    CHECK(cli::content_hash(dir.str("hello")) == "ce013625030ba8dba906f756967f9e9ca394464a");
    CHECK_THROWS_AS(cli::content_hash(dir.str("nope")), IoError);
}

TEST_CASE("gen-blobs writes a loadable dataset") {
    TempDir dir;
    cli::CommonArgs args;
    args.overrides = {"blobs.classes=3", "blobs.per_class=5", "blobs.d=4"};
    std::ostringstream err;
    CHECK(cli::cmd_gen_blobs(args, dir.str("ds.clmp"), err) == cli::kExitOk);
    auto ds = data::read_dataset(dir.str("ds.clmp"));
    CHECK(ds.size() == 15);
    CHECK(ds.d == 4);

    args.overrides = {"blobs.classes=1"};
    CHECK(cli::cmd_gen_blobs(args, dir.str("bad.clmp"), err) == cli::kExitValidation);
}

TEST_CASE("pretrain pipeline writes checkpoint, metrics, manifest") {
    TempDir dir;
    const std::string ds_path = tiny_dataset(dir);
    cli::CommonArgs args;
    args.out_dir = dir.str("out");
    args.overrides = tiny_train_overrides();
    args.overrides.push_back("dataset=" + ds_path);
    args.overrides.push_back("train.epochs=2");
    args.seed_given = true;
    args.seed = 7;

    std::ostringstream err;
    REQUIRE(cli::cmd_pretrain(args, err) == cli::kExitOk);
    INFO(err.str());

    auto net = nn::load_checkpoint(dir.str("out/checkpoint.clmp"));
    CHECK(net.input_width() == 8);
    CHECK(count_lines(dir.str("out/metrics.jsonl")) == 2);  // one line per epoch

    std::ifstream mf(dir.str("out/manifest.json"));
    auto manifest = nlohmann::json::parse(mf);
    CHECK(manifest["seed"] == 7);
    CHECK(manifest["dataset_hash"] == cli::content_hash(ds_path));
    CHECK(manifest["config"].contains("train.r_s"));
    CHECK(manifest["artifacts"]["checkpoint"].get<std::string>().find("checkpoint.clmp") !=
          std::string::npos);

    // each metrics line is valid json with the expected keys
    std::ifstream ms(dir.str("out/metrics.jsonl"));
    std::string line;
    std::size_t epoch = 0;
    while (std::getline(ms, line)) {
        auto rec = nlohmann::json::parse(line);
        CHECK(rec["epoch"] == ++epoch);
        CHECK(rec.contains("mean_log_loss"));
        CHECK(rec.contains("mean_neighbors"));
        CHECK(rec.contains("mean_manifold_size"));
        CHECK(rec.contains("absorbing_batch_fraction"));
    }
}

TEST_CASE("pretrain exit codes") {
    TempDir dir;
    cli::CommonArgs args;
    args.out_dir = dir.str("out");

    SECTION("missing dataset key is a validation error naming the key") {
        std::ostringstream err;
        CHECK(cli::cmd_pretrain(args, err) == cli::kExitValidation);
        CHECK(err.str().find("dataset") != std::string::npos);
    }
    SECTION("unreadable dataset file is an io error") {
        args.overrides = {"dataset=" + dir.str("missing.clmp")};
        std::ostringstream err;
        CHECK(cli::cmd_pretrain(args, err) == cli::kExitIo);
    }
    SECTION("bad hyperparameters are validation errors") {
        args.overrides = tiny_train_overrides();
        args.overrides.push_back("dataset=" + tiny_dataset(dir));
        args.overrides.push_back("train.views=3");
        std::ostringstream err;
        CHECK(cli::cmd_pretrain(args, err) == cli::kExitValidation);
    }
}

TEST_CASE("simulate pipeline") {
    TempDir dir;
    cli::CommonArgs args;
    args.out_dir = dir.str("out");
    args.overrides = {"randorg.n=16",        "randorg.radii=0.02,0.05", "randorg.n_seeds=2",
                      "randorg.max_steps=5000"};
    std::ostringstream err;
    REQUIRE(cli::cmd_simulate(args, err) == cli::kExitOk);
    CHECK(count_lines(dir.str("out/sweep.jsonl")) == 4);  // 2 radii x 2 seeds

    std::ifstream in(dir.str("out/sweep.jsonl"));
    std::string line;
    while (std::getline(in, line)) {
        auto rec = nlohmann::json::parse(line);
        CHECK(rec.contains("radius"));
        CHECK(rec.contains("absorbed"));
        CHECK(rec.contains("steps_to_absorb"));
        CHECK(rec["absorbed"].get<bool>());  // both radii are dilute
    }

    args.overrides = {"randorg.radii="};
    std::ostringstream err2;
    CHECK(cli::cmd_simulate(args, err2) == cli::kExitValidation);
}

TEST_CASE("analyze and probe pipelines") {
    TempDir dir;
    const std::string ds_path = tiny_dataset(dir);
    cli::CommonArgs args;
    args.out_dir = dir.str("train_out");
    args.overrides = tiny_train_overrides();
    args.overrides.push_back("dataset=" + ds_path);
    std::ostringstream err;
    REQUIRE(cli::cmd_pretrain(args, err) == cli::kExitOk);
    const std::string ckpt = dir.str("train_out/checkpoint.clmp");

    SECTION("analyze emits spectrum, fit and geometry report") {
        cli::CommonArgs a2;
        a2.out_dir = dir.str("an_out");
        a2.overrides = {"analyze.samples=30", "analyze.augmentations=4", "analyze.repeats=2",
                        "analyze.rank_min=1", "analyze.rank_max=5"};
        std::ostringstream err2;
        REQUIRE(cli::cmd_analyze(a2, ckpt, ds_path, err2) == cli::kExitOk);
        INFO(err2.str());

        // backbone width 16: header plus 16 eigenvalue rows
        CHECK(count_lines(dir.str("an_out/spectrum.csv")) == 17);
        {
            std::ifstream csv(dir.str("an_out/spectrum.csv"));
            std::string header;
            std::getline(csv, header);
            CHECK(header == "rank,eigenvalue");
        }
        std::ifstream fj(dir.str("an_out/spectrum_fit.json"));
        auto fit = nlohmann::json::parse(fj);
        CHECK(fit["rank_min"] == 1);
        CHECK(fit["rank_max"] == 5);
        CHECK(std::isfinite(fit["exponent"].get<double>()));

        std::ifstream rj(dir.str("an_out/geometry_report.json"));
        auto rep = nlohmann::json::parse(rj);
        CHECK(rep.contains("centroid_distance"));
        CHECK(rep.contains("alignment_sq_cosine"));
        CHECK(rep["samples_used"] == 30);
    }
    SECTION("analyze rejects width mismatches, naming both widths") {
        auto wrong = data::gen_blobs(3, 10, 5, 6.0, 1);
        data::write_dataset(dir.str("wrong.clmp"), wrong);
        cli::CommonArgs a2;
        a2.out_dir = dir.str("an_out2");
        std::ostringstream err2;
        CHECK(cli::cmd_analyze(a2, ckpt, dir.str("wrong.clmp"), err2) == cli::kExitValidation);
        CHECK(err2.str().find("8") != std::string::npos);
        CHECK(err2.str().find("5") != std::string::npos);
    }
    SECTION("probe prints accuracy and records it in the manifest") {
        const std::string test_path = tiny_dataset(dir, 6, "test.clmp");
        cli::CommonArgs a2;
        a2.out_dir = dir.str("probe_out");
        std::ostringstream out, err2;
        REQUIRE(cli::cmd_probe(a2, ckpt, ds_path, test_path, out, err2) == cli::kExitOk);
        CHECK(out.str().rfind("accuracy=", 0) == 0);
        const double acc = std::stod(out.str().substr(9));
        CHECK(acc >= 0.0);
        CHECK(acc <= 1.0);
        std::ifstream mf(dir.str("probe_out/manifest.json"));
        auto manifest = nlohmann::json::parse(mf);
        CHECK(manifest["accuracy"].get<double>() == Catch::Approx(acc).margin(1e-6));
    }
    SECTION("missing checkpoint is an io error") {
        cli::CommonArgs a2;
        std::ostringstream err2;
        CHECK(cli::cmd_analyze(a2, dir.str("none.clmp"), ds_path, err2) == cli::kExitIo);
    }
}

TEST_CASE("sweep pipeline") {
    TempDir dir;
    const std::string ds_path = tiny_dataset(dir);
    cli::CommonArgs args;
    args.out_dir = dir.str("out");
    args.overrides = tiny_train_overrides();
    args.overrides.push_back("dataset=" + ds_path);
    args.overrides.push_back("sweep.axis=r_s");
    args.overrides.push_back("sweep.values=1.0,3.0");
    std::ostringstream err;
    REQUIRE(cli::cmd_sweep(args, err) == cli::kExitOk);
    CHECK(count_lines(dir.str("out/sweep.jsonl")) == 2);
    std::ifstream in(dir.str("out/sweep.jsonl"));
    std::string line;
    while (std::getline(in, line)) {
        auto rec = nlohmann::json::parse(line);
        CHECK(rec.contains("value"));
        CHECK(rec.contains("probe_accuracy"));
        CHECK(rec["final_metrics"].contains("mean_log_loss"));
    }

    args.overrides.back() = "sweep.values=";
    std::ostringstream err2;
    CHECK(cli::cmd_sweep(args, err2) == cli::kExitValidation);

    args.overrides.back() = "sweep.values=1.0";
    args.overrides.push_back("sweep.axis=bogus");
    std::ostringstream err3;
    CHECK(cli::cmd_sweep(args, err3) == cli::kExitValidation);
}
