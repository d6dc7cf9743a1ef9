#include <CLI11.hpp>

#include "clamp/cli.hpp"

int main(int argc, char** argv) {
    CLI::App app{"clamp: manifold-packing self-supervised learning toolkit"};
    app.require_subcommand(1);

    clamp::cli::CommonArgs common;
    auto add_common = [&](CLI::App* sub) {
        sub->add_option("--config", common.config_path, "config file (key = value lines)");
        sub->add_option("--set", common.overrides, "override as key=value (repeatable)");
        sub->add_option("--out", common.out_dir, "output directory");
        sub->add_option("--seed", common.seed, "run seed")
            ->each([&](const std::string&) { common.seed_given = true; });
    };

    auto* pretrain = app.add_subcommand("pretrain", "run self-supervised pretraining");
    add_common(pretrain);

    auto* simulate = app.add_subcommand("simulate", "run the random-organization density sweep");
    add_common(simulate);

    std::string checkpoint, dataset, train_set, test_set, blob_out;
    auto* analyze = app.add_subcommand("analyze", "geometry and spectrum diagnostics");
    add_common(analyze);
    analyze->add_option("--checkpoint", checkpoint, "checkpoint path")->required();
    analyze->add_option("--dataset", dataset, "dataset path")->required();

    auto* probe = app.add_subcommand("probe", "linear probe on frozen representations");
    add_common(probe);
    probe->add_option("--checkpoint", checkpoint, "checkpoint path")->required();
    probe->add_option("--train", train_set, "training dataset path")->required();
    probe->add_option("--test", test_set, "test dataset path")->required();

    auto* sweep = app.add_subcommand("sweep", "hyperparameter sweep with probe accuracy");
    add_common(sweep);

    auto* gen = app.add_subcommand("gen-blobs", "generate the synthetic blob benchmark");
    add_common(gen);
    gen->add_option("--dataset-out", blob_out, "output dataset path")->required();

    CLI11_PARSE(app, argc, argv);

    if (pretrain->parsed()) return clamp::cli::cmd_pretrain(common);
    if (simulate->parsed()) return clamp::cli::cmd_simulate(common);
    if (analyze->parsed()) return clamp::cli::cmd_analyze(common, checkpoint, dataset);
    if (probe->parsed()) return clamp::cli::cmd_probe(common, checkpoint, train_set, test_set);
    if (sweep->parsed()) return clamp::cli::cmd_sweep(common);
    if (gen->parsed()) return clamp::cli::cmd_gen_blobs(common, blob_out);
    return 1;
}
