#include <CLI11.hpp>
#include <iostream>

#include "compseg/cli/commands.hpp"

namespace cli = compseg::cli;

int main(int argc, char** argv) {
    CLI::App app{"Compositional vMF-kernel brain tumour segmentation"};
    app.require_subcommand(1);

    cli::SynthDataArgs synth;
    auto* synth_cmd = app.add_subcommand("synth-data", "Generate a synthetic multi-modal dataset");
    synth_cmd->add_option("--config", synth.config, "JSON run config");
    synth_cmd->add_option("--seed", synth.seed, "Generator seed");
    synth_cmd->add_option("--volumes", synth.volumes, "Total volume count, split 938:62:251");
    synth_cmd->add_option("--out", synth.out, "Output dataset directory");

    cli::ImportBratsArgs brats;
    auto* brats_cmd = app.add_subcommand("import-brats", "Convert BraTS subject folders into a dataset directory");
    brats_cmd->add_option("--brats-dir", brats.brats_dir, "Directory of <id>/<id>_{t1,t1ce,t2,flair,seg}.nii.gz")
        ->required();
    brats_cmd->add_option("--seed", brats.seed, "Split seed");
    brats_cmd->add_option("--max-subjects", brats.max_subjects, "Load only the first n subjects");
    brats_cmd->add_option("--size", brats.size, "In-plane output size");
    brats_cmd->add_option("--out", brats.out, "Output dataset directory");

    cli::TrainArgs train;
    auto* train_cmd = app.add_subcommand("train", "Pretrain, initialize kernels and train a model");
    train_cmd->add_option("--config", train.config, "JSON run config");
    train_cmd->add_option("--seed", train.seed, "Training seed");
    train_cmd->add_option("--label-fraction", train.label_fraction, "Fraction of pixel-labelled training slices");
    train_cmd->add_option("--task", train.task, "whole or sub")->check(CLI::IsMember({"whole", "sub"}));
    train_cmd->add_option("--lambda-weak", train.lambda_weak, "Weak-loss weight");
    train_cmd->add_flag("--no-weak", train.no_weak, "Disable the weak loss");
    train_cmd->add_option("--model", train.model, "vmf or unet")->check(CLI::IsMember({"vmf", "unet"}));
    train_cmd->add_option("--epochs", train.epochs, "Training epochs");
    train_cmd->add_option("--data", train.data, "Dataset directory")->required();
    train_cmd->add_option("--out", train.out, "Run directory");

    cli::EvalArgs eval;
    auto* eval_cmd = app.add_subcommand("eval", "Evaluate a checkpoint on the test split");
    eval_cmd->add_option("--config", eval.config, "Run config that must match the checkpoint");
    eval_cmd->add_option("--checkpoint", eval.checkpoint, "Checkpoint file or run directory")->required();
    eval_cmd->add_option("--data", eval.data, "Dataset directory")->required();
    eval_cmd->add_option("--out", eval.out, "Report directory");

    cli::VizArgs viz;
    auto* viz_cmd = app.add_subcommand("viz-activations", "Export vMF activation channels of one slice as PGM images");
    viz_cmd->add_option("--checkpoint", viz.checkpoint, "Checkpoint file or run directory")->required();
    viz_cmd->add_option("--data", viz.data, "Dataset directory")->required();
    viz_cmd->add_option("--volume", viz.volume, "Subject id (default: first test subject)");
    viz_cmd->add_option("--slice", viz.slice, "Slice index (default: middle slice)");
    viz_cmd->add_option("--out", viz.out, "Image directory");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return cli::kConfigError;
    }

    return cli::run_guarded(
        [&] {
            if (*synth_cmd) cli::synth_data(synth, std::cout);
            if (*brats_cmd) cli::import_brats(brats, std::cout);
            if (*train_cmd) cli::train(train, std::cout);
            if (*eval_cmd) cli::eval(eval, std::cout);
            if (*viz_cmd) cli::viz_activations(viz, std::cout);
        },
        std::cerr);
}
