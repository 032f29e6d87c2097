#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <numeric>

#include "acceptance.hpp"
#include "compseg/cli/commands.hpp"
#include "compseg/data/brats.hpp"
#include "compseg/data/synthetic.hpp"
#include "compseg/supervision/trainer.hpp"

namespace compseg::acceptance {

namespace {

constexpr double kLabelFraction = 0.01;
const std::vector<std::uint64_t> kSeeds{1, 2, 3};

class Stopwatch {
public:
    double seconds() const { return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count(); }

private:
    std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

// The synthetic dataset and training defaults shared with the CLI.
struct DeskSetup {
    std::vector<data::VolumeRecord> volumes;
    std::vector<const data::VolumeRecord*> test;
    supervision::TrainingConfig base;

    DeskSetup() {
        const cli::RunConfig rc = cli::default_run_config();
        volumes = data::generate_synthetic_dataset(rc.synthetic);
        data::standardize_intensities(volumes);
        for (const auto& v : volumes)
            if (v.split == data::Split::Test) test.push_back(&v);
        base = rc.training;
        base.label_fraction = kLabelFraction;
    }

    supervision::TrainingConfig config(std::uint64_t seed, TaskMode mode = TaskMode::WholeTumour) const {
        supervision::TrainingConfig c = base;
        c.seed = seed;
        c.task_mode = mode;
        c.lambda_weak.reset();
        return c;
    }
};

const DeskSetup& desk() {
    static const DeskSetup setup;
    return setup;
}

void progress(int criterion, const std::string& what, double dice, const Stopwatch& sw) {
    std::cerr << "  [" << criterion << "] " << what << ": test Dice " << fmt(dice) << " (" << fmt(sw.seconds())
              << " s)\n";
}

double test_dice(model::ModelBundle& bundle, const vmf::KernelBank& bank, TaskMode mode) {
    return metrics::evaluate_volumes(desk().test, supervision::make_predictor(bundle, bank), mode).mean_dice();
}

double test_dice(model::UNetBaseline& unet, TaskMode mode) {
    return metrics::evaluate_volumes(desk().test, supervision::make_predictor(unet), mode).mean_dice();
}

double mean(const std::vector<double>& v) { return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size()); }

std::string list(const std::vector<double>& v) {
    std::string s;
    for (double x : v) s += (s.empty() ? "" : "/") + fmt(x);
    return s;
}

}  // namespace

Outcome whole_tumour_ordering(std::vector<TrainedCompositional>& models) {
    const Stopwatch total;
    const DeskSetup& setup = desk();
    std::vector<double> weak, no_weak, unet_low, unet_full;
    models.clear();
    for (std::uint64_t seed : kSeeds) {
        supervision::TrainingConfig cfg = setup.config(seed);
        const auto data = supervision::prepare_training_data(setup.volumes, cfg);
        const Stopwatch sw;
        const supervision::KernelInit init = supervision::initialize_kernels(data.train, cfg);
        const supervision::TrainOptions shared{nullptr, &init};

        auto r = supervision::train(data, cfg, shared);
        weak.push_back(test_dice(*r.bundle, *r.bank, cfg.task_mode));
        progress(6, "seed " + fmt(seed) + " vmf", weak.back(), sw);
        models.push_back({std::move(r.bundle), *r.bank});

        supervision::TrainingConfig off = cfg;
        off.lambda_weak = 0.0;
        auto n = supervision::train(data, off, shared);
        no_weak.push_back(test_dice(*n.bundle, *n.bank, cfg.task_mode));
        progress(6, "seed " + fmt(seed) + " vmf-no-weak", no_weak.back(), sw);

        auto u = supervision::train_unet(data, cfg);
        unet_low.push_back(test_dice(*u.unet, cfg.task_mode));
        progress(6, "seed " + fmt(seed) + " unet 1%", unet_low.back(), sw);

        supervision::TrainingConfig full = cfg;
        full.label_fraction = 1.0;
        auto f = supervision::train_unet(supervision::prepare_training_data(setup.volumes, full), full);
        unet_full.push_back(test_dice(*f.unet, cfg.task_mode));
        progress(6, "seed " + fmt(seed) + " unet 100%", unet_full.back(), sw);
    }
    const double w = mean(weak), nw = mean(no_weak), ul = mean(unet_low), uf = mean(unet_full);
    Checks checks;
    checks.expect(w > nw, "vmf " + fmt(w) + " <= vmf-no-weak " + fmt(nw));
    checks.expect(w > ul, "vmf " + fmt(w) + " <= unet-1% " + fmt(ul));
    checks.expect(w >= 0.9 * uf, "vmf " + fmt(w) + " < 90% of unet-100% " + fmt(uf));
    checks.note("mean test Dice over seeds: vmf " + fmt(w) + " [" + list(weak) + "], vmf-no-weak " + fmt(nw) + " [" +
                list(no_weak) + "], unet-1% " + fmt(ul) + " [" + list(unet_low) + "], unet-100% " + fmt(uf) + " [" +
                list(unet_full) + "]");
    Outcome o = checks.outcome();
    o.budget_seconds = total.seconds();
    return o;
}

Outcome tumour_kernel_emergence(std::vector<TrainedCompositional>& models) {
    const DeskSetup& setup = desk();
    if (models.empty())
        for (std::uint64_t seed : kSeeds) {
            const supervision::TrainingConfig cfg = setup.config(seed);
            auto r = supervision::train(supervision::prepare_training_data(setup.volumes, cfg), cfg);
            models.push_back({std::move(r.bundle), *r.bank});
        }

    // Test slices with tumour, batched for the forward pass.
    std::vector<data::SliceSample> slices;
    for (const auto* v : setup.test)
        for (auto& s : data::make_slice_samples(*v, TaskMode::WholeTumour))
            if (s.has_foreground()) slices.push_back(std::move(s));
    if (slices.empty()) return {Status::Fail, "no tumour-bearing test slices", 0.0};

    Checks checks;
    int hits = 0, total = 0;
    std::string per_model;
    for (auto& m : models) {
        const int J = m.bank.count();
        // hit[j]: slices on which channel j puts more than half its mass inside the tumour.
        std::vector<int> hit(static_cast<std::size_t>(J), 0);
        for (std::size_t start = 0; start < slices.size(); start += 32) {
            std::vector<const data::SliceSample*> chunk;
            for (std::size_t i = start; i < std::min(slices.size(), start + 32); ++i) chunk.push_back(&slices[i]);
            const auto batch = supervision::make_batch(chunk, 2, 1);
            const auto pass = model::forward(*m.bundle, m.bank, batch.images);
            for (std::size_t b = 0; b < chunk.size(); ++b)
                for (int j = 0; j < J; ++j) {
                    const double* a = pass.activations.channel(static_cast<int>(b), j);
                    double inside = 0.0, mass = 0.0;
                    for (std::size_t i = 0; i < chunk[b]->plane(); ++i) {
                        mass += a[i];
                        if (chunk[b]->labels[i]) inside += a[i];
                    }
                    hit[static_cast<std::size_t>(j)] += mass > 0.0 && inside / mass > 0.5;
                }
        }
        const auto best = std::max_element(hit.begin(), hit.end());
        hits += *best;
        total += static_cast<int>(slices.size());
        per_model += (per_model.empty() ? "" : ", ") + std::string("kernel ") + fmt(best - hit.begin()) + " " +
                     fmt(100.0 * *best / static_cast<double>(slices.size())) + "%";
    }
    const double fraction = static_cast<double>(hits) / total;
    checks.expect(fraction >= 0.8, "IoA > 0.5 on only " + fmt(100.0 * fraction) + "% of tumour slices");
    checks.note("best channel per model (fixed across slices) with IoA > 0.5: " + per_model + " of " +
                fmt(slices.size()) + " tumour slices; pooled " + fmt(100.0 * fraction) + "%");
    return checks.outcome();
}

Outcome sub_region_ordering() {
    const DeskSetup& setup = desk();
    std::vector<double> sub, whole, none;
    for (std::uint64_t seed : kSeeds) {
        const Stopwatch sw;
        const supervision::TrainingConfig cfg = setup.config(seed, TaskMode::SubRegion);
        const auto data = supervision::prepare_training_data(setup.volumes, cfg);
        const supervision::KernelInit init = supervision::initialize_kernels(data.train, cfg);
        const supervision::TrainOptions shared{nullptr, &init};

        auto s = supervision::train(data, cfg, shared);
        sub.push_back(test_dice(*s.bundle, *s.bank, cfg.task_mode));
        progress(8, "seed " + fmt(seed) + " sub-region weak", sub.back(), sw);

        supervision::TrainingConfig wt = cfg;
        wt.weak_labels = supervision::WeakLabelMode::WholeTumour;
        auto w = supervision::train(supervision::prepare_training_data(setup.volumes, wt), wt, shared);
        whole.push_back(test_dice(*w.bundle, *w.bank, cfg.task_mode));
        progress(8, "seed " + fmt(seed) + " whole-tumour weak", whole.back(), sw);

        supervision::TrainingConfig off = cfg;
        off.lambda_weak = 0.0;
        auto n = supervision::train(data, off, shared);
        none.push_back(test_dice(*n.bundle, *n.bank, cfg.task_mode));
        progress(8, "seed " + fmt(seed) + " no weak", none.back(), sw);
    }
    const double s = mean(sub), w = mean(whole), n = mean(none);
    constexpr double kTie = 0.5;
    Checks checks;
    checks.expect(s >= w - kTie, "sub-region weak " + fmt(s) + " < whole-tumour weak " + fmt(w));
    checks.expect(w >= n - kTie, "whole-tumour weak " + fmt(w) + " < no weak " + fmt(n));
    checks.note("mean ED/ET/NE Dice over seeds: sub-region weak " + fmt(s) + " [" + list(sub) +
                "], whole-tumour weak " + fmt(w) + " [" + list(whole) + "], no weak " + fmt(n) + " [" + list(none) +
                "]");
    return checks.outcome();
}

Outcome brats_smoke() {
    const char* root = std::getenv("COMPSEG_BRATS_DIR");
    if (!root || !*root) return {Status::Skip, "set COMPSEG_BRATS_DIR to a directory of BraTS subject folders", 0.0};
    const char* limit = std::getenv("COMPSEG_BRATS_SUBJECTS");
    const int max_subjects = limit ? std::atoi(limit) : 5;

    Checks checks;
    auto volumes = data::load_brats_dataset(root, data::BratsOptions{}, 0, max_subjects);
    for (const auto& v : volumes) {
        const bool shape = v.slices == 155 && v.height == 128 && v.width == 128 &&
                           v.modalities.size() == static_cast<std::size_t>(data::kModalities) * 155 * 128 * 128;
        checks.expect(shape, v.subject_id + " is not 4x155x128x128");
    }
    supervision::TrainingConfig cfg;
    cfg.model = model::ModelConfig{};
    cfg.epochs = 1;
    cfg.pretrain_epochs = 1;
    cfg.label_fraction = 0.1;
    auto r = supervision::train(supervision::prepare_training_data(volumes, cfg), cfg);
    std::vector<const data::VolumeRecord*> test;
    for (const auto& v : volumes)
        if (v.split == data::Split::Test) test.push_back(&v);
    const auto report = metrics::evaluate_volumes(test, supervision::make_predictor(*r.bundle, *r.bank), cfg.task_mode);
    checks.note(fmt(volumes.size()) + " subjects, 1 epoch, test WT Dice " + fmt(report.mean_dice()));
    return checks.outcome();
}

}  // namespace compseg::acceptance
