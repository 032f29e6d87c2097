#include "compseg/supervision/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <random>
#include <stdexcept>

#include "compseg/nn/adam.hpp"
#include "compseg/vmf/kmeans.hpp"

namespace compseg::supervision {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

void emit(const TrainOptions& options, const nlohmann::json& record) {
    if (options.log) *options.log << record.dump() << "\n" << std::flush;
}

// Derived seeds keep the parameter init, batch order and k-means streams independent.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(stream)};
    std::array<std::uint32_t, 2> out{};
    seq.generate(out.begin(), out.end());
    return (static_cast<std::uint64_t>(out[0]) << 32) | out[1];
}

enum Stream : std::uint64_t { kSubsetStream = 1, kPretrainStream, kHarvestStream, kKMeansStream, kInitStream, kOrderStream };

std::vector<double> snapshot(const nn::ParamList& params) {
    std::vector<double> out;
    for (const auto* p : params) out.insert(out.end(), p->value.begin(), p->value.end());
    return out;
}

void restore_snapshot(const nn::ParamList& params, const std::vector<double>& values) {
    std::size_t offset = 0;
    for (auto* p : params) {
        std::copy_n(values.begin() + static_cast<std::ptrdiff_t>(offset), p->value.size(), p->value.begin());
        offset += p->value.size();
    }
}

struct Validation {
    std::optional<double> mean;
    std::vector<double> per_class;
};

Validation validate_on(const std::vector<const data::VolumeRecord*>& val, const metrics::SlicePredictor& predict,
                       TaskMode mode, int batch_size) {
    Validation v;
    if (val.empty()) return v;
    const auto report = metrics::evaluate_volumes(val, predict, mode, batch_size);
    for (const auto& a : report.aggregate) v.per_class.push_back(a.dice_mean);
    v.mean = report.mean_dice();
    return v;
}

void accumulate(EpochRecord& rec, const LossBreakdown& l) {
    rec.clustering += l.clustering;
    rec.weak += l.weak;
    rec.total += l.total;
    if (l.labeled > 0) {
        rec.dice += l.dice;
        ++rec.dice_steps;
    }
    ++rec.steps;
}

void finish(EpochRecord& rec) {
    if (rec.steps > 0) {
        rec.clustering /= rec.steps;
        rec.weak /= rec.steps;
        rec.total /= rec.steps;
    }
    if (rec.dice_steps > 0) rec.dice /= rec.dice_steps;
}

}  // namespace

std::string to_string(WeakLabelMode mode) {
    switch (mode) {
        case WeakLabelMode::Auto: return "auto";
        case WeakLabelMode::WholeTumour: return "whole";
        case WeakLabelMode::SubRegion: return "sub";
    }
    return "auto";
}

WeakLabelMode weak_label_mode_from_string(const std::string& s) {
    if (s == "auto") return WeakLabelMode::Auto;
    if (s == "whole") return WeakLabelMode::WholeTumour;
    if (s == "sub") return WeakLabelMode::SubRegion;
    throw std::invalid_argument("unknown weak label mode '" + s + "' (expected auto, whole or sub)");
}

double TrainingConfig::effective_lambda_weak() const {
    if (lambda_weak) return *lambda_weak;
    return task_mode == TaskMode::WholeTumour ? 0.5 : 0.1;
}

int TrainingConfig::weak_width() const {
    switch (weak_labels) {
        case WeakLabelMode::WholeTumour: return 1;
        case WeakLabelMode::SubRegion: return 3;
        case WeakLabelMode::Auto: break;
    }
    return task_mode == TaskMode::WholeTumour ? 1 : 3;
}

model::ModelConfig TrainingConfig::resolved_model() const {
    model::ModelConfig m = model;
    m.num_kernels = num_kernels;
    m.concentration = concentration;
    m.num_classes = class_count(task_mode);
    m.weak_outputs = weak_width();
    return m;
}

void TrainingConfig::validate() const {
    const auto fail = [](const std::string& what) { throw std::invalid_argument("training config: " + what); };
    if (!(label_fraction > 0.0 && label_fraction <= 1.0)) fail("label_fraction must lie in (0, 1]");
    if (!(effective_lambda_weak() >= 0.0) || !std::isfinite(effective_lambda_weak())) fail("lambda_weak must be >= 0");
    if (!(learning_rate > 0.0)) fail("learning_rate must be positive");
    if (!(pretrain_learning_rate > 0.0)) fail("pretrain_learning_rate must be positive");
    if (batch_size < 1) fail("batch_size must be positive");
    if (labeled_per_batch < 0 || labeled_per_batch >= batch_size) fail("labeled_per_batch must lie in [0, batch_size)");
    if (epochs < 0) fail("epochs must be >= 0");
    if (pretrain_epochs < 0) fail("pretrain_epochs must be >= 0");
    if (num_kernels < 2) fail("need at least 2 kernels");
    if (!(concentration > 0.0)) fail("concentration must be positive");
    if (kmeans_samples_per_image < 1 || kmeans_max_iterations < 1) fail("k-means settings must be positive");
    if (weak_labels == WeakLabelMode::SubRegion && task_mode == TaskMode::WholeTumour)
        fail("sub-region weak labels need the sub-region task");
    resolved_model().validate();
}

nlohmann::json TrainingConfig::to_json() const {
    nlohmann::json j{{"task", to_string(task_mode)},
                     {"label_fraction", label_fraction},
                     {"lambda_weak", effective_lambda_weak()},
                     {"learning_rate", learning_rate},
                     {"batch_size", batch_size},
                     {"epochs", epochs},
                     {"num_kernels", num_kernels},
                     {"concentration", concentration},
                     {"seed", seed},
                     {"pretrain_epochs", pretrain_epochs},
                     {"pretrain_learning_rate", pretrain_learning_rate},
                     {"kmeans_samples_per_image", kmeans_samples_per_image},
                     {"kmeans_max_iterations", kmeans_max_iterations},
                     {"labeled_per_batch", labeled_per_batch},
                     {"kmeans_nonzero_only", kmeans_nonzero_only},
                     {"pretrained_features", pretrained_features},
                     {"weak_labels", to_string(weak_labels)},
                     {"model", model.to_json()}};
    return j;
}

TrainingConfig TrainingConfig::from_json(const nlohmann::json& j) {
    static const std::vector<std::string> known{"task", "label_fraction", "lambda_weak", "learning_rate", "batch_size",
                                                "epochs", "num_kernels", "concentration", "seed", "pretrain_epochs",
                                                "pretrain_learning_rate", "kmeans_samples_per_image",
                                                "kmeans_max_iterations", "kmeans_nonzero_only", "labeled_per_batch", "pretrained_features", "weak_labels", "model"};
    if (!j.is_object()) throw std::invalid_argument("training config must be a JSON object");
    for (const auto& [key, value] : j.items())
        if (std::find(known.begin(), known.end(), key) == known.end())
            throw std::invalid_argument("training config: unknown key '" + key + "'");
    TrainingConfig c;
    if (j.contains("task")) c.task_mode = task_mode_from_string(j.at("task").get<std::string>());
    c.label_fraction = j.value("label_fraction", c.label_fraction);
    if (j.contains("lambda_weak")) c.lambda_weak = j.at("lambda_weak").get<double>();
    c.learning_rate = j.value("learning_rate", c.learning_rate);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.epochs = j.value("epochs", c.epochs);
    c.num_kernels = j.value("num_kernels", c.num_kernels);
    c.concentration = j.value("concentration", c.concentration);
    c.seed = j.value("seed", c.seed);
    c.pretrain_epochs = j.value("pretrain_epochs", c.pretrain_epochs);
    c.pretrain_learning_rate = j.value("pretrain_learning_rate", c.pretrain_learning_rate);
    c.kmeans_samples_per_image = j.value("kmeans_samples_per_image", c.kmeans_samples_per_image);
    c.kmeans_max_iterations = j.value("kmeans_max_iterations", c.kmeans_max_iterations);
    c.labeled_per_batch = j.value("labeled_per_batch", c.labeled_per_batch);
    c.kmeans_nonzero_only = j.value("kmeans_nonzero_only", c.kmeans_nonzero_only);
    c.pretrained_features = j.value("pretrained_features", c.pretrained_features);
    if (j.contains("weak_labels")) c.weak_labels = weak_label_mode_from_string(j.at("weak_labels").get<std::string>());
    if (j.contains("model")) c.model = model::ModelConfig::from_json(j.at("model"));
    return c;
}

TrainingData prepare_training_data(const std::vector<data::VolumeRecord>& volumes, const TrainingConfig& config) {
    config.validate();
    TrainingData d;
    for (const auto& v : volumes) {
        if (v.split == data::Split::Val) d.val.push_back(&v);
        if (v.split != data::Split::Train) continue;
        auto s = data::make_slice_samples(v, config.task_mode, config.weak_width());
        d.train.insert(d.train.end(), std::make_move_iterator(s.begin()), std::make_move_iterator(s.end()));
    }
    if (d.train.empty()) throw std::invalid_argument("dataset has no training slices");
    data::sample_labeled_subset(d.train, config.label_fraction, derive_seed(config.seed, kSubsetStream));
    return d;
}

model::ImageSet image_set(const std::vector<data::SliceSample>& samples) {
    model::ImageSet set;
    set.count = samples.size();
    set.load = [&samples](std::span<const std::size_t> idx) {
        const auto& first = samples.at(idx.front());
        Tensor x(static_cast<int>(idx.size()), data::kModalities, first.height, first.width);
        for (std::size_t b = 0; b < idx.size(); ++b) {
            const auto& img = samples.at(idx[b]).image;
            std::copy(img.begin(), img.end(), x.sample(static_cast<int>(b)));
        }
        return x;
    };
    return set;
}

KernelInit initialize_kernels(const std::vector<data::SliceSample>& train, const TrainingConfig& config) {
    config.validate();
    if (train.empty()) throw std::invalid_argument("initialize_kernels: no training slices");
    const model::ModelConfig mc = config.resolved_model();
    const model::ImageSet images = image_set(train);
    auto pre = model::pretrain_reconstruction(
        images, mc, {config.pretrain_epochs, config.batch_size, config.pretrain_learning_rate, derive_seed(config.seed, kPretrainStream)});
    const vmf::RowMatrix vectors = model::harvest_features(pre.extractor, images, config.kmeans_samples_per_image,
                                                           derive_seed(config.seed, kHarvestStream), config.batch_size,
                                                           config.kmeans_nonzero_only);
    auto km = vmf::init_kernels_kmeans(vectors, config.num_kernels, config.kmeans_max_iterations,
                                       derive_seed(config.seed, kKMeansStream), config.concentration);
    return KernelInit{std::move(km.bank), std::move(pre.extractor), pre.initial_mse, pre.epoch_mse, km.iterations, km.objective};
}

nlohmann::json EpochRecord::to_json() const {
    nlohmann::json j{{"event", "epoch"},     {"epoch", epoch},           {"clustering", clustering},
                     {"dice", dice},         {"weak", weak},             {"total", total},
                     {"dice_steps", dice_steps}, {"steps", steps},       {"seconds", seconds}};
    j["val_dice"] = val_dice ? nlohmann::json(*val_dice) : nlohmann::json(nullptr);
    j["val_dice_per_class"] = val_dice_per_class;
    return j;
}

metrics::SlicePredictor make_predictor(model::ModelBundle& bundle, const vmf::KernelBank& bank) {
    return [&bundle, &bank](const Tensor& images) {
        return metrics::argmax_classes(model::forward(bundle, bank, images).soft_mask);
    };
}

metrics::SlicePredictor make_predictor(model::UNetBaseline& unet) {
    return [&unet](const Tensor& images) { return metrics::argmax_classes(unet.forward(images)); };
}

TrainResult train(const TrainingData& data, const TrainingConfig& config, const TrainOptions& options) {
    config.validate();
    if (data.train.empty()) throw std::invalid_argument("train: empty dataset");
    const model::ModelConfig mc = config.resolved_model();
    const double lambda_weak = config.effective_lambda_weak();

    std::optional<KernelInit> own_init;
    const KernelInit* init = options.kernels;
    if (!init) {
        own_init = initialize_kernels(data.train, config);
        init = &*own_init;
    }
    if (init->bank.count() != mc.num_kernels || init->bank.dim() != mc.feature_dim)
        throw std::invalid_argument("train: initial kernel bank does not match the model");
    emit(options, {{"event", "kernel_init"},
                   {"pretrain_initial_mse", init->pretrain_initial_mse},
                   {"pretrain_epoch_mse", init->pretrain_epoch_mse},
                   {"kmeans_iterations", init->kmeans_iterations},
                   {"kmeans_objective", init->kmeans_objective}});

    TrainResult result;
    result.bundle = std::make_unique<model::ModelBundle>(mc);
    result.bundle->init(derive_seed(config.seed, kInitStream));
    if (config.pretrained_features) {
        auto dst = result.bundle->feature_extractor.parameters();
        auto src = const_cast<model::FeatureExtractor&>(init->extractor).parameters();
        if (dst.size() != src.size()) throw std::invalid_argument("train: pretrained extractor does not match the model");
        for (std::size_t i = 0; i < dst.size(); ++i) {
            if (dst[i]->value.size() != src[i]->value.size())
                throw std::invalid_argument("train: pretrained extractor does not match the model");
            dst[i]->value = src[i]->value;
        }
    }
    result.bank = vmf::KernelBank(init->bank.kernels(), config.concentration);
    vmf::KernelBank& bank = *result.bank;

    nn::Param kernel_param("kernel_bank.kernels", static_cast<std::size_t>(bank.kernels().size()));
    std::copy_n(bank.kernels().data(), kernel_param.value.size(), kernel_param.value.begin());
    nn::ParamList net_params = result.bundle->parameters();
    nn::ParamList all = net_params;
    all.push_back(&kernel_param);
    nn::Adam adam(all, {.learning_rate = config.learning_rate});

    std::mt19937_64 order_rng(derive_seed(config.seed, kOrderStream));
    std::vector<std::size_t> order(data.train.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::vector<std::size_t> labeled;
    for (std::size_t i = 0; i < data.train.size(); ++i)
        if (data.train[i].has_pixel_label) labeled.push_back(i);
    const int extra = labeled.empty() ? 0 : config.labeled_per_batch;
    const std::size_t chunk = static_cast<std::size_t>(config.batch_size - extra);
    std::size_t cursor = labeled.size();
    const int C = mc.num_classes;
    const int K = mc.weak_outputs;

    std::vector<double> best_net = snapshot(net_params);
    vmf::RowMatrix best_kernels = bank.kernels();
    for (int epoch = 1; epoch <= config.epochs; ++epoch) {
        const auto t0 = Clock::now();
        EpochRecord rec;
        rec.epoch = epoch;
        std::shuffle(order.begin(), order.end(), order_rng);
        for (std::size_t start = 0; start < order.size(); start += chunk) {
            const std::size_t end = std::min(order.size(), start + chunk);
            std::vector<const data::SliceSample*> members;
            for (std::size_t i = start; i < end; ++i) members.push_back(&data.train[order[i]]);
            for (int e = 0; e < extra; ++e) {
                if (cursor == labeled.size()) {
                    std::shuffle(labeled.begin(), labeled.end(), order_rng);
                    cursor = 0;
                }
                members.push_back(&data.train[labeled[cursor++]]);
            }
            const Batch batch = make_batch(members, C, K);
            adam.zero_grad();
            const ObjectiveResult r = total_loss_backward(*result.bundle, bank, batch, lambda_weak);
            std::copy_n(r.dkernels.data(), kernel_param.grad.size(), kernel_param.grad.begin());
            adam.step();
            std::copy_n(kernel_param.value.begin(), kernel_param.value.size(), bank.mutable_kernels().data());
            vmf::renormalize_rows(bank.mutable_kernels());
            std::copy_n(bank.kernels().data(), kernel_param.value.size(), kernel_param.value.begin());
            accumulate(rec, r.loss);
        }
        finish(rec);
        const Validation v = validate_on(data.val, make_predictor(*result.bundle, bank), config.task_mode, config.batch_size);
        rec.val_dice = v.mean;
        rec.val_dice_per_class = v.per_class;
        rec.seconds = seconds_since(t0);
        const bool better = !v.mean || !result.selected_val_dice || *v.mean > *result.selected_val_dice;
        if (better) {
            result.selected_epoch = epoch;
            result.selected_val_dice = v.mean;
            best_net = snapshot(net_params);
            best_kernels = bank.kernels();
        }
        result.history.push_back(rec);
        emit(options, rec.to_json());
    }
    restore_snapshot(net_params, best_net);
    bank.mutable_kernels() = best_kernels;
    emit(options, {{"event", "selected"},
                   {"epoch", result.selected_epoch},
                   {"val_dice", result.selected_val_dice ? nlohmann::json(*result.selected_val_dice) : nlohmann::json(nullptr)}});
    return result;
}

UNetTrainResult train_unet(const TrainingData& data, const TrainingConfig& config, const TrainOptions& options) {
    config.validate();
    std::vector<std::size_t> labeled;
    for (std::size_t i = 0; i < data.train.size(); ++i)
        if (data.train[i].has_pixel_label) labeled.push_back(i);
    if (labeled.empty()) throw std::invalid_argument("train_unet: no pixel-labelled slices");
    const model::ModelConfig mc = config.resolved_model();

    UNetTrainResult result;
    result.unet = std::make_unique<model::UNetBaseline>(mc);
    result.unet->init(derive_seed(config.seed, kInitStream));
    nn::ParamList params = result.unet->parameters();
    nn::Adam adam(params, {.learning_rate = config.learning_rate});

    std::mt19937_64 order_rng(derive_seed(config.seed, kOrderStream));
    const std::size_t steps = (data.train.size() + config.batch_size - 1) / config.batch_size;
    const std::size_t batch_size = std::min<std::size_t>(config.batch_size, labeled.size());
    std::vector<std::size_t> order = labeled;
    std::size_t cursor = order.size();

    std::vector<double> best = snapshot(params);
    for (int epoch = 1; epoch <= config.epochs; ++epoch) {
        const auto t0 = Clock::now();
        EpochRecord rec;
        rec.epoch = epoch;
        for (std::size_t step = 0; step < steps; ++step) {
            std::vector<const data::SliceSample*> members;
            while (members.size() < batch_size) {
                if (cursor == order.size()) {
                    std::shuffle(order.begin(), order.end(), order_rng);
                    cursor = 0;
                }
                members.push_back(&data.train[order[cursor++]]);
            }
            const Batch batch = make_batch(members, mc.num_classes, mc.weak_outputs);
            adam.zero_grad();
            const Tensor probs = result.unet->forward(batch.images);
            const double loss = dice_loss(probs, batch.targets);
            result.unet->backward(dice_loss_gradient(probs, batch.targets));
            adam.step();
            accumulate(rec, combine_losses(0.0, loss, 0.0, batch.size(), batch.size(), 0.0));
        }
        finish(rec);
        const Validation v = validate_on(data.val, make_predictor(*result.unet), config.task_mode, config.batch_size);
        rec.val_dice = v.mean;
        rec.val_dice_per_class = v.per_class;
        rec.seconds = seconds_since(t0);
        if (!v.mean || !result.selected_val_dice || *v.mean > *result.selected_val_dice) {
            result.selected_epoch = epoch;
            result.selected_val_dice = v.mean;
            best = snapshot(params);
        }
        result.history.push_back(rec);
        emit(options, rec.to_json());
    }
    restore_snapshot(params, best);
    return result;
}

}  // namespace compseg::supervision
