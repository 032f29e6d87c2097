#pragma once

#include <cstdint>
#include <json.hpp>
#include <memory>
#include <optional>
#include <ostream>
#include <vector>

#include "compseg/data/samples.hpp"
#include "compseg/metrics/metrics.hpp"
#include "compseg/model/bundle.hpp"
#include "compseg/model/pretrain.hpp"
#include "compseg/supervision/losses.hpp"

namespace compseg::supervision {

/// Which presence labels the weak classifier is trained on.
enum class WeakLabelMode { Auto, WholeTumour, SubRegion };
std::string to_string(WeakLabelMode mode);
WeakLabelMode weak_label_mode_from_string(const std::string& s);

struct TrainingConfig {
    TaskMode task_mode = TaskMode::WholeTumour;
    double label_fraction = 1.0;
    /// Defaults to 0.5 for the whole-tumour task and 0.1 for sub-regions.
    std::optional<double> lambda_weak;
    double learning_rate = 1e-4;
    int batch_size = 32;
    /// Pixel-labelled slices added to every batch on top of batch_size - n
    /// uniformly drawn ones; 0 keeps plain uniform batches.
    int labeled_per_batch = 0;
    int epochs = 50;
    int num_kernels = 8;
    double concentration = 30.0;
    std::uint64_t seed = 0;
    int pretrain_epochs = 10;
    double pretrain_learning_rate = 1e-4;
    /// Feature vectors sampled per training slice for k-means.
    int kmeans_samples_per_image = 100;
    int kmeans_max_iterations = 100;
    /// Harvest k-means vectors only at positions with nonzero input.
    bool kmeans_nonzero_only = true;
    /// Start the feature extractor from the reconstruction-pretrained weights
    /// the kernels were fitted on, instead of a fresh initialization.
    bool pretrained_features = false;
    /// Auto: tumour presence for the whole-tumour task, sub-region presence otherwise.
    WeakLabelMode weak_labels = WeakLabelMode::Auto;
    /// Architecture; kernel count, concentration, C and K are taken from the fields above.
    model::ModelConfig model = model::ModelConfig::desk();

    double effective_lambda_weak() const;
    int weak_width() const;
    model::ModelConfig resolved_model() const;
    void validate() const;
    nlohmann::json to_json() const;
    static TrainingConfig from_json(const nlohmann::json& j);
};

/// Training slices (with the labelled subset marked) and validation volumes.
struct TrainingData {
    std::vector<data::SliceSample> train;
    std::vector<const data::VolumeRecord*> val;
};

/// Slices of the train split with a `label_fraction` pixel-labelled subset
/// drawn with the config seed; val-split volumes for model selection.
TrainingData prepare_training_data(const std::vector<data::VolumeRecord>& volumes, const TrainingConfig& config);

model::ImageSet image_set(const std::vector<data::SliceSample>& samples);

struct KernelInit {
    vmf::KernelBank bank;
    /// Reconstruction-pretrained extractor the kernels were fitted on.
    model::FeatureExtractor extractor;
    double pretrain_initial_mse = 0.0;
    std::vector<double> pretrain_epoch_mse;
    int kmeans_iterations = 0;
    double kmeans_objective = 0.0;
};

/// Reconstruction pre-training, feature harvesting and spherical k-means. Only
/// the images, seed and architecture matter, so runs that differ in labels or
/// lambda_weak can share one result.
KernelInit initialize_kernels(const std::vector<data::SliceSample>& train, const TrainingConfig& config);

struct EpochRecord {
    int epoch = 0;
    double clustering = 0.0;
    double dice = 0.0;
    double weak = 0.0;
    double total = 0.0;
    /// Steps whose batch contained at least one pixel-labelled slice.
    int dice_steps = 0;
    int steps = 0;
    std::optional<double> val_dice;
    std::vector<double> val_dice_per_class;
    double seconds = 0.0;

    nlohmann::json to_json() const;
};

struct TrainOptions {
    /// Receives one JSON line per event.
    std::ostream* log = nullptr;
    /// Skip pre-training and k-means and start from these kernels.
    const KernelInit* kernels = nullptr;
};

struct TrainResult {
    std::unique_ptr<model::ModelBundle> bundle;
    std::optional<vmf::KernelBank> bank;
    std::vector<EpochRecord> history;
    /// Epoch of the returned parameters (best validation Dice, else the last).
    int selected_epoch = 0;
    std::optional<double> selected_val_dice;
};

TrainResult train(const TrainingData& data, const TrainingConfig& config, const TrainOptions& options = {});

struct UNetTrainResult {
    std::unique_ptr<model::UNetBaseline> unet;
    std::vector<EpochRecord> history;
    int selected_epoch = 0;
    std::optional<double> selected_val_dice;
};

/// Fully supervised baseline on the pixel-labelled subset only, with the same
/// number of optimizer steps per epoch as the mixed run on all slices.
UNetTrainResult train_unet(const TrainingData& data, const TrainingConfig& config, const TrainOptions& options = {});

metrics::SlicePredictor make_predictor(model::ModelBundle& bundle, const vmf::KernelBank& bank);
metrics::SlicePredictor make_predictor(model::UNetBaseline& unet);

}  // namespace compseg::supervision
