#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <json.hpp>
#include <optional>
#include <ostream>
#include <stdexcept>
#include <string>

#include "compseg/data/synthetic.hpp"
#include "compseg/supervision/trainer.hpp"

namespace compseg::cli {

enum ExitCode : int { kOk = 0, kConfigError = 2, kMissingArtifact = 3, kRuntimeFailure = 4 };

/// Invalid flags, config values or mismatched hashes.
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
/// An input file or directory that does not exist.
struct MissingArtifact : std::runtime_error {
    using std::runtime_error::runtime_error;
};

enum class ModelChoice { Compositional, UNet };
std::string to_string(ModelChoice m);
ModelChoice model_choice_from_string(const std::string& s);

/// Config file schema (JSON object, every key optional):
///   "synthetic": SyntheticSpec fields (synth-data)
///   "training":  TrainingConfig fields (train)
///   "model":     "vmf" | "unet"
struct RunConfig {
    data::SyntheticSpec synthetic;
    supervision::TrainingConfig training;
    ModelChoice model = ModelChoice::Compositional;

    nlohmann::json to_json() const;
    /// Starts from the defaults and overrides the keys present; unknown keys are a ConfigError.
    static RunConfig from_json(const nlohmann::json& j);
};

/// Desk-scale defaults used when no config file is given.
RunConfig default_run_config();
RunConfig load_run_config(const std::filesystem::path& path);

/// $COMPSEG_OUTPUT_ROOT, else ./compseg_runs.
std::filesystem::path default_output_root();

struct SynthDataArgs {
    std::optional<std::filesystem::path> config;
    std::optional<std::uint64_t> seed;
    std::optional<int> volumes;
    std::optional<std::filesystem::path> out;
};

struct ImportBratsArgs {
    std::optional<std::filesystem::path> brats_dir;
    std::optional<std::uint64_t> seed;
    /// Load only the first n subjects (sorted by id); 0 loads all.
    int max_subjects = 0;
    int size = 128;
    std::optional<std::filesystem::path> out;
};

struct TrainArgs {
    std::optional<std::filesystem::path> config;
    std::optional<std::uint64_t> seed;
    std::optional<double> label_fraction;
    std::optional<std::string> task;
    std::optional<double> lambda_weak;
    bool no_weak = false;
    std::optional<std::string> model;
    std::optional<int> epochs;
    std::optional<std::filesystem::path> data;
    std::optional<std::filesystem::path> out;
};

struct EvalArgs {
    std::optional<std::filesystem::path> config;
    std::optional<std::filesystem::path> checkpoint;
    std::optional<std::filesystem::path> data;
    std::optional<std::filesystem::path> out;
};

struct VizArgs {
    std::optional<std::filesystem::path> checkpoint;
    std::optional<std::filesystem::path> data;
    std::optional<std::filesystem::path> out;
    /// Subject id; defaults to the first test subject.
    std::optional<std::string> volume;
    std::optional<int> slice;
};

/// Each command returns the directory it wrote and throws ConfigError,
/// MissingArtifact or another exception on failure.
std::filesystem::path synth_data(const SynthDataArgs& args, std::ostream& log);
/// Converts a directory of BraTS subject folders into a dataset directory.
std::filesystem::path import_brats(const ImportBratsArgs& args, std::ostream& log);
std::filesystem::path train(const TrainArgs& args, std::ostream& log);
std::filesystem::path eval(const EvalArgs& args, std::ostream& log);
std::filesystem::path viz_activations(const VizArgs& args, std::ostream& log);

/// Runs `body`, prints any error to `err` and maps it to an exit code.
int run_guarded(const std::function<void()>& body, std::ostream& err);

/// Loads a dataset directory and standardizes its intensities for the model.
std::vector<data::VolumeRecord> load_model_inputs(const std::filesystem::path& dir, nlohmann::json* manifest = nullptr);

/// Binary 8-bit PGM of an H x W plane, min-max scaled; a constant plane is mid-gray.
void write_pgm(const std::filesystem::path& path, const double* values, int height, int width);

}  // namespace compseg::cli
