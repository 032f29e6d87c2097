#include "compseg/cli/commands.hpp"

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <numeric>
#include <sstream>

#include "compseg/data/brats.hpp"
#include "compseg/data/dataset_io.hpp"
#include "compseg/metrics/metrics.hpp"
#include "compseg/model/checkpoint.hpp"

namespace compseg::cli {

namespace fs = std::filesystem;

namespace {

constexpr const char* kCheckpointFile = "checkpoint.ckpt";

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << text;
    if (!out) throw std::runtime_error("failed writing " + path.string());
}

fs::path prepare_output(const std::optional<fs::path>& out, const std::string& command) {
    const fs::path dir = out ? *out : default_output_root() / command;
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec || !fs::is_directory(dir)) throw ConfigError("cannot create output directory " + dir.string());
    const fs::path probe = dir / ".write_probe";
    {
        std::ofstream p(probe);
        if (!p) throw ConfigError("output directory " + dir.string() + " is not writable");
    }
    fs::remove(probe, ec);
    return dir;
}

fs::path require_dataset(const std::optional<fs::path>& data) {
    if (!data) throw ConfigError("--data is required");
    if (!fs::exists(*data / "manifest.json")) throw MissingArtifact("no dataset at " + data->string());
    return *data;
}

fs::path require_checkpoint(const std::optional<fs::path>& checkpoint) {
    if (!checkpoint) throw ConfigError("--checkpoint is required");
    fs::path p = *checkpoint;
    if (fs::is_directory(p)) p /= kCheckpointFile;
    if (!fs::exists(p)) throw MissingArtifact("no checkpoint at " + p.string());
    return p;
}

// Rethrows library argument errors as config errors.
template <typename F>
auto as_config(F&& f) -> decltype(f()) {
    try {
        return f();
    } catch (const std::invalid_argument& e) {
        throw ConfigError(e.what());
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(e.what());
    }
}

std::string dataset_hash(const nlohmann::json& manifest) { return model::hex64(model::fnv1a(manifest.dump())); }

std::string method_name(ModelChoice m, double lambda_weak) {
    if (m == ModelChoice::UNet) return "unet";
    return lambda_weak == 0.0 ? "vmf-no-weak" : "vmf";
}

struct LoadedModel {
    model::Checkpoint ckpt;
    RunConfig run;
    std::unique_ptr<model::ModelBundle> bundle;
    std::unique_ptr<model::UNetBaseline> unet;

    metrics::SlicePredictor predictor() {
        if (unet) return supervision::make_predictor(*unet);
        return supervision::make_predictor(*bundle, *ckpt.bank);
    }
};

LoadedModel load_model(const fs::path& path) {
    LoadedModel m;
    try {
        m.ckpt = model::load_checkpoint(path);
    } catch (const std::exception& e) {
        throw ConfigError(e.what());
    }
    const auto& meta = m.ckpt.metadata;
    if (!meta.contains("run_config") || !meta.contains("run_config_hash"))
        throw ConfigError(path.string() + ": checkpoint has no run config");
    if (model::hex64(model::fnv1a(meta.at("run_config").dump())) != meta.at("run_config_hash").get<std::string>())
        throw ConfigError(path.string() + ": run config hash mismatch");
    m.run = RunConfig::from_json(meta.at("run_config"));
    if (m.ckpt.kind == model::ModelKind::UNet) {
        m.unet = std::make_unique<model::UNetBaseline>(m.ckpt.config);
        model::restore(m.ckpt, *m.unet);
    } else {
        if (!m.ckpt.bank) throw ConfigError(path.string() + ": compositional checkpoint without kernels");
        m.bundle = std::make_unique<model::ModelBundle>(m.ckpt.config);
        model::restore(m.ckpt, *m.bundle);
    }
    return m;
}

void check_dataset_matches(const LoadedModel& m, const nlohmann::json& manifest) {
    const auto& meta = m.ckpt.metadata;
    if (meta.contains("dataset_hash") && meta.at("dataset_hash").get<std::string>() != dataset_hash(manifest))
        throw ConfigError("dataset does not match the one the checkpoint was trained on");
}

}  // namespace

std::string to_string(ModelChoice m) { return m == ModelChoice::UNet ? "unet" : "vmf"; }

ModelChoice model_choice_from_string(const std::string& s) {
    if (s == "vmf") return ModelChoice::Compositional;
    if (s == "unet") return ModelChoice::UNet;
    throw ConfigError("unknown model '" + s + "' (expected vmf or unet)");
}

nlohmann::json RunConfig::to_json() const {
    return {{"synthetic", synthetic.to_json()}, {"training", training.to_json()}, {"model", to_string(model)}};
}

RunConfig RunConfig::from_json(const nlohmann::json& j) {
    return as_config([&] {
        if (!j.is_object()) throw ConfigError("run config must be a JSON object");
        for (const auto& [key, value] : j.items())
            if (key != "synthetic" && key != "training" && key != "model")
                throw ConfigError("run config: unknown key '" + key + "'");
        RunConfig c = default_run_config();
        if (j.contains("synthetic")) {
            nlohmann::json merged = c.synthetic.to_json();
            merged.merge_patch(j.at("synthetic"));
            c.synthetic = data::SyntheticSpec::from_json(merged);
        }
        if (j.contains("training")) {
            nlohmann::json merged = c.training.to_json();
            const auto& t = j.at("training");
            // A task switch without an explicit weight picks that task's default.
            if (t.contains("task") && !t.contains("lambda_weak")) merged.erase("lambda_weak");
            merged.merge_patch(t);
            c.training = supervision::TrainingConfig::from_json(merged);
        }
        if (j.contains("model")) c.model = model_choice_from_string(j.at("model").get<std::string>());
        c.synthetic.validate();
        c.training.validate();
        return c;
    });
}

RunConfig default_run_config() {
    RunConfig c;
    c.synthetic.set_total_volumes(80);
    c.training.model = model::ModelConfig::desk(c.synthetic.image_size);
    c.training.batch_size = 8;
    c.training.labeled_per_batch = 2;
    c.training.learning_rate = 3e-4;
    c.training.pretrain_learning_rate = 1e-3;
    c.training.pretrained_features = true;
    c.training.epochs = 8;
    return c;
}

RunConfig load_run_config(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw MissingArtifact("no config file at " + path.string());
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(path.string() + ": " + e.what());
    }
    return RunConfig::from_json(j);
}

fs::path default_output_root() {
    const char* root = std::getenv("COMPSEG_OUTPUT_ROOT");
    return root && *root ? fs::path(root) : fs::path("compseg_runs");
}

std::vector<data::VolumeRecord> load_model_inputs(const fs::path& dir, nlohmann::json* manifest) {
    data::LoadedDataset ds = data::load_dataset(dir);
    data::standardize_intensities(ds.volumes);
    if (manifest) *manifest = std::move(ds.manifest);
    return std::move(ds.volumes);
}

fs::path synth_data(const SynthDataArgs& args, std::ostream& log) {
    RunConfig rc = args.config ? load_run_config(*args.config) : default_run_config();
    as_config([&] {
        if (args.seed) rc.synthetic.seed = *args.seed;
        if (args.volumes) {
            if (*args.volumes < 3) throw ConfigError("--volumes must be at least 3");
            rc.synthetic.set_total_volumes(*args.volumes);
        }
        rc.synthetic.validate();
    });
    const fs::path out = prepare_output(args.out, "synth-data");
    const auto volumes = data::generate_synthetic_dataset(rc.synthetic);
    data::save_dataset(out, volumes, {{"generator", "synthetic"}, {"spec", rc.synthetic.to_json()},
                                      {"spec_hash", model::hex64(rc.synthetic.hash())}});
    write_text(out / "run_config.json", rc.to_json().dump(2) + "\n");
    log << "wrote " << volumes.size() << " volumes (" << rc.synthetic.train_volumes << "/" << rc.synthetic.val_volumes
        << "/" << rc.synthetic.test_volumes << ") to " << out.string() << "\n";
    return out;
}

fs::path import_brats(const ImportBratsArgs& args, std::ostream& log) {
    if (!args.brats_dir) throw ConfigError("--brats-dir is required");
    if (!fs::is_directory(*args.brats_dir)) throw MissingArtifact("no BraTS directory at " + args.brats_dir->string());
    if (args.size <= 0) throw ConfigError("--size must be positive");
    if (args.max_subjects < 0) throw ConfigError("--max-subjects must be non-negative");
    const std::uint64_t seed = args.seed.value_or(0);
    const fs::path out = prepare_output(args.out, "import-brats");
    data::BratsOptions options;
    options.output_size = args.size;
    const auto volumes = data::load_brats_dataset(*args.brats_dir, options, seed, args.max_subjects);
    data::save_dataset(out, volumes, {{"generator", "brats"}, {"seed", seed}, {"output_size", args.size}});
    log << "imported " << volumes.size() << " BraTS subjects at " << args.size << "x" << args.size << " to "
        << out.string() << "\n";
    return out;
}

fs::path train(const TrainArgs& args, std::ostream& log) {
    RunConfig rc = args.config ? load_run_config(*args.config) : default_run_config();
    as_config([&] {
        auto& t = rc.training;
        if (args.seed) t.seed = *args.seed;
        if (args.label_fraction) t.label_fraction = *args.label_fraction;
        if (args.task) {
            const TaskMode mode = task_mode_from_string(*args.task);
            if (mode != t.task_mode && !args.lambda_weak) t.lambda_weak.reset();
            t.task_mode = mode;
        }
        if (args.lambda_weak) t.lambda_weak = *args.lambda_weak;
        if (args.no_weak) {
            if (args.lambda_weak && *args.lambda_weak != 0.0) throw ConfigError("--no-weak conflicts with --lambda-weak");
            t.lambda_weak = 0.0;
        }
        if (args.epochs) t.epochs = *args.epochs;
        if (args.model) rc.model = model_choice_from_string(*args.model);
        t.validate();
    });
    const fs::path data_dir = require_dataset(args.data);
    const fs::path out = prepare_output(args.out, "train");

    nlohmann::json manifest;
    const auto volumes = load_model_inputs(data_dir, &manifest);
    if (volumes.empty()) throw ConfigError("dataset is empty");
    if (volumes.front().height != rc.training.model.image_size || volumes.front().width != rc.training.model.image_size)
        throw ConfigError("dataset slices are " + std::to_string(volumes.front().height) + "x" +
                          std::to_string(volumes.front().width) + " but the model expects " +
                          std::to_string(rc.training.model.image_size));
    const supervision::TrainingData data = as_config([&] { return supervision::prepare_training_data(volumes, rc.training); });

    const nlohmann::json run_json = rc.to_json();
    write_text(out / "run_config.json", run_json.dump(2) + "\n");
    std::ofstream train_log(out / "train_log.jsonl");
    if (!train_log) throw std::runtime_error("cannot write training log in " + out.string());

    nlohmann::json meta{{"run_config", run_json},
                        {"run_config_hash", model::hex64(model::fnv1a(run_json.dump()))},
                        {"dataset_hash", dataset_hash(manifest)},
                        {"method", method_name(rc.model, rc.training.effective_lambda_weak())}};
    supervision::TrainOptions opts{&train_log, nullptr};
    model::Checkpoint ckpt;
    nlohmann::json summary;
    if (rc.model == ModelChoice::UNet) {
        auto r = supervision::train_unet(data, rc.training, opts);
        summary = {{"selected_epoch", r.selected_epoch}};
        if (r.selected_val_dice) summary["val_dice"] = *r.selected_val_dice;
        meta["selected_epoch"] = r.selected_epoch;
        ckpt = model::make_checkpoint(*r.unet, meta);
    } else {
        auto r = supervision::train(data, rc.training, opts);
        summary = {{"selected_epoch", r.selected_epoch}};
        if (r.selected_val_dice) summary["val_dice"] = *r.selected_val_dice;
        meta["selected_epoch"] = r.selected_epoch;
        ckpt = model::make_checkpoint(*r.bundle, *r.bank, meta);
    }
    model::save_checkpoint(ckpt, out / kCheckpointFile);
    summary["method"] = meta["method"];
    write_text(out / "summary.json", summary.dump(2) + "\n");
    log << "trained " << meta["method"].get<std::string>() << " on " << data.train.size() << " slices; selected epoch "
        << summary["selected_epoch"] << "; checkpoint " << (out / kCheckpointFile).string() << "\n";
    return out;
}

fs::path eval(const EvalArgs& args, std::ostream& log) {
    const fs::path ckpt_path = require_checkpoint(args.checkpoint);
    const fs::path data_dir = require_dataset(args.data);
    LoadedModel m = load_model(ckpt_path);
    if (args.config) {
        const RunConfig given = load_run_config(*args.config);
        if (given.training.to_json() != m.run.training.to_json() || given.model != m.run.model)
            throw ConfigError("config " + args.config->string() + " does not match the checkpoint's run config");
    }
    nlohmann::json manifest;
    const auto volumes = load_model_inputs(data_dir, &manifest);
    check_dataset_matches(m, manifest);
    const fs::path out = prepare_output(args.out, "eval");

    std::vector<const data::VolumeRecord*> test;
    for (const auto& v : volumes)
        if (v.split == data::Split::Test) test.push_back(&v);
    if (test.empty()) throw ConfigError("dataset has no test split");
    const TaskMode mode = m.run.training.task_mode;
    const metrics::MetricsReport report =
        metrics::evaluate_volumes(test, m.predictor(), mode, m.run.training.batch_size);

    const std::string method = m.ckpt.metadata.value("method", "model");
    const double fraction = m.run.training.label_fraction;
    std::ostringstream label;
    label << method << " " << fraction * 100.0 << "%";
    const std::string table =
        metrics::format_table(metrics::report_columns(report), {{label.str(), metrics::report_cells(report)}});
    write_text(out / "metrics.txt", table);
    write_text(out / "metrics.csv", metrics::metrics_csv_header() + metrics::metrics_csv_rows(report, method, fraction));
    nlohmann::json agg = nlohmann::json::array();
    for (const auto& a : report.aggregate) {
        nlohmann::json row{{"class", a.name},         {"dice_mean", a.dice_mean}, {"dice_std", a.dice_std},
                           {"hd95_excluded", a.hd_excluded}, {"volumes", a.volumes}};
        row["hd95_mean"] = std::isnan(a.hd_mean) ? nlohmann::json(nullptr) : nlohmann::json(a.hd_mean);
        row["hd95_std"] = std::isnan(a.hd_std) ? nlohmann::json(nullptr) : nlohmann::json(a.hd_std);
        agg.push_back(row);
    }
    write_text(out / "metrics.json", nlohmann::json{{"method", method},
                                                    {"label_fraction", fraction},
                                                    {"task", to_string(mode)},
                                                    {"mean_dice", report.mean_dice()},
                                                    {"classes", agg}}
                                             .dump(2) + "\n");
    log << table;
    return out;
}

fs::path viz_activations(const VizArgs& args, std::ostream& log) {
    const fs::path ckpt_path = require_checkpoint(args.checkpoint);
    const fs::path data_dir = require_dataset(args.data);
    LoadedModel m = load_model(ckpt_path);
    if (!m.bundle) throw ConfigError("viz-activations needs a compositional (vmf) checkpoint");
    nlohmann::json manifest;
    const auto volumes = load_model_inputs(data_dir, &manifest);
    check_dataset_matches(m, manifest);

    const data::VolumeRecord* vol = nullptr;
    for (const auto& v : volumes) {
        if (args.volume ? v.subject_id == *args.volume : v.split == data::Split::Test) {
            vol = &v;
            break;
        }
    }
    if (!vol) throw ConfigError(args.volume ? "no subject '" + *args.volume + "' in the dataset" : "dataset has no test split");
    const int s = args.slice.value_or(vol->slices / 2);
    if (s < 0 || s >= vol->slices)
        throw ConfigError("slice " + std::to_string(s) + " out of range [0, " + std::to_string(vol->slices) + ")");

    const fs::path out = prepare_output(args.out, "viz-activations");
    const int h = vol->height, w = vol->width;
    const std::size_t plane = vol->plane();
    Tensor image(1, data::kModalities, h, w);
    for (int c = 0; c < data::kModalities; ++c)
        std::copy_n(vol->modality_slice(c, s), plane, image.channel(0, c));
    const model::ForwardPass pass = model::forward(*m.bundle, *m.ckpt.bank, image);

    nlohmann::json files = nlohmann::json::array();
    for (int c = 0; c < data::kModalities; ++c) {
        const std::string name = std::string(data::kModalityNames[c]) + ".pgm";
        write_pgm(out / name, image.channel(0, c), h, w);
        files.push_back(name);
    }
    std::vector<double> mask(plane);
    const std::uint8_t* labels = vol->mask_slice(s);
    for (std::size_t i = 0; i < plane; ++i) mask[i] = labels[i];
    write_pgm(out / "mask.pgm", mask.data(), h, w);
    files.push_back("mask.pgm");

    const int J = pass.activations.c();
    std::vector<double> mean(J);
    for (int j = 0; j < J; ++j) {
        const double* a = pass.activations.channel(0, j);
        mean[j] = std::accumulate(a, a + plane, 0.0) / static_cast<double>(plane);
    }
    std::vector<int> order(J);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return mean[a] > mean[b]; });
    nlohmann::json channels = nlohmann::json::array();
    for (int rank = 0; rank < J; ++rank) {
        const int j = order[rank];
        const std::string name = "channel_" + std::to_string(rank) + "_kernel" + std::to_string(j) + ".pgm";
        write_pgm(out / name, pass.activations.channel(0, j), h, w);
        channels.push_back({{"rank", rank}, {"kernel", j}, {"mean_activation", mean[j]}, {"file", name}});
    }
    write_text(out / "manifest.json", nlohmann::json{{"subject", vol->subject_id},
                                                     {"slice", s},
                                                     {"order", "descending mean activation"},
                                                     {"inputs", files},
                                                     {"channels", channels}}
                                              .dump(2) + "\n");
    log << "wrote " << J << " activation channels for " << vol->subject_id << " slice " << s << " to " << out.string()
        << "\n";
    return out;
}

int run_guarded(const std::function<void()>& body, std::ostream& err) {
    try {
        body();
        return kOk;
    } catch (const ConfigError& e) {
        err << "config error: " << e.what() << "\n";
        return kConfigError;
    } catch (const MissingArtifact& e) {
        err << "missing artifact: " << e.what() << "\n";
        return kMissingArtifact;
    } catch (const std::invalid_argument& e) {
        err << "config error: " << e.what() << "\n";
        return kConfigError;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return kRuntimeFailure;
    }
}

void write_pgm(const fs::path& path, const double* values, int height, int width) {
    const std::size_t n = static_cast<std::size_t>(height) * width;
    const auto [lo, hi] = std::minmax_element(values, values + n);
    std::string pixels(n, static_cast<char>(128));
    if (*hi > *lo) {
        const double scale = 255.0 / (*hi - *lo);
        for (std::size_t i = 0; i < n; ++i)
            pixels[i] = static_cast<char>(static_cast<unsigned char>(std::lround((values[i] - *lo) * scale)));
    }
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << "P5\n" << width << " " << height << "\n255\n";
    out.write(pixels.data(), static_cast<std::streamsize>(n));
    if (!out) throw std::runtime_error("failed writing " + path.string());
}

}  // namespace compseg::cli
