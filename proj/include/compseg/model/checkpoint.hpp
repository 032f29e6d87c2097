#pragma once

#include <filesystem>
#include <json.hpp>
#include <optional>
#include <string>
#include <vector>

#include "compseg/model/bundle.hpp"

namespace compseg::model {

inline constexpr std::uint32_t kCheckpointVersion = 1;

enum class ModelKind { Compositional, UNet };
std::string to_string(ModelKind kind);
ModelKind model_kind_from_string(const std::string& s);

struct NamedArray {
    std::string name;
    std::vector<double> values;
};

/// Versioned container: header JSON (kind, model config, config hash,
/// free-form metadata, kernel concentration) followed by raw float64 arrays.
struct Checkpoint {
    ModelKind kind = ModelKind::Compositional;
    ModelConfig config;
    nlohmann::json metadata = nlohmann::json::object();
    std::vector<NamedArray> arrays;
    std::optional<vmf::KernelBank> bank;
};

Checkpoint make_checkpoint(ModelBundle& bundle, const vmf::KernelBank& bank, nlohmann::json metadata = {});
Checkpoint make_checkpoint(UNetBaseline& unet, nlohmann::json metadata = {});

/// Copies stored arrays into the networks; names and sizes must match exactly.
void restore(const Checkpoint& ckpt, ModelBundle& bundle);
void restore(const Checkpoint& ckpt, UNetBaseline& unet);

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
/// Throws std::runtime_error on bad magic, unsupported version or a stored
/// config hash that does not match the stored config.
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace compseg::model
