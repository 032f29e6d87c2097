#pragma once

#include <filesystem>
#include <cstdint>
#include <json.hpp>
#include <vector>

#include "compseg/data/volume.hpp"

namespace compseg::data {

inline constexpr int kManifestVersion = 1;

/// Writes <dir>/manifest.json and one <dir>/<split>/<subject>.vol file per
/// volume. `source` (generator spec, seed, ...) is stored under "source".
void save_dataset(const std::filesystem::path& dir, const std::vector<VolumeRecord>& volumes,
                  const nlohmann::json& source);

struct LoadedDataset {
    nlohmann::json manifest;
    std::vector<VolumeRecord> volumes;

    std::vector<const VolumeRecord*> split(Split s) const;
};

LoadedDataset load_dataset(const std::filesystem::path& dir);

/// FNV-1a over the raw modality and mask bytes.
std::uint64_t content_checksum(const VolumeRecord& v);

/// Manifest text as written to disk; its hash identifies the dataset.
std::string manifest_text(const std::vector<VolumeRecord>& volumes, const nlohmann::json& source);

void write_volume_file(const VolumeRecord& v, const std::filesystem::path& path);
VolumeRecord read_volume_file(const std::filesystem::path& path);

}  // namespace compseg::data
