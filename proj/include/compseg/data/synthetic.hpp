#pragma once

#include <array>
#include <cstdint>
#include <json.hpp>
#include <optional>
#include <utility>
#include <vector>

#include "compseg/data/volume.hpp"

namespace compseg::data {

enum class Tissue { Outside, WhiteMatter, GreyMatter, Csf, Edema, Enhancing, Necrotic };
inline constexpr int kTissueCount = 7;

/// Mean intensity per tissue (rows, Tissue order) and modality (T1, T1Gd, T2, FLAIR).
using ContrastTable = std::array<std::array<double, kModalities>, kTissueCount>;
ContrastTable default_contrast();

/// Parameters of the cartoon brain-tumour phantom. Lengths are fractions of
/// the in-plane image size; slice extents are fractions of the slice count.
struct SyntheticSpec {
    int train_volumes = 30;
    int val_volumes = 2;
    int test_volumes = 8;
    int slices = 24;
    int image_size = 32;
    double tumour_probability = 0.8;
    double brain_radius = 0.42;
    double edema_radius_min = 0.10;
    double edema_radius_max = 0.20;
    /// ET in-plane radius relative to ED, NE relative to ET.
    double enhancing_scale_min = 0.55;
    double enhancing_scale_max = 0.75;
    double necrotic_scale_min = 0.35;
    double necrotic_scale_max = 0.60;
    double extent_min = 0.25;
    double extent_max = 0.5;
    ContrastTable contrast = default_contrast();
    double noise = 0.05;
    double gain_jitter = 0.1;
    double bias_field = 0.1;
    std::uint64_t seed = 0;
    /// When set, every tumour-bearing volume uses this whole-tumour slice range.
    std::optional<std::pair<int, int>> forced_tumour_range;

    /// Split sizes from a total using the reference ratio.
    void set_total_volumes(int total);
    int total_volumes() const { return train_volumes + val_volumes + test_volumes; }
    void validate() const;
    nlohmann::json to_json() const;
    static SyntheticSpec from_json(const nlohmann::json& j);
    std::uint64_t hash() const;
};

/// Generates train, then val, then test volumes. Volume i is a pure function
/// of (spec, i).
std::vector<VolumeRecord> generate_synthetic_dataset(const SyntheticSpec& spec);
VolumeRecord generate_synthetic_volume(const SyntheticSpec& spec, int index, Split split);

}  // namespace compseg::data
