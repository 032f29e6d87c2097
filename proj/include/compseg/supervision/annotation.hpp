#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>

namespace compseg {

/// Internal voxel label codes.
namespace labels {
inline constexpr std::uint8_t kBackground = 0;
inline constexpr std::uint8_t kEdema = 1;      // ED
inline constexpr std::uint8_t kEnhancing = 2;  // ET
inline constexpr std::uint8_t kNecrotic = 3;   // NE
}  // namespace labels

enum class Structure { WholeTumour, Edema, Enhancing, Necrotic };

std::string to_string(Structure s);
/// True if a voxel with internal label `label` belongs to `s`.
bool contains(Structure s, std::uint8_t label);

enum class TaskMode { WholeTumour, SubRegion };

std::string to_string(TaskMode mode);
TaskMode task_mode_from_string(const std::string& s);
/// Segmentation classes including background.
int class_count(TaskMode mode);

}  // namespace compseg

namespace compseg::supervision {

/// Bottom and top slice of a structure; both absent when the structure does
/// not occur in the volume.
struct TwoPointAnnotation {
    Structure structure = Structure::WholeTumour;
    std::optional<int> bottom_slice;
    std::optional<int> top_slice;

    bool present() const { return bottom_slice.has_value(); }
    /// Throws std::invalid_argument unless 0 <= bottom <= top < slice_count
    /// (or both absent).
    void validate(int slice_count) const;
    bool operator==(const TwoPointAnnotation&) const = default;
};

/// 1 iff bottom <= slice_index <= top; 0 for an absent annotation.
int presence_from_two_point(const TwoPointAnnotation& annotation, int slice_index, int slice_count);

/// Min/max slice of an S x H x W label volume containing `structure`.
TwoPointAnnotation two_point_from_mask(std::span<const std::uint8_t> volume_mask, int slices, int height, int width,
                                       Structure structure);

}  // namespace compseg::supervision
