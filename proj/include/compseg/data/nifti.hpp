#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <vector>

namespace compseg::data {

/// A 3D NIfTI-1 image, x fastest. Values are scaled by scl_slope/scl_inter on read.
struct NiftiImage {
    int nx = 0, ny = 0, nz = 0;
    std::array<float, 3> spacing{1.0f, 1.0f, 1.0f};
    std::vector<float> data;

    std::size_t index(int x, int y, int z) const {
        return (static_cast<std::size_t>(z) * ny + y) * nx + x;
    }
};

enum class NiftiType : std::int16_t { UInt8 = 2, Int16 = 4, Int32 = 8, Float32 = 16, Float64 = 64, Int8 = 256, UInt16 = 512 };

/// Reads .nii or .nii.gz (single-file NIfTI-1, either byte order).
NiftiImage read_nifti(const std::filesystem::path& path);
/// Writes a single-file NIfTI-1 image; gzip-compressed when the path ends in ".gz".
void write_nifti(const NiftiImage& image, const std::filesystem::path& path, NiftiType type = NiftiType::Float32);

}  // namespace compseg::data
