#pragma once

#include <cstdint>
#include <json.hpp>
#include <string>
#include <vector>

namespace compseg::model {

/// Architecture of the three networks plus the kernel bank shape.
struct ModelConfig {
    int image_size = 128;
    int in_channels = 4;
    std::vector<int> encoder_widths{32, 64, 128, 256};
    int feature_dim = 64;
    int num_kernels = 8;
    double concentration = 30.0;
    std::vector<int> head_widths{32, 16};
    std::vector<int> weak_widths{16, 32};
    /// Segmentation classes including background: 2 (whole tumour) or 4 (ED/ET/NE).
    int num_classes = 2;
    /// Weak-label width: 1 (tumour presence) or 3 (per sub-region presence).
    int weak_outputs = 1;

    /// Small configuration used for desk-scale training runs.
    static ModelConfig desk(int image_size = 32);
    /// Two-level, D = 16, 16x16 configuration for finite-difference checks.
    static ModelConfig gradient_check();

    void validate() const;
    std::uint64_t hash() const;
    nlohmann::json to_json() const;
    static ModelConfig from_json(const nlohmann::json& j);
};

/// FNV-1a over a byte string; used for config and manifest hashes.
std::uint64_t fnv1a(const std::string& bytes);
std::string hex64(std::uint64_t value);

}  // namespace compseg::model
