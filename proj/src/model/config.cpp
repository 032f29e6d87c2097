#include "compseg/model/config.hpp"

#include <cstdio>
#include <stdexcept>

namespace compseg::model {

ModelConfig ModelConfig::desk(int image_size) {
    ModelConfig c;
    c.image_size = image_size;
    c.encoder_widths = {8, 16, 32};
    c.feature_dim = 16;
    c.head_widths = {16, 8};
    c.weak_widths = {8, 16};
    return c;
}

ModelConfig ModelConfig::gradient_check() {
    ModelConfig c;
    c.image_size = 16;
    c.encoder_widths = {4, 8};
    c.feature_dim = 16;
    c.num_kernels = 4;
    c.head_widths = {6, 4};
    c.weak_widths = {4, 6};
    return c;
}

void ModelConfig::validate() const {
    auto fail = [](const std::string& what) { throw std::invalid_argument("ModelConfig: " + what); };
    if (in_channels != 4) fail("input must have 4 modality channels");
    if (encoder_widths.empty()) fail("encoder needs at least one level");
    for (int w : encoder_widths)
        if (w <= 0) fail("encoder widths must be positive");
    const int stride = 1 << (encoder_widths.size() - 1);
    if (image_size <= 0 || image_size % stride != 0)
        fail("image size " + std::to_string(image_size) + " must be divisible by " + std::to_string(stride));
    if (feature_dim < 2) fail("feature dimension must be >= 2");
    if (num_kernels < 2) fail("need at least 2 kernels");
    if (!(concentration > 0.0)) fail("concentration must be positive");
    if (head_widths.size() != 2 || head_widths[0] <= 0 || head_widths[1] <= 0) fail("task head needs two positive widths");
    if (weak_widths.size() != 2 || weak_widths[0] <= 0 || weak_widths[1] <= 0)
        fail("weak classifier needs two positive widths");
    if (num_classes != 2 && num_classes != 4) fail("num_classes must be 2 or 4");
    if (weak_outputs != 1 && weak_outputs != 3) fail("weak_outputs must be 1 or 3");
    if (weak_outputs == 3 && num_classes != 4) fail("sub-region weak labels need the 4-class head");
}

nlohmann::json ModelConfig::to_json() const {
    return {{"image_size", image_size},       {"in_channels", in_channels},   {"encoder_widths", encoder_widths},
            {"feature_dim", feature_dim},     {"num_kernels", num_kernels},   {"concentration", concentration},
            {"head_widths", head_widths},     {"weak_widths", weak_widths},   {"num_classes", num_classes},
            {"weak_outputs", weak_outputs}};
}

ModelConfig ModelConfig::from_json(const nlohmann::json& j) {
    ModelConfig c;
    c.image_size = j.value("image_size", c.image_size);
    c.in_channels = j.value("in_channels", c.in_channels);
    c.encoder_widths = j.value("encoder_widths", c.encoder_widths);
    c.feature_dim = j.value("feature_dim", c.feature_dim);
    c.num_kernels = j.value("num_kernels", c.num_kernels);
    c.concentration = j.value("concentration", c.concentration);
    c.head_widths = j.value("head_widths", c.head_widths);
    c.weak_widths = j.value("weak_widths", c.weak_widths);
    c.num_classes = j.value("num_classes", c.num_classes);
    c.weak_outputs = j.value("weak_outputs", c.weak_outputs);
    c.validate();
    return c;
}

std::uint64_t ModelConfig::hash() const { return fnv1a(to_json().dump()); }

std::uint64_t fnv1a(const std::string& bytes) {
    std::uint64_t h = 1469598103934665603ull;
    for (unsigned char ch : bytes) {
        h ^= ch;
        h *= 1099511628211ull;
    }
    return h;
}

std::string hex64(std::uint64_t value) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(value));
    return buf;
}

}  // namespace compseg::model
