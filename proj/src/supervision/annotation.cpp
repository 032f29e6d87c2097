#include "compseg/supervision/annotation.hpp"

#include <stdexcept>

namespace compseg {

std::string to_string(Structure s) {
    switch (s) {
        case Structure::WholeTumour: return "WT";
        case Structure::Edema: return "ED";
        case Structure::Enhancing: return "ET";
        case Structure::Necrotic: return "NE";
    }
    return "?";
}

bool contains(Structure s, std::uint8_t label) {
    switch (s) {
        case Structure::WholeTumour: return label != labels::kBackground;
        case Structure::Edema: return label == labels::kEdema;
        case Structure::Enhancing: return label == labels::kEnhancing;
        case Structure::Necrotic: return label == labels::kNecrotic;
    }
    return false;
}

std::string to_string(TaskMode mode) { return mode == TaskMode::WholeTumour ? "whole" : "sub"; }

TaskMode task_mode_from_string(const std::string& s) {
    if (s == "whole") return TaskMode::WholeTumour;
    if (s == "sub") return TaskMode::SubRegion;
    throw std::invalid_argument("unknown task mode '" + s + "' (expected whole or sub)");
}

int class_count(TaskMode mode) { return mode == TaskMode::WholeTumour ? 2 : 4; }

}  // namespace compseg

namespace compseg::supervision {

void TwoPointAnnotation::validate(int slice_count) const {
    if (bottom_slice.has_value() != top_slice.has_value())
        throw std::invalid_argument("TwoPointAnnotation: bottom and top must both be present or both absent");
    if (!bottom_slice) return;
    if (*bottom_slice < 0 || *bottom_slice > *top_slice || *top_slice >= slice_count)
        throw std::invalid_argument("TwoPointAnnotation: range [" + std::to_string(*bottom_slice) + ", " +
                                    std::to_string(*top_slice) + "] invalid for " + std::to_string(slice_count) +
                                    " slices");
}

int presence_from_two_point(const TwoPointAnnotation& annotation, int slice_index, int slice_count) {
    if (slice_index < 0 || slice_index >= slice_count)
        throw std::invalid_argument("presence_from_two_point: slice " + std::to_string(slice_index) +
                                    " outside volume of " + std::to_string(slice_count) + " slices");
    if (!annotation.present()) return 0;
    return *annotation.bottom_slice <= slice_index && slice_index <= *annotation.top_slice ? 1 : 0;
}

TwoPointAnnotation two_point_from_mask(std::span<const std::uint8_t> volume_mask, int slices, int height, int width,
                                       Structure structure) {
    const std::size_t plane = static_cast<std::size_t>(height) * width;
    if (slices <= 0 || height <= 0 || width <= 0 || volume_mask.size() != plane * slices)
        throw std::invalid_argument("two_point_from_mask: mask size does not match S x H x W");
    TwoPointAnnotation a{structure, std::nullopt, std::nullopt};
    for (int s = 0; s < slices; ++s) {
        const auto slice = volume_mask.subspan(plane * s, plane);
        bool found = false;
        for (std::uint8_t v : slice) {
            if (v > labels::kNecrotic) throw std::invalid_argument("two_point_from_mask: invalid label " + std::to_string(v));
            found = found || contains(structure, v);
        }
        if (!found) continue;
        if (!a.bottom_slice) a.bottom_slice = s;
        a.top_slice = s;
    }
    return a;
}

}  // namespace compseg::supervision
