#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "compseg/data/volume.hpp"
#include "compseg/tensor.hpp"

namespace compseg::metrics {

/// Binary S x H x W volume.
struct MaskVolume {
    int slices = 0;
    int height = 0;
    int width = 0;
    std::vector<std::uint8_t> voxels;

    MaskVolume() = default;
    MaskVolume(int s, int h, int w) : slices(s), height(h), width(w), voxels(static_cast<std::size_t>(s) * h * w, 0) {}
    std::size_t size() const { return voxels.size(); }
    std::size_t index(int s, int y, int x) const { return (static_cast<std::size_t>(s) * height + y) * width + x; }
    bool same_shape(const MaskVolume& o) const { return slices == o.slices && height == o.height && width == o.width; }
    bool empty() const;
};

/// 100 * 2|P & G| / (|P| + |G|); 100 when both masks are empty.
double dice_score_volume(const MaskVolume& pred, const MaskVolume& gt);

/// Foreground voxels with at least one background 6-neighbour. Voxels on the
/// volume border count as having background outside.
MaskVolume boundary(const MaskVolume& mask);

/// Exact squared Euclidean distance from every voxel to the nearest set voxel
/// of `mask` (infinity if the mask is empty).
std::vector<double> squared_distance_transform(const MaskVolume& mask);

/// Linear interpolation between order statistics; `values` need not be sorted.
double percentile(std::vector<double> values, double q);

/// Symmetric 95th-percentile surface distance in voxel units. 0 when both
/// masks are empty; nullopt (undefined) when exactly one is empty.
std::optional<double> hausdorff95(const MaskVolume& pred, const MaskVolume& gt);

/// Maximum surface distance, with the same empty-mask policy.
std::optional<double> hausdorff_max(const MaskVolume& pred, const MaskVolume& gt);

struct ClassMetrics {
    double dice = 0.0;
    std::optional<double> hd95;
};

struct VolumeMetrics {
    std::string volume_id;
    std::vector<ClassMetrics> classes;
};

struct ClassAggregate {
    std::string name;
    double dice_mean = 0.0;
    double dice_std = 0.0;
    double hd_mean = 0.0;
    double hd_std = 0.0;
    /// Volumes whose HD95 was undefined and left out of the HD statistics.
    int hd_excluded = 0;
    int volumes = 0;
};

/// Std is the population standard deviation across volumes.
struct MetricsReport {
    TaskMode task_mode = TaskMode::WholeTumour;
    std::vector<std::string> class_names;
    std::vector<VolumeMetrics> per_volume;
    std::vector<ClassAggregate> aggregate;

    /// Mean Dice over the evaluated classes.
    double mean_dice() const;
};

/// Structures scored for a task: WT, or ED/ET/NE.
std::vector<Structure> evaluated_structures(TaskMode mode);

/// Maps a batch of B x 4 x H x W images to B x H x W class indices.
using SlicePredictor = std::function<std::vector<std::uint8_t>(const Tensor& images)>;

/// Predicts every slice of every volume, stacks the class maps and scores
/// each evaluated structure per volume.
MetricsReport evaluate_volumes(std::span<const data::VolumeRecord* const> volumes, const SlicePredictor& predict,
                               TaskMode mode, int batch_size = 32);

/// Scores precomputed predictions (S x H x W class indices per volume).
MetricsReport score_predictions(std::span<const data::VolumeRecord* const> volumes,
                                const std::vector<std::vector<std::uint8_t>>& predictions, TaskMode mode);

/// Per-class argmax of a B x C x H x W probability tensor.
std::vector<std::uint8_t> argmax_classes(const Tensor& probabilities);

/// "85.64_9.8": mean with two decimals, std with one.
std::string mean_std(double mean, double std);

struct TableRow {
    std::string method;
    std::vector<std::string> cells;
};

/// Fixed-width text table with a header row.
std::string format_table(const std::vector<std::string>& columns, const std::vector<TableRow>& rows);

/// Dice and HD cells for each class of the report, in class order.
std::vector<std::string> report_cells(const MetricsReport& report);
std::vector<std::string> report_columns(const MetricsReport& report, const std::string& suffix = "");

/// CSV with header method,label_fraction,volume_id,class,dice,hd95; undefined
/// HD95 values are written as "nan".
std::string metrics_csv_header();
std::string metrics_csv_rows(const MetricsReport& report, const std::string& method, double label_fraction);

}  // namespace compseg::metrics
