#include "compseg/metrics/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace compseg::metrics {

namespace {

void require_same_shape(const MaskVolume& a, const MaskVolume& b, const char* op) {
    if (!a.same_shape(b) || a.voxels.size() != b.voxels.size())
        throw std::invalid_argument(std::string(op) + ": mask shapes differ");
}

constexpr double kInf = std::numeric_limits<double>::infinity();

// Lower envelope of parabolas over one line, in place.
void distance_transform_1d(std::vector<double>& f, std::vector<double>& d, std::vector<int>& v, std::vector<double>& z) {
    const int n = static_cast<int>(f.size());
    int k = 0;
    int first = 0;
    while (first < n && !std::isfinite(f[first])) ++first;
    if (first == n) return;
    v[0] = first;
    z[0] = -kInf;
    z[1] = kInf;
    for (int q = first + 1; q < n; ++q) {
        if (!std::isfinite(f[q])) continue;
        double s;
        while (true) {
            const int p = v[k];
            s = ((f[q] + double(q) * q) - (f[p] + double(p) * p)) / (2.0 * (q - p));
            if (s <= z[k] && k > 0) {
                --k;
                continue;
            }
            break;
        }
        if (s <= z[k]) {
            v[k] = q;
            z[k + 1] = kInf;
            continue;
        }
        ++k;
        v[k] = q;
        z[k] = s;
        z[k + 1] = kInf;
    }
    k = 0;
    for (int q = 0; q < n; ++q) {
        while (z[k + 1] < q) ++k;
        const double dq = q - v[k];
        d[q] = dq * dq + f[v[k]];
    }
    f.swap(d);
}

std::vector<double> directed_distances(const MaskVolume& from_boundary, const std::vector<double>& to_sq_dt) {
    std::vector<double> out;
    for (std::size_t i = 0; i < from_boundary.size(); ++i)
        if (from_boundary.voxels[i]) out.push_back(std::sqrt(to_sq_dt[i]));
    return out;
}

template <typename Reduce>
std::optional<double> surface_distance(const MaskVolume& pred, const MaskVolume& gt, Reduce reduce) {
    require_same_shape(pred, gt, "hausdorff");
    const bool pe = pred.empty();
    const bool ge = gt.empty();
    if (pe && ge) return 0.0;
    if (pe || ge) return std::nullopt;
    const MaskVolume bp = boundary(pred);
    const MaskVolume bg = boundary(gt);
    const double a = reduce(directed_distances(bp, squared_distance_transform(bg)));
    const double b = reduce(directed_distances(bg, squared_distance_transform(bp)));
    return std::max(a, b);
}

std::pair<double, double> mean_and_std(const std::vector<double>& v) {
    if (v.empty()) return {std::nan(""), std::nan("")};
    const double mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
    double ss = 0.0;
    for (double x : v) ss += (x - mean) * (x - mean);
    return {mean, std::sqrt(ss / static_cast<double>(v.size()))};
}

std::string fixed(double v, int precision) {
    if (!std::isfinite(v)) return "nan";
    std::ostringstream os;
    os << std::fixed << std::setprecision(precision) << v;
    return os.str();
}

}  // namespace

bool MaskVolume::empty() const {
    return std::none_of(voxels.begin(), voxels.end(), [](std::uint8_t v) { return v != 0; });
}

double dice_score_volume(const MaskVolume& pred, const MaskVolume& gt) {
    require_same_shape(pred, gt, "dice_score_volume");
    std::size_t p = 0, g = 0, both = 0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        const bool a = pred.voxels[i] != 0;
        const bool b = gt.voxels[i] != 0;
        p += a;
        g += b;
        both += a && b;
    }
    if (p + g == 0) return 100.0;
    return 100.0 * 2.0 * static_cast<double>(both) / static_cast<double>(p + g);
}

MaskVolume boundary(const MaskVolume& mask) {
    MaskVolume out(mask.slices, mask.height, mask.width);
    const auto fg = [&](int s, int y, int x) {
        if (s < 0 || y < 0 || x < 0 || s >= mask.slices || y >= mask.height || x >= mask.width) return false;
        return mask.voxels[mask.index(s, y, x)] != 0;
    };
    for (int s = 0; s < mask.slices; ++s)
        for (int y = 0; y < mask.height; ++y)
            for (int x = 0; x < mask.width; ++x) {
                if (!fg(s, y, x)) continue;
                const bool interior = fg(s - 1, y, x) && fg(s + 1, y, x) && fg(s, y - 1, x) && fg(s, y + 1, x) &&
                                      fg(s, y, x - 1) && fg(s, y, x + 1);
                out.voxels[out.index(s, y, x)] = !interior;
            }
    return out;
}

std::vector<double> squared_distance_transform(const MaskVolume& mask) {
    const int dims[3] = {mask.slices, mask.height, mask.width};
    const std::size_t strides[3] = {static_cast<std::size_t>(mask.height) * mask.width, static_cast<std::size_t>(mask.width), 1};
    std::vector<double> dt(mask.size());
    for (std::size_t i = 0; i < mask.size(); ++i) dt[i] = mask.voxels[i] ? 0.0 : kInf;
    const int longest = *std::max_element(dims, dims + 3);
    std::vector<double> f, d(longest);
    std::vector<int> v(longest);
    std::vector<double> z(longest + 1);
    for (int axis = 2; axis >= 0; --axis) {
        const int n = dims[axis];
        f.resize(n);
        d.resize(n);
        for (std::size_t base = 0; base < mask.size(); ++base) {
            // Visit each line once, from the voxel whose coordinate on `axis` is 0.
            if ((base / strides[axis]) % n != 0) continue;
            for (int i = 0; i < n; ++i) f[i] = dt[base + i * strides[axis]];
            distance_transform_1d(f, d, v, z);
            for (int i = 0; i < n; ++i) dt[base + i * strides[axis]] = f[i];
        }
    }
    return dt;
}

double percentile(std::vector<double> values, double q) {
    if (values.empty()) throw std::invalid_argument("percentile of an empty set");
    if (!(q >= 0.0 && q <= 100.0)) throw std::invalid_argument("percentile must lie in [0, 100]");
    std::sort(values.begin(), values.end());
    const double rank = q / 100.0 * static_cast<double>(values.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(rank));
    const std::size_t hi = std::min(lo + 1, values.size() - 1);
    return values[lo] + (rank - static_cast<double>(lo)) * (values[hi] - values[lo]);
}

std::optional<double> hausdorff95(const MaskVolume& pred, const MaskVolume& gt) {
    return surface_distance(pred, gt, [](std::vector<double> d) { return percentile(std::move(d), 95.0); });
}

std::optional<double> hausdorff_max(const MaskVolume& pred, const MaskVolume& gt) {
    return surface_distance(pred, gt, [](const std::vector<double>& d) { return *std::max_element(d.begin(), d.end()); });
}

double MetricsReport::mean_dice() const {
    if (aggregate.empty()) return 0.0;
    double sum = 0.0;
    for (const auto& a : aggregate) sum += a.dice_mean;
    return sum / static_cast<double>(aggregate.size());
}

std::vector<Structure> evaluated_structures(TaskMode mode) {
    if (mode == TaskMode::WholeTumour) return {Structure::WholeTumour};
    return {Structure::Edema, Structure::Enhancing, Structure::Necrotic};
}

std::vector<std::uint8_t> argmax_classes(const Tensor& p) {
    std::vector<std::uint8_t> out(static_cast<std::size_t>(p.n()) * p.plane());
    for (int b = 0; b < p.n(); ++b)
        for (std::size_t i = 0; i < p.plane(); ++i) {
            int best = 0;
            double best_v = p.channel(b, 0)[i];
            for (int c = 1; c < p.c(); ++c) {
                const double v = p.channel(b, c)[i];
                if (v > best_v) {
                    best_v = v;
                    best = c;
                }
            }
            out[b * p.plane() + i] = static_cast<std::uint8_t>(best);
        }
    return out;
}

MetricsReport score_predictions(std::span<const data::VolumeRecord* const> volumes,
                                const std::vector<std::vector<std::uint8_t>>& predictions, TaskMode mode) {
    if (volumes.empty()) throw std::invalid_argument("evaluation split is empty");
    if (predictions.size() != volumes.size()) throw std::invalid_argument("one prediction per volume is required");
    const auto structures = evaluated_structures(mode);
    MetricsReport report;
    report.task_mode = mode;
    for (Structure s : structures) report.class_names.push_back(to_string(s));
    for (std::size_t v = 0; v < volumes.size(); ++v) {
        const auto& vol = *volumes[v];
        if (predictions[v].size() != vol.mask.size())
            throw std::invalid_argument(vol.subject_id + ": prediction does not match the volume shape");
        VolumeMetrics vm{vol.subject_id, {}};
        for (std::size_t c = 0; c < structures.size(); ++c) {
            const auto predicted_class = static_cast<std::uint8_t>(mode == TaskMode::WholeTumour ? 1 : c + 1);
            MaskVolume pred(vol.slices, vol.height, vol.width), gt(vol.slices, vol.height, vol.width);
            for (std::size_t i = 0; i < vol.mask.size(); ++i) {
                pred.voxels[i] = predictions[v][i] == predicted_class;
                gt.voxels[i] = contains(structures[c], vol.mask[i]);
            }
            vm.classes.push_back({dice_score_volume(pred, gt), hausdorff95(pred, gt)});
        }
        report.per_volume.push_back(std::move(vm));
    }
    for (std::size_t c = 0; c < structures.size(); ++c) {
        ClassAggregate agg;
        agg.name = report.class_names[c];
        agg.volumes = static_cast<int>(volumes.size());
        std::vector<double> dice, hd;
        for (const auto& vm : report.per_volume) {
            dice.push_back(vm.classes[c].dice);
            if (vm.classes[c].hd95)
                hd.push_back(*vm.classes[c].hd95);
            else
                ++agg.hd_excluded;
        }
        std::tie(agg.dice_mean, agg.dice_std) = mean_and_std(dice);
        std::tie(agg.hd_mean, agg.hd_std) = mean_and_std(hd);
        report.aggregate.push_back(agg);
    }
    return report;
}

MetricsReport evaluate_volumes(std::span<const data::VolumeRecord* const> volumes, const SlicePredictor& predict,
                               TaskMode mode, int batch_size) {
    if (volumes.empty()) throw std::invalid_argument("evaluation split is empty");
    if (batch_size < 1) throw std::invalid_argument("batch size must be positive");
    std::vector<std::vector<std::uint8_t>> predictions;
    for (const auto* vol : volumes) {
        std::vector<std::uint8_t> pred;
        pred.reserve(vol->mask.size());
        for (int s0 = 0; s0 < vol->slices; s0 += batch_size) {
            const int count = std::min(batch_size, vol->slices - s0);
            Tensor images(count, data::kModalities, vol->height, vol->width);
            for (int b = 0; b < count; ++b)
                for (int m = 0; m < data::kModalities; ++m)
                    std::copy_n(vol->modality_slice(m, s0 + b), vol->plane(), images.channel(b, m));
            const auto classes = predict(images);
            if (classes.size() != static_cast<std::size_t>(count) * vol->plane())
                throw std::runtime_error("predictor returned the wrong number of pixels");
            pred.insert(pred.end(), classes.begin(), classes.end());
        }
        predictions.push_back(std::move(pred));
    }
    return score_predictions(volumes, predictions, mode);
}

std::string mean_std(double mean, double std) { return fixed(mean, 2) + "_" + fixed(std, 1); }

std::string format_table(const std::vector<std::string>& columns, const std::vector<TableRow>& rows) {
    std::vector<std::size_t> width(columns.size() + 1, 6);
    width[0] = std::string("Method").size();
    for (const auto& r : rows) width[0] = std::max(width[0], r.method.size());
    for (std::size_t c = 0; c < columns.size(); ++c) {
        width[c + 1] = std::max(width[c + 1], columns[c].size());
        for (const auto& r : rows)
            if (c < r.cells.size()) width[c + 1] = std::max(width[c + 1], r.cells[c].size());
    }
    std::ostringstream os;
    const auto line = [&](const std::string& first, const std::vector<std::string>& cells) {
        os << std::left << std::setw(static_cast<int>(width[0])) << first;
        for (std::size_t c = 0; c < columns.size(); ++c)
            os << " | " << std::setw(static_cast<int>(width[c + 1])) << (c < cells.size() ? cells[c] : "");
        os << "\n";
    };
    line("Method", columns);
    std::size_t total = width[0];
    for (std::size_t c = 1; c < width.size(); ++c) total += width[c] + 3;
    os << std::string(total, '-') << "\n";
    for (const auto& r : rows) line(r.method, r.cells);
    return os.str();
}

std::vector<std::string> report_columns(const MetricsReport& report, const std::string& suffix) {
    std::vector<std::string> cols;
    for (const auto& name : report.class_names) {
        cols.push_back(name + " Dice" + suffix);
        cols.push_back(name + " HD" + suffix);
    }
    return cols;
}

std::vector<std::string> report_cells(const MetricsReport& report) {
    std::vector<std::string> cells;
    for (const auto& a : report.aggregate) {
        cells.push_back(mean_std(a.dice_mean, a.dice_std));
        cells.push_back(mean_std(a.hd_mean, a.hd_std));
    }
    return cells;
}

std::string metrics_csv_header() { return "method,label_fraction,volume_id,class,dice,hd95\n"; }

std::string metrics_csv_rows(const MetricsReport& report, const std::string& method, double label_fraction) {
    std::ostringstream os;
    os << std::setprecision(10);
    for (const auto& vm : report.per_volume)
        for (std::size_t c = 0; c < vm.classes.size(); ++c) {
            os << method << "," << label_fraction << "," << vm.volume_id << "," << report.class_names[c] << ","
               << vm.classes[c].dice << ",";
            if (vm.classes[c].hd95)
                os << *vm.classes[c].hd95;
            else
                os << "nan";
            os << "\n";
        }
    return os.str();
}

}  // namespace compseg::metrics
