#include "compseg/data/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <random>
#include <stdexcept>

#include "compseg/model/config.hpp"

namespace compseg::data {

namespace {

struct Ellipsoid {
    double cy = 0, cx = 0, ry = 1, rx = 1;
    int lo = 0, hi = -1;
    int centre_y = 0, centre_x = 0;

    bool active(int s) const { return s >= lo && s <= hi; }
    bool inside(int s, int y, int x) const {
        if (!active(s)) return false;
        if (y == centre_y && x == centre_x) return true;
        const double half = 0.5 * (hi - lo);
        const double t = (s - 0.5 * (lo + hi)) / (half + 0.5);
        const double scale = std::sqrt(std::max(0.0, 1.0 - t * t));
        const double dy = (y - cy) / (ry * scale), dx = (x - cx) / (rx * scale);
        return dy * dy + dx * dx <= 1.0;
    }
};

int strict_margin(int length, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> u(0.1, 0.25);
    return std::max(1, static_cast<int>(std::lround(u(rng) * length)));
}

std::uint64_t volume_seed(std::uint64_t seed, int index) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(index), 0x5eedu};
    std::array<std::uint32_t, 2> out{};
    seq.generate(out.begin(), out.end());
    return (static_cast<std::uint64_t>(out[0]) << 32) | out[1];
}

}  // namespace

ContrastTable default_contrast() {
    return {{
        {0.00, 0.00, 0.00, 0.00},  // outside
        {0.70, 0.65, 0.35, 0.45},  // white matter
        {0.55, 0.50, 0.50, 0.55},  // grey matter
        {0.15, 0.15, 0.90, 0.10},  // CSF
        {0.45, 0.45, 0.75, 0.85},  // ED
        {0.55, 0.95, 0.60, 0.65},  // ET
        {0.25, 0.25, 0.80, 0.50},  // NE
    }};
}

void SyntheticSpec::set_total_volumes(int total) {
    const auto c = split_counts(total);
    train_volumes = c[0];
    val_volumes = c[1];
    test_volumes = c[2];
}

void SyntheticSpec::validate() const {
    auto fail = [](const std::string& what) { throw std::invalid_argument("SyntheticSpec: " + what); };
    if (train_volumes < 0 || val_volumes < 0 || test_volumes < 0 || total_volumes() == 0) fail("volume counts");
    if (slices < 3) fail("need at least 3 slices");
    if (image_size < 8) fail("image size must be >= 8");
    if (tumour_probability < 0.0 || tumour_probability > 1.0) fail("tumour probability outside [0, 1]");
    if (!(brain_radius > 0.0 && brain_radius <= 0.5)) fail("brain radius must be in (0, 0.5]");
    if (!(edema_radius_min > 0.0 && edema_radius_min <= edema_radius_max && edema_radius_max < brain_radius))
        fail("edema radii must satisfy 0 < min <= max < brain radius");
    if (!(enhancing_scale_min > 0.0 && enhancing_scale_min <= enhancing_scale_max && enhancing_scale_max < 1.0))
        fail("enhancing scale must satisfy 0 < min <= max < 1");
    if (!(necrotic_scale_min > 0.0 && necrotic_scale_min <= necrotic_scale_max && necrotic_scale_max < 1.0))
        fail("necrotic scale must satisfy 0 < min <= max < 1");
    if (!(extent_min > 0.0 && extent_min <= extent_max && extent_max <= 1.0)) fail("slice extents");
    for (const auto& row : contrast)
        for (double v : row)
            if (v < 0.0 || v > 1.0) fail("contrast intensities must lie in [0, 1]");
    if (noise < 0.0 || gain_jitter < 0.0 || gain_jitter >= 1.0 || bias_field < 0.0 || bias_field >= 1.0)
        fail("noise / gain / bias parameters");
    if (forced_tumour_range) {
        const auto [lo, hi] = *forced_tumour_range;
        if (lo < 0 || lo > hi || hi >= slices) fail("forced tumour range outside the volume");
    }
}

nlohmann::json SyntheticSpec::to_json() const {
    nlohmann::json j = {{"train_volumes", train_volumes},
                        {"val_volumes", val_volumes},
                        {"test_volumes", test_volumes},
                        {"slices", slices},
                        {"image_size", image_size},
                        {"tumour_probability", tumour_probability},
                        {"brain_radius", brain_radius},
                        {"edema_radius_min", edema_radius_min},
                        {"edema_radius_max", edema_radius_max},
                        {"enhancing_scale_min", enhancing_scale_min},
                        {"enhancing_scale_max", enhancing_scale_max},
                        {"necrotic_scale_min", necrotic_scale_min},
                        {"necrotic_scale_max", necrotic_scale_max},
                        {"extent_min", extent_min},
                        {"extent_max", extent_max},
                        {"contrast", contrast},
                        {"noise", noise},
                        {"gain_jitter", gain_jitter},
                        {"bias_field", bias_field},
                        {"seed", seed}};
    if (forced_tumour_range) j["forced_tumour_range"] = {forced_tumour_range->first, forced_tumour_range->second};
    return j;
}

SyntheticSpec SyntheticSpec::from_json(const nlohmann::json& j) {
    SyntheticSpec s;
    if (j.contains("volumes")) s.set_total_volumes(j.at("volumes").get<int>());
    s.train_volumes = j.value("train_volumes", s.train_volumes);
    s.val_volumes = j.value("val_volumes", s.val_volumes);
    s.test_volumes = j.value("test_volumes", s.test_volumes);
    s.slices = j.value("slices", s.slices);
    s.image_size = j.value("image_size", s.image_size);
    s.tumour_probability = j.value("tumour_probability", s.tumour_probability);
    s.brain_radius = j.value("brain_radius", s.brain_radius);
    s.edema_radius_min = j.value("edema_radius_min", s.edema_radius_min);
    s.edema_radius_max = j.value("edema_radius_max", s.edema_radius_max);
    s.enhancing_scale_min = j.value("enhancing_scale_min", s.enhancing_scale_min);
    s.enhancing_scale_max = j.value("enhancing_scale_max", s.enhancing_scale_max);
    s.necrotic_scale_min = j.value("necrotic_scale_min", s.necrotic_scale_min);
    s.necrotic_scale_max = j.value("necrotic_scale_max", s.necrotic_scale_max);
    s.extent_min = j.value("extent_min", s.extent_min);
    s.extent_max = j.value("extent_max", s.extent_max);
    if (j.contains("contrast")) s.contrast = j.at("contrast").get<ContrastTable>();
    s.noise = j.value("noise", s.noise);
    s.gain_jitter = j.value("gain_jitter", s.gain_jitter);
    s.bias_field = j.value("bias_field", s.bias_field);
    s.seed = j.value("seed", s.seed);
    if (j.contains("forced_tumour_range")) {
        const auto r = j.at("forced_tumour_range").get<std::vector<int>>();
        if (r.size() != 2) throw std::invalid_argument("forced_tumour_range must be [bottom, top]");
        s.forced_tumour_range = std::pair{r[0], r[1]};
    }
    s.validate();
    return s;
}

std::uint64_t SyntheticSpec::hash() const { return model::fnv1a(to_json().dump()); }

VolumeRecord generate_synthetic_volume(const SyntheticSpec& spec, int index, Split split) {
    std::mt19937_64 rng(volume_seed(spec.seed, index));
    std::uniform_real_distribution<double> u01(0.0, 1.0);
    auto uniform = [&](double lo, double hi) { return lo + (hi - lo) * u01(rng); };

    const int S = spec.slices, N = spec.image_size;
    VolumeRecord v;
    char id[32];
    std::snprintf(id, sizeof id, "synth-%04d", index);
    v.subject_id = id;
    v.split = split;
    v.slices = S;
    v.height = v.width = N;
    v.modalities.assign(static_cast<std::size_t>(kModalities) * S * N * N, 0.0f);
    v.mask.assign(static_cast<std::size_t>(S) * N * N, labels::kBackground);

    const double centre = 0.5 * (N - 1);
    const double brain_ry = spec.brain_radius * N * uniform(0.9, 1.05);
    const double brain_rx = spec.brain_radius * N * uniform(0.8, 0.95);
    const double brain_rz = 0.55 * S;
    const double mid_slice = 0.5 * (S - 1);

    // Two ventricles either side of the midline over the central slices.
    const double vent_r = 0.06 * N * uniform(0.8, 1.2);
    const double vent_dx = 0.12 * N;
    const int vent_lo = static_cast<int>(0.3 * S), vent_hi = static_cast<int>(0.7 * S);

    std::array<double, kModalities> gain{}, grad_y{}, grad_x{};
    for (int m = 0; m < kModalities; ++m) {
        gain[m] = uniform(1.0 - spec.gain_jitter, 1.0 + spec.gain_jitter);
        grad_y[m] = uniform(-1.0, 1.0) * spec.bias_field;
        grad_x[m] = uniform(-1.0, 1.0) * spec.bias_field;
    }

    Ellipsoid ed, et, ne;
    bool tumour = u01(rng) < spec.tumour_probability;
    if (tumour) {
        const double r = uniform(spec.edema_radius_min, spec.edema_radius_max) * N;
        ed.ry = r * uniform(0.85, 1.15);
        ed.rx = r * uniform(0.85, 1.15);
        const double reach = std::max(0.0, std::min(brain_rx, brain_ry) - r) * 0.7;
        ed.cy = std::round(centre + uniform(-reach, reach));
        ed.cx = std::round(centre + uniform(-reach, reach));
        if (spec.forced_tumour_range) {
            std::tie(ed.lo, ed.hi) = *spec.forced_tumour_range;
        } else {
            const int len = std::clamp(static_cast<int>(std::lround(uniform(spec.extent_min, spec.extent_max) * S)), 1, S);
            ed.lo = static_cast<int>(uniform(0.0, S - len + 1 - 1e-9));
            ed.hi = ed.lo + len - 1;
        }
        const int ed_len = ed.hi - ed.lo + 1;
        if (ed_len >= 3) {
            et = ed;
            const double f = uniform(spec.enhancing_scale_min, spec.enhancing_scale_max);
            et.ry = ed.ry * f;
            et.rx = ed.rx * f;
            et.lo = ed.lo + strict_margin(ed_len, rng);
            et.hi = ed.hi - strict_margin(ed_len, rng);
            if (et.lo > et.hi) et.lo = et.hi = (ed.lo + ed.hi) / 2;
            const int et_len = et.hi - et.lo + 1;
            if (et_len >= 3) {
                ne = et;
                const double g = uniform(spec.necrotic_scale_min, spec.necrotic_scale_max);
                ne.ry = et.ry * g;
                ne.rx = et.rx * g;
                ne.lo = et.lo + strict_margin(et_len, rng);
                ne.hi = et.hi - strict_margin(et_len, rng);
                if (ne.lo > ne.hi) ne.lo = ne.hi = (et.lo + et.hi) / 2;
            }
        }
        for (Ellipsoid* e : {&ed, &et, &ne}) {
            e->centre_y = static_cast<int>(ed.cy);
            e->centre_x = static_cast<int>(ed.cx);
        }
    }

    std::normal_distribution<double> noise(0.0, spec.noise);
    for (int s = 0; s < S; ++s) {
        const double tz = (s - mid_slice) / brain_rz;
        const double brain_scale = std::sqrt(std::max(0.0, 1.0 - tz * tz));
        for (int y = 0; y < N; ++y) {
            for (int x = 0; x < N; ++x) {
                const double ny = (y - centre) / (brain_ry * brain_scale);
                const double nx = (x - centre) / (brain_rx * brain_scale);
                const double rho = std::sqrt(ny * ny + nx * nx);
                Tissue t = Tissue::Outside;
                std::uint8_t label = labels::kBackground;
                if (rho <= 1.0) {
                    t = rho > 0.8 ? Tissue::GreyMatter : Tissue::WhiteMatter;
                    if (s >= vent_lo && s <= vent_hi) {
                        for (double side : {-1.0, 1.0}) {
                            const double dy = (y - centre) / (1.6 * vent_r), dx = (x - centre - side * vent_dx) / vent_r;
                            if (dy * dy + dx * dx <= 1.0) t = Tissue::Csf;
                        }
                    }
                }
                if (tumour && ed.inside(s, y, x)) {
                    t = Tissue::Edema;
                    label = labels::kEdema;
                    if (et.inside(s, y, x)) {
                        t = Tissue::Enhancing;
                        label = labels::kEnhancing;
                        if (ne.inside(s, y, x)) {
                            t = Tissue::Necrotic;
                            label = labels::kNecrotic;
                        }
                    }
                }
                const std::size_t voxel = (static_cast<std::size_t>(s) * N + y) * N + x;
                v.mask[voxel] = label;
                if (t == Tissue::Outside) continue;
                const double py = (y - centre) / N, px = (x - centre) / N;
                for (int m = 0; m < kModalities; ++m) {
                    const double base = spec.contrast[static_cast<int>(t)][m] * gain[m] * (1.0 + grad_y[m] * py + grad_x[m] * px);
                    v.modalities[static_cast<std::size_t>(m) * S * N * N + voxel] =
                        static_cast<float>(std::clamp(base + noise(rng), 0.0, 1.0));
                }
            }
        }
    }

    auto range_of = [&](const Ellipsoid& e, Structure st) {
        supervision::TwoPointAnnotation a{st, std::nullopt, std::nullopt};
        if (tumour && e.hi >= e.lo) {
            a.bottom_slice = e.lo;
            a.top_slice = e.hi;
        }
        return a;
    };
    v.annotations = {range_of(ed, Structure::WholeTumour), range_of(ed, Structure::Edema),
                     range_of(et, Structure::Enhancing), range_of(ne, Structure::Necrotic)};
    return v;
}

std::vector<VolumeRecord> generate_synthetic_dataset(const SyntheticSpec& spec) {
    spec.validate();
    std::vector<VolumeRecord> out;
    int index = 0;
    for (auto [split, count] : {std::pair{Split::Train, spec.train_volumes}, std::pair{Split::Val, spec.val_volumes},
                                std::pair{Split::Test, spec.test_volumes}})
        for (int k = 0; k < count; ++k) out.push_back(generate_synthetic_volume(spec, index++, split));
    return out;
}

}  // namespace compseg::data
