#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>
#include <set>

#include "compseg/data/samples.hpp"
#include "compseg/data/synthetic.hpp"
#include "compseg/metrics/metrics.hpp"
#include "test_support.hpp"

using namespace compseg;
using namespace compseg::metrics;
using namespace compseg::testing;

namespace {

data::VolumeRecord tumour_volume(std::uint64_t seed) {
    data::SyntheticSpec spec;
    spec.slices = 12;
    spec.image_size = 16;
    spec.tumour_probability = 1.0;
    spec.seed = seed;
    return data::generate_synthetic_volume(spec, 0, data::Split::Test);
}

}  // namespace

TEST_CASE("dice closed forms") {
    MaskVolume a(1, 4, 4), b(1, 4, 4);
    CHECK(dice_score_volume(a, b) == 100.0);
    for (int i : {0, 1, 2, 3}) a.voxels[i] = 1;
    CHECK(dice_score_volume(a, a) == 100.0);
    CHECK(dice_score_volume(a, b) == 0.0);
    for (int i : {2, 3, 4, 5}) b.voxels[i] = 1;
    CHECK(dice_score_volume(a, b) == 50.0);
    MaskVolume c(1, 4, 4), d(1, 4, 4);
    c.voxels[0] = 1;
    d.voxels[15] = 1;
    CHECK(dice_score_volume(c, d) == 0.0);
    CHECK_THROWS_AS(dice_score_volume(a, MaskVolume(1, 4, 5)), std::invalid_argument);
}

TEST_CASE("dice matches the set oracle on every 4x4 mask against 50 random partners") {
    std::mt19937 rng(2024);
    std::vector<MaskVolume> partners;
    for (int i = 0; i < 50; ++i) partners.push_back(random_mask(rng, 1, 4, 4, 0.1 + 0.8 * (i / 49.0)));
    partners[0] = MaskVolume(1, 4, 4);
    std::size_t mismatches = 0;
    MaskVolume m(1, 4, 4);
    for (int bits = 0; bits < (1 << 16); ++bits) {
        for (int i = 0; i < 16; ++i) m.voxels[i] = (bits >> i) & 1;
        for (const auto& g : partners) {
            const double d = dice_score_volume(m, g);
            mismatches += d != dice_oracle(m, g);
            mismatches += d != dice_score_volume(g, m);
        }
    }
    CHECK(mismatches == 0);
}

TEST_CASE("dice never decreases when a correct voxel is added") {
    std::mt19937 rng(5);
    for (int t = 0; t < 200; ++t) {
        auto p = random_mask(rng, 2, 5, 5, 0.3);
        const auto g = random_mask(rng, 2, 5, 5, 0.3);
        for (std::size_t i = 0; i < g.size(); ++i) {
            if (!g.voxels[i] || p.voxels[i]) continue;
            const double before = dice_score_volume(p, g);
            p.voxels[i] = 1;
            CHECK(dice_score_volume(p, g) >= before);
            break;
        }
    }
}

TEST_CASE("distance transform matches brute force") {
    std::mt19937 rng(9);
    for (int t = 0; t < 10; ++t) {
        const auto m = random_mask(rng, 4, 9, 11, 0.05);
        if (m.empty()) continue;
        std::vector<Voxel> set;
        for (int s = 0; s < 4; ++s)
            for (int y = 0; y < 9; ++y)
                for (int x = 0; x < 11; ++x)
                    if (m.voxels[m.index(s, y, x)]) set.push_back({s, y, x});
        const auto dt = squared_distance_transform(m);
        for (int s = 0; s < 4; ++s)
            for (int y = 0; y < 9; ++y)
                for (int x = 0; x < 11; ++x) {
                    const double d = nearest({s, y, x}, set);
                    CHECK(dt[m.index(s, y, x)] == doctest::Approx(d * d).epsilon(1e-12));
                }
    }
    const auto dt = squared_distance_transform(MaskVolume(2, 3, 3));
    CHECK(std::isinf(dt[0]));
}

TEST_CASE("percentile uses linear interpolation") {
    CHECK(percentile({1.0, 2.0, 3.0, 4.0}, 50.0) == 2.5);
    CHECK(percentile({5.0}, 95.0) == 5.0);
    CHECK(percentile({0.0, 10.0}, 95.0) == doctest::Approx(9.5));
    CHECK(percentile({3.0, 1.0, 2.0}, 100.0) == 3.0);
    CHECK_THROWS(percentile({}, 50.0));
}

TEST_CASE("hd95 closed forms and empty policy") {
    MaskVolume a(1, 1, 10), b(1, 1, 10);
    a.voxels[1] = 1;
    b.voxels[6] = 1;
    CHECK(*hausdorff95(a, b) == 5.0);
    CHECK(*hausdorff95(a, a) == 0.0);
    CHECK(*hausdorff95(MaskVolume(1, 1, 10), MaskVolume(1, 1, 10)) == 0.0);
    CHECK_FALSE(hausdorff95(a, MaskVolume(1, 1, 10)).has_value());
    CHECK_FALSE(hausdorff95(MaskVolume(1, 1, 10), b).has_value());
    MaskVolume c(3, 4, 4), d(3, 4, 4);
    c.voxels[c.index(0, 0, 0)] = 1;
    d.voxels[d.index(2, 3, 3)] = 1;
    CHECK(*hausdorff95(c, d) == doctest::Approx(std::sqrt(4.0 + 9.0 + 9.0)).epsilon(1e-15));
    CHECK_THROWS_AS(hausdorff95(a, c), std::invalid_argument);
}

TEST_CASE("hd95 matches the all-pairs boundary oracle on random 16x16x4 pairs") {
    std::mt19937 rng(31);
    int compared = 0;
    for (int t = 0; t < 10; ++t) {
        const auto p = random_mask(rng, 4, 16, 16, 0.1 + 0.05 * t);
        const auto g = random_mask(rng, 4, 16, 16, 0.6 - 0.05 * t);
        const auto hd = hausdorff95(p, g);
        REQUIRE(hd.has_value());
        CHECK(std::abs(*hd - hd95_oracle(p, g)) <= 1e-9);
        CHECK(*hd == *hausdorff95(g, p));
        CHECK(*hd <= *hausdorff_max(p, g));
        ++compared;
    }
    CHECK(compared == 10);
}

TEST_CASE("hd95 oracle agreement on blob-shaped masks with interiors") {
    std::mt19937 rng(77);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int t = 0; t < 5; ++t) {
        MaskVolume p(4, 16, 16), g(4, 16, 16);
        const double cy = 4 + 8 * u(rng), cx = 4 + 8 * u(rng), r = 2 + 4 * u(rng);
        for (int s = 0; s < 4; ++s)
            for (int y = 0; y < 16; ++y)
                for (int x = 0; x < 16; ++x) {
                    p.voxels[p.index(s, y, x)] = std::hypot(y - cy, x - cx) < r;
                    g.voxels[g.index(s, y, x)] = std::hypot(y - cy - 1.5, x - cx + 0.5) < r * 0.8 && s > 0;
                }
        CHECK(std::abs(*hausdorff95(p, g) - hd95_oracle(p, g)) <= 1e-9);
    }
}

TEST_CASE("evaluate: oracle predictor scores perfectly") {
    std::vector<data::VolumeRecord> vols{tumour_volume(1), tumour_volume(2), tumour_volume(3)};
    std::vector<const data::VolumeRecord*> ptrs;
    for (auto& v : vols) ptrs.push_back(&v);
    for (TaskMode mode : {TaskMode::WholeTumour, TaskMode::SubRegion}) {
        std::vector<std::vector<std::uint8_t>> preds;
        for (const auto& v : vols) {
            std::vector<std::uint8_t> p(v.mask.size());
            for (std::size_t i = 0; i < p.size(); ++i) p[i] = data::task_class(v.mask[i], mode);
            preds.push_back(p);
        }
        const auto report = score_predictions(ptrs, preds, mode);
        REQUIRE(report.aggregate.size() == (mode == TaskMode::WholeTumour ? 1u : 3u));
        for (const auto& a : report.aggregate) {
            CHECK(a.dice_mean == 100.0);
            CHECK(a.dice_std == 0.0);
            CHECK(a.hd_mean == 0.0);
            CHECK(a.hd_std == 0.0);
            CHECK(a.volumes == 3);
        }
        CHECK(report.mean_dice() == 100.0);
    }
}

TEST_CASE("evaluate: empty predictor gives zero Dice and excludes every HD") {
    std::vector<data::VolumeRecord> vols{tumour_volume(4), tumour_volume(5)};
    std::vector<const data::VolumeRecord*> ptrs{&vols[0], &vols[1]};
    int calls = 0;
    const SlicePredictor empty = [&](const Tensor& images) {
        ++calls;
        CHECK(images.c() == 4);
        return std::vector<std::uint8_t>(images.n() * images.plane(), 0);
    };
    const auto report = evaluate_volumes(ptrs, empty, TaskMode::WholeTumour, 5);
    CHECK(calls == 2 * 3);
    CHECK(report.aggregate[0].dice_mean == 0.0);
    CHECK(report.aggregate[0].hd_excluded == 2);
    CHECK(std::isnan(report.aggregate[0].hd_mean));
    CHECK(metrics_csv_rows(report, "none", 0.01).find("nan") != std::string::npos);
    CHECK_THROWS(evaluate_volumes({}, empty, TaskMode::WholeTumour));
}

TEST_CASE("report formatting") {
    CHECK(mean_std(72.314, 6.47) == "72.31_6.5");
    CHECK(mean_std(100.0, 0.0) == "100.00_0.0");
    MetricsReport r;
    r.class_names = {"WT"};
    r.aggregate = {{"WT", 72.31, 6.5, 4.25, 3.1, 0, 3}};
    r.per_volume = {{"v1", {{90.0, 2.5}}}};
    CHECK(report_columns(r, " 1%") == std::vector<std::string>{"WT Dice 1%", "WT HD 1%"});
    CHECK(report_cells(r) == std::vector<std::string>{"72.31_6.5", "4.25_3.1"});
    const auto table = format_table(report_columns(r), {{"vmf 1%", report_cells(r)}, {"unet 1%", {"60.02_11.0", "7.40_2.2"}}});
    CHECK(table.find("vmf 1%  | 72.31_6.5") != std::string::npos);
    CHECK(table.rfind("Method", 0) == 0);
    CHECK(metrics_csv_header() == "method,label_fraction,volume_id,class,dice,hd95\n");
    CHECK(metrics_csv_rows(r, "m", 0.01) == "m,0.01,v1,WT,90,2.5\n");
}

TEST_CASE("argmax over classes") {
    Tensor p(1, 3, 1, 2);
    p.at(0, 0, 0, 0) = 0.2;
    p.at(0, 1, 0, 0) = 0.5;
    p.at(0, 2, 0, 0) = 0.3;
    p.at(0, 0, 0, 1) = 0.4;
    p.at(0, 1, 0, 1) = 0.2;
    p.at(0, 2, 0, 1) = 0.4;
    CHECK(argmax_classes(p) == std::vector<std::uint8_t>{1, 0});
}
