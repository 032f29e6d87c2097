#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <map>

#include "compseg/data/synthetic.hpp"
#include "compseg/supervision/losses.hpp"
#include "compseg/supervision/trainer.hpp"
#include "test_support.hpp"

using namespace compseg;
using namespace compseg::supervision;
using compseg::testing::central_difference;
using compseg::testing::random_tensor;
using compseg::testing::random_unit_rows;
using compseg::testing::relative_error;

namespace {

Tensor vector_tensor(std::initializer_list<double> v) {
    Tensor t(1, static_cast<int>(v.size()), 1, 1);
    std::copy(v.begin(), v.end(), t.data().begin());
    return t;
}

// B x C x H x W one-hot from per-position class draws.
Tensor random_one_hot(int b, int c, int h, int w, std::mt19937_64& rng) {
    Tensor t(b, c, h, w);
    std::uniform_int_distribution<int> cls(0, c - 1);
    for (int s = 0; s < b; ++s)
        for (std::size_t i = 0; i < t.plane(); ++i) t.channel(s, cls(rng))[i] = 1.0;
    return t;
}

// Per-position softmax of random logits, so every entry lies strictly inside (0, 1).
Tensor random_probabilities(int b, int c, int h, int w, std::mt19937_64& rng) {
    Tensor t = random_tensor(b, c, h, w, rng, -2.0, 2.0);
    for (int s = 0; s < b; ++s)
        for (std::size_t i = 0; i < t.plane(); ++i) {
            double z = 0.0;
            for (int k = 0; k < c; ++k) z += (t.channel(s, k)[i] = std::exp(t.channel(s, k)[i]));
            for (int k = 0; k < c; ++k) t.channel(s, k)[i] /= z;
        }
    return t;
}

Batch random_batch(const model::ModelConfig& mc, int size, const std::vector<bool>& labelled, std::mt19937_64& rng) {
    Batch b;
    b.images = random_tensor(size, mc.in_channels, mc.image_size, mc.image_size, rng);
    b.targets = random_one_hot(size, mc.num_classes, mc.image_size, mc.image_size, rng);
    for (int s = 0; s < size; ++s) {
        b.has_pixel_label.push_back(labelled[s] ? 1 : 0);
        if (!labelled[s]) std::fill_n(b.targets.sample(s), b.targets.sample_size(), 0.0);
    }
    b.weak = Tensor(size, mc.weak_outputs, 1, 1);
    std::bernoulli_distribution coin(0.5);
    for (auto& v : b.weak.data()) v = coin(rng) ? 1.0 : 0.0;
    return b;
}

std::string network_of(const std::string& param_name) { return param_name.substr(0, param_name.find('.')); }

data::SyntheticSpec tiny_spec() {
    data::SyntheticSpec spec;
    spec.train_volumes = 6;
    spec.val_volumes = 2;
    spec.test_volumes = 2;
    spec.slices = 8;
    spec.image_size = 16;
    spec.tumour_probability = 1.0;
    spec.seed = 11;
    return spec;
}

TrainingConfig tiny_config() {
    TrainingConfig c;
    c.model = model::ModelConfig::gradient_check();
    c.num_kernels = 4;
    c.batch_size = 8;
    c.epochs = 5;
    c.learning_rate = 3e-3;
    c.pretrain_epochs = 1;
    c.pretrain_learning_rate = 1e-3;
    c.kmeans_samples_per_image = 20;
    c.label_fraction = 0.25;
    c.seed = 5;
    return c;
}

}  // namespace

TEST_CASE("weak_loss: worked examples and shape check") {
    CHECK(weak_loss(vector_tensor({0.2}), vector_tensor({0})) == doctest::Approx(0.2).epsilon(1e-15));
    CHECK(weak_loss(vector_tensor({0.3, 0.7}), vector_tensor({0.3, 0.7})) == 0.0);
    CHECK(weak_loss(vector_tensor({0.1, 0.9, 0.5}), vector_tensor({0, 1, 1})) ==
          doctest::Approx(0.7 / 3.0).epsilon(1e-12));
    CHECK_THROWS_AS(weak_loss(vector_tensor({0.1, 0.2}), vector_tensor({0.1})), std::invalid_argument);
}

TEST_CASE("dice_loss: worked examples, range and one-hot check") {
    std::mt19937_64 rng(2);
    const Tensor target = random_one_hot(2, 3, 6, 6, rng);
    CHECK(dice_loss(target, target) < 1e-5);

    Tensor zero_fg(2, 3, 6, 6);
    for (int s = 0; s < 2; ++s) std::fill_n(zero_fg.channel(s, 0), zero_fg.plane(), 1.0);
    Tensor one_class(1, 2, 4, 4);
    std::fill_n(one_class.channel(0, 0), 16, 1.0);
    one_class.channel(0, 0)[0] = 0.0;
    one_class.channel(0, 1)[0] = 1.0;
    Tensor no_fg(1, 2, 4, 4);
    std::fill_n(no_fg.channel(0, 0), 16, 1.0);
    CHECK(dice_loss(no_fg, one_class) == doctest::Approx(1.0).epsilon(1e-5));

    // 4 predicted and 4 target foreground pixels sharing 2.
    Tensor pred(1, 2, 4, 4), tgt(1, 2, 4, 4);
    for (int i = 0; i < 16; ++i) {
        const bool p = i < 4, t = i >= 2 && i < 6;
        pred.channel(0, 1)[i] = p;
        pred.channel(0, 0)[i] = !p;
        tgt.channel(0, 1)[i] = t;
        tgt.channel(0, 0)[i] = !t;
    }
    CHECK(dice_loss(pred, tgt) == doctest::Approx(0.5).epsilon(1e-6));

    for (int trial = 0; trial < 50; ++trial) {
        const double l = dice_loss(random_probabilities(2, 3, 5, 5, rng), random_one_hot(2, 3, 5, 5, rng));
        CHECK(l >= 0.0);
        CHECK(l <= 1.0 + 1e-5);
    }

    Tensor bad = target;
    bad.data()[0] = 0.5;
    CHECK_THROWS_AS(dice_loss(target, bad), std::invalid_argument);
    CHECK_THROWS_AS(dice_loss(Tensor(1, 3, 6, 6), target), std::invalid_argument);
}

TEST_CASE("dice_loss and weak_loss gradients match finite differences") {
    std::mt19937_64 rng(3);
    for (int trial = 0; trial < 20; ++trial) {
        Tensor p = random_probabilities(2, 3, 4, 4, rng);
        const Tensor t = random_one_hot(2, 3, 4, 4, rng);
        const Tensor g = dice_loss_gradient(p, t);
        for (std::size_t i = 0; i < p.size(); ++i)
            CHECK(relative_error(g.data()[i], central_difference(p.data(), i, [&] { return dice_loss(p, t); })) < 1e-4);

        Tensor q = random_tensor(3, 2, 1, 1, rng, 0.05, 0.95);
        Tensor y(3, 2, 1, 1);
        std::bernoulli_distribution coin(0.5);
        for (auto& v : y.data()) v = coin(rng);
        const Tensor gw = weak_loss_gradient(q, y);
        for (std::size_t i = 0; i < q.size(); ++i)
            CHECK(relative_error(gw.data()[i], central_difference(q.data(), i, [&] { return weak_loss(q, y); })) < 1e-4);
    }
}

TEST_CASE("total_loss: gating, linearity and a hand-computed mixed batch") {
    std::mt19937_64 rng(4);
    const auto mc = model::ModelConfig::gradient_check();
    model::ModelBundle bundle(mc);
    bundle.init(9);
    const vmf::KernelBank bank(random_unit_rows(mc.num_kernels, mc.feature_dim, rng), 30.0);

    Batch mixed = random_batch(mc, 4, {true, true, false, false}, rng);
    const LossBreakdown l = total_loss(bundle, bank, mixed, 0.5);

    const model::ForwardPass pass = model::forward(bundle, bank, mixed.images);
    double clu = 0.0;
    for (const auto& f : pass.features) clu += vmf::clustering_loss(f, bank);
    clu /= 4.0;
    double dice = 0.0;
    for (int s = 0; s < 2; ++s) {
        Tensor p(1, mc.num_classes, mc.image_size, mc.image_size), t = p;
        std::copy_n(pass.soft_mask.sample(s), p.size(), p.sample(0));
        std::copy_n(mixed.targets.sample(s), t.size(), t.sample(0));
        dice += dice_loss(p, t) / 2.0;
    }
    double weak = 0.0;
    for (std::size_t i = 0; i < pass.presence.size(); ++i)
        weak += std::abs(pass.presence.data()[i] - mixed.weak.data()[i]) / 4.0;
    CHECK(l.labeled == 2);
    CHECK(l.lambda_dice == 1.0);
    CHECK(l.clustering == doctest::Approx(clu).epsilon(1e-12));
    CHECK(l.dice == doctest::Approx(dice).epsilon(1e-12));
    CHECK(l.weak == doctest::Approx(weak).epsilon(1e-12));
    CHECK(l.total == doctest::Approx(clu + dice + 0.5 * weak).epsilon(1e-12));

    const LossBreakdown plain = total_loss(bundle, bank, mixed, 0.0);
    CHECK(plain.total == doctest::Approx(plain.clustering + plain.dice).epsilon(1e-14));

    Batch unlabelled = mixed;
    std::fill(unlabelled.has_pixel_label.begin(), unlabelled.has_pixel_label.end(), 0);
    std::fill(unlabelled.targets.data().begin(), unlabelled.targets.data().end(), 0.0);
    const LossBreakdown u = total_loss(bundle, bank, unlabelled, 0.5);
    CHECK(u.lambda_dice == 0.0);
    CHECK(u.dice == 0.0);
    CHECK(u.labeled == 0);
    CHECK(l.total - u.total == doctest::Approx(l.dice).epsilon(1e-12));

    Batch empty;
    CHECK_THROWS_AS(total_loss(bundle, bank, empty, 0.5), std::invalid_argument);
    CHECK_THROWS_AS(total_loss(bundle, bank, mixed, -1.0), std::invalid_argument);
}

TEST_CASE("end-to-end objective gradient on 20 parameters per network") {
    std::mt19937_64 rng(5);
    const auto mc = model::ModelConfig::gradient_check();
    model::ModelBundle bundle(mc);
    bundle.init(21);
    vmf::KernelBank bank(random_unit_rows(mc.num_kernels, mc.feature_dim, rng), 30.0);
    // Lower concentration keeps activations away from saturation so the
    // difference quotient is well conditioned.
    vmf::KernelBank soft(bank.kernels(), 3.0);
    const Batch batch = random_batch(mc, 4, {true, false, true, false}, rng);
    const double lambda = 0.5;

    nn::ParamList params = bundle.parameters();
    // Nonzero biases keep raw features off the origin, where normalization is discontinuous.
    std::uniform_real_distribution<double> bias(-0.1, 0.1);
    for (auto* p : params)
        if (p->name.ends_with("bias"))
            for (auto& v : p->value) v = bias(rng);
    nn::zero_grad(params);
    const ObjectiveResult r = total_loss_backward(bundle, soft, batch, lambda);

    // The clustering term does not reach the networks, so they are compared
    // against the derivative of the remaining terms.
    auto supervised = [&] {
        const LossBreakdown l = total_loss(bundle, soft, batch, lambda);
        return l.total - l.clustering;
    };
    std::map<std::string, std::vector<std::pair<nn::Param*, std::size_t>>> by_network;
    for (auto* p : params)
        for (std::size_t i = 0; i < p->value.size(); ++i) by_network[network_of(p->name)].emplace_back(p, i);
    CHECK(by_network.size() == 3);
    for (auto& [name, entries] : by_network) {
        std::shuffle(entries.begin(), entries.end(), rng);
        int checked = 0;
        for (std::size_t e = 0; e < entries.size() && checked < 20; ++e) {
            auto [p, i] = entries[e];
            const double fd = central_difference(p->value, i, supervised);
            if (std::abs(fd) < 1e-9 && std::abs(p->grad[i]) < 1e-9) continue;
            INFO(p->name << "[" << i << "] analytic " << p->grad[i] << " fd " << fd);
            CHECK(relative_error(p->grad[i], fd) < 1e-3);
            ++checked;
        }
        CHECK(checked == 20);
    }

    auto full = [&] { return total_loss(bundle, soft, batch, lambda).total; };
    std::vector<double> k(soft.kernels().data(), soft.kernels().data() + soft.kernels().size());
    for (int t = 0; t < 20; ++t) {
        const std::size_t i = static_cast<std::size_t>(t * 7) % k.size();
        auto f = [&] {
            std::copy(k.begin(), k.end(), soft.mutable_kernels().data());
            return full();
        };
        // A small step keeps the perturbed rows within the unit-norm tolerance.
        const double fd = central_difference(k, i, f, 1e-7);
        std::copy(k.begin(), k.end(), soft.mutable_kernels().data());
        CHECK(relative_error(r.dkernels.data()[i], fd) < 1e-3);
    }
}

TEST_CASE("training config: defaults, validation and JSON round trip") {
    TrainingConfig c;
    CHECK(c.effective_lambda_weak() == 0.5);
    CHECK(c.learning_rate == 1e-4);
    c.task_mode = TaskMode::SubRegion;
    CHECK(c.effective_lambda_weak() == 0.1);
    CHECK(c.weak_width() == 3);
    c.weak_labels = WeakLabelMode::WholeTumour;
    CHECK(c.weak_width() == 1);
    c.lambda_weak = 0.0;
    c.seed = 77;
    c.labeled_per_batch = 4;
    const TrainingConfig back = TrainingConfig::from_json(c.to_json());
    CHECK(back.to_json() == c.to_json());
    CHECK(back.effective_lambda_weak() == 0.0);

    auto j = c.to_json();
    j["unknown_key"] = 1;
    CHECK_THROWS_AS(TrainingConfig::from_json(j), std::invalid_argument);
    TrainingConfig bad;
    bad.label_fraction = 0.0;
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
    bad = TrainingConfig{};
    bad.labeled_per_batch = bad.batch_size;
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
    bad = TrainingConfig{};
    bad.weak_labels = WeakLabelMode::SubRegion;
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
}

TEST_CASE("prepare_training_data: labelled subset size and split routing") {
    const auto vols = data::generate_synthetic_dataset(tiny_spec());
    TrainingConfig c = tiny_config();
    const TrainingData d = prepare_training_data(vols, c);
    CHECK(d.train.size() == 6 * 8);
    CHECK(d.val.size() == 2);
    const auto labelled = std::count_if(d.train.begin(), d.train.end(), [](const auto& s) { return s.has_pixel_label; });
    CHECK(labelled == 12);
    for (const auto* v : d.val) CHECK(v->split == data::Split::Val);
}

TEST_CASE("train: loss decreases and runs are reproducible") {
    const auto vols = data::generate_synthetic_dataset(tiny_spec());
    const TrainingConfig c = tiny_config();
    const TrainingData d = prepare_training_data(vols, c);
    std::ostringstream log;
    const TrainResult a = train(d, c, {&log, nullptr});
    REQUIRE(a.history.size() == 5);
    CHECK(a.history.back().total < a.history.front().total);
    CHECK(a.bank->is_normalized());
    REQUIRE(a.selected_val_dice.has_value());

    const TrainResult b = train(d, c, {});
    REQUIRE(b.selected_val_dice.has_value());
    CHECK(std::abs(*a.selected_val_dice - *b.selected_val_dice) < 1e-6);
    for (std::size_t e = 0; e < a.history.size(); ++e) {
        INFO(std::abs(a.history[e].total - b.history[e].total));
        CHECK(a.history[e].total == b.history[e].total);
    }

    std::istringstream lines(log.str());
    std::string line;
    std::vector<std::string> events;
    while (std::getline(lines, line)) events.push_back(nlohmann::json::parse(line).at("event"));
    REQUIRE(events.size() == 7);
    CHECK(events.front() == "kernel_init");
    CHECK(events.back() == "selected");
}

TEST_CASE("train_unet: learns from the labelled subset") {
    const auto vols = data::generate_synthetic_dataset(tiny_spec());
    TrainingConfig c = tiny_config();
    c.epochs = 4;
    const TrainingData d = prepare_training_data(vols, c);
    const UNetTrainResult r = train_unet(d, c, {});
    REQUIRE(r.history.size() == 4);
    CHECK(r.history.back().dice < r.history.front().dice);
}
