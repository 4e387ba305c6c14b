#include "doctest.h"

#include <cmath>

#include "oracles.hpp"
#include "prunetree/error.hpp"
#include "prunetree/substrate.hpp"

using namespace prunetree;

namespace {

NetworkSpec small_spec(int classes = 4) { return make_resnet_spec({3, 8, 8}, {4, 8}, {2, 2}, classes); }

/// 1x1 stem straight into the head: effectively a one-hidden-layer MLP.
NetworkSpec dense_spec() {
    NetworkSpec s;
    s.input = {2, 1, 1};
    s.stem = ConvSpec{2, 8, 1, 1, 0};
    s.head = {8, 2};
    return s;
}

}  // namespace

TEST_CASE("init_model is deterministic in the seed") {
    const auto a = init_model(small_spec(), 1);
    const auto b = init_model(small_spec(), 1);
    const auto c = init_model(small_spec(), 2);
    CHECK(a.params == b.params);
    CHECK(flat_parameters(a) != flat_parameters(c));
    CHECK(flat_parameters(a).size() == parameter_count(a.spec));
    for (float s : a.params.stem.scale) CHECK(s == 1.0f);
    for (float s : a.params.stem.shift) CHECK(s == 0.0f);
}

TEST_CASE("forward shapes and zero propagation") {
    ModelState m = init_model(small_spec(), 1);
    const Dataset one = oracle::random_dataset(m.spec.input, 1, 4, 5);
    const ForwardOutput out = forward(m, ImageBatch::of(one));
    CHECK(out.logits.rows() == 1);
    CHECK(out.logits.cols() == 4);
    CHECK(out.rep.cols() == m.spec.representation_dim());

    m.params = zero_parameters<float>(m.spec);
    Dataset zeros = one;
    std::fill(zeros.images.begin(), zeros.images.end(), 0.0f);
    const ForwardOutput z = forward(m, ImageBatch::of(zeros));
    CHECK(z.logits.cwiseAbs().maxCoeff() == 0.0f);
}

TEST_CASE("forward matches a straight-line reimplementation") {
    for (std::uint64_t seed : {1u, 2u, 3u}) {
        ModelState m = init_model(small_spec(), seed);
        oracle::randomize(m.params, seed + 100, 0.3);
        const Dataset d = oracle::random_dataset(m.spec.input, 6, 4, seed);
        const ForwardOutput out = forward(m, ImageBatch::of(d));
        const auto ref = oracle::forward_logits(m.spec, m.params,
                                                oracle::from_images(d.images, 6, 3, 8, 8));
        for (int i = 0; i < 6; ++i)
            for (int k = 0; k < 4; ++k) CHECK(std::abs(out.logits(i, k) - ref[std::size_t(i) * 4 + k]) < 1e-5);
    }
}

TEST_CASE("forward rejects a batch of the wrong shape") {
    const ModelState m = init_model(small_spec(), 1);
    const Dataset d = oracle::random_dataset({3, 9, 8}, 2, 4, 1);
    CHECK_THROWS_AS(forward(m, ImageBatch::of(d)), StructuralError);
}

TEST_CASE("resumed forward equals the full pass") {
    ModelState m = init_model(small_spec(), 4);
    oracle::randomize(m.params, 7, 0.2);
    const Dataset d = oracle::random_dataset(m.spec.input, 5, 4, 2);
    const ActivationCache cache = forward_cached(m, d);
    const ForwardOutput full = forward(m, ImageBatch::of(d));
    CHECK((cache.logits - full.logits).cwiseAbs().maxCoeff() == 0.0f);
    for (std::size_t s = 0; s < m.spec.stages.size(); ++s)
        for (std::size_t b = 0; b <= m.spec.stages[s].blocks.size(); ++b) {
            const RowMatrix<float> r = forward_resume(m.spec, m.params, s, b, cache.input_at(s, b));
            CHECK((r - full.logits).cwiseAbs().maxCoeff() == 0.0f);
        }
}

TEST_CASE("training edge cases") {
    const ModelState m = init_model(small_spec(), 1);
    const Dataset d = oracle::random_dataset(m.spec.input, 32, 4, 3);
    TrainConfig cfg;
    cfg.batch_size = 8;

    SUBCASE("zero epochs leave everything unchanged") {
        cfg.epochs = 0;
        const ModelState t = train(m, d, cfg);
        CHECK(t == m);
    }
    SUBCASE("zero learning rate only advances the epoch counter") {
        cfg.epochs = 2;
        cfg.learning_rate = 0.0;
        const ModelState t = train(m, d, cfg);
        CHECK(t.params == m.params);
        CHECK(t.epoch_counter == m.epoch_counter + 2);
    }
    SUBCASE("identical inputs give bit-identical trajectories") {
        cfg.epochs = 2;
        CHECK(train(m, d, cfg).params == train(m, d, cfg).params);
        ModelState other = m;
        other.rng_seed = 99;
        CHECK(train(other, d, cfg).params != train(m, d, cfg).params);
    }
    SUBCASE("invalid configurations") {
        cfg.epochs = 1;
        cfg.batch_size = 33;
        CHECK_THROWS_AS(train(m, d, cfg), ValidationError);
        cfg.batch_size = 8;
        cfg.lr_schedule = {{2, 0.1}, {2, 0.01}};
        CHECK_THROWS_AS(train(m, d, cfg), ValidationError);
        cfg.lr_schedule.clear();
        cfg.momentum = 1.0;
        CHECK_THROWS_AS(train(m, d, cfg), ValidationError);
    }
    SUBCASE("a non-finite loss reports the epoch") {
        cfg.epochs = 3;
        cfg.learning_rate = 1e30;
        try {
            (void)train(m, d, cfg);
            FAIL("expected divergence");
        } catch (const TrainingDivergedError& e) {
            CHECK(e.epoch() >= 0);
            CHECK(e.epoch() < 3);
        }
    }
}

TEST_CASE("learning rate schedule multipliers") {
    TrainConfig cfg;
    cfg.learning_rate = 0.1;
    cfg.lr_schedule = {{3, 0.5}, {6, 0.1}};
    CHECK(learning_rate_at(cfg, 0) == doctest::Approx(0.1));
    CHECK(learning_rate_at(cfg, 3) == doctest::Approx(0.05));
    CHECK(learning_rate_at(cfg, 7) == doctest::Approx(0.01));
}

TEST_CASE("two separable points are fit exactly") {
    Dataset d;
    d.channels = 2;
    d.height = d.width = 1;
    d.num_classes = 2;
    d.images = {1.0f, 0.0f, 0.0f, 1.0f};
    d.labels = {0, 1};
    ModelState m = init_model(dense_spec(), 11);
    TrainConfig cfg;
    cfg.epochs = 50;
    cfg.batch_size = 2;
    cfg.learning_rate = 0.1;
    m = train(m, d, cfg);
    CHECK(evaluate(m, d) == 1.0);
}

TEST_CASE("evaluate: ties, constants, chance level") {
    ModelState m = init_model(small_spec(), 1);
    Dataset d = oracle::random_dataset(m.spec.input, 20, 4, 9);

    m.params.head_weight.assign(m.params.head_weight.size(), 0.0f);
    m.params.head_bias = {0.0f, 0.0f, 1.0f, 0.0f};
    std::fill(d.labels.begin(), d.labels.end(), 2);
    CHECK(evaluate(m, d) == 1.0);

    m.params.head_bias = {0.0f, 0.0f, 0.0f, 0.0f};  // all logits tie
    std::fill(d.labels.begin(), d.labels.end(), 0);
    CHECK(evaluate(m, d) == 1.0);
    CHECK(evaluate(m, d) == evaluate(m, d));
}

TEST_CASE("untrained 10-class net on random labels sits near chance") {
    const ModelState m = init_model(make_resnet_spec({1, 6, 6}, {4}, {1}, 10), 5);
    const Dataset d = oracle::random_dataset(m.spec.input, 10000, 10, 17);
    const double acc = evaluate(m, d);
    CHECK(acc >= 0.06);
    CHECK(acc <= 0.14);
}

TEST_CASE("extract_representation") {
    const ModelState m = init_model(small_spec(), 1);
    Dataset probe = oracle::random_dataset(m.spec.input, 4, 4, 1);
    // make image 3 a copy of image 1
    std::copy(probe.image(1).begin(), probe.image(1).end(), probe.images.begin() + 3 * probe.image_size());
    const RepMatrix r = extract_representation(m, probe);
    CHECK(r.m() == 4);
    CHECK(r.d() == m.spec.representation_dim());
    CHECK(r.data.row(1) == r.data.row(3));

    const ModelState copy = m;
    CHECK(extract_representation(copy, probe).data == r.data);

    const Dataset tiny = subset(probe, std::vector<std::size_t>{0, 1, 2});
    CHECK_THROWS_AS(extract_representation(m, tiny), PreconditionError);
}
