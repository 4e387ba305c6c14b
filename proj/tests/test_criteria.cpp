#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "oracles.hpp"
#include "prunetree/criteria.hpp"
#include "prunetree/error.hpp"
#include "prunetree/surgery.hpp"

using namespace prunetree;

namespace {

NetworkSpec test_spec() { return make_resnet_spec({3, 8, 8}, {4, 8}, {2, 2}, 4); }

ModelState random_model(std::uint64_t seed) {
    ModelState m = init_model(test_spec(), seed);
    oracle::randomize(m.params, seed + 1, 0.4);
    return m;
}

/// Zeroes the residual branch output of a block so it computes the identity.
void make_identity(ModelState& m, int stage, int block) {
    auto& c2 = m.params.blocks[stage][block].conv2;
    for (auto* v : {&c2.weight, &c2.bias, &c2.scale, &c2.shift}) std::fill(v->begin(), v->end(), 0.0f);
}

}  // namespace

TEST_CASE("mean_kl hand arithmetic") {
    Eigen::MatrixXd p(1, 2), q(1, 2);
    p << 0.9, 0.1;
    q << 0.8, 0.2;
    const double by_hand = 0.9 * std::log(0.9 / 0.8) + 0.1 * std::log(0.1 / 0.2);
    CHECK(std::abs(mean_kl(p, q) - 0.03669) < 1e-4);
    CHECK(mean_kl(p, q) == doctest::Approx(by_hand).epsilon(1e-12));
    CHECK(mean_kl(p, p) == 0.0);

    Eigen::MatrixXd z(1, 2);
    z << 1.0, 0.0;
    CHECK(std::isfinite(mean_kl(p, z)));
}

TEST_CASE("kl_score: identity-equivalent block scores zero and ranks first") {
    ModelState m = random_model(3);
    make_identity(m, 0, 1);
    const Dataset probe = oracle::random_dataset(m.spec.input, 16, 4, 2);

    CHECK(std::abs(kl_score(m, LayerBlock{0, 1}, probe).score) < 1e-9);
    CHECK(kl_score(m, LayerBlock{0, 0}, probe).score > 1e-6);

    const auto ranked = rank_structures(m, StructureKind::Layer, Criterion::KL, probe);
    REQUIRE(ranked.size() == 3);
    CHECK(ranked.front().structure == StructureId{LayerBlock{0, 1}});
    for (std::size_t i = 1; i < ranked.size(); ++i) CHECK(ranked[i - 1].score <= ranked[i].score);
}

TEST_CASE("kl_score cached path equals the direct path") {
    const ModelState m = random_model(4);
    const Dataset probe = oracle::random_dataset(m.spec.input, 12, 4, 3);
    const ActivationCache cache = forward_cached(m, probe);
    for (const StructureId id : {StructureId{LayerBlock{1, 1}}, StructureId{FilterGroup{0, 1, 1, {0, 1}}},
                                 StructureId{FilterGroup{1, 0, 2, {2, 3, 4, 5}}}}) {
        CHECK(kl_score(m, cache, id).score == doctest::Approx(kl_score(m, id, probe).score).epsilon(1e-9));
    }
}

TEST_CASE("kl_score is bit-identical on rescoring and invariant to probe order") {
    const ModelState m = random_model(5);
    const Dataset probe = oracle::random_dataset(m.spec.input, 20, 4, 4);
    const StructureId id = FilterGroup{1, 0, 1, {0, 1, 2, 3}};
    const double a = kl_score(m, id, probe).score;
    CHECK(kl_score(m, id, probe).score == a);

    std::vector<std::size_t> perm(probe.size());
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), std::mt19937_64(1));
    CHECK(kl_score(m, id, subset(probe, perm)).score == doctest::Approx(a).epsilon(1e-9));
}

TEST_CASE("kl_score rejects invalid structures") {
    const ModelState m = random_model(6);
    const Dataset probe = oracle::random_dataset(m.spec.input, 8, 4, 4);
    CHECK_THROWS_AS(kl_score(m, LayerBlock{1, 0}, probe), ValidationError);  // projection block
    CHECK_THROWS_AS(kl_score(m, LayerBlock{2, 0}, probe), ValidationError);
    CHECK_THROWS_AS(kl_score(m, FilterGroup{0, 0, 1, {0, 1, 2, 3}}, probe), ValidationError);  // empties conv
    CHECK_THROWS_AS(kl_score(m, FilterGroup{0, 0, 1, {2, 1}}, probe), ValidationError);        // unsorted
    CHECK_THROWS_AS(kl_score(m, FilterGroup{0, 0, 2, {0}}, probe), ValidationError);           // identity stream
    CHECK_THROWS_AS(kl_score(m, FilterGroup{0, 0, 1, {7}}, probe), ValidationError);
}

TEST_CASE("l1_score") {
    ModelState m = init_model(test_spec(), 1);
    auto& w = m.params.blocks[0][0].conv1.weight;
    std::fill(w.begin(), w.end(), 0.0f);
    CHECK(l1_score(m, FilterGroup{0, 0, 1, {0}}).score == 0.0);
    w[0] = 1.0f;
    w[5] = -2.0f;
    w[17] = 0.5f;
    const auto s = l1_score(m, FilterGroup{0, 0, 1, {0}});
    CHECK(s.score == 3.5);
    CHECK_FALSE(s.heuristic);
    CHECK(s.criterion == Criterion::L1);

    const ModelState r = random_model(7);
    const double a = l1_score(r, FilterGroup{1, 0, 2, {0, 1}}).score;
    const double b = l1_score(r, FilterGroup{1, 0, 2, {4, 5}}).score;
    const double ab = l1_score(r, FilterGroup{1, 0, 2, {0, 1, 4, 5}}).score;
    CHECK(ab == doctest::Approx(a + b).epsilon(1e-12));

    CHECK(l1_score(r, LayerBlock{0, 0}).heuristic);
}

TEST_CASE("rank_structures ordering") {
    const Dataset probe = oracle::random_dataset(test_spec().input, 8, 4, 4);

    SUBCASE("ties fall back to lexicographic index order") {
        ModelState m = init_model(test_spec(), 1);
        m.params = zero_parameters<float>(m.spec);
        const auto ranked = rank_structures(m, StructureKind::Filter, Criterion::L1, probe, 2);
        REQUIRE(ranked.size() == enumerate_filter_groups(m.spec, 2).size());
        for (std::size_t i = 1; i < ranked.size(); ++i)
            CHECK(order_key(ranked[i - 1].structure) < order_key(ranked[i].structure));
    }
    SUBCASE("output is a permutation of every valid structure") {
        const ModelState m = random_model(8);
        const auto ranked = rank_structures(m, StructureKind::Filter, Criterion::KL, probe, 2);
        const auto all = enumerate_filter_groups(m.spec, 2);
        CHECK(ranked.size() == all.size());
        for (const auto& g : all)
            CHECK(std::count_if(ranked.begin(), ranked.end(),
                                [&](const CriterionScore& s) { return s.structure == StructureId{g}; }) == 1);
    }
    SUBCASE("a single removable block gives a singleton list") {
        const ModelState m = init_model(make_resnet_spec({3, 8, 8}, {4, 8}, {1, 1}, 4), 1);
        const auto ranked = rank_structures(m, StructureKind::Layer, Criterion::KL, probe);
        REQUIRE(ranked.size() == 1);
        CHECK(ranked[0].structure == StructureId{LayerBlock{0, 0}});
    }
    SUBCASE("no removable block gives an empty list") {
        const ModelState m = init_model(make_resnet_spec({3, 8, 8}, {4, 8}, {1, 1}, 4), 1);
        CHECK(rank_structures(remove_block(m, LayerBlock{0, 0}), StructureKind::Layer, Criterion::KL, probe).empty());
    }
}

TEST_CASE("criterion names") {
    CHECK(parse_criterion("kl") == Criterion::KL);
    CHECK(parse_criterion("l1") == Criterion::L1);
    CHECK(std::string(to_string(Criterion::L1)) == "l1");
    CHECK_THROWS_AS(parse_criterion("taylor"), ValidationError);
}
