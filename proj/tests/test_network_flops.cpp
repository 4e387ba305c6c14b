#include "doctest.h"

#include "prunetree/error.hpp"
#include "prunetree/flops.hpp"
#include "prunetree/network.hpp"
#include "prunetree/surgery.hpp"

using namespace prunetree;

namespace {

NetworkSpec reference_spec() { return make_resnet_spec({3, 16, 16}, {8, 16, 32}, {3, 3, 3}, 4); }

// Hand-written totals for the reference net. Per identity block at C channels
// and S spatial positions: two convs 2*C*C*9*S, affine+relu after conv1 (2CS),
// affine after conv2 (CS), residual add and relu (2CS).
constexpr FlopCount kStem = 2ull * 8 * 3 * 9 * 256 + 2 * 8 * 256;
constexpr FlopCount kStage0Block = 2 * (2ull * 8 * 8 * 9 * 256) + 5 * 8 * 256;
constexpr FlopCount kStage1Proj = 2ull * 16 * 8 * 9 * 64 + 2 * 16 * 64 + 2ull * 16 * 16 * 9 * 64 + 16 * 64 +
                                  2ull * 16 * 8 * 64 + 16 * 64 + 2 * 16 * 64;
constexpr FlopCount kStage1Block = 2 * (2ull * 16 * 16 * 9 * 64) + 5 * 16 * 64;
constexpr FlopCount kStage2Proj = 2ull * 32 * 16 * 9 * 16 + 2 * 32 * 16 + 2ull * 32 * 32 * 9 * 16 + 32 * 16 +
                                  2ull * 32 * 16 * 16 + 32 * 16 + 2 * 32 * 16;
constexpr FlopCount kStage2Block = 2 * (2ull * 32 * 32 * 9 * 16) + 5 * 32 * 16;
constexpr FlopCount kHead = 32 + 2 * 32 * 4;

}  // namespace

TEST_CASE("conv and dense closed-form terms") {
    CHECK(conv_flops(ConvSpec{2, 3, 3, 1, 1}, 8, 8) == 6912);
    CHECK(dense_flops(4, 3) == 24);
}

TEST_CASE("dense-dominated spec: 1x1 stem on a 1x1 input, no stages") {
    NetworkSpec s;
    s.input = {4, 1, 1};
    s.stem = ConvSpec{4, 4, 1, 1, 0};
    s.head = {4, 3};
    validate(s);
    // stem conv 2*4*4, affine+relu 2*4, pool 4, dense 2*4*3
    CHECK(count_flops(s) == 32 + 8 + 4 + 24);
}

TEST_CASE("single-conv spec") {
    NetworkSpec s;
    s.input = {2, 8, 8};
    s.stem = ConvSpec{2, 3, 3, 1, 1};
    s.head = {3, 3};
    validate(s);
    CHECK(count_flops(s) == 6912 + 2 * 3 * 64 + 3 + 18);
}

TEST_CASE("reference net matches the hand-derived total") {
    const NetworkSpec s = reference_spec();
    const FlopCount expected =
        kStem + 3 * kStage0Block + kStage1Proj + 2 * kStage1Block + kStage2Proj + 2 * kStage2Block + kHead;
    CHECK(expected == 5216544);
    CHECK(count_flops(s) == expected);
    const FlopBreakdown b = flop_breakdown(s);
    CHECK(b.stem == kStem);
    CHECK(b.blocks[0][1] == kStage0Block);
    CHECK(b.blocks[1][0] == kStage1Proj);
    CHECK(b.blocks[2][2] == kStage2Block);
}

TEST_CASE("an extra removable block strictly increases FLOPs") {
    const NetworkSpec a = make_resnet_spec({3, 16, 16}, {8, 16}, {3, 2}, 4);
    const NetworkSpec b = make_resnet_spec({3, 16, 16}, {8, 16}, {2, 2}, 4);
    CHECK(count_flops(a) > count_flops(b));
    CHECK(count_flops(a) - count_flops(b) == kStage0Block);
}

TEST_CASE("surgery FLOP deltas equal the closed-form differences") {
    ModelState m = init_model(reference_spec(), 3);
    const FlopCount before = count_flops(m.spec);

    SUBCASE("block removal") {
        CHECK(before - count_flops(remove_block(m, LayerBlock{0, 1}).spec) == kStage0Block);
        CHECK(before - count_flops(remove_block(m, LayerBlock{2, 2}).spec) == kStage2Block);
    }
    SUBCASE("interior filters: conv1 rows, their affine/relu, conv2 input slices") {
        const FilterGroup g{0, 0, 1, {0, 1, 2, 3}};
        const FlopCount delta = 2ull * 4 * 8 * 9 * 256 + 2 * 4 * 256 + 2ull * 8 * 4 * 9 * 256;
        CHECK(before - count_flops(remove_filters(m, g).spec) == delta);
    }
    SUBCASE("stage stream filters cascade through the stage and into the next projection") {
        const FilterGroup g{1, 0, 2, {4, 5, 6, 7}};
        const FlopCount proj = 2ull * 4 * 16 * 9 * 64 + 4 * 64 + 2ull * 4 * 8 * 64 + 4 * 64 + 2 * 4 * 64;
        const FlopCount identity = 2ull * 16 * 4 * 9 * 64 + 2ull * 4 * 16 * 9 * 64 + 4 * 64 + 2 * 4 * 64;
        const FlopCount next = 2ull * 32 * 4 * 9 * 16 + 2ull * 32 * 4 * 16;
        CHECK(before - count_flops(remove_filters(m, g).spec) == proj + 2 * identity + next);
    }
    SUBCASE("last stage stream shrinks the pool and head") {
        const FilterGroup g{2, 0, 2, {0, 1, 2, 3}};
        const FlopCount proj = 2ull * 4 * 32 * 9 * 16 + 4 * 16 + 2ull * 4 * 16 * 16 + 4 * 16 + 2 * 4 * 16;
        const FlopCount identity = 2ull * 32 * 4 * 9 * 16 + 2ull * 4 * 32 * 9 * 16 + 4 * 16 + 2 * 4 * 16;
        const FlopCount head = 4 + 2 * 4 * 4;
        CHECK(before - count_flops(remove_filters(m, g).spec) == proj + 2 * identity + head);
    }
}

TEST_CASE("spec validation") {
    NetworkSpec s = reference_spec();
    CHECK_NOTHROW(validate(s));
    CHECK(s.removable_block_count() == 7);
    CHECK(s.block_count() == 9);

    SUBCASE("zero-width conv") {
        s.stages[0].blocks[0].conv1.out_channels = 0;
        CHECK_THROWS_AS(validate(s), StructuralError);
    }
    SUBCASE("identity block that changes width") {
        s.stages[0].blocks[1].conv2.out_channels = 9;
        CHECK_THROWS_AS(validate(s), StructuralError);
    }
    SUBCASE("head width mismatch") {
        s.head.in_features = 31;
        CHECK_THROWS_AS(validate(s), StructuralError);
    }
    SUBCASE("init_model rejects a broken spec") {
        s.stages[1].blocks[0].conv2.out_channels = 0;
        CHECK_THROWS_AS(init_model(s, 1), StructuralError);
    }
}

TEST_CASE("canonical spec text round-trips") {
    ModelState m = init_model(reference_spec(), 1);
    const NetworkSpec pruned = remove_filters(remove_block(m, LayerBlock{0, 2}), FilterGroup{1, 0, 2, {0, 1, 2, 3}}).spec;
    for (const NetworkSpec& s : {reference_spec(), pruned}) {
        const std::string text = to_canonical_text(s);
        CHECK(parse_spec_text(text) == s);
        CHECK(to_canonical_text(parse_spec_text(text)) == text);
    }
    CHECK_THROWS_AS(parse_spec_text("not a spec"), StructuralError);
}

TEST_CASE("stage 0 may lose every block and still run") {
    ModelState m = init_model(make_resnet_spec({3, 8, 8}, {4, 8}, {1, 1}, 2), 1);
    ModelState child = remove_block(m, LayerBlock{0, 0});
    CHECK(child.spec.stages[0].blocks.empty());
    CHECK_NOTHROW(validate(child.spec));
    CHECK(child.spec.removable_block_count() == 0);
}
