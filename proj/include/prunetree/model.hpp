#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "prunetree/network.hpp"

namespace prunetree {

/// Parameters of one conv and the per-channel affine that follows it.
/// weight is laid out out x in x k x k.
template <class T>
struct ConvParams {
    std::vector<T> weight;
    std::vector<T> bias;
    std::vector<T> scale;
    std::vector<T> shift;

    bool operator==(const ConvParams&) const = default;
};

template <class T>
struct BlockParams {
    ConvParams<T> conv1;
    ConvParams<T> conv2;
    std::optional<ConvParams<T>> shortcut;

    bool operator==(const BlockParams&) const = default;
};

/// Structured parameter store mirroring NetworkSpec. Declaration order (the
/// order used by for_each_tensor, checkpoints and flat views) is: stem, then
/// for each block conv1, conv2, shortcut, each as weight, bias, scale, shift;
/// finally head weight (classes x features) and head bias.
template <class T>
struct BasicParameters {
    ConvParams<T> stem;
    std::vector<std::vector<BlockParams<T>>> blocks;  // [stage][block]
    std::vector<T> head_weight;
    std::vector<T> head_bias;

    bool operator==(const BasicParameters&) const = default;
};

using Parameters = BasicParameters<float>;

template <class T, class F>
void for_each_conv(BasicParameters<T>& p, F&& f) {
    f(p.stem);
    for (auto& st : p.blocks)
        for (auto& b : st) {
            f(b.conv1);
            f(b.conv2);
            if (b.shortcut) f(*b.shortcut);
        }
}

template <class T, class F>
void for_each_tensor(BasicParameters<T>& p, F&& f) {
    for_each_conv(p, [&](ConvParams<T>& c) {
        f(c.weight);
        f(c.bias);
        f(c.scale);
        f(c.shift);
    });
    f(p.head_weight);
    f(p.head_bias);
}

template <class T, class F>
void for_each_tensor(const BasicParameters<T>& p, F&& f) {
    for_each_tensor(const_cast<BasicParameters<T>&>(p),
                    [&](std::vector<T>& v) { f(static_cast<const std::vector<T>&>(v)); });
}

/// Zero-filled parameter store with the exact shapes `spec` declares.
template <class T>
BasicParameters<T> zero_parameters(const NetworkSpec& spec);

template <class To, class From>
BasicParameters<To> cast_parameters(const BasicParameters<From>& p) {
    BasicParameters<To> out;
    auto conv = [](const ConvParams<From>& c) {
        ConvParams<To> r;
        r.weight.assign(c.weight.begin(), c.weight.end());
        r.bias.assign(c.bias.begin(), c.bias.end());
        r.scale.assign(c.scale.begin(), c.scale.end());
        r.shift.assign(c.shift.begin(), c.shift.end());
        return r;
    };
    out.stem = conv(p.stem);
    for (const auto& st : p.blocks) {
        auto& dst = out.blocks.emplace_back();
        for (const auto& b : st) {
            BlockParams<To> bp{conv(b.conv1), conv(b.conv2), std::nullopt};
            if (b.shortcut) bp.shortcut = conv(*b.shortcut);
            dst.push_back(std::move(bp));
        }
    }
    out.head_weight.assign(p.head_weight.begin(), p.head_weight.end());
    out.head_bias.assign(p.head_bias.begin(), p.head_bias.end());
    return out;
}

/// Throws StructuralError if any tensor's size disagrees with the spec.
template <class T>
void check_parameter_shapes(const NetworkSpec& spec, const BasicParameters<T>& p);

std::size_t parameter_count(const NetworkSpec& spec);

struct ModelState {
    NetworkSpec spec;
    Parameters params;
    std::uint64_t rng_seed = 0;
    std::uint64_t epoch_counter = 0;

    bool operator==(const ModelState&) const = default;
};

/// He-normal conv and dense weights (std = sqrt(2 / fan_in)), zero biases,
/// unit affine scales and zero shifts. Deterministic in (spec, seed).
ModelState init_model(const NetworkSpec& spec, std::uint64_t seed);

/// Every parameter value in declaration order.
std::vector<float> flat_parameters(const ModelState& model);

}  // namespace prunetree
