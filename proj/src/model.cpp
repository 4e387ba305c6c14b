#include "prunetree/model.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "prunetree/error.hpp"
#include "prunetree/rng.hpp"

namespace prunetree {

namespace {

template <class T>
ConvParams<T> zero_conv(const ConvSpec& c) {
    ConvParams<T> p;
    p.weight.assign(std::size_t(c.out_channels) * c.in_channels * c.kernel * c.kernel, T(0));
    p.bias.assign(c.out_channels, T(0));
    p.scale.assign(c.out_channels, T(0));
    p.shift.assign(c.out_channels, T(0));
    return p;
}

template <class T>
void check_conv(const ConvSpec& c, const ConvParams<T>& p, const std::string& where) {
    const std::size_t w = std::size_t(c.out_channels) * c.in_channels * c.kernel * c.kernel;
    const std::size_t o = c.out_channels;
    if (p.weight.size() != w || p.bias.size() != o || p.scale.size() != o || p.shift.size() != o)
        throw StructuralError(where + ": parameter tensor sizes do not match spec");
}

}  // namespace

template <class T>
BasicParameters<T> zero_parameters(const NetworkSpec& spec) {
    BasicParameters<T> p;
    p.stem = zero_conv<T>(spec.stem);
    for (const auto& st : spec.stages) {
        auto& dst = p.blocks.emplace_back();
        for (const auto& b : st.blocks) {
            BlockParams<T> bp{zero_conv<T>(b.conv1), zero_conv<T>(b.conv2), std::nullopt};
            if (b.shortcut) bp.shortcut = zero_conv<T>(*b.shortcut);
            dst.push_back(std::move(bp));
        }
    }
    p.head_weight.assign(std::size_t(spec.head.num_classes) * spec.head.in_features, T(0));
    p.head_bias.assign(spec.head.num_classes, T(0));
    return p;
}

template <class T>
void check_parameter_shapes(const NetworkSpec& spec, const BasicParameters<T>& p) {
    check_conv(spec.stem, p.stem, "stem");
    if (p.blocks.size() != spec.stages.size())
        throw StructuralError("parameter store has wrong stage count");
    for (std::size_t s = 0; s < spec.stages.size(); ++s) {
        const auto& st = spec.stages[s];
        if (p.blocks[s].size() != st.blocks.size())
            throw StructuralError("parameter store has wrong block count in stage " + std::to_string(s));
        for (std::size_t b = 0; b < st.blocks.size(); ++b) {
            const std::string where = "stage " + std::to_string(s) + " block " + std::to_string(b);
            const auto& bs = st.blocks[b];
            const auto& bp = p.blocks[s][b];
            check_conv(bs.conv1, bp.conv1, where + " conv1");
            check_conv(bs.conv2, bp.conv2, where + " conv2");
            if (bs.shortcut.has_value() != bp.shortcut.has_value())
                throw StructuralError(where + ": shortcut presence mismatch");
            if (bs.shortcut) check_conv(*bs.shortcut, *bp.shortcut, where + " shortcut");
        }
    }
    if (p.head_weight.size() != std::size_t(spec.head.num_classes) * spec.head.in_features ||
        p.head_bias.size() != std::size_t(spec.head.num_classes))
        throw StructuralError("head parameter sizes do not match spec");
}

template BasicParameters<float> zero_parameters<float>(const NetworkSpec&);
template BasicParameters<double> zero_parameters<double>(const NetworkSpec&);
template void check_parameter_shapes<float>(const NetworkSpec&, const BasicParameters<float>&);
template void check_parameter_shapes<double>(const NetworkSpec&, const BasicParameters<double>&);

std::size_t parameter_count(const NetworkSpec& spec) {
    std::size_t n = 0;
    auto conv = [&](const ConvSpec& c) {
        n += std::size_t(c.out_channels) * c.in_channels * c.kernel * c.kernel + 3 * std::size_t(c.out_channels);
    };
    conv(spec.stem);
    for (const auto& st : spec.stages)
        for (const auto& b : st.blocks) {
            conv(b.conv1);
            conv(b.conv2);
            if (b.shortcut) conv(*b.shortcut);
        }
    n += std::size_t(spec.head.num_classes) * (spec.head.in_features + 1);
    return n;
}

ModelState init_model(const NetworkSpec& spec, std::uint64_t seed) {
    validate(spec);
    ModelState m;
    m.spec = spec;
    m.rng_seed = seed;
    m.epoch_counter = 0;
    m.params = zero_parameters<float>(spec);

    Rng rng(derive_seed(seed, {stream::kInit}));
    std::normal_distribution<double> normal(0.0, 1.0);
    auto he = [&](std::vector<float>& w, int fan_in) {
        const double std = std::sqrt(2.0 / fan_in);
        for (float& x : w) x = static_cast<float>(normal(rng) * std);
    };
    auto conv = [&](const ConvSpec& c, ConvParams<float>& p) {
        he(p.weight, c.in_channels * c.kernel * c.kernel);
        std::fill(p.scale.begin(), p.scale.end(), 1.0f);
    };
    conv(spec.stem, m.params.stem);
    for (std::size_t s = 0; s < spec.stages.size(); ++s)
        for (std::size_t b = 0; b < spec.stages[s].blocks.size(); ++b) {
            const auto& bs = spec.stages[s].blocks[b];
            auto& bp = m.params.blocks[s][b];
            conv(bs.conv1, bp.conv1);
            conv(bs.conv2, bp.conv2);
            std::fill(bp.conv2.scale.begin(), bp.conv2.scale.end(), 0.0f);
            if (bs.shortcut) conv(*bs.shortcut, *bp.shortcut);
        }
    he(m.params.head_weight, spec.head.in_features);
    return m;
}

std::vector<float> flat_parameters(const ModelState& model) {
    std::vector<float> out;
    out.reserve(parameter_count(model.spec));
    for_each_tensor(model.params, [&](const std::vector<float>& v) { out.insert(out.end(), v.begin(), v.end()); });
    return out;
}

}  // namespace prunetree
