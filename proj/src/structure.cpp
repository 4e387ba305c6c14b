#include "prunetree/structure.hpp"

#include <algorithm>
#include <sstream>

#include "prunetree/error.hpp"

namespace prunetree {

std::tuple<int, int, int, int> order_key(const StructureId& id) {
    if (const auto* l = std::get_if<LayerBlock>(&id)) return {l->stage, l->block, 0, 0};
    const auto& f = std::get<FilterGroup>(id);
    return {f.stage, f.block, f.conv, f.channels.empty() ? 0 : f.channels.front()};
}

std::string describe(const StructureId& id) {
    std::ostringstream os;
    if (const auto* l = std::get_if<LayerBlock>(&id)) {
        os << "layer(s" << l->stage << ",b" << l->block << ")";
    } else {
        const auto& f = std::get<FilterGroup>(id);
        os << "filters(s" << f.stage << ",b" << f.block << ",c" << f.conv << ",[";
        for (std::size_t i = 0; i < f.channels.size(); ++i) os << (i ? " " : "") << f.channels[i];
        os << "])";
    }
    return os.str();
}

void validate(const NetworkSpec& spec, const StructureId& id) {
    const auto [stage, block, conv, first] = order_key(id);
    (void)first;
    if (stage < 0 || std::size_t(stage) >= spec.stages.size())
        throw ValidationError(describe(id) + ": stage out of range");
    const auto& st = spec.stages[stage];
    if (block < 0 || std::size_t(block) >= st.blocks.size())
        throw ValidationError(describe(id) + ": block out of range");
    const auto& blk = st.blocks[block];
    if (std::holds_alternative<LayerBlock>(id)) {
        if (!blk.removable()) throw ValidationError(describe(id) + ": block has a projection shortcut");
        return;
    }
    const auto& f = std::get<FilterGroup>(id);
    int width = 0;
    if (conv == 1) {
        width = blk.conv1.out_channels;
    } else if (conv == 2) {
        if (blk.removable())
            throw ValidationError(describe(id) + ": conv2 of an identity-shortcut block cannot lose filters");
        width = blk.conv2.out_channels;
    } else {
        throw ValidationError(describe(id) + ": conv index must be 1 or 2");
    }
    if (f.channels.empty()) throw ValidationError(describe(id) + ": empty channel group");
    for (std::size_t i = 0; i < f.channels.size(); ++i) {
        if (f.channels[i] < 0 || f.channels[i] >= width)
            throw ValidationError(describe(id) + ": channel index out of range");
        if (i > 0 && f.channels[i] <= f.channels[i - 1])
            throw ValidationError(describe(id) + ": channels must be distinct and ascending");
    }
    if (int(f.channels.size()) >= width)
        throw ValidationError(describe(id) + ": removal would leave the conv without channels");
}

std::vector<LayerBlock> enumerate_layers(const NetworkSpec& spec) {
    std::vector<LayerBlock> out;
    for (std::size_t s = 0; s < spec.stages.size(); ++s)
        for (std::size_t b = 0; b < spec.stages[s].blocks.size(); ++b)
            if (spec.stages[s].blocks[b].removable()) out.push_back({int(s), int(b)});
    return out;
}

std::vector<FilterGroup> enumerate_filter_groups(const NetworkSpec& spec, int group_size) {
    if (group_size <= 0) throw ValidationError("filter group size must be positive");
    std::vector<FilterGroup> out;
    auto add_groups = [&](int s, int b, int conv, int width) {
        for (int start = 0; start < width; start += group_size) {
            const int end = std::min(width, start + group_size);
            if (end - start >= width) continue;  // would empty the conv
            FilterGroup g{s, b, conv, {}};
            for (int c = start; c < end; ++c) g.channels.push_back(c);
            out.push_back(std::move(g));
        }
    };
    for (std::size_t s = 0; s < spec.stages.size(); ++s)
        for (std::size_t b = 0; b < spec.stages[s].blocks.size(); ++b) {
            const auto& blk = spec.stages[s].blocks[b];
            add_groups(int(s), int(b), 1, blk.conv1.out_channels);
            if (!blk.removable()) add_groups(int(s), int(b), 2, blk.conv2.out_channels);
        }
    return out;
}

}  // namespace prunetree
