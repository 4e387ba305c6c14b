#pragma once

#include <string>
#include <tuple>
#include <variant>
#include <vector>

#include "prunetree/network.hpp"

namespace prunetree {

/// A whole residual block (identity shortcut only).
struct LayerBlock {
    int stage = 0;
    int block = 0;

    bool operator==(const LayerBlock&) const = default;
};

/// Output channels of one conv. conv == 1 addresses a block's interior conv;
/// conv == 2 addresses the residual stream of a stage and is only valid on the
/// stage's projection block (the stream is pruned in lockstep across the stage).
struct FilterGroup {
    int stage = 0;
    int block = 0;
    int conv = 1;
    std::vector<int> channels;  // distinct, ascending

    bool operator==(const FilterGroup&) const = default;
};

using StructureId = std::variant<LayerBlock, FilterGroup>;

enum class StructureKind { Layer, Filter };

inline StructureKind kind_of(const StructureId& id) {
    return std::holds_alternative<LayerBlock>(id) ? StructureKind::Layer : StructureKind::Filter;
}

/// Lexicographic (stage, block, conv, first channel); layers use conv 0.
std::tuple<int, int, int, int> order_key(const StructureId& id);

std::string describe(const StructureId& id);

/// Throws ValidationError unless `id` addresses a prunable structure of `spec`.
void validate(const NetworkSpec& spec, const StructureId& id);

/// Every removable block, in (stage, block) order.
std::vector<LayerBlock> enumerate_layers(const NetworkSpec& spec);

/// Contiguous channel groups of `group_size` for every filter removal site;
/// a group is listed only if at least one channel of its conv survives.
std::vector<FilterGroup> enumerate_filter_groups(const NetworkSpec& spec, int group_size);

}  // namespace prunetree
