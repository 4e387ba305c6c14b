#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace prunetree {

struct InputShape {
    int channels = 0;
    int height = 0;
    int width = 0;

    bool operator==(const InputShape&) const = default;
};

/// Square k x k convolution; every conv in the network is followed by a
/// per-channel affine (scale, shift) whose parameters live with the conv.
struct ConvSpec {
    int in_channels = 0;
    int out_channels = 0;
    int kernel = 3;
    int stride = 1;
    int padding = 1;

    int out_extent(int in_extent) const { return (in_extent + 2 * padding - kernel) / stride + 1; }

    bool operator==(const ConvSpec&) const = default;
};

/// Two-conv residual block. A block without a shortcut projection uses the
/// identity shortcut and is the only kind that may be removed as a layer.
struct ResidualBlockSpec {
    ConvSpec conv1;
    ConvSpec conv2;
    std::optional<ConvSpec> shortcut;  // 1x1 projection, present iff shape changes

    bool removable() const { return !shortcut.has_value(); }
    int in_channels() const { return conv1.in_channels; }
    int out_channels() const { return conv2.out_channels; }

    bool operator==(const ResidualBlockSpec&) const = default;
};

struct Stage {
    std::vector<ResidualBlockSpec> blocks;
    int out_channels = 0;  // width of the residual stream through this stage
    int stride = 1;        // stride of the first block

    bool operator==(const Stage&) const = default;
};

struct HeadSpec {
    int in_features = 0;
    int num_classes = 0;

    bool operator==(const HeadSpec&) const = default;
};

/// Topology: stem conv, residual stages, global average pool, dense head.
struct NetworkSpec {
    InputShape input;
    ConvSpec stem;
    std::vector<Stage> stages;
    HeadSpec head;

    bool operator==(const NetworkSpec&) const = default;

    int representation_dim() const { return head.in_features; }
    int removable_block_count() const;
    int block_count() const;
};

/// Throws StructuralError when any channel count, stride or shortcut rule is broken.
void validate(const NetworkSpec& spec);

/// Spatial extent (height, width) of the activation entering stage `stage`
/// (stage == stages.size() gives the extent entering the pooling layer).
std::pair<int, int> stage_input_extent(const NetworkSpec& spec, std::size_t stage);

/// Builds a miniature CIFAR-style ResNet: 3x3 stem to widths[0], then one stage
/// per width; stages after the first downsample by 2 through a projection block.
NetworkSpec make_resnet_spec(const InputShape& input, const std::vector<int>& widths,
                             const std::vector<int>& blocks_per_stage, int num_classes);

/// Line-oriented canonical text. Round-trips exactly through parse_spec_text.
std::string to_canonical_text(const NetworkSpec& spec);
NetworkSpec parse_spec_text(const std::string& text);

}  // namespace prunetree
