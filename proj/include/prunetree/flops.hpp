#pragma once

#include <cstdint>
#include <vector>

#include "prunetree/network.hpp"

namespace prunetree {

using FlopCount = std::uint64_t;

// Closed-form per-image FLOP terms. A FLOP is half a multiply-accumulate:
// conv = 2*Cout*Cin*k*k*Hout*Wout, dense = 2*in*out; affine, ReLU, residual add
// and pooling cost one FLOP per output element.
FlopCount conv_flops(const ConvSpec& conv, int out_h, int out_w);
FlopCount dense_flops(int in_features, int out_features);

struct FlopBreakdown {
    FlopCount stem = 0;                       // conv + affine + relu
    std::vector<std::vector<FlopCount>> blocks;  // [stage][block]
    FlopCount pool = 0;
    FlopCount dense = 0;

    FlopCount total() const;
};

FlopBreakdown flop_breakdown(const NetworkSpec& spec);
FlopCount count_flops(const NetworkSpec& spec);

}  // namespace prunetree
