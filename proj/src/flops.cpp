#include "prunetree/flops.hpp"

namespace prunetree {

FlopCount conv_flops(const ConvSpec& conv, int out_h, int out_w) {
    return FlopCount{2} * FlopCount(conv.out_channels) * FlopCount(conv.in_channels) *
           FlopCount(conv.kernel) * FlopCount(conv.kernel) * FlopCount(out_h) * FlopCount(out_w);
}

FlopCount dense_flops(int in_features, int out_features) {
    return FlopCount{2} * FlopCount(in_features) * FlopCount(out_features);
}

FlopCount FlopBreakdown::total() const {
    FlopCount t = stem + pool + dense;
    for (const auto& st : blocks)
        for (FlopCount b : st) t += b;
    return t;
}

FlopBreakdown flop_breakdown(const NetworkSpec& spec) {
    FlopBreakdown out;
    int h = spec.stem.out_extent(spec.input.height);
    int w = spec.stem.out_extent(spec.input.width);
    const FlopCount stem_elems = FlopCount(spec.stem.out_channels) * h * w;
    out.stem = conv_flops(spec.stem, h, w) + 2 * stem_elems;  // affine + relu

    for (const auto& st : spec.stages) {
        std::vector<FlopCount> terms;
        for (const auto& blk : st.blocks) {
            const int h1 = blk.conv1.out_extent(h), w1 = blk.conv1.out_extent(w);
            const int h2 = blk.conv2.out_extent(h1), w2 = blk.conv2.out_extent(w1);
            const FlopCount mid = FlopCount(blk.conv1.out_channels) * h1 * w1;
            const FlopCount outn = FlopCount(blk.conv2.out_channels) * h2 * w2;
            FlopCount t = conv_flops(blk.conv1, h1, w1) + 2 * mid;  // conv1, affine1, relu1
            t += conv_flops(blk.conv2, h2, w2) + outn;               // conv2, affine2
            if (blk.shortcut) t += conv_flops(*blk.shortcut, h2, w2) + outn;
            t += 2 * outn;  // residual add, relu
            terms.push_back(t);
            h = h2;
            w = w2;
        }
        out.blocks.push_back(std::move(terms));
    }
    out.pool = FlopCount(spec.head.in_features);
    out.dense = dense_flops(spec.head.in_features, spec.head.num_classes);
    return out;
}

FlopCount count_flops(const NetworkSpec& spec) { return flop_breakdown(spec).total(); }

}  // namespace prunetree
