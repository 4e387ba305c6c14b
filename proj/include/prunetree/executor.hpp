#pragma once

// Forward and backward passes over a NetworkSpec, templated on the scalar so
// gradient checks can run the identical code path in double precision.

#include <span>
#include <type_traits>
#include <vector>

#include "prunetree/error.hpp"
#include "prunetree/layers.hpp"
#include "prunetree/model.hpp"
#include "prunetree/network.hpp"

namespace prunetree::exec {

template <class T>
struct BlockTape {
    int in_c = 0, in_n = 0, in_h = 0, in_w = 0;
    std::vector<T> cols1, cols2, cols_sc;
    Activation<T> z1, a1, z2, zsc, out;
};

template <class T>
struct Tape {
    std::vector<T> stem_cols;
    Activation<T> stem_z, stem_out;
    std::vector<std::vector<BlockTape<T>>> blocks;
    Activation<T> final_act;
    RowMatrix<T> rep;
    RowMatrix<T> logits;
};

template <class T>
Activation<T> run_stem(const NetworkSpec& spec, const BasicParameters<T>& p, const Activation<T>& input,
                       std::type_identity_t<Tape<T>>* tape) {
    std::vector<T> scratch;
    std::vector<T>& cols = tape ? tape->stem_cols : scratch;
    Activation<T> z = layers::conv_forward(spec.stem, p.stem, input, cols);
    Activation<T> a = layers::affine_forward(p.stem, z);
    layers::relu_inplace(a);
    if (tape) {
        tape->stem_z = std::move(z);
        tape->stem_out = a;
    }
    return a;
}

template <class T>
Activation<T> run_block(const ResidualBlockSpec& bs, const BlockParams<T>& bp, const Activation<T>& x,
                        std::type_identity_t<BlockTape<T>>* tape) {
    std::vector<T> c1, c2, csc;
    std::vector<T>& cols1 = tape ? tape->cols1 : c1;
    std::vector<T>& cols2 = tape ? tape->cols2 : c2;
    std::vector<T>& cols_sc = tape ? tape->cols_sc : csc;

    Activation<T> z1 = layers::conv_forward(bs.conv1, bp.conv1, x, cols1);
    Activation<T> a1 = layers::affine_forward(bp.conv1, z1);
    layers::relu_inplace(a1);
    Activation<T> z2 = layers::conv_forward(bs.conv2, bp.conv2, a1, cols2);
    Activation<T> y = layers::affine_forward(bp.conv2, z2);
    Activation<T> zsc;
    if (bs.shortcut) {
        zsc = layers::conv_forward(*bs.shortcut, *bp.shortcut, x, cols_sc);
        Activation<T> s = layers::affine_forward(*bp.shortcut, zsc);
        for (std::size_t i = 0; i < y.data.size(); ++i) y.data[i] += s.data[i];
    } else {
        for (std::size_t i = 0; i < y.data.size(); ++i) y.data[i] += x.data[i];
    }
    layers::relu_inplace(y);
    if (tape) {
        tape->in_c = x.c;
        tape->in_n = x.n;
        tape->in_h = x.h;
        tape->in_w = x.w;
        tape->z1 = std::move(z1);
        tape->a1 = std::move(a1);
        tape->z2 = std::move(z2);
        tape->zsc = std::move(zsc);
        tape->out = y;
    }
    return y;
}

/// Runs every block from position (stage, block) onward. `block` may equal the
/// stage's block count, in which case execution resumes at the next stage.
template <class T>
Activation<T> run_from(const NetworkSpec& spec, const BasicParameters<T>& p, std::size_t stage, std::size_t block,
                       Activation<T> act, std::type_identity_t<Tape<T>>* tape) {
    if (tape && tape->blocks.size() != spec.stages.size()) {
        tape->blocks.resize(spec.stages.size());
        for (std::size_t s = 0; s < spec.stages.size(); ++s) tape->blocks[s].resize(spec.stages[s].blocks.size());
    }
    for (std::size_t s = stage; s < spec.stages.size(); ++s) {
        const std::size_t first = s == stage ? block : 0;
        for (std::size_t b = first; b < spec.stages[s].blocks.size(); ++b)
            act = run_block(spec.stages[s].blocks[b], p.blocks[s][b], act, tape ? &tape->blocks[s][b] : nullptr);
    }
    return act;
}

template <class T>
void run_head(const NetworkSpec& spec, const BasicParameters<T>& p, const Activation<T>& act, RowMatrix<T>& rep,
              RowMatrix<T>& logits) {
    rep = layers::global_avg_pool(act);
    logits = layers::dense_forward<T>(p.head_weight, p.head_bias, rep, spec.head.num_classes);
}

template <class T>
void check_input(const NetworkSpec& spec, const Activation<T>& input) {
    if (input.c != spec.input.channels || input.h != spec.input.height || input.w != spec.input.width)
        throw StructuralError("input batch shape (" + std::to_string(input.c) + "x" + std::to_string(input.h) +
                              "x" + std::to_string(input.w) + ") does not match network input (" +
                              std::to_string(spec.input.channels) + "x" + std::to_string(spec.input.height) + "x" +
                              std::to_string(spec.input.width) + ")");
}

/// Full forward pass recording everything the backward pass needs.
template <class T>
void forward_tape(const NetworkSpec& spec, const BasicParameters<T>& p, const Activation<T>& input, Tape<T>& tape) {
    check_input(spec, input);
    Activation<T> a = run_stem(spec, p, input, &tape);
    tape.final_act = run_from(spec, p, 0, 0, std::move(a), &tape);
    run_head(spec, p, tape.final_act, tape.rep, tape.logits);
}

template <class T>
Activation<T> block_backward(const ResidualBlockSpec& bs, const BlockParams<T>& bp, const BlockTape<T>& t,
                             Activation<T> dy, BlockParams<T>& g) {
    layers::relu_backward_inplace(t.out, dy);
    Activation<T> dx(t.in_c, t.in_n, t.in_h, t.in_w);
    if (bs.shortcut) {
        Activation<T> dzsc = layers::affine_backward(*bp.shortcut, t.zsc, dy, *g.shortcut);
        layers::conv_backward(*bs.shortcut, *bp.shortcut, t.cols_sc, dzsc, *g.shortcut, &dx);
    } else {
        for (std::size_t i = 0; i < dx.data.size(); ++i) dx.data[i] += dy.data[i];
    }
    Activation<T> dz2 = layers::affine_backward(bp.conv2, t.z2, dy, g.conv2);
    Activation<T> da1(t.a1.c, t.a1.n, t.a1.h, t.a1.w);
    layers::conv_backward(bs.conv2, bp.conv2, t.cols2, dz2, g.conv2, &da1);
    layers::relu_backward_inplace(t.a1, da1);
    Activation<T> dz1 = layers::affine_backward(bp.conv1, t.z1, da1, g.conv1);
    layers::conv_backward(bs.conv1, bp.conv1, t.cols1, dz1, g.conv1, &dx);
    return dx;
}

/// Accumulates parameter gradients of the loss whose logit gradient is `dlogits`.
template <class T>
void backward(const NetworkSpec& spec, const BasicParameters<T>& p, const Tape<T>& tape, const RowMatrix<T>& dlogits,
              BasicParameters<T>& g) {
    RowMatrix<T> drep = layers::dense_backward<T>(p.head_weight, tape.rep, dlogits, g.head_weight, g.head_bias);
    Activation<T> d = layers::global_avg_pool_backward(drep, tape.final_act.h, tape.final_act.w);
    for (std::size_t s = spec.stages.size(); s-- > 0;)
        for (std::size_t b = spec.stages[s].blocks.size(); b-- > 0;)
            d = block_backward(spec.stages[s].blocks[b], p.blocks[s][b], tape.blocks[s][b], std::move(d),
                               g.blocks[s][b]);
    layers::relu_backward_inplace(tape.stem_out, d);
    Activation<T> dz = layers::affine_backward(p.stem, tape.stem_z, d, g.stem);
    layers::conv_backward(spec.stem, p.stem, tape.stem_cols, dz, g.stem, nullptr);
}

/// Mean cross-entropy of a batch; writes the full parameter gradient into `grad`.
template <class T>
double loss_and_gradient(const NetworkSpec& spec, const BasicParameters<T>& p, const Activation<T>& input,
                         std::span<const int> labels, BasicParameters<T>& grad) {
    Tape<T> tape;
    forward_tape(spec, p, input, tape);
    RowMatrix<T> dlogits;
    const double loss = layers::softmax_cross_entropy(tape.logits, labels, dlogits);
    grad = zero_parameters<T>(spec);
    backward(spec, p, tape, dlogits, grad);
    return loss;
}

template <class T>
double loss_only(const NetworkSpec& spec, const BasicParameters<T>& p, const Activation<T>& input,
                 std::span<const int> labels) {
    Activation<T> a = run_stem(spec, p, input, nullptr);
    a = run_from(spec, p, 0, 0, std::move(a), nullptr);
    RowMatrix<T> rep, logits, dlogits;
    run_head(spec, p, a, rep, logits);
    return layers::softmax_cross_entropy(logits, labels, dlogits);
}

}  // namespace prunetree::exec
