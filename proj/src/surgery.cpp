#include "prunetree/surgery.hpp"

#include <algorithm>
#include <cmath>

#include "prunetree/error.hpp"

namespace prunetree {

namespace {

bool contains(const std::vector<int>& sorted, int v) { return std::binary_search(sorted.begin(), sorted.end(), v); }

/// Drops output channels `drop` (sorted) from a conv's weight rows and its
/// per-channel vectors.
void drop_outputs(ConvSpec& cs, ConvParams<float>& p, const std::vector<int>& drop) {
    const std::size_t row = std::size_t(cs.in_channels) * cs.kernel * cs.kernel;
    ConvParams<float> out;
    for (int o = 0; o < cs.out_channels; ++o) {
        if (contains(drop, o)) continue;
        out.weight.insert(out.weight.end(), p.weight.begin() + std::ptrdiff_t(o * row),
                          p.weight.begin() + std::ptrdiff_t((o + 1) * row));
        out.bias.push_back(p.bias[o]);
        out.scale.push_back(p.scale[o]);
        out.shift.push_back(p.shift[o]);
    }
    cs.out_channels -= int(drop.size());
    p = std::move(out);
}

/// Drops input slices `drop` (sorted) from every filter of a conv.
void drop_inputs(ConvSpec& cs, ConvParams<float>& p, const std::vector<int>& drop) {
    const std::size_t kk = std::size_t(cs.kernel) * cs.kernel;
    std::vector<float> w;
    w.reserve(p.weight.size());
    for (int o = 0; o < cs.out_channels; ++o)
        for (int i = 0; i < cs.in_channels; ++i) {
            if (contains(drop, i)) continue;
            const auto at = p.weight.begin() + std::ptrdiff_t((std::size_t(o) * cs.in_channels + i) * kk);
            w.insert(w.end(), at, at + std::ptrdiff_t(kk));
        }
    cs.in_channels -= int(drop.size());
    p.weight = std::move(w);
}

void zero_affine(ConvParams<float>& p, const std::vector<int>& channels) {
    for (int c : channels) {
        p.scale[c] = 0.0f;
        p.shift[c] = 0.0f;
    }
}

/// Visits every consumer of a stage's residual stream after its projection
/// block: identity blocks (which also re-emit the stream) and finally either a
/// projection block or the head.
template <class OnIdentity, class OnProjection, class OnStageEnd, class OnHead>
void walk_stream(const NetworkSpec& spec, int stage, OnIdentity on_identity, OnProjection on_projection,
                 OnStageEnd on_stage_end, OnHead on_head) {
    for (std::size_t s = std::size_t(stage); s < spec.stages.size(); ++s) {
        const std::size_t first = s == std::size_t(stage) ? 1 : 0;
        for (std::size_t b = first; b < spec.stages[s].blocks.size(); ++b) {
            if (spec.stages[s].blocks[b].removable()) {
                on_identity(s, b);
            } else {
                on_projection(s, b);
                return;
            }
        }
        on_stage_end(s);
    }
    on_head();
}

}  // namespace

ModelState remove_block(const ModelState& parent, const LayerBlock& id) {
    validate(parent.spec, StructureId{id});
    ModelState child = parent;
    auto& st = child.spec.stages[id.stage];
    st.blocks.erase(st.blocks.begin() + id.block);
    auto& ps = child.params.blocks[id.stage];
    ps.erase(ps.begin() + id.block);
    validate(child.spec);
    return child;
}

ModelState remove_filters(const ModelState& parent, const FilterGroup& id) {
    validate(parent.spec, StructureId{id});
    ModelState child = parent;
    auto& spec = child.spec;
    auto& params = child.params;
    const auto& drop = id.channels;
    auto& blk = spec.stages[id.stage].blocks[id.block];
    auto& bp = params.blocks[id.stage][id.block];

    if (id.conv == 1) {
        drop_outputs(blk.conv1, bp.conv1, drop);
        drop_inputs(blk.conv2, bp.conv2, drop);
    } else {
        drop_outputs(blk.conv2, bp.conv2, drop);
        drop_outputs(*blk.shortcut, *bp.shortcut, drop);
        spec.stages[id.stage].out_channels -= int(drop.size());
        walk_stream(
            parent.spec, id.stage,
            [&](std::size_t s, std::size_t b) {
                auto& cb = spec.stages[s].blocks[b];
                auto& cp = params.blocks[s][b];
                drop_inputs(cb.conv1, cp.conv1, drop);
                drop_outputs(cb.conv2, cp.conv2, drop);
            },
            [&](std::size_t s, std::size_t b) {
                auto& cb = spec.stages[s].blocks[b];
                auto& cp = params.blocks[s][b];
                drop_inputs(cb.conv1, cp.conv1, drop);
                drop_inputs(*cb.shortcut, *cp.shortcut, drop);
            },
            [&](std::size_t s) {
                if (s != std::size_t(id.stage)) spec.stages[s].out_channels -= int(drop.size());
            },
            [&] {
                const int classes = spec.head.num_classes;
                const int features = spec.head.in_features;
                std::vector<float> w;
                for (int k = 0; k < classes; ++k)
                    for (int f = 0; f < features; ++f)
                        if (!contains(drop, f)) w.push_back(params.head_weight[std::size_t(k) * features + f]);
                params.head_weight = std::move(w);
                spec.head.in_features -= int(drop.size());
            });
    }
    validate(spec);
    check_parameter_shapes(spec, params);
    return child;
}

ModelState zero_filters(const ModelState& parent, const FilterGroup& id) {
    validate(parent.spec, StructureId{id});
    ModelState child = parent;
    auto& bp = child.params.blocks[id.stage][id.block];
    if (id.conv == 1) {
        zero_affine(bp.conv1, id.channels);
        return child;
    }
    zero_affine(bp.conv2, id.channels);
    zero_affine(*bp.shortcut, id.channels);
    walk_stream(
        parent.spec, id.stage,
        [&](std::size_t s, std::size_t b) { zero_affine(child.params.blocks[s][b].conv2, id.channels); },
        [](std::size_t, std::size_t) {}, [](std::size_t) {}, [] {});
    return child;
}

ModelState ablate(const ModelState& parent, const StructureId& id) {
    if (const auto* l = std::get_if<LayerBlock>(&id)) return remove_block(parent, *l);
    return zero_filters(parent, std::get<FilterGroup>(id));
}

std::pair<std::size_t, std::size_t> first_affected_block(const StructureId& id) {
    if (const auto* l = std::get_if<LayerBlock>(&id)) return {std::size_t(l->stage), std::size_t(l->block)};
    const auto& f = std::get<FilterGroup>(id);
    return {std::size_t(f.stage), std::size_t(f.block)};
}

const char* to_string(FilterBand band) {
    switch (band) {
        case FilterBand::InBand: return "in_band";
        case FilterBand::Overshoot: return "overshoot";
        case FilterBand::Exhausted: return "filter_exhausted";
    }
    return "unknown";
}

std::optional<Subnetwork> make_layer_candidate(const ModelState& parent, const Dataset& probe, Criterion criterion) {
    const auto ranked = rank_structures(parent, StructureKind::Layer, criterion, probe);
    if (ranked.empty()) return std::nullopt;
    const auto& id = std::get<LayerBlock>(ranked.front().structure);
    Subnetwork sub{remove_block(parent, id), {ranked.front().structure}, count_flops(parent.spec), 0,
                   SubnetworkKind::LayerPruned};
    sub.flops_after = count_flops(sub.model.spec);
    return sub;
}

std::optional<Subnetwork> make_filter_candidate(const ModelState& parent, const Dataset& probe,
                                                const CandidateOptions& opts, FlopCount target, FilterBand& band) {
    band = FilterBand::InBand;
    const FlopCount before = count_flops(parent.spec);
    ModelState current = parent;
    FlopCount removed = 0;
    std::vector<StructureId> ids;

    bool first_round = true;
    while (true) {
        const auto ranked = rank_structures(current, StructureKind::Filter, opts.criterion, probe, opts.group_size);
        if (ranked.empty()) {
            band = FilterBand::Exhausted;
            return std::nullopt;
        }
        const FlopCount now = count_flops(current.spec);
        if (first_round && target == 0) {
            // No layer step to match: one group's worth is the quantum.
            const auto child = remove_filters(current, std::get<FilterGroup>(ranked.front().structure));
            target = now - count_flops(child.spec);
        }
        first_round = false;
        const double lo = (1.0 - opts.tau) * double(target);
        const double hi = (1.0 + opts.tau) * double(target);

        std::optional<ModelState> next;
        FlopCount next_delta = 0;
        for (const auto& r : ranked) {
            ModelState child = remove_filters(current, std::get<FilterGroup>(r.structure));
            const FlopCount delta = now - count_flops(child.spec);
            if (double(removed + delta) <= hi) {
                next = std::move(child);
                next_delta = delta;
                ids.push_back(r.structure);
                break;
            }
        }
        if (!next) {
            next = remove_filters(current, std::get<FilterGroup>(ranked.front().structure));
            next_delta = now - count_flops(next->spec);
            ids.push_back(ranked.front().structure);
            band = FilterBand::Overshoot;
        }
        current = std::move(*next);
        removed += next_delta;
        if (double(removed) >= lo) break;
    }
    Subnetwork sub{std::move(current), std::move(ids), before, before - removed, SubnetworkKind::FilterPruned};
    return sub;
}

CandidatePair make_candidates(const ModelState& parent, const Dataset& probe, const CandidateOptions& opts) {
    if (!(opts.tau >= 0.0 && opts.tau < 1.0)) throw ValidationError("capacity tolerance tau must lie in [0, 1)");
    CandidatePair pair;
    pair.layer = make_layer_candidate(parent, probe, opts.criterion);
    pair.target = pair.layer ? pair.layer->reduction() : opts.fallback_target;
    pair.filter = make_filter_candidate(parent, probe, opts, pair.target, pair.band);
    if (!pair.layer && pair.filter && pair.target == 0) pair.target = pair.filter->reduction();
    return pair;
}

}  // namespace prunetree
