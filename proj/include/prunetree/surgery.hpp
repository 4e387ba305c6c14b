#pragma once

#include <optional>
#include <utility>
#include <vector>

#include "prunetree/criteria.hpp"
#include "prunetree/dataset.hpp"
#include "prunetree/flops.hpp"
#include "prunetree/model.hpp"
#include "prunetree/structure.hpp"

namespace prunetree {

/// Deletes an identity-shortcut block; every other parameter is carried over.
ModelState remove_block(const ModelState& parent, const LayerBlock& id);

/// Deletes output channels and the matching input slices of every consumer.
/// For conv == 1 the consumer is the block's conv2. For conv == 2 the whole
/// residual stream of the stage shrinks: projection conv2 and shortcut rows,
/// every identity block's conv1 input and conv2 output, up to the next
/// projection block (input slices) or the head (feature columns).
ModelState remove_filters(const ModelState& parent, const FilterGroup& id);

/// Same addressing as remove_filters, but keeps the shapes and zeroes the
/// affine scale and shift of the addressed channels, so they emit zeros.
ModelState zero_filters(const ModelState& parent, const FilterGroup& id);

/// Ablated copy used for criterion scoring: a block is replaced by its identity
/// shortcut (i.e. removed), filter groups are zeroed.
ModelState ablate(const ModelState& parent, const StructureId& id);

/// First block position whose output can change under ablate(parent, id).
std::pair<std::size_t, std::size_t> first_affected_block(const StructureId& id);

enum class SubnetworkKind { LayerPruned, FilterPruned };

struct Subnetwork {
    ModelState model;
    std::vector<StructureId> removed;
    FlopCount flops_before = 0;
    FlopCount flops_after = 0;
    SubnetworkKind kind = SubnetworkKind::LayerPruned;

    FlopCount reduction() const { return flops_before - flops_after; }
};

enum class FilterBand {
    InBand,       // reduction within [(1 - tau) target, (1 + tau) target]
    Overshoot,    // every remaining group overshoots the upper bound; candidate kept
    Exhausted,    // groups ran out below the lower bound; no candidate
};

const char* to_string(FilterBand band);

struct CandidateOptions {
    Criterion criterion = Criterion::KL;
    int group_size = 4;
    double tau = 0.1;
    /// FLOP target for the filter candidate when no layer candidate exists.
    /// Zero selects the FLOPs of the cheapest single filter group.
    FlopCount fallback_target = 0;
};

struct CandidatePair {
    std::optional<Subnetwork> layer;
    std::optional<Subnetwork> filter;
    FlopCount target = 0;  // Δ the filter candidate aimed for
    FilterBand band = FilterBand::InBand;
};

/// Builds the layer candidate (lowest-scoring removable block) and a
/// capacity-matched filter candidate (lowest-scoring groups, re-scored after
/// each removal, until the reduction reaches (1 - tau) of the layer's).
CandidatePair make_candidates(const ModelState& parent, const Dataset& probe, const CandidateOptions& opts);

/// Only the layer candidate, or only the filter candidate aimed at `target`.
std::optional<Subnetwork> make_layer_candidate(const ModelState& parent, const Dataset& probe, Criterion criterion);
std::optional<Subnetwork> make_filter_candidate(const ModelState& parent, const Dataset& probe,
                                                const CandidateOptions& opts, FlopCount target, FilterBand& band);

}  // namespace prunetree
