#pragma once

#include <optional>
#include <string>
#include <vector>

#include "prunetree/dataset.hpp"
#include "prunetree/model.hpp"
#include "prunetree/structure.hpp"
#include "prunetree/substrate.hpp"

namespace prunetree {

enum class Criterion { KL, L1 };

Criterion parse_criterion(const std::string& text);  // "kl" | "l1"
const char* to_string(Criterion c);

struct CriterionScore {
    StructureId structure;
    double score = 0.0;
    Criterion criterion = Criterion::KL;
    bool heuristic = false;  // L1 applied to a whole block
};

/// Mean over probe examples of sum_c p_c ln(p_c / q_c), with p the parent's
/// softmax and q the softmax after ablating `id`; probabilities are floored
/// at 1e-12 inside the ratio.
CriterionScore kl_score(const ModelState& parent, const StructureId& id, const Dataset& probe);

/// Same as kl_score but reuses recorded parent activations.
CriterionScore kl_score(const ModelState& parent, const ActivationCache& cache, const StructureId& id);

/// KL(p || q) averaged over rows, with the 1e-12 floor.
double mean_kl(const Eigen::MatrixXd& p, const Eigen::MatrixXd& q);

/// Sum of |w| over the addressed filters (for a stream group, every conv2 and
/// shortcut filter producing those channels). For a block: sum over all of
/// its filters, flagged heuristic.
CriterionScore l1_score(const ModelState& parent, const StructureId& id);

/// Scores of every structure of `kind`, ascending by score, ties broken by
/// lexicographic (stage, block, conv, first channel). An empty result means
/// the kind is exhausted.
std::vector<CriterionScore> rank_structures(const ModelState& parent, StructureKind kind, Criterion criterion,
                                            const Dataset& probe, int group_size = 4);

}  // namespace prunetree
