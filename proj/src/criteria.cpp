#include "prunetree/criteria.hpp"

#include <algorithm>
#include <cmath>

#include "prunetree/error.hpp"
#include "prunetree/surgery.hpp"

namespace prunetree {

namespace {

constexpr double kProbabilityFloor = 1e-12;

double abs_sum(const std::vector<float>& v, std::size_t begin, std::size_t count) {
    double s = 0.0;
    for (std::size_t i = begin; i < begin + count; ++i) s += std::abs(double(v[i]));
    return s;
}

double rows_l1(const ConvSpec& cs, const ConvParams<float>& p, const std::vector<int>& rows) {
    const std::size_t row = std::size_t(cs.in_channels) * cs.kernel * cs.kernel;
    double s = 0.0;
    for (int r : rows) s += abs_sum(p.weight, std::size_t(r) * row, row);
    return s;
}

}  // namespace

Criterion parse_criterion(const std::string& text) {
    if (text == "kl") return Criterion::KL;
    if (text == "l1") return Criterion::L1;
    throw ValidationError("unknown criterion '" + text + "' (expected kl or l1)");
}

const char* to_string(Criterion c) { return c == Criterion::KL ? "kl" : "l1"; }

double mean_kl(const Eigen::MatrixXd& p, const Eigen::MatrixXd& q) {
    if (p.rows() != q.rows() || p.cols() != q.cols())
        throw StructuralError("mean_kl: distributions have different shapes");
    if (p.rows() == 0) throw PreconditionError("mean_kl: no examples");
    double total = 0.0;
    for (Eigen::Index i = 0; i < p.rows(); ++i)
        for (Eigen::Index c = 0; c < p.cols(); ++c) {
            const double pc = p(i, c);
            if (pc <= 0.0) continue;
            total += pc * std::log(std::max(pc, kProbabilityFloor) / std::max(q(i, c), kProbabilityFloor));
        }
    return std::max(0.0, total / double(p.rows()));
}

CriterionScore kl_score(const ModelState& parent, const ActivationCache& cache, const StructureId& id) {
    const ModelState child = ablate(parent, id);
    const auto [s, b] = first_affected_block(id);
    const RowMatrix<float> q = forward_resume(child.spec, child.params, s, b, cache.input_at(s, b));
    return {id, mean_kl(softmax_rows(cache.logits), softmax_rows(q)), Criterion::KL, false};
}

CriterionScore kl_score(const ModelState& parent, const StructureId& id, const Dataset& probe) {
    validate(parent.spec, id);
    return kl_score(parent, forward_cached(parent, probe), id);
}

CriterionScore l1_score(const ModelState& parent, const StructureId& id) {
    validate(parent.spec, id);
    const auto& spec = parent.spec;
    const auto& params = parent.params;
    if (const auto* l = std::get_if<LayerBlock>(&id)) {
        const auto& bp = params.blocks[l->stage][l->block];
        const double s = abs_sum(bp.conv1.weight, 0, bp.conv1.weight.size()) +
                         abs_sum(bp.conv2.weight, 0, bp.conv2.weight.size());
        return {id, s, Criterion::L1, true};
    }
    const auto& f = std::get<FilterGroup>(id);
    const auto& blk = spec.stages[f.stage].blocks[f.block];
    const auto& bp = params.blocks[f.stage][f.block];
    double s = 0.0;
    if (f.conv == 1) {
        s = rows_l1(blk.conv1, bp.conv1, f.channels);
    } else {
        s = rows_l1(blk.conv2, bp.conv2, f.channels) + rows_l1(*blk.shortcut, *bp.shortcut, f.channels);
        const auto& st = spec.stages[f.stage];
        for (std::size_t b = std::size_t(f.block) + 1; b < st.blocks.size(); ++b)
            if (st.blocks[b].removable()) s += rows_l1(st.blocks[b].conv2, params.blocks[f.stage][b].conv2, f.channels);
    }
    return {id, s, Criterion::L1, false};
}

std::vector<CriterionScore> rank_structures(const ModelState& parent, StructureKind kind, Criterion criterion,
                                            const Dataset& probe, int group_size) {
    std::vector<StructureId> ids;
    if (kind == StructureKind::Layer) {
        for (const auto& l : enumerate_layers(parent.spec)) ids.emplace_back(l);
    } else {
        for (auto& g : enumerate_filter_groups(parent.spec, group_size)) ids.emplace_back(std::move(g));
    }
    std::vector<CriterionScore> scores;
    scores.reserve(ids.size());
    if (ids.empty()) return scores;
    if (criterion == Criterion::KL) {
        const ActivationCache cache = forward_cached(parent, probe);
        for (const auto& id : ids) scores.push_back(kl_score(parent, cache, id));
    } else {
        for (const auto& id : ids) scores.push_back(l1_score(parent, id));
    }
    std::stable_sort(scores.begin(), scores.end(), [](const CriterionScore& a, const CriterionScore& b) {
        if (a.score != b.score) return a.score < b.score;
        return order_key(a.structure) < order_key(b.structure);
    });
    return scores;
}

}  // namespace prunetree
