#include "prunetree/engine.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <exception>
#include <fstream>
#include <thread>

#include "json.hpp"

#include "prunetree/checkpoint.hpp"
#include "prunetree/error.hpp"
#include "prunetree/rng.hpp"

namespace prunetree {

namespace {

constexpr std::uint64_t kLayerBranch = 0;
constexpr std::uint64_t kFilterBranch = 1;

std::string superscript(int n) {
    static const char* digits[] = {"⁰", "¹", "²", "³", "⁴", "⁵", "⁶", "⁷", "⁸", "⁹"};
    const std::string s = std::to_string(n);
    std::string out;
    for (char c : s) out += digits[c - '0'];
    return out;
}

std::string fixed(double v, int precision) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", precision, v);
    return buf;
}

double reduction_pct(FlopCount original, FlopCount now) {
    return original == 0 ? 0.0 : 100.0 * (double(original) - double(now)) / double(original);
}

/// Fine-tunes a candidate on its own shuffle stream; empty if training diverges.
std::optional<ModelState> recover(const Subnetwork& candidate, const EngineConfig& cfg, const Dataset& train_set,
                                  int k, std::uint64_t branch) {
    ModelState m = candidate.model;
    m.rng_seed = derive_seed(cfg.seed, {stream::kCandidate, std::uint64_t(k), branch});
    TrainConfig tc = cfg.finetune;
    tc.epochs = cfg.recovery_epochs;
    try {
        return train(std::move(m), train_set, tc);
    } catch (const TrainingDivergedError&) {
        return std::nullopt;
    }
}

std::vector<std::string> describe_all(const std::vector<StructureId>& ids) {
    std::vector<std::string> out;
    for (const auto& id : ids) out.push_back(describe(id));
    return out;
}

nlohmann::json optional_json(const std::optional<double>& v) { return v ? nlohmann::json(*v) : nlohmann::json(); }

nlohmann::json point_json(const RunResult& r, int k) {
    const ModelState& m = k == 0 ? r.initial : r.iterates[std::size_t(k - 1)];
    const double acc = k == 0 ? r.baseline_accuracy : r.trace.records[std::size_t(k - 1)].accuracy_after;
    const FlopCount flops = count_flops(m.spec);
    return {{"k", k},
            {"flops", flops},
            {"flop_reduction_pct", reduction_pct(r.baseline_flops, flops)},
            {"accuracy", acc},
            {"delta_pp", r.delta_pp(acc)}};
}

void write_text(const std::filesystem::path& path, const std::string& text) {
    std::ofstream os(path, std::ios::binary);
    os << text;
    if (!os) throw IoError("cannot write " + path.string());
}

}  // namespace

EngineMode parse_mode(const std::string& text) {
    if (text == "cka") return EngineMode::CkaGuided;
    if (text == "random_walk") return EngineMode::RandomWalk;
    throw ValidationError("unknown engine mode '" + text + "' (expected cka or random_walk)");
}

const char* to_string(EngineMode mode) { return mode == EngineMode::CkaGuided ? "cka" : "random_walk"; }

void validate(const EngineConfig& cfg) {
    if (cfg.K < 1) throw ValidationError("engine: K must be at least 1");
    if (!(cfg.epsilon >= 0.0) || !std::isfinite(cfg.epsilon)) throw ValidationError("engine: epsilon must be >= 0");
    if (cfg.recovery_epochs < 0) throw ValidationError("engine: recovery_epochs must be non-negative");
    if (cfg.post_select_epochs < 0) throw ValidationError("engine: post_select_epochs must be non-negative");
    if (!(cfg.tau >= 0.0 && cfg.tau < 1.0)) throw ValidationError("engine: tau must lie in [0, 1)");
    if (cfg.group_size < 1) throw ValidationError("engine: group_size must be positive");
    if (cfg.threads < 1 || cfg.threads > 2) throw ValidationError("engine: threads must be 1 or 2");
}

int post_select_budget(const EngineConfig& cfg) { return std::max(0, cfg.post_select_epochs - cfg.recovery_epochs); }

Choice choose(std::optional<double> cka_layer, std::optional<double> cka_filter, double epsilon) {
    if (!cka_layer) return Choice::Filter;
    if (!cka_filter) return Choice::Layer;
    return *cka_layer + epsilon >= *cka_filter ? Choice::Layer : Choice::Filter;
}

std::string DecisionTrace::compact() const {
    std::string s;
    for (const auto& r : records) s += char(r.chosen);
    return s;
}

std::string run_length_pattern(const std::string& compact) {
    std::string out;
    for (std::size_t i = 0; i < compact.size();) {
        std::size_t j = i;
        while (j < compact.size() && compact[j] == compact[i]) ++j;
        if (!out.empty()) out += ",";
        out += compact[i];
        if (j - i > 1) out += superscript(int(j - i));
        i = j;
    }
    return out;
}

TraceSummary summarize_trace(const DecisionTrace& trace) {
    if (trace.records.empty()) throw PreconditionError("summarize_trace: trace is empty");
    TraceSummary s;
    s.pattern = run_length_pattern(trace.compact());
    for (const auto& r : trace.records) {
        (r.chosen == Choice::Layer ? s.layers : s.filters) += 1;
        s.flops.push_back(r.flops_after);
    }
    return s;
}

std::optional<StepResult> prune_step(const ModelState& parent, const EngineConfig& cfg, const EngineData& data, int k,
                                     FlopCount original_flops, FlopCount last_layer_delta) {
    const auto t0 = std::chrono::steady_clock::now();
    const bool walk = cfg.mode == EngineMode::RandomWalk;
    IterationRecord rec;
    rec.k = k;

    CandidateOptions opts{cfg.criterion, cfg.group_size, cfg.tau, last_layer_delta};
    std::optional<Subnetwork> layer = make_layer_candidate(parent, data.probe, cfg.criterion);
    rec.filter_target = layer ? layer->reduction() : last_layer_delta;

    std::optional<Choice> coin;
    if (walk) {
        Rng rng(derive_seed(cfg.seed, {stream::kCoin, std::uint64_t(k)}));
        coin = (rng() & 1u) ? Choice::Filter : Choice::Layer;
    }

    std::optional<Subnetwork> filter;
    bool filter_built = false;
    auto build_filter = [&] {
        if (filter_built) return;
        filter = make_filter_candidate(parent, data.probe, opts, rec.filter_target, rec.band);
        filter_built = true;
        if (filter && rec.filter_target == 0) rec.filter_target = filter->reduction();
    };
    if (!walk || !layer || coin == Choice::Filter) build_filter();
    if (!layer && !filter) return std::nullopt;

    rec.layer_available = layer.has_value();
    rec.filter_available = filter.has_value();
    if (layer) rec.delta_layer = layer->reduction();
    if (filter) rec.delta_filter = filter->reduction();

    std::optional<ModelState> layer_model, filter_model;
    if (!walk) {
        if (cfg.threads > 1 && layer && filter) {
            std::exception_ptr err;
            std::thread worker([&] {
                try {
                    layer_model = recover(*layer, cfg, data.train, k, kLayerBranch);
                } catch (...) {
                    err = std::current_exception();
                }
            });
            try {
                filter_model = recover(*filter, cfg, data.train, k, kFilterBranch);
            } catch (...) {
                worker.join();
                throw;
            }
            worker.join();
            if (err) std::rethrow_exception(err);
        } else {
            if (layer) layer_model = recover(*layer, cfg, data.train, k, kLayerBranch);
            if (filter) filter_model = recover(*filter, cfg, data.train, k, kFilterBranch);
        }
        if (layer && !layer_model) rec.notes.push_back("layer candidate diverged during recovery; disqualified");
        if (filter && !filter_model) rec.notes.push_back("filter candidate diverged during recovery; disqualified");
        if (!layer_model && !filter_model)
            throw TrainingDivergedError(cfg.recovery_epochs, "both candidates diverged at iteration " + std::to_string(k));

        const RepMatrix parent_rep = extract_representation(parent, data.probe);
        auto similarity = [&](const ModelState& m, const char* name) -> double {
            try {
                return cka(parent_rep, extract_representation(m, data.probe), cfg.metric);
            } catch (const DegenerateRepresentationError& e) {
                rec.notes.push_back(std::string(name) + " similarity treated as 0: " + e.what());
                return 0.0;
            }
        };
        if (layer_model) rec.cka_layer = similarity(*layer_model, "layer");
        if (filter_model) rec.cka_filter = similarity(*filter_model, "filter");
        rec.chosen = choose(rec.cka_layer, rec.cka_filter, cfg.epsilon);
    } else {
        Choice pick = !layer ? Choice::Filter : *coin;
        if (pick == Choice::Filter && !filter) {
            pick = Choice::Layer;
            rec.notes.push_back("coin chose F but filters are exhausted");
        } else if (pick != *coin) {
            rec.notes.push_back("coin chose L but layers are exhausted");
        }
        auto recover_pick = [&](Choice c) {
            return c == Choice::Layer ? recover(*layer, cfg, data.train, k, kLayerBranch)
                                      : recover(*filter, cfg, data.train, k, kFilterBranch);
        };
        std::optional<ModelState> m = recover_pick(pick);
        if (!m) {
            rec.notes.push_back(std::string(1, char(pick)) + " candidate diverged during recovery; disqualified");
            const Choice other = pick == Choice::Layer ? Choice::Filter : Choice::Layer;
            if (other == Choice::Filter) build_filter();
            const bool available = other == Choice::Layer ? layer.has_value() : filter.has_value();
            if (!available)
                throw TrainingDivergedError(cfg.recovery_epochs, "candidate diverged at iteration " + std::to_string(k));
            m = recover_pick(other);
            if (!m) throw TrainingDivergedError(cfg.recovery_epochs, "both candidates diverged at iteration " + std::to_string(k));
            pick = other;
        }
        rec.filter_available = filter.has_value();
        if (filter) rec.delta_filter = filter->reduction();
        (pick == Choice::Layer ? layer_model : filter_model) = std::move(m);
        rec.chosen = pick;
    }

    const Subnetwork& winner = rec.chosen == Choice::Layer ? *layer : *filter;
    ModelState child = std::move(rec.chosen == Choice::Layer ? *layer_model : *filter_model);
    rec.removed = describe_all(winner.removed);

    if (const int extra = post_select_budget(cfg); extra > 0) {
        child.rng_seed = derive_seed(cfg.seed, {stream::kPostSelect, std::uint64_t(k)});
        TrainConfig tc = cfg.finetune;
        tc.epochs = extra;
        child = train(std::move(child), data.train, tc);
    }

    rec.flops_after = count_flops(child.spec);
    rec.flop_reduction_pct = reduction_pct(original_flops, rec.flops_after);
    rec.accuracy_after = evaluate(child, data.eval);
    rec.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return StepResult{std::move(child), std::move(rec)};
}

RunResult run(const ModelState& model, const EngineConfig& cfg, const EngineData& data, const EngineLog& log) {
    validate(cfg);
    validate(model.spec);
    RunResult r;
    r.initial = model;
    r.final_model = model;
    r.baseline_flops = count_flops(model.spec);
    r.baseline_accuracy = evaluate(model, data.eval);
    const double chance = 1.0 / double(model.spec.head.num_classes);
    const double loss = mean_loss(model, data.eval);
    if (!std::isfinite(loss) || r.baseline_accuracy <= chance + 0.05) {
        r.warnings.push_back("input model looks untrained (accuracy " + fixed(r.baseline_accuracy, 4) + ", loss " +
                             fixed(loss, 4) + "); pruning anyway");
        if (log) log("warning: " + r.warnings.back());
    }

    FlopCount last_layer_delta = 0;
    const ModelState* parent = &r.initial;
    for (int k = 1; k <= cfg.K; ++k) {
        auto step = prune_step(*parent, cfg, data, k, r.baseline_flops, last_layer_delta);
        if (!step) {
            r.pruning_complete = true;
            if (log)
                log(enumerate_filter_groups(parent->spec, cfg.group_size).empty()
                        ? "pruning complete: no prunable structure left"
                        : "pruning complete: no removable block left and the remaining filter groups cannot reach "
                          "the filter target (filter_exhausted)");
            break;
        }
        IterationRecord& rec = step->record;
        if (rec.layer_available) last_layer_delta = rec.delta_layer;
        if (log) {
            std::string line = "iter " + std::to_string(k) + ": " + char(rec.chosen);
            if (rec.cka_layer || rec.cka_filter)
                line += " cka_layer=" + (rec.cka_layer ? fixed(*rec.cka_layer, 4) : std::string("-")) +
                        " cka_filter=" + (rec.cka_filter ? fixed(*rec.cka_filter, 4) : std::string("-"));
            line += " flops=-" + fixed(rec.flop_reduction_pct, 2) + "% acc=" + fixed(rec.accuracy_after, 4) + " (" +
                    fixed(rec.wall_time, 1) + "s)";
            log(line);
            for (const auto& n : rec.notes) log("  note: " + n);
        }
        const bool negative = rec.accuracy_after < r.baseline_accuracy;
        r.trace.records.push_back(std::move(rec));
        r.iterates.push_back(std::move(step->child));
        parent = &r.iterates.back();
        if (!negative) r.best_positive = k;
        if (negative && cfg.stop_on_negative_delta) {
            r.stopped_on_negative = true;
            if (log) log("stopping: accuracy fell below the input model");
            break;
        }
    }
    if (!r.iterates.empty()) r.final_model = r.iterates.back();
    return r;
}

RunResult run_random_walk(const ModelState& model, EngineConfig cfg, const EngineData& data, const EngineLog& log) {
    cfg.mode = EngineMode::RandomWalk;
    return run(model, cfg, data, log);
}

std::string iterations_csv(const DecisionTrace& trace) {
    std::string out = "k,chosen,cka_layer,cka_filter,flops_after,flop_reduction_pct,accuracy_after\n";
    for (const auto& r : trace.records) {
        out += std::to_string(r.k) + "," + char(r.chosen) + "," + (r.cka_layer ? fixed(*r.cka_layer, 6) : "") + "," +
               (r.cka_filter ? fixed(*r.cka_filter, 6) : "") + "," + std::to_string(r.flops_after) + "," +
               fixed(r.flop_reduction_pct, 4) + "," + fixed(r.accuracy_after, 6) + "\n";
    }
    return out;
}

void write_run_directory(const std::filesystem::path& dir, const RunResult& result, const EngineConfig& cfg) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw IoError("cannot create run directory " + dir.string() + ": " + ec.message());

    nlohmann::json records = nlohmann::json::array();
    for (const auto& r : result.trace.records) {
        records.push_back({{"k", r.k},
                           {"chosen", std::string(1, char(r.chosen))},
                           {"cka_layer", optional_json(r.cka_layer)},
                           {"cka_filter", optional_json(r.cka_filter)},
                           {"flops_after", r.flops_after},
                           {"flop_reduction_pct", r.flop_reduction_pct},
                           {"accuracy_after", r.accuracy_after},
                           {"delta_pp", result.delta_pp(r.accuracy_after)},
                           {"wall_time", r.wall_time},
                           {"layer_available", r.layer_available},
                           {"filter_available", r.filter_available},
                           {"delta_layer", r.delta_layer},
                           {"delta_filter", r.delta_filter},
                           {"filter_target", r.filter_target},
                           {"filter_band", to_string(r.band)},
                           {"removed", r.removed},
                           {"notes", r.notes}});
    }
    nlohmann::json doc = {
        {"format", "prunetree-trace"},
        {"version", 1},
        {"mode", to_string(cfg.mode)},
        {"seed", cfg.seed},
        {"config",
         {{"K", cfg.K},
          {"epsilon", cfg.epsilon},
          {"recovery_epochs", cfg.recovery_epochs},
          {"post_select_epochs", cfg.post_select_epochs},
          {"metric", to_string(cfg.metric)},
          {"criterion", to_string(cfg.criterion)},
          {"tau", cfg.tau},
          {"group_size", cfg.group_size},
          {"stop_on_negative_delta", cfg.stop_on_negative_delta}}},
        {"baseline", {{"accuracy", result.baseline_accuracy}, {"flops", result.baseline_flops}}},
        {"compact", result.trace.compact()},
        {"pattern", run_length_pattern(result.trace.compact())},
        {"records", records},
        {"best_positive", point_json(result, result.best_positive)},
        {"final", point_json(result, int(result.iterates.size()))},
        {"pruning_complete", result.pruning_complete},
        {"stopped_on_negative", result.stopped_on_negative},
        {"warnings", result.warnings},
    };
    write_text(dir / "trace.json", doc.dump(2) + "\n");
    write_text(dir / "trace.txt", result.trace.compact() + "\n");
    write_text(dir / "iterations.csv", iterations_csv(result.trace));
    for (std::size_t i = 0; i < result.iterates.size(); ++i)
        save_checkpoint(result.iterates[i], dir / ("iter_" + std::to_string(i + 1) + ".prnet"));
    save_checkpoint(result.final_model, dir / "final.prnet");
    save_checkpoint(result.best_positive_model(), dir / "best_positive.prnet");
}

}  // namespace prunetree
