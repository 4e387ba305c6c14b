#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "prunetree/criteria.hpp"
#include "prunetree/dataset.hpp"
#include "prunetree/flops.hpp"
#include "prunetree/model.hpp"
#include "prunetree/similarity.hpp"
#include "prunetree/substrate.hpp"
#include "prunetree/surgery.hpp"

namespace prunetree {

enum class EngineMode { CkaGuided, RandomWalk };

EngineMode parse_mode(const std::string& text);  // "cka" | "random_walk"
const char* to_string(EngineMode mode);

struct EngineConfig {
    int K = 6;
    double epsilon = 0.0;          // layer bias: layer wins iff cka_layer + epsilon >= cka_filter
    int recovery_epochs = 10;
    int post_select_epochs = 10;   // per-iteration budget; recovery_epochs are discounted from it
    EngineMode mode = EngineMode::CkaGuided;
    SimilarityMetric metric;
    Criterion criterion = Criterion::KL;
    std::uint64_t seed = 0;
    bool stop_on_negative_delta = false;
    double tau = 0.1;
    int group_size = 4;
    TrainConfig finetune;          // epochs ignored; the engine sets them per phase
    int threads = 1;               // candidate fine-tunes running concurrently (1 or 2)
};

/// Throws ValidationError on an out-of-domain config.
void validate(const EngineConfig& cfg);

/// Epochs of post-selection fine-tuning left after the recovery discount.
int post_select_budget(const EngineConfig& cfg);

enum class Choice : char { Layer = 'L', Filter = 'F' };

/// Layer iff cka_layer + epsilon >= cka_filter; an absent side loses.
Choice choose(std::optional<double> cka_layer, std::optional<double> cka_filter, double epsilon);

struct IterationRecord {
    int k = 0;  // 1-based
    std::optional<double> cka_layer;
    std::optional<double> cka_filter;
    Choice chosen = Choice::Layer;
    FlopCount flops_after = 0;
    double flop_reduction_pct = 0.0;  // vs the engine's input model
    double accuracy_after = 0.0;
    double wall_time = 0.0;           // seconds

    bool layer_available = false;
    bool filter_available = false;
    FlopCount delta_layer = 0;
    FlopCount delta_filter = 0;
    FlopCount filter_target = 0;
    FilterBand band = FilterBand::InBand;
    std::vector<std::string> removed;  // structures removed by the winner
    std::vector<std::string> notes;    // disqualifications, degenerate representations
};

struct DecisionTrace {
    std::vector<IterationRecord> records;

    std::string compact() const;
};

/// Run-length form such as "L³,F²,L", the layer/filter counts and the FLOPs
/// after each iteration.
struct TraceSummary {
    std::string pattern;
    int layers = 0;
    int filters = 0;
    std::vector<FlopCount> flops;

    std::string ratio() const { return std::to_string(layers) + "/" + std::to_string(filters); }
};

/// Throws PreconditionError on an empty trace.
TraceSummary summarize_trace(const DecisionTrace& trace);

/// Run-length encoding of a compact L/F string.
std::string run_length_pattern(const std::string& compact);

struct EngineData {
    const Dataset& train;  // fine-tuning
    const Dataset& eval;   // accuracy_after
    const Dataset& probe;  // criterion scoring and representations
};

struct StepResult {
    ModelState child;
    IterationRecord record;
};

/// One iteration: candidates, recovery, comparison, post-selection fine-tune.
/// Empty when neither a layer nor a filter candidate can be built.
/// `last_layer_delta` carries the FLOP quantum for layer-exhausted parents.
std::optional<StepResult> prune_step(const ModelState& parent, const EngineConfig& cfg, const EngineData& data, int k,
                                     FlopCount original_flops, FlopCount last_layer_delta = 0);

using EngineLog = std::function<void(const std::string&)>;

struct RunResult {
    ModelState initial;
    ModelState final_model;
    DecisionTrace trace;
    std::vector<ModelState> iterates;  // iterates[i] is the child of record i
    double baseline_accuracy = 0.0;
    FlopCount baseline_flops = 0;
    int best_positive = 0;  // k of the most compressed iterate with delta >= 0; 0 is the input model
    bool pruning_complete = false;
    bool stopped_on_negative = false;
    std::vector<std::string> warnings;

    const ModelState& best_positive_model() const { return best_positive == 0 ? initial : iterates[best_positive - 1]; }
    double delta_pp(double accuracy) const { return 100.0 * (accuracy - baseline_accuracy); }
};

/// Algorithm loop: up to cfg.K prune steps, each child becoming the next parent.
RunResult run(const ModelState& model, const EngineConfig& cfg, const EngineData& data, const EngineLog& log = {});

/// Same loop with cfg.mode forced to RandomWalk.
RunResult run_random_walk(const ModelState& model, EngineConfig cfg, const EngineData& data,
                          const EngineLog& log = {});

/// iterations.csv body, byte-stable for identical traces.
std::string iterations_csv(const DecisionTrace& trace);

/// Writes trace.json, trace.txt, iterations.csv and the checkpoints.
void write_run_directory(const std::filesystem::path& dir, const RunResult& result, const EngineConfig& cfg);

}  // namespace prunetree
