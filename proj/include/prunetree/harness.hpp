#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "prunetree/config.hpp"
#include "prunetree/engine.hpp"

namespace prunetree {

struct Datasets {
    Dataset train;
    Dataset test;
};

/// Synthetic train/test splits or the configured IDX pairs.
Datasets load_datasets(const RunConfig& cfg);

/// The architecture a config describes, for the given data shape.
NetworkSpec config_spec(const RunConfig& cfg, const Dataset& data);

/// Fixed probe subset of the training split, drawn from the model seed.
Dataset make_probe(const Dataset& train, int probe_size, std::uint64_t seed);

/// PRUNETREE_THREADS, clamped to [1, 2]; 1 when unset.
int thread_budget();

struct TrainOutcome {
    ModelState model;
    double train_accuracy = 0.0;
    double test_accuracy = 0.0;
};

/// Trains the configured architecture from scratch and writes
/// `<out>/model.prnet` plus `<out>/baseline.json`.
TrainOutcome cli_train(const RunConfig& cfg, const std::filesystem::path& out, const EngineLog& log = {});

/// Loads a checkpoint whose spec must equal the configured architecture,
/// runs the engine and writes the run directory.
RunResult cli_prune(const RunConfig& cfg, const std::filesystem::path& checkpoint, const std::filesystem::path& out,
                    const EngineLog& log = {});

struct Point {
    double flop_reduction_pct = 0.0;
    double delta_pp = 0.0;
};

struct AggregateResult {
    std::vector<std::uint64_t> seeds;
    std::vector<RunResult> runs;
    Point best_positive;  // means over seeds
    Point final_point;
};

/// Random Walk for cfg.baseline_runs consecutive seeds starting at
/// cfg.engine.seed: `<out>/seed_<s>/` run directories plus aggregate.json and
/// aggregate.csv holding the mean row.
AggregateResult cli_baseline(const RunConfig& cfg, const std::filesystem::path& checkpoint,
                             const std::filesystem::path& out, const EngineLog& log = {});

/// Everything a report needs, read back from trace.json.
struct ResultsSummary {
    std::string mode;
    std::uint64_t seed = 0;
    double baseline_accuracy = 0.0;
    FlopCount baseline_flops = 0;
    std::string compact;
    std::vector<IterationRecord> records;
    Point best_positive;
    Point final_point;
};

ResultsSummary read_summary(const std::filesystem::path& run_dir);

struct ReportRow {
    std::string method;
    double delta_pp = 0.0;
    double flops_pct = 0.0;
};

/// One row per directory: a run directory contributes its best-positive point,
/// a baseline directory (aggregate.json) its mean. Sorted by FLOPs %.
std::vector<ReportRow> cli_report(const std::vector<std::filesystem::path>& dirs);

/// "(+) 0.19" / "(−) 0.42", two decimals.
std::string format_delta(double delta_pp);

std::string report_csv(const std::vector<ReportRow>& rows);

/// Aligned table; '*' marks the best delta within each 10% FLOP band.
std::string report_text(const std::vector<ReportRow>& rows);

}  // namespace prunetree
