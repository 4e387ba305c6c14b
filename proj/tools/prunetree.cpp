// prunetree command-line front end.

#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "prunetree/checkpoint.hpp"
#include "prunetree/error.hpp"
#include "prunetree/flops.hpp"
#include "prunetree/harness.hpp"

using namespace prunetree;

namespace {

struct Options {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::string out;
    std::string checkpoint;
    std::vector<std::string> dirs;
};

RunConfig load(const Options& o) {
    RunConfig cfg = o.config.empty() ? RunConfig{} : load_config(o.config);
    if (o.seed) {
        cfg.engine.seed = *o.seed;
        cfg.train_seed = *o.seed;
    }
    if (!o.out.empty()) cfg.out_dir = o.out;
    return cfg;
}

std::string need_checkpoint(const Options& o) {
    if (o.checkpoint.empty()) throw UsageError("--checkpoint is required");
    return o.checkpoint;
}

void log(const std::string& line) { std::cerr << line << std::endl; }

void print_result(const RunResult& r) {
    const std::string compact = r.trace.compact();
    std::cout << "trace: " << (compact.empty() ? "(empty)" : compact);
    if (!compact.empty()) {
        const TraceSummary s = summarize_trace(r.trace);
        std::cout << "  [" << s.pattern << ", L/F " << s.ratio() << "]";
    }
    std::cout << "\n";
    auto line = [&](const char* name, int k) {
        const double acc = k == 0 ? r.baseline_accuracy : r.trace.records[std::size_t(k - 1)].accuracy_after;
        const double pct = k == 0 ? 0.0 : r.trace.records[std::size_t(k - 1)].flop_reduction_pct;
        std::printf("%s: flop_reduction_pct=%.2f delta_pp=%s (k=%d)\n", name, pct, format_delta(r.delta_pp(acc)).c_str(), k);
    };
    line("final", int(r.iterates.size()));
    line("best_positive", r.best_positive);
}

int cmd_train(const Options& o) {
    const RunConfig cfg = load(o);
    const TrainOutcome t = cli_train(cfg, cfg.out_dir, log);
    std::printf("train_accuracy=%.4f test_accuracy=%.4f\ncheckpoint: %s\n", t.train_accuracy, t.test_accuracy,
                (cfg.out_dir / "model.prnet").string().c_str());
    return 0;
}

int cmd_prune(const Options& o) {
    const RunConfig cfg = load(o);
    const RunResult r = cli_prune(cfg, need_checkpoint(o), cfg.out_dir, log);
    print_result(r);
    return 0;
}

int cmd_baseline(const Options& o) {
    const RunConfig cfg = load(o);
    const AggregateResult a = cli_baseline(cfg, need_checkpoint(o), cfg.out_dir, log);
    for (std::size_t i = 0; i < a.runs.size(); ++i) {
        std::cout << "seed " << a.seeds[i] << ": ";
        print_result(a.runs[i]);
    }
    std::printf("mean best_positive: flop_reduction_pct=%.2f delta_pp=%s\n", a.best_positive.flop_reduction_pct,
                format_delta(a.best_positive.delta_pp).c_str());
    return 0;
}

int cmd_report(const Options& o) {
    std::vector<std::filesystem::path> dirs(o.dirs.begin(), o.dirs.end());
    const auto rows = cli_report(dirs);
    std::cout << report_text(rows);
    if (!o.out.empty()) {
        std::ofstream os(o.out, std::ios::binary);
        os << report_csv(rows);
        if (!os) throw IoError("cannot write " + o.out);
    }
    return 0;
}

int cmd_flops(const Options& o) {
    NetworkSpec spec;
    if (!o.checkpoint.empty()) {
        spec = load_checkpoint(o.checkpoint).spec;
    } else {
        const RunConfig cfg = load(o);
        spec = config_spec(cfg, load_datasets(cfg).train);
    }
    const FlopBreakdown b = flop_breakdown(spec);
    std::printf("stem %llu\n", static_cast<unsigned long long>(b.stem));
    for (std::size_t s = 0; s < b.blocks.size(); ++s) {
        FlopCount stage = 0;
        for (FlopCount f : b.blocks[s]) stage += f;
        std::printf("stage %zu (%zu blocks) %llu\n", s, b.blocks[s].size(), static_cast<unsigned long long>(stage));
    }
    std::printf("pool %llu\ndense %llu\ntotal %llu\nparameters %zu\n", static_cast<unsigned long long>(b.pool),
                static_cast<unsigned long long>(b.dense), static_cast<unsigned long long>(b.total()),
                parameter_count(spec));
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Structured pruning that picks between removing a layer or filters at every step."};
    app.require_subcommand(1);
    Options o;

    auto common = [&](CLI::App* sub) {
        sub->add_option("--config", o.config, "key=value config file");
        sub->add_option("--seed", o.seed, "override train.seed and engine.seed");
        sub->add_option("--out", o.out, "output directory");
    };
    auto* train = app.add_subcommand("train", "train the baseline network");
    common(train);
    auto* prune = app.add_subcommand("prune", "run the pruning engine on a checkpoint");
    common(prune);
    prune->add_option("--checkpoint", o.checkpoint, "trained model (.prnet)")->required();
    auto* baseline = app.add_subcommand("baseline", "Random Walk over baseline.runs seeds");
    common(baseline);
    baseline->add_option("--checkpoint", o.checkpoint, "trained model (.prnet)")->required();
    auto* report = app.add_subcommand("report", "compare run directories");
    report->add_option("dirs", o.dirs, "run or baseline directories");
    report->add_option("--out", o.out, "also write the table as CSV");
    auto* flops = app.add_subcommand("flops", "print FLOPs per image for a config or checkpoint");
    common(flops);
    flops->add_option("--checkpoint", o.checkpoint, "count a checkpoint instead of the config");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return static_cast<int>(ErrorCategory::Usage);
    }

    try {
        if (*train) return cmd_train(o);
        if (*prune) return cmd_prune(o);
        if (*baseline) return cmd_baseline(o);
        if (*report) return cmd_report(o);
        if (*flops) return cmd_flops(o);
    } catch (const Error& e) {
        std::cerr << "error [" << category_name(e.category()) << "]: " << e.what() << "\n";
        return e.exit_code();
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
