#include "prunetree/harness.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <map>
#include <sstream>

#include "json.hpp"

#include "prunetree/checkpoint.hpp"
#include "prunetree/error.hpp"
#include "prunetree/rng.hpp"

namespace prunetree {

namespace {

using nlohmann::json;

std::string fixed(double v, int precision) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", precision, v);
    return buf;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
    std::ofstream os(path, std::ios::binary);
    os << text;
    if (!os) throw IoError("cannot write " + path.string());
}

void make_dir(const std::filesystem::path& dir) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw IoError("cannot create directory " + dir.string() + ": " + ec.message());
}

json read_json(const std::filesystem::path& path, const std::filesystem::path& dir) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("report: " + dir.string() + " has no readable " + path.filename().string());
    try {
        return json::parse(is);
    } catch (const json::exception& e) {
        throw IoError("report: corrupt " + path.filename().string() + " in " + dir.string() + ": " + e.what());
    }
}

Point point_of(const RunResult& r, int k) {
    const double acc = k == 0 ? r.baseline_accuracy : r.trace.records[std::size_t(k - 1)].accuracy_after;
    const double pct = k == 0 ? 0.0 : r.trace.records[std::size_t(k - 1)].flop_reduction_pct;
    return {pct, r.delta_pp(acc)};
}

Point mean(const std::vector<Point>& pts) {
    Point m;
    for (const auto& p : pts) {
        m.flop_reduction_pct += p.flop_reduction_pct;
        m.delta_pp += p.delta_pp;
    }
    m.flop_reduction_pct /= double(pts.size());
    m.delta_pp /= double(pts.size());
    return m;
}

EngineData engine_data(const Datasets& d, const Dataset& probe) { return {d.train, d.test, probe}; }

ModelState load_matching(const RunConfig& cfg, const std::filesystem::path& checkpoint, const Dataset& train) {
    ModelState model = load_checkpoint(checkpoint);
    if (to_canonical_text(model.spec) != to_canonical_text(config_spec(cfg, train)))
        throw ValidationError("checkpoint " + checkpoint.string() + " does not match the configured architecture");
    return model;
}

}  // namespace

Datasets load_datasets(const RunConfig& cfg) {
    Datasets d;
    if (cfg.dataset.idx) {
        const auto& i = *cfg.dataset.idx;
        d.train = load_idx(i.train_images, i.train_labels, i.classes);
        d.test = load_idx(i.test_images, i.test_labels, i.classes > 0 ? i.classes : d.train.num_classes);
        if (d.test.shape() != d.train.shape())
            throw IngestionError("test images " + i.test_images.string() + " differ in shape from the training images");
        const int classes = std::max(d.train.num_classes, d.test.num_classes);
        d.train.num_classes = d.test.num_classes = classes;
    } else {
        d.train = make_synthetic(cfg.dataset.synthetic, cfg.dataset.synthetic.samples, 0);
        d.test = make_synthetic(cfg.dataset.synthetic, cfg.dataset.test_samples, 1);
    }
    return d;
}

NetworkSpec config_spec(const RunConfig& cfg, const Dataset& data) {
    return make_resnet_spec(data.shape(), cfg.arch.widths, cfg.arch.blocks, data.num_classes);
}

Dataset make_probe(const Dataset& train, int probe_size, std::uint64_t seed) {
    if (probe_size < 4 || std::size_t(probe_size) > train.size())
        throw ValidationError("probe size " + std::to_string(probe_size) + " must lie in [4, " +
                              std::to_string(train.size()) + "]");
    const auto idx = sample_indices(train.size(), std::size_t(probe_size), derive_seed(seed, {stream::kProbe}));
    return subset(train, idx);
}

int thread_budget() {
    const char* env = std::getenv("PRUNETREE_THREADS");
    if (!env || !*env) return 1;
    char* end = nullptr;
    const long n = std::strtol(env, &end, 10);
    if (*end != '\0' || n < 1) throw UsageError("PRUNETREE_THREADS must be a positive integer");
    return int(std::min<long>(n, 2));
}

TrainOutcome cli_train(const RunConfig& cfg, const std::filesystem::path& out, const EngineLog& log) {
    validate(cfg);
    const Datasets d = load_datasets(cfg);
    TrainOutcome t;
    t.model = init_model(config_spec(cfg, d.train), cfg.train_seed);
    if (log)
        log("training " + std::to_string(parameter_count(t.model.spec)) + " parameters, " +
            std::to_string(count_flops(t.model.spec)) + " FLOPs per image, " + std::to_string(cfg.train.epochs) +
            " epochs on " + std::to_string(d.train.size()) + " images");
    t.model = train(std::move(t.model), d.train, cfg.train);
    t.train_accuracy = evaluate(t.model, d.train);
    t.test_accuracy = evaluate(t.model, d.test);

    make_dir(out);
    save_checkpoint(t.model, out / "model.prnet");
    const json doc = {{"train_accuracy", t.train_accuracy},
                      {"test_accuracy", t.test_accuracy},
                      {"flops", count_flops(t.model.spec)},
                      {"parameters", parameter_count(t.model.spec)},
                      {"epochs", cfg.train.epochs},
                      {"seed", cfg.train_seed}};
    write_text(out / "baseline.json", doc.dump(2) + "\n");
    return t;
}

RunResult cli_prune(const RunConfig& cfg, const std::filesystem::path& checkpoint, const std::filesystem::path& out,
                    const EngineLog& log) {
    validate(cfg);
    const Datasets d = load_datasets(cfg);
    const ModelState model = load_matching(cfg, checkpoint, d.train);
    const Dataset probe = make_probe(d.train, cfg.probe_size, cfg.train_seed);
    EngineConfig ec = cfg.engine;
    ec.threads = thread_budget();
    RunResult r = run(model, ec, engine_data(d, probe), log);
    write_run_directory(out, r, ec);
    return r;
}

AggregateResult cli_baseline(const RunConfig& cfg, const std::filesystem::path& checkpoint,
                             const std::filesystem::path& out, const EngineLog& log) {
    validate(cfg);
    const Datasets d = load_datasets(cfg);
    const ModelState model = load_matching(cfg, checkpoint, d.train);
    const Dataset probe = make_probe(d.train, cfg.probe_size, cfg.train_seed);
    AggregateResult agg;
    std::vector<Point> best, last;
    json per_seed = json::array();
    std::string csv = "method,seed,delta_acc_pp,flops_reduction_pct\n";
    for (int i = 0; i < cfg.baseline_runs; ++i) {
        EngineConfig ec = cfg.engine;
        ec.seed = cfg.engine.seed + std::uint64_t(i);
        ec.threads = thread_budget();
        if (log) log("random walk, seed " + std::to_string(ec.seed));
        RunResult r = run_random_walk(model, ec, engine_data(d, probe), log);
        ec.mode = EngineMode::RandomWalk;
        const std::string name = "seed_" + std::to_string(ec.seed);
        write_run_directory(out / name, r, ec);
        best.push_back(point_of(r, r.best_positive));
        last.push_back(point_of(r, int(r.iterates.size())));
        per_seed.push_back(name);
        csv += "random_walk," + std::to_string(ec.seed) + "," + fixed(best.back().delta_pp, 4) + "," +
               fixed(best.back().flop_reduction_pct, 4) + "\n";
        agg.seeds.push_back(ec.seed);
        agg.runs.push_back(std::move(r));
    }
    agg.best_positive = mean(best);
    agg.final_point = mean(last);
    csv += "random_walk,mean," + fixed(agg.best_positive.delta_pp, 4) + "," +
           fixed(agg.best_positive.flop_reduction_pct, 4) + "\n";
    const json doc = {
        {"method", "random_walk"},
        {"runs", per_seed},
        {"best_positive", {{"flop_reduction_pct", agg.best_positive.flop_reduction_pct}, {"delta_pp", agg.best_positive.delta_pp}}},
        {"final", {{"flop_reduction_pct", agg.final_point.flop_reduction_pct}, {"delta_pp", agg.final_point.delta_pp}}},
    };
    write_text(out / "aggregate.json", doc.dump(2) + "\n");
    write_text(out / "aggregate.csv", csv);
    return agg;
}

ResultsSummary read_summary(const std::filesystem::path& run_dir) {
    const json doc = read_json(run_dir / "trace.json", run_dir);
    try {
        ResultsSummary s;
        s.mode = doc.at("mode").get<std::string>();
        s.seed = doc.at("seed").get<std::uint64_t>();
        s.baseline_accuracy = doc.at("baseline").at("accuracy").get<double>();
        s.baseline_flops = doc.at("baseline").at("flops").get<FlopCount>();
        s.compact = doc.at("compact").get<std::string>();
        for (const auto& r : doc.at("records")) {
            IterationRecord rec;
            rec.k = r.at("k").get<int>();
            const std::string chosen = r.at("chosen").get<std::string>();
            if (chosen != "L" && chosen != "F") throw IoError("record " + std::to_string(rec.k) + " has chosen=" + chosen);
            rec.chosen = chosen == "L" ? Choice::Layer : Choice::Filter;
            if (!r.at("cka_layer").is_null()) rec.cka_layer = r.at("cka_layer").get<double>();
            if (!r.at("cka_filter").is_null()) rec.cka_filter = r.at("cka_filter").get<double>();
            rec.flops_after = r.at("flops_after").get<FlopCount>();
            rec.flop_reduction_pct = r.at("flop_reduction_pct").get<double>();
            rec.accuracy_after = r.at("accuracy_after").get<double>();
            rec.wall_time = r.at("wall_time").get<double>();
            s.records.push_back(std::move(rec));
        }
        auto point = [&](const char* key) {
            const auto& p = doc.at(key);
            return Point{p.at("flop_reduction_pct").get<double>(), p.at("delta_pp").get<double>()};
        };
        s.best_positive = point("best_positive");
        s.final_point = point("final");
        return s;
    } catch (const json::exception& e) {
        throw IoError("report: corrupt trace.json in " + run_dir.string() + ": " + e.what());
    } catch (const IoError& e) {
        throw IoError("report: corrupt trace.json in " + run_dir.string() + ": " + e.what());
    }
}

std::vector<ReportRow> cli_report(const std::vector<std::filesystem::path>& dirs) {
    if (dirs.empty()) throw UsageError("report: no run directories given");
    std::vector<ReportRow> rows;
    for (const auto& dir : dirs) {
        if (std::filesystem::exists(dir / "aggregate.json")) {
            const json doc = read_json(dir / "aggregate.json", dir);
            std::vector<Point> pts;
            try {
                for (const auto& name : doc.at("runs")) pts.push_back(read_summary(dir / name.get<std::string>()).best_positive);
            } catch (const json::exception& e) {
                throw IoError("report: corrupt aggregate.json in " + dir.string() + ": " + e.what());
            }
            if (pts.empty()) throw IoError("report: aggregate.json in " + dir.string() + " lists no runs");
            const Point m = mean(pts);
            rows.push_back({"Random Walk (mean of " + std::to_string(pts.size()) + ")", m.delta_pp, m.flop_reduction_pct});
        } else {
            const ResultsSummary s = read_summary(dir);
            const std::string method = s.mode == "cka" ? "CKA-guided" : "Random Walk (seed " + std::to_string(s.seed) + ")";
            rows.push_back({method, s.best_positive.delta_pp, s.best_positive.flop_reduction_pct});
        }
    }
    std::stable_sort(rows.begin(), rows.end(),
                     [](const ReportRow& a, const ReportRow& b) { return a.flops_pct < b.flops_pct; });
    return rows;
}

std::string format_delta(double delta_pp) {
    return (delta_pp >= 0.0 ? "(+) " : "(−) ") + fixed(std::abs(delta_pp), 2);
}

std::string report_csv(const std::vector<ReportRow>& rows) {
    std::string out = "method,delta_acc_pp,flops_reduction_pct\n";
    for (const auto& r : rows) out += r.method + "," + fixed(r.delta_pp, 2) + "," + fixed(r.flops_pct, 2) + "\n";
    return out;
}

std::string report_text(const std::vector<ReportRow>& rows) {
    std::map<int, std::size_t> best;
    for (std::size_t i = 0; i < rows.size(); ++i) {
        const int band = std::clamp(int(std::floor(rows[i].flops_pct / 10.0)), 0, 9);
        auto it = best.find(band);
        if (it == best.end() || rows[i].delta_pp > rows[it->second].delta_pp) best[band] = i;
    }
    std::size_t width = std::string("method").size();
    for (const auto& r : rows) width = std::max(width, r.method.size());
    auto pad = [](std::string s, std::size_t w) {
        s.resize(std::max(w, s.size()), ' ');
        return s;
    };
    std::string out = pad("method", width) + "  " + pad("delta acc (pp)", 14) + "  FLOPs (%)\n";
    for (std::size_t i = 0; i < rows.size(); ++i) {
        const auto& r = rows[i];
        const int band = std::clamp(int(std::floor(r.flops_pct / 10.0)), 0, 9);
        // the minus sign is 3 bytes but one column wide
        const std::string delta = format_delta(r.delta_pp);
        const std::size_t extra = r.delta_pp < 0.0 ? 2 : 0;
        out += pad(r.method, width) + "  " + pad(delta, 14 + extra) + "  " + fixed(r.flops_pct, 2) +
               (best[band] == i ? " *" : "") + "\n";
    }
    return out;
}

}  // namespace prunetree
