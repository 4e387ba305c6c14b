#include "prunetree/config.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <sstream>

#include "prunetree/error.hpp"

namespace prunetree {

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

std::vector<std::string> split(const std::string& s, char sep) {
    std::vector<std::string> out;
    if (s.empty()) return out;
    std::string item;
    std::istringstream is(s);
    while (std::getline(is, item, sep)) out.push_back(trim(item));
    return out;
}

template <class T>
T parse_number(const std::string& key, const std::string& text) {
    T v{};
    const char* end = text.data() + text.size();
    auto [ptr, ec] = std::from_chars(text.data(), end, v);
    if (ec != std::errc() || ptr != end || text.empty())
        throw ValidationError("config: " + key + " expects a number, got '" + text + "'");
    return v;
}

bool parse_bool(const std::string& key, const std::string& text) {
    if (text == "true" || text == "1") return true;
    if (text == "false" || text == "0") return false;
    throw ValidationError("config: " + key + " expects true or false, got '" + text + "'");
}

std::vector<int> parse_int_list(const std::string& key, const std::string& text) {
    std::vector<int> out;
    for (const auto& item : split(text, ',')) out.push_back(parse_number<int>(key, item));
    return out;
}

std::vector<LrStep> parse_schedule(const std::string& key, const std::string& text) {
    std::vector<LrStep> out;
    for (const auto& item : split(text, ',')) {
        const auto colon = item.find(':');
        if (colon == std::string::npos)
            throw ValidationError("config: " + key + " entries look like <epoch>:<multiplier>, got '" + item + "'");
        out.push_back({parse_number<int>(key, trim(item.substr(0, colon))),
                       parse_number<double>(key, trim(item.substr(colon + 1)))});
    }
    return out;
}

std::string num(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

std::string join(const std::vector<int>& v) {
    std::string s;
    for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
    return s;
}

using Setter = std::function<void(RunConfig&, const std::string&, const std::string&)>;

struct Pending {
    std::string kind = "synthetic";
    IdxSource idx;
};

}  // namespace

RunConfig parse_config(const std::string& text, const std::filesystem::path& base_dir) {
    RunConfig cfg;
    Pending pending;
    auto path = [&base_dir](const std::string& v) {
        std::filesystem::path p(v);
        return p.is_relative() && !base_dir.empty() ? base_dir / p : p;
    };
    auto train_cfg = [](TrainConfig& t, const std::string& field, const std::string& key, const std::string& v) {
        if (field == "epochs") t.epochs = parse_number<int>(key, v);
        else if (field == "batch_size") t.batch_size = parse_number<int>(key, v);
        else if (field == "learning_rate") t.learning_rate = parse_number<double>(key, v);
        else if (field == "momentum") t.momentum = parse_number<double>(key, v);
        else if (field == "weight_decay") t.weight_decay = parse_number<double>(key, v);
        else if (field == "lr_schedule") t.lr_schedule = parse_schedule(key, v);
        else return false;
        return true;
    };

    const std::map<std::string, Setter> table = {
        {"dataset.kind", [&](RunConfig&, const std::string& k, const std::string& v) {
             if (v != "synthetic" && v != "idx") throw ValidationError("config: " + k + " must be synthetic or idx");
             pending.kind = v;
         }},
        {"dataset.seed", [](RunConfig& c, const std::string& k, const std::string& v) { c.dataset.synthetic.seed = parse_number<std::uint64_t>(k, v); }},
        {"dataset.classes", [](RunConfig& c, const std::string& k, const std::string& v) { c.dataset.synthetic.classes = parse_number<int>(k, v); }},
        {"dataset.samples", [](RunConfig& c, const std::string& k, const std::string& v) { c.dataset.synthetic.samples = parse_number<int>(k, v); }},
        {"dataset.test_samples", [](RunConfig& c, const std::string& k, const std::string& v) { c.dataset.test_samples = parse_number<int>(k, v); }},
        {"dataset.image_size", [](RunConfig& c, const std::string& k, const std::string& v) { c.dataset.synthetic.image_size = parse_number<int>(k, v); }},
        {"dataset.channels", [](RunConfig& c, const std::string& k, const std::string& v) { c.dataset.synthetic.channels = parse_number<int>(k, v); }},
        {"dataset.blobs_per_class", [](RunConfig& c, const std::string& k, const std::string& v) { c.dataset.synthetic.blobs_per_class = parse_number<int>(k, v); }},
        {"dataset.jitter", [](RunConfig& c, const std::string& k, const std::string& v) { c.dataset.synthetic.jitter = parse_number<double>(k, v); }},
        {"dataset.noise", [](RunConfig& c, const std::string& k, const std::string& v) { c.dataset.synthetic.noise = parse_number<double>(k, v); }},
        {"dataset.train_images", [&](RunConfig&, const std::string&, const std::string& v) { pending.idx.train_images = path(v); }},
        {"dataset.train_labels", [&](RunConfig&, const std::string&, const std::string& v) { pending.idx.train_labels = path(v); }},
        {"dataset.test_images", [&](RunConfig&, const std::string&, const std::string& v) { pending.idx.test_images = path(v); }},
        {"dataset.test_labels", [&](RunConfig&, const std::string&, const std::string& v) { pending.idx.test_labels = path(v); }},
        {"dataset.idx_classes", [&](RunConfig&, const std::string& k, const std::string& v) { pending.idx.classes = parse_number<int>(k, v); }},
        {"arch.widths", [](RunConfig& c, const std::string& k, const std::string& v) { c.arch.widths = parse_int_list(k, v); }},
        {"arch.blocks", [](RunConfig& c, const std::string& k, const std::string& v) { c.arch.blocks = parse_int_list(k, v); }},
        {"train.seed", [](RunConfig& c, const std::string& k, const std::string& v) { c.train_seed = parse_number<std::uint64_t>(k, v); }},
        {"engine.K", [](RunConfig& c, const std::string& k, const std::string& v) { c.engine.K = parse_number<int>(k, v); }},
        {"engine.epsilon", [](RunConfig& c, const std::string& k, const std::string& v) { c.engine.epsilon = parse_number<double>(k, v); }},
        {"engine.recovery_epochs", [](RunConfig& c, const std::string& k, const std::string& v) { c.engine.recovery_epochs = parse_number<int>(k, v); }},
        {"engine.post_select_epochs", [](RunConfig& c, const std::string& k, const std::string& v) { c.engine.post_select_epochs = parse_number<int>(k, v); }},
        {"engine.mode", [](RunConfig& c, const std::string&, const std::string& v) { c.engine.mode = parse_mode(v); }},
        {"engine.metric", [](RunConfig& c, const std::string&, const std::string& v) { c.engine.metric = parse_metric(v); }},
        {"engine.criterion", [](RunConfig& c, const std::string&, const std::string& v) { c.engine.criterion = parse_criterion(v); }},
        {"engine.seed", [](RunConfig& c, const std::string& k, const std::string& v) { c.engine.seed = parse_number<std::uint64_t>(k, v); }},
        {"engine.stop_on_negative_delta", [](RunConfig& c, const std::string& k, const std::string& v) { c.engine.stop_on_negative_delta = parse_bool(k, v); }},
        {"engine.tau", [](RunConfig& c, const std::string& k, const std::string& v) { c.engine.tau = parse_number<double>(k, v); }},
        {"engine.group_size", [](RunConfig& c, const std::string& k, const std::string& v) { c.engine.group_size = parse_number<int>(k, v); }},
        {"engine.probe_size", [](RunConfig& c, const std::string& k, const std::string& v) { c.probe_size = parse_number<int>(k, v); }},
        {"baseline.runs", [](RunConfig& c, const std::string& k, const std::string& v) { c.baseline_runs = parse_number<int>(k, v); }},
        {"out_dir", [](RunConfig& c, const std::string&, const std::string& v) { c.out_dir = v; }},
    };

    std::set<std::string> seen;
    std::istringstream is(text);
    std::string line;
    int lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        const std::string where = "config line " + std::to_string(lineno);
        if (eq == std::string::npos) throw ValidationError(where + ": expected key=value");
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        if (!seen.insert(key).second) throw ValidationError(where + ": repeated key " + key);
        if (const auto it = table.find(key); it != table.end()) {
            it->second(cfg, key, value);
            continue;
        }
        const auto dot = key.find('.');
        const std::string section = key.substr(0, dot);
        const std::string field = dot == std::string::npos ? "" : key.substr(dot + 1);
        bool ok = false;
        if (section == "train") ok = train_cfg(cfg.train, field, key, value);
        else if (section == "finetune" && field != "epochs" && field != "lr_schedule")
            ok = train_cfg(cfg.engine.finetune, field, key, value);
        if (!ok) throw ValidationError(where + ": unknown key " + key);
    }
    if (pending.kind == "idx") cfg.dataset.idx = pending.idx;
    validate(cfg);
    return cfg;
}

RunConfig load_config(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot read config " + path.string());
    std::ostringstream ss;
    ss << is.rdbuf();
    return parse_config(ss.str(), path.parent_path());
}

void validate(const RunConfig& cfg) {
    if (cfg.arch.widths.empty() || cfg.arch.widths.size() != cfg.arch.blocks.size())
        throw ValidationError("config: arch.widths and arch.blocks need the same non-zero length");
    for (int w : cfg.arch.widths)
        if (w <= 0) throw ValidationError("config: arch widths must be positive");
    for (int b : cfg.arch.blocks)
        if (b <= 0) throw ValidationError("config: arch blocks per stage must be positive");
    if (cfg.dataset.idx) {
        const auto& i = *cfg.dataset.idx;
        if (i.train_images.empty() || i.train_labels.empty() || i.test_images.empty() || i.test_labels.empty())
            throw ValidationError("config: dataset.kind=idx needs train/test image and label paths");
    } else {
        const auto& s = cfg.dataset.synthetic;
        if (s.classes < 2 || s.samples <= 0 || s.image_size <= 0 || s.channels <= 0 || s.blobs_per_class <= 0)
            throw ValidationError("config: synthetic dataset parameters out of range");
        if (cfg.dataset.test_samples <= 0) throw ValidationError("config: dataset.test_samples must be positive");
    }
    if (cfg.probe_size < 4) throw ValidationError("config: engine.probe_size must be at least 4");
    if (cfg.baseline_runs < 1) throw ValidationError("config: baseline.runs must be at least 1");
    if (cfg.train.epochs < 0) throw ValidationError("config: train.epochs must be non-negative");
    validate(cfg.engine);
}

std::string to_config_text(const RunConfig& cfg) {
    std::ostringstream os;
    auto schedule = [](const std::vector<LrStep>& s) {
        std::string out;
        for (std::size_t i = 0; i < s.size(); ++i) out += (i ? "," : "") + std::to_string(s[i].epoch) + ":" + num(s[i].multiplier);
        return out;
    };
    if (cfg.dataset.idx) {
        const auto& i = *cfg.dataset.idx;
        os << "dataset.kind=idx\n"
           << "dataset.train_images=" << i.train_images.string() << "\n"
           << "dataset.train_labels=" << i.train_labels.string() << "\n"
           << "dataset.test_images=" << i.test_images.string() << "\n"
           << "dataset.test_labels=" << i.test_labels.string() << "\n"
           << "dataset.idx_classes=" << i.classes << "\n";
    } else {
        const auto& s = cfg.dataset.synthetic;
        os << "dataset.kind=synthetic\n"
           << "dataset.seed=" << s.seed << "\n"
           << "dataset.classes=" << s.classes << "\n"
           << "dataset.samples=" << s.samples << "\n"
           << "dataset.test_samples=" << cfg.dataset.test_samples << "\n"
           << "dataset.image_size=" << s.image_size << "\n"
           << "dataset.channels=" << s.channels << "\n"
           << "dataset.blobs_per_class=" << s.blobs_per_class << "\n"
           << "dataset.jitter=" << num(s.jitter) << "\n"
           << "dataset.noise=" << num(s.noise) << "\n";
    }
    os << "arch.widths=" << join(cfg.arch.widths) << "\n"
       << "arch.blocks=" << join(cfg.arch.blocks) << "\n"
       << "train.seed=" << cfg.train_seed << "\n"
       << "train.epochs=" << cfg.train.epochs << "\n"
       << "train.batch_size=" << cfg.train.batch_size << "\n"
       << "train.learning_rate=" << num(cfg.train.learning_rate) << "\n"
       << "train.momentum=" << num(cfg.train.momentum) << "\n"
       << "train.weight_decay=" << num(cfg.train.weight_decay) << "\n"
       << "train.lr_schedule=" << schedule(cfg.train.lr_schedule) << "\n"
       << "finetune.batch_size=" << cfg.engine.finetune.batch_size << "\n"
       << "finetune.learning_rate=" << num(cfg.engine.finetune.learning_rate) << "\n"
       << "finetune.momentum=" << num(cfg.engine.finetune.momentum) << "\n"
       << "finetune.weight_decay=" << num(cfg.engine.finetune.weight_decay) << "\n"
       << "engine.K=" << cfg.engine.K << "\n"
       << "engine.epsilon=" << num(cfg.engine.epsilon) << "\n"
       << "engine.recovery_epochs=" << cfg.engine.recovery_epochs << "\n"
       << "engine.post_select_epochs=" << cfg.engine.post_select_epochs << "\n"
       << "engine.mode=" << to_string(cfg.engine.mode) << "\n"
       << "engine.metric=" << to_string(cfg.engine.metric) << "\n"
       << "engine.criterion=" << to_string(cfg.engine.criterion) << "\n"
       << "engine.seed=" << cfg.engine.seed << "\n"
       << "engine.stop_on_negative_delta=" << (cfg.engine.stop_on_negative_delta ? "true" : "false") << "\n"
       << "engine.tau=" << num(cfg.engine.tau) << "\n"
       << "engine.group_size=" << cfg.engine.group_size << "\n"
       << "engine.probe_size=" << cfg.probe_size << "\n"
       << "baseline.runs=" << cfg.baseline_runs << "\n"
       << "out_dir=" << cfg.out_dir.string() << "\n";
    return os.str();
}

}  // namespace prunetree
