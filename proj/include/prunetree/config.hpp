#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "prunetree/dataset.hpp"
#include "prunetree/engine.hpp"
#include "prunetree/substrate.hpp"

namespace prunetree {

struct IdxSource {
    std::filesystem::path train_images;
    std::filesystem::path train_labels;
    std::filesystem::path test_images;
    std::filesystem::path test_labels;
    int classes = 0;  // 0 infers from the labels
};

struct DatasetConfig {
    std::optional<IdxSource> idx;  // empty selects the synthetic generator
    SyntheticConfig synthetic;
    int test_samples = 1024;
};

struct ArchConfig {
    std::vector<int> widths{8, 16, 32};
    std::vector<int> blocks{3, 3, 3};
};

inline EngineConfig default_engine_config() {
    EngineConfig e;
    e.finetune.learning_rate = 0.002;
    return e;
}

struct RunConfig {
    DatasetConfig dataset;
    ArchConfig arch;
    TrainConfig train{30, 64, 0.01, 0.9, 5e-4, {{15, 0.1}}};
    std::uint64_t train_seed = 1;
    EngineConfig engine = default_engine_config();
    int probe_size = 256;
    int baseline_runs = 3;
    std::filesystem::path out_dir = "runs";
};

/// Parses flat `section.key=value` lines; '#' starts a comment. Relative IDX
/// paths resolve against `base_dir`. Unknown or repeated keys are errors.
RunConfig parse_config(const std::string& text, const std::filesystem::path& base_dir = {});
RunConfig load_config(const std::filesystem::path& path);

/// Canonical text form; parse_config(to_config_text(c)) reproduces c.
std::string to_config_text(const RunConfig& cfg);

/// Throws ValidationError on inconsistent settings.
void validate(const RunConfig& cfg);

}  // namespace prunetree
