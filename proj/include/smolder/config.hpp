#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"
#include "smolder/clip_dataset.hpp"
#include "smolder/evaluation.hpp"
#include "smolder/inference.hpp"
#include "smolder/ir_labeling.hpp"
#include "smolder/model.hpp"
#include "smolder/training.hpp"

namespace smolder {

namespace fs = std::filesystem;

struct DatasetSection {
    int seq_len = 20;
    double test_fraction = 155.0 / 509.0;
    std::uint64_t seed = 0;
    AlignPolicy align = AlignPolicy::Crop;
};

struct EvalSection {
    MatchConfig match;
    Split split = Split::Test;
};

struct SynthSection {
    SynthSceneConfig scene;
    int n_scenes = 4;
};

struct PathsSection {
    std::string runs_root = "runs";  // SMOLDER_RUNS_DIR takes precedence
};

/// Fully resolved configuration of one command invocation.
struct RunConfig {
    LabelingConfig labeling;
    DatasetSection dataset;
    ModelConfig model;
    TrainConfig train;
    InferenceConfig infer;
    EvalSection eval;
    SynthSection synth;
    std::string run_id;  // empty: derived from the command and config hash
    PathsSection paths;

    void validate() const;
};

nlohmann::json to_json(const RunConfig& cfg);
/// Strict conversion: every key must be known and typed as in the defaults.
RunConfig run_config_from_json(const nlohmann::json& j);

/// Defaults, then the file (if non-empty path), then `key.path=value` overrides.
/// Override values are read as JSON, falling back to a plain string.
RunConfig parse_config(const fs::path& path, const std::vector<std::string>& overrides = {});
RunConfig parse_config_text(const std::string& text, const std::vector<std::string>& overrides = {});

/// SHA-256 of the canonical JSON without run_id and paths.
std::string config_hash(const RunConfig& cfg);

fs::path runs_root(const RunConfig& cfg);

}  // namespace smolder
