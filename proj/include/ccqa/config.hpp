#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "ccqa/lm.hpp"
#include "ccqa/scoring.hpp"
#include "ccqa/trainer.hpp"

namespace ccqa {

extern const char* const kToolVersion;

struct PathsConfig {
    std::string dump = "data/Posts.xml";
    std::string raw_pools = "out/raw_pools.jsonl";
    std::string corpus = "out/corpus.jsonl";
    std::string scored = "out/scored.jsonl";
    std::string ranked = "out/ranked.jsonl";
    std::string index = "out/bank_index.jsonl";
    std::string runs_dir = "out/runs";
    std::string reports_dir = "out/reports";
    std::string generations = "out/generations.jsonl";
};

struct ScoringConfig {
    ScoreWeights weights;
    std::string mode = "geomean";     // geomean | exact
    std::string provider = "constant";  // constant | file:PATH | command:CMD
};

struct StageConfig {
    int epochs = 4;
    double learning_rate = 0.05;
    int grad_accum_steps = 1;
    double alpha = 1.0;
    std::string aggregation = "mean";  // mean | sum
    int max_seq_len = 256;
    bool shuffle = true;
};

struct RetrievalSettings {
    int k = 1;
    std::string template_path;        // empty: built-in default template
    std::string provider = "bm25";    // bm25 | dense:PATH
    std::string bank = "full";        // full | train
    int max_pool_size = 0;            // 0: unlimited (rank step)
};

struct GenerationConfig {
    double temperature = 0.2;
    double top_p = 0.95;
    int max_gen_len = 512;
};

struct TokenizerConfig {
    int min_freq = 2;
};

struct ModelConfig {
    int context = 4;
    int embed = 32;
    int hidden = 64;
};

struct PipelineConfig {
    PathsConfig paths;
    ScoringConfig scoring;
    StageConfig sft;
    StageConfig mpra{4, 1e-2, 1, 1.0, "mean", 256, true};
    RetrievalSettings retrieval;
    GenerationConfig generation;
    TokenizerConfig tokenizer;
    ModelConfig model;
    std::string tag_filter = "python";
    std::optional<std::string> cutoff;
    int sft_min_votes = 100;
    double val_fraction = 0.05;
    std::string eval_reference = "top_r";  // top_r | accepted
    std::uint64_t seed = 1;
    int jobs = 1;

    TrainConfig train_config(TrainStage stage) const;

    std::string to_json() const;
    static PipelineConfig from_json(const std::string& text);

    // Load order: file (when given), then CCQA_* environment overrides for
    // scalar fields (CCQA_GENERATION_TEMPERATURE, CCQA_SEED, ...).
    static PipelineConfig load(const std::optional<std::string>& path, bool apply_env = true);

    std::uint64_t config_hash() const;
};

// FNV-1a 64 content digest, hex encoded; cheap drift detection for manifests.
std::string digest_file(const std::string& path);

// Every subcommand writes "<primary_output>.manifest.json" recording the
// config hash, seed, and input/output digests. Rerunning a stage first
// verifies that declared inputs still match the manifests beside them.
void write_manifest(const std::string& primary_output, const std::string& subcommand,
                    const PipelineConfig& config,
                    const std::vector<std::string>& inputs,
                    const std::vector<std::string>& outputs);

// Raises DigestError when `path` no longer matches the output digest recorded
// in its sidecar manifest (if one exists).
void verify_input_digest(const std::string& path);

void ensure_parent_dir(const std::string& path);

}  // namespace ccqa
