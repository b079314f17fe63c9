#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ccqa/corpus.hpp"
#include "ccqa/lm.hpp"

namespace ccqa {

enum class TrainStage { Sft, Mpra };

struct TrainConfig {
    TrainStage stage = TrainStage::Sft;
    int epochs = 4;
    double learning_rate = 0.05;  // MPRA stage default is 1e-2
    int grad_accum_steps = 1;
    double alpha = 1.0;           // weight of the top-candidate NLL term
    Aggregation aggregation = Aggregation::MeanLogProb;
    int max_seq_len = 256;
    std::uint64_t seed = 1;
    bool shuffle = true;
    int jobs = 1;

    void validate() const;  // epochs >= 0, learning_rate > 0, accum >= 1
};

struct EpochLog {
    int epoch = 0;
    double mean_loss = 0.0;
    std::optional<double> ranking_tau;  // MPRA only
};

struct TrainLog {
    std::string stage;
    std::uint64_t seed = 0;
    std::vector<EpochLog> epochs;
    bool diverged = false;
    std::size_t items = 0;
    // Measured but kept out of the serialized artifact so identical runs
    // produce identical files.
    double wall_clock_ms = 0.0;

    std::string to_json(const std::string& config_snapshot) const;
};

struct TrainResult {
    LmParameters params;
    TrainLog log;
};

// Tokenized training items.
struct EncodedPool {
    std::vector<int> prompt;
    std::vector<std::vector<int>> answers;  // preference order
    std::vector<double> r;                  // matching preference scores
};

std::vector<SftItem> encode_sft_pairs(const Vocabulary& vocab, std::span<const SftPair> pairs,
                                      int max_seq_len);
// Pools must already be ranked; pools with fewer than 2 answers are rejected.
std::vector<EncodedPool> encode_ranked_pools(const Vocabulary& vocab,
                                             std::span<const QuestionPool> pools,
                                             int max_seq_len);

// Mean loss/gradient over items, computed chunkwise: item gradients fill
// per-index slots in parallel and reduce in item order, so any jobs value
// yields the same bytes as the serial path.
LossResult batch_sft_gradient(const LmParameters& params, std::span<const SftItem> items,
                              std::span<const std::size_t> order, int jobs);
LossResult batch_mpra_gradient(const LmParameters& params, std::span<const EncodedPool> pools,
                               std::span<const std::size_t> order, double alpha,
                               Aggregation mode, int jobs);

// Kendall tau-b between model sequence scores and preference scores, averaged
// over pools where it is defined.
std::optional<double> mean_ranking_tau(const LmParameters& params,
                                       std::span<const EncodedPool> pools, Aggregation mode,
                                       int jobs);

// Plain SGD over the SFT pairs; deterministic for a fixed seed.
TrainResult train_sft(const TrainConfig& config, const Vocabulary& vocab,
                      std::span<const SftPair> pairs, LmParameters init);

// Plain SGD on the combined listwise + top-candidate objective over ranked
// pools; logs per-epoch ranking agreement.
TrainResult train_mpra(const TrainConfig& config, const Vocabulary& vocab,
                       std::span<const QuestionPool> ranked_pools, LmParameters init);

// 95/5 train/validation split by a deterministic hash of the question id.
bool is_validation_question(std::int64_t question_id, double val_fraction = 0.05);

}  // namespace ccqa
