#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "ccqa/rng.hpp"
#include "ccqa/tokenizer.hpp"

namespace ccqa {

// Fixed-context neural n-gram scorer: embeddings -> tanh hidden layer ->
// softmax over the vocabulary. Small enough that every loss has an exact
// hand-derived gradient.
struct LmDims {
    int vocab = 0;
    int context = 4;
    int embed = 32;
    int hidden = 64;

    bool operator==(const LmDims&) const = default;
};

struct LmParameters {
    LmDims dims;
    std::vector<double> embed;  // vocab x embed
    std::vector<double> w1;     // (context*embed) x hidden
    std::vector<double> b1;     // hidden
    std::vector<double> w2;     // hidden x vocab
    std::vector<double> b2;     // vocab

    static LmParameters zeros(const LmDims& dims);
    static LmParameters random_init(const LmDims& dims, Rng& rng, double scale = 0.1);

    void fill_zero();
    void axpy(double a, const LmParameters& x);  // this += a * x
    void scale(double a);
    bool all_finite() const;
    std::size_t coord_count() const;

    // Flat coordinate view spanning embed|w1|b1|w2|b2, for finite differences.
    double get_coord(std::size_t i) const;
    void add_coord(std::size_t i, double delta);

    struct TensorRange {
        const char* name;
        std::size_t begin;
        std::size_t end;
    };
    std::array<TensorRange, 5> tensor_ranges() const;
};

enum class Aggregation { MeanLogProb, SumLogProb };

const char* aggregation_name(Aggregation mode);
Aggregation parse_aggregation(const std::string& name);

struct SequenceScore {
    std::vector<double> token_log_probs;  // per answer position, EOS included
    double aggregate = 0.0;
    Aggregation mode = Aggregation::MeanLogProb;
};

// Log-probabilities over the vocabulary given exactly dims.context token ids.
std::vector<double> forward_log_probs(const LmParameters& params, std::span<const int> context);

// Scores `answer` (EOS appended) autoregressively after `prompt`; contexts
// are the last dims.context tokens of prompt||answer_<t, BOS padded.
SequenceScore sequence_score(const LmParameters& params, std::span<const int> prompt,
                             std::span<const int> answer, Aggregation mode);

struct SftItem {
    std::vector<int> prompt;
    std::vector<int> answer;
};

struct LossResult {
    double loss = 0.0;
    LmParameters grad;
    std::size_t skipped = 0;  // batch items skipped (empty answers)
};

// Mean over the batch of per-item length-normalized NLL; exact analytic
// gradient. Items with empty answers are skipped and counted.
LossResult sft_loss_and_grad(const LmParameters& params, std::span<const SftItem> batch);

// Listwise ranking loss over the candidates in preference order: each round
// contrasts the current best candidate's sequence score against all remaining
// ones. N must be >= 2.
LossResult mpra_loss_and_grad(const LmParameters& params, std::span<const int> prompt,
                              std::span<const std::vector<int>> ranked_answers, Aggregation mode);

// Ranking loss plus alpha times the NLL of the top candidate.
LossResult combined_loss_and_grad(const LmParameters& params, std::span<const int> prompt,
                                  std::span<const std::vector<int>> ranked_answers, double alpha,
                                  Aggregation mode);

// Per-answer sequence aggregates, forward only.
std::vector<double> model_scores(const LmParameters& params, std::span<const int> prompt,
                                 std::span<const std::vector<int>> answers, Aggregation mode);

// Nucleus sampling with temperature; stops at EOS or max_len. Temperatures
// below 1e-6 degrade to argmax. Deterministic for a fixed Rng state.
std::vector<int> generate(const LmParameters& params, std::span<const int> prompt, int max_len,
                          double temperature, double top_p, Rng& rng);

struct GradCheckReport {
    double max_rel_err = 0.0;
    std::size_t coords_checked = 0;
    bool loss_finite = true;
};

// Central finite differences on >= samples_per_tensor random coordinates of
// every tensor; relative error |ga - gn| / max(1, |ga|, |gn|).
GradCheckReport gradient_check(const LmParameters& at,
                               const std::function<double(const LmParameters&)>& loss,
                               const LmParameters& analytic_grad, double h,
                               int samples_per_tensor, Rng& rng);

// Versioned binary checkpoint (vocabulary + tensors), byte-stable for
// identical contents; an embedded digest guards against truncation.
void save_checkpoint(const std::string& path, const Vocabulary& vocab,
                     const LmParameters& params);
std::pair<Vocabulary, LmParameters> load_checkpoint(const std::string& path);

}  // namespace ccqa
