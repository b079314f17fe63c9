#pragma once

#include <span>
#include <vector>

#include "ccqa/corpus.hpp"

namespace ccqa {

// A ranked pool is a QuestionPool whose answers are reordered by descending
// r (ties: higher votes, then smaller answer id) with rank fields and a
// tie-break trace filled in.
using RankedPool = QuestionPool;

// Requires every answer to carry r. maxPoolSize = 0 means unlimited;
// otherwise the ranked pool keeps only the top entries.
RankedPool build_ranked_pool(QuestionPool pool, std::size_t max_pool_size = 0);

double log_sum_exp(std::span<const double> values);

// exp(s_i) / (exp(s_i) + exp(s_j)), i.e. logistic(s_i - s_j).
double bt_prob(double score_i, double score_j);

// First elimination round: softmax weight of the top-ranked answer.
double first_round_prob(std::span<const double> model_scores);

struct ListwiseProb {
    double prob = 0.0;
    double log_prob = 0.0;
};

// Probability of the full order: product over rounds of the leading answer's
// softmax weight among the not-yet-eliminated ones. Log-domain throughout.
ListwiseProb plackett_luce_prob(std::span<const double> model_scores);

// Negative log of plackett_luce_prob; the listwise ranking loss over already
// computed per-answer model scores.
double listwise_ranked_nll(std::span<const double> model_scores);

}  // namespace ccqa
