#include "ccqa/ranking.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "ccqa/errors.hpp"
#include "ccqa/scoring.hpp"

namespace ccqa {

namespace {

void require_finite(std::span<const double> scores) {
    if (scores.size() < 2) throw DomainError("ranking probabilities need at least 2 scores");
    for (double s : scores) {
        if (!std::isfinite(s)) throw DomainError("non-finite model score");
    }
}

}  // namespace

RankedPool build_ranked_pool(QuestionPool pool, std::size_t max_pool_size) {
    for (const AnswerRecord& a : pool.answers) {
        if (!a.r) {
            throw DomainError("build_ranked_pool: answer " + std::to_string(a.answer_id) +
                              " has no preference score");
        }
    }
    std::vector<std::size_t> order(pool.answers.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t ia, std::size_t ib) {
        const AnswerRecord& a = pool.answers[ia];
        const AnswerRecord& b = pool.answers[ib];
        if (*a.r != *b.r) return *a.r > *b.r;
        if (a.votes != b.votes) return a.votes > b.votes;
        return a.answer_id < b.answer_id;
    });

    std::vector<AnswerRecord> ranked;
    ranked.reserve(order.size());
    for (std::size_t idx : order) ranked.push_back(std::move(pool.answers[idx]));

    pool.tie_break_trace.clear();
    for (std::size_t i = 0; i + 1 < ranked.size(); ++i) {
        if (*ranked[i].r == *ranked[i + 1].r) {
            pool.tie_break_trace.push_back(
                {static_cast<int>(i + 2),
                 ranked[i].votes != ranked[i + 1].votes ? "votes" : "answer_id"});
        }
    }
    if (max_pool_size > 0 && ranked.size() > max_pool_size) {
        ranked.resize(max_pool_size);
    }
    for (std::size_t i = 0; i < ranked.size(); ++i) ranked[i].rank = static_cast<int>(i + 1);
    pool.answers = std::move(ranked);
    pool.has_accepted = std::any_of(pool.answers.begin(), pool.answers.end(),
                                    [](const AnswerRecord& a) { return a.accepted; });
    return pool;
}

double log_sum_exp(std::span<const double> values) {
    double m = values[0];
    for (double v : values) m = std::max(m, v);
    double sum = 0.0;
    for (double v : values) sum += std::exp(v - m);
    return m + std::log(sum);
}

double bt_prob(double score_i, double score_j) {
    if (!std::isfinite(score_i) || !std::isfinite(score_j)) {
        throw DomainError("non-finite model score");
    }
    return 1.0 / (1.0 + std::exp(-(score_i - score_j)));
}

double first_round_prob(std::span<const double> model_scores) {
    require_finite(model_scores);
    return std::exp(model_scores[0] - log_sum_exp(model_scores));
}

ListwiseProb plackett_luce_prob(std::span<const double> model_scores) {
    ListwiseProb out;
    out.log_prob = -listwise_ranked_nll(model_scores);
    out.prob = std::exp(out.log_prob);
    return out;
}

double listwise_ranked_nll(std::span<const double> model_scores) {
    require_finite(model_scores);
    const std::size_t n = model_scores.size();
    double nll = 0.0;
    for (std::size_t i = 0; i + 1 < n; ++i) {
        nll += log_sum_exp(model_scores.subspan(i)) - model_scores[i];
    }
    return nll;
}

}  // namespace ccqa
