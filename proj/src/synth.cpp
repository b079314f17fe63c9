#include "ccqa/synth.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "ccqa/errors.hpp"
#include "ccqa/ranking.hpp"
#include "ccqa/rng.hpp"

namespace ccqa {

namespace {

// 6 + 20 + 20 = 46 distinct tokens.
const std::vector<std::string>& question_tokens() {
    static const std::vector<std::string> v = {"how", "do", "i", "use", "the", "lib"};
    return v;
}

std::vector<std::string> prefixed(const char* prefix, int count) {
    std::vector<std::string> v;
    v.reserve(static_cast<std::size_t>(count));
    for (int i = 0; i < count; ++i) {
        std::string t = prefix;
        if (i < 10) t += '0';
        t += std::to_string(i);
        v.push_back(std::move(t));
    }
    return v;
}

std::string join(const std::vector<std::string>& tokens) {
    std::string out;
    for (std::size_t i = 0; i < tokens.size(); ++i) {
        if (i > 0) out.push_back(' ');
        out += tokens[i];
    }
    return out;
}

}  // namespace

std::vector<QuestionPool> synth_pools(const SynthConfig& config) {
    if (config.pool_count < 1 || config.min_answers < 2 ||
        config.max_answers < config.min_answers || config.answer_tokens < 1) {
        throw DomainError("invalid synthetic pool configuration");
    }
    const std::vector<std::string> good = prefixed("g", 20);
    const std::vector<std::string> bad = prefixed("b", 20);
    const std::vector<double> levels = {0.05, 0.2, 0.35, 0.5, 0.65, 0.8, 0.95};

    Rng rng(config.seed, "synth");
    std::vector<QuestionPool> pools;
    pools.reserve(static_cast<std::size_t>(config.pool_count));

    for (int p = 0; p < config.pool_count; ++p) {
        QuestionPool pool;
        pool.question_id = 1000 + p;

        const int q_len = static_cast<int>(rng.uniform_int(4, 8));
        std::vector<std::string> q_toks;
        for (int i = 0; i < q_len; ++i) {
            q_toks.push_back(question_tokens()[static_cast<std::size_t>(
                rng.uniform_int(0, static_cast<std::int64_t>(question_tokens().size()) - 1))]);
        }
        pool.title = join(q_toks);
        pool.body = "";

        const int n = static_cast<int>(
            rng.uniform_int(config.min_answers,
                            std::min<std::int64_t>(config.max_answers,
                                                   static_cast<std::int64_t>(levels.size()))));
        std::vector<double> pool_levels = levels;
        rng.shuffle(pool_levels);
        pool_levels.resize(static_cast<std::size_t>(n));
        std::sort(pool_levels.rbegin(), pool_levels.rend());  // descending quality

        for (int a = 0; a < n; ++a) {
            const double quality = pool_levels[static_cast<std::size_t>(a)];
            const int good_count = static_cast<int>(
                std::lround(quality * static_cast<double>(config.answer_tokens)));
            std::vector<std::string> toks;
            toks.reserve(static_cast<std::size_t>(config.answer_tokens));
            for (int t = 0; t < config.answer_tokens; ++t) {
                const std::vector<std::string>& pick = t < good_count ? good : bad;
                toks.push_back(pick[static_cast<std::size_t>(
                    rng.uniform_int(0, static_cast<std::int64_t>(pick.size()) - 1))]);
            }
            rng.shuffle(toks);

            AnswerRecord rec;
            rec.answer_id = pool.question_id * 100 + a + 1;
            rec.content = join(toks);
            rec.votes = 100 + static_cast<int>(std::lround(400.0 * quality));
            rec.accepted = a == 0;  // highest quality
            rec.has_code = false;
            rec.s_q = 0.0;
            rec.s_u = quality;
            rec.s_l = 0.5;
            rec.r = quality;
            pool.answers.push_back(std::move(rec));
        }
        pool.has_accepted = true;
        pool.score_weights = std::array<double, 3>{0.0, 1.0, 0.0};
        pool.score_mode = "geomean";
        pools.push_back(build_ranked_pool(std::move(pool)));
    }
    return pools;
}

}  // namespace ccqa
