#pragma once

#include <cstdint>
#include <vector>

#include "ccqa/corpus.hpp"

namespace ccqa {

// Synthetic ranked pools whose token content correlates with r by
// construction: each answer mixes "good" and "bad" vocabulary tokens in a
// proportion equal to its quality level, and r is that level. Votes and the
// accepted flag follow the quality, so the pools also feed the SFT stage.
struct SynthConfig {
    int pool_count = 50;
    int min_answers = 2;
    int max_answers = 5;
    int answer_tokens = 20;
    std::uint64_t seed = 1;
};

std::vector<QuestionPool> synth_pools(const SynthConfig& config);

}  // namespace ccqa
