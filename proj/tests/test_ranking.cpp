#include <doctest.h>

#include <cmath>

#include "ccqa/errors.hpp"
#include "ccqa/ranking.hpp"
#include "ccqa/rng.hpp"
#include "oracles.hpp"

using namespace ccqa;

namespace {

QuestionPool scored_pool(const std::vector<double>& r, const std::vector<int>& votes,
                         const std::vector<std::int64_t>& ids) {
    QuestionPool p;
    p.question_id = 42;
    p.title = "Ranking test question title";
    for (std::size_t i = 0; i < r.size(); ++i) {
        AnswerRecord a;
        a.answer_id = ids[i];
        a.content = "answer " + std::to_string(ids[i]);
        a.votes = votes[i];
        a.r = r[i];
        a.s_q = 0.0;
        a.s_u = 0.0;
        a.s_l = 0.5;
        p.answers.push_back(std::move(a));
    }
    return p;
}

}  // namespace

TEST_CASE("ranked pool sorts by descending r") {
    const auto ranked = build_ranked_pool(scored_pool({0.2, 0.9, 0.5}, {1, 1, 1}, {1, 2, 3}));
    REQUIRE(ranked.answers.size() == 3);
    CHECK(ranked.answers[0].answer_id == 2);
    CHECK(ranked.answers[1].answer_id == 3);
    CHECK(ranked.answers[2].answer_id == 1);
    CHECK(ranked.answers[0].rank == 1);
    CHECK(ranked.answers[2].rank == 3);
    CHECK(ranked.tie_break_trace.empty());
}

TEST_CASE("ties break by votes then by smaller answer id, with a trace") {
    auto ranked = build_ranked_pool(scored_pool({0.5, 0.5}, {3, 10}, {1, 2}));
    CHECK(ranked.answers[0].answer_id == 2);  // 10 votes first
    REQUIRE(ranked.tie_break_trace.size() == 1);
    CHECK(ranked.tie_break_trace[0].position == 2);
    CHECK(ranked.tie_break_trace[0].rule == "votes");

    ranked = build_ranked_pool(scored_pool({0.5, 0.5}, {7, 7}, {42, 7}));
    CHECK(ranked.answers[0].answer_id == 7);
    REQUIRE(ranked.tie_break_trace.size() == 1);
    CHECK(ranked.tie_break_trace[0].rule == "answer_id");
}

TEST_CASE("ranking keeps the answer multiset and respects max pool size") {
    const auto pool = scored_pool({0.1, 0.8, 0.4, 0.6}, {1, 2, 3, 4}, {11, 12, 13, 14});
    const auto ranked = build_ranked_pool(pool);
    std::vector<std::int64_t> ids;
    for (const auto& a : ranked.answers) ids.push_back(a.answer_id);
    std::sort(ids.begin(), ids.end());
    CHECK(ids == std::vector<std::int64_t>{11, 12, 13, 14});

    const auto capped = build_ranked_pool(pool, 2);
    REQUIRE(capped.answers.size() == 2);
    CHECK(capped.answers[0].answer_id == 12);
    CHECK(capped.answers[1].answer_id == 14);
}

TEST_CASE("order is invariant under strictly increasing transforms of r") {
    Rng rng(3, "ranking-test");
    for (int trial = 0; trial < 30; ++trial) {
        const int n = static_cast<int>(rng.uniform_int(2, 8));
        std::vector<double> r;
        std::vector<int> votes;
        std::vector<std::int64_t> ids;
        for (int i = 0; i < n; ++i) {
            r.push_back(rng.uniform_range(-2, 2));
            votes.push_back(static_cast<int>(rng.uniform_int(0, 30)));
            ids.push_back(i + 1);
        }
        std::vector<double> transformed;
        for (double x : r) transformed.push_back(std::exp(3.0 * x) + 1.0);

        const auto a = build_ranked_pool(scored_pool(r, votes, ids));
        const auto b = build_ranked_pool(scored_pool(transformed, votes, ids));
        for (std::size_t i = 0; i < a.answers.size(); ++i) {
            CHECK(a.answers[i].answer_id == b.answers[i].answer_id);
        }
    }
}

TEST_CASE("unscored answers cannot be ranked") {
    QuestionPool p = scored_pool({0.5, 0.2}, {1, 1}, {1, 2});
    p.answers[1].r.reset();
    CHECK_THROWS_AS(build_ranked_pool(p), DomainError);
}

TEST_CASE("bradley-terry probability values") {
    CHECK(bt_prob(1.0, 1.0) == 0.5);
    CHECK(bt_prob(std::log(3.0), 0.0) == doctest::Approx(0.75).epsilon(1e-12));
    Rng rng(9, "bt-test");
    for (int i = 0; i < 100; ++i) {
        const double a = rng.uniform_range(-20, 20);
        const double b = rng.uniform_range(-20, 20);
        CHECK(bt_prob(a, b) + bt_prob(b, a) == doctest::Approx(1.0).epsilon(1e-12));
    }
}

TEST_CASE("first round probability uses the full softmax") {
    const std::vector<double> equal = {1.0, 1.0, 1.0};
    CHECK(first_round_prob(equal) == doctest::Approx(1.0 / 3).epsilon(1e-12));
    const std::vector<double> pair = {std::log(2.0), 0.0};
    CHECK(first_round_prob(pair) == doctest::Approx(2.0 / 3).epsilon(1e-12));
    CHECK(first_round_prob(std::vector<double>{0.0, 0.0}) == 0.5);
}

TEST_CASE("plackett-luce full-order probability") {
    const std::vector<double> equal3 = {0.4, 0.4, 0.4};
    CHECK(plackett_luce_prob(equal3).prob == doctest::Approx(1.0 / 6).epsilon(1e-12));

    // N = 2 reduces to the pairwise model.
    const std::vector<double> pair = {0.7, -0.3};
    CHECK(plackett_luce_prob(pair).prob ==
          doctest::Approx(bt_prob(0.7, -0.3)).epsilon(1e-12));

    // Frozen value from the independent high-precision oracle.
    const std::vector<double> four = {2.0, 1.0, 0.0, -1.0};
    CHECK(plackett_luce_prob(four).prob ==
          doctest::Approx(0.31315489128052752).epsilon(1e-12));
    CHECK(plackett_luce_prob(four).prob ==
          doctest::Approx(oracle::plackett_luce({2, 1, 0, -1})).epsilon(1e-12));
    CHECK(plackett_luce_prob(four).log_prob ==
          doctest::Approx(std::log(0.31315489128052752)).epsilon(1e-12));
}

TEST_CASE("probabilities over all orders sum to one") {
    Rng rng(17, "pl-test");
    for (int trial = 0; trial < 20; ++trial) {
        const int n = static_cast<int>(rng.uniform_int(2, 5));
        std::vector<double> scores;
        for (int i = 0; i < n; ++i) scores.push_back(rng.uniform_range(-3, 3));
        CHECK(oracle::plackett_luce_permutation_sum(scores) ==
              doctest::Approx(1.0).epsilon(1e-9));
        // and our implementation agrees with the naive product per order
        CHECK(plackett_luce_prob(scores).prob ==
              doctest::Approx(oracle::plackett_luce(scores)).epsilon(1e-10));
    }
}

TEST_CASE("shift invariance: adding a constant changes nothing") {
    Rng rng(23, "shift-test");
    for (int trial = 0; trial < 50; ++trial) {
        const int n = static_cast<int>(rng.uniform_int(2, 6));
        std::vector<double> scores, shifted;
        const double c = rng.uniform_range(-50, 50);
        for (int i = 0; i < n; ++i) {
            scores.push_back(rng.uniform_range(-5, 5));
            shifted.push_back(scores.back() + c);
        }
        CHECK(plackett_luce_prob(scores).prob ==
              doctest::Approx(plackett_luce_prob(shifted).prob).epsilon(1e-12));
        CHECK(first_round_prob(scores) ==
              doctest::Approx(first_round_prob(shifted)).epsilon(1e-12));
        CHECK(bt_prob(scores[0], scores[1]) ==
              doctest::Approx(bt_prob(shifted[0], shifted[1])).epsilon(1e-12));
    }
}

TEST_CASE("ranking probability domain errors") {
    CHECK_THROWS_AS(first_round_prob(std::vector<double>{1.0}), DomainError);
    const std::vector<double> bad = {1.0, std::numeric_limits<double>::infinity()};
    CHECK_THROWS_AS(first_round_prob(bad), DomainError);
    CHECK_THROWS_AS(plackett_luce_prob(bad), DomainError);
    CHECK_THROWS_AS(bt_prob(std::nan(""), 0.0), DomainError);
}
