#include <doctest.h>

#include <sstream>

#include "ccqa/corpus.hpp"
#include "ccqa/errors.hpp"
#include "ccqa/rng.hpp"

using namespace ccqa;

namespace {

QuestionPool make_pool(std::string title, std::vector<AnswerRecord> answers) {
    QuestionPool p;
    p.question_id = 1;
    p.title = std::move(title);
    p.body = "body";
    for (const AnswerRecord& a : answers) {
        if (a.accepted) p.has_accepted = true;
    }
    p.answers = std::move(answers);
    return p;
}

AnswerRecord answer(std::int64_t id, int votes, bool has_code, bool accepted = false) {
    AnswerRecord a;
    a.answer_id = id;
    a.content = has_code ? "text\n```\ncode()\n```\n" : "plain text";
    a.votes = votes;
    a.accepted = accepted;
    a.has_code = has_code;
    return a;
}

}  // namespace

TEST_CASE("clean_html handles inline code and tag stripping") {
    CHECK(clean_html("<p>use <code>pip</code></p>") == "use `pip`");
    CHECK(clean_html("plain text with no tags") == "plain text with no tags");
    CHECK(clean_html("") == "");
}

TEST_CASE("clean_html replaces anchors and images with the [HTML] token") {
    CHECK(clean_html(R"(<a href="u">docs</a>)") == "[HTML]");
    CHECK(clean_html(R"(see <a href="u">the docs</a> here)") == "see [HTML] here");
    CHECK(clean_html(R"(<img src="x.png"/>)") == "[HTML]");
    CHECK(clean_html(R"(<img src="x.png">caption)") == "[HTML]caption");
    // Unclosed anchor eats the remainder (best-effort forward scan).
    CHECK(clean_html(R"(<a href="u">dangling)") == "[HTML]");
}

TEST_CASE("clean_html turns pre/code into fenced blocks with unescaped text") {
    const std::string cleaned = clean_html("<pre><code>if a &lt; b:\n    f(a)\n</code></pre>");
    CHECK(cleaned == "```\nif a < b:\n    f(a)\n```\n");
    // Attributes on the tags are tolerated.
    CHECK(clean_html(R"(<pre class="x"><code class="y">v = 1</code></pre>)") == "```\nv = 1\n```\n");
    // <pre> without <code> is ordinary markup: tags stripped, text kept.
    CHECK(clean_html("<pre>just text</pre>") == "just text");
}

TEST_CASE("clean_html unescapes entities outside code and collapses newline runs") {
    CHECK(clean_html("<p>a &amp;&amp; b</p>") == "a && b");
    CHECK(clean_html("one\n\n\n\n\ntwo") == "one\n\ntwo");
    const std::string mixed = clean_html("<p>first</p>\n\n\n\n<p>second</p>");
    CHECK(mixed == "first\n\nsecond");
}

TEST_CASE("clean_html emits no angle brackets outside fences for tag-only markup") {
    // Prose free of escaped angle brackets; every '<' belongs to a tag.
    const std::string html =
        "<div><p>alpha <b>beta</b></p><ul><li>one</li><li>two</li></ul>"
        "<pre><code>keep &lt;this&gt; verbatim</code></pre><p>tail</p></div>";
    const std::string cleaned = clean_html(html);
    bool in_fence = false;
    std::istringstream lines(cleaned);
    std::string line;
    while (std::getline(lines, line)) {
        if (line == "```") {
            in_fence = !in_fence;
            continue;
        }
        if (!in_fence) CHECK(line.find('<') == std::string::npos);
    }
    CHECK(cleaned.find("keep <this> verbatim") != std::string::npos);
}

TEST_CASE("has_code_block needs a pre/code element") {
    CHECK(has_code_block("<pre><code>x</code></pre>"));
    CHECK_FALSE(has_code_block("<code>x</code>"));
    CHECK_FALSE(has_code_block("<pre>x</pre>"));
    CHECK_FALSE(has_code_block("nothing"));
}

TEST_CASE("filter rule 1 rejects titles up to three tokens inclusive") {
    CHECK(apply_filters(make_pool("How to sort", {answer(1, 5, true), answer(2, 3, true)}))
              .reason == RejectReason::ShortTitle);
    CHECK(apply_filters(make_pool("Sort", {answer(1, 5, true), answer(2, 3, true)})).reason ==
          RejectReason::ShortTitle);
    CHECK(apply_filters(make_pool("  spaced   out   title  ",
                                  {answer(1, 5, true), answer(2, 3, true)}))
              .reason == RejectReason::ShortTitle);
    // Four tokens pass.
    const auto ok = apply_filters(make_pool("How to sort lists",
                                            {answer(1, 5, true), answer(2, 3, true)}));
    CHECK(ok.pool.has_value());
}

TEST_CASE("filter rule 2 drops codeless answers, rule 3 rejects small pools") {
    // 3 answers, 2 lacking code: one survivor -> small pool.
    const auto out = apply_filters(make_pool(
        "A title with many tokens",
        {answer(1, 9, true), answer(2, 5, false), answer(3, 1, false)}));
    CHECK(out.reason == RejectReason::SmallPool);
    CHECK(out.answers_dropped == 2);

    // All answers codeless -> no_code_answer.
    const auto none = apply_filters(make_pool("A title with many tokens",
                                              {answer(1, 9, false), answer(2, 5, false)}));
    CHECK(none.reason == RejectReason::NoCodeAnswer);
    CHECK(none.answers_dropped == 2);

    // No answers at all -> small pool.
    const auto empty = apply_filters(make_pool("A title with many tokens", {}));
    CHECK(empty.reason == RejectReason::SmallPool);
}

TEST_CASE("retained pools keep order and the filter chain is idempotent") {
    const auto out = apply_filters(make_pool(
        "A title with many tokens",
        {answer(1, 9, true, true), answer(2, 5, false), answer(3, 1, true)}));
    REQUIRE(out.pool.has_value());
    REQUIRE(out.pool->answers.size() == 2);
    CHECK(out.pool->answers[0].answer_id == 1);
    CHECK(out.pool->answers[1].answer_id == 3);
    CHECK(out.pool->has_accepted);
    CHECK(out.answers_dropped == 1);

    const auto again = apply_filters(*out.pool);
    REQUIRE(again.pool.has_value());
    CHECK(again.answers_dropped == 0);
    CHECK(again.pool->answers.size() == out.pool->answers.size());
}

TEST_CASE("filter report conservation holds on randomized batches") {
    Rng rng(11, "corpus-test");
    std::vector<RawPool> raw;
    for (int i = 0; i < 60; ++i) {
        RawPool p;
        p.question_id = i + 1;
        const int title_tokens = static_cast<int>(rng.uniform_int(1, 6));
        for (int t = 0; t < title_tokens; ++t) p.title += "w ";
        p.body_html = "&lt;p&gt;body&lt;/p&gt;";
        p.tags = {"python"};
        const int n = static_cast<int>(rng.uniform_int(0, 4));
        for (int a = 0; a < n; ++a) {
            RawAnswer ans;
            ans.answer_id = (i + 1) * 10 + a;
            ans.votes = static_cast<int>(rng.uniform_int(-3, 50));
            ans.body_html = rng.uniform() < 0.5
                                ? "&lt;pre&gt;&lt;code&gt;x&lt;/code&gt;&lt;/pre&gt;"
                                : "&lt;p&gt;text only&lt;/p&gt;";
            p.answers.push_back(ans);
        }
        raw.push_back(std::move(p));
    }
    FilterReport report;
    const auto corpus = build_corpus(raw, report, 1);
    CHECK(report.retained == corpus.size());
    CHECK(report.input_pools() == raw.size());
    for (const QuestionPool& p : corpus) {
        CHECK(p.answers.size() >= 2);
        int accepted = 0;
        for (const AnswerRecord& a : p.answers) {
            CHECK(a.has_code);
            CHECK_FALSE(a.content.empty());
            accepted += a.accepted ? 1 : 0;
        }
        CHECK(accepted <= 1);
    }
}

TEST_CASE("pool_stats buckets sizes with a closed final interval") {
    auto hist = pool_size_histogram({1, 1, 3});
    REQUIRE(hist.counts.size() == 7);
    CHECK(hist.counts[0] == 2);
    CHECK(hist.counts[1] == 1);
    CHECK(hist.total == 3);
    CHECK(hist.out_of_range == 0);

    hist = pool_size_histogram({30});
    CHECK(hist.counts[6] == 1);  // [25,30] closed above

    hist = pool_size_histogram({31});
    CHECK(hist.out_of_range == 1);

    hist = pool_size_histogram({});
    CHECK(hist.total == 0);
    for (auto c : hist.counts) CHECK(c == 0);

    CHECK_THROWS_AS(pool_size_histogram({1}, {5, 5}), DomainError);
}

TEST_CASE("stats table mirrors the interval layout") {
    const auto hist = pool_size_histogram({1, 2, 2, 7});
    const std::string table = format_stats_table(hist);
    CHECK(table.find("[0,2)") != std::string::npos);
    CHECK(table.find("[2,5)") != std::string::npos);
    CHECK(table.find("[25,30]") != std::string::npos);
    CHECK(table.find("Total") != std::string::npos);
    CHECK(table.find("Percentage(%)") != std::string::npos);
    CHECK(table.find("25.00") != std::string::npos);  // 1 of 4
    CHECK(table.find("50.00") != std::string::npos);  // 2 of 4
}

TEST_CASE("percentages sum to 100 within rounding") {
    Rng rng(5, "stats-test");
    std::vector<std::uint64_t> sizes;
    for (int i = 0; i < 997; ++i) {
        sizes.push_back(static_cast<std::uint64_t>(rng.uniform_int(0, 30)));
    }
    const auto hist = pool_size_histogram(sizes);
    double sum = 0.0;
    for (std::size_t i = 0; i < hist.counts.size(); ++i) {
        const double pct = 100.0 * static_cast<double>(hist.counts[i]) /
                           static_cast<double>(hist.total);
        sum += std::round(pct * 100.0) / 100.0;
    }
    CHECK(sum == doctest::Approx(100.0).epsilon(0.0005));
}

TEST_CASE("build_sft_set applies the strict vote threshold") {
    std::vector<QuestionPool> pools;
    pools.push_back(make_pool("Title with enough tokens",
                              {answer(1, 150, true, true), answer(2, 3, true)}));
    pools.push_back(make_pool("Another long enough title",
                              {answer(3, 100, true, true), answer(4, 3, true)}));
    pools.push_back(make_pool("Yet another usable title",
                              {answer(5, 400, true), answer(6, 3, true)}));  // no accepted
    pools[0].question_id = 1;
    pools[1].question_id = 2;
    pools[2].question_id = 3;

    const auto pairs = build_sft_set(pools, 100);
    REQUIRE(pairs.size() == 1);  // 150 > 100; 100 is excluded; unaccepted excluded
    CHECK(pairs[0].question_id == 1);
    CHECK(pairs[0].question.find("Title with enough tokens\n\nbody") == 0);
    CHECK(pairs[0].answer == pools[0].answers[0].content);
}

TEST_CASE("corpus records round-trip including scored and ranked fields") {
    QuestionPool p = make_pool("Round trip title here",
                               {answer(1, 9, true, true), answer(2, 5, true)});
    p.answers[0].s_q = 0.25;
    p.answers[0].s_u = 1.0;
    p.answers[0].s_l = 0.5;
    p.answers[0].r = 1.0 / 3.0;
    p.answers[0].rank = 1;
    p.score_weights = {{0.2, 0.3, 0.5}};
    p.score_mode = "exact";
    p.tie_break_trace.push_back({2, "votes"});

    std::ostringstream out;
    write_corpus(out, {p});
    std::istringstream in(out.str());
    const auto back = read_corpus(in);
    REQUIRE(back.size() == 1);
    CHECK(back[0].answers[0].r == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
    CHECK(back[0].answers[0].rank == 1);
    CHECK(back[0].score_mode == "exact");
    REQUIRE(back[0].tie_break_trace.size() == 1);
    CHECK(back[0].tie_break_trace[0].rule == "votes");

    std::ostringstream second;
    write_corpus(second, back);
    CHECK(out.str() == second.str());
}
