#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "ccqa/xml_ingest.hpp"

namespace ccqa {

struct TieBreak {
    int position = 0;      // 1-based rank position whose order a tie rule decided
    std::string rule;      // "votes" or "answer_id"
};

struct AnswerRecord {
    std::int64_t answer_id = 0;
    std::string content;   // cleaned text, code fenced with ```
    int votes = 0;
    bool accepted = false;
    bool has_code = false;

    // Filled by preference scoring.
    std::optional<double> s_q, s_u, s_l, r;
    // Filled by ranking.
    std::optional<int> rank;
};

struct QuestionPool {
    std::int64_t question_id = 0;
    std::string title;
    std::string body;
    std::vector<AnswerRecord> answers;
    bool has_accepted = false;

    // Present on scored corpora.
    std::optional<std::array<double, 3>> score_weights;
    std::optional<std::string> score_mode;  // "geomean" | "exact"
    // Present on ranked corpora.
    std::vector<TieBreak> tie_break_trace;

    std::string question_text() const;  // title + blank line + body
};

enum class RejectReason { ShortTitle, NoCodeAnswer, SmallPool };

struct FilterReport {
    std::uint64_t short_title = 0;     // title of <= 3 whitespace tokens
    std::uint64_t no_code_answer = 0;  // every answer lacked a code block
    std::uint64_t small_pool = 0;      // fewer than 2 answers survived
    std::uint64_t retained = 0;
    std::uint64_t dropped_answers = 0; // code-rule answer drops (pools reaching rule 2)

    std::uint64_t input_pools() const {
        return retained + short_title + no_code_answer + small_pool;
    }
};

// HTML cleaning:
//   <a>...</a> and <img> (inner text included) -> "[HTML]"
//   <pre><code>...</code></pre>               -> fenced code block, unescaped verbatim
//   <code>x</code>                            -> `x`
//   remaining tags stripped, entities unescaped, 3+ newlines collapse to 2
// Total function; unbalanced tags are resolved by a best-effort forward scan.
std::string clean_html(std::string_view body_html);

// True when the raw HTML contains a <pre><code> block (inline <code> does not count).
bool has_code_block(std::string_view body_html);

struct FilterOutcome {
    std::optional<QuestionPool> pool;        // set when retained
    std::optional<RejectReason> reason;      // set when rejected
    std::uint64_t answers_dropped = 0;       // rule-2 drops (0 for short-title rejects)
};

// Rule 1: reject titles of <= 3 whitespace tokens. Rule 2: drop answers
// without a code block. Rule 3: reject pools with < 2 answers left.
FilterOutcome apply_filters(const QuestionPool& pool);

// Unescapes the dump attribute text once, cleans HTML, sets has_code and
// has_accepted. Does not filter.
QuestionPool build_pool(const RawPool& raw);

// build_pool + apply_filters over all pools; parallel when jobs > 1,
// deterministic output order either way.
std::vector<QuestionPool> build_corpus(const std::vector<RawPool>& raw,
                                       FilterReport& report, int jobs = 1);

std::vector<double> default_pool_edges();  // {0,2,5,10,15,20,25,30}; last interval closed

struct Histogram {
    std::vector<double> edges;
    std::vector<std::uint64_t> counts;
    std::uint64_t out_of_range = 0;
    std::uint64_t total = 0;
};

Histogram pool_size_histogram(const std::vector<std::uint64_t>& sizes,
                              const std::vector<double>& edges = default_pool_edges());
Histogram pool_stats(const std::vector<QuestionPool>& pools,
                     const std::vector<double>& edges = default_pool_edges());

// Plain-text table: interval row, count row, percentage row (2 decimals).
std::string format_stats_table(const Histogram& h);
std::string stats_json(const Histogram& h);

// Reads only the answers-array length per line, so it accepts raw-pool,
// corpus, scored, and ranked records alike.
std::vector<std::uint64_t> read_pool_sizes_jsonl(std::istream& in);

struct SftPair {
    std::int64_t question_id = 0;
    std::string question;  // title + blank line + body
    std::string answer;    // accepted answer content
};

// (question, accepted answer) pairs with accepted votes strictly above min_votes.
std::vector<SftPair> build_sft_set(const std::vector<QuestionPool>& pools, int min_votes = 100);

// Line-delimited corpus interchange; scored/ranked fields round-trip when present.
void write_corpus(std::ostream& out, const std::vector<QuestionPool>& pools);
std::vector<QuestionPool> read_corpus(std::istream& in);

void write_corpus_file(const std::string& path, const std::vector<QuestionPool>& pools);
std::vector<QuestionPool> read_corpus_file(const std::string& path);

}  // namespace ccqa
