#include "ccqa/corpus.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

#include <json.hpp>

#include "ccqa/errors.hpp"
#include "ccqa/parallel.hpp"

namespace ccqa {

namespace {

using json = nlohmann::json;

inline char lower(char c) {
    return static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
}

// Case-insensitive check that `hay` starts a tag named `name` at `pos`
// (pos points at '<'). The name must end at a delimiter, so "<a" does not
// match "<abbr".
bool tag_starts(std::string_view hay, std::size_t pos, std::string_view name) {
    if (pos + 1 + name.size() > hay.size()) return false;
    for (std::size_t i = 0; i < name.size(); ++i) {
        if (lower(hay[pos + 1 + i]) != name[i]) return false;
    }
    const std::size_t after = pos + 1 + name.size();
    if (after >= hay.size()) return true;
    const char c = hay[after];
    return c == '>' || c == '/' || std::isspace(static_cast<unsigned char>(c)) != 0;
}

// Finds the '>' closing the tag whose '<' is at pos, honoring quotes.
// Returns npos when the input ends first.
std::size_t tag_end(std::string_view s, std::size_t pos) {
    char quote = 0;
    for (std::size_t i = pos + 1; i < s.size(); ++i) {
        const char c = s[i];
        if (quote != 0) {
            if (c == quote) quote = 0;
        } else if (c == '"' || c == '\'') {
            quote = c;
        } else if (c == '>') {
            return i;
        }
    }
    return std::string_view::npos;
}

// Finds a case-insensitive closing tag "</name ... >" at or after `from`.
// Returns {tag_open, after_close} or npos pair.
std::pair<std::size_t, std::size_t> find_close_tag(std::string_view s, std::size_t from,
                                                   std::string_view name) {
    std::size_t i = from;
    while (i < s.size()) {
        const std::size_t lt = s.find('<', i);
        if (lt == std::string_view::npos || lt + 1 >= s.size()) break;
        if (s[lt + 1] == '/') {
            bool match = lt + 2 + name.size() <= s.size();
            for (std::size_t j = 0; match && j < name.size(); ++j) {
                if (lower(s[lt + 2 + j]) != name[j]) match = false;
            }
            if (match) {
                std::size_t k = lt + 2 + name.size();
                while (k < s.size() && std::isspace(static_cast<unsigned char>(s[k])) != 0) ++k;
                if (k < s.size() && s[k] == '>') return {lt, k + 1};
            }
        }
        i = lt + 1;
    }
    return {std::string_view::npos, std::string_view::npos};
}

// <pre ...> optionally followed by whitespace and <code ...>.
struct PreCodeBlock {
    std::size_t inner_begin;  // first char of the code text
    std::size_t inner_end;    // one past the last char
    std::size_t after;        // resume position after </code></pre>
};

std::optional<PreCodeBlock> match_pre_code(std::string_view s, std::size_t pos) {
    if (!tag_starts(s, pos, "pre")) return std::nullopt;
    std::size_t pre_end = tag_end(s, pos);
    if (pre_end == std::string_view::npos) return std::nullopt;
    std::size_t i = pre_end + 1;
    while (i < s.size() && std::isspace(static_cast<unsigned char>(s[i])) != 0) ++i;
    if (i >= s.size() || s[i] != '<' || !tag_starts(s, i, "code")) return std::nullopt;
    std::size_t code_end = tag_end(s, i);
    if (code_end == std::string_view::npos) return std::nullopt;

    PreCodeBlock block;
    block.inner_begin = code_end + 1;
    auto [close_open, close_after] = find_close_tag(s, block.inner_begin, "code");
    if (close_open == std::string_view::npos) {
        block.inner_end = s.size();
        block.after = s.size();
        return block;
    }
    block.inner_end = close_open;
    std::size_t j = close_after;
    while (j < s.size() && std::isspace(static_cast<unsigned char>(s[j])) != 0) ++j;
    if (j < s.size() && s[j] == '<' && tag_starts(s, j, "/pre")) {
        const std::size_t e = tag_end(s, j);
        block.after = e == std::string_view::npos ? s.size() : e + 1;
    } else {
        block.after = close_after;
    }
    return block;
}

// Strips any tags inside inline-code text (kept rare in practice).
std::string strip_tags(std::string_view s) {
    std::string out;
    out.reserve(s.size());
    std::size_t i = 0;
    while (i < s.size()) {
        if (s[i] == '<' && i + 1 < s.size()) {
            const char c = s[i + 1];
            if (std::isalpha(static_cast<unsigned char>(c)) != 0 || c == '/' || c == '!' || c == '?') {
                const std::size_t e = tag_end(s, i);
                if (e != std::string_view::npos) {
                    i = e + 1;
                    continue;
                }
            }
        }
        out.push_back(s[i]);
        ++i;
    }
    return out;
}

class CleanBuilder {
public:
    // Appends prose; collapses runs of 3+ newlines down to 2.
    void text(std::string_view s) {
        for (char c : s) {
            if (c == '\n') {
                if (newline_run_ >= 2) continue;
                ++newline_run_;
            } else {
                newline_run_ = 0;
            }
            out_.push_back(c);
        }
    }

    void fenced_code(std::string_view code) {
        if (!out_.empty() && out_.back() != '\n') out_.push_back('\n');
        out_ += "```\n";
        out_.append(code);
        if (code.empty() || code.back() != '\n') out_.push_back('\n');
        out_ += "```\n";
        newline_run_ = 1;
    }

    void inline_code(std::string_view code) {
        out_.push_back('`');
        out_.append(code);
        out_.push_back('`');
        newline_run_ = 0;
    }

    std::string take() { return std::move(out_); }

private:
    std::string out_;
    int newline_run_ = 0;
};

std::size_t count_title_tokens(std::string_view title) {
    std::size_t count = 0;
    std::size_t i = 0;
    while (i < title.size()) {
        while (i < title.size() && std::isspace(static_cast<unsigned char>(title[i])) != 0) ++i;
        if (i >= title.size()) break;
        ++count;
        while (i < title.size() && std::isspace(static_cast<unsigned char>(title[i])) == 0) ++i;
    }
    return count;
}

std::string format_count(std::uint64_t v) {
    std::string digits = std::to_string(v);
    std::string out;
    const std::size_t n = digits.size();
    for (std::size_t i = 0; i < n; ++i) {
        if (i > 0 && (n - i) % 3 == 0) out.push_back(',');
        out.push_back(digits[i]);
    }
    return out;
}

std::string interval_label(double lo, double hi, bool closed) {
    auto fmt = [](double v) {
        if (v == std::floor(v)) return std::to_string(static_cast<long long>(v));
        std::ostringstream os;
        os << v;
        return os.str();
    };
    return "[" + fmt(lo) + "," + fmt(hi) + (closed ? "]" : ")");
}

}  // namespace

std::string QuestionPool::question_text() const { return title + "\n\n" + body; }

std::string clean_html(std::string_view body_html) {
    CleanBuilder out;
    std::string pending;  // prose accumulated before entity unescaping
    auto flush_text = [&]() {
        if (pending.empty()) return;
        out.text(decode_xml_entities(pending));
        pending.clear();
    };

    std::size_t i = 0;
    const std::size_t n = body_html.size();
    while (i < n) {
        const char c = body_html[i];
        if (c != '<') {
            pending.push_back(c);
            ++i;
            continue;
        }
        if (tag_starts(body_html, i, "a")) {
            flush_text();
            auto [close_open, close_after] = find_close_tag(body_html, i, "a");
            out.text("[HTML]");
            i = close_after == std::string_view::npos ? n : close_after;
            continue;
        }
        if (tag_starts(body_html, i, "img")) {
            flush_text();
            const std::size_t e = tag_end(body_html, i);
            out.text("[HTML]");
            i = e == std::string_view::npos ? n : e + 1;
            continue;
        }
        if (auto block = match_pre_code(body_html, i)) {
            flush_text();
            out.fenced_code(decode_xml_entities(
                body_html.substr(block->inner_begin, block->inner_end - block->inner_begin)));
            i = block->after;
            continue;
        }
        if (tag_starts(body_html, i, "code")) {
            flush_text();
            const std::size_t e = tag_end(body_html, i);
            if (e == std::string_view::npos) {
                i = n;
                continue;
            }
            auto [close_open, close_after] = find_close_tag(body_html, e + 1, "code");
            const std::size_t inner_end = close_open == std::string_view::npos ? n : close_open;
            out.inline_code(decode_xml_entities(
                strip_tags(body_html.substr(e + 1, inner_end - (e + 1)))));
            i = close_after == std::string_view::npos ? n : close_after;
            continue;
        }
        if (i + 3 < n && body_html[i + 1] == '!' && body_html[i + 2] == '-' && body_html[i + 3] == '-') {
            const std::size_t e = body_html.find("-->", i + 4);
            i = e == std::string_view::npos ? n : e + 3;
            continue;
        }
        if (i + 1 < n) {
            const char next = body_html[i + 1];
            if (std::isalpha(static_cast<unsigned char>(next)) != 0 || next == '/' ||
                next == '!' || next == '?') {
                const std::size_t e = tag_end(body_html, i);
                if (e != std::string_view::npos) {
                    i = e + 1;
                    continue;
                }
                // Unterminated tag: consume the rest.
                i = n;
                continue;
            }
        }
        pending.push_back(c);  // bare '<' in malformed text
        ++i;
    }
    flush_text();
    return out.take();
}

bool has_code_block(std::string_view body_html) {
    std::size_t i = 0;
    while (i < body_html.size()) {
        const std::size_t lt = body_html.find('<', i);
        if (lt == std::string_view::npos) return false;
        if (match_pre_code(body_html, lt)) return true;
        i = lt + 1;
    }
    return false;
}

QuestionPool build_pool(const RawPool& raw) {
    QuestionPool pool;
    pool.question_id = raw.question_id;
    // Title/body arrive still carrying the dump's attribute escaping; undo
    // that one level, then clean the actual HTML.
    pool.title = decode_xml_entities(raw.title);
    pool.body = clean_html(decode_xml_entities(raw.body_html));
    for (const RawAnswer& ra : raw.answers) {
        const std::string html = decode_xml_entities(ra.body_html);
        AnswerRecord a;
        a.answer_id = ra.answer_id;
        a.content = clean_html(html);
        a.votes = ra.votes;
        a.accepted = ra.accepted;
        a.has_code = has_code_block(html);
        if (a.accepted) pool.has_accepted = true;
        pool.answers.push_back(std::move(a));
    }
    return pool;
}

FilterOutcome apply_filters(const QuestionPool& pool) {
    FilterOutcome outcome;
    if (count_title_tokens(pool.title) <= 3) {
        outcome.reason = RejectReason::ShortTitle;
        return outcome;
    }
    QuestionPool kept = pool;
    kept.answers.clear();
    kept.has_accepted = false;
    for (const AnswerRecord& a : pool.answers) {
        if (!a.has_code) {
            ++outcome.answers_dropped;
            continue;
        }
        kept.answers.push_back(a);
        if (a.accepted) kept.has_accepted = true;
    }
    if (kept.answers.size() < 2) {
        // no_code_answer marks pools whose every answer lost to the code rule;
        // pools that were already too small stay small_pool.
        outcome.reason = kept.answers.empty() && !pool.answers.empty()
                             ? RejectReason::NoCodeAnswer
                             : RejectReason::SmallPool;
        return outcome;
    }
    outcome.pool = std::move(kept);
    return outcome;
}

std::vector<QuestionPool> build_corpus(const std::vector<RawPool>& raw,
                                       FilterReport& report, int jobs) {
    std::vector<FilterOutcome> outcomes(raw.size());
    for_each_index(static_cast<std::int64_t>(raw.size()), jobs, [&](std::int64_t i) {
        outcomes[i] = apply_filters(build_pool(raw[i]));
    });

    report = FilterReport{};
    std::vector<QuestionPool> corpus;
    for (FilterOutcome& o : outcomes) {
        report.dropped_answers += o.answers_dropped;
        if (o.pool) {
            ++report.retained;
            corpus.push_back(std::move(*o.pool));
        } else {
            switch (*o.reason) {
                case RejectReason::ShortTitle: ++report.short_title; break;
                case RejectReason::NoCodeAnswer: ++report.no_code_answer; break;
                case RejectReason::SmallPool: ++report.small_pool; break;
            }
        }
    }
    return corpus;
}

std::vector<double> default_pool_edges() { return {0, 2, 5, 10, 15, 20, 25, 30}; }

Histogram pool_size_histogram(const std::vector<std::uint64_t>& sizes,
                              const std::vector<double>& edges) {
    if (edges.size() < 2) throw DomainError("histogram needs at least two edges");
    for (std::size_t i = 1; i < edges.size(); ++i) {
        if (!(edges[i - 1] < edges[i])) throw DomainError("histogram edges must be strictly increasing");
    }
    Histogram h;
    h.edges = edges;
    h.counts.assign(edges.size() - 1, 0);
    for (std::uint64_t s : sizes) {
        const double v = static_cast<double>(s);
        ++h.total;
        if (v < edges.front() || v > edges.back()) {
            ++h.out_of_range;
            continue;
        }
        // Final interval is closed on the right.
        std::size_t bucket = h.counts.size() - 1;
        for (std::size_t i = 0; i + 1 < edges.size(); ++i) {
            if (v < edges[i + 1]) {
                bucket = i;
                break;
            }
        }
        ++h.counts[bucket];
    }
    return h;
}

Histogram pool_stats(const std::vector<QuestionPool>& pools, const std::vector<double>& edges) {
    std::vector<std::uint64_t> sizes;
    sizes.reserve(pools.size());
    for (const QuestionPool& p : pools) sizes.push_back(p.answers.size());
    return pool_size_histogram(sizes, edges);
}

std::string format_stats_table(const Histogram& h) {
    std::vector<std::string> labels, counts, pcts;
    labels.emplace_back("Count Interval");
    counts.emplace_back("Count");
    pcts.emplace_back("Percentage(%)");
    for (std::size_t i = 0; i + 1 < h.edges.size(); ++i) {
        labels.push_back(interval_label(h.edges[i], h.edges[i + 1], i + 2 == h.edges.size()));
        counts.push_back(format_count(h.counts[i]));
        const double pct = h.total == 0 ? 0.0
                                        : 100.0 * static_cast<double>(h.counts[i]) /
                                              static_cast<double>(h.total);
        char buf[32];
        std::snprintf(buf, sizeof(buf), "%.2f", pct);
        pcts.emplace_back(buf);
    }
    labels.emplace_back("Total");
    counts.push_back(format_count(h.total));
    pcts.emplace_back("100");

    std::vector<std::size_t> widths(labels.size());
    for (std::size_t i = 0; i < labels.size(); ++i) {
        widths[i] = std::max({labels[i].size(), counts[i].size(), pcts[i].size()});
    }
    auto emit_row = [&](const std::vector<std::string>& cells) {
        std::string row;
        for (std::size_t i = 0; i < cells.size(); ++i) {
            if (i > 0) row += "  ";
            row += cells[i];
            row.append(widths[i] - cells[i].size(), ' ');
        }
        while (!row.empty() && row.back() == ' ') row.pop_back();
        return row + "\n";
    };
    std::string out = emit_row(labels) + emit_row(counts) + emit_row(pcts);
    if (h.out_of_range > 0) {
        out += "out-of-range: " + format_count(h.out_of_range) + "\n";
    }
    return out;
}

std::string stats_json(const Histogram& h) {
    json intervals = json::array();
    for (std::size_t i = 0; i + 1 < h.edges.size(); ++i) {
        const double pct = h.total == 0 ? 0.0
                                        : 100.0 * static_cast<double>(h.counts[i]) /
                                              static_cast<double>(h.total);
        intervals.push_back({{"lo", h.edges[i]},
                             {"hi", h.edges[i + 1]},
                             {"closed", i + 2 == h.edges.size()},
                             {"count", h.counts[i]},
                             {"percent", std::round(pct * 100.0) / 100.0}});
    }
    json rec = {{"intervals", std::move(intervals)},
                {"total", h.total},
                {"out_of_range", h.out_of_range}};
    return rec.dump();
}

std::vector<std::uint64_t> read_pool_sizes_jsonl(std::istream& in) {
    std::vector<std::uint64_t> sizes;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        try {
            const json rec = json::parse(line);
            sizes.push_back(rec.at("answers").size());
        } catch (const json::exception& e) {
            throw IoError("bad pool record at line " + std::to_string(line_no) + ": " + e.what());
        }
    }
    return sizes;
}

std::vector<SftPair> build_sft_set(const std::vector<QuestionPool>& pools, int min_votes) {
    std::vector<SftPair> pairs;
    for (const QuestionPool& p : pools) {
        if (!p.has_accepted) continue;
        for (const AnswerRecord& a : p.answers) {
            if (a.accepted && a.votes > min_votes) {
                pairs.push_back({p.question_id, p.question_text(), a.content});
                break;
            }
        }
    }
    return pairs;
}

void write_corpus(std::ostream& out, const std::vector<QuestionPool>& pools) {
    for (const QuestionPool& p : pools) {
        json answers = json::array();
        for (const AnswerRecord& a : p.answers) {
            json rec = {{"answer_id", a.answer_id},
                        {"content", a.content},
                        {"votes", a.votes},
                        {"accepted", a.accepted},
                        {"has_code", a.has_code}};
            if (a.s_q) rec["s_q"] = *a.s_q;
            if (a.s_u) rec["s_u"] = *a.s_u;
            if (a.s_l) rec["s_l"] = *a.s_l;
            if (a.r) rec["r"] = *a.r;
            if (a.rank) rec["rank"] = *a.rank;
            answers.push_back(std::move(rec));
        }
        json rec = {{"question_id", p.question_id},
                    {"title", p.title},
                    {"body", p.body},
                    {"answers", std::move(answers)},
                    {"has_accepted", p.has_accepted}};
        if (p.score_weights) rec["weights"] = *p.score_weights;
        if (p.score_mode) rec["mode"] = *p.score_mode;
        if (!p.tie_break_trace.empty()) {
            json trace = json::array();
            for (const TieBreak& t : p.tie_break_trace) {
                trace.push_back({{"position", t.position}, {"rule", t.rule}});
            }
            rec["tie_break_trace"] = std::move(trace);
        }
        out << rec.dump() << '\n';
    }
}

std::vector<QuestionPool> read_corpus(std::istream& in) {
    std::vector<QuestionPool> pools;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        json rec;
        try {
            rec = json::parse(line);
        } catch (const json::exception& e) {
            throw IoError("bad corpus record at line " + std::to_string(line_no) + ": " + e.what());
        }
        QuestionPool p;
        p.question_id = rec.at("question_id").get<std::int64_t>();
        p.title = rec.at("title").get<std::string>();
        p.body = rec.at("body").get<std::string>();
        p.has_accepted = rec.at("has_accepted").get<bool>();
        if (rec.contains("weights")) p.score_weights = rec["weights"].get<std::array<double, 3>>();
        if (rec.contains("mode")) p.score_mode = rec["mode"].get<std::string>();
        if (rec.contains("tie_break_trace")) {
            for (const json& t : rec["tie_break_trace"]) {
                p.tie_break_trace.push_back(
                    {t.at("position").get<int>(), t.at("rule").get<std::string>()});
            }
        }
        for (const json& a : rec.at("answers")) {
            AnswerRecord ans;
            ans.answer_id = a.at("answer_id").get<std::int64_t>();
            ans.content = a.at("content").get<std::string>();
            ans.votes = a.at("votes").get<int>();
            ans.accepted = a.at("accepted").get<bool>();
            ans.has_code = a.at("has_code").get<bool>();
            if (a.contains("s_q")) ans.s_q = a["s_q"].get<double>();
            if (a.contains("s_u")) ans.s_u = a["s_u"].get<double>();
            if (a.contains("s_l")) ans.s_l = a["s_l"].get<double>();
            if (a.contains("r")) ans.r = a["r"].get<double>();
            if (a.contains("rank")) ans.rank = a["rank"].get<int>();
            p.answers.push_back(std::move(ans));
        }
        pools.push_back(std::move(p));
    }
    return pools;
}

void write_corpus_file(const std::string& path, const std::vector<QuestionPool>& pools) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write corpus file: " + path);
    write_corpus(out, pools);
}

std::vector<QuestionPool> read_corpus_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot read corpus file: " + path);
    return read_corpus(in);
}

}  // namespace ccqa
