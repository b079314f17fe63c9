#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace ccqa {

enum class PostType { Question, Answer, Other };

// One <row .../> element from a StackExchange-style Posts.xml dump.
// Body/Title keep the attribute text verbatim (still entity-escaped); the
// corpus builder unescapes them. Tags are decoded and split here.
struct RawPost {
    std::int64_t post_id = 0;
    PostType post_type = PostType::Other;
    std::optional<std::int64_t> parent_id;
    std::optional<std::int64_t> accepted_answer_id;
    int score = 0;
    std::optional<std::string> title;
    std::string body;
    std::vector<std::string> tags;
    std::string creation_date;  // "YYYY-MM-DDTHH:MM:SS.mmm" or empty
};

struct ParseStats {
    std::uint64_t rows = 0;
    std::uint64_t malformed_rows = 0;
};

// Decodes &lt; &gt; &amp; &quot; &apos; &#39; &nbsp; and numeric references.
// Single pass, left to right; unknown entities pass through verbatim.
std::string decode_xml_entities(std::string_view s);

// Streaming single-pass row scan; sink receives rows in file order. Rows
// missing Id or PostTypeId (or unparseable) are skipped and counted. A stream
// in a failed state before EOF is a fatal ingest error.
ParseStats parse_dump(std::istream& in, const std::function<void(RawPost&&)>& sink);

std::vector<RawPost> parse_dump_all(std::istream& in, ParseStats* stats = nullptr);

struct RawAnswer {
    std::int64_t answer_id = 0;
    std::string body_html;
    int votes = 0;
    bool accepted = false;
};

struct RawPool {
    std::int64_t question_id = 0;
    std::string title;
    std::string body_html;
    std::vector<std::string> tags;
    std::vector<RawAnswer> answers;  // descending votes, ties ascending id
};

struct AssembleStats {
    std::uint64_t dropped_answers = 0;      // parent absent or filtered out
    std::uint64_t duplicate_posts = 0;      // later occurrence of a seen post_id
    std::uint64_t cutoff_excluded = 0;      // answers past the cutoff (or undated)
    std::uint64_t answer_posts_matched = 0; // answers whose parent question is retained
};

// Links answers to tag-matching questions. Posts may arrive in any order;
// output is sorted by ascending question id regardless. cutoff is inclusive;
// a date-prefix cutoff ("2023-08") covers the whole prefix period.
std::vector<RawPool> assemble_pools(const std::vector<RawPost>& posts,
                                    const std::string& tag_filter,
                                    const std::optional<std::string>& cutoff = std::nullopt,
                                    AssembleStats* stats = nullptr);

// Line-delimited interchange records, one pool per line.
void write_raw_pools(std::ostream& out, const std::vector<RawPool>& pools);
std::vector<RawPool> read_raw_pools(std::istream& in);

// Parses file shards (in parallel when jobs > 1) and assembles one
// deterministic pool list; shard order follows the path list.
std::vector<RawPool> ingest_files(const std::vector<std::string>& paths,
                                  const std::string& tag_filter,
                                  const std::optional<std::string>& cutoff,
                                  int jobs,
                                  ParseStats* parse_stats = nullptr,
                                  AssembleStats* assemble_stats = nullptr);

}  // namespace ccqa
