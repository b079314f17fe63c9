#include "ccqa/xml_ingest.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <charconv>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <unordered_map>
#include <unordered_set>

#include <json.hpp>

#include "ccqa/errors.hpp"
#include "ccqa/parallel.hpp"

namespace ccqa {

namespace {

using json = nlohmann::json;

void append_utf8(std::string& out, std::uint32_t cp) {
    if (cp < 0x80) {
        out.push_back(static_cast<char>(cp));
    } else if (cp < 0x800) {
        out.push_back(static_cast<char>(0xC0 | (cp >> 6)));
        out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
    } else if (cp < 0x10000) {
        out.push_back(static_cast<char>(0xE0 | (cp >> 12)));
        out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
        out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
    } else {
        out.push_back(static_cast<char>(0xF0 | (cp >> 18)));
        out.push_back(static_cast<char>(0x80 | ((cp >> 12) & 0x3F)));
        out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
        out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
    }
}

std::optional<std::int64_t> parse_int64(std::string_view s) {
    std::int64_t v = 0;
    const char* first = s.data();
    const char* last = s.data() + s.size();
    auto [ptr, ec] = std::from_chars(first, last, v);
    if (ec != std::errc() || ptr != last) return std::nullopt;
    return v;
}

// Attribute scan of one row element body (the text between "<row" and "/>"
// or ">"). Quotes are respected; values are entity-decoded except Body and
// Title, which stay verbatim for the corpus builder.
bool parse_row_attributes(std::string_view s, RawPost& post) {
    std::unordered_map<std::string, std::string> attrs;
    std::size_t i = 0;
    const std::size_t n = s.size();
    while (i < n) {
        while (i < n && std::isspace(static_cast<unsigned char>(s[i]))) ++i;
        if (i >= n) break;
        std::size_t name_begin = i;
        while (i < n && s[i] != '=' && !std::isspace(static_cast<unsigned char>(s[i]))) ++i;
        std::string name(s.substr(name_begin, i - name_begin));
        while (i < n && std::isspace(static_cast<unsigned char>(s[i]))) ++i;
        if (i >= n || s[i] != '=') return false;
        ++i;
        while (i < n && std::isspace(static_cast<unsigned char>(s[i]))) ++i;
        if (i >= n || (s[i] != '"' && s[i] != '\'')) return false;
        const char quote = s[i];
        ++i;
        std::size_t value_begin = i;
        while (i < n && s[i] != quote) ++i;
        if (i >= n) return false;
        attrs.emplace(std::move(name), std::string(s.substr(value_begin, i - value_begin)));
        ++i;
    }

    auto get = [&](const char* key) -> const std::string* {
        auto it = attrs.find(key);
        return it == attrs.end() ? nullptr : &it->second;
    };

    const std::string* id = get("Id");
    const std::string* type = get("PostTypeId");
    if (!id || !type) return false;
    auto id_v = parse_int64(decode_xml_entities(*id));
    if (!id_v || *id_v <= 0) return false;
    post.post_id = *id_v;

    const std::string type_s = decode_xml_entities(*type);
    if (type_s == "1") {
        post.post_type = PostType::Question;
    } else if (type_s == "2") {
        post.post_type = PostType::Answer;
    } else {
        post.post_type = PostType::Other;
    }

    if (const std::string* v = get("ParentId")) {
        auto p = parse_int64(decode_xml_entities(*v));
        if (!p || *p <= 0) return false;
        post.parent_id = *p;
    }
    if (const std::string* v = get("AcceptedAnswerId")) {
        auto p = parse_int64(decode_xml_entities(*v));
        if (!p || *p <= 0) return false;
        post.accepted_answer_id = *p;
    }
    if (const std::string* v = get("Score")) {
        auto p = parse_int64(decode_xml_entities(*v));
        if (!p) return false;
        post.score = static_cast<int>(*p);
    }
    if (const std::string* v = get("Title")) post.title = *v;
    if (const std::string* v = get("Body")) post.body = *v;
    if (const std::string* v = get("CreationDate")) post.creation_date = decode_xml_entities(*v);

    if (post.post_type == PostType::Question) {
        // Title present (possibly empty) on questions; tags question-only.
        if (!post.title) post.title = std::string();
        post.parent_id.reset();
        if (const std::string* v = get("Tags")) {
            const std::string decoded = decode_xml_entities(*v);
            std::size_t j = 0;
            while (j < decoded.size()) {
                if (decoded[j] != '<') {
                    ++j;
                    continue;
                }
                std::size_t close = decoded.find('>', j + 1);
                if (close == std::string::npos) break;
                std::string tag = decoded.substr(j + 1, close - j - 1);
                std::transform(tag.begin(), tag.end(), tag.begin(),
                               [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
                if (!tag.empty()) post.tags.push_back(std::move(tag));
                j = close + 1;
            }
        }
    } else if (post.post_type == PostType::Answer) {
        if (!post.parent_id) return false;
        post.tags.clear();
    }
    return true;
}

// Timestamp fields (y, m, d, h, min, s, ms); cutoff fills missing fields with
// a max sentinel so a prefix cutoff is inclusive of the whole period.
using TimeKey = std::array<int, 7>;

std::optional<TimeKey> parse_time_key(std::string_view s, bool fill_max) {
    TimeKey key;
    key.fill(fill_max ? 9999 : 0);
    int field = 0;
    std::size_t i = 0;
    while (i < s.size() && field < 7) {
        std::size_t begin = i;
        while (i < s.size() && std::isdigit(static_cast<unsigned char>(s[i]))) ++i;
        if (begin == i) return std::nullopt;
        auto v = parse_int64(s.substr(begin, i - begin));
        if (!v) return std::nullopt;
        key[field++] = static_cast<int>(*v);
        if (i < s.size()) {
            const char sep = s[i];
            if (sep != '-' && sep != 'T' && sep != ' ' && sep != ':' && sep != '.') {
                return std::nullopt;
            }
            ++i;
        }
    }
    if (field == 0) return std::nullopt;
    return key;
}

}  // namespace

std::string decode_xml_entities(std::string_view s) {
    std::string out;
    out.reserve(s.size());
    std::size_t i = 0;
    const std::size_t n = s.size();
    while (i < n) {
        if (s[i] != '&') {
            out.push_back(s[i]);
            ++i;
            continue;
        }
        const std::size_t semi = s.find(';', i + 1);
        if (semi == std::string_view::npos || semi - i > 12) {
            out.push_back(s[i]);
            ++i;
            continue;
        }
        const std::string_view name = s.substr(i + 1, semi - i - 1);
        if (name == "lt") {
            out.push_back('<');
        } else if (name == "gt") {
            out.push_back('>');
        } else if (name == "amp") {
            out.push_back('&');
        } else if (name == "quot") {
            out.push_back('"');
        } else if (name == "apos") {
            out.push_back('\'');
        } else if (name == "nbsp") {
            out.push_back(' ');
        } else if (!name.empty() && name[0] == '#') {
            std::uint32_t cp = 0;
            bool ok = name.size() > 1;
            if (name.size() > 2 && (name[1] == 'x' || name[1] == 'X')) {
                for (std::size_t j = 2; j < name.size() && ok; ++j) {
                    const char c = name[j];
                    cp <<= 4;
                    if (c >= '0' && c <= '9') cp |= static_cast<std::uint32_t>(c - '0');
                    else if (c >= 'a' && c <= 'f') cp |= static_cast<std::uint32_t>(c - 'a' + 10);
                    else if (c >= 'A' && c <= 'F') cp |= static_cast<std::uint32_t>(c - 'A' + 10);
                    else ok = false;
                }
            } else {
                for (std::size_t j = 1; j < name.size() && ok; ++j) {
                    const char c = name[j];
                    if (c < '0' || c > '9') { ok = false; break; }
                    cp = cp * 10 + static_cast<std::uint32_t>(c - '0');
                }
            }
            if (ok && cp > 0 && cp <= 0x10FFFF) {
                append_utf8(out, cp);
            } else {
                out.append(s.substr(i, semi - i + 1));
            }
        } else {
            out.append(s.substr(i, semi - i + 1));
        }
        i = semi + 1;
    }
    return out;
}

ParseStats parse_dump(std::istream& in, const std::function<void(RawPost&&)>& sink) {
    ParseStats stats;
    std::string buf;
    buf.reserve(1 << 16);
    char chunk[1 << 15];
    std::size_t scan_from = 0;

    auto process = [&](bool final_flush) {
        std::size_t pos = scan_from;
        for (;;) {
            const std::size_t open = buf.find("<row", pos);
            if (open == std::string::npos) {
                // Keep a small tail in case "<row" straddles the chunk edge.
                const std::size_t keep = buf.size() < 8 ? buf.size() : 8;
                buf.erase(0, buf.size() - keep);
                scan_from = 0;
                return;
            }
            if (open + 4 == buf.size() && !final_flush) {
                buf.erase(0, open);
                scan_from = 0;
                return;
            }
            if (open + 4 < buf.size()) {
                const unsigned char next = static_cast<unsigned char>(buf[open + 4]);
                if (std::isalnum(next) != 0 || next == '_' || next == '-') {
                    pos = open + 4;  // some other element, e.g. <rows>
                    continue;
                }
            }
            // Find the element end, honoring quoted attribute values.
            std::size_t i = open + 4;
            char quote = 0;
            std::size_t end = std::string::npos;
            bool self_closing = false;
            for (; i < buf.size(); ++i) {
                const char c = buf[i];
                if (quote != 0) {
                    if (c == quote) quote = 0;
                } else if (c == '"' || c == '\'') {
                    quote = c;
                } else if (c == '>') {
                    end = i;
                    self_closing = i > open + 4 && buf[i - 1] == '/';
                    break;
                }
            }
            if (end == std::string::npos) {
                if (final_flush) {
                    // Truncated trailing element.
                    ++stats.rows;
                    ++stats.malformed_rows;
                    buf.clear();
                    scan_from = 0;
                }
                // Otherwise wait for more input.
                buf.erase(0, open);
                scan_from = 0;
                return;
            }
            ++stats.rows;
            const std::size_t body_begin = open + 4;
            const std::size_t body_end = self_closing ? end - 1 : end;
            RawPost post;
            if (parse_row_attributes(
                    std::string_view(buf).substr(body_begin, body_end - body_begin), post)) {
                sink(std::move(post));
            } else {
                ++stats.malformed_rows;
            }
            pos = end + 1;
        }
    };

    while (in.read(chunk, sizeof(chunk)) || in.gcount() > 0) {
        buf.append(chunk, static_cast<std::size_t>(in.gcount()));
        process(false);
        if (in.eof()) break;
    }
    if (in.bad()) throw IngestError("unreadable dump stream");
    process(true);
    return stats;
}

std::vector<RawPost> parse_dump_all(std::istream& in, ParseStats* stats) {
    std::vector<RawPost> posts;
    ParseStats s = parse_dump(in, [&](RawPost&& p) { posts.push_back(std::move(p)); });
    if (stats) *stats = s;
    return posts;
}

std::vector<RawPool> assemble_pools(const std::vector<RawPost>& posts,
                                    const std::string& tag_filter,
                                    const std::optional<std::string>& cutoff,
                                    AssembleStats* stats) {
    if (tag_filter.empty()) throw DomainError("tag_filter must be nonempty");
    AssembleStats st;
    std::optional<TimeKey> cutoff_key;
    if (cutoff) {
        cutoff_key = parse_time_key(*cutoff, /*fill_max=*/true);
        if (!cutoff_key) throw DomainError("unparseable cutoff timestamp: " + *cutoff);
    }

    struct QuestionEntry {
        std::string title;
        std::string body;
        std::vector<std::string> tags;
        std::optional<std::int64_t> accepted_answer_id;
        std::vector<const RawPost*> answers;
    };

    std::map<std::int64_t, QuestionEntry> questions;  // ordered by question id
    std::vector<const RawPost*> answers;
    std::unordered_set<std::int64_t> seen_ids;
    seen_ids.reserve(posts.size());

    for (const RawPost& p : posts) {
        if (!seen_ids.insert(p.post_id).second) {
            ++st.duplicate_posts;
            continue;
        }
        if (p.post_type == PostType::Question) {
            if (std::find(p.tags.begin(), p.tags.end(), tag_filter) == p.tags.end()) continue;
            QuestionEntry q;
            q.title = p.title.value_or("");
            q.body = p.body;
            q.tags = p.tags;
            q.accepted_answer_id = p.accepted_answer_id;
            questions.emplace(p.post_id, std::move(q));
        } else if (p.post_type == PostType::Answer) {
            answers.push_back(&p);
        }
    }

    for (const RawPost* a : answers) {
        auto it = questions.find(*a->parent_id);
        if (it == questions.end()) {
            ++st.dropped_answers;
            continue;
        }
        ++st.answer_posts_matched;
        if (cutoff_key) {
            auto key = parse_time_key(a->creation_date, /*fill_max=*/false);
            if (!key || *key > *cutoff_key) {
                ++st.cutoff_excluded;
                continue;
            }
        }
        it->second.answers.push_back(a);
    }

    std::vector<RawPool> pools;
    pools.reserve(questions.size());
    for (auto& [qid, q] : questions) {
        RawPool pool;
        pool.question_id = qid;
        pool.title = std::move(q.title);
        pool.body_html = std::move(q.body);
        pool.tags = std::move(q.tags);
        std::sort(q.answers.begin(), q.answers.end(), [](const RawPost* a, const RawPost* b) {
            if (a->score != b->score) return a->score > b->score;
            return a->post_id < b->post_id;
        });
        pool.answers.reserve(q.answers.size());
        for (const RawPost* a : q.answers) {
            RawAnswer ans;
            ans.answer_id = a->post_id;
            ans.body_html = a->body;
            ans.votes = a->score;
            ans.accepted = q.accepted_answer_id && *q.accepted_answer_id == a->post_id;
            pool.answers.push_back(std::move(ans));
        }
        pools.push_back(std::move(pool));
    }
    if (stats) *stats = st;
    return pools;
}

void write_raw_pools(std::ostream& out, const std::vector<RawPool>& pools) {
    for (const RawPool& p : pools) {
        json answers = json::array();
        for (const RawAnswer& a : p.answers) {
            answers.push_back({{"answer_id", a.answer_id},
                               {"body_html", a.body_html},
                               {"votes", a.votes},
                               {"accepted", a.accepted}});
        }
        json rec = {{"question_id", p.question_id},
                    {"title", p.title},
                    {"body_html", p.body_html},
                    {"tags", p.tags},
                    {"answers", std::move(answers)}};
        out << rec.dump() << '\n';
    }
}

std::vector<RawPool> read_raw_pools(std::istream& in) {
    std::vector<RawPool> pools;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        json rec;
        try {
            rec = json::parse(line);
        } catch (const json::exception& e) {
            throw IoError("bad pool record at line " + std::to_string(line_no) + ": " + e.what());
        }
        RawPool p;
        p.question_id = rec.at("question_id").get<std::int64_t>();
        p.title = rec.at("title").get<std::string>();
        p.body_html = rec.at("body_html").get<std::string>();
        p.tags = rec.at("tags").get<std::vector<std::string>>();
        for (const json& a : rec.at("answers")) {
            RawAnswer ans;
            ans.answer_id = a.at("answer_id").get<std::int64_t>();
            ans.body_html = a.at("body_html").get<std::string>();
            ans.votes = a.at("votes").get<int>();
            ans.accepted = a.at("accepted").get<bool>();
            p.answers.push_back(std::move(ans));
        }
        pools.push_back(std::move(p));
    }
    return pools;
}

std::vector<RawPool> ingest_files(const std::vector<std::string>& paths,
                                  const std::string& tag_filter,
                                  const std::optional<std::string>& cutoff,
                                  int jobs,
                                  ParseStats* parse_stats,
                                  AssembleStats* assemble_stats) {
    std::vector<std::vector<RawPost>> shards(paths.size());
    std::vector<ParseStats> shard_stats(paths.size());
    std::vector<std::string> failures(paths.size());
    for_each_index(static_cast<std::int64_t>(paths.size()), jobs, [&](std::int64_t i) {
        std::ifstream in(paths[i], std::ios::binary);
        if (!in) {
            failures[i] = "cannot open dump file: " + paths[i];
            return;
        }
        shards[i] = parse_dump_all(in, &shard_stats[i]);
    });
    for (const std::string& f : failures) {
        if (!f.empty()) throw IngestError(f);
    }

    std::vector<RawPost> all;
    ParseStats total;
    for (std::size_t i = 0; i < shards.size(); ++i) {
        total.rows += shard_stats[i].rows;
        total.malformed_rows += shard_stats[i].malformed_rows;
        std::move(shards[i].begin(), shards[i].end(), std::back_inserter(all));
    }
    if (parse_stats) *parse_stats = total;
    return assemble_pools(all, tag_filter, cutoff, assemble_stats);
}

}  // namespace ccqa
