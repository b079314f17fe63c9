#include "ccqa/retrieval.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include <json.hpp>

#include "ccqa/errors.hpp"
#include "ccqa/parallel.hpp"
#include "ccqa/tokenizer.hpp"

namespace ccqa {

namespace {

using json = nlohmann::json;

const AnswerRecord* pick_exemplar(const QuestionPool& pool) {
    const AnswerRecord* best = nullptr;
    for (const AnswerRecord& a : pool.answers) {
        if (!best) {
            best = &a;
            continue;
        }
        const bool scored = a.r.has_value() && best->r.has_value();
        if (scored) {
            if (*a.r != *best->r) {
                if (*a.r > *best->r) best = &a;
                continue;
            }
        } else if (a.r.has_value() != best->r.has_value()) {
            if (a.r.has_value()) best = &a;  // prefer scored answers
            continue;
        }
        if (a.votes != best->votes) {
            if (a.votes > best->votes) best = &a;
            continue;
        }
        if (a.answer_id < best->answer_id) best = &a;
    }
    return best;
}

std::size_t count_occurrences(const std::string& hay, const std::string& needle) {
    std::size_t count = 0;
    std::size_t pos = 0;
    while ((pos = hay.find(needle, pos)) != std::string::npos) {
        ++count;
        pos += needle.size();
    }
    return count;
}

std::string replace_once(std::string text, const std::string& placeholder,
                         const std::string& value) {
    const std::size_t pos = text.find(placeholder);
    if (pos != std::string::npos) text.replace(pos, placeholder.size(), value);
    return text;
}

}  // namespace

BankIndex BankIndex::build(const std::vector<QuestionPool>& corpus, int jobs) {
    if (corpus.empty()) throw DomainError("cannot build a retrieval index from an empty corpus");
    BankIndex index;
    index.docs_.resize(corpus.size());
    for_each_index(static_cast<std::int64_t>(corpus.size()), jobs, [&](std::int64_t i) {
        const QuestionPool& pool = corpus[static_cast<std::size_t>(i)];
        Doc& doc = index.docs_[static_cast<std::size_t>(i)];
        doc.question_id = pool.question_id;
        doc.question = pool.question_text();
        const std::vector<std::string> toks = tokenize_lexical(doc.question);
        doc.length = static_cast<std::int64_t>(toks.size());
        for (const std::string& t : toks) ++doc.tf[t];
        if (const AnswerRecord* ex = pick_exemplar(pool)) doc.exemplar = ex->content;
    });
    std::sort(index.docs_.begin(), index.docs_.end(),
              [](const Doc& a, const Doc& b) { return a.question_id < b.question_id; });
    index.rebuild_stats();
    return index;
}

void BankIndex::rebuild_stats() {
    df_.clear();
    by_id_.clear();
    std::int64_t total_len = 0;
    for (std::size_t i = 0; i < docs_.size(); ++i) {
        by_id_.emplace(docs_[i].question_id, i);
        total_len += docs_[i].length;
        for (const auto& [term, tf] : docs_[i].tf) ++df_[term];
    }
    avg_doc_len_ = docs_.empty() ? 0.0
                                 : static_cast<double>(total_len) /
                                       static_cast<double>(docs_.size());
}

std::vector<RetrievalHit> BankIndex::retrieve(const std::string& query, int k,
                                              std::optional<std::int64_t> exclude) const {
    if (k < 1) throw DomainError("retrieve: k must be >= 1");
    if (docs_.empty()) return {};

    // Unique query terms in first-occurrence order with their counts.
    std::vector<std::pair<std::string, std::int64_t>> terms;
    {
        std::unordered_map<std::string, std::size_t> seen;
        for (std::string& t : tokenize_lexical(query)) {
            auto it = seen.find(t);
            if (it == seen.end()) {
                seen.emplace(t, terms.size());
                terms.emplace_back(std::move(t), 1);
            } else {
                ++terms[it->second].second;
            }
        }
    }

    const double n_docs = static_cast<double>(docs_.size());
    std::vector<RetrievalHit> hits;
    for (const Doc& doc : docs_) {
        if (exclude && doc.question_id == *exclude) continue;
        double score = 0.0;
        for (const auto& [term, qtf] : terms) {
            auto tf_it = doc.tf.find(term);
            if (tf_it == doc.tf.end()) continue;
            const auto df_it = df_.find(term);
            const double df = static_cast<double>(df_it == df_.end() ? 0 : df_it->second);
            const double idf = std::log(1.0 + (n_docs - df + 0.5) / (df + 0.5));
            const double tf = static_cast<double>(tf_it->second);
            const double norm =
                tf + kBm25K1 * (1.0 - kBm25B +
                                kBm25B * static_cast<double>(doc.length) / avg_doc_len_);
            score += static_cast<double>(qtf) * idf * tf * (kBm25K1 + 1.0) / norm;
        }
        if (score > 0.0) hits.push_back({doc.question_id, score});
    }
    std::sort(hits.begin(), hits.end(), [](const RetrievalHit& a, const RetrievalHit& b) {
        if (a.score != b.score) return a.score > b.score;
        return a.question_id < b.question_id;
    });
    if (hits.size() > static_cast<std::size_t>(k)) hits.resize(static_cast<std::size_t>(k));
    return hits;
}

const std::string* BankIndex::question_text(std::int64_t question_id) const {
    auto it = by_id_.find(question_id);
    return it == by_id_.end() ? nullptr : &docs_[it->second].question;
}

const std::string* BankIndex::exemplar_answer(std::int64_t question_id) const {
    auto it = by_id_.find(question_id);
    return it == by_id_.end() ? nullptr : &docs_[it->second].exemplar;
}

std::int64_t BankIndex::doc_frequency(const std::string& term) const {
    auto it = df_.find(term);
    return it == df_.end() ? 0 : it->second;
}

void BankIndex::save(const std::string& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write index file: " + path);
    out << json{{"format", "ccqa-bank-index"}, {"version", 1}, {"k1", kBm25K1}, {"b", kBm25B}}
               .dump()
        << '\n';
    for (const Doc& doc : docs_) {
        json tf = json::object();
        for (const auto& [term, count] : doc.tf) tf[term] = count;
        const json rec = {{"question_id", doc.question_id},
                          {"length", doc.length},
                          {"tf", std::move(tf)},
                          {"question", doc.question},
                          {"exemplar", doc.exemplar}};
        out << rec.dump() << '\n';
    }
    if (!out) throw IoError("failed writing index file: " + path);
}

BankIndex BankIndex::load(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot read index file: " + path);
    std::string line;
    if (!std::getline(in, line)) throw IoError("empty index file: " + path);
    try {
        const json header = json::parse(line);
        if (header.at("format") != "ccqa-bank-index" || header.at("version") != 1) {
            throw IoError("unsupported index format in " + path);
        }
    } catch (const json::exception& e) {
        throw IoError("bad index header: " + std::string(e.what()));
    }
    BankIndex index;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        try {
            const json rec = json::parse(line);
            Doc doc;
            doc.question_id = rec.at("question_id").get<std::int64_t>();
            doc.length = rec.at("length").get<std::int64_t>();
            for (const auto& [term, count] : rec.at("tf").items()) {
                doc.tf[term] = count.get<std::int64_t>();
            }
            doc.question = rec.at("question").get<std::string>();
            doc.exemplar = rec.at("exemplar").get<std::string>();
            index.docs_.push_back(std::move(doc));
        } catch (const json::exception& e) {
            throw IoError("bad index record at line " + std::to_string(line_no) + ": " + e.what());
        }
    }
    std::sort(index.docs_.begin(), index.docs_.end(),
              [](const Doc& a, const Doc& b) { return a.question_id < b.question_id; });
    index.rebuild_stats();
    return index;
}

DenseVectorProvider DenseVectorProvider::load(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot read vector file: " + path);
    DenseVectorProvider p;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        try {
            const json rec = json::parse(line);
            p.vectors_[rec.at("question_id").get<std::int64_t>()] =
                rec.at("vector").get<std::vector<double>>();
        } catch (const json::exception& e) {
            throw IoError("bad vector record at line " + std::to_string(line_no) + ": " + e.what());
        }
    }
    return p;
}

std::vector<RetrievalHit> DenseVectorProvider::retrieve_by_id(
    std::int64_t query_id, int k, std::optional<std::int64_t> exclude) const {
    if (k < 1) throw DomainError("retrieve: k must be >= 1");
    auto qit = vectors_.find(query_id);
    if (qit == vectors_.end()) {
        throw DomainError("no dense vector for query question " + std::to_string(query_id));
    }
    const std::vector<double>& q = qit->second;
    auto norm = [](const std::vector<double>& v) {
        double s = 0.0;
        for (double x : v) s += x * x;
        return std::sqrt(s);
    };
    const double qn = norm(q);

    std::vector<RetrievalHit> hits;
    for (const auto& [id, vec] : vectors_) {
        if (id == query_id || (exclude && id == *exclude)) continue;
        if (vec.size() != q.size()) {
            throw DomainError("dense vector dimension mismatch for question " + std::to_string(id));
        }
        double dot = 0.0;
        for (std::size_t i = 0; i < q.size(); ++i) dot += q[i] * vec[i];
        const double dn = norm(vec);
        const double sim = qn > 0 && dn > 0 ? dot / (qn * dn) : 0.0;
        hits.push_back({id, sim});
    }
    std::sort(hits.begin(), hits.end(), [](const RetrievalHit& a, const RetrievalHit& b) {
        if (a.score != b.score) return a.score > b.score;
        return a.question_id < b.question_id;
    });
    if (hits.size() > static_cast<std::size_t>(k)) hits.resize(static_cast<std::size_t>(k));
    return hits;
}

const char* const kDefaultPromptTemplate =
    "You are answering a programming question.\n"
    "Example question:\n"
    "{{EXAMPLE_Q}}\n"
    "Example answer:\n"
    "{{EXAMPLE_A}}\n"
    "Question:\n"
    "{{QUESTION}}\n"
    "Answer:\n";

PromptBundle assemble_prompt(const std::string& template_text, const std::string& template_id,
                             const std::string& question,
                             const std::optional<std::pair<std::string, std::string>>& exemplar) {
    for (const char* placeholder : {"{{EXAMPLE_Q}}", "{{EXAMPLE_A}}", "{{QUESTION}}"}) {
        const std::size_t count = count_occurrences(template_text, placeholder);
        if (count != 1) {
            throw ConfigError("prompt template must contain " + std::string(placeholder) +
                              " exactly once (found " + std::to_string(count) + ")");
        }
    }

    PromptBundle bundle;
    bundle.template_id = template_id;
    bundle.question = question;
    bundle.exemplar = exemplar;

    std::string text = template_text;
    if (!exemplar) {
        // Drop the example lines and their label lines.
        std::vector<std::string> lines;
        std::size_t start = 0;
        while (start <= text.size()) {
            const std::size_t nl = text.find('\n', start);
            if (nl == std::string::npos) {
                lines.push_back(text.substr(start));
                break;
            }
            lines.push_back(text.substr(start, nl - start));
            start = nl + 1;
        }
        auto is_example_line = [](const std::string& line) {
            return line.find("{{EXAMPLE_Q}}") != std::string::npos ||
                   line.find("{{EXAMPLE_A}}") != std::string::npos;
        };
        std::string kept;
        for (std::size_t i = 0; i < lines.size(); ++i) {
            if (is_example_line(lines[i])) continue;
            if (i + 1 < lines.size() && is_example_line(lines[i + 1])) continue;
            if (!kept.empty()) kept.push_back('\n');
            kept += lines[i];
        }
        text = std::move(kept);
        text = replace_once(std::move(text), "{{QUESTION}}", question);
    } else {
        // Substitute back to front so inserted values are never rescanned.
        struct Slot {
            std::size_t pos;
            std::size_t len;
            const std::string* value;
        };
        std::vector<Slot> slots = {
            {text.find("{{EXAMPLE_Q}}"), 13, &exemplar->first},
            {text.find("{{EXAMPLE_A}}"), 13, &exemplar->second},
            {text.find("{{QUESTION}}"), 12, &question},
        };
        std::sort(slots.begin(), slots.end(),
                  [](const Slot& a, const Slot& b) { return a.pos > b.pos; });
        for (const Slot& s : slots) text.replace(s.pos, s.len, *s.value);
    }
    bundle.rendered = std::move(text);
    return bundle;
}

}  // namespace ccqa
