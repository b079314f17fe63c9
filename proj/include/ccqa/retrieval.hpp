#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "ccqa/corpus.hpp"

namespace ccqa {

constexpr double kBm25K1 = 1.2;
constexpr double kBm25B = 0.75;

struct RetrievalHit {
    std::int64_t question_id = 0;
    double score = 0.0;
};

// Lexical question bank: per-document term frequencies plus the exemplar
// answer (highest r, falling back to highest votes) for one-shot prompting.
class BankIndex {
public:
    static BankIndex build(const std::vector<QuestionPool>& corpus, int jobs = 1);

    // BM25 (k1 = 1.2, b = 0.75, Lucene-style idf); zero-score hits dropped,
    // ties broken by ascending question id. exclude supports leave-one-out.
    std::vector<RetrievalHit> retrieve(const std::string& query, int k,
                                       std::optional<std::int64_t> exclude = std::nullopt) const;

    const std::string* question_text(std::int64_t question_id) const;
    const std::string* exemplar_answer(std::int64_t question_id) const;

    std::size_t doc_count() const { return docs_.size(); }
    double avg_doc_length() const { return avg_doc_len_; }
    std::int64_t doc_frequency(const std::string& term) const;

    void save(const std::string& path) const;
    static BankIndex load(const std::string& path);

private:
    struct Doc {
        std::int64_t question_id = 0;
        std::int64_t length = 0;
        std::unordered_map<std::string, std::int64_t> tf;
        std::string question;  // title + blank line + body
        std::string exemplar;
    };

    void rebuild_stats();

    std::vector<Doc> docs_;  // ascending question id
    std::unordered_map<std::string, std::int64_t> df_;
    double avg_doc_len_ = 0.0;
    std::unordered_map<std::int64_t, std::size_t> by_id_;
};

// Precomputed dense vectors keyed by question id, cosine scored. Lets a dense
// retriever stand in for the lexical index without touching callers.
class DenseVectorProvider {
public:
    static DenseVectorProvider load(const std::string& path);

    std::vector<RetrievalHit> retrieve_by_id(std::int64_t query_id, int k,
                                             std::optional<std::int64_t> exclude) const;
    bool has(std::int64_t question_id) const { return vectors_.count(question_id) > 0; }

private:
    std::unordered_map<std::int64_t, std::vector<double>> vectors_;
};

struct PromptBundle {
    std::string template_id;
    std::string question;
    std::optional<std::pair<std::string, std::string>> exemplar;  // (sq, sa)
    std::string rendered;
};

// "You are answering a programming question.\n..." with {{EXAMPLE_Q}},
// {{EXAMPLE_A}} and {{QUESTION}} placeholders.
extern const char* const kDefaultPromptTemplate;

// Renders the template. Each placeholder must appear exactly once. Without an
// exemplar, lines holding example placeholders are omitted along with their
// immediately preceding label lines.
PromptBundle assemble_prompt(const std::string& template_text, const std::string& template_id,
                             const std::string& question,
                             const std::optional<std::pair<std::string, std::string>>& exemplar);

}  // namespace ccqa
