#include <doctest.h>

#include <cstdio>
#include <fstream>

#include "ccqa/errors.hpp"
#include "ccqa/retrieval.hpp"
#include "ccqa/rng.hpp"

using namespace ccqa;

namespace {

QuestionPool doc(std::int64_t id, const std::string& title, const std::string& body,
                 std::vector<std::pair<double, std::string>> answers = {}) {
    QuestionPool p;
    p.question_id = id;
    p.title = title;
    p.body = body;
    std::int64_t aid = id * 10;
    for (auto& [r, content] : answers) {
        AnswerRecord a;
        a.answer_id = ++aid;
        a.content = content;
        a.votes = static_cast<int>(r * 100);
        a.r = r;
        p.answers.push_back(std::move(a));
    }
    return p;
}

std::vector<QuestionPool> small_corpus() {
    return {
        doc(1, "sort a list in python", "how do i sort xs quickly",
            {{0.9, "use sorted xs"}, {0.2, "bubble sort by hand"}}),
        doc(2, "read a file line by line", "large text file reading",
            {{0.7, "open and iterate"}}),
        doc(3, "merge two dictionaries fast", "dict union question",
            {{0.4, "use the union operator"}, {0.8, "unpack into a literal"}}),
    };
}

}  // namespace

TEST_CASE("index statistics are recomputable and exact") {
    const auto corpus = small_corpus();
    const BankIndex index = BankIndex::build(corpus, 1);
    CHECK(index.doc_count() == 3);
    CHECK(index.doc_frequency("sort") == 1);
    CHECK(index.doc_frequency("a") == 2);
    CHECK(index.doc_frequency("absent") == 0);

    // one-document corpus: average length equals that document's length
    // (5 title tokens + 6 body tokens)
    const BankIndex one = BankIndex::build({corpus[0]}, 1);
    CHECK(one.avg_doc_length() == doctest::Approx(11.0));
    CHECK(one.doc_count() == 1);
}

TEST_CASE("exemplar answer is the highest-r answer, falling back to votes") {
    const auto corpus = small_corpus();
    const BankIndex index = BankIndex::build(corpus, 1);
    CHECK(*index.exemplar_answer(1) == "use sorted xs");
    CHECK(*index.exemplar_answer(3) == "unpack into a literal");

    // unscored pool: highest votes wins
    QuestionPool p = doc(9, "unscored pool title", "body");
    AnswerRecord a1;
    a1.answer_id = 91;
    a1.content = "low";
    a1.votes = 3;
    AnswerRecord a2;
    a2.answer_id = 92;
    a2.content = "high";
    a2.votes = 8;
    p.answers = {a1, a2};
    const BankIndex idx2 = BankIndex::build({p}, 1);
    CHECK(*idx2.exemplar_answer(9) == "high");
}

TEST_CASE("self queries rank the document itself first") {
    const auto corpus = small_corpus();
    const BankIndex index = BankIndex::build(corpus, 1);
    for (const QuestionPool& p : corpus) {
        const auto hits = index.retrieve(p.question_text(), 1);
        REQUIRE_FALSE(hits.empty());
        CHECK(hits[0].question_id == p.question_id);
    }
}

TEST_CASE("queries sharing no term return nothing; zero-score hits are dropped") {
    const BankIndex index = BankIndex::build(small_corpus(), 1);
    CHECK(index.retrieve("zebra quagga", 3).empty());
    CHECK_THROWS_AS(index.retrieve("sort", 0), DomainError);
}

TEST_CASE("duplicate documents tie and resolve to the smaller id") {
    std::vector<QuestionPool> corpus = {doc(12, "identical text here", "same body"),
                                        doc(7, "identical text here", "same body")};
    const BankIndex index = BankIndex::build(corpus, 1);
    const auto hits = index.retrieve("identical text here same body", 1);
    REQUIRE(hits.size() == 1);
    CHECK(hits[0].question_id == 7);
}

TEST_CASE("exclusion removes the named question") {
    const auto corpus = small_corpus();
    const BankIndex index = BankIndex::build(corpus, 1);
    const auto hits = index.retrieve(corpus[0].question_text(), 3, corpus[0].question_id);
    for (const auto& h : hits) CHECK(h.question_id != corpus[0].question_id);
}

TEST_CASE("index persists and reloads with identical behavior") {
    const auto corpus = small_corpus();
    const BankIndex index = BankIndex::build(corpus, 1);
    const char* path = "bank_index_test.jsonl";
    index.save(path);
    const BankIndex loaded = BankIndex::load(path);
    CHECK(loaded.doc_count() == index.doc_count());
    CHECK(loaded.avg_doc_length() == index.avg_doc_length());
    for (const QuestionPool& p : corpus) {
        const auto a = index.retrieve(p.question_text(), 2);
        const auto b = loaded.retrieve(p.question_text(), 2);
        REQUIRE(a.size() == b.size());
        for (std::size_t i = 0; i < a.size(); ++i) {
            CHECK(a[i].question_id == b[i].question_id);
            CHECK(a[i].score == b[i].score);
        }
    }
    std::remove(path);
}

TEST_CASE("bm25 self-score dominates partial queries of the same document") {
    const auto corpus = small_corpus();
    const BankIndex index = BankIndex::build(corpus, 1);
    const std::string full = corpus[0].question_text();
    const auto self_hits = index.retrieve(full, 1);
    const auto partial_hits = index.retrieve("sort a list", 1);
    REQUIRE_FALSE(self_hits.empty());
    REQUIRE_FALSE(partial_hits.empty());
    CHECK(self_hits[0].score >= partial_hits[0].score);
}

TEST_CASE("empty corpus cannot be indexed") {
    CHECK_THROWS_AS(BankIndex::build({}, 1), DomainError);
}

TEST_CASE("dense vector provider scores by cosine and honors exclusion") {
    const char* path = "dense_vectors_test.jsonl";
    {
        std::ofstream out(path, std::ios::binary);
        out << R"({"question_id": 1, "vector": [1.0, 0.0]})" << "\n";
        out << R"({"question_id": 2, "vector": [0.9, 0.1]})" << "\n";
        out << R"({"question_id": 3, "vector": [0.0, 1.0]})" << "\n";
    }
    const DenseVectorProvider dense = DenseVectorProvider::load(path);
    auto hits = dense.retrieve_by_id(1, 2, std::nullopt);
    REQUIRE(hits.size() == 2);
    CHECK(hits[0].question_id == 2);
    CHECK(hits[1].question_id == 3);

    hits = dense.retrieve_by_id(1, 2, 2);
    REQUIRE(hits.size() == 1);
    CHECK(hits[0].question_id == 3);

    CHECK_THROWS_AS(dense.retrieve_by_id(99, 1, std::nullopt), DomainError);
    std::remove(path);
}

TEST_CASE("default prompt template renders exactly") {
    const PromptBundle with = assemble_prompt(kDefaultPromptTemplate, "default", "Q text",
                                              std::make_pair(std::string("SQ"), std::string("SA")));
    CHECK(with.rendered ==
          "You are answering a programming question.\n"
          "Example question:\nSQ\nExample answer:\nSA\nQuestion:\nQ text\nAnswer:\n");

    const PromptBundle without =
        assemble_prompt(kDefaultPromptTemplate, "default", "Q text", std::nullopt);
    CHECK(without.rendered ==
          "You are answering a programming question.\nQuestion:\nQ text\nAnswer:\n");
}

TEST_CASE("rendered prompts contain the pieces exactly once and in order") {
    const std::string sq = "how to frobnicate";
    const std::string sa = "call frob()";
    const std::string q = "how to defrobnicate";
    const PromptBundle bundle =
        assemble_prompt(kDefaultPromptTemplate, "default", q, std::make_pair(sq, sa));
    const std::size_t at_sq = bundle.rendered.find(sq);
    const std::size_t at_sa = bundle.rendered.find(sa);
    const std::size_t at_q = bundle.rendered.find(q);
    REQUIRE(at_sq != std::string::npos);
    REQUIRE(at_sa != std::string::npos);
    REQUIRE(at_q != std::string::npos);
    CHECK(at_sq < at_sa);
    CHECK(at_sa < at_q);
    CHECK(bundle.rendered.find(sq, at_sq + 1) == std::string::npos);
    CHECK(bundle.rendered.find(q, at_q + 1) == std::string::npos);
}

TEST_CASE("custom templates work and placeholder errors are configuration errors") {
    const std::string custom = "Q:{{QUESTION}}\nEQ:{{EXAMPLE_Q}}\nEA:{{EXAMPLE_A}}\n";
    const PromptBundle bundle = assemble_prompt(
        custom, "custom", "ask", std::make_pair(std::string("x"), std::string("y")));
    CHECK(bundle.rendered == "Q:ask\nEQ:x\nEA:y\n");

    CHECK_THROWS_AS(assemble_prompt("no placeholders", "bad", "q", std::nullopt), ConfigError);
    CHECK_THROWS_AS(
        assemble_prompt("{{QUESTION}} {{QUESTION}} {{EXAMPLE_Q}} {{EXAMPLE_A}}", "bad", "q",
                        std::nullopt),
        ConfigError);
}

TEST_CASE("large synthetic bank: self retrieval and leave-one-out always hold") {
    Rng rng(31, "retrieval-test");
    std::vector<QuestionPool> corpus;
    const char* subjects[] = {"sort", "parse", "merge", "filter", "cache", "hash"};
    const char* objects[] = {"list", "dict", "string", "file", "tree", "graph"};
    for (int i = 0; i < 200; ++i) {
        const std::string title = std::string(subjects[rng.uniform_int(0, 5)]) + " a " +
                                  objects[rng.uniform_int(0, 5)] + " variant " +
                                  std::to_string(i);
        corpus.push_back(doc(i + 1, title, "body token" + std::to_string(i),
                             {{0.5, "answer " + std::to_string(i)}}));
    }
    const BankIndex index = BankIndex::build(corpus, 1);
    for (const QuestionPool& p : corpus) {
        const auto self = index.retrieve(p.question_text(), 1);
        REQUIRE_FALSE(self.empty());
        CHECK(self[0].question_id == p.question_id);
        const auto loo = index.retrieve(p.question_text(), 5, p.question_id);
        for (const auto& h : loo) CHECK(h.question_id != p.question_id);
    }
}
