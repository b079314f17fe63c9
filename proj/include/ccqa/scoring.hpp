#pragma once

#include <cstdint>
#include <iosfwd>
#include <memory>
#include <string>
#include <unordered_map>
#include <vector>

#include "ccqa/corpus.hpp"

namespace ccqa {

struct ScoreWeights {
    double bias = 1.0 / 3.0;     // weight on s_q
    double vote = 1.0 / 3.0;     // weight on s_u
    double content = 1.0 / 3.0;  // weight on s_l

    void validate() const;  // nonnegative, sum > 0
};

enum class ContentMode { GeometricMean, ExactProduct };

const char* content_mode_name(ContentMode mode);
ContentMode parse_content_mode(const std::string& name);

struct PreferenceVector {
    double s_q = 0.0;
    double s_u = 0.0;
    double s_l = 0.0;
    double r = 0.0;
};

// Behavioral contract: one raw real score per answer token, deterministic for
// fixed inputs. answer_id is provenance for file-backed lookups.
class TokenScoreProvider {
public:
    virtual ~TokenScoreProvider() = default;
    virtual std::vector<double> score_tokens(const std::string& question,
                                             std::int64_t answer_id,
                                             const std::vector<std::string>& tokens) = 0;
    // Providers that are not safe for concurrent use are called serially.
    virtual bool concurrent_safe() const { return false; }
};

class ConstantScoreProvider final : public TokenScoreProvider {
public:
    explicit ConstantScoreProvider(double raw_score = 0.0) : raw_score_(raw_score) {}
    std::vector<double> score_tokens(const std::string&, std::int64_t,
                                     const std::vector<std::string>& tokens) override {
        return std::vector<double>(tokens.size(), raw_score_);
    }
    bool concurrent_safe() const override { return true; }

private:
    double raw_score_;
};

// Precomputed per-token scores, one JSONL record per answer:
//   {"answer_id": 7, "scores": [0.1, -0.3, ...]}
class FileScoreProvider final : public TokenScoreProvider {
public:
    static FileScoreProvider load(const std::string& path);
    std::vector<double> score_tokens(const std::string& question, std::int64_t answer_id,
                                     const std::vector<std::string>& tokens) override;
    bool concurrent_safe() const override { return true; }

private:
    std::unordered_map<std::int64_t, std::vector<double>> scores_;
};

// Adapter for an external scoring service speaking a line-delimited protocol.
// Request:  {"question": "...", "answer_id": 7, "tokens": ["a", "b"]}
// Response: {"scores": [0.1, -0.3]}
class LineProtocolProvider final : public TokenScoreProvider {
public:
    LineProtocolProvider(std::istream& in, std::ostream& out) : in_(in), out_(out) {}
    std::vector<double> score_tokens(const std::string& question, std::int64_t answer_id,
                                     const std::vector<std::string>& tokens) override;
    bool concurrent_safe() const override { return false; }

private:
    std::istream& in_;
    std::ostream& out_;
};

// Spawns `command` via /bin/sh and speaks the line protocol over its
// stdin/stdout. Serial by construction.
class ProcessScoreProvider final : public TokenScoreProvider {
public:
    explicit ProcessScoreProvider(const std::string& command);
    ~ProcessScoreProvider() override;
    ProcessScoreProvider(const ProcessScoreProvider&) = delete;
    ProcessScoreProvider& operator=(const ProcessScoreProvider&) = delete;

    std::vector<double> score_tokens(const std::string& question, std::int64_t answer_id,
                                     const std::vector<std::string>& tokens) override;
    bool concurrent_safe() const override { return false; }

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

// log(logistic(x)), stable for large |x|.
double log_logistic(double x);

// Questioner-perspective bias: ((v - v_accepted) - mean) / population stdev,
// zero everywhere when the pool's votes are constant. Pools without an
// accepted answer use v_accepted = 0.
std::vector<double> bias_scores(const QuestionPool& pool);

// Users-perspective vote score: min-max normalized votes; 1/2 everywhere when
// max == min.
std::vector<double> vote_scores(const QuestionPool& pool);

// LLM-perspective content score over logistic(token scores); ExactProduct is
// the raw product (log-domain), GeometricMean normalizes by token count.
double content_score(TokenScoreProvider& provider, const std::string& question,
                     const AnswerRecord& answer, ContentMode mode);

std::vector<PreferenceVector> overall_scores(const QuestionPool& pool,
                                             const ScoreWeights& weights,
                                             TokenScoreProvider& provider, ContentMode mode);

// Writes s_q/s_u/s_l/r into every answer and stamps the weights/mode used.
// Parallel over pools when jobs > 1 and the provider allows it.
void score_pools(std::vector<QuestionPool>& pools, const ScoreWeights& weights,
                 TokenScoreProvider& provider, ContentMode mode, int jobs = 1);

// Per-answer (votes, s_q, s_u, s_l) tuples in a plottable line-delimited form.
void write_score_distribution(std::ostream& out, const std::vector<QuestionPool>& pools);

}  // namespace ccqa
