#include "ccqa/scoring.hpp"

#include <cerrno>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

#include <sys/types.h>
#include <sys/wait.h>
#include <unistd.h>

#include <json.hpp>

#include "ccqa/errors.hpp"
#include "ccqa/parallel.hpp"
#include "ccqa/tokenizer.hpp"

namespace ccqa {

namespace {
using json = nlohmann::json;

std::vector<double> parse_score_line(const std::string& line, std::size_t expected) {
    json rec;
    try {
        rec = json::parse(line);
    } catch (const json::exception& e) {
        throw ProviderError(std::string("bad score response: ") + e.what());
    }
    auto scores = rec.at("scores").get<std::vector<double>>();
    if (scores.size() != expected) {
        throw ProviderError("provider returned " + std::to_string(scores.size()) +
                            " scores for " + std::to_string(expected) + " tokens");
    }
    return scores;
}

json make_request(const std::string& question, std::int64_t answer_id,
                  const std::vector<std::string>& tokens) {
    return json{{"question", question}, {"answer_id", answer_id}, {"tokens", tokens}};
}

}  // namespace

void ScoreWeights::validate() const {
    if (bias < 0 || vote < 0 || content < 0) {
        throw DomainError("score weights must be nonnegative");
    }
    if (!(bias + vote + content > 0)) {
        throw DomainError("score weights must not all be zero");
    }
}

const char* content_mode_name(ContentMode mode) {
    return mode == ContentMode::GeometricMean ? "geomean" : "exact";
}

ContentMode parse_content_mode(const std::string& name) {
    if (name == "geomean") return ContentMode::GeometricMean;
    if (name == "exact") return ContentMode::ExactProduct;
    throw ConfigError("unknown content-score mode: " + name + " (expected geomean|exact)");
}

FileScoreProvider FileScoreProvider::load(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot read score file: " + path);
    FileScoreProvider p;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        try {
            const json rec = json::parse(line);
            p.scores_[rec.at("answer_id").get<std::int64_t>()] =
                rec.at("scores").get<std::vector<double>>();
        } catch (const json::exception& e) {
            throw IoError("bad score record at line " + std::to_string(line_no) + ": " + e.what());
        }
    }
    return p;
}

std::vector<double> FileScoreProvider::score_tokens(const std::string&, std::int64_t answer_id,
                                                    const std::vector<std::string>& tokens) {
    auto it = scores_.find(answer_id);
    if (it == scores_.end()) {
        throw ProviderError("no precomputed scores for answer " + std::to_string(answer_id));
    }
    if (it->second.size() != tokens.size()) {
        throw ProviderError("provider returned " + std::to_string(it->second.size()) +
                            " scores for " + std::to_string(tokens.size()) + " tokens");
    }
    return it->second;
}

std::vector<double> LineProtocolProvider::score_tokens(const std::string& question,
                                                       std::int64_t answer_id,
                                                       const std::vector<std::string>& tokens) {
    out_ << make_request(question, answer_id, tokens).dump() << '\n';
    out_.flush();
    std::string line;
    if (!std::getline(in_, line)) throw ProviderError("score service closed the stream");
    return parse_score_line(line, tokens.size());
}

struct ProcessScoreProvider::Impl {
    pid_t pid = -1;
    FILE* to_child = nullptr;
    FILE* from_child = nullptr;

    ~Impl() {
        if (to_child) std::fclose(to_child);
        if (from_child) std::fclose(from_child);
        if (pid > 0) {
            int status = 0;
            waitpid(pid, &status, 0);
        }
    }
};

ProcessScoreProvider::ProcessScoreProvider(const std::string& command)
    : impl_(std::make_unique<Impl>()) {
    int to_pipe[2];
    int from_pipe[2];
    if (pipe(to_pipe) != 0 || pipe(from_pipe) != 0) {
        throw ProviderError(std::string("pipe failed: ") + std::strerror(errno));
    }
    const pid_t pid = fork();
    if (pid < 0) {
        throw ProviderError(std::string("fork failed: ") + std::strerror(errno));
    }
    if (pid == 0) {
        dup2(to_pipe[0], STDIN_FILENO);
        dup2(from_pipe[1], STDOUT_FILENO);
        close(to_pipe[0]);
        close(to_pipe[1]);
        close(from_pipe[0]);
        close(from_pipe[1]);
        execl("/bin/sh", "sh", "-c", command.c_str(), static_cast<char*>(nullptr));
        _exit(127);
    }
    close(to_pipe[0]);
    close(from_pipe[1]);
    impl_->pid = pid;
    impl_->to_child = fdopen(to_pipe[1], "w");
    impl_->from_child = fdopen(from_pipe[0], "r");
    if (!impl_->to_child || !impl_->from_child) {
        throw ProviderError("fdopen failed for score service pipes");
    }
}

ProcessScoreProvider::~ProcessScoreProvider() = default;

std::vector<double> ProcessScoreProvider::score_tokens(const std::string& question,
                                                       std::int64_t answer_id,
                                                       const std::vector<std::string>& tokens) {
    const std::string req = make_request(question, answer_id, tokens).dump();
    if (std::fputs(req.c_str(), impl_->to_child) == EOF ||
        std::fputc('\n', impl_->to_child) == EOF || std::fflush(impl_->to_child) != 0) {
        throw ProviderError("cannot write to score service");
    }
    std::string line;
    int c;
    while ((c = std::fgetc(impl_->from_child)) != EOF && c != '\n') {
        line.push_back(static_cast<char>(c));
    }
    if (line.empty() && c == EOF) throw ProviderError("score service closed the stream");
    return parse_score_line(line, tokens.size());
}

double log_logistic(double x) {
    // log(1/(1+e^-x)) without overflow on either tail.
    if (x >= 0) return -std::log1p(std::exp(-x));
    return x - std::log1p(std::exp(x));
}

std::vector<double> bias_scores(const QuestionPool& pool) {
    if (pool.answers.empty()) throw DomainError("bias_scores on empty answer pool");
    const std::size_t n = pool.answers.size();
    double accepted_votes = 0.0;
    for (const AnswerRecord& a : pool.answers) {
        if (a.accepted) accepted_votes = static_cast<double>(a.votes);
    }
    double mean = 0.0;
    for (const AnswerRecord& a : pool.answers) mean += static_cast<double>(a.votes);
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (const AnswerRecord& a : pool.answers) {
        const double d = static_cast<double>(a.votes) - mean;
        var += d * d;
    }
    var /= static_cast<double>(n);  // population variance
    const double stdev = std::sqrt(var);

    std::vector<double> out(n, 0.0);
    if (stdev == 0.0) return out;
    for (std::size_t i = 0; i < n; ++i) {
        out[i] = ((static_cast<double>(pool.answers[i].votes) - accepted_votes) - mean) / stdev;
    }
    return out;
}

std::vector<double> vote_scores(const QuestionPool& pool) {
    if (pool.answers.empty()) throw DomainError("vote_scores on empty answer pool");
    double lo = static_cast<double>(pool.answers.front().votes);
    double hi = lo;
    for (const AnswerRecord& a : pool.answers) {
        lo = std::min(lo, static_cast<double>(a.votes));
        hi = std::max(hi, static_cast<double>(a.votes));
    }
    std::vector<double> out;
    out.reserve(pool.answers.size());
    if (hi == lo) {
        out.assign(pool.answers.size(), 0.5);
        return out;
    }
    for (const AnswerRecord& a : pool.answers) {
        out.push_back((static_cast<double>(a.votes) - lo) / (hi - lo));
    }
    return out;
}

double content_score(TokenScoreProvider& provider, const std::string& question,
                     const AnswerRecord& answer, ContentMode mode) {
    const std::vector<std::string> tokens = tokenize(answer.content);
    if (tokens.empty()) {
        throw DomainError("content_score requires at least one answer token (answer " +
                          std::to_string(answer.answer_id) + ")");
    }
    const std::vector<double> raw = provider.score_tokens(question, answer.answer_id, tokens);
    if (raw.size() != tokens.size()) {
        throw ProviderError("provider returned " + std::to_string(raw.size()) + " scores for " +
                            std::to_string(tokens.size()) + " tokens");
    }
    double log_sum = 0.0;
    for (double x : raw) log_sum += log_logistic(x);
    if (mode == ContentMode::GeometricMean) {
        return std::exp(log_sum / static_cast<double>(tokens.size()));
    }
    return std::exp(log_sum);
}

std::vector<PreferenceVector> overall_scores(const QuestionPool& pool,
                                             const ScoreWeights& weights,
                                             TokenScoreProvider& provider, ContentMode mode) {
    weights.validate();
    const std::vector<double> s_q = bias_scores(pool);
    const std::vector<double> s_u = vote_scores(pool);
    const std::string question = pool.question_text();
    std::vector<PreferenceVector> out(pool.answers.size());
    for (std::size_t i = 0; i < pool.answers.size(); ++i) {
        PreferenceVector& v = out[i];
        v.s_q = s_q[i];
        v.s_u = s_u[i];
        v.s_l = content_score(provider, question, pool.answers[i], mode);
        v.r = weights.bias * v.s_q + weights.vote * v.s_u + weights.content * v.s_l;
    }
    return out;
}

void score_pools(std::vector<QuestionPool>& pools, const ScoreWeights& weights,
                 TokenScoreProvider& provider, ContentMode mode, int jobs) {
    weights.validate();
    const int effective_jobs = provider.concurrent_safe() ? jobs : 1;
    for_each_index(static_cast<std::int64_t>(pools.size()), effective_jobs, [&](std::int64_t i) {
        QuestionPool& pool = pools[i];
        const std::vector<PreferenceVector> scores = overall_scores(pool, weights, provider, mode);
        for (std::size_t a = 0; a < pool.answers.size(); ++a) {
            pool.answers[a].s_q = scores[a].s_q;
            pool.answers[a].s_u = scores[a].s_u;
            pool.answers[a].s_l = scores[a].s_l;
            pool.answers[a].r = scores[a].r;
        }
        pool.score_weights = std::array<double, 3>{weights.bias, weights.vote, weights.content};
        pool.score_mode = content_mode_name(mode);
    });
}

void write_score_distribution(std::ostream& out, const std::vector<QuestionPool>& pools) {
    for (const QuestionPool& p : pools) {
        for (const AnswerRecord& a : p.answers) {
            if (!a.s_q || !a.s_u || !a.s_l) continue;
            const json rec = {{"question_id", p.question_id}, {"answer_id", a.answer_id},
                              {"votes", a.votes},             {"s_q", *a.s_q},
                              {"s_u", *a.s_u},                {"s_l", *a.s_l}};
            out << rec.dump() << '\n';
        }
    }
}

}  // namespace ccqa
