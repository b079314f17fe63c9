#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ccqa/corpus.hpp"

namespace ccqa {

// Pooled modified n-gram counts (n = 1..4) plus length totals; corpus BLEU is
// computed from these, never from averaging sentence scores.
struct BleuStats {
    std::array<std::uint64_t, 4> match{};
    std::array<std::uint64_t, 4> total{};
    std::uint64_t hyp_len = 0;
    std::uint64_t ref_len = 0;

    void add(std::span<const std::string> hyp, std::span<const std::string> ref);
    // Geometric mean of the four precisions (zeros replaced by 1e-9) times the
    // brevity penalty.
    double score() const;
};

double sentence_bleu4(std::span<const std::string> hyp, std::span<const std::string> ref);

// Corpus BLEU over aligned hypothesis/reference lists; per-example sentence
// scores optionally collected.
double bleu4(const std::vector<std::vector<std::string>>& references,
             const std::vector<std::vector<std::string>>& hypotheses,
             std::vector<double>* sentence_scores = nullptr);

struct Rouge2Score {
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
};

Rouge2Score rouge2(std::span<const std::string> reference, std::span<const std::string> hypothesis);

// chrF with character n-grams n = 1..6 and beta = 2, whitespace runs
// collapsed to single spaces; orders missing on both sides are skipped.
double chrf(const std::string& reference, const std::string& hypothesis);

std::optional<double> kendall_tau_b(std::span<const double> x, std::span<const double> y);
std::optional<double> spearman(std::span<const double> x, std::span<const double> y);
std::optional<double> pearson(std::span<const double> x, std::span<const double> y);

struct ExampleMetrics {
    std::int64_t question_id = 0;
    double bleu4 = 0.0;  // sentence-level
    double rouge2_p = 0.0;
    double rouge2_r = 0.0;
    double rouge2_f = 0.0;
    double chrf = 0.0;
};

struct MetricCorrelation {
    std::string metric;
    std::optional<double> kendall;
    std::optional<double> spearman;
    std::optional<double> pearson;
};

struct MetricReport {
    std::vector<ExampleMetrics> examples;
    double corpus_bleu4 = 0.0;
    double mean_sentence_bleu4 = 0.0;
    double mean_rouge2_f = 0.0;
    double mean_chrf = 0.0;
    std::uint64_t skipped = 0;  // questions without a generation
    std::vector<MetricCorrelation> correlations;
};

// References come from the pools: the highest-r answer (ties by votes then
// smaller id; falls back to highest votes when unscored), or the accepted
// answer when use_accepted_reference is set.
MetricReport evaluate_run(const std::vector<QuestionPool>& pools,
                          const std::map<std::int64_t, std::string>& generations,
                          const std::optional<std::map<std::int64_t, double>>& preference,
                          bool use_accepted_reference = false, int jobs = 1);

// Correlations of each metric column against an external per-question score.
std::vector<MetricCorrelation> correlate_examples(
    const std::vector<ExampleMetrics>& examples,
    const std::map<std::int64_t, double>& preference);

const std::string& reference_answer(const QuestionPool& pool, bool use_accepted);

std::string format_report_table(const MetricReport& report);
void write_report_jsonl(std::ostream& out, const MetricReport& report);
std::string report_summary_json(const MetricReport& report);
std::vector<ExampleMetrics> read_report_jsonl(std::istream& in);

}  // namespace ccqa
