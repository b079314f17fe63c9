#include "ccqa/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <istream>
#include <numeric>
#include <ostream>
#include <unordered_map>

#include <json.hpp>

#include "ccqa/errors.hpp"
#include "ccqa/parallel.hpp"
#include "ccqa/tokenizer.hpp"

namespace ccqa {

namespace {

using json = nlohmann::json;

constexpr double kBleuEpsilon = 1e-9;
constexpr double kChrfBeta2 = 4.0;  // beta = 2

// Joins n consecutive tokens with an unlikely separator for counting.
std::unordered_map<std::string, std::uint64_t> ngram_counts(std::span<const std::string> toks,
                                                            std::size_t n) {
    std::unordered_map<std::string, std::uint64_t> counts;
    if (toks.size() < n) return counts;
    for (std::size_t i = 0; i + n <= toks.size(); ++i) {
        std::string key;
        for (std::size_t j = 0; j < n; ++j) {
            if (j > 0) key.push_back('\x1f');
            key += toks[i + j];
        }
        ++counts[key];
    }
    return counts;
}

std::unordered_map<std::string, std::uint64_t> chargram_counts(const std::string& s,
                                                               std::size_t n) {
    std::unordered_map<std::string, std::uint64_t> counts;
    if (s.size() < n) return counts;
    for (std::size_t i = 0; i + n <= s.size(); ++i) ++counts[s.substr(i, n)];
    return counts;
}

std::string collapse_whitespace(const std::string& s) {
    std::string out;
    out.reserve(s.size());
    bool in_ws = false;
    for (char c : s) {
        if (std::isspace(static_cast<unsigned char>(c)) != 0) {
            in_ws = true;
            continue;
        }
        if (in_ws && !out.empty()) out.push_back(' ');
        in_ws = false;
        out.push_back(c);
    }
    return out;
}

std::vector<double> average_ranks(std::span<const double> v) {
    const std::size_t n = v.size();
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
    std::vector<double> ranks(n, 0.0);
    std::size_t i = 0;
    while (i < n) {
        std::size_t j = i;
        while (j + 1 < n && v[idx[j + 1]] == v[idx[i]]) ++j;
        const double rank = (static_cast<double>(i + 1) + static_cast<double>(j + 1)) / 2.0;
        for (std::size_t t = i; t <= j; ++t) ranks[idx[t]] = rank;
        i = j + 1;
    }
    return ranks;
}

double fmt_round2(double v) { return std::round(v * 100.0) / 100.0; }

json correlation_json(const MetricCorrelation& c) {
    auto opt = [](const std::optional<double>& v) {
        return v ? json(*v) : json(nullptr);
    };
    return json{{"metric", c.metric},
                {"kendall", opt(c.kendall)},
                {"spearman", opt(c.spearman)},
                {"pearson", opt(c.pearson)}};
}

}  // namespace

void BleuStats::add(std::span<const std::string> hyp, std::span<const std::string> ref) {
    hyp_len += hyp.size();
    ref_len += ref.size();
    for (std::size_t n = 1; n <= 4; ++n) {
        const auto hyp_counts = ngram_counts(hyp, n);
        const auto ref_counts = ngram_counts(ref, n);
        for (const auto& [gram, count] : hyp_counts) {
            total[n - 1] += count;
            auto it = ref_counts.find(gram);
            if (it != ref_counts.end()) match[n - 1] += std::min(count, it->second);
        }
    }
}

double BleuStats::score() const {
    double log_sum = 0.0;
    for (std::size_t n = 0; n < 4; ++n) {
        double p = total[n] == 0
                       ? 0.0
                       : static_cast<double>(match[n]) / static_cast<double>(total[n]);
        if (p == 0.0) p = kBleuEpsilon;
        log_sum += std::log(p);
    }
    double bp = 1.0;
    if (hyp_len == 0) return 0.0;
    if (hyp_len < ref_len) {
        bp = std::exp(1.0 - static_cast<double>(ref_len) / static_cast<double>(hyp_len));
    }
    return bp * std::exp(log_sum / 4.0);
}

double sentence_bleu4(std::span<const std::string> hyp, std::span<const std::string> ref) {
    BleuStats stats;
    stats.add(hyp, ref);
    return stats.score();
}

double bleu4(const std::vector<std::vector<std::string>>& references,
             const std::vector<std::vector<std::string>>& hypotheses,
             std::vector<double>* sentence_scores) {
    if (references.size() != hypotheses.size()) {
        throw DomainError("bleu4: reference/hypothesis count mismatch");
    }
    BleuStats stats;
    if (sentence_scores) sentence_scores->clear();
    for (std::size_t i = 0; i < references.size(); ++i) {
        stats.add(hypotheses[i], references[i]);
        if (sentence_scores) {
            sentence_scores->push_back(sentence_bleu4(hypotheses[i], references[i]));
        }
    }
    return stats.score();
}

Rouge2Score rouge2(std::span<const std::string> reference,
                   std::span<const std::string> hypothesis) {
    const auto ref_counts = ngram_counts(reference, 2);
    const auto hyp_counts = ngram_counts(hypothesis, 2);
    std::uint64_t ref_total = 0, hyp_total = 0, overlap = 0;
    for (const auto& [gram, c] : ref_counts) ref_total += c;
    for (const auto& [gram, c] : hyp_counts) {
        hyp_total += c;
        auto it = ref_counts.find(gram);
        if (it != ref_counts.end()) overlap += std::min(c, it->second);
    }
    Rouge2Score score;
    if (ref_total == 0 || hyp_total == 0) return score;
    score.precision = static_cast<double>(overlap) / static_cast<double>(hyp_total);
    score.recall = static_cast<double>(overlap) / static_cast<double>(ref_total);
    if (score.precision + score.recall > 0) {
        score.f1 = 2.0 * score.precision * score.recall / (score.precision + score.recall);
    }
    return score;
}

double chrf(const std::string& reference, const std::string& hypothesis) {
    const std::string ref = collapse_whitespace(reference);
    const std::string hyp = collapse_whitespace(hypothesis);
    double f_sum = 0.0;
    std::size_t orders = 0;
    for (std::size_t n = 1; n <= 6; ++n) {
        const auto ref_counts = chargram_counts(ref, n);
        const auto hyp_counts = chargram_counts(hyp, n);
        if (ref_counts.empty() && hyp_counts.empty()) continue;
        ++orders;
        std::uint64_t ref_total = 0, hyp_total = 0, overlap = 0;
        for (const auto& [gram, c] : ref_counts) ref_total += c;
        for (const auto& [gram, c] : hyp_counts) {
            hyp_total += c;
            auto it = ref_counts.find(gram);
            if (it != ref_counts.end()) overlap += std::min(c, it->second);
        }
        const double p = hyp_total == 0
                             ? 0.0
                             : static_cast<double>(overlap) / static_cast<double>(hyp_total);
        const double r = ref_total == 0
                             ? 0.0
                             : static_cast<double>(overlap) / static_cast<double>(ref_total);
        const double denom = kChrfBeta2 * p + r;
        f_sum += denom > 0 ? (1.0 + kChrfBeta2) * p * r / denom : 0.0;
    }
    if (orders == 0) return 0.0;
    return 100.0 * f_sum / static_cast<double>(orders);
}

std::optional<double> kendall_tau_b(std::span<const double> x, std::span<const double> y) {
    const std::size_t n = x.size();
    if (n != y.size() || n < 2) {
        throw DomainError("kendall_tau_b: inputs must have equal length >= 2");
    }
    std::int64_t concordant = 0, discordant = 0;
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) {
            const double dx = x[i] - x[j];
            const double dy = y[i] - y[j];
            const double prod = dx * dy;
            if (prod > 0) ++concordant;
            else if (prod < 0) ++discordant;
        }
    }
    auto tie_pairs = [n](std::span<const double> v) {
        std::vector<double> sorted(v.begin(), v.end());
        std::sort(sorted.begin(), sorted.end());
        std::int64_t ties = 0;
        std::size_t i = 0;
        while (i < n) {
            std::size_t j = i;
            while (j + 1 < n && sorted[j + 1] == sorted[i]) ++j;
            const std::int64_t t = static_cast<std::int64_t>(j - i + 1);
            ties += t * (t - 1) / 2;
            i = j + 1;
        }
        return ties;
    };
    const std::int64_t n0 = static_cast<std::int64_t>(n) * (static_cast<std::int64_t>(n) - 1) / 2;
    const std::int64_t n1 = tie_pairs(x);
    const std::int64_t n2 = tie_pairs(y);
    if (n0 == n1 || n0 == n2) return std::nullopt;
    const double denom = std::sqrt(static_cast<double>(n0 - n1) * static_cast<double>(n0 - n2));
    return static_cast<double>(concordant - discordant) / denom;
}

std::optional<double> pearson(std::span<const double> x, std::span<const double> y) {
    const std::size_t n = x.size();
    if (n != y.size() || n < 2) {
        throw DomainError("pearson: inputs must have equal length >= 2");
    }
    for (std::size_t i = 0; i < n; ++i) {
        if (!std::isfinite(x[i]) || !std::isfinite(y[i])) {
            throw DomainError("pearson: non-finite input");
        }
    }
    double mx = 0.0, my = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        mx += x[i];
        my += y[i];
    }
    mx /= static_cast<double>(n);
    my /= static_cast<double>(n);
    double cov = 0.0, vx = 0.0, vy = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double dx = x[i] - mx;
        const double dy = y[i] - my;
        cov += dx * dy;
        vx += dx * dx;
        vy += dy * dy;
    }
    if (vx == 0.0 || vy == 0.0) return std::nullopt;
    return cov / std::sqrt(vx * vy);
}

std::optional<double> spearman(std::span<const double> x, std::span<const double> y) {
    if (x.size() != y.size() || x.size() < 2) {
        throw DomainError("spearman: inputs must have equal length >= 2");
    }
    const std::vector<double> rx = average_ranks(x);
    const std::vector<double> ry = average_ranks(y);
    return pearson(rx, ry);
}

const std::string& reference_answer(const QuestionPool& pool, bool use_accepted) {
    if (pool.answers.empty()) throw DomainError("reference_answer: empty pool");
    if (use_accepted) {
        for (const AnswerRecord& a : pool.answers) {
            if (a.accepted) return a.content;
        }
        // No accepted answer: fall through to the preference choice.
    }
    const AnswerRecord* best = &pool.answers.front();
    for (const AnswerRecord& a : pool.answers) {
        const double br = best->r.value_or(static_cast<double>(best->votes));
        const double ar = a.r.value_or(static_cast<double>(a.votes));
        if (ar > br || (ar == br && (a.votes > best->votes ||
                                     (a.votes == best->votes && a.answer_id < best->answer_id)))) {
            best = &a;
        }
    }
    return best->content;
}

std::vector<MetricCorrelation> correlate_examples(
    const std::vector<ExampleMetrics>& examples,
    const std::map<std::int64_t, double>& preference) {
    std::vector<double> pref;
    std::vector<double> bleu_col, rouge_col, chrf_col;
    for (const ExampleMetrics& e : examples) {
        auto it = preference.find(e.question_id);
        if (it == preference.end()) continue;
        pref.push_back(it->second);
        bleu_col.push_back(e.bleu4);
        rouge_col.push_back(e.rouge2_f);
        chrf_col.push_back(e.chrf);
    }
    std::vector<MetricCorrelation> out;
    auto push = [&](const std::string& name, std::span<const double> col) {
        MetricCorrelation c;
        c.metric = name;
        if (pref.size() >= 2) {
            c.kendall = kendall_tau_b(col, pref);
            c.spearman = spearman(col, pref);
            c.pearson = pearson(col, pref);
        }
        out.push_back(std::move(c));
    };
    push("bleu4", bleu_col);
    push("rouge2_f", rouge_col);
    push("chrf", chrf_col);
    return out;
}

MetricReport evaluate_run(const std::vector<QuestionPool>& pools,
                          const std::map<std::int64_t, std::string>& generations,
                          const std::optional<std::map<std::int64_t, double>>& preference,
                          bool use_accepted_reference, int jobs) {
    MetricReport report;
    std::vector<const QuestionPool*> evaluated;
    std::vector<const std::string*> hyps;
    for (const QuestionPool& p : pools) {
        auto it = generations.find(p.question_id);
        if (it == generations.end()) {
            ++report.skipped;
            continue;
        }
        evaluated.push_back(&p);
        hyps.push_back(&it->second);
    }

    report.examples.resize(evaluated.size());
    std::vector<std::vector<std::string>> hyp_tokens(evaluated.size());
    std::vector<std::vector<std::string>> ref_tokens(evaluated.size());
    for_each_index(static_cast<std::int64_t>(evaluated.size()), jobs, [&](std::int64_t i) {
        const QuestionPool& pool = *evaluated[static_cast<std::size_t>(i)];
        const std::string& hyp = *hyps[static_cast<std::size_t>(i)];
        const std::string& ref = reference_answer(pool, use_accepted_reference);
        auto& ht = hyp_tokens[static_cast<std::size_t>(i)];
        auto& rt = ref_tokens[static_cast<std::size_t>(i)];
        ht = tokenize(hyp);
        rt = tokenize(ref);
        ExampleMetrics& e = report.examples[static_cast<std::size_t>(i)];
        e.question_id = pool.question_id;
        e.bleu4 = sentence_bleu4(ht, rt);
        const Rouge2Score rs = rouge2(rt, ht);
        e.rouge2_p = rs.precision;
        e.rouge2_r = rs.recall;
        e.rouge2_f = rs.f1;
        e.chrf = chrf(ref, hyp);
    });

    BleuStats corpus_stats;
    double bleu_sum = 0.0, rouge_sum = 0.0, chrf_sum = 0.0;
    for (std::size_t i = 0; i < report.examples.size(); ++i) {
        corpus_stats.add(hyp_tokens[i], ref_tokens[i]);
        bleu_sum += report.examples[i].bleu4;
        rouge_sum += report.examples[i].rouge2_f;
        chrf_sum += report.examples[i].chrf;
    }
    if (!report.examples.empty()) {
        const double n = static_cast<double>(report.examples.size());
        report.corpus_bleu4 = corpus_stats.score();
        report.mean_sentence_bleu4 = bleu_sum / n;
        report.mean_rouge2_f = rouge_sum / n;
        report.mean_chrf = chrf_sum / n;
    }
    if (preference) {
        report.correlations = correlate_examples(report.examples, *preference);
    }
    return report;
}

std::string format_report_table(const MetricReport& report) {
    char buf[256];
    std::string out;
    out += "metric     corpus    mean-sentence\n";
    std::snprintf(buf, sizeof(buf), "BLEU4      %-9.4f %-9.4f\n", report.corpus_bleu4,
                  report.mean_sentence_bleu4);
    out += buf;
    std::snprintf(buf, sizeof(buf), "ROUGE2-F   %-9.4f %-9.4f\n", report.mean_rouge2_f,
                  report.mean_rouge2_f);
    out += buf;
    std::snprintf(buf, sizeof(buf), "CHRF       %-9.2f %-9.2f\n", fmt_round2(report.mean_chrf),
                  fmt_round2(report.mean_chrf));
    out += buf;
    std::snprintf(buf, sizeof(buf), "examples: %zu  skipped: %llu\n", report.examples.size(),
                  static_cast<unsigned long long>(report.skipped));
    out += buf;
    if (!report.correlations.empty()) {
        out += "\nmetric     kendall   spearman  pearson\n";
        for (const MetricCorrelation& c : report.correlations) {
            auto cell = [&](const std::optional<double>& v) {
                if (!v) return std::string("n/a      ");
                std::snprintf(buf, sizeof(buf), "%-9.4f", *v);
                return std::string(buf);
            };
            std::snprintf(buf, sizeof(buf), "%-10s ", c.metric.c_str());
            out += buf;
            out += cell(c.kendall) + " " + cell(c.spearman) + " " + cell(c.pearson) + "\n";
        }
    }
    return out;
}

void write_report_jsonl(std::ostream& out, const MetricReport& report) {
    for (const ExampleMetrics& e : report.examples) {
        const json rec = {{"question_id", e.question_id}, {"bleu4", e.bleu4},
                          {"rouge2_p", e.rouge2_p},       {"rouge2_r", e.rouge2_r},
                          {"rouge2_f", e.rouge2_f},       {"chrf", e.chrf}};
        out << rec.dump() << '\n';
    }
}

std::string report_summary_json(const MetricReport& report) {
    json rec = {{"corpus_bleu4", report.corpus_bleu4},
                {"mean_sentence_bleu4", report.mean_sentence_bleu4},
                {"mean_rouge2_f", report.mean_rouge2_f},
                {"mean_chrf", report.mean_chrf},
                {"examples", report.examples.size()},
                {"skipped", report.skipped}};
    if (!report.correlations.empty()) {
        json cors = json::array();
        for (const MetricCorrelation& c : report.correlations) cors.push_back(correlation_json(c));
        rec["correlations"] = std::move(cors);
    }
    return rec.dump(2) + "\n";
}

std::vector<ExampleMetrics> read_report_jsonl(std::istream& in) {
    std::vector<ExampleMetrics> examples;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        try {
            const json rec = json::parse(line);
            ExampleMetrics e;
            e.question_id = rec.at("question_id").get<std::int64_t>();
            e.bleu4 = rec.at("bleu4").get<double>();
            e.rouge2_p = rec.at("rouge2_p").get<double>();
            e.rouge2_r = rec.at("rouge2_r").get<double>();
            e.rouge2_f = rec.at("rouge2_f").get<double>();
            e.chrf = rec.at("chrf").get<double>();
            examples.push_back(e);
        } catch (const json::exception& e) {
            throw IoError("bad report record at line " + std::to_string(line_no) + ": " + e.what());
        }
    }
    return examples;
}

}  // namespace ccqa
