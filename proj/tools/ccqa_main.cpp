// ccqa — community-QA preference alignment toolkit.
//
// Subcommands cover the full pipeline: dump ingestion, corpus construction,
// preference scoring/ranking, the two training stages, retrieval-augmented
// generation, and evaluation. Every run writes a manifest beside its primary
// output and is deterministic for a fixed config and seed.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "ccqa/config.hpp"
#include "ccqa/corpus.hpp"
#include "ccqa/errors.hpp"
#include "ccqa/lm.hpp"
#include "ccqa/metrics.hpp"
#include "ccqa/parallel.hpp"
#include "ccqa/ranking.hpp"
#include "ccqa/retrieval.hpp"
#include "ccqa/rng.hpp"
#include "ccqa/scoring.hpp"
#include "ccqa/synth.hpp"
#include "ccqa/tokenizer.hpp"
#include "ccqa/trainer.hpp"
#include "ccqa/xml_ingest.hpp"

namespace {

using ccqa::PipelineConfig;
using json = nlohmann::json;
namespace fs = std::filesystem;

struct GlobalFlags {
    std::optional<std::string> config_path;
    std::optional<std::uint64_t> seed;
    std::optional<int> jobs;
    std::optional<std::vector<double>> weights;
    std::optional<std::string> mode;
    std::optional<std::string> template_path;
};

PipelineConfig resolve_config(const GlobalFlags& flags) {
    std::optional<std::string> path = flags.config_path;
    if (!path) {
        if (const char* env = std::getenv("CCQA_CONFIG")) path = std::string(env);
    }
    PipelineConfig config = PipelineConfig::load(path);
    if (flags.seed) config.seed = *flags.seed;  // flags win over env
    if (flags.jobs) config.jobs = *flags.jobs;
    if (flags.weights) {
        if (flags.weights->size() != 3) throw ccqa::ConfigError("--weights expects a,b,c");
        config.scoring.weights = {(*flags.weights)[0], (*flags.weights)[1], (*flags.weights)[2]};
    }
    if (flags.mode) config.scoring.mode = *flags.mode;
    if (flags.template_path) config.retrieval.template_path = *flags.template_path;
    return config;
}

void require_readable(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ccqa::ConfigError("input file not found: " + path);
    ccqa::verify_input_digest(path);
}

std::string run_dir(const PipelineConfig& config, const std::string& stage) {
    char hash8[16];
    std::snprintf(hash8, sizeof(hash8), "%08llx",
                  static_cast<unsigned long long>(config.config_hash() >> 32));
    return config.paths.runs_dir + "/" + stage + "-" + hash8 + "-s" + std::to_string(config.seed);
}

std::unique_ptr<ccqa::TokenScoreProvider> make_provider(const std::string& spec) {
    if (spec == "constant") return std::make_unique<ccqa::ConstantScoreProvider>();
    if (spec.rfind("constant:", 0) == 0) {
        return std::make_unique<ccqa::ConstantScoreProvider>(std::stod(spec.substr(9)));
    }
    if (spec.rfind("file:", 0) == 0) {
        return std::make_unique<ccqa::FileScoreProvider>(
            ccqa::FileScoreProvider::load(spec.substr(5)));
    }
    if (spec.rfind("command:", 0) == 0) {
        return std::make_unique<ccqa::ProcessScoreProvider>(spec.substr(8));
    }
    throw ccqa::ConfigError("unknown score provider: " + spec +
                            " (expected constant|constant:X|file:PATH|command:CMD)");
}

std::string load_template(const PipelineConfig& config) {
    if (config.retrieval.template_path.empty()) return ccqa::kDefaultPromptTemplate;
    std::ifstream in(config.retrieval.template_path, std::ios::binary);
    if (!in) {
        throw ccqa::ConfigError("cannot read prompt template: " + config.retrieval.template_path);
    }
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::string template_id(const PipelineConfig& config) {
    return config.retrieval.template_path.empty() ? "default" : config.retrieval.template_path;
}

std::map<std::int64_t, std::string> read_generations(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ccqa::IoError("cannot read generations: " + path);
    std::map<std::int64_t, std::string> out;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const json rec = json::parse(line);
        out[rec.at("question_id").get<std::int64_t>()] = rec.at("generation").get<std::string>();
    }
    return out;
}

std::map<std::int64_t, double> read_preferences(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ccqa::IoError("cannot read preference scores: " + path);
    std::map<std::int64_t, double> out;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const json rec = json::parse(line);
        out[rec.at("question_id").get<std::int64_t>()] = rec.at("score").get<double>();
    }
    return out;
}

std::string detokenize(const ccqa::Vocabulary& vocab, const std::vector<int>& ids) {
    std::string out;
    for (std::size_t i = 0; i < ids.size(); ++i) {
        if (i > 0) out.push_back(' ');
        out += vocab.id_to_token[static_cast<std::size_t>(ids[i])];
    }
    return out;
}

void write_text_file(const std::string& path, const std::string& text) {
    ccqa::ensure_parent_dir(path);
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ccqa::IoError("cannot write: " + path);
    out << text;
}

// ---------------------------------------------------------------------------
// Subcommand bodies
// ---------------------------------------------------------------------------

int cmd_ingest(const PipelineConfig& config, const std::vector<std::string>& dumps,
               const std::string& out_path) {
    const std::vector<std::string> inputs = dumps.empty()
                                                ? std::vector<std::string>{config.paths.dump}
                                                : dumps;
    for (const std::string& p : inputs) require_readable(p);
    ccqa::ParseStats parse_stats;
    ccqa::AssembleStats assemble_stats;
    const std::vector<ccqa::RawPool> pools = ccqa::ingest_files(
        inputs, config.tag_filter, config.cutoff, config.jobs, &parse_stats, &assemble_stats);

    ccqa::ensure_parent_dir(out_path);
    std::ofstream out(out_path, std::ios::binary);
    if (!out) throw ccqa::IoError("cannot write: " + out_path);
    ccqa::write_raw_pools(out, pools);
    out.close();
    ccqa::write_manifest(out_path, "ingest", config, inputs, {out_path});

    std::cerr << "rows=" << parse_stats.rows << " malformed=" << parse_stats.malformed_rows
              << " pools=" << pools.size() << " dropped_answers=" << assemble_stats.dropped_answers
              << " duplicates=" << assemble_stats.duplicate_posts
              << " cutoff_excluded=" << assemble_stats.cutoff_excluded << "\n";
    return 0;
}

int cmd_build_corpus(const PipelineConfig& config, const std::string& in_path,
                     const std::string& out_path) {
    require_readable(in_path);
    std::ifstream in(in_path, std::ios::binary);
    const std::vector<ccqa::RawPool> raw = ccqa::read_raw_pools(in);
    ccqa::FilterReport report;
    const std::vector<ccqa::QuestionPool> corpus = ccqa::build_corpus(raw, report, config.jobs);

    ccqa::ensure_parent_dir(out_path);
    ccqa::write_corpus_file(out_path, corpus);

    const json report_json = {{"short_title", report.short_title},
                              {"no_code_answer", report.no_code_answer},
                              {"small_pool", report.small_pool},
                              {"retained", report.retained},
                              {"dropped_answers", report.dropped_answers},
                              {"input_pools", report.input_pools()}};
    const std::string report_path = config.paths.reports_dir + "/filter_report.json";
    write_text_file(report_path, report_json.dump(2) + "\n");
    ccqa::write_manifest(out_path, "build-corpus", config, {in_path}, {out_path, report_path});
    std::cerr << report_json.dump() << "\n";
    return 0;
}

int cmd_stats(const PipelineConfig& config, const std::string& in_path) {
    require_readable(in_path);
    std::ifstream in(in_path, std::ios::binary);
    const std::vector<std::uint64_t> sizes = ccqa::read_pool_sizes_jsonl(in);
    const ccqa::Histogram hist = ccqa::pool_size_histogram(sizes);
    const std::string table = ccqa::format_stats_table(hist);
    std::cout << table;
    const std::string stats_path = config.paths.reports_dir + "/pool_stats.json";
    write_text_file(stats_path, ccqa::stats_json(hist) + "\n");
    write_text_file(config.paths.reports_dir + "/pool_stats.txt", table);
    ccqa::write_manifest(stats_path, "stats", config, {in_path},
                         {stats_path, config.paths.reports_dir + "/pool_stats.txt"});
    return 0;
}

int cmd_score(const PipelineConfig& config, const std::string& in_path,
              const std::string& out_path) {
    require_readable(in_path);
    std::vector<ccqa::QuestionPool> pools = ccqa::read_corpus_file(in_path);
    const std::unique_ptr<ccqa::TokenScoreProvider> provider =
        make_provider(config.scoring.provider);
    const ccqa::ContentMode mode = ccqa::parse_content_mode(config.scoring.mode);
    ccqa::score_pools(pools, config.scoring.weights, *provider, mode, config.jobs);

    ccqa::ensure_parent_dir(out_path);
    ccqa::write_corpus_file(out_path, pools);
    const std::string dist_path = config.paths.reports_dir + "/score_distribution.jsonl";
    ccqa::ensure_parent_dir(dist_path);
    std::ofstream dist(dist_path, std::ios::binary);
    ccqa::write_score_distribution(dist, pools);
    dist.close();
    ccqa::write_manifest(out_path, "score", config, {in_path}, {out_path, dist_path});
    std::cerr << "scored " << pools.size() << " pools\n";
    return 0;
}

int cmd_rank(const PipelineConfig& config, const std::string& in_path,
             const std::string& out_path) {
    require_readable(in_path);
    std::vector<ccqa::QuestionPool> pools = ccqa::read_corpus_file(in_path);
    for (ccqa::QuestionPool& p : pools) {
        p = ccqa::build_ranked_pool(std::move(p),
                                    static_cast<std::size_t>(config.retrieval.max_pool_size));
    }
    ccqa::ensure_parent_dir(out_path);
    ccqa::write_corpus_file(out_path, pools);
    ccqa::write_manifest(out_path, "rank", config, {in_path}, {out_path});
    std::cerr << "ranked " << pools.size() << " pools\n";
    return 0;
}

// Vocabulary text sources: question text plus every answer of the train split.
ccqa::Vocabulary build_vocab(const PipelineConfig& config,
                             const std::vector<ccqa::QuestionPool>& pools) {
    std::vector<std::string> texts;
    for (const ccqa::QuestionPool& p : pools) {
        if (ccqa::is_validation_question(p.question_id, config.val_fraction)) continue;
        texts.push_back(p.question_text());
        for (const ccqa::AnswerRecord& a : p.answers) texts.push_back(a.content);
    }
    return ccqa::Vocabulary::build(texts, config.tokenizer.min_freq);
}

void write_train_outputs(const PipelineConfig& config, const std::string& dir,
                         const std::string& subcommand, const std::string& in_path,
                         const std::optional<std::string>& init_path,
                         const ccqa::Vocabulary& vocab, const ccqa::TrainResult& result) {
    fs::create_directories(dir);
    const std::string ckpt_path = dir + "/checkpoint.bin";
    ccqa::save_checkpoint(ckpt_path, vocab, result.params);
    const std::string log_path = dir + "/trainlog.json";
    write_text_file(log_path, result.log.to_json(config.to_json()));
    std::vector<std::string> inputs = {in_path};
    if (init_path) inputs.push_back(*init_path);
    ccqa::write_manifest(ckpt_path, subcommand, config, inputs, {ckpt_path, log_path});
    for (const ccqa::EpochLog& e : result.log.epochs) {
        std::cerr << "epoch " << e.epoch << " loss=" << e.mean_loss;
        if (e.ranking_tau) std::cerr << " tau=" << *e.ranking_tau;
        std::cerr << "\n";
    }
    std::cerr << subcommand << ": " << result.log.items << " items, "
              << result.log.wall_clock_ms << " ms"
              << (result.log.diverged ? " (diverged; kept last good checkpoint)" : "") << "\n"
              << "checkpoint: " << ckpt_path << "\n";
}

int cmd_train_sft(const PipelineConfig& config, const std::string& in_path) {
    require_readable(in_path);
    const std::vector<ccqa::QuestionPool> pools = ccqa::read_corpus_file(in_path);
    const ccqa::Vocabulary vocab = build_vocab(config, pools);

    std::vector<ccqa::QuestionPool> train_pools;
    for (const ccqa::QuestionPool& p : pools) {
        if (!ccqa::is_validation_question(p.question_id, config.val_fraction)) {
            train_pools.push_back(p);
        }
    }
    const std::vector<ccqa::SftPair> pairs =
        ccqa::build_sft_set(train_pools, config.sft_min_votes);
    if (pairs.empty()) {
        throw ccqa::DomainError("no SFT pairs: no accepted answers above the vote threshold");
    }

    ccqa::LmDims dims{vocab.size(), config.model.context, config.model.embed,
                      config.model.hidden};
    ccqa::Rng init_rng(config.seed, "init.sft");
    ccqa::LmParameters params = ccqa::LmParameters::random_init(dims, init_rng);
    const ccqa::TrainResult result =
        ccqa::train_sft(config.train_config(ccqa::TrainStage::Sft), vocab, pairs,
                        std::move(params));
    write_train_outputs(config, run_dir(config, "sft"), "train-sft", in_path, std::nullopt, vocab,
                        result);
    return 0;
}

int cmd_train_mpra(const PipelineConfig& config, const std::string& in_path,
                   std::string init_path) {
    require_readable(in_path);
    if (init_path.empty()) init_path = run_dir(config, "sft") + "/checkpoint.bin";
    require_readable(init_path);

    const std::vector<ccqa::QuestionPool> pools = ccqa::read_corpus_file(in_path);
    std::vector<ccqa::QuestionPool> train_pools;
    for (const ccqa::QuestionPool& p : pools) {
        if (!ccqa::is_validation_question(p.question_id, config.val_fraction)) {
            train_pools.push_back(p);
        }
    }
    if (train_pools.empty()) throw ccqa::DomainError("no ranked pools in the train split");

    auto [vocab, params] = ccqa::load_checkpoint(init_path);
    const ccqa::TrainResult result =
        ccqa::train_mpra(config.train_config(ccqa::TrainStage::Mpra), vocab, train_pools,
                         std::move(params));
    write_train_outputs(config, run_dir(config, "mpra"), "train-mpra", in_path, init_path, vocab,
                        result);
    return 0;
}

int cmd_retrieve_index(const PipelineConfig& config, const std::string& in_path,
                       const std::string& out_path) {
    require_readable(in_path);
    std::vector<ccqa::QuestionPool> pools = ccqa::read_corpus_file(in_path);
    if (config.retrieval.bank == "train") {
        std::vector<ccqa::QuestionPool> kept;
        for (ccqa::QuestionPool& p : pools) {
            if (!ccqa::is_validation_question(p.question_id, config.val_fraction)) {
                kept.push_back(std::move(p));
            }
        }
        pools = std::move(kept);
    } else if (config.retrieval.bank != "full") {
        throw ccqa::ConfigError("retrieval.bank must be full|train");
    }
    const ccqa::BankIndex index = ccqa::BankIndex::build(pools, config.jobs);
    ccqa::ensure_parent_dir(out_path);
    index.save(out_path);
    ccqa::write_manifest(out_path, "retrieve-index", config, {in_path}, {out_path});
    std::cerr << "indexed " << index.doc_count() << " documents\n";
    return 0;
}

int cmd_generate(const PipelineConfig& config, const std::string& corpus_path,
                 std::string checkpoint_path, const std::string& index_path,
                 const std::string& out_path, const std::string& split, int limit) {
    require_readable(corpus_path);
    if (checkpoint_path.empty()) checkpoint_path = run_dir(config, "mpra") + "/checkpoint.bin";
    require_readable(checkpoint_path);
    require_readable(index_path);

    const std::vector<ccqa::QuestionPool> pools = ccqa::read_corpus_file(corpus_path);
    auto [vocab, params] = ccqa::load_checkpoint(checkpoint_path);
    const ccqa::BankIndex index = ccqa::BankIndex::load(index_path);
    std::optional<ccqa::DenseVectorProvider> dense;
    if (config.retrieval.provider.rfind("dense:", 0) == 0) {
        dense = ccqa::DenseVectorProvider::load(config.retrieval.provider.substr(6));
    } else if (config.retrieval.provider != "bm25") {
        throw ccqa::ConfigError("retrieval.provider must be bm25|dense:PATH");
    }
    const std::string tmpl = load_template(config);
    const std::string tmpl_id = template_id(config);

    std::vector<const ccqa::QuestionPool*> targets;
    for (const ccqa::QuestionPool& p : pools) {
        if (split == "val" &&
            !ccqa::is_validation_question(p.question_id, config.val_fraction)) {
            continue;
        }
        targets.push_back(&p);
        if (limit > 0 && static_cast<int>(targets.size()) >= limit) break;
    }

    struct GenRow {
        std::int64_t question_id;
        std::string prompt;
        std::string generation;
    };
    std::vector<GenRow> rows(targets.size());
    ccqa::for_each_index(
        static_cast<std::int64_t>(targets.size()), config.jobs, [&](std::int64_t ti) {
            const ccqa::QuestionPool& pool = *targets[static_cast<std::size_t>(ti)];
            const std::string question = pool.question_text();
            std::vector<ccqa::RetrievalHit> hits;
            if (dense) {
                hits = dense->retrieve_by_id(pool.question_id, config.retrieval.k,
                                             pool.question_id);
            } else {
                hits = index.retrieve(question, config.retrieval.k, pool.question_id);
            }
            std::optional<std::pair<std::string, std::string>> exemplar;
            if (!hits.empty()) {
                const std::string* sq = index.question_text(hits.front().question_id);
                const std::string* sa = index.exemplar_answer(hits.front().question_id);
                if (sq && sa) exemplar = std::make_pair(*sq, *sa);
            }
            const ccqa::PromptBundle bundle =
                ccqa::assemble_prompt(tmpl, tmpl_id, question, exemplar);
            const std::vector<int> prompt_ids = vocab.encode(bundle.rendered);
            ccqa::Rng rng(config.seed, "generate." + std::to_string(pool.question_id));
            const std::vector<int> out_ids =
                ccqa::generate(params, prompt_ids, config.generation.max_gen_len,
                               config.generation.temperature, config.generation.top_p, rng);
            rows[static_cast<std::size_t>(ti)] =
                GenRow{pool.question_id, bundle.rendered, detokenize(vocab, out_ids)};
        });

    ccqa::ensure_parent_dir(out_path);
    std::ofstream out(out_path, std::ios::binary);
    if (!out) throw ccqa::IoError("cannot write: " + out_path);
    for (const GenRow& row : rows) {
        out << json{{"question_id", row.question_id},
                    {"prompt", row.prompt},
                    {"generation", row.generation}}
                   .dump()
            << '\n';
    }
    out.close();
    ccqa::write_manifest(out_path, "generate", config, {corpus_path, checkpoint_path, index_path},
                         {out_path});
    std::cerr << "generated " << rows.size() << " answers\n";
    return 0;
}

int cmd_evaluate(const PipelineConfig& config, const std::string& corpus_path,
                 const std::string& generations_path,
                 const std::optional<std::string>& preferences_path) {
    require_readable(corpus_path);
    require_readable(generations_path);
    const std::vector<ccqa::QuestionPool> pools = ccqa::read_corpus_file(corpus_path);
    const std::map<std::int64_t, std::string> generations = read_generations(generations_path);
    std::optional<std::map<std::int64_t, double>> preference;
    if (preferences_path) {
        require_readable(*preferences_path);
        preference = read_preferences(*preferences_path);
    }
    const ccqa::MetricReport report =
        ccqa::evaluate_run(pools, generations, preference,
                           config.eval_reference == "accepted", config.jobs);

    const std::string examples_path = config.paths.reports_dir + "/eval_examples.jsonl";
    ccqa::ensure_parent_dir(examples_path);
    std::ofstream examples(examples_path, std::ios::binary);
    ccqa::write_report_jsonl(examples, report);
    examples.close();
    const std::string summary_json_path = config.paths.reports_dir + "/eval_summary.json";
    write_text_file(summary_json_path, ccqa::report_summary_json(report));
    const std::string table = ccqa::format_report_table(report);
    write_text_file(config.paths.reports_dir + "/eval_summary.txt", table);
    std::cout << table;

    std::vector<std::string> inputs = {corpus_path, generations_path};
    if (preferences_path) inputs.push_back(*preferences_path);
    ccqa::write_manifest(examples_path, "evaluate", config, inputs,
                         {examples_path, summary_json_path,
                          config.paths.reports_dir + "/eval_summary.txt"});
    return 0;
}

int cmd_correlate(const PipelineConfig& config, const std::string& report_path,
                  const std::string& preferences_path) {
    require_readable(report_path);
    require_readable(preferences_path);
    std::ifstream in(report_path, std::ios::binary);
    const std::vector<ccqa::ExampleMetrics> examples = ccqa::read_report_jsonl(in);
    const std::map<std::int64_t, double> preference = read_preferences(preferences_path);
    const std::vector<ccqa::MetricCorrelation> cors =
        ccqa::correlate_examples(examples, preference);

    ccqa::MetricReport stub;
    stub.examples = examples;
    stub.correlations = cors;
    json out = json::array();
    for (const ccqa::MetricCorrelation& c : cors) {
        auto opt = [](const std::optional<double>& v) { return v ? json(*v) : json(nullptr); };
        out.push_back({{"metric", c.metric},
                       {"kendall", opt(c.kendall)},
                       {"spearman", opt(c.spearman)},
                       {"pearson", opt(c.pearson)}});
    }
    const std::string cor_path = config.paths.reports_dir + "/correlations.json";
    write_text_file(cor_path, out.dump(2) + "\n");
    std::cout << ccqa::format_report_table(stub);
    ccqa::write_manifest(cor_path, "correlate", config, {report_path, preferences_path},
                         {cor_path});
    return 0;
}

int cmd_grad_check(const PipelineConfig& config, double h, int samples) {
    // Synthetic vocabulary and data; the seed drives everything.
    std::vector<std::string> texts;
    ccqa::Rng data_rng(config.seed, "gradcheck.data");
    for (int i = 0; i < 24; ++i) {
        std::string t;
        for (int j = 0; j < 12; ++j) {
            t += "tok" + std::to_string(data_rng.uniform_int(0, 11)) + " ";
        }
        texts.push_back(t);
    }
    const ccqa::Vocabulary vocab = ccqa::Vocabulary::build(texts, 1);
    ccqa::LmDims dims{vocab.size(), 3, 6, 8};
    ccqa::Rng init_rng(config.seed, "gradcheck.init");
    const ccqa::LmParameters params = ccqa::LmParameters::random_init(dims, init_rng, 0.3);

    auto rand_seq = [&](int lo, int hi) {
        std::vector<int> ids;
        const int len = static_cast<int>(data_rng.uniform_int(lo, hi));
        for (int i = 0; i < len; ++i) {
            ids.push_back(static_cast<int>(
                data_rng.uniform_int(ccqa::Vocabulary::kReserved, dims.vocab - 1)));
        }
        return ids;
    };
    const std::vector<int> prompt = rand_seq(2, 5);
    std::vector<ccqa::SftItem> batch;
    for (int i = 0; i < 2; ++i) batch.push_back({rand_seq(2, 5), rand_seq(3, 8)});
    std::vector<std::vector<int>> answers;
    for (int i = 0; i < 4; ++i) answers.push_back(rand_seq(3, 8));

    ccqa::Rng check_rng(config.seed, "gradcheck.sample");
    double worst = 0.0;
    bool all_finite = true;

    {
        const ccqa::LossResult res = ccqa::sft_loss_and_grad(params, batch);
        const auto report = ccqa::gradient_check(
            params,
            [&](const ccqa::LmParameters& p) { return ccqa::sft_loss_and_grad(p, batch).loss; },
            res.grad, h, samples, check_rng);
        std::cout << "sft      max_rel_err=" << report.max_rel_err
                  << " coords=" << report.coords_checked << "\n";
        worst = std::max(worst, report.max_rel_err);
        all_finite = all_finite && report.loss_finite;
    }
    {
        const ccqa::LossResult res =
            ccqa::mpra_loss_and_grad(params, prompt, answers, ccqa::Aggregation::MeanLogProb);
        const auto report = ccqa::gradient_check(
            params,
            [&](const ccqa::LmParameters& p) {
                return ccqa::mpra_loss_and_grad(p, prompt, answers,
                                                ccqa::Aggregation::MeanLogProb)
                    .loss;
            },
            res.grad, h, samples, check_rng);
        std::cout << "mpra     max_rel_err=" << report.max_rel_err
                  << " coords=" << report.coords_checked << "\n";
        worst = std::max(worst, report.max_rel_err);
        all_finite = all_finite && report.loss_finite;
    }
    {
        const ccqa::LossResult res = ccqa::combined_loss_and_grad(
            params, prompt, answers, 1.0, ccqa::Aggregation::MeanLogProb);
        const auto report = ccqa::gradient_check(
            params,
            [&](const ccqa::LmParameters& p) {
                return ccqa::combined_loss_and_grad(p, prompt, answers, 1.0,
                                                    ccqa::Aggregation::MeanLogProb)
                    .loss;
            },
            res.grad, h, samples, check_rng);
        std::cout << "combined max_rel_err=" << report.max_rel_err
                  << " coords=" << report.coords_checked << "\n";
        worst = std::max(worst, report.max_rel_err);
        all_finite = all_finite && report.loss_finite;
    }
    std::cout << "max relative error: " << worst << "\n";
    if (!all_finite || !(worst < 1e-4)) {
        std::cerr << "gradient check FAILED\n";
        return 1;
    }
    return 0;
}

int cmd_synth_pools(const PipelineConfig& config, int count, const std::string& out_path) {
    ccqa::SynthConfig synth;
    synth.pool_count = count;
    synth.seed = config.seed;
    const std::vector<ccqa::QuestionPool> pools = ccqa::synth_pools(synth);
    ccqa::ensure_parent_dir(out_path);
    ccqa::write_corpus_file(out_path, pools);
    ccqa::write_manifest(out_path, "synth-pools", config, {}, {out_path});
    std::cerr << "wrote " << pools.size() << " synthetic pools\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"community-QA preference alignment toolkit"};
    app.require_subcommand(1);

    GlobalFlags flags;
    std::string opt_config, opt_mode, opt_template;
    std::uint64_t opt_seed = 0;
    int opt_jobs = 0;
    std::vector<double> opt_weights;
    app.add_option("--config", opt_config, "pipeline config file (env: CCQA_CONFIG)")
        ->each([&](const std::string& v) { flags.config_path = v; });
    app.add_option("--seed", opt_seed, "run seed (env: CCQA_SEED; flag wins)")
        ->each([&](const std::string& v) { flags.seed = std::stoull(v); });
    app.add_option("--jobs", opt_jobs, "worker count for parallel kernels")
        ->each([&](const std::string& v) { flags.jobs = std::stoi(v); });
    app.add_option("--weights", opt_weights, "score weights a,b,c")->delimiter(',')
        ->each([&](const std::string&) { flags.weights = opt_weights; });
    app.add_option("--mode", opt_mode, "content score mode: geomean|exact")
        ->each([&](const std::string& v) { flags.mode = v; });
    app.add_option("--template", opt_template, "prompt template file")
        ->each([&](const std::string& v) { flags.template_path = v; });

    // ingest
    auto* ingest = app.add_subcommand("ingest", "parse dump files into raw answer pools");
    std::vector<std::string> ingest_dumps;
    std::string ingest_out;
    ingest->add_option("--dump", ingest_dumps, "dump file (repeatable)");
    ingest->add_option("--out", ingest_out, "output raw pools file");

    auto* build = app.add_subcommand("build-corpus", "clean and filter raw pools");
    std::string build_in, build_out;
    build->add_option("--in", build_in, "raw pools file");
    build->add_option("--out", build_out, "output corpus file");

    auto* stats = app.add_subcommand("stats", "answer-pool size histogram");
    std::string stats_in;
    stats->add_option("--in", stats_in, "pools file (raw or corpus)");

    auto* score = app.add_subcommand("score", "compute preference scores");
    std::string score_in, score_out, score_provider;
    score->add_option("--in", score_in, "corpus file");
    score->add_option("--out", score_out, "output scored corpus");
    score->add_option("--provider", score_provider,
                      "constant|constant:X|file:PATH|command:CMD");

    auto* rank = app.add_subcommand("rank", "order answers by preference score");
    std::string rank_in, rank_out;
    rank->add_option("--in", rank_in, "scored corpus file");
    rank->add_option("--out", rank_out, "output ranked corpus");

    auto* train_sft = app.add_subcommand("train-sft", "foundational fine-tuning stage");
    std::string sft_in;
    train_sft->add_option("--in", sft_in, "corpus file");

    auto* train_mpra = app.add_subcommand("train-mpra", "preference ranking alignment stage");
    std::string mpra_in, mpra_init;
    train_mpra->add_option("--in", mpra_in, "ranked corpus file");
    train_mpra->add_option("--init", mpra_init, "initial checkpoint (default: sft run)");

    auto* rindex = app.add_subcommand("retrieve-index", "build the question-bank index");
    std::string rindex_in, rindex_out;
    rindex->add_option("--in", rindex_in, "corpus file");
    rindex->add_option("--out", rindex_out, "output index file");

    auto* generate = app.add_subcommand("generate", "one-shot retrieval-augmented generation");
    std::string gen_corpus, gen_ckpt, gen_index, gen_out, gen_split = "val";
    int gen_limit = 0;
    generate->add_option("--corpus", gen_corpus, "corpus with target questions");
    generate->add_option("--checkpoint", gen_ckpt, "model checkpoint (default: mpra run)");
    generate->add_option("--index", gen_index, "bank index file");
    generate->add_option("--out", gen_out, "output generations file");
    generate->add_option("--split", gen_split, "val|all");
    generate->add_option("--limit", gen_limit, "cap the number of questions (0 = no cap)");

    auto* evaluate = app.add_subcommand("evaluate", "accuracy metrics against references");
    std::string eval_corpus, eval_gen, eval_pref;
    evaluate->add_option("--corpus", eval_corpus, "corpus with reference answers");
    evaluate->add_option("--generations", eval_gen, "generations file");
    evaluate->add_option("--preferences", eval_pref, "per-question preference scores");

    auto* correlate = app.add_subcommand("correlate", "metric/preference rank correlations");
    std::string cor_report, cor_pref;
    correlate->add_option("--report", cor_report, "per-example metrics file");
    correlate->add_option("--preferences", cor_pref, "per-question preference scores")
        ->required();

    auto* gradcheck = app.add_subcommand("grad-check", "finite-difference gradient verification");
    double gc_h = 1e-5;
    int gc_samples = 200;
    gradcheck->add_option("--step", gc_h, "finite-difference step");
    gradcheck->add_option("--samples", gc_samples, "coordinates sampled per tensor");

    auto* synth = app.add_subcommand("synth-pools", "generate synthetic ranked pools");
    int synth_count = 50;
    std::string synth_out;
    synth->add_option("--count", synth_count, "number of pools");
    synth->add_option("--out", synth_out, "output file");

    CLI11_PARSE(app, argc, argv);

    try {
        const PipelineConfig config = resolve_config(flags);
        auto or_default = [](const std::string& v, const std::string& fallback) {
            return v.empty() ? fallback : v;
        };
        if (ingest->parsed()) {
            return cmd_ingest(config, ingest_dumps, or_default(ingest_out, config.paths.raw_pools));
        }
        if (build->parsed()) {
            return cmd_build_corpus(config, or_default(build_in, config.paths.raw_pools),
                                    or_default(build_out, config.paths.corpus));
        }
        if (stats->parsed()) {
            return cmd_stats(config, or_default(stats_in, config.paths.raw_pools));
        }
        if (score->parsed()) {
            PipelineConfig c = config;
            if (!score_provider.empty()) c.scoring.provider = score_provider;
            return cmd_score(c, or_default(score_in, c.paths.corpus),
                             or_default(score_out, c.paths.scored));
        }
        if (rank->parsed()) {
            return cmd_rank(config, or_default(rank_in, config.paths.scored),
                            or_default(rank_out, config.paths.ranked));
        }
        if (train_sft->parsed()) {
            return cmd_train_sft(config, or_default(sft_in, config.paths.corpus));
        }
        if (train_mpra->parsed()) {
            return cmd_train_mpra(config, or_default(mpra_in, config.paths.ranked), mpra_init);
        }
        if (rindex->parsed()) {
            return cmd_retrieve_index(config, or_default(rindex_in, config.paths.ranked),
                                      or_default(rindex_out, config.paths.index));
        }
        if (generate->parsed()) {
            return cmd_generate(config, or_default(gen_corpus, config.paths.ranked), gen_ckpt,
                                or_default(gen_index, config.paths.index),
                                or_default(gen_out, config.paths.generations), gen_split,
                                gen_limit);
        }
        if (evaluate->parsed()) {
            return cmd_evaluate(config, or_default(eval_corpus, config.paths.ranked),
                                or_default(eval_gen, config.paths.generations),
                                eval_pref.empty() ? std::nullopt
                                                  : std::optional<std::string>(eval_pref));
        }
        if (correlate->parsed()) {
            return cmd_correlate(config,
                                 or_default(cor_report,
                                            config.paths.reports_dir + "/eval_examples.jsonl"),
                                 cor_pref);
        }
        if (gradcheck->parsed()) return cmd_grad_check(config, gc_h, gc_samples);
        if (synth->parsed()) {
            return cmd_synth_pools(config, synth_count,
                                   or_default(synth_out, "out/synth_pools.jsonl"));
        }
        std::cerr << "unknown subcommand\n";
        return 1;
    } catch (const ccqa::Error& e) {
        std::cerr << json{{"error", {{"category", e.category()}, {"message", e.what()}}}}.dump()
                  << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << json{{"error", {{"category", "internal"}, {"message", e.what()}}}}.dump()
                  << "\n";
        return 3;
    }
}
