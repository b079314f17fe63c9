#include "ccqa/config.hpp"

#include <cctype>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "ccqa/errors.hpp"
#include "ccqa/rng.hpp"

namespace ccqa {

namespace {

using json = nlohmann::json;
namespace fs = std::filesystem;

json stage_to_json(const StageConfig& s) {
    return json{{"epochs", s.epochs},
                {"learning_rate", s.learning_rate},
                {"grad_accum_steps", s.grad_accum_steps},
                {"alpha", s.alpha},
                {"aggregation", s.aggregation},
                {"max_seq_len", s.max_seq_len},
                {"shuffle", s.shuffle}};
}

void stage_from_json(const json& j, StageConfig& s) {
    s.epochs = j.value("epochs", s.epochs);
    s.learning_rate = j.value("learning_rate", s.learning_rate);
    s.grad_accum_steps = j.value("grad_accum_steps", s.grad_accum_steps);
    s.alpha = j.value("alpha", s.alpha);
    s.aggregation = j.value("aggregation", s.aggregation);
    s.max_seq_len = j.value("max_seq_len", s.max_seq_len);
    s.shuffle = j.value("shuffle", s.shuffle);
}

// CCQA_SECTION_FIELD=value overrides a scalar leaf, e.g.
// CCQA_GENERATION_TEMPERATURE=0.7 or CCQA_SCORING_MODE=exact.
void apply_env_overrides(json& tree, const std::string& prefix) {
    for (auto& [key, value] : tree.items()) {
        std::string name = prefix;
        for (char c : key) {
            name.push_back(c == '.' || c == '-' ? '_'
                                                : static_cast<char>(std::toupper(
                                                      static_cast<unsigned char>(c))));
        }
        if (value.is_object()) {
            apply_env_overrides(value, name + "_");
            continue;
        }
        const char* env = std::getenv(name.c_str());
        if (!env) continue;
        const std::string text = env;
        try {
            if (value.is_string()) {
                value = text;
            } else if (value.is_boolean()) {
                value = text == "1" || text == "true" || text == "yes";
            } else if (value.is_number_integer()) {
                value = std::stoll(text);
            } else if (value.is_number_unsigned()) {
                value = static_cast<std::uint64_t>(std::stoull(text));
            } else if (value.is_number_float()) {
                value = std::stod(text);
            }
            // arrays/null: not overridable from the environment
        } catch (const std::exception&) {
            throw ConfigError("bad value for " + name + ": " + text);
        }
    }
}

std::uint64_t digest_bytes(const std::string& bytes) { return fnv1a64(bytes); }

std::string hex64(std::uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

}  // namespace

const char* const kToolVersion = "ccqa 0.1.0";

TrainConfig PipelineConfig::train_config(TrainStage stage) const {
    const StageConfig& s = stage == TrainStage::Sft ? sft : mpra;
    TrainConfig t;
    t.stage = stage;
    t.epochs = s.epochs;
    t.learning_rate = s.learning_rate;
    t.grad_accum_steps = s.grad_accum_steps;
    t.alpha = s.alpha;
    t.aggregation = parse_aggregation(s.aggregation);
    t.max_seq_len = s.max_seq_len;
    t.seed = seed;
    t.shuffle = s.shuffle;
    t.jobs = jobs;
    return t;
}

std::string PipelineConfig::to_json() const {
    json j = {
        {"paths",
         {{"dump", paths.dump},
          {"raw_pools", paths.raw_pools},
          {"corpus", paths.corpus},
          {"scored", paths.scored},
          {"ranked", paths.ranked},
          {"index", paths.index},
          {"runs_dir", paths.runs_dir},
          {"reports_dir", paths.reports_dir},
          {"generations", paths.generations}}},
        {"scoring",
         {{"weights", {scoring.weights.bias, scoring.weights.vote, scoring.weights.content}},
          {"mode", scoring.mode},
          {"provider", scoring.provider}}},
        {"sft", stage_to_json(sft)},
        {"mpra", stage_to_json(mpra)},
        {"retrieval",
         {{"k", retrieval.k},
          {"template_path", retrieval.template_path},
          {"provider", retrieval.provider},
          {"bank", retrieval.bank},
          {"max_pool_size", retrieval.max_pool_size}}},
        {"generation",
         {{"temperature", generation.temperature},
          {"top_p", generation.top_p},
          {"max_gen_len", generation.max_gen_len}}},
        {"tokenizer", {{"min_freq", tokenizer.min_freq}}},
        {"model",
         {{"context", model.context}, {"embed", model.embed}, {"hidden", model.hidden}}},
        {"tag_filter", tag_filter},
        {"cutoff", cutoff ? json(*cutoff) : json(nullptr)},
        {"sft_min_votes", sft_min_votes},
        {"val_fraction", val_fraction},
        {"eval_reference", eval_reference},
        {"seed", seed},
        {"jobs", jobs},
    };
    return j.dump(2) + "\n";
}

PipelineConfig PipelineConfig::from_json(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw ConfigError(std::string("unreadable config: ") + e.what());
    }
    PipelineConfig c;
    if (j.contains("paths")) {
        const json& p = j["paths"];
        c.paths.dump = p.value("dump", c.paths.dump);
        c.paths.raw_pools = p.value("raw_pools", c.paths.raw_pools);
        c.paths.corpus = p.value("corpus", c.paths.corpus);
        c.paths.scored = p.value("scored", c.paths.scored);
        c.paths.ranked = p.value("ranked", c.paths.ranked);
        c.paths.index = p.value("index", c.paths.index);
        c.paths.runs_dir = p.value("runs_dir", c.paths.runs_dir);
        c.paths.reports_dir = p.value("reports_dir", c.paths.reports_dir);
        c.paths.generations = p.value("generations", c.paths.generations);
    }
    if (j.contains("scoring")) {
        const json& s = j["scoring"];
        if (s.contains("weights")) {
            const auto w = s["weights"].get<std::vector<double>>();
            if (w.size() != 3) throw ConfigError("scoring.weights must have 3 entries");
            c.scoring.weights = {w[0], w[1], w[2]};
        }
        c.scoring.mode = s.value("mode", c.scoring.mode);
        c.scoring.provider = s.value("provider", c.scoring.provider);
    }
    if (j.contains("sft")) stage_from_json(j["sft"], c.sft);
    if (j.contains("mpra")) stage_from_json(j["mpra"], c.mpra);
    if (j.contains("retrieval")) {
        const json& r = j["retrieval"];
        c.retrieval.k = r.value("k", c.retrieval.k);
        c.retrieval.template_path = r.value("template_path", c.retrieval.template_path);
        c.retrieval.provider = r.value("provider", c.retrieval.provider);
        c.retrieval.bank = r.value("bank", c.retrieval.bank);
        c.retrieval.max_pool_size = r.value("max_pool_size", c.retrieval.max_pool_size);
    }
    if (j.contains("generation")) {
        const json& g = j["generation"];
        c.generation.temperature = g.value("temperature", c.generation.temperature);
        c.generation.top_p = g.value("top_p", c.generation.top_p);
        c.generation.max_gen_len = g.value("max_gen_len", c.generation.max_gen_len);
    }
    if (j.contains("tokenizer")) c.tokenizer.min_freq = j["tokenizer"].value("min_freq", 2);
    if (j.contains("model")) {
        const json& m = j["model"];
        c.model.context = m.value("context", c.model.context);
        c.model.embed = m.value("embed", c.model.embed);
        c.model.hidden = m.value("hidden", c.model.hidden);
    }
    c.tag_filter = j.value("tag_filter", c.tag_filter);
    if (j.contains("cutoff") && !j["cutoff"].is_null()) {
        c.cutoff = j["cutoff"].get<std::string>();
    }
    c.sft_min_votes = j.value("sft_min_votes", c.sft_min_votes);
    c.val_fraction = j.value("val_fraction", c.val_fraction);
    c.eval_reference = j.value("eval_reference", c.eval_reference);
    c.seed = j.value("seed", c.seed);
    c.jobs = j.value("jobs", c.jobs);
    return c;
}

PipelineConfig PipelineConfig::load(const std::optional<std::string>& path, bool apply_env) {
    std::string text;
    if (path) {
        std::ifstream in(*path, std::ios::binary);
        if (!in) throw ConfigError("cannot read config file: " + *path);
        std::ostringstream ss;
        ss << in.rdbuf();
        text = ss.str();
    } else {
        text = PipelineConfig{}.to_json();
    }
    if (apply_env) {
        json tree;
        try {
            tree = json::parse(text);
        } catch (const json::exception& e) {
            throw ConfigError(std::string("unreadable config: ") + e.what());
        }
        apply_env_overrides(tree, "CCQA_");
        text = tree.dump();
    }
    return from_json(text);
}

std::uint64_t PipelineConfig::config_hash() const { return digest_bytes(to_json()); }

std::string digest_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot read file for digest: " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return hex64(digest_bytes(ss.str()));
}

void write_manifest(const std::string& primary_output, const std::string& subcommand,
                    const PipelineConfig& config,
                    const std::vector<std::string>& inputs,
                    const std::vector<std::string>& outputs) {
    json in_digests = json::object();
    for (const std::string& p : inputs) in_digests[p] = digest_file(p);
    json out_digests = json::object();
    for (const std::string& p : outputs) out_digests[p] = digest_file(p);
    const json manifest = {{"tool", kToolVersion},
                           {"subcommand", subcommand},
                           {"config_hash", hex64(config.config_hash())},
                           {"seed", config.seed},
                           {"inputs", std::move(in_digests)},
                           {"outputs", std::move(out_digests)}};
    const std::string path = primary_output + ".manifest.json";
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write manifest: " + path);
    out << manifest.dump(2) << "\n";
}

void verify_input_digest(const std::string& path) {
    const std::string manifest_path = path + ".manifest.json";
    std::ifstream in(manifest_path, std::ios::binary);
    if (!in) return;  // no manifest, nothing to verify
    json manifest;
    try {
        in >> manifest;
    } catch (const json::exception& e) {
        throw IoError("bad manifest " + manifest_path + ": " + e.what());
    }
    if (!manifest.contains("outputs") || !manifest["outputs"].contains(path)) return;
    const std::string recorded = manifest["outputs"][path].get<std::string>();
    const std::string actual = digest_file(path);
    if (recorded != actual) {
        throw DigestError("input " + path + " does not match its manifest (expected " + recorded +
                          ", found " + actual + ")");
    }
}

void ensure_parent_dir(const std::string& path) {
    const fs::path parent = fs::path(path).parent_path();
    if (!parent.empty()) fs::create_directories(parent);
}

}  // namespace ccqa
