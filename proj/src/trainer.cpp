#include "ccqa/trainer.hpp"

#include <chrono>
#include <cmath>
#include <numeric>

#include <json.hpp>

#include "ccqa/errors.hpp"
#include "ccqa/metrics.hpp"
#include "ccqa/parallel.hpp"
#include "ccqa/rng.hpp"

namespace ccqa {

namespace {

using json = nlohmann::json;

std::vector<int> encode_clipped(const Vocabulary& vocab, const std::string& text,
                                int max_seq_len) {
    std::vector<int> ids = vocab.encode(text);
    if (max_seq_len > 0 && static_cast<int>(ids.size()) > max_seq_len) {
        ids.resize(static_cast<std::size_t>(max_seq_len));
    }
    return ids;
}

// One window update worth of items, gradient-averaged in item order.
template <typename ItemGrad>
LossResult reduce_window(const LmParameters& params, std::size_t count, int jobs,
                         ItemGrad&& item_grad) {
    constexpr std::size_t kChunk = 32;
    LossResult total;
    total.grad = LmParameters::zeros(params.dims);
    double loss_sum = 0.0;
    for (std::size_t base = 0; base < count; base += kChunk) {
        const std::size_t chunk = std::min(kChunk, count - base);
        std::vector<LossResult> slots(chunk);
        for_each_index(static_cast<std::int64_t>(chunk), jobs, [&](std::int64_t i) {
            slots[static_cast<std::size_t>(i)] =
                item_grad(base + static_cast<std::size_t>(i));
        });
        for (LossResult& slot : slots) {
            loss_sum += slot.loss;
            total.grad.axpy(1.0, slot.grad);
            total.skipped += slot.skipped;
        }
    }
    total.grad.scale(1.0 / static_cast<double>(count));
    total.loss = loss_sum / static_cast<double>(count);
    return total;
}

struct EpochOutcome {
    double mean_loss = 0.0;
    bool diverged = false;
};

// Runs one epoch of windowed SGD over `order`; updates params in place.
template <typename ItemGrad>
EpochOutcome run_epoch(LmParameters& params, std::span<const std::size_t> order,
                       const TrainConfig& config, ItemGrad&& item_grad) {
    EpochOutcome out;
    double loss_sum = 0.0;
    const std::size_t window = static_cast<std::size_t>(config.grad_accum_steps);
    for (std::size_t base = 0; base < order.size(); base += window) {
        const std::size_t count = std::min(window, order.size() - base);
        LossResult res = reduce_window(params, count, config.jobs, [&](std::size_t i) {
            return item_grad(order[base + i]);
        });
        if (!std::isfinite(res.loss) || !res.grad.all_finite()) {
            out.diverged = true;
            break;
        }
        LmParameters before = params;
        params.axpy(-config.learning_rate, res.grad);
        if (!params.all_finite()) {
            params = std::move(before);
            out.diverged = true;
            break;
        }
        loss_sum += res.loss * static_cast<double>(count);
    }
    out.mean_loss = order.empty() ? 0.0 : loss_sum / static_cast<double>(order.size());
    return out;
}

std::vector<std::size_t> epoch_order(std::size_t n, const TrainConfig& config,
                                     const char* stage_name, int epoch) {
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    if (config.shuffle) {
        Rng rng(config.seed, std::string(stage_name) + ".shuffle." + std::to_string(epoch));
        rng.shuffle(order);
    }
    return order;
}

}  // namespace

void TrainConfig::validate() const {
    if (epochs < 0) throw ConfigError("epochs must be >= 0");
    if (!(learning_rate > 0)) throw ConfigError("learning rate must be > 0");
    if (grad_accum_steps < 1) throw ConfigError("gradient accumulation steps must be >= 1");
    if (max_seq_len < 1) throw ConfigError("max sequence length must be >= 1");
    if (alpha < 0) throw ConfigError("alpha must be nonnegative");
}

std::string TrainLog::to_json(const std::string& config_snapshot) const {
    json epochs_json = json::array();
    for (const EpochLog& e : epochs) {
        json rec = {{"epoch", e.epoch}, {"mean_loss", e.mean_loss}};
        if (e.ranking_tau) rec["ranking_tau"] = *e.ranking_tau;
        epochs_json.push_back(std::move(rec));
    }
    json rec = {{"stage", stage},       {"seed", seed},   {"items", items},
                {"diverged", diverged}, {"epochs", std::move(epochs_json)}};
    rec["config"] = json::parse(config_snapshot);
    return rec.dump(2) + "\n";
}

std::vector<SftItem> encode_sft_pairs(const Vocabulary& vocab, std::span<const SftPair> pairs,
                                      int max_seq_len) {
    std::vector<SftItem> items;
    items.reserve(pairs.size());
    for (const SftPair& p : pairs) {
        SftItem item;
        item.prompt = encode_clipped(vocab, p.question, max_seq_len);
        item.answer = encode_clipped(vocab, p.answer, max_seq_len);
        items.push_back(std::move(item));
    }
    return items;
}

std::vector<EncodedPool> encode_ranked_pools(const Vocabulary& vocab,
                                             std::span<const QuestionPool> pools,
                                             int max_seq_len) {
    std::vector<EncodedPool> out;
    out.reserve(pools.size());
    for (const QuestionPool& pool : pools) {
        if (pool.answers.size() < 2) {
            throw DomainError("ranked pool " + std::to_string(pool.question_id) +
                              " has fewer than 2 answers");
        }
        EncodedPool ep;
        ep.prompt = encode_clipped(vocab, pool.question_text(), max_seq_len);
        for (const AnswerRecord& a : pool.answers) {
            if (!a.r) {
                throw DomainError("pool " + std::to_string(pool.question_id) +
                                  " is not scored; run the ranking step first");
            }
            ep.answers.push_back(encode_clipped(vocab, a.content, max_seq_len));
            ep.r.push_back(*a.r);
        }
        out.push_back(std::move(ep));
    }
    return out;
}

LossResult batch_sft_gradient(const LmParameters& params, std::span<const SftItem> items,
                              std::span<const std::size_t> order, int jobs) {
    if (order.empty()) throw DomainError("batch_sft_gradient: empty batch");
    return reduce_window(params, order.size(), jobs, [&](std::size_t i) {
        return sft_loss_and_grad(params, std::span<const SftItem>(&items[order[i]], 1));
    });
}

LossResult batch_mpra_gradient(const LmParameters& params, std::span<const EncodedPool> pools,
                               std::span<const std::size_t> order, double alpha,
                               Aggregation mode, int jobs) {
    if (order.empty()) throw DomainError("batch_mpra_gradient: empty batch");
    return reduce_window(params, order.size(), jobs, [&](std::size_t i) {
        const EncodedPool& pool = pools[order[i]];
        return combined_loss_and_grad(params, pool.prompt, pool.answers, alpha, mode);
    });
}

std::optional<double> mean_ranking_tau(const LmParameters& params,
                                       std::span<const EncodedPool> pools, Aggregation mode,
                                       int jobs) {
    std::vector<std::optional<double>> taus(pools.size());
    for_each_index(static_cast<std::int64_t>(pools.size()), jobs, [&](std::int64_t i) {
        const EncodedPool& pool = pools[static_cast<std::size_t>(i)];
        const std::vector<double> scores = model_scores(params, pool.prompt, pool.answers, mode);
        taus[static_cast<std::size_t>(i)] = kendall_tau_b(scores, pool.r);
    });
    double sum = 0.0;
    std::size_t defined = 0;
    for (const auto& t : taus) {
        if (t) {
            sum += *t;
            ++defined;
        }
    }
    if (defined == 0) return std::nullopt;
    return sum / static_cast<double>(defined);
}

TrainResult train_sft(const TrainConfig& config, const Vocabulary& vocab,
                      std::span<const SftPair> pairs, LmParameters init) {
    config.validate();
    if (pairs.empty()) throw DomainError("train_sft: no training pairs");
    const auto start = std::chrono::steady_clock::now();

    const std::vector<SftItem> items = encode_sft_pairs(vocab, pairs, config.max_seq_len);
    TrainResult result;
    result.params = std::move(init);
    result.log.stage = "sft";
    result.log.seed = config.seed;
    result.log.items = items.size();

    for (int epoch = 1; epoch <= config.epochs; ++epoch) {
        const std::vector<std::size_t> order = epoch_order(items.size(), config, "sft", epoch);
        const EpochOutcome out = run_epoch(result.params, order, config, [&](std::size_t i) {
            return sft_loss_and_grad(result.params, std::span<const SftItem>(&items[i], 1));
        });
        result.log.epochs.push_back({epoch, out.mean_loss, std::nullopt});
        if (out.diverged) {
            result.log.diverged = true;
            break;
        }
    }
    result.log.wall_clock_ms =
        std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start)
            .count();
    return result;
}

TrainResult train_mpra(const TrainConfig& config, const Vocabulary& vocab,
                       std::span<const QuestionPool> ranked_pools, LmParameters init) {
    config.validate();
    if (ranked_pools.empty()) throw DomainError("train_mpra: no ranked pools");
    const auto start = std::chrono::steady_clock::now();

    const std::vector<EncodedPool> pools =
        encode_ranked_pools(vocab, ranked_pools, config.max_seq_len);
    TrainResult result;
    result.params = std::move(init);
    result.log.stage = "mpra";
    result.log.seed = config.seed;
    result.log.items = pools.size();

    for (int epoch = 1; epoch <= config.epochs; ++epoch) {
        const std::vector<std::size_t> order = epoch_order(pools.size(), config, "mpra", epoch);
        const EpochOutcome out = run_epoch(result.params, order, config, [&](std::size_t i) {
            return combined_loss_and_grad(result.params, pools[i].prompt, pools[i].answers,
                                          config.alpha, config.aggregation);
        });
        EpochLog log{epoch, out.mean_loss, std::nullopt};
        log.ranking_tau = mean_ranking_tau(result.params, pools, config.aggregation, config.jobs);
        result.log.epochs.push_back(std::move(log));
        if (out.diverged) {
            result.log.diverged = true;
            break;
        }
    }
    result.log.wall_clock_ms =
        std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start)
            .count();
    return result;
}

bool is_validation_question(std::int64_t question_id, double val_fraction) {
    const std::uint64_t h = splitmix64(static_cast<std::uint64_t>(question_id) ^
                                       0x9d2c5680u);
    const double u = static_cast<double>(h >> 11) * 0x1.0p-53;
    return u < val_fraction;
}

}  // namespace ccqa
