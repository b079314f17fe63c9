#include "ccqa/lm.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <unordered_set>

#include "ccqa/errors.hpp"
#include "ccqa/ranking.hpp"

namespace ccqa {

namespace {

void check_dims(const LmDims& d) {
    if (d.vocab < Vocabulary::kReserved || d.context < 1 || d.embed < 1 || d.hidden < 1) {
        throw DomainError("invalid model dimensions");
    }
}

struct ForwardCache {
    std::vector<double> input;      // context*embed
    std::vector<double> hidden;     // tanh activations
    std::vector<double> log_probs;  // vocab
    std::vector<double> probs;      // vocab
};

void forward_into(const LmParameters& p, std::span<const int> context, ForwardCache& c) {
    const int k = p.dims.context;
    const int d = p.dims.embed;
    const int h = p.dims.hidden;
    const int v = p.dims.vocab;
    if (static_cast<int>(context.size()) != k) {
        throw DomainError("context length must equal the model context size");
    }
    for (int j = 0; j < k; ++j) {
        const int tok = context[j];
        if (tok < 0 || tok >= v) throw DomainError("token id out of vocabulary range");
    }

    c.input.resize(static_cast<std::size_t>(k) * d);
    for (int j = 0; j < k; ++j) {
        const double* row = p.embed.data() + static_cast<std::size_t>(context[j]) * d;
        std::memcpy(c.input.data() + static_cast<std::size_t>(j) * d, row,
                    sizeof(double) * static_cast<std::size_t>(d));
    }

    c.hidden.assign(p.b1.begin(), p.b1.end());
    const int in_dim = k * d;
    for (int i = 0; i < in_dim; ++i) {
        const double xi = c.input[i];
        if (xi == 0.0) continue;
        const double* w_row = p.w1.data() + static_cast<std::size_t>(i) * h;
        for (int j = 0; j < h; ++j) c.hidden[j] += xi * w_row[j];
    }
    for (int j = 0; j < h; ++j) c.hidden[j] = std::tanh(c.hidden[j]);

    c.log_probs.assign(p.b2.begin(), p.b2.end());
    for (int j = 0; j < h; ++j) {
        const double aj = c.hidden[j];
        if (aj == 0.0) continue;
        const double* w_row = p.w2.data() + static_cast<std::size_t>(j) * v;
        for (int t = 0; t < v; ++t) c.log_probs[t] += aj * w_row[t];
    }
    // log-softmax
    double m = c.log_probs[0];
    for (double x : c.log_probs) m = std::max(m, x);
    double sum = 0.0;
    for (double x : c.log_probs) sum += std::exp(x - m);
    const double log_z = m + std::log(sum);
    c.probs.resize(static_cast<std::size_t>(v));
    for (int t = 0; t < v; ++t) {
        c.log_probs[t] -= log_z;
        c.probs[t] = std::exp(c.log_probs[t]);
    }
}

// Builds the sliding context ending just before global position `pos` of the
// extended sequence prompt||answer||EOS, BOS-padded on the left.
void context_at(std::span<const int> ext, std::size_t pos, int k, std::vector<int>& out) {
    out.resize(static_cast<std::size_t>(k));
    for (int j = 0; j < k; ++j) {
        const std::int64_t idx = static_cast<std::int64_t>(pos) - k + j;
        out[static_cast<std::size_t>(j)] =
            idx < 0 ? Vocabulary::kBos : ext[static_cast<std::size_t>(idx)];
    }
}

// Adds weight * d(sum_t w_t * logprob_t)/dparams where w_t is 1/T for
// MeanLogProb and 1 for SumLogProb. Returns the aggregate. When grad is
// null, runs forward only.
double accumulate_sequence(const LmParameters& p, std::span<const int> prompt,
                           std::span<const int> answer, Aggregation mode, double weight,
                           LmParameters* grad, std::vector<double>* per_token) {
    const int k = p.dims.context;
    const int d = p.dims.embed;
    const int h = p.dims.hidden;
    const int v = p.dims.vocab;

    std::vector<int> ext;
    ext.reserve(prompt.size() + answer.size() + 1);
    ext.insert(ext.end(), prompt.begin(), prompt.end());
    ext.insert(ext.end(), answer.begin(), answer.end());
    ext.push_back(Vocabulary::kEos);

    const std::size_t t_count = answer.size() + 1;  // includes EOS
    const double w_t = mode == Aggregation::MeanLogProb
                           ? 1.0 / static_cast<double>(t_count)
                           : 1.0;

    ForwardCache cache;
    std::vector<int> ctx;
    std::vector<double> dlogits(static_cast<std::size_t>(v));
    std::vector<double> dhidden(static_cast<std::size_t>(h));
    std::vector<double> dinput;
    double aggregate = 0.0;
    if (per_token) per_token->clear();

    for (std::size_t t = 0; t < t_count; ++t) {
        const std::size_t pos = prompt.size() + t;
        const int target = ext[pos];
        context_at(ext, pos, k, ctx);
        forward_into(p, ctx, cache);
        const double lp = cache.log_probs[static_cast<std::size_t>(target)];
        aggregate += w_t * lp;
        if (per_token) per_token->push_back(lp);
        if (!grad) continue;

        const double coeff = weight * w_t;
        for (int i = 0; i < v; ++i) dlogits[static_cast<std::size_t>(i)] = -coeff * cache.probs[i];
        dlogits[static_cast<std::size_t>(target)] += coeff;

        // b2, w2 and hidden backprop
        std::fill(dhidden.begin(), dhidden.end(), 0.0);
        for (int i = 0; i < v; ++i) grad->b2[static_cast<std::size_t>(i)] += dlogits[i];
        for (int j = 0; j < h; ++j) {
            const double aj = cache.hidden[j];
            double* gw_row = grad->w2.data() + static_cast<std::size_t>(j) * v;
            const double* w_row = p.w2.data() + static_cast<std::size_t>(j) * v;
            double acc = 0.0;
            for (int i = 0; i < v; ++i) {
                gw_row[i] += aj * dlogits[i];
                acc += w_row[i] * dlogits[i];
            }
            dhidden[static_cast<std::size_t>(j)] = acc;
        }
        // tanh derivative
        for (int j = 0; j < h; ++j) {
            const double aj = cache.hidden[j];
            dhidden[static_cast<std::size_t>(j)] *= 1.0 - aj * aj;
            grad->b1[static_cast<std::size_t>(j)] += dhidden[static_cast<std::size_t>(j)];
        }
        // w1 and input backprop
        const int in_dim = k * d;
        dinput.assign(static_cast<std::size_t>(in_dim), 0.0);
        for (int i = 0; i < in_dim; ++i) {
            const double xi = cache.input[i];
            double* gw_row = grad->w1.data() + static_cast<std::size_t>(i) * h;
            const double* w_row = p.w1.data() + static_cast<std::size_t>(i) * h;
            double acc = 0.0;
            for (int j = 0; j < h; ++j) {
                gw_row[j] += xi * dhidden[static_cast<std::size_t>(j)];
                acc += w_row[j] * dhidden[static_cast<std::size_t>(j)];
            }
            dinput[static_cast<std::size_t>(i)] = acc;
        }
        // embeddings
        for (int j = 0; j < k; ++j) {
            double* ge_row = grad->embed.data() + static_cast<std::size_t>(ctx[j]) * d;
            const double* di = dinput.data() + static_cast<std::size_t>(j) * d;
            for (int e = 0; e < d; ++e) ge_row[e] += di[e];
        }
    }
    return aggregate;
}

}  // namespace

LmParameters LmParameters::zeros(const LmDims& dims) {
    check_dims(dims);
    LmParameters p;
    p.dims = dims;
    p.embed.assign(static_cast<std::size_t>(dims.vocab) * dims.embed, 0.0);
    p.w1.assign(static_cast<std::size_t>(dims.context) * dims.embed * dims.hidden, 0.0);
    p.b1.assign(static_cast<std::size_t>(dims.hidden), 0.0);
    p.w2.assign(static_cast<std::size_t>(dims.hidden) * dims.vocab, 0.0);
    p.b2.assign(static_cast<std::size_t>(dims.vocab), 0.0);
    return p;
}

LmParameters LmParameters::random_init(const LmDims& dims, Rng& rng, double scale) {
    LmParameters p = zeros(dims);
    for (double& x : p.embed) x = rng.normal(0.0, scale);
    for (double& x : p.w1) x = rng.normal(0.0, scale);
    for (double& x : p.w2) x = rng.normal(0.0, scale);
    // biases start at zero
    return p;
}

void LmParameters::fill_zero() {
    std::fill(embed.begin(), embed.end(), 0.0);
    std::fill(w1.begin(), w1.end(), 0.0);
    std::fill(b1.begin(), b1.end(), 0.0);
    std::fill(w2.begin(), w2.end(), 0.0);
    std::fill(b2.begin(), b2.end(), 0.0);
}

void LmParameters::axpy(double a, const LmParameters& x) {
    if (!(dims == x.dims)) throw DomainError("axpy dimension mismatch");
    auto apply = [a](std::vector<double>& y, const std::vector<double>& v) {
        for (std::size_t i = 0; i < y.size(); ++i) y[i] += a * v[i];
    };
    apply(embed, x.embed);
    apply(w1, x.w1);
    apply(b1, x.b1);
    apply(w2, x.w2);
    apply(b2, x.b2);
}

void LmParameters::scale(double a) {
    for (double& x : embed) x *= a;
    for (double& x : w1) x *= a;
    for (double& x : b1) x *= a;
    for (double& x : w2) x *= a;
    for (double& x : b2) x *= a;
}

bool LmParameters::all_finite() const {
    auto ok = [](const std::vector<double>& v) {
        for (double x : v) {
            if (!std::isfinite(x)) return false;
        }
        return true;
    };
    return ok(embed) && ok(w1) && ok(b1) && ok(w2) && ok(b2);
}

std::size_t LmParameters::coord_count() const {
    return embed.size() + w1.size() + b1.size() + w2.size() + b2.size();
}

double LmParameters::get_coord(std::size_t i) const {
    if (i < embed.size()) return embed[i];
    i -= embed.size();
    if (i < w1.size()) return w1[i];
    i -= w1.size();
    if (i < b1.size()) return b1[i];
    i -= b1.size();
    if (i < w2.size()) return w2[i];
    i -= w2.size();
    return b2.at(i);
}

void LmParameters::add_coord(std::size_t i, double delta) {
    if (i < embed.size()) { embed[i] += delta; return; }
    i -= embed.size();
    if (i < w1.size()) { w1[i] += delta; return; }
    i -= w1.size();
    if (i < b1.size()) { b1[i] += delta; return; }
    i -= b1.size();
    if (i < w2.size()) { w2[i] += delta; return; }
    i -= w2.size();
    b2.at(i) += delta;
}

std::array<LmParameters::TensorRange, 5> LmParameters::tensor_ranges() const {
    std::array<TensorRange, 5> out;
    std::size_t off = 0;
    out[0] = {"embed", off, off + embed.size()};
    off += embed.size();
    out[1] = {"w1", off, off + w1.size()};
    off += w1.size();
    out[2] = {"b1", off, off + b1.size()};
    off += b1.size();
    out[3] = {"w2", off, off + w2.size()};
    off += w2.size();
    out[4] = {"b2", off, off + b2.size()};
    return out;
}

const char* aggregation_name(Aggregation mode) {
    return mode == Aggregation::MeanLogProb ? "mean" : "sum";
}

Aggregation parse_aggregation(const std::string& name) {
    if (name == "mean") return Aggregation::MeanLogProb;
    if (name == "sum") return Aggregation::SumLogProb;
    throw ConfigError("unknown aggregation mode: " + name + " (expected mean|sum)");
}

std::vector<double> forward_log_probs(const LmParameters& params, std::span<const int> context) {
    ForwardCache cache;
    forward_into(params, context, cache);
    return std::move(cache.log_probs);
}

SequenceScore sequence_score(const LmParameters& params, std::span<const int> prompt,
                             std::span<const int> answer, Aggregation mode) {
    SequenceScore score;
    score.mode = mode;
    score.aggregate =
        accumulate_sequence(params, prompt, answer, mode, 0.0, nullptr, &score.token_log_probs);
    return score;
}

LossResult sft_loss_and_grad(const LmParameters& params, std::span<const SftItem> batch) {
    if (batch.empty()) throw DomainError("sft_loss_and_grad: empty batch");
    LossResult result;
    result.grad = LmParameters::zeros(params.dims);
    std::size_t valid = 0;
    for (const SftItem& item : batch) {
        if (!item.answer.empty()) ++valid;
    }
    if (valid == 0) {
        result.skipped = batch.size();
        return result;
    }
    const double item_weight = -1.0 / static_cast<double>(valid);
    double loss = 0.0;
    for (const SftItem& item : batch) {
        if (item.answer.empty()) {
            ++result.skipped;
            continue;
        }
        const double agg = accumulate_sequence(params, item.prompt, item.answer,
                                               Aggregation::MeanLogProb, item_weight,
                                               &result.grad, nullptr);
        loss -= agg;
    }
    result.loss = loss / static_cast<double>(valid);
    return result;
}

LossResult mpra_loss_and_grad(const LmParameters& params, std::span<const int> prompt,
                              std::span<const std::vector<int>> ranked_answers,
                              Aggregation mode) {
    const std::size_t n = ranked_answers.size();
    if (n < 2) throw DomainError("mpra_loss_and_grad needs at least 2 ranked answers");

    const std::vector<double> m = model_scores(params, prompt, ranked_answers, mode);

    // Suffix log-sum-exp per elimination round.
    std::vector<double> lse(n - 1);
    for (std::size_t i = 0; i + 1 < n; ++i) {
        lse[i] = log_sum_exp(std::span<const double>(m).subspan(i));
    }
    double loss = 0.0;
    for (std::size_t i = 0; i + 1 < n; ++i) loss += lse[i] - m[i];

    // dL/dm_j = sum over rounds i <= j of softmax weight minus the indicator
    // that answer j leads round j.
    std::vector<double> coeff(n, 0.0);
    for (std::size_t j = 0; j < n; ++j) {
        const std::size_t last_round = std::min(j, n - 2);
        for (std::size_t i = 0; i <= last_round; ++i) coeff[j] += std::exp(m[j] - lse[i]);
        if (j + 1 < n) coeff[j] -= 1.0;
    }

    LossResult result;
    result.loss = loss;
    result.grad = LmParameters::zeros(params.dims);
    for (std::size_t j = 0; j < n; ++j) {
        if (coeff[j] == 0.0) continue;
        accumulate_sequence(params, prompt, ranked_answers[j], mode, coeff[j], &result.grad,
                            nullptr);
    }
    return result;
}

LossResult combined_loss_and_grad(const LmParameters& params, std::span<const int> prompt,
                                  std::span<const std::vector<int>> ranked_answers, double alpha,
                                  Aggregation mode) {
    LossResult result = mpra_loss_and_grad(params, prompt, ranked_answers, mode);
    if (alpha != 0.0) {
        // NLL of the top candidate, length-normalized as in the SFT stage.
        const double agg = accumulate_sequence(params, prompt, ranked_answers[0],
                                               Aggregation::MeanLogProb, -alpha, &result.grad,
                                               nullptr);
        result.loss += alpha * -agg;
    }
    return result;
}

std::vector<double> model_scores(const LmParameters& params, std::span<const int> prompt,
                                 std::span<const std::vector<int>> answers, Aggregation mode) {
    std::vector<double> out;
    out.reserve(answers.size());
    for (const std::vector<int>& answer : answers) {
        out.push_back(accumulate_sequence(params, prompt, answer, mode, 0.0, nullptr, nullptr));
    }
    return out;
}

std::vector<int> generate(const LmParameters& params, std::span<const int> prompt, int max_len,
                          double temperature, double top_p, Rng& rng) {
    if (max_len < 1) throw DomainError("generate: max_len must be >= 1");
    if (!(temperature > 0.0)) throw DomainError("generate: temperature must be > 0");
    if (!(top_p > 0.0) || top_p > 1.0) throw DomainError("generate: top_p must be in (0,1]");

    const int k = params.dims.context;
    const int v = params.dims.vocab;
    std::vector<int> ext(prompt.begin(), prompt.end());
    std::vector<int> out;
    ForwardCache cache;
    std::vector<int> ctx;
    std::vector<int> order(static_cast<std::size_t>(v));

    for (int step = 0; step < max_len; ++step) {
        context_at(ext, ext.size(), k, ctx);
        forward_into(params, ctx, cache);

        int chosen;
        if (temperature < 1e-6) {
            chosen = 0;
            for (int t = 1; t < v; ++t) {
                if (cache.log_probs[t] > cache.log_probs[chosen]) chosen = t;
            }
        } else {
            // softmax of log-probs / temperature
            std::vector<double> scaled(static_cast<std::size_t>(v));
            double m = -INFINITY;
            for (int t = 0; t < v; ++t) {
                scaled[t] = cache.log_probs[t] / temperature;
                m = std::max(m, scaled[t]);
            }
            double z = 0.0;
            for (int t = 0; t < v; ++t) {
                scaled[t] = std::exp(scaled[t] - m);
                z += scaled[t];
            }
            for (int t = 0; t < v; ++t) scaled[t] /= z;

            std::iota(order.begin(), order.end(), 0);
            std::sort(order.begin(), order.end(), [&](int a, int b) {
                if (scaled[a] != scaled[b]) return scaled[a] > scaled[b];
                return a < b;
            });
            std::size_t cut = order.size();
            double mass = 0.0;
            for (std::size_t i = 0; i < order.size(); ++i) {
                mass += scaled[order[i]];
                if (mass >= top_p) {
                    cut = i + 1;
                    break;
                }
            }
            const double u = rng.uniform() * mass;
            double acc = 0.0;
            chosen = order[cut - 1];
            for (std::size_t i = 0; i < cut; ++i) {
                acc += scaled[order[i]];
                if (u < acc) {
                    chosen = order[i];
                    break;
                }
            }
        }
        if (chosen == Vocabulary::kEos) break;
        out.push_back(chosen);
        ext.push_back(chosen);
    }
    return out;
}

GradCheckReport gradient_check(const LmParameters& at,
                               const std::function<double(const LmParameters&)>& loss,
                               const LmParameters& analytic_grad, double h,
                               int samples_per_tensor, Rng& rng) {
    if (!(h > 0.0)) throw DomainError("gradient_check: step must be > 0");
    GradCheckReport report;
    LmParameters probe = at;
    for (const auto& range : at.tensor_ranges()) {
        const std::size_t size = range.end - range.begin;
        if (size == 0) continue;
        std::vector<std::size_t> coords;
        if (size <= static_cast<std::size_t>(samples_per_tensor)) {
            coords.resize(size);
            std::iota(coords.begin(), coords.end(), range.begin);
        } else {
            std::unordered_set<std::size_t> seen;
            while (seen.size() < static_cast<std::size_t>(samples_per_tensor)) {
                seen.insert(range.begin + static_cast<std::size_t>(rng.uniform_int(
                                              0, static_cast<std::int64_t>(size) - 1)));
            }
            coords.assign(seen.begin(), seen.end());
            std::sort(coords.begin(), coords.end());
        }
        for (std::size_t c : coords) {
            probe.add_coord(c, h);
            const double up = loss(probe);
            probe.add_coord(c, -2.0 * h);
            const double down = loss(probe);
            probe.add_coord(c, h);
            if (!std::isfinite(up) || !std::isfinite(down)) {
                report.loss_finite = false;
                continue;
            }
            const double numeric = (up - down) / (2.0 * h);
            const double analytic = analytic_grad.get_coord(c);
            const double rel = std::fabs(analytic - numeric) /
                               std::max({1.0, std::fabs(analytic), std::fabs(numeric)});
            report.max_rel_err = std::max(report.max_rel_err, rel);
            ++report.coords_checked;
        }
    }
    return report;
}

namespace {

constexpr char kCheckpointMagic[8] = {'C', 'C', 'Q', 'A', 'L', 'M', '0', '1'};

void put_u64(std::string& out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

void put_doubles(std::string& out, const std::vector<double>& v) {
    const std::size_t bytes = v.size() * sizeof(double);
    const std::size_t off = out.size();
    out.resize(off + bytes);
    std::memcpy(out.data() + off, v.data(), bytes);
}

struct Reader {
    const std::string& data;
    std::size_t pos = 0;

    std::uint64_t u64() {
        if (pos + 8 > data.size()) throw IoError("truncated checkpoint");
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) {
            v |= static_cast<std::uint64_t>(static_cast<unsigned char>(data[pos + i])) << (8 * i);
        }
        pos += 8;
        return v;
    }

    std::string bytes(std::size_t n) {
        if (pos + n > data.size()) throw IoError("truncated checkpoint");
        std::string out = data.substr(pos, n);
        pos += n;
        return out;
    }

    void doubles(std::vector<double>& out, std::size_t count) {
        const std::size_t bytes_needed = count * sizeof(double);
        if (pos + bytes_needed > data.size()) throw IoError("truncated checkpoint");
        out.resize(count);
        std::memcpy(out.data(), data.data() + pos, bytes_needed);
        pos += bytes_needed;
    }
};

std::uint64_t payload_digest(const std::string& payload) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (char c : payload) {
        h ^= static_cast<unsigned char>(c);
        h *= 0x100000001b3ULL;
    }
    return h;
}

}  // namespace

void save_checkpoint(const std::string& path, const Vocabulary& vocab,
                     const LmParameters& params) {
    if (vocab.size() != params.dims.vocab) {
        throw DomainError("checkpoint vocabulary size does not match model dims");
    }
    std::string payload;
    put_u64(payload, static_cast<std::uint64_t>(params.dims.vocab));
    put_u64(payload, static_cast<std::uint64_t>(params.dims.context));
    put_u64(payload, static_cast<std::uint64_t>(params.dims.embed));
    put_u64(payload, static_cast<std::uint64_t>(params.dims.hidden));
    for (const std::string& tok : vocab.id_to_token) {
        put_u64(payload, tok.size());
        payload.append(tok);
    }
    put_doubles(payload, params.embed);
    put_doubles(payload, params.w1);
    put_doubles(payload, params.b1);
    put_doubles(payload, params.w2);
    put_doubles(payload, params.b2);

    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write checkpoint: " + path);
    out.write(kCheckpointMagic, sizeof(kCheckpointMagic));
    std::string digest;
    put_u64(digest, payload_digest(payload));
    out.write(digest.data(), static_cast<std::streamsize>(digest.size()));
    out.write(payload.data(), static_cast<std::streamsize>(payload.size()));
    if (!out) throw IoError("failed writing checkpoint: " + path);
}

std::pair<Vocabulary, LmParameters> load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot read checkpoint: " + path);
    std::string data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (data.size() < sizeof(kCheckpointMagic) + 8 ||
        std::memcmp(data.data(), kCheckpointMagic, sizeof(kCheckpointMagic)) != 0) {
        throw IoError("not a model checkpoint: " + path);
    }
    Reader r{data, sizeof(kCheckpointMagic)};
    const std::uint64_t digest = r.u64();
    if (digest != payload_digest(data.substr(r.pos))) {
        throw IoError("checkpoint digest mismatch: " + path);
    }

    LmDims dims;
    dims.vocab = static_cast<int>(r.u64());
    dims.context = static_cast<int>(r.u64());
    dims.embed = static_cast<int>(r.u64());
    dims.hidden = static_cast<int>(r.u64());
    check_dims(dims);

    std::vector<std::string> tokens;
    tokens.reserve(static_cast<std::size_t>(dims.vocab));
    for (int i = 0; i < dims.vocab; ++i) {
        const std::uint64_t len = r.u64();
        tokens.push_back(r.bytes(len));
    }
    LmParameters params = LmParameters::zeros(dims);
    r.doubles(params.embed, params.embed.size());
    r.doubles(params.w1, params.w1.size());
    r.doubles(params.b1, params.b1.size());
    r.doubles(params.w2, params.w2.size());
    r.doubles(params.b2, params.b2.size());
    if (r.pos != data.size()) throw IoError("trailing bytes in checkpoint: " + path);
    return {Vocabulary::from_tokens(std::move(tokens)), std::move(params)};
}

}  // namespace ccqa
