#include "socratic/tinylm.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>
#include <limits>
#include <random>
#include <set>

#include "json.hpp"
#include "socratic/errors.hpp"
#include "socratic/hash.hpp"
#include "socratic/tokenize.hpp"

namespace socratic {

using nlohmann::json;

Vocab Vocab::from_tokens(std::vector<std::string> tokens) {
    Vocab v;
    v.tokens = std::move(tokens);
    for (int32_t i = 0; i < v.size(); ++i) v.ids.emplace(v.tokens[i], i);
    return v;
}

Vocab Vocab::build(std::span<const std::string> texts) {
    std::set<std::string> unique;
    for (const std::string& text : texts) {
        for (std::string& tok : tokenize(text)) unique.insert(std::move(tok));
    }
    std::vector<std::string> tokens{"<bos>", "<eos>", "<unk>"};
    for (const std::string& tok : unique) tokens.push_back(tok);
    return from_tokens(std::move(tokens));
}

int32_t Vocab::id_of(std::string_view token) const {
    auto it = ids.find(std::string(token));
    return it == ids.end() ? kUnk : it->second;
}

std::vector<int32_t> Vocab::encode_question(std::string_view text) const {
    std::vector<int32_t> out;
    for (const std::string& tok : tokenize(text)) out.push_back(id_of(tok));
    out.push_back(kEos);
    return out;
}

std::string Vocab::decode(std::span<const int32_t> ids_in) const {
    std::string out;
    for (int32_t id : ids_in) {
        if (id == kEos || id == kBos) continue;
        if (!out.empty()) out.push_back(' ');
        out += (id >= 0 && id < size()) ? tokens[id] : "<unk>";
    }
    return out;
}

PolicyParams PolicyParams::zeros(Vocab vocab, int32_t bucket_count) {
    if (bucket_count < 1) throw ContractError("bucket_count must be >= 1");
    PolicyParams p;
    p.bucket_count = bucket_count;
    p.vocab = std::move(vocab);
    p.logits.assign(static_cast<size_t>(bucket_count) * p.vocab.size(), 0.0f);
    return p;
}

int32_t context_bucket(std::string_view prompt, int32_t prev_token, int32_t bucket_count) {
    Fnv1a64 h;
    h.update_field(prompt);
    h.update_u32(static_cast<uint32_t>(prev_token));
    return static_cast<int32_t>(h.digest() % static_cast<uint64_t>(bucket_count));
}

std::vector<double> log_softmax_row(const PolicyParams& params, int32_t bucket) {
    const float* row = params.row(bucket);
    int32_t v = params.vocab.size();
    double max_logit = -std::numeric_limits<double>::infinity();
    for (int32_t i = 0; i < v; ++i) max_logit = std::max(max_logit, static_cast<double>(row[i]));
    double sum = 0.0;
    for (int32_t i = 0; i < v; ++i) sum += std::exp(static_cast<double>(row[i]) - max_logit);
    double lse = max_logit + std::log(sum);
    std::vector<double> out(v);
    for (int32_t i = 0; i < v; ++i) out[i] = static_cast<double>(row[i]) - lse;
    return out;
}

std::vector<double> softmax_row(const PolicyParams& params, int32_t bucket) {
    std::vector<double> out = log_softmax_row(params, bucket);
    for (double& x : out) x = std::exp(x);
    return out;
}

double sequence_logprob(const PolicyParams& params, std::string_view prompt,
                        std::span<const int32_t> question) {
    if (question.empty()) throw ContractError("sequence_logprob: question must be nonempty");
    double total = 0.0;
    int32_t prev = Vocab::kBos;
    for (int32_t token : question) {
        if (token < 0 || token >= params.vocab.size()) {
            throw ContractError("sequence_logprob: token id out of range");
        }
        int32_t bucket = context_bucket(prompt, prev, params.bucket_count);
        total += log_softmax_row(params, bucket)[token];
        prev = token;
    }
    return total;
}

std::vector<int32_t> greedy_decode(const PolicyParams& params, std::string_view prompt,
                                   int max_len) {
    if (max_len < 1) throw ContractError("greedy_decode: max_len must be >= 1");
    std::vector<int32_t> out;
    int32_t prev = Vocab::kBos;
    for (int step = 0; step < max_len; ++step) {
        int32_t bucket = context_bucket(prompt, prev, params.bucket_count);
        const float* row = params.row(bucket);
        int32_t best = 0;
        for (int32_t i = 1; i < params.vocab.size(); ++i) {
            if (row[i] > row[best]) best = i;  // ties keep the lowest id
        }
        out.push_back(best);
        if (best == Vocab::kEos) break;
        prev = best;
    }
    return out;
}

namespace {

struct NucleusStep {
    std::vector<int32_t> kept;        // token ids, probability-sorted
    std::vector<double> kept_probs;   // renormalized
};

NucleusStep nucleus_step(const PolicyParams& params, std::string_view prompt, int32_t prev,
                         double p, double temperature) {
    if (p <= 0.0 || p > 1.0) throw ContractError("nucleus: p must be in (0, 1]");
    if (temperature <= 0.0) throw ContractError("nucleus: temperature must be > 0");
    int32_t bucket = context_bucket(prompt, prev, params.bucket_count);
    const float* row = params.row(bucket);
    int32_t v = params.vocab.size();

    std::vector<double> scaled(v);
    double max_logit = -std::numeric_limits<double>::infinity();
    for (int32_t i = 0; i < v; ++i) {
        scaled[i] = static_cast<double>(row[i]) / temperature;
        max_logit = std::max(max_logit, scaled[i]);
    }
    double sum = 0.0;
    std::vector<double> probs(v);
    for (int32_t i = 0; i < v; ++i) {
        probs[i] = std::exp(scaled[i] - max_logit);
        sum += probs[i];
    }
    for (double& x : probs) x /= sum;

    std::vector<int32_t> order(v);
    for (int32_t i = 0; i < v; ++i) order[i] = i;
    std::sort(order.begin(), order.end(), [&](int32_t a, int32_t b) {
        if (probs[a] != probs[b]) return probs[a] > probs[b];
        return a < b;
    });

    NucleusStep step;
    double cumulative = 0.0;
    for (int32_t id : order) {
        step.kept.push_back(id);
        step.kept_probs.push_back(probs[id]);
        cumulative += probs[id];
        if (cumulative >= p) break;
    }
    for (double& x : step.kept_probs) x /= cumulative;
    return step;
}

}  // namespace

std::vector<double> nucleus_step_distribution(const PolicyParams& params, std::string_view prompt,
                                              int32_t prev_token, double p, double temperature) {
    NucleusStep step = nucleus_step(params, prompt, prev_token, p, temperature);
    std::vector<double> out(params.vocab.size(), 0.0);
    for (size_t i = 0; i < step.kept.size(); ++i) out[step.kept[i]] = step.kept_probs[i];
    return out;
}

std::vector<std::vector<int32_t>> nucleus_sample(const PolicyParams& params,
                                                 std::string_view prompt,
                                                 const NucleusOptions& options) {
    if (options.k_return < 1) throw ContractError("nucleus: k_return must be >= 1");
    if (options.max_len < 1) throw ContractError("nucleus: max_len must be >= 1");
    std::mt19937_64 rng(options.seed);
    // 53-bit uniform in [0, 1); the raw engine keeps draws identical across
    // platforms, unlike std::uniform_real_distribution.
    auto uniform = [&rng]() { return static_cast<double>(rng() >> 11) * 0x1.0p-53; };

    std::vector<std::vector<int32_t>> sequences;
    sequences.reserve(options.k_return);
    for (int k = 0; k < options.k_return; ++k) {
        std::vector<int32_t> seq;
        int32_t prev = Vocab::kBos;
        for (int step_idx = 0; step_idx < options.max_len; ++step_idx) {
            NucleusStep step =
                nucleus_step(params, prompt, prev, options.p, options.temperature);
            double u = uniform();
            double cumulative = 0.0;
            int32_t chosen = step.kept.back();
            for (size_t i = 0; i < step.kept.size(); ++i) {
                cumulative += step.kept_probs[i];
                if (u < cumulative) {
                    chosen = step.kept[i];
                    break;
                }
            }
            seq.push_back(chosen);
            if (chosen == Vocab::kEos) break;
            prev = chosen;
        }
        sequences.push_back(std::move(seq));
    }
    return sequences;
}

// ---------------------------------------------------------------------------
// Model file

void save_model(const PolicyParams& params, const std::filesystem::path& path,
                const ModelMeta& meta) {
    json header;
    header["magic"] = kModelMagic;
    header["bucket_count"] = params.bucket_count;
    header["vocab_size"] = params.vocab.size();
    header["tokens"] = params.vocab.tokens;
    header["config_hash"] = meta.config_hash;
    header["toolkit_version"] = meta.toolkit_version;

    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write model file " + path.string());
    out << header.dump() << "\n";
    std::string payload;
    payload.reserve(params.logits.size() * 4);
    for (float f : params.logits) {
        uint32_t bits = std::bit_cast<uint32_t>(f);
        for (int i = 0; i < 4; ++i) payload.push_back(static_cast<char>((bits >> (8 * i)) & 0xff));
    }
    out.write(payload.data(), static_cast<std::streamsize>(payload.size()));
}

PolicyParams load_model(const std::filesystem::path& path, ModelMeta* meta) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ArtifactError("model file not found: " + path.string());
    std::string header_line;
    if (!std::getline(in, header_line)) throw ParseError("model file truncated: " + path.string());
    json header;
    try {
        header = json::parse(header_line);
    } catch (const json::parse_error& e) {
        throw ParseError("bad model header in " + path.string() + ": " + e.what());
    }
    if (header.value("magic", "") != kModelMagic) {
        throw VersionError("model file " + path.string() + " is not a " +
                           std::string(kModelMagic) + " file");
    }
    PolicyParams params;
    params.bucket_count = header.at("bucket_count").get<int32_t>();
    params.vocab = Vocab::from_tokens(header.at("tokens").get<std::vector<std::string>>());
    int32_t vocab_size = header.at("vocab_size").get<int32_t>();
    if (vocab_size != params.vocab.size()) {
        throw ParseError("model header vocab_size disagrees with token list in " + path.string());
    }
    size_t count = static_cast<size_t>(params.bucket_count) * params.vocab.size();
    std::string payload(count * 4, '\0');
    in.read(payload.data(), static_cast<std::streamsize>(payload.size()));
    if (static_cast<size_t>(in.gcount()) != payload.size()) {
        throw ParseError("model payload truncated in " + path.string());
    }
    params.logits.resize(count);
    for (size_t i = 0; i < count; ++i) {
        uint32_t bits = 0;
        for (int b = 0; b < 4; ++b) {
            bits |= static_cast<uint32_t>(static_cast<unsigned char>(payload[i * 4 + b])) << (8 * b);
        }
        params.logits[i] = std::bit_cast<float>(bits);
    }
    if (meta) {
        meta->config_hash = header.value("config_hash", "");
        meta->toolkit_version = header.value("toolkit_version", "");
    }
    return params;
}

}  // namespace socratic
