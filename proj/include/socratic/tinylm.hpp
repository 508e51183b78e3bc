#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace socratic {

inline constexpr std::string_view kModelMagic = "tinylm/1";

// Word-level vocabulary with reserved control ids.
struct Vocab {
    static constexpr int32_t kBos = 0;
    static constexpr int32_t kEos = 1;
    static constexpr int32_t kUnk = 2;

    std::vector<std::string> tokens;  // index == id; [0..2] are <bos>/<eos>/<unk>
    std::unordered_map<std::string, int32_t> ids;

    // Vocabulary over every token of the given texts (min frequency 1),
    // regular tokens sorted lexicographically after the reserved ids.
    static Vocab build(std::span<const std::string> texts);
    static Vocab from_tokens(std::vector<std::string> tokens);

    int32_t size() const { return static_cast<int32_t>(tokens.size()); }
    int32_t id_of(std::string_view token) const;

    // tokenize + map to ids (UNK fallback) + terminating EOS.
    std::vector<int32_t> encode_question(std::string_view text) const;
    // Inverse-ish: joins tokens with spaces, EOS/BOS dropped.
    std::string decode(std::span<const int32_t> ids_in) const;

    bool operator==(const Vocab& other) const { return tokens == other.tokens; }
};

// The trainable policy: a hashed-bigram table of logits. Row b holds the
// next-token logits for context bucket b = hash(prompt, previous token) % B.
struct PolicyParams {
    int32_t bucket_count = 4096;
    Vocab vocab;
    std::vector<float> logits;  // bucket_count * vocab.size(), row-major

    static PolicyParams zeros(Vocab vocab, int32_t bucket_count = 4096);

    float* row(int32_t bucket) { return logits.data() + static_cast<size_t>(bucket) * vocab.size(); }
    const float* row(int32_t bucket) const {
        return logits.data() + static_cast<size_t>(bucket) * vocab.size();
    }
};

// Stable across runs and platforms; result in [0, bucket_count).
int32_t context_bucket(std::string_view prompt, int32_t prev_token, int32_t bucket_count);

// log softmax of one bucket row, computed in double with max subtraction.
std::vector<double> log_softmax_row(const PolicyParams& params, int32_t bucket);
std::vector<double> softmax_row(const PolicyParams& params, int32_t bucket);

// Sum over steps of log P(q_t | bucket(prompt, q_{t-1})), predecessor of the
// first token being BOS. The question must be nonempty and end with EOS.
double sequence_logprob(const PolicyParams& params, std::string_view prompt,
                        std::span<const int32_t> question);

// Argmax decoding, ties resolved toward the lowest token id. Stops at EOS
// (which is included in the output) or after max_len tokens.
std::vector<int32_t> greedy_decode(const PolicyParams& params, std::string_view prompt,
                                   int max_len);

struct NucleusOptions {
    double p = 0.9;
    double temperature = 1.0;
    int k_return = 5;
    uint64_t seed = 0;
    int max_len = 64;
};

// Top-p sampling: per step, divide logits by temperature, keep the smallest
// probability-sorted prefix with cumulative mass >= p (ties sort lower id
// first), renormalize, sample. k_return sequences are drawn back to back
// from one seeded generator.
std::vector<std::vector<int32_t>> nucleus_sample(const PolicyParams& params,
                                                 std::string_view prompt,
                                                 const NucleusOptions& options);

// The per-step distribution nucleus_sample draws from, as a full-vocab
// vector (zero outside the kept prefix). Exposed for tests and inspection.
std::vector<double> nucleus_step_distribution(const PolicyParams& params, std::string_view prompt,
                                              int32_t prev_token, double p, double temperature);

struct ModelMeta {
    std::string config_hash;
    std::string toolkit_version;
};

// "tinylm/1" container: one JSON header line, then the logits table as raw
// little-endian float32.
void save_model(const PolicyParams& params, const std::filesystem::path& path,
                const ModelMeta& meta);
PolicyParams load_model(const std::filesystem::path& path, ModelMeta* meta = nullptr);

}  // namespace socratic
