#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "socratic/augment.hpp"
#include "socratic/corpus.hpp"
#include "socratic/eval.hpp"
#include "socratic/gateway.hpp"
#include "socratic/tinylm.hpp"
#include "socratic/train.hpp"

namespace socratic {

enum class DecodeMode { Greedy, Sample, Both };
enum class WeightKind { F1, Precision, Recall };

struct GatewaySettings {
    std::string endpoint_url;
    std::string model_name = "gpt-4";
    std::string cache_dir;  // empty: <output_dir>/cache
    int max_in_flight = 4;
    std::string api_key_env = "API_KEY";
    double generation_temperature = 0.5;
    double consistency_temperature = 0.0;
    int max_tokens = 1024;
};

struct DecodeSettings {
    DecodeMode mode = DecodeMode::Both;
    double p = 0.9;
    double temperature = 1.0;
    int k_return = 5;
    uint64_t seed = 0;
    int max_len = 64;
};

struct EvalSettings {
    WeightKind weight = WeightKind::F1;
};

struct PipelineConfig {
    std::string corpus_path;
    std::string eval_corpus_path;  // empty: corpus_path
    std::string output_dir;
    std::string ingest_input_dir;
    bool include_bug_fixes = true;
    int32_t bucket_count = 4096;
    GatewaySettings gateway;
    TrainConfig sft;
    TrainConfig dpo;
    DecodeSettings decode;
    EvalSettings eval;
};

// Reads and validates a config file; throws ConfigError naming the offending
// field.
PipelineConfig load_config(const std::filesystem::path& path);

struct RunFlags {
    bool mock = false;
    bool force = false;
    std::optional<uint64_t> seed;  // overrides every configured seed
};

// Digest of the semantically relevant settings (paths excluded so the same
// run in a different directory stays byte-identical). Embedded in every
// artifact.
std::string config_hash(const PipelineConfig& config, const RunFlags& flags);

// Deterministic stand-in for a live endpoint: answers generation requests
// with four category-tagged questions derived from the request content, and
// consistency requests with a distribution that marks exactly one candidate
// per turn as Good.
class FixtureProvider : public ChatProvider {
public:
    std::string complete(const ChatExchange& exchange) override;
};

// Library-level augmentation driver, reusable with any gateway.
struct AugmentOutcome {
    std::vector<GeneratedInvalidQuestion> kept;  // sorted (dialogue_id, turn_index, category)
    std::map<std::string, int> label_counts;     // argmax label -> count, all candidates
    int total_candidates = 0;
    int parse_failures = 0;
    std::vector<std::string> warnings;
};

AugmentOutcome augment_corpus(const std::vector<Dialogue>& corpus, ChatGateway& gateway,
                              const AugmentPromptOptions& options);

// Subcommand implementations. Artifacts land in config.output_dir under
// fixed names; every artifact embeds the config hash and toolkit version.
class Pipeline {
public:
    Pipeline(PipelineConfig config, RunFlags flags);

    void ingest();
    void augment();
    void build_prefs();
    void train_sft_cmd();
    void train_dpo_cmd();
    void generate();
    void evaluate();
    void all();

    std::filesystem::path artifact_path(std::string_view name) const;
    const std::string& hash() const { return hash_; }

private:
    ChatGateway& gateway();
    std::vector<Dialogue> load_corpus(const std::string& path, std::string_view hint) const;
    std::string method_name(std::string_view model_tag, bool sampled) const;

    PipelineConfig config_;
    RunFlags flags_;
    std::string hash_;
    std::unique_ptr<ChatGateway> gateway_;
};

// Argument parsing + dispatch + error-to-exit-code mapping for the CLI.
// Exit codes: 0 ok, 1 runtime failure, 2 config error, 3 missing upstream
// artifact, 4 provider error.
int run_cli(int argc, const char* const* argv);

}  // namespace socratic
