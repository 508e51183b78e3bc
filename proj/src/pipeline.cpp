#include "socratic/pipeline.hpp"

#include <algorithm>
#include <array>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"
#include "socratic/hash.hpp"
#include "socratic/version.hpp"

namespace socratic {

namespace fs = std::filesystem;
using nlohmann::json;

// ---------------------------------------------------------------------------
// Config

namespace {

void check_known_keys(const json& obj, std::initializer_list<const char*> keys,
                      const std::string& path) {
    for (auto it = obj.begin(); it != obj.end(); ++it) {
        bool known = false;
        for (const char* k : keys) {
            if (it.key() == k) {
                known = true;
                break;
            }
        }
        if (!known) throw ConfigError(path + "." + it.key() + ": unknown config key");
    }
}

template <typename T>
T get_or(const json& obj, const char* key, T fallback, const std::string& path) {
    if (!obj.contains(key)) return fallback;
    try {
        return obj.at(key).get<T>();
    } catch (const json::exception&) {
        throw ConfigError(path + "." + key + ": wrong type");
    }
}

TrainConfig parse_train_config(const json& obj, TrainConfig defaults, const std::string& path) {
    check_known_keys(obj, {"learning_rate", "epochs", "batch_size", "beta", "seed", "gradient_mode"},
                     path);
    TrainConfig c = defaults;
    c.learning_rate = get_or(obj, "learning_rate", c.learning_rate, path);
    c.epochs = get_or(obj, "epochs", c.epochs, path);
    c.batch_size = get_or(obj, "batch_size", c.batch_size, path);
    c.beta = get_or(obj, "beta", c.beta, path);
    c.seed = get_or(obj, "seed", c.seed, path);
    std::string mode = get_or<std::string>(obj, "gradient_mode", "full_batch", path);
    if (mode == "full_batch") {
        c.gradient_mode = GradientMode::FullBatch;
    } else if (mode == "minibatch") {
        c.gradient_mode = GradientMode::Minibatch;
    } else {
        throw ConfigError(path + ".gradient_mode: expected \"full_batch\" or \"minibatch\"");
    }
    if (c.learning_rate <= 0) throw ConfigError(path + ".learning_rate: must be > 0");
    if (c.epochs < 1) throw ConfigError(path + ".epochs: must be >= 1");
    if (c.batch_size < 1) throw ConfigError(path + ".batch_size: must be >= 1");
    if (c.beta <= 0) throw ConfigError(path + ".beta: must be > 0");
    return c;
}

}  // namespace

PipelineConfig load_config(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot open config file " + path.string());
    json root;
    try {
        root = json::parse(in);
    } catch (const json::parse_error& e) {
        throw ConfigError("config " + path.string() + " is not valid JSON: " + e.what());
    }
    check_known_keys(root,
                     {"corpus_path", "eval_corpus_path", "output_dir", "ingest",
                      "include_bug_fixes", "bucket_count", "gateway", "train", "decode", "eval"},
                     "$");

    PipelineConfig c;
    c.corpus_path = get_or<std::string>(root, "corpus_path", "", "$");
    if (c.corpus_path.empty()) throw ConfigError("$.corpus_path: required");
    c.eval_corpus_path = get_or<std::string>(root, "eval_corpus_path", c.corpus_path, "$");
    c.output_dir = get_or<std::string>(root, "output_dir", "", "$");
    if (c.output_dir.empty()) throw ConfigError("$.output_dir: required");
    c.include_bug_fixes = get_or(root, "include_bug_fixes", true, "$");
    c.bucket_count = get_or(root, "bucket_count", c.bucket_count, "$");
    if (c.bucket_count < 1) throw ConfigError("$.bucket_count: must be >= 1");

    if (root.contains("ingest")) {
        check_known_keys(root["ingest"], {"input_dir"}, "$.ingest");
        c.ingest_input_dir = get_or<std::string>(root["ingest"], "input_dir", "", "$.ingest");
    }

    if (root.contains("gateway")) {
        const json& g = root["gateway"];
        check_known_keys(g,
                         {"endpoint_url", "model_name", "cache_dir", "max_in_flight",
                          "api_key_env", "generation_temperature", "consistency_temperature",
                          "max_tokens"},
                         "$.gateway");
        c.gateway.endpoint_url = get_or(g, "endpoint_url", c.gateway.endpoint_url, "$.gateway");
        c.gateway.model_name = get_or(g, "model_name", c.gateway.model_name, "$.gateway");
        c.gateway.cache_dir = get_or(g, "cache_dir", c.gateway.cache_dir, "$.gateway");
        c.gateway.max_in_flight = get_or(g, "max_in_flight", c.gateway.max_in_flight, "$.gateway");
        c.gateway.api_key_env = get_or(g, "api_key_env", c.gateway.api_key_env, "$.gateway");
        c.gateway.generation_temperature =
            get_or(g, "generation_temperature", c.gateway.generation_temperature, "$.gateway");
        c.gateway.consistency_temperature =
            get_or(g, "consistency_temperature", c.gateway.consistency_temperature, "$.gateway");
        c.gateway.max_tokens = get_or(g, "max_tokens", c.gateway.max_tokens, "$.gateway");
        if (c.gateway.max_in_flight < 1) throw ConfigError("$.gateway.max_in_flight: must be >= 1");
        if (c.gateway.max_tokens < 1) throw ConfigError("$.gateway.max_tokens: must be >= 1");
        for (auto [name, value] :
             {std::pair{"generation_temperature", c.gateway.generation_temperature},
              std::pair{"consistency_temperature", c.gateway.consistency_temperature}}) {
            if (value < 0.0 || value > 2.0) {
                throw ConfigError(std::string("$.gateway.") + name + ": must be within [0, 2]");
            }
        }
    }

    if (root.contains("train")) {
        check_known_keys(root["train"], {"sft", "dpo"}, "$.train");
        if (root["train"].contains("sft")) {
            c.sft = parse_train_config(root["train"]["sft"], c.sft, "$.train.sft");
        }
        if (root["train"].contains("dpo")) {
            TrainConfig dpo_defaults = c.dpo;
            dpo_defaults.epochs = 100;
            c.dpo = parse_train_config(root["train"]["dpo"], dpo_defaults, "$.train.dpo");
        }
    } else {
        c.dpo.epochs = 100;
    }

    if (root.contains("decode")) {
        const json& d = root["decode"];
        check_known_keys(d, {"mode", "p", "temperature", "k_return", "seed", "max_len"},
                         "$.decode");
        std::string mode = get_or<std::string>(d, "mode", "both", "$.decode");
        if (mode == "greedy") {
            c.decode.mode = DecodeMode::Greedy;
        } else if (mode == "sample") {
            c.decode.mode = DecodeMode::Sample;
        } else if (mode == "both") {
            c.decode.mode = DecodeMode::Both;
        } else {
            throw ConfigError("$.decode.mode: expected \"greedy\", \"sample\" or \"both\"");
        }
        c.decode.p = get_or(d, "p", c.decode.p, "$.decode");
        c.decode.temperature = get_or(d, "temperature", c.decode.temperature, "$.decode");
        c.decode.k_return = get_or(d, "k_return", c.decode.k_return, "$.decode");
        c.decode.seed = get_or(d, "seed", c.decode.seed, "$.decode");
        c.decode.max_len = get_or(d, "max_len", c.decode.max_len, "$.decode");
        if (c.decode.p <= 0.0 || c.decode.p > 1.0) throw ConfigError("$.decode.p: must be in (0, 1]");
        if (c.decode.temperature <= 0.0) throw ConfigError("$.decode.temperature: must be > 0");
        if (c.decode.k_return < 1) throw ConfigError("$.decode.k_return: must be >= 1");
        if (c.decode.max_len < 1) throw ConfigError("$.decode.max_len: must be >= 1");
    }

    if (root.contains("eval")) {
        check_known_keys(root["eval"], {"weight"}, "$.eval");
        std::string weight = get_or<std::string>(root["eval"], "weight", "f1", "$.eval");
        if (weight == "f1") {
            c.eval.weight = WeightKind::F1;
        } else if (weight == "precision") {
            c.eval.weight = WeightKind::Precision;
        } else if (weight == "recall") {
            c.eval.weight = WeightKind::Recall;
        } else {
            throw ConfigError("$.eval.weight: expected \"f1\", \"precision\" or \"recall\"");
        }
    }
    return c;
}

namespace {

PipelineConfig apply_seed_override(PipelineConfig config, const RunFlags& flags) {
    if (flags.seed) {
        config.sft.seed = *flags.seed;
        config.dpo.seed = *flags.seed;
        config.decode.seed = *flags.seed;
    }
    return config;
}

json train_config_json(const TrainConfig& c) {
    return json{{"learning_rate", c.learning_rate},
                {"epochs", c.epochs},
                {"batch_size", c.batch_size},
                {"beta", c.beta},
                {"seed", c.seed},
                {"gradient_mode",
                 c.gradient_mode == GradientMode::FullBatch ? "full_batch" : "minibatch"}};
}

std::string_view weight_name(WeightKind w) {
    switch (w) {
        case WeightKind::F1: return "rouge_l_f1";
        case WeightKind::Precision: return "rouge_l_precision";
        case WeightKind::Recall: return "rouge_l_recall";
    }
    return "rouge_l_f1";
}

}  // namespace

std::string config_hash(const PipelineConfig& raw, const RunFlags& flags) {
    PipelineConfig c = apply_seed_override(raw, flags);
    // Output locations and endpoints deliberately excluded: the same settings
    // must hash identically wherever the artifacts land.
    json canon;
    canon["include_bug_fixes"] = c.include_bug_fixes;
    canon["bucket_count"] = c.bucket_count;
    canon["gateway"] = {{"model_name", c.gateway.model_name},
                        {"generation_temperature", c.gateway.generation_temperature},
                        {"consistency_temperature", c.gateway.consistency_temperature},
                        {"max_tokens", c.gateway.max_tokens}};
    canon["sft"] = train_config_json(c.sft);
    canon["dpo"] = train_config_json(c.dpo);
    canon["decode"] = {{"mode", static_cast<int>(c.decode.mode)},
                       {"p", c.decode.p},
                       {"temperature", c.decode.temperature},
                       {"k_return", c.decode.k_return},
                       {"seed", c.decode.seed},
                       {"max_len", c.decode.max_len}};
    canon["eval"] = {{"weight", std::string(weight_name(c.eval.weight))}};
    canon["mock"] = flags.mock;
    return hex64(fnv1a64(canon.dump()));
}

// ---------------------------------------------------------------------------
// FixtureProvider

namespace {

constexpr std::string_view kCaseToken = "(case ";

const std::array<std::string_view, 4> kFixturePhrases = {
    "Could unrelated formatting be the problem here",
    "Can you restate what you already told me",
    "Is the exact bug the one described in the bug description",
    "Should you apply the listed fix immediately",
};

std::string fixture_case_id(const std::string& user_message) {
    return hex64(fnv1a64(user_message)).substr(10);
}

}  // namespace

std::string FixtureProvider::complete(const ChatExchange& exchange) {
    if (exchange.messages.empty()) throw ProviderError("fixture provider: empty request");
    const std::string& system = exchange.messages.front().content;
    const std::string& user = exchange.messages.back().content;

    if (system == kGenerationSystemMessage) {
        std::string h = fixture_case_id(user);
        std::string out;
        static constexpr std::array<std::string_view, 4> reasons = {
            "This shifts attention away from the actual bug.",
            "The conversation already covered this ground.",
            "This points straight at the bug.",
            "This proposes an edit before the bug is found.",
        };
        for (size_t c = 0; c < 4; ++c) {
            out += std::string(kInvalidCategoryNames[c]) + ":\n";
            out += "Reasoning: " + std::string(reasons[c]) + "\n";
            out += "Question: " + std::string(kFixturePhrases[c]) + " " +
                   std::string(kCaseToken) + h + ")?\n";
        }
        return out;
    }

    if (system == kConsistencySystemMessage) {
        size_t begin = user.find(kCandidateMarker);
        if (begin == std::string::npos) {
            throw ProviderError("fixture provider: consistency request without candidate");
        }
        begin += kCandidateMarker.size();
        size_t end = user.find('\n', begin);
        std::string candidate = user.substr(begin, end - begin);

        int category = -1;
        for (size_t c = 0; c < kFixturePhrases.size(); ++c) {
            if (candidate.find(kFixturePhrases[c]) != std::string::npos) {
                category = static_cast<int>(c);
                break;
            }
        }
        // One candidate per turn reads as Good; the case token identifies the
        // turn so all four candidates agree on which one.
        bool good = false;
        size_t token = candidate.find(kCaseToken);
        if (category >= 0 && token != std::string::npos) {
            uint64_t turn_key =
                std::strtoull(candidate.c_str() + token + kCaseToken.size(), nullptr, 16);
            good = static_cast<int>(turn_key % 4) == category;
        }
        std::array<double, 6> dist{};
        if (good || category < 0) {
            dist = {0.02, 0.02, 0.03, 0.03, 0.88, 0.02};
        } else {
            dist = {0.06, 0.06, 0.06, 0.06, 0.08, 0.04};
            dist[category] = 0.70;
        }
        std::string out = "{";
        for (size_t l = 0; l < kConsistencyLabelNames.size(); ++l) {
            if (l) out += ", ";
            std::ostringstream v;
            v << dist[l];
            out += "'" + std::string(kConsistencyLabelNames[l]) + "': " + v.str();
        }
        out += "}";
        return out;
    }

    throw ProviderError("fixture provider: unrecognized request kind");
}

// ---------------------------------------------------------------------------
// Augmentation driver

AugmentOutcome augment_corpus(const std::vector<Dialogue>& corpus, ChatGateway& gateway,
                              const AugmentPromptOptions& options) {
    AugmentOutcome out;
    for (std::string_view label : kConsistencyLabelNames) out.label_counts[std::string(label)] = 0;

    for (const Dialogue& dialogue : corpus) {
        for (size_t i = 0; i < dialogue.turns.size(); ++i) {
            const Turn& turn = dialogue.turns[i];
            if (turn.speaker != Speaker::Instructor || turn.ground_truth_questions.empty()) continue;
            std::span<const Turn> history(dialogue.turns.data(), i);
            std::string where = dialogue.problem.id + "/turn " + std::to_string(i);

            std::string response =
                gateway.complete(build_generation_prompt(dialogue.problem, history, options));
            ParsedGeneration parsed;
            try {
                parsed = parse_generation_response(response);
            } catch (const FormatError& e) {
                ++out.parse_failures;
                out.warnings.push_back(where + ": generation response unusable: " + e.what());
                continue;
            }
            for (const std::string& w : parsed.warnings) out.warnings.push_back(where + ": " + w);

            std::vector<GeneratedInvalidQuestion> candidates;
            std::vector<LabelDistribution> labels;
            for (GeneratedInvalidQuestion& item : parsed.items) {
                item.dialogue_id = dialogue.problem.id;
                item.turn_index = static_cast<int>(i);
                std::string verdict = gateway.complete(
                    build_consistency_prompt(dialogue.problem, history, item.question, options));
                LabelDistribution dist;
                try {
                    dist = parse_label_distribution(verdict);
                } catch (const FormatError& e) {
                    ++out.parse_failures;
                    out.warnings.push_back(where + ": consistency response unusable: " + e.what());
                    continue;
                }
                ++out.total_candidates;
                ++out.label_counts[std::string(to_string(argmax_label(dist)))];
                candidates.push_back(std::move(item));
                labels.push_back(dist);
            }
            std::vector<GeneratedInvalidQuestion> kept =
                filter_consistent(std::move(candidates), labels);
            for (GeneratedInvalidQuestion& q : kept) out.kept.push_back(std::move(q));
        }
    }
    std::sort(out.kept.begin(), out.kept.end(),
              [](const GeneratedInvalidQuestion& a, const GeneratedInvalidQuestion& b) {
                  if (a.dialogue_id != b.dialogue_id) return a.dialogue_id < b.dialogue_id;
                  if (a.turn_index != b.turn_index) return a.turn_index < b.turn_index;
                  return a.category < b.category;
              });
    return out;
}

// ---------------------------------------------------------------------------
// Artifact IO

namespace {

json artifact_header(std::string_view artifact, const std::string& hash) {
    return json{{"artifact", std::string(artifact)},
                {"config_hash", hash},
                {"toolkit_version", std::string(kToolkitVersion)}};
}

void write_text_file(const fs::path& path, const std::string& content) {
    fs::create_directories(path.parent_path().empty() ? "." : path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write " + path.string());
    out << content;
    if (!out) throw Error("failed writing " + path.string());
}

std::string read_text_file(const fs::path& path, std::string_view producer) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw ArtifactError(path.string() + " not found; produce it with the `" +
                            std::string(producer) + "` subcommand first");
    }
    std::ostringstream buffer;
    buffer << in.rdbuf();
    return buffer.str();
}

void write_jsonl(const fs::path& path, std::string_view artifact, const std::string& hash,
                 const std::vector<json>& lines) {
    std::string content = artifact_header(artifact, hash).dump() + "\n";
    for (const json& line : lines) content += line.dump() + "\n";
    write_text_file(path, content);
}

struct JsonlFile {
    json header;
    std::vector<json> lines;
};

JsonlFile read_jsonl(const fs::path& path, std::string_view artifact, std::string_view producer) {
    std::string content = read_text_file(path, producer);
    JsonlFile file;
    std::istringstream in(content);
    std::string line;
    bool first = true;
    size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        json j;
        try {
            j = json::parse(line);
        } catch (const json::parse_error& e) {
            throw ParseError(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
        }
        if (first) {
            if (j.value("artifact", "") != artifact) {
                throw ParseError(path.string() + " is not a " + std::string(artifact) +
                                 " artifact");
            }
            file.header = std::move(j);
            first = false;
        } else {
            file.lines.push_back(std::move(j));
        }
    }
    if (first) throw ParseError(path.string() + " is empty");
    return file;
}

InvalidCategory invalid_category_from_string(const std::string& name, const std::string& where) {
    for (size_t c = 0; c < kInvalidCategoryNames.size(); ++c) {
        if (name == kInvalidCategoryNames[c]) return static_cast<InvalidCategory>(c);
    }
    throw ParseError(where + ": unknown invalid category \"" + name + "\"");
}

}  // namespace

// ---------------------------------------------------------------------------
// Pipeline

Pipeline::Pipeline(PipelineConfig config, RunFlags flags)
    : config_(apply_seed_override(std::move(config), flags)), flags_(flags) {
    hash_ = config_hash(config_, RunFlags{flags_.mock, flags_.force, std::nullopt});
}

fs::path Pipeline::artifact_path(std::string_view name) const {
    return fs::path(config_.output_dir) / std::string(name);
}

ChatGateway& Pipeline::gateway() {
    if (!gateway_) {
        std::shared_ptr<ChatProvider> provider;
        if (flags_.mock) {
            provider = std::make_shared<FixtureProvider>();
        } else {
            if (config_.gateway.endpoint_url.empty()) {
                throw ConfigError("$.gateway.endpoint_url: required unless --mock is given");
            }
            const char* key = std::getenv(config_.gateway.api_key_env.c_str());
            if (!key || !*key) {
                throw ConfigError("credential environment variable " +
                                  config_.gateway.api_key_env + " is not set");
            }
            provider = std::make_shared<HttpChatProvider>(config_.gateway.endpoint_url, key);
        }
        GatewayOptions options;
        options.cache_dir = config_.gateway.cache_dir.empty()
                                ? (fs::path(config_.output_dir) / "cache").string()
                                : config_.gateway.cache_dir;
        options.max_in_flight = config_.gateway.max_in_flight;
        gateway_ = std::make_unique<ChatGateway>(std::move(provider), std::move(options));
    }
    return *gateway_;
}

std::vector<Dialogue> Pipeline::load_corpus(const std::string& path, std::string_view hint) const {
    return parse_corpus(read_text_file(path, hint));
}

std::string Pipeline::method_name(std::string_view model_tag, bool sampled) const {
    std::string name(model_tag);
    if (sampled) {
        name += "-Sample-" + std::to_string(config_.decode.k_return);
    } else {
        name += "-Greedy";
    }
    return name;
}

void Pipeline::ingest() {
    if (config_.ingest_input_dir.empty()) {
        throw ConfigError("$.ingest.input_dir: required for the ingest subcommand");
    }
    if (!fs::is_directory(config_.ingest_input_dir)) {
        throw ConfigError("$.ingest.input_dir: " + config_.ingest_input_dir +
                          " is not a directory");
    }
    std::vector<fs::path> files;
    for (const auto& entry : fs::directory_iterator(config_.ingest_input_dir)) {
        if (entry.is_regular_file() && entry.path().extension() == ".txt") {
            files.push_back(entry.path());
        }
    }
    std::sort(files.begin(), files.end());
    if (files.empty()) {
        throw ConfigError("$.ingest.input_dir: no .txt dialogue files in " +
                          config_.ingest_input_dir);
    }
    std::vector<Dialogue> corpus;
    for (const fs::path& file : files) {
        std::ifstream in(file, std::ios::binary);
        std::ostringstream buffer;
        buffer << in.rdbuf();
        corpus.push_back(ingest_upstream_dialogue(buffer.str(), file.stem().string()));
    }
    std::string serialized = serialize_corpus(corpus);
    parse_corpus(serialized);  // invariant check before anything is written
    write_text_file(config_.corpus_path, serialized);
}

void Pipeline::augment() {
    std::vector<Dialogue> corpus = load_corpus(config_.corpus_path, "ingest");
    AugmentPromptOptions options;
    options.model_name = config_.gateway.model_name;
    options.max_tokens = config_.gateway.max_tokens;
    options.generation_temperature = config_.gateway.generation_temperature;
    options.consistency_temperature = config_.gateway.consistency_temperature;
    options.include_bug_fixes = config_.include_bug_fixes;

    AugmentOutcome outcome = augment_corpus(corpus, gateway(), options);

    std::vector<json> lines;
    for (const GeneratedInvalidQuestion& q : outcome.kept) {
        lines.push_back(json{{"dialogue_id", q.dialogue_id},
                             {"turn_index", q.turn_index},
                             {"category", std::string(to_string(q.category))},
                             {"reasoning", q.reasoning},
                             {"question", q.question}});
    }
    write_jsonl(artifact_path("generated_invalid.jsonl"), "generated_invalid", hash_, lines);

    int kept = static_cast<int>(outcome.kept.size());
    int good = outcome.label_counts.at("Good");
    int incorrect = outcome.label_counts.at("Incorrect");
    double total = std::max(1, outcome.total_candidates);
    json report = artifact_header("augment_report", hash_);
    report["total_candidates"] = outcome.total_candidates;
    report["label_counts"] = outcome.label_counts;
    report["kept"] = kept;
    report["kept_fraction"] = kept / total;
    report["good_fraction"] = good / total;
    report["incorrect_fraction"] = incorrect / total;
    report["parse_failures"] = outcome.parse_failures;
    report["warnings"] = outcome.warnings;
    write_text_file(artifact_path("augment_report.json"), report.dump(2) + "\n");
}

void Pipeline::build_prefs() {
    std::vector<Dialogue> corpus = load_corpus(config_.corpus_path, "ingest");
    JsonlFile generated =
        read_jsonl(artifact_path("generated_invalid.jsonl"), "generated_invalid", "augment");

    std::map<std::pair<std::string, int>, std::vector<GeneratedInvalidQuestion>> by_turn;
    for (size_t i = 0; i < generated.lines.size(); ++i) {
        const json& line = generated.lines[i];
        std::string where = "generated_invalid.jsonl line " + std::to_string(i + 2);
        GeneratedInvalidQuestion q;
        q.dialogue_id = line.at("dialogue_id").get<std::string>();
        q.turn_index = line.at("turn_index").get<int>();
        q.category = invalid_category_from_string(line.at("category").get<std::string>(), where);
        q.reasoning = line.value("reasoning", "");
        q.question = line.at("question").get<std::string>();
        by_turn[{q.dialogue_id, q.turn_index}].push_back(std::move(q));
    }

    PromptOptions prompt_options{config_.include_bug_fixes};
    std::vector<json> lines;
    for (const Dialogue& dialogue : corpus) {
        for (size_t i = 0; i < dialogue.turns.size(); ++i) {
            const Turn& turn = dialogue.turns[i];
            if (turn.speaker != Speaker::Instructor || turn.ground_truth_questions.empty()) continue;
            auto it = by_turn.find({dialogue.problem.id, static_cast<int>(i)});
            if (it == by_turn.end()) continue;
            std::string prompt = render_prompt(
                dialogue.problem, std::span<const Turn>(dialogue.turns.data(), i), prompt_options);
            std::vector<PreferencePair> pairs =
                build_preference_pairs(prompt, turn.ground_truth_questions, it->second);
            for (const PreferencePair& pair : pairs) {
                lines.push_back(json{{"prompt", pair.prompt},
                                     {"chosen", pair.chosen},
                                     {"rejected", pair.rejected},
                                     {"rejected_category", std::string(to_string(pair.rejected_category))},
                                     {"dialogue_id", pair.dialogue_id},
                                     {"turn_index", pair.turn_index}});
            }
        }
    }
    write_jsonl(artifact_path("prefs.jsonl"), "prefs", hash_, lines);
}

void Pipeline::train_sft_cmd() {
    std::vector<Dialogue> corpus = load_corpus(config_.corpus_path, "ingest");
    PromptOptions prompt_options{config_.include_bug_fixes};
    std::vector<TrainingExample> examples;
    for (const Dialogue& dialogue : corpus) {
        for (TrainingExample& ex : split_turns(dialogue, prompt_options)) {
            examples.push_back(std::move(ex));
        }
    }
    if (examples.empty()) throw Error("corpus yields no training examples");

    std::vector<json> log_lines;
    PolicyParams params = train_sft(examples, config_.sft, config_.bucket_count,
                                    [&](const LossReport& r) {
                                        log_lines.push_back(json{{"step", r.step},
                                                                 {"loss", r.loss},
                                                                 {"margin_mean", r.margin_mean}});
                                    });
    write_jsonl(artifact_path("sft_loss_log.jsonl"), "loss_log", hash_, log_lines);
    save_model(params, artifact_path("model.sft"),
               ModelMeta{hash_, std::string(kToolkitVersion)});
}

void Pipeline::train_dpo_cmd() {
    JsonlFile prefs = read_jsonl(artifact_path("prefs.jsonl"), "prefs", "build-prefs");
    std::vector<PreferencePair> pairs;
    for (size_t i = 0; i < prefs.lines.size(); ++i) {
        const json& line = prefs.lines[i];
        std::string where = "prefs.jsonl line " + std::to_string(i + 2);
        PreferencePair pair;
        pair.prompt = line.at("prompt").get<std::string>();
        pair.chosen = line.at("chosen").get<std::string>();
        pair.rejected = line.at("rejected").get<std::string>();
        pair.rejected_category =
            invalid_category_from_string(line.at("rejected_category").get<std::string>(), where);
        pair.dialogue_id = line.value("dialogue_id", "");
        pair.turn_index = line.value("turn_index", 0);
        pairs.push_back(std::move(pair));
    }
    if (pairs.empty()) throw Error("prefs.jsonl holds no preference pairs");

    PolicyParams ref = load_model(artifact_path("model.sft"));
    std::vector<json> log_lines;
    PolicyParams theta = train_dpo(pairs, ref, config_.dpo, [&](const LossReport& r) {
        log_lines.push_back(
            json{{"step", r.step}, {"loss", r.loss}, {"margin_mean", r.margin_mean}});
    });
    write_jsonl(artifact_path("dpo_loss_log.jsonl"), "loss_log", hash_, log_lines);
    save_model(theta, artifact_path("model.dpo"),
               ModelMeta{hash_, std::string(kToolkitVersion)});
}

void Pipeline::generate() {
    PolicyParams sft_model = load_model(artifact_path("model.sft"));
    PolicyParams dpo_model = load_model(artifact_path("model.dpo"));
    std::vector<Dialogue> corpus = load_corpus(config_.eval_corpus_path, "ingest");
    PromptOptions prompt_options{config_.include_bug_fixes};

    bool greedy = config_.decode.mode != DecodeMode::Sample;
    bool sampled = config_.decode.mode != DecodeMode::Greedy;

    std::vector<json> lines;
    for (const Dialogue& dialogue : corpus) {
        for (size_t i = 0; i < dialogue.turns.size(); ++i) {
            const Turn& turn = dialogue.turns[i];
            if (turn.speaker != Speaker::Instructor || turn.ground_truth_questions.empty()) continue;
            std::string prompt = render_prompt(
                dialogue.problem, std::span<const Turn>(dialogue.turns.data(), i), prompt_options);

            auto emit = [&](std::string_view tag, const PolicyParams& model, bool sample_mode) {
                std::vector<std::string> questions;
                if (!sample_mode) {
                    questions.push_back(
                        model.vocab.decode(greedy_decode(model, prompt, config_.decode.max_len)));
                } else {
                    NucleusOptions options;
                    options.p = config_.decode.p;
                    options.temperature = config_.decode.temperature;
                    options.k_return = config_.decode.k_return;
                    options.max_len = config_.decode.max_len;
                    // Stable per-turn seed so iteration order never matters.
                    options.seed = Fnv1a64{}
                                       .update_u64(config_.decode.seed)
                                       .update_field(tag)
                                       .update_field(dialogue.problem.id)
                                       .update_u32(static_cast<uint32_t>(i))
                                       .digest();
                    for (const std::vector<int32_t>& seq : nucleus_sample(model, prompt, options)) {
                        questions.push_back(model.vocab.decode(seq));
                    }
                }
                lines.push_back(json{{"dialogue_id", dialogue.problem.id},
                                     {"turn_index", static_cast<int>(i)},
                                     {"method", method_name(tag, sample_mode)},
                                     {"questions", questions}});
            };

            if (greedy) {
                emit("SFT", sft_model, false);
                emit("DPO", dpo_model, false);
            }
            if (sampled) {
                emit("SFT", sft_model, true);
                emit("DPO", dpo_model, true);
            }
        }
    }
    write_jsonl(artifact_path("generations.jsonl"), "generations", hash_, lines);
}

void Pipeline::evaluate() {
    JsonlFile generations = read_jsonl(artifact_path("generations.jsonl"), "generations", "generate");
    std::string produced_with = generations.header.value("config_hash", "");
    if (produced_with != hash_ && !flags_.force) {
        throw ConfigError("generations.jsonl carries config hash " + produced_with +
                          " but the current config hashes to " + hash_ +
                          "; rerun `generate` or pass --force");
    }

    std::vector<Dialogue> corpus = load_corpus(config_.eval_corpus_path, "ingest");
    std::map<std::pair<std::string, int>, const Turn*> turns;
    for (const Dialogue& dialogue : corpus) {
        for (size_t i = 0; i < dialogue.turns.size(); ++i) {
            turns[{dialogue.problem.id, static_cast<int>(i)}] = &dialogue.turns[i];
        }
    }

    SimilarityFn weight;
    switch (config_.eval.weight) {
        case WeightKind::F1: weight = rouge_l_f1_weight(); break;
        case WeightKind::Precision: weight = rouge_l_precision_weight(); break;
        case WeightKind::Recall: weight = rouge_l_recall_weight(); break;
    }

    struct PerTurn {
        std::string dialogue_id;
        int turn_index;
        MetricReport report;
    };
    std::map<std::string, std::vector<PerTurn>> methods;
    for (const json& line : generations.lines) {
        std::string dialogue_id = line.at("dialogue_id").get<std::string>();
        int turn_index = line.at("turn_index").get<int>();
        auto it = turns.find({dialogue_id, turn_index});
        if (it == turns.end()) {
            throw Error("generations.jsonl references unknown turn " + dialogue_id + "/" +
                        std::to_string(turn_index) + " (eval corpus mismatch)");
        }
        std::vector<std::string> questions = line.at("questions").get<std::vector<std::string>>();
        MetricReport report =
            turn_metrics(questions, it->second->ground_truth_questions, weight);
        methods[line.at("method").get<std::string>()].push_back(
            PerTurn{dialogue_id, turn_index, std::move(report)});
    }

    auto metric_json = [](const MetricReport& r, bool with_counts) {
        json j{{"precision", r.precision}, {"recall", r.recall}, {"f1", r.f1}};
        if (with_counts) {
            j["tp"] = r.tp;
            j["fp"] = r.fp;
            j["fn"] = r.fn;
        }
        return j;
    };

    json report = artifact_header("report", hash_);
    report["weight"] = std::string(weight_name(config_.eval.weight));
    json methods_json = json::object();
    std::map<std::string, MetricReport> micro_by_method;
    for (const auto& [method, per_turn] : methods) {
        std::vector<MetricReport> reports;
        json turns_json = json::array();
        for (const PerTurn& pt : per_turn) {
            reports.push_back(pt.report);
            json t = metric_json(pt.report, true);
            t["dialogue_id"] = pt.dialogue_id;
            t["turn_index"] = pt.turn_index;
            json matched = json::array();
            for (const MatchedPair& mp : pt.report.matched_pairs) {
                matched.push_back(json{{"generated", mp.generated},
                                       {"ground_truth", mp.ground_truth},
                                       {"weight", mp.weight}});
            }
            t["matched"] = std::move(matched);
            turns_json.push_back(std::move(t));
        }
        MetricReport micro = aggregate(reports);
        micro_by_method[method] = micro;
        json entry;
        entry["micro"] = metric_json(micro, true);
        entry["macro"] = metric_json(macro_average(reports), false);
        entry["per_turn"] = std::move(turns_json);
        methods_json[method] = std::move(entry);
    }
    report["methods"] = std::move(methods_json);

    // Table-shaped summary, methods in the customary row order.
    std::vector<std::string> row_order = {method_name("SFT", false), method_name("DPO", false),
                                          method_name("SFT", true), method_name("DPO", true)};
    for (const auto& [method, _] : micro_by_method) {
        if (std::find(row_order.begin(), row_order.end(), method) == row_order.end()) {
            row_order.push_back(method);
        }
    }
    json table = json::array();
    for (const std::string& method : row_order) {
        auto it = micro_by_method.find(method);
        if (it == micro_by_method.end()) continue;
        table.push_back(json{{"method", method},
                             {"rouge_l",
                              {{"p", it->second.precision},
                               {"r", it->second.recall},
                               {"f1", it->second.f1}}}});
    }
    report["table"] = std::move(table);
    write_text_file(artifact_path("report.json"), report.dump(2) + "\n");
}

void Pipeline::all() {
    augment();
    build_prefs();
    train_sft_cmd();
    train_dpo_cmd();
    generate();
    evaluate();
}

// ---------------------------------------------------------------------------
// CLI

int run_cli(int argc, const char* const* argv) {
    CLI::App app{"Socratic-question preference toolkit"};
    app.require_subcommand(1);

    std::string config_path;
    bool mock = false;
    bool force = false;
    uint64_t seed = 0;

    app.add_option("--config", config_path, "pipeline config JSON")->required();
    auto* seed_opt = app.add_option("--seed", seed, "override every configured seed");
    app.add_flag("--mock", mock, "use the scripted gateway fixture instead of a live endpoint");
    app.add_flag("--force", force, "evaluate even when artifact config hashes differ");

    static constexpr const char* kSubcommands[] = {"ingest",    "augment",  "build-prefs",
                                                   "train-sft", "train-dpo", "generate",
                                                   "evaluate",  "all"};
    for (const char* name : kSubcommands) {
        app.add_subcommand(name)->fallthrough();
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        RunFlags flags;
        flags.mock = mock;
        flags.force = force;
        if (seed_opt->count() > 0) flags.seed = seed;
        Pipeline pipeline(load_config(config_path), flags);

        std::string sub = app.get_subcommands().front()->get_name();
        if (sub == "ingest") {
            pipeline.ingest();
        } else if (sub == "augment") {
            pipeline.augment();
        } else if (sub == "build-prefs") {
            pipeline.build_prefs();
        } else if (sub == "train-sft") {
            pipeline.train_sft_cmd();
        } else if (sub == "train-dpo") {
            pipeline.train_dpo_cmd();
        } else if (sub == "generate") {
            pipeline.generate();
        } else if (sub == "evaluate") {
            pipeline.evaluate();
        } else if (sub == "all") {
            pipeline.all();
        }
        return 0;
    } catch (const ConfigError& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return 2;
    } catch (const ArtifactError& e) {
        std::fprintf(stderr, "missing artifact: %s\n", e.what());
        return 3;
    } catch (const ProviderError& e) {
        std::fprintf(stderr, "provider error: %s\n", e.what());
        return 4;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
}

}  // namespace socratic
