#pragma once

#include <array>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "socratic/corpus.hpp"
#include "socratic/gateway.hpp"

namespace socratic {

// The four ways a generated question can be deliberately bad.
enum class InvalidCategory { Irrelevant, Repeated, Direct, Premature };
inline constexpr std::array<std::string_view, 4> kInvalidCategoryNames = {
    "Irrelevant", "Repeated", "Direct", "Premature"};

// Classifier labels: the four invalid categories plus the two that disqualify
// a candidate from the preference dataset.
enum class ConsistencyLabel { Irrelevant, Repeated, Direct, Premature, Good, Incorrect };
inline constexpr std::array<std::string_view, 6> kConsistencyLabelNames = {
    "Irrelevant", "Repeated", "Direct", "Premature", "Good", "Incorrect"};

std::string_view to_string(InvalidCategory c);
std::string_view to_string(ConsistencyLabel l);

struct GeneratedInvalidQuestion {
    InvalidCategory category = InvalidCategory::Irrelevant;
    std::string reasoning;
    std::string question;
    std::string dialogue_id;
    int turn_index = 0;
    bool operator==(const GeneratedInvalidQuestion&) const = default;
};

// One element of the preference dataset: prompt, chosen valid question,
// rejected invalid question.
struct PreferencePair {
    std::string prompt;
    std::string chosen;
    std::string rejected;
    InvalidCategory rejected_category = InvalidCategory::Irrelevant;
    std::string dialogue_id;
    int turn_index = 0;
    bool operator==(const PreferencePair&) const = default;
};

struct AugmentPromptOptions {
    std::string model_name;
    int max_tokens = 1024;
    double generation_temperature = 0.5;
    double consistency_temperature = 0.0;
    bool include_bug_fixes = true;
};

// Markers the prompt builders emit; the scripted fixture provider keys off
// them to tell the two request kinds apart.
inline constexpr std::string_view kGenerationSystemMessage =
    "You are a \"bad\" instructor who, for research on what not to ask, writes flawed "
    "Socratic questions of a requested category for a student debugging their code.";
inline constexpr std::string_view kConsistencySystemMessage =
    "Your task is to output a probability distribution over labels describing the "
    "category of a Socratic question proposed by an assistant.";
inline constexpr std::string_view kCandidateMarker = "Assistant Socratic Question: ";

// Few-shot prompt asking for one flawed question per category, each preceded
// by its reasoning. temperature = generation_temperature.
ChatExchange build_generation_prompt(const Problem& problem, std::span<const Turn> history,
                                     const AugmentPromptOptions& options);

struct ParsedGeneration {
    std::vector<GeneratedInvalidQuestion> items;  // dialogue_id/turn_index left empty
    std::vector<std::string> warnings;
};

// Extracts up to four (category, reasoning, question) sections. Headers are
// matched case-insensitively; a duplicated category keeps the first section
// and records a warning. Throws FormatError (carrying the raw text) when no
// category section is recognizable.
ParsedGeneration parse_generation_response(std::string_view text);

// Six-label classification prompt for one candidate question; the candidate
// appears verbatim exactly once. temperature = consistency_temperature.
ChatExchange build_consistency_prompt(const Problem& problem, std::span<const Turn> history,
                                      std::string_view question,
                                      const AugmentPromptOptions& options);

// Indexed by ConsistencyLabel; always sums to 1 after parsing.
using LabelDistribution = std::array<double, 6>;

// Parses the {'Irrelevant': 0.6, ...} dictionary a classifier response
// carries. Absent labels are 0; values are clamped to [0,1]; a total outside
// [0.99, 1.01] is renormalized by the sum. Throws FormatError when no label
// assignment can be found or the total is not positive.
LabelDistribution parse_label_distribution(std::string_view text);

// Ties resolve to the earlier label in enum order.
ConsistencyLabel argmax_label(const LabelDistribution& distribution);

// Keeps a candidate iff its argmax label is one of the four invalid
// categories, overwriting the generator's tag with the classifier's verdict.
std::vector<GeneratedInvalidQuestion> filter_consistent(
    std::vector<GeneratedInvalidQuestion> candidates,
    std::span<const LabelDistribution> labels);

// Full cross product, valid-major order; pairs whose chosen and rejected
// texts coincide are dropped.
std::vector<PreferencePair> build_preference_pairs(
    const std::string& prompt, std::span<const std::string> valid,
    std::span<const GeneratedInvalidQuestion> invalid);

}  // namespace socratic
