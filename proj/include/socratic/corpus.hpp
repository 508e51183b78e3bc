#pragma once

#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace socratic {

inline constexpr std::string_view kCorpusSchemaVersion = "socratic-corpus/1";

// Wording of the generation prompt is pinned by this version tag; tests
// assert exact bytes against it.
inline constexpr std::string_view kPromptTemplateVersion = "prompt-template/1";

struct TestCase {
    std::string input;
    std::string expected_output;
    bool operator==(const TestCase&) const = default;
};

struct Problem {
    std::string id;
    std::string statement;
    std::vector<TestCase> test_cases;
    std::string bug_description;
    std::vector<std::string> bug_fixes;
    std::string buggy_code;
    bool operator==(const Problem&) const = default;
};

enum class Speaker { Student, Instructor };

struct Turn {
    Speaker speaker = Speaker::Student;
    std::string utterance;
    // Empty unless speaker == Instructor.
    std::vector<std::string> ground_truth_questions;
    bool operator==(const Turn&) const = default;
};

struct Dialogue {
    Problem problem;
    std::vector<Turn> turns;
    bool operator==(const Dialogue&) const = default;
};

// One supervised example: the rendered context and a single valid question.
struct TrainingExample {
    std::string prompt;
    std::string target;
    std::string dialogue_id;
    int turn_index = 0;
    bool operator==(const TrainingExample&) const = default;
};

struct PromptOptions {
    // Whether the known fixes are shown to the question generator.
    bool include_bug_fixes = true;
};

// Parses a corpus document (schema "socratic-corpus/1"). Throws ParseError
// with a byte offset or field path on malformed input, VersionError on a
// schema-version mismatch. Dialogue order is preserved.
std::vector<Dialogue> parse_corpus(std::string_view document);

// Inverse of parse_corpus on valid corpora.
std::string serialize_corpus(const std::vector<Dialogue>& dialogues);

// Deterministic prompt: fixed system message, problem metadata, then the
// history as "Student:"/"Instructor:" lines. Extending the history appends
// bytes; the shorter prompt is always a strict prefix of the longer one.
std::string render_prompt(const Problem& problem, std::span<const Turn> history,
                          const PromptOptions& options = {});

// One example per (annotated instructor turn) x (ground-truth question at
// that turn); questions of the same turn share an identical prompt.
std::vector<TrainingExample> split_turns(const Dialogue& dialogue,
                                         const PromptOptions& options = {});

// One-way adapter for the upstream dataset layout: a tagged text file with
// <problem>, <bug_code>, <bug_desc>, <bug_fixes>, <unit_tests> and a
// <dialogue> of "User:"/"Assistant:" turns where <alt> lines carry the
// alternative ground-truth questions of the preceding assistant turn.
Dialogue ingest_upstream_dialogue(std::string_view text, std::string dialogue_id);

}  // namespace socratic
