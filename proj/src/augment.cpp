#include "socratic/augment.hpp"

#include <algorithm>
#include <cctype>
#include <cstdlib>

namespace socratic {

std::string_view to_string(InvalidCategory c) {
    return kInvalidCategoryNames[static_cast<size_t>(c)];
}

std::string_view to_string(ConsistencyLabel l) {
    return kConsistencyLabelNames[static_cast<size_t>(l)];
}

namespace {

std::string lower(std::string_view s) {
    std::string out(s);
    std::transform(out.begin(), out.end(), out.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return out;
}

// The six labeled inputs shared by both augmentation prompts.
std::string render_inputs(const Problem& problem, std::span<const Turn> history,
                          bool include_bug_fixes) {
    std::string out = "Inputs:\n";
    out += "1. Problem Description: " + problem.statement + "\n";
    out += "2. Test Cases:\n";
    for (const TestCase& tc : problem.test_cases) {
        out += "- input: " + tc.input + " => expected: " + tc.expected_output + "\n";
    }
    out += "3. Student's buggy code:\n" + problem.buggy_code + "\n";
    out += "4. Bug Description: " + problem.bug_description + "\n";
    out += "5. Bug Fixes:\n";
    if (include_bug_fixes) {
        for (const std::string& fix : problem.bug_fixes) out += "- " + fix + "\n";
    } else {
        out += "(withheld)\n";
    }
    out += "6. Conversation so far:\n";
    for (const Turn& t : history) {
        out += t.speaker == Speaker::Student ? "Student: " : "Instructor: ";
        out += t.utterance + "\n";
    }
    return out;
}

constexpr std::string_view kCategoryDefinitions =
    "Bad categories:\n"
    "1. Irrelevant: questions that shift focus away from the actual bug and ask about "
    "something not relevant to it.\n"
    "2. Repeated: questions that were already asked or answered earlier in the "
    "conversation.\n"
    "3. Direct: questions that disclose the bug itself too early, removing the learning "
    "challenge.\n"
    "4. Premature: questions that push the student toward code changes before they have "
    "identified the bug.\n";

constexpr std::string_view kLabelDefinitions =
    "Labels:\n"
    "1. Irrelevant: questions that shift focus away from the actual bug and ask about "
    "something not relevant to it.\n"
    "2. Repeated: questions that were already asked or answered earlier in the "
    "conversation.\n"
    "3. Direct: questions that disclose the bug itself too early, removing the learning "
    "challenge.\n"
    "4. Premature: questions that push the student toward code changes before they have "
    "identified the bug. NOTE: a premature question names specific code changes related "
    "to the bug, whereas a direct question just reveals the bug itself.\n"
    "5. Good: questions that are subtle, flow naturally from the conversation, and "
    "neither reveal the bug nor suggest code changes prematurely.\n"
    "6. Incorrect: questions that are completely out of context and not related to the "
    "given problem at all.\n";

// One worked example per category, in exactly the output format the
// instruction below asks for.
constexpr std::string_view kFewShotBlock =
    "Example:\n"
    "Problem Description: Write a function sum_to(n) that returns 1 + 2 + ... + n.\n"
    "Student's buggy code:\n"
    "def sum_to(n):\n"
    "    total = 0\n"
    "    for i in range(n):\n"
    "        total += i\n"
    "    return total\n"
    "Bug Description: The loop never adds n itself, so sum_to(3) returns 3 instead of 6.\n"
    "Conversation so far:\n"
    "Student: My sum function returns numbers that are too small and I cannot tell why.\n"
    "Output:\n"
    "Irrelevant:\n"
    "Reasoning: Asking about input validation pulls attention away from the loop bound.\n"
    "Question: Should you first check whether n could be a negative number?\n"
    "Repeated:\n"
    "Reasoning: The student already said the results are too small, so asking again adds "
    "nothing.\n"
    "Question: Are the values your function returns smaller than you expected?\n"
    "Direct:\n"
    "Reasoning: Pointing straight at the loop bound hands the student the bug.\n"
    "Question: Do you see that range(n) stops at n - 1 and never adds the last term?\n"
    "Premature:\n"
    "Reasoning: Proposing an edit suggests a fix before the student has located the bug.\n"
    "Question: Could you change range(n) to range(1, n + 1) and run the tests again?\n";

}  // namespace

ChatExchange build_generation_prompt(const Problem& problem, std::span<const Turn> history,
                                     const AugmentPromptOptions& options) {
    std::string user;
    user += kCategoryDefinitions;
    user += "\n";
    user += kFewShotBlock;
    user += "\n";
    user += render_inputs(problem, history, options.include_bug_fixes);
    user += "\n";
    user +=
        "Generate one \"bad\" Socratic question for each of the four categories above, "
        "for these inputs. For every category, first state the reasoning behind why the "
        "question is bad in that way, then the question itself, exactly in this format:\n"
        "<Category>:\n"
        "Reasoning: <the reasoning>\n"
        "Question: <the bad question>\n";

    ChatExchange exchange;
    exchange.messages.push_back({Role::System, std::string(kGenerationSystemMessage)});
    exchange.messages.push_back({Role::User, std::move(user)});
    exchange.temperature = options.generation_temperature;
    exchange.model_name = options.model_name;
    exchange.max_tokens = options.max_tokens;
    return exchange;
}

namespace {

std::string trim(std::string_view s) {
    size_t b = s.find_first_not_of(" \t\r\n");
    if (b == std::string_view::npos) return {};
    size_t e = s.find_last_not_of(" \t\r\n");
    return std::string(s.substr(b, e - b + 1));
}

// Strips markdown-ish decoration so "**Direct:**" still matches.
std::string_view strip_decoration(std::string_view s) {
    while (!s.empty() && (s.front() == '*' || s.front() == '#' || s.front() == '>' ||
                          s.front() == '`' || s.front() == ' ' || s.front() == '\t')) {
        s.remove_prefix(1);
    }
    return s;
}

// If line opens a category section, returns the category and leaves the
// remainder (text after the colon) in rest.
bool match_category_header(std::string_view line, InvalidCategory* category,
                           std::string* rest) {
    std::string_view s = strip_decoration(line);
    std::string low = lower(s);
    for (size_t c = 0; c < kInvalidCategoryNames.size(); ++c) {
        std::string name = lower(kInvalidCategoryNames[c]);
        if (low.rfind(name, 0) != 0) continue;
        std::string_view after = s.substr(name.size());
        while (!after.empty() && (after.front() == '*' || after.front() == '`')) after.remove_prefix(1);
        if (!after.empty() && after.front() != ':' && after.front() != ' ' && after.front() != '\t') {
            continue;  // e.g. "directly ..." is not a "Direct" header
        }
        if (!after.empty() && after.front() == ':') after.remove_prefix(1);
        *category = static_cast<InvalidCategory>(c);
        *rest = trim(after);
        return true;
    }
    return false;
}

bool match_marker(std::string_view line, std::string_view marker, std::string* rest) {
    std::string_view s = strip_decoration(line);
    std::string low = lower(s);
    std::string m = lower(marker);
    if (low.rfind(m, 0) != 0) return false;
    *rest = trim(s.substr(m.size()));
    return true;
}

}  // namespace

ParsedGeneration parse_generation_response(std::string_view text) {
    struct Section {
        InvalidCategory category;
        std::string reasoning;
        std::string question;
    };
    std::vector<Section> sections;
    enum class Field { None, Reasoning, Question };
    Field field = Field::None;

    std::string_view rest = text;
    while (true) {
        size_t nl = rest.find('\n');
        std::string line = trim(rest.substr(0, nl));
        InvalidCategory category;
        std::string remainder;
        if (match_category_header(line, &category, &remainder)) {
            sections.push_back(Section{category, "", ""});
            field = Field::None;
            if (!remainder.empty()) {
                // Inline content after the header; a bare question unless it
                // carries explicit markers.
                std::string inner;
                if (match_marker(remainder, "Reasoning:", &inner)) {
                    sections.back().reasoning = inner;
                    field = Field::Reasoning;
                } else if (match_marker(remainder, "Question:", &inner)) {
                    sections.back().question = inner;
                    field = Field::Question;
                } else {
                    sections.back().question = remainder;
                    field = Field::Question;
                }
            }
        } else if (!sections.empty()) {
            std::string content;
            if (match_marker(line, "Reasoning:", &content)) {
                sections.back().reasoning = content;
                field = Field::Reasoning;
            } else if (match_marker(line, "Question:", &content)) {
                sections.back().question = content;
                field = Field::Question;
            } else if (line.empty()) {
                field = Field::None;
            } else if (field == Field::Reasoning) {
                sections.back().reasoning += " " + line;
            } else if (field == Field::Question) {
                sections.back().question += " " + line;
            }
        }
        if (nl == std::string_view::npos) break;
        rest.remove_prefix(nl + 1);
    }

    if (sections.empty()) {
        throw FormatError("no invalid-question category section recognized in response",
                          std::string(text));
    }

    ParsedGeneration out;
    bool seen[4] = {false, false, false, false};
    for (Section& s : sections) {
        size_t idx = static_cast<size_t>(s.category);
        if (seen[idx]) {
            out.warnings.push_back("duplicate " + std::string(to_string(s.category)) +
                                   " section ignored");
            continue;
        }
        if (s.question.empty()) {
            out.warnings.push_back(std::string(to_string(s.category)) +
                                   " section carries no question");
            continue;
        }
        seen[idx] = true;
        GeneratedInvalidQuestion q;
        q.category = s.category;
        q.reasoning = std::move(s.reasoning);
        q.question = std::move(s.question);
        out.items.push_back(std::move(q));
    }
    for (size_t c = 0; c < 4; ++c) {
        if (!seen[c]) {
            out.warnings.push_back("missing " + std::string(kInvalidCategoryNames[c]) +
                                   " section");
        }
    }
    if (out.items.empty()) {
        throw FormatError("category sections found but none carried a question",
                          std::string(text));
    }
    return out;
}

ChatExchange build_consistency_prompt(const Problem& problem, std::span<const Turn> history,
                                      std::string_view question,
                                      const AugmentPromptOptions& options) {
    std::string user;
    user += render_inputs(problem, history, options.include_bug_fixes);
    user += "\n";
    user += kLabelDefinitions;
    user += "\nThe question whose category is to be determined is labeled below.\n";
    user += std::string(kCandidateMarker) + std::string(question) + "\n";
    user +=
        "\nOutput a dictionary containing the labels as keys and the corresponding "
        "probability weights as values, for example: {'Irrelevant': 0.6, 'Repeated': 0.2, "
        "'Direct': 0.1, 'Premature': 0.05, 'Good': 0.05, 'Incorrect': 0}\n";

    ChatExchange exchange;
    exchange.messages.push_back({Role::System, std::string(kConsistencySystemMessage)});
    exchange.messages.push_back({Role::User, std::move(user)});
    exchange.temperature = options.consistency_temperature;
    exchange.model_name = options.model_name;
    exchange.max_tokens = options.max_tokens;
    return exchange;
}

LabelDistribution parse_label_distribution(std::string_view text) {
    LabelDistribution dist{};
    bool found_any = false;
    std::string low = lower(text);
    for (size_t l = 0; l < kConsistencyLabelNames.size(); ++l) {
        std::string name = lower(kConsistencyLabelNames[l]);
        for (size_t pos = low.find(name); pos != std::string::npos;
             pos = low.find(name, pos + 1)) {
            // Word boundaries: "direct" must not match inside "directly".
            if (pos > 0 && std::isalnum(static_cast<unsigned char>(low[pos - 1]))) continue;
            size_t after = pos + name.size();
            if (after < low.size() && std::isalnum(static_cast<unsigned char>(low[after]))) continue;
            // Skip closing quotes and spaces, require a colon, then a number.
            size_t i = after;
            while (i < low.size() && (low[i] == '\'' || low[i] == '"' || low[i] == '`' ||
                                      low[i] == ' ' || low[i] == '\t')) {
                ++i;
            }
            if (i >= low.size() || low[i] != ':') continue;
            ++i;
            while (i < low.size() && (low[i] == ' ' || low[i] == '\t')) ++i;
            const char* begin = text.data() + i;
            char* end = nullptr;
            double value = std::strtod(begin, &end);
            if (end == begin) continue;
            dist[l] = value;
            found_any = true;
        }
    }
    if (!found_any) {
        throw FormatError("no label:probability assignments found in response",
                          std::string(text));
    }
    double sum = 0.0;
    for (double& v : dist) {
        v = std::clamp(v, 0.0, 1.0);
        sum += v;
    }
    if (sum <= 0.0) {
        throw FormatError("label distribution sums to zero", std::string(text));
    }
    for (double& v : dist) v /= sum;
    return dist;
}

ConsistencyLabel argmax_label(const LabelDistribution& distribution) {
    size_t best = 0;
    for (size_t i = 1; i < distribution.size(); ++i) {
        if (distribution[i] > distribution[best]) best = i;
    }
    return static_cast<ConsistencyLabel>(best);
}

std::vector<GeneratedInvalidQuestion> filter_consistent(
    std::vector<GeneratedInvalidQuestion> candidates,
    std::span<const LabelDistribution> labels) {
    if (candidates.size() != labels.size()) {
        throw ContractError("filter_consistent: candidates and labels differ in length");
    }
    std::vector<GeneratedInvalidQuestion> kept;
    for (size_t i = 0; i < candidates.size(); ++i) {
        ConsistencyLabel verdict = argmax_label(labels[i]);
        if (verdict == ConsistencyLabel::Good || verdict == ConsistencyLabel::Incorrect) continue;
        candidates[i].category = static_cast<InvalidCategory>(verdict);
        kept.push_back(std::move(candidates[i]));
    }
    return kept;
}

std::vector<PreferencePair> build_preference_pairs(
    const std::string& prompt, std::span<const std::string> valid,
    std::span<const GeneratedInvalidQuestion> invalid) {
    std::vector<PreferencePair> pairs;
    pairs.reserve(valid.size() * invalid.size());
    for (const std::string& chosen : valid) {
        for (const GeneratedInvalidQuestion& iv : invalid) {
            if (chosen == iv.question) continue;
            PreferencePair pair;
            pair.prompt = prompt;
            pair.chosen = chosen;
            pair.rejected = iv.question;
            pair.rejected_category = iv.category;
            pair.dialogue_id = iv.dialogue_id;
            pair.turn_index = iv.turn_index;
            pairs.push_back(std::move(pair));
        }
    }
    return pairs;
}

}  // namespace socratic
