#include "socratic/corpus.hpp"

#include <algorithm>
#include <unordered_set>

#include "json.hpp"
#include "socratic/errors.hpp"

namespace socratic {

namespace {

using nlohmann::json;

const json& expect_member(const json& obj, const std::string& key, const std::string& path) {
    if (!obj.is_object()) throw ParseError(path + ": expected an object");
    auto it = obj.find(key);
    if (it == obj.end()) throw ParseError(path + "." + key + ": missing field");
    return *it;
}

std::string expect_string(const json& j, const std::string& path) {
    if (!j.is_string()) throw ParseError(path + ": expected a string");
    return j.get<std::string>();
}

const json& expect_array(const json& j, const std::string& path) {
    if (!j.is_array()) throw ParseError(path + ": expected an array");
    return j;
}

Problem parse_problem(const json& j, const std::string& path) {
    Problem p;
    p.id = expect_string(expect_member(j, "id", path), path + ".id");
    if (p.id.empty()) throw ParseError(path + ".id: must be nonempty");
    p.statement = expect_string(expect_member(j, "statement", path), path + ".statement");
    if (p.statement.empty()) throw ParseError(path + ".statement: must be nonempty");
    const json& cases = expect_array(expect_member(j, "test_cases", path), path + ".test_cases");
    for (size_t i = 0; i < cases.size(); ++i) {
        std::string cpath = path + ".test_cases[" + std::to_string(i) + "]";
        TestCase tc;
        tc.input = expect_string(expect_member(cases[i], "input", cpath), cpath + ".input");
        tc.expected_output =
            expect_string(expect_member(cases[i], "expected_output", cpath), cpath + ".expected_output");
        p.test_cases.push_back(std::move(tc));
    }
    p.bug_description =
        expect_string(expect_member(j, "bug_description", path), path + ".bug_description");
    const json& fixes = expect_array(expect_member(j, "bug_fixes", path), path + ".bug_fixes");
    for (size_t i = 0; i < fixes.size(); ++i) {
        p.bug_fixes.push_back(expect_string(fixes[i], path + ".bug_fixes[" + std::to_string(i) + "]"));
    }
    p.buggy_code = expect_string(expect_member(j, "buggy_code", path), path + ".buggy_code");
    return p;
}

Turn parse_turn(const json& j, const std::string& path) {
    Turn t;
    std::string speaker = expect_string(expect_member(j, "speaker", path), path + ".speaker");
    if (speaker == "student") {
        t.speaker = Speaker::Student;
    } else if (speaker == "instructor") {
        t.speaker = Speaker::Instructor;
    } else {
        throw ParseError(path + ".speaker: expected \"student\" or \"instructor\", got \"" + speaker + "\"");
    }
    t.utterance = expect_string(expect_member(j, "utterance", path), path + ".utterance");
    if (j.contains("ground_truth_questions")) {
        const json& gt = expect_array(j["ground_truth_questions"], path + ".ground_truth_questions");
        for (size_t i = 0; i < gt.size(); ++i) {
            std::string qpath = path + ".ground_truth_questions[" + std::to_string(i) + "]";
            std::string q = expect_string(gt[i], qpath);
            if (q.empty()) throw ParseError(qpath + ": question must be nonempty");
            t.ground_truth_questions.push_back(std::move(q));
        }
    }
    if (t.speaker == Speaker::Student && !t.ground_truth_questions.empty()) {
        throw ParseError(path + ": student turns must not carry ground_truth_questions");
    }
    return t;
}

bool has_annotated_turn(const Dialogue& d) {
    return std::any_of(d.turns.begin(), d.turns.end(), [](const Turn& t) {
        return t.speaker == Speaker::Instructor && !t.ground_truth_questions.empty();
    });
}

std::string trim(std::string_view s) {
    size_t b = s.find_first_not_of(" \t\r\n");
    if (b == std::string_view::npos) return {};
    size_t e = s.find_last_not_of(" \t\r\n");
    return std::string(s.substr(b, e - b + 1));
}

}  // namespace

std::vector<Dialogue> parse_corpus(std::string_view document) {
    json root;
    try {
        root = json::parse(document);
    } catch (const json::parse_error& e) {
        throw ParseError(std::string("malformed corpus document: ") + e.what());
    }
    std::string version = expect_string(expect_member(root, "version", "$"), "$.version");
    if (version != kCorpusSchemaVersion) {
        throw VersionError("unsupported corpus version \"" + version + "\", expected \"" +
                           std::string(kCorpusSchemaVersion) + "\"");
    }
    const json& dialogues = expect_array(expect_member(root, "dialogues", "$"), "$.dialogues");

    std::vector<Dialogue> out;
    std::unordered_set<std::string> seen_ids;
    for (size_t i = 0; i < dialogues.size(); ++i) {
        std::string dpath = "$.dialogues[" + std::to_string(i) + "]";
        Dialogue d;
        d.problem = parse_problem(expect_member(dialogues[i], "problem", dpath), dpath + ".problem");
        if (!seen_ids.insert(d.problem.id).second) {
            throw ParseError(dpath + ".problem.id: duplicate id \"" + d.problem.id + "\"");
        }
        const json& turns = expect_array(expect_member(dialogues[i], "turns", dpath), dpath + ".turns");
        for (size_t k = 0; k < turns.size(); ++k) {
            d.turns.push_back(parse_turn(turns[k], dpath + ".turns[" + std::to_string(k) + "]"));
        }
        if (!has_annotated_turn(d)) {
            throw ParseError(dpath + ": dialogue needs at least one instructor turn with ground-truth questions");
        }
        out.push_back(std::move(d));
    }
    return out;
}

std::string serialize_corpus(const std::vector<Dialogue>& dialogues) {
    json root;
    root["version"] = kCorpusSchemaVersion;
    json jdialogues = json::array();
    for (const Dialogue& d : dialogues) {
        json jp;
        jp["id"] = d.problem.id;
        jp["statement"] = d.problem.statement;
        json jcases = json::array();
        for (const TestCase& tc : d.problem.test_cases) {
            jcases.push_back({{"input", tc.input}, {"expected_output", tc.expected_output}});
        }
        jp["test_cases"] = std::move(jcases);
        jp["bug_description"] = d.problem.bug_description;
        jp["bug_fixes"] = d.problem.bug_fixes;
        jp["buggy_code"] = d.problem.buggy_code;

        json jturns = json::array();
        for (const Turn& t : d.turns) {
            json jt;
            jt["speaker"] = t.speaker == Speaker::Student ? "student" : "instructor";
            jt["utterance"] = t.utterance;
            jt["ground_truth_questions"] = t.ground_truth_questions;
            jturns.push_back(std::move(jt));
        }
        jdialogues.push_back({{"problem", std::move(jp)}, {"turns", std::move(jturns)}});
    }
    root["dialogues"] = std::move(jdialogues);
    return root.dump(2) + "\n";
}

std::string render_prompt(const Problem& problem, std::span<const Turn> history,
                          const PromptOptions& options) {
    std::string out;
    out += "You are an instructor helping a student debug their code. Ask a Socratic "
           "question that guides the student toward finding the bug themselves, without "
           "revealing the bug or suggesting a fix.\n";
    out += "\nProblem:\n" + problem.statement + "\n";
    out += "\nTest cases:\n";
    for (const TestCase& tc : problem.test_cases) {
        out += "- input: " + tc.input + " => expected: " + tc.expected_output + "\n";
    }
    out += "\nBuggy code:\n" + problem.buggy_code + "\n";
    out += "\nBug description:\n" + problem.bug_description + "\n";
    if (options.include_bug_fixes) {
        out += "\nBug fixes:\n";
        for (const std::string& fix : problem.bug_fixes) {
            out += "- " + fix + "\n";
        }
    }
    out += "\nConversation so far:\n";
    for (const Turn& t : history) {
        out += t.speaker == Speaker::Student ? "Student: " : "Instructor: ";
        out += t.utterance + "\n";
    }
    return out;
}

std::vector<TrainingExample> split_turns(const Dialogue& dialogue, const PromptOptions& options) {
    std::vector<TrainingExample> out;
    for (size_t i = 0; i < dialogue.turns.size(); ++i) {
        const Turn& turn = dialogue.turns[i];
        if (turn.speaker != Speaker::Instructor || turn.ground_truth_questions.empty()) continue;
        std::string prompt = render_prompt(
            dialogue.problem, std::span<const Turn>(dialogue.turns.data(), i), options);
        for (const std::string& q : turn.ground_truth_questions) {
            out.push_back(TrainingExample{prompt, q, dialogue.problem.id, static_cast<int>(i)});
        }
    }
    return out;
}

Dialogue ingest_upstream_dialogue(std::string_view text, std::string dialogue_id) {
    auto section = [&](std::string_view tag) -> std::string {
        std::string open = "<" + std::string(tag) + ">";
        std::string close = "</" + std::string(tag) + ">";
        size_t b = text.find(open);
        if (b == std::string_view::npos) return {};
        b += open.size();
        size_t e = text.find(close, b);
        if (e == std::string_view::npos) {
            throw ParseError("upstream dialogue " + dialogue_id + ": unterminated <" +
                             std::string(tag) + "> section");
        }
        return trim(text.substr(b, e - b));
    };

    Dialogue d;
    d.problem.id = std::move(dialogue_id);
    d.problem.statement = section("problem");
    if (d.problem.statement.empty()) {
        throw ParseError("upstream dialogue " + d.problem.id + ": missing <problem> section");
    }
    d.problem.buggy_code = section("bug_code");
    d.problem.bug_description = section("bug_desc");
    for (std::string_view lines = section("bug_fixes"); !lines.empty();) {
        size_t nl = lines.find('\n');
        std::string line = trim(lines.substr(0, nl));
        if (line.rfind("- ", 0) == 0) line = line.substr(2);
        if (!line.empty()) d.problem.bug_fixes.push_back(line);
        if (nl == std::string_view::npos) break;
        lines.remove_prefix(nl + 1);
    }
    {
        std::string tests = section("unit_tests");
        std::string_view rest = tests;
        while (!rest.empty()) {
            size_t nl = rest.find('\n');
            std::string line = trim(rest.substr(0, nl));
            if (!line.empty()) d.problem.test_cases.push_back(TestCase{line, ""});
            if (nl == std::string_view::npos) break;
            rest.remove_prefix(nl + 1);
        }
    }

    std::string dialogue_text = section("dialogue");
    std::string_view rest = dialogue_text;
    auto flush_turn = [&](Turn& t) {
        if (t.utterance.empty()) return;
        if (t.speaker == Speaker::Instructor) {
            // The visible utterance is the first ground-truth question; <alt>
            // entries were appended after it.
            t.ground_truth_questions.insert(t.ground_truth_questions.begin(), t.utterance);
        }
        d.turns.push_back(t);
        t = Turn{};
    };
    Turn current;
    bool in_turn = false;
    while (true) {
        size_t nl = rest.find('\n');
        std::string line = trim(rest.substr(0, nl));
        if (line.rfind("User:", 0) == 0) {
            if (in_turn) flush_turn(current);
            current = Turn{Speaker::Student, trim(line.substr(5)), {}};
            in_turn = true;
        } else if (line.rfind("Assistant:", 0) == 0) {
            if (in_turn) flush_turn(current);
            current = Turn{Speaker::Instructor, trim(line.substr(10)), {}};
            in_turn = true;
        } else if (line.rfind("<alt>", 0) == 0) {
            size_t close = line.rfind("</alt>");
            std::string alt = trim(line.substr(5, close == std::string::npos
                                                       ? std::string::npos
                                                       : close - 5));
            if (!in_turn || current.speaker != Speaker::Instructor) {
                throw ParseError("upstream dialogue " + d.problem.id +
                                 ": <alt> outside an assistant turn");
            }
            if (!alt.empty()) current.ground_truth_questions.push_back(alt);
        } else if (!line.empty() && in_turn) {
            current.utterance += "\n" + line;
        }
        if (nl == std::string_view::npos) break;
        rest.remove_prefix(nl + 1);
    }
    if (in_turn) flush_turn(current);

    if (!has_annotated_turn(d)) {
        throw ParseError("upstream dialogue " + d.problem.id +
                         ": no assistant turn found in <dialogue> section");
    }
    return d;
}

}  // namespace socratic
