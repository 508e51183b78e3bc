#include "socratic/corpus.hpp"

#include <fstream>
#include <random>
#include <sstream>

#include "doctest.h"
#include "socratic/errors.hpp"

using namespace socratic;

namespace {

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    REQUIRE(in);
    std::ostringstream buffer;
    buffer << in.rdbuf();
    return buffer.str();
}

Dialogue make_dialogue(std::string id, std::vector<int> gt_counts) {
    Dialogue d;
    d.problem = Problem{std::move(id),
                        "Write a function that does the thing.",
                        {{"f(1)", "2"}},
                        "Off by one on line 3.",
                        {"Use n + 1 on line 3."},
                        "def f(n):\n    return n"};
    d.turns.push_back(Turn{Speaker::Student, "It does not work.", {}});
    for (size_t k = 0; k < gt_counts.size(); ++k) {
        Turn t;
        t.speaker = Speaker::Instructor;
        t.utterance = "Question " + std::to_string(k) + "?";
        for (int q = 0; q < gt_counts[k]; ++q) {
            t.ground_truth_questions.push_back("Question " + std::to_string(k) + " variant " +
                                               std::to_string(q) + "?");
        }
        d.turns.push_back(t);
        d.turns.push_back(Turn{Speaker::Student, "Reply " + std::to_string(k) + ".", {}});
    }
    return d;
}

std::vector<Dialogue> random_corpus(std::mt19937_64& rng) {
    static const std::vector<std::string> words = {"loop",  "index", "value", "bound",
                                                   "print", "trace", "check", "list"};
    auto word = [&] { return words[rng() % words.size()]; };
    auto sentence = [&] {
        std::string s = word();
        for (size_t i = 0, n = rng() % 5; i < n; ++i) s += " " + word();
        return s + "?";
    };
    std::vector<Dialogue> corpus;
    size_t dialogues = 1 + rng() % 4;
    for (size_t di = 0; di < dialogues; ++di) {
        Dialogue d;
        d.problem = Problem{"dlg-" + std::to_string(di),
                            sentence(),
                            {},
                            sentence(),
                            {},
                            sentence()};
        for (size_t t = 0, n = rng() % 3; t < n; ++t) {
            d.problem.test_cases.push_back(TestCase{sentence(), sentence()});
        }
        for (size_t f = 0, n = rng() % 3; f < n; ++f) d.problem.bug_fixes.push_back(sentence());
        size_t turns = 1 + rng() % 6;
        for (size_t t = 0; t < turns; ++t) {
            if (rng() % 2 == 0) {
                d.turns.push_back(Turn{Speaker::Student, sentence(), {}});
            } else {
                Turn turn{Speaker::Instructor, sentence(), {}};
                for (size_t q = 0, n = rng() % 3; q < n; ++q) {
                    turn.ground_truth_questions.push_back(sentence());
                }
                d.turns.push_back(turn);
            }
        }
        Turn anchor{Speaker::Instructor, sentence(), {sentence()}};
        d.turns.push_back(anchor);  // guarantees the dialogue invariant
        corpus.push_back(std::move(d));
    }
    return corpus;
}

}  // namespace

TEST_SUITE("corpus") {

TEST_CASE("empty corpus parses to an empty list") {
    CHECK(parse_corpus(R"({"version":"socratic-corpus/1","dialogues":[]})").empty());
}

TEST_CASE("fields survive a parse") {
    std::string doc = R"({
      "version": "socratic-corpus/1",
      "dialogues": [{
        "problem": {"id": "p1", "statement": "Do it.", "test_cases": [],
                    "bug_description": "", "bug_fixes": [], "buggy_code": ""},
        "turns": [
          {"speaker": "student", "utterance": "help", "ground_truth_questions": []},
          {"speaker": "instructor", "utterance": "q?",
           "ground_truth_questions": ["q?", "other q?"]},
          {"speaker": "student", "utterance": "ah", "ground_truth_questions": []}
        ]
      }]
    })";
    std::vector<Dialogue> corpus = parse_corpus(doc);
    REQUIRE(corpus.size() == 1);
    REQUIRE(corpus[0].turns.size() == 3);
    CHECK(corpus[0].turns[1].ground_truth_questions.size() == 2);
    CHECK(corpus[0].problem.id == "p1");
}

TEST_CASE("malformed document names the problem") {
    CHECK_THROWS_AS(parse_corpus("{not json"), ParseError);
    CHECK_THROWS_WITH_AS(parse_corpus(R"({"version":"socratic-corpus/1"})"),
                         doctest::Contains("dialogues"), ParseError);
}

TEST_CASE("schema version mismatch is a version error") {
    CHECK_THROWS_AS(parse_corpus(R"({"version":"socratic-corpus/9","dialogues":[]})"),
                    VersionError);
}

TEST_CASE("invariant violations carry a field path") {
    std::string student_gt = R"({
      "version": "socratic-corpus/1",
      "dialogues": [{
        "problem": {"id": "p", "statement": "s", "test_cases": [],
                    "bug_description": "", "bug_fixes": [], "buggy_code": ""},
        "turns": [{"speaker": "student", "utterance": "u",
                   "ground_truth_questions": ["q?"]}]
      }]
    })";
    CHECK_THROWS_WITH_AS(parse_corpus(student_gt), doctest::Contains("turns[0]"), ParseError);

    std::string dup = R"({
      "version": "socratic-corpus/1",
      "dialogues": [
        {"problem": {"id": "same", "statement": "s", "test_cases": [],
                     "bug_description": "", "bug_fixes": [], "buggy_code": ""},
         "turns": [{"speaker": "instructor", "utterance": "q?",
                    "ground_truth_questions": ["q?"]}]},
        {"problem": {"id": "same", "statement": "s", "test_cases": [],
                     "bug_description": "", "bug_fixes": [], "buggy_code": ""},
         "turns": [{"speaker": "instructor", "utterance": "q?",
                    "ground_truth_questions": ["q?"]}]}
      ]
    })";
    CHECK_THROWS_WITH_AS(parse_corpus(dup), doctest::Contains("duplicate id"), ParseError);
}

TEST_CASE("serialize then parse is the identity") {
    std::vector<Dialogue> demo = parse_corpus(slurp(std::string(SOCRATIC_DATA_DIR) +
                                                    "/demo_corpus.json"));
    CHECK(demo.size() == 3);
    CHECK(parse_corpus(serialize_corpus(demo)) == demo);

    std::mt19937_64 rng(20240817);
    for (int i = 0; i < 25; ++i) {
        std::vector<Dialogue> corpus = random_corpus(rng);
        CHECK(parse_corpus(serialize_corpus(corpus)) == corpus);
    }
}

TEST_CASE("split_turns fans out per ground-truth question") {
    Dialogue d = make_dialogue("d1", {4});
    std::vector<TrainingExample> examples = split_turns(d);
    REQUIRE(examples.size() == 4);
    for (const TrainingExample& ex : examples) {
        CHECK(ex.prompt == examples[0].prompt);
        CHECK(ex.dialogue_id == "d1");
        CHECK(ex.turn_index == 1);
    }

    Dialogue d2 = make_dialogue("d2", {4, 3});
    CHECK(split_turns(d2).size() == 7);
}

TEST_CASE("history before the annotated turn is in the prompt verbatim") {
    Dialogue d = make_dialogue("d3", {1});
    std::vector<TrainingExample> examples = split_turns(d);
    REQUIRE(examples.size() == 1);
    CHECK(examples[0].prompt.find("Student: It does not work.") != std::string::npos);
}

TEST_CASE("render_prompt is deterministic and prefix-extending") {
    Dialogue d = make_dialogue("d4", {2, 1});
    const Problem& p = d.problem;

    std::string empty_history = render_prompt(p, {});
    CHECK(empty_history == render_prompt(p, {}));
    // Ends right after the metadata block.
    CHECK(empty_history.rfind("Conversation so far:\n") == empty_history.size() - 21);

    for (size_t k = 0; k + 1 <= d.turns.size(); ++k) {
        std::string shorter = render_prompt(p, std::span<const Turn>(d.turns.data(), k));
        std::string longer = render_prompt(p, std::span<const Turn>(d.turns.data(), k + 1));
        CHECK(longer.size() > shorter.size());
        CHECK(longer.compare(0, shorter.size(), shorter) == 0);
    }
}

TEST_CASE("render_prompt emits one speaker-tagged line per history turn") {
    std::vector<Turn> history = {{Speaker::Student, "first", {}},
                                 {Speaker::Instructor, "second", {}},
                                 {Speaker::Student, "third", {}}};
    Problem p{"p", "s", {}, "", {}, ""};
    std::string prompt = render_prompt(p, history);
    size_t student_lines = 0, instructor_lines = 0;
    std::istringstream in(prompt);
    std::string line;
    std::vector<std::string> tagged;
    while (std::getline(in, line)) {
        if (line.rfind("Student: ", 0) == 0) {
            ++student_lines;
            tagged.push_back(line);
        } else if (line.rfind("Instructor: ", 0) == 0) {
            ++instructor_lines;
            tagged.push_back(line);
        }
    }
    CHECK(student_lines == 2);
    CHECK(instructor_lines == 1);
    REQUIRE(tagged.size() == 3);
    CHECK(tagged[0] == "Student: first");
    CHECK(tagged[1] == "Instructor: second");
    CHECK(tagged[2] == "Student: third");
}

TEST_CASE("prompt template bytes are pinned") {
    Problem p{"pin", "State.", {{"in", "out"}}, "Desc.", {"Fix."}, "code"};
    std::vector<Turn> history = {{Speaker::Student, "hello", {}}};
    std::string expected =
        "You are an instructor helping a student debug their code. Ask a Socratic "
        "question that guides the student toward finding the bug themselves, without "
        "revealing the bug or suggesting a fix.\n"
        "\nProblem:\nState.\n"
        "\nTest cases:\n- input: in => expected: out\n"
        "\nBuggy code:\ncode\n"
        "\nBug description:\nDesc.\n"
        "\nBug fixes:\n- Fix.\n"
        "\nConversation so far:\nStudent: hello\n";
    CHECK(render_prompt(p, history) == expected);

    PromptOptions no_fixes{false};
    CHECK(render_prompt(p, history, no_fixes).find("Bug fixes") == std::string::npos);
}

TEST_CASE("upstream adapter maps tags, turns and alternatives") {
    std::string text = slurp(std::string(SOCRATIC_DATA_DIR) + "/upstream_sample/dialogue_001.txt");
    Dialogue d = ingest_upstream_dialogue(text, "dialogue_001");
    CHECK(d.problem.id == "dialogue_001");
    CHECK(d.problem.statement.rfind("Write a function", 0) == 0);
    CHECK(d.problem.bug_fixes.size() == 2);
    CHECK(d.problem.test_cases.size() == 2);
    REQUIRE(d.turns.size() == 4);
    CHECK(d.turns[0].speaker == Speaker::Student);
    CHECK(d.turns[1].speaker == Speaker::Instructor);
    CHECK(d.turns[1].ground_truth_questions.size() == 3);  // utterance + two alts
    CHECK(d.turns[1].ground_truth_questions[0] == d.turns[1].utterance);
    CHECK(d.turns[3].ground_truth_questions.size() == 2);
}

TEST_CASE("upstream adapter rejects broken files") {
    CHECK_THROWS_AS(ingest_upstream_dialogue("<dialogue>User: hi</dialogue>", "x"), ParseError);
    CHECK_THROWS_AS(
        ingest_upstream_dialogue("<problem>p</problem>\n<dialogue>\n<alt>q</alt>\n</dialogue>", "x"),
        ParseError);
}

}  // TEST_SUITE
