#include <catch2/catch_amalgamated.hpp>

#include "imtk/prompting.hpp"

#include "fixtures.hpp"

using namespace imtk;

TEST_CASE("judgment phrase renders the full template") {
    CHECK(render_judgment_phrase(fixtures::greedy_judgment()) ==
          "(she = greedy, which is a bad character trait and a vice of excess related to "
          "giving & taking: small money.)");
}

TEST_CASE("an absent variable elides its clause") {
    auto m = fixtures::greedy_judgment();
    m.soa.reset();
    CHECK(render_judgment_phrase(m) ==
          "(she = greedy, which is a bad character trait and a vice of excess.)");
}

TEST_CASE("elision trims dangling connectors") {
    auto m = fixtures::greedy_judgment();
    m.soa.reset();
    m.vi.reset();
    CHECK(render_judgment_phrase(m) == "(she = greedy, which is a bad character trait.)");
    m.eval.reset();
    CHECK(render_judgment_phrase(m) == "(she = greedy.)");
}

TEST_CASE("a judgment with no descriptive fields renders unspecified") {
    MoralJudgment m;
    m.ent = "she";
    m.pres = true;
    CHECK(render_judgment_phrase(m) == "(she = unspecified.)");
}

TEST_CASE("judgment phrase requires pres") {
    CHECK_THROWS_AS(render_judgment_phrase(fixtures::absent_judgment("she")),
                    std::domain_error);
}

TEST_CASE("render_context with one neutral unjudging reader") {
    auto [attitudes, judgments] =
        render_context({fixtures::context(3, {fixtures::absent_judgment("she")})});
    CHECK(attitudes == "Attitude: neutral.");
    CHECK(judgments == "Moral Judgments: None");
}

TEST_CASE("render_context with two readers and no judgments") {
    auto [attitudes, judgments] =
        render_context({fixtures::context(1), fixtures::context(5)});
    CHECK(attitudes == "Attitude: very negative. very positive.");
    CHECK(judgments == "Moral Judgments: None");
}

TEST_CASE("render_context with one judging reader") {
    auto [attitudes, judgments] =
        render_context({fixtures::context(2, {fixtures::greedy_judgment()})});
    CHECK(attitudes == "Attitude: negative.");
    CHECK(judgments == "Moral Judgments: " + render_judgment_phrase(fixtures::greedy_judgment()));
}

TEST_CASE("a judging and a non-judging reader mix None into the groups") {
    auto [attitudes, judgments] = render_context(
        {fixtures::context(2, {fixtures::greedy_judgment()}), fixtures::context(4)});
    CHECK(judgments == "Moral Judgments: " +
                           render_judgment_phrase(fixtures::greedy_judgment()) + " None");
}

TEST_CASE("a reader's multiple judgment phrases concatenate") {
    auto second = fixtures::greedy_judgment("he");
    second.desc = "kind";
    second.eval = Evaluation::good;
    auto [attitudes, judgments] = render_context(
        {fixtures::context(2, {fixtures::greedy_judgment("she"), second})});
    CHECK(judgments == "Moral Judgments: " +
                           render_judgment_phrase(fixtures::greedy_judgment("she")) +
                           render_judgment_phrase(second));
}

TEST_CASE("build_prompt matches the template byte for byte") {
    auto prompt = build_prompt("T", "S", {fixtures::context(3, {fixtures::absent_judgment("e")})});
    CHECK(prompt.text ==
          "Title: T <sep> Attitude: neutral. <sep> Moral Judgments: None <sep> Sentence: S");
    CHECK(prompt.mode == GenerationMode::one_to_one);
    CHECK(prompt.reader_count == 1);
}

TEST_CASE("prompt invariants: three separators, fixed segment heads") {
    auto prompt = build_prompt("My Title", "The sentence.",
                               {fixtures::context(2, {fixtures::greedy_judgment()}),
                                fixtures::context(5)});
    CHECK(prompt.mode == GenerationMode::one_to_many);
    auto segments = split_on(prompt.text, kSepToken);
    REQUIRE(segments.size() == 4);  // exactly 3 occurrences of <sep>
    CHECK(segments[0].rfind("Title: ", 0) == 0);
    CHECK(trim(segments[3]).rfind("Sentence: ", 0) == 0);
}

TEST_CASE("permuting readers permutes attitudes and judgments identically") {
    auto a = fixtures::context(1, {fixtures::greedy_judgment()});
    auto b = fixtures::context(5);
    auto forward = build_prompt("T", "S", {a, b});
    auto backward = build_prompt("T", "S", {b, a});

    auto fwd = split_on(forward.text, kSepToken);
    auto bwd = split_on(backward.text, kSepToken);
    CHECK(trim(fwd[1]) == "Attitude: very negative. very positive.");
    CHECK(trim(bwd[1]) == "Attitude: very positive. very negative.");
    auto phrase = render_judgment_phrase(fixtures::greedy_judgment());
    CHECK(trim(fwd[2]) == "Moral Judgments: " + phrase + " None");
    CHECK(trim(bwd[2]) == "Moral Judgments: None " + phrase);
}

TEST_CASE("build_prompt rejects empty title or sentence") {
    CHECK_THROWS_AS(build_prompt("", "S", {fixtures::context(3)}), std::invalid_argument);
    CHECK_THROWS_AS(build_prompt("T", "  ", {fixtures::context(3)}), std::invalid_argument);
    CHECK_THROWS_AS(build_prompt("T <sep> x", "S", {fixtures::context(3)}),
                    std::invalid_argument);
}

TEST_CASE("build_prompt is deterministic") {
    std::vector<ReaderContext> ctxs = {fixtures::context(2, {fixtures::greedy_judgment()})};
    CHECK(build_prompt("T", "S", ctxs).text == build_prompt("T", "S", ctxs).text);
}

TEST_CASE("one-to-many targets join on the reader token") {
    CHECK(build_target({"A", "B", "C"}, GenerationMode::one_to_many).text ==
          "A<reader>B<reader>C");
}

TEST_CASE("one-to-one targets are the interpretation verbatim") {
    CHECK(build_target({"A"}, GenerationMode::one_to_one).text == "A");
    CHECK_THROWS_AS(build_target({"A", "B"}, GenerationMode::one_to_one), std::domain_error);
    CHECK_THROWS_AS(build_target({}, GenerationMode::one_to_many), std::domain_error);
}

TEST_CASE("target reader-token counts match the mode") {
    auto many = build_target({"A", "B", "C"}, GenerationMode::one_to_many);
    std::size_t count = 0;
    for (std::size_t pos = many.text.find(kReaderToken); pos != std::string::npos;
         pos = many.text.find(kReaderToken, pos + 1))
        ++count;
    CHECK(count == 2);  // J - 1
    CHECK(build_target({"A"}, GenerationMode::one_to_one).text.find(kReaderToken) ==
          std::string::npos);
}

TEST_CASE("splitting a one-to-many target recovers the inputs") {
    // Property: round-trip for interpretation lists free of reserved tokens.
    SplitMix64 rng(99);
    const std::vector<std::string> words = {"alpha", "beta", "gamma", "delta", "epsilon"};
    for (int trial = 0; trial < 50; ++trial) {
        std::vector<std::string> interps;
        auto n = 1 + rng.next_below(5);
        for (std::uint64_t i = 0; i < n; ++i) {
            std::string text;
            auto len = 1 + rng.next_below(6);
            for (std::uint64_t w = 0; w < len; ++w) {
                if (!text.empty()) text += ' ';
                text += words[rng.next_below(words.size())];
            }
            interps.push_back(text);
        }
        auto target = build_target(interps, GenerationMode::one_to_many);
        CHECK(split_target(target.text) == interps);
    }
}
