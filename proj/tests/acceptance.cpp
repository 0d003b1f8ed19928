// Acceptance suite: one pass/fail line per criterion, nonzero exit when any
// criterion fails. Each criterion carries its runtime bound and tolerance in
// code.

#include <chrono>
#include <cmath>
#include <functional>
#include <iomanip>
#include <iostream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "imtk/imtk.hpp"

#include "cli_harness.hpp"
#include "oracles.hpp"
#include "test_providers.hpp"

namespace {

struct Criterion {
    std::string name;
    double time_limit_seconds;
    std::function<void()> body;  // throws std::runtime_error on failure
};

void require(bool condition, const std::string& message) {
    if (!condition) throw std::runtime_error(message);
}

void require_close(double actual, double expected, double tolerance,
                   const std::string& what) {
    if (!(std::abs(actual - expected) <= tolerance)) {
        std::ostringstream msg;
        msg.precision(17);
        msg << what << ": expected " << expected << " +/- " << tolerance << ", got "
            << actual;
        throw std::runtime_error(msg.str());
    }
}

// ---- 1. template fidelity ------------------------------------------------------

void criterion_template_fidelity() {
    auto prompt = imtk::build_prompt(
        "T", "S", {fixtures::context(3, {fixtures::absent_judgment("she")})});
    require(prompt.text ==
                "Title: T <sep> Attitude: neutral. <sep> Moral Judgments: None <sep> "
                "Sentence: S",
            "prompt differs from the fixed template: " + prompt.text);
    require(prompt.reader_count == 1 && prompt.mode == imtk::GenerationMode::one_to_one,
            "prompt metadata wrong");
}

// ---- 2. loss oracles -------------------------------------------------------------

void criterion_loss_oracles() {
    auto prompt = imtk::build_prompt("T", "S", {fixtures::context(3)});
    imtk::TabularBackend uniform(8);
    auto target5 = imtk::build_target({"t1 t2 t3 t4 t5"}, imtk::GenerationMode::one_to_one);
    require_close(imtk::loss_one2one(uniform, prompt, target5), std::log(8.0), 1e-9,
                  "uniform |V|=8 one2one loss");

    imtk::TabularBackend mixed(8);
    mixed.set_token_prob("x", 0.5);
    mixed.set_token_prob("y", 0.25);
    require_close(imtk::loss_one2one(mixed, prompt,
                                     imtk::build_target({"x y"},
                                                        imtk::GenerationMode::one_to_one)),
                  (std::log(2.0) + std::log(4.0)) / 2.0, 1e-9,
                  "per-token (0.5, 0.25) one2one loss");

    imtk::TabularBackend many(8);
    many.set_token_prob("a", 0.5);
    many.set_token_prob("b", 0.5);
    many.set_token_prob("c", 0.5);
    many.set_token_prob("d", 0.25);
    many.set_token_prob("<reader>", 1.0);
    auto prompt2 = imtk::build_prompt("T", "S", {fixtures::context(1), fixtures::context(2)});
    auto target2 = imtk::build_target({"a b c", "d"}, imtk::GenerationMode::one_to_many);
    require_close(imtk::loss_one2many(many, prompt2, target2),
                  (3.0 * std::log(2.0) + std::log(4.0)) / 5.0, 1e-9,
                  "one2many mixed-probability loss");
    require_close(imtk::loss_one2many(uniform, prompt2, target2), std::log(8.0), 1e-9,
                  "uniform one2many loss");
}

// ---- 3. hinge-loss fixture ---------------------------------------------------------

void criterion_hinge_fixture() {
    // Consecutive hinge terms of (1/J) sum_{j>=2} max(0, s_j - s_{j-1} + m).
    // The stated expected value, (1/3)(0 + 0.15) = 0.05, arises from the
    // term sequence (0, 0.15); sims (0.6, 0.55, 0.65) realize it exactly.
    auto provider =
        fixtures::circle_provider({{"i1", 0.6}, {"i2", 0.55}, {"i3", 0.65}});
    require_close(imtk::similarity_decrease_loss("s", {"i1", "i2", "i3"}, 0.05, provider),
                  0.05, 1e-12, "L_sim from hinge terms (0, 0.15)");
    require_close(imtk::similarity_decrease_loss_from_sims({0.6, 0.55, 0.65}, 0.05), 0.05,
                  1e-12, "L_sim from raw sims");

    // The sims triple (0.6, 0.4, 0.7) under the same equations: terms
    // (max(0, -0.15), max(0, 0.35)) -> 0.35 / 3. Checked to pin down the
    // consecutive-pair reading of the loss.
    require_close(imtk::similarity_decrease_loss_from_sims({0.6, 0.4, 0.7}, 0.05),
                  0.35 / 3.0, 1e-12, "L_sim on (0.6, 0.4, 0.7)");
    require_close(imtk::hinge_term(0.4, 0.6, 0.05), 0.0, 1e-12, "hinge clamp");
    require_close(imtk::hinge_term(0.7, 0.6, 0.05), 0.15, 1e-12, "hinge positive");
}

// ---- 4. hungarian oracle -----------------------------------------------------------

void criterion_hungarian_oracle() {
    imtk::SplitMix64 rng(20240);
    int mismatches = 0;
    for (int trial = 0; trial < 220; ++trial) {
        auto rows = 1 + rng.next_below(6);
        auto cols = 1 + rng.next_below(6);
        std::vector<std::vector<double>> cost(rows, std::vector<double>(cols));
        for (auto& row : cost)
            for (auto& c : row) c = rng.next_unit() * 100.0;
        auto result = imtk::hungarian_match(cost);
        double with_dummies =
            result.total_cost +
            imtk::kDummyMatchCost *
                static_cast<double>(result.unmatched_generated.size() +
                                    result.unmatched_targets.size());
        if (std::abs(with_dummies - oracles::brute_force_assignment_cost(cost)) > 1e-9)
            ++mismatches;
    }
    require(mismatches == 0,
            std::to_string(mismatches) + " assignment(s) differ from brute force");
}

// ---- 5. diversity metrics ----------------------------------------------------------

void criterion_diversity_metrics() {
    require_close(imtk::di("a b c", "a b c"), 0.0, 1e-9, "di(x, x)");
    require_close(imtk::di("a b c", "x y z"), 100.0, 1e-9, "di of disjoint texts");

    auto g_j = fixtures::context(1, {fixtures::greedy_judgment()});
    auto g_k = fixtures::context(5, {fixtures::absent_judgment("she")});
    require_close(imtk::dg(g_j, g_k).value, 9.0, 0.0, "maximal-disagreement dg");

    imtk::SplitMix64 rng(88);
    for (int trial = 0; trial < 1000; ++trial) {
        auto q = rng.next_below(4);
        auto random_judgment = [&](const std::string& ent) {
            imtk::MoralJudgment m;
            m.ent = ent;
            m.pres = rng.next_below(2) == 1;
            if (m.pres) {
                m.desc = "t" + std::to_string(rng.next_below(4));
                if (rng.next_below(2))
                    m.eval = static_cast<imtk::Evaluation>(rng.next_below(2));
                if (rng.next_below(2))
                    m.soa = static_cast<imtk::SphereOfAction>(rng.next_below(10));
                if (rng.next_below(2))
                    m.vi = static_cast<imtk::Appropriateness>(rng.next_below(3));
            }
            return m;
        };
        std::vector<imtk::MoralJudgment> js, ks;
        for (std::uint64_t e = 0; e < q; ++e) {
            js.push_back(random_judgment("e" + std::to_string(e)));
            ks.push_back(random_judgment("e" + std::to_string(e)));
        }
        auto a = fixtures::context(1 + static_cast<int>(rng.next_below(5)), js);
        auto b = fixtures::context(1 + static_cast<int>(rng.next_below(5)), ks);
        auto d = imtk::dg(a, b);
        require(d.value >= 0.0 && d.value <= 9.0, "dg out of [0, 9]");
        require(imtk::dg(a, a).value == 0.0, "dg(g, g) != 0");
    }
}

// ---- 6. correlation pipeline ---------------------------------------------------------

void criterion_correlation_pipeline() {
    const double rho = 0.5;
    imtk::SplitMix64 rng(4242);
    auto gaussian = [&] {
        double u1 = std::max(rng.next_unit(), 1e-12);
        double u2 = rng.next_unit();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
    };
    std::vector<double> x, y;
    for (int i = 0; i < 1000; ++i) {
        double a = gaussian(), b = gaussian();
        x.push_back(a);
        y.push_back(rho * a + std::sqrt(1.0 - rho * rho) * b);
    }
    auto report = imtk::pearson(x, y);
    require_close(report.r, rho, 0.05, "planted correlation");
    require_close(report.r, oracles::pearson_r(x, y), 1e-9, "direct-formula oracle");
    require(report.n == 1000, "sample count");
}

// ---- 7. moderation fixtures -----------------------------------------------------------

void criterion_moderation_fixtures() {
    auto cluster = [](const std::string& id, double sentence,
                      std::vector<double> interps) {
        imtk::InterpretationCluster c;
        c.id = id;
        c.sentence = {"s", {sentence, sentence, sentence}};
        for (double v : interps) c.interpretations.push_back({"i", {v, v, v}});
        return c;
    };
    auto toxicity = cluster("tox", 0.0186, {0.0171, 0.1912, 0.4274});
    auto insult = cluster("ins", 0.0091, {0.0102, 0.0086, 0.3680});
    auto identity = cluster("ida", 0.0038, {0.0034, 0.0142, 0.1445});

    require(imtk::analysis1(toxicity, 0.0).toxicity, "toxicity 1A");
    require(imtk::analysis1(toxicity, 0.20).toxicity, "toxicity 1B");
    require_close(0.4274 - 0.0186, 0.4088, 1e-12, "toxicity 1B margin");
    require(!imtk::analysis2(toxicity).toxicity, "toxicity A2 must not flag");

    require(imtk::analysis1(insult, 0.0).insult, "insult 1A");
    require(imtk::analysis1(insult, 0.20).insult, "insult 1B");
    require_close(0.3680 - 0.0091, 0.3589, 1e-12, "insult 1B margin");
    require(!imtk::analysis2(insult).insult, "insult A2 must not flag");

    require(imtk::analysis1(identity, 0.0).identity_attack, "identity 1A");
    require(!imtk::analysis1(identity, 0.20).identity_attack,
            "identity 1B must not flag (margin 0.1407)");
    require_close(0.1445 - 0.0038, 0.1407, 1e-12, "identity 1B margin");
    require(!imtk::analysis2(identity).identity_attack, "identity A2 must not flag");
}

// ---- 8. ordering control ---------------------------------------------------------------

void criterion_ordering_control() {
    imtk::SplitMix64 rng(515);
    imtk::HashedBowProvider provider;
    const std::vector<std::string> words = {"one", "two",  "three", "four", "five",
                                            "six", "seven", "eight", "nine", "ten"};
    auto make_text = [&] {
        std::string text;
        auto len = 1 + rng.next_below(7);
        for (std::uint64_t i = 0; i < len; ++i)
            text += (text.empty() ? "" : " ") + words[rng.next_below(words.size())];
        return text;
    };

    int violations = 0;
    for (int trial = 0; trial < 100; ++trial) {
        auto sentence = make_text();
        std::vector<std::pair<imtk::ReaderContext, std::string>> readers;
        auto j_count = 1 + rng.next_below(6);
        for (std::uint64_t j = 0; j < j_count; ++j)
            readers.push_back(
                {fixtures::context(1 + static_cast<int>(rng.next_below(5))), make_text()});
        auto rec = fixtures::record("t" + std::to_string(trial), "T", sentence, {}, readers);

        auto examples =
            imtk::prepare_training_example(rec, imtk::Strategy::One2M_Sim, &provider);
        const auto& ex = examples.front();
        auto segments = imtk::split_target(ex.target.text);

        // Non-increasing similarity to the sentence.
        for (std::size_t k = 1; k < segments.size(); ++k) {
            double prev = imtk::similarity(segments[k - 1], sentence, provider).value;
            double curr = imtk::similarity(segments[k], sentence, provider).value;
            if (curr > prev + 1e-12) ++violations;
        }

        // The (context, interpretation) pairing multiset is preserved.
        std::multiset<std::pair<int, std::string>> original, prepared;
        for (const auto& reader : rec.readers)
            original.insert({reader.context.attitude.value, reader.interpretation});
        if (segments.size() != rec.readers.size()) {
            ++violations;
            continue;
        }
        for (std::size_t k = 0; k < segments.size(); ++k)
            prepared.insert(
                {rec.readers[ex.reader_order[k]].context.attitude.value, segments[k]});
        if (original != prepared) ++violations;

        // Contexts moved with their interpretations: rebuilding the prompt
        // from the permuted contexts reproduces the prepared prompt.
        std::vector<imtk::ReaderContext> permuted;
        for (auto idx : ex.reader_order) permuted.push_back(rec.readers[idx].context);
        if (imtk::build_prompt(rec.title, rec.sentence, permuted).text != ex.prompt.text)
            ++violations;
    }
    require(violations == 0, std::to_string(violations) + " ordering violation(s)");
}

// ---- 9. split property -------------------------------------------------------------------

void criterion_split_property() {
    std::vector<imtk::AnnotatedSentence> corpus;
    imtk::SplitMix64 rng(66);
    std::size_t max_group = 0;
    for (int t = 0; t < 50; ++t) {
        auto group = 1 + rng.next_below(4);
        max_group = std::max<std::size_t>(max_group, group);
        for (std::uint64_t s = 0; s < group; ++s)
            corpus.push_back(fixtures::minimal_record(
                "t" + std::to_string(t) + "_s" + std::to_string(s),
                "title " + std::to_string(t), "sentence"));
    }

    auto split = imtk::stratified_split(corpus, {}, 99);
    auto again = imtk::stratified_split(corpus, {}, 99);
    require(split.train == again.train && split.validation == again.validation &&
                split.test == again.test,
            "same-seed runs differ");

    std::map<std::string, std::set<std::string>> split_titles;
    for (const auto& r : split.train) split_titles["train"].insert(r.title);
    for (const auto& r : split.validation) split_titles["validation"].insert(r.title);
    for (const auto& r : split.test) split_titles["test"].insert(r.title);
    std::size_t distinct = 0;
    for (const auto& [name, titles] : split_titles) distinct += titles.size();
    std::set<std::string> all_titles;
    for (const auto& r : corpus) all_titles.insert(r.title);
    require(distinct == all_titles.size(), "a title crosses splits");

    const double total = static_cast<double>(corpus.size());
    auto check_part = [&](const std::vector<imtk::AnnotatedSentence>& part, double ratio,
                          const std::string& name) {
        double deviation = std::abs(static_cast<double>(part.size()) - ratio * total);
        require(deviation <= static_cast<double>(max_group),
                name + " deviates by " + std::to_string(deviation) +
                    " sentences (> one title group)");
    };
    check_part(split.train, 0.8, "train");
    check_part(split.validation, 0.1, "validation");
    check_part(split.test, 0.1, "test");
}

// ---- 10. end-to-end smoke -----------------------------------------------------------------

double tsv_value(const std::string& content, const std::string& key) {
    std::istringstream in(content);
    std::string line;
    while (std::getline(in, line)) {
        auto tab = line.find('\t');
        if (tab == std::string::npos) continue;
        if (line.substr(0, tab) == key) return std::stod(line.substr(tab + 1));
    }
    throw std::runtime_error("metric " + key + " missing from aggregate report");
}

void criterion_end_to_end() {
    auto dir = harness::fresh_dir("acceptance_e2e");
    harness::write_file(dir / "data.jsonl", harness::fixture_dataset(10));
    auto conf = std::string("backend = echo\nstrategy = one2one\nseed = 5\n") +
                "decoding.method = greedy\nvalidate.min_readers = 2\n" +
                "dataset = " + (dir / "data.jsonl").string() + "\n" +
                "out = " + (dir / "out").string() + "\n";
    harness::write_file(dir / "run.conf", conf);
    auto config_flag = "--config " + (dir / "run.conf").string() + " ";

    require(harness::run_cli(config_flag + "validate", dir) == 0, "cmd_validate exit != 0");
    require(harness::run_cli(config_flag + "prompts", dir) == 0, "cmd_prompts exit != 0");
    require(harness::run_cli(config_flag + "evaluate", dir) == 0, "cmd_evaluate exit != 0");

    auto aggregate = harness::slurp(dir / "out" / "eval_aggregate.tsv");
    require_close(tsv_value(aggregate, "bleu1_corpus"), 100.0, 1e-9, "aggregate BLEU-1");
    require_close(tsv_value(aggregate, "bleu1_mean_sentence"), 100.0, 1e-9,
                  "mean sentence BLEU-1");
    require_close(tsv_value(aggregate, "match_cost_total"), 0.0, 1e-9, "match cost");
}

}  // namespace

int main() {
    std::vector<Criterion> criteria = {
        {"template-fidelity", 1.0, criterion_template_fidelity},
        {"loss-oracles", 1.0, criterion_loss_oracles},
        {"hinge-loss-fixture", 1.0, criterion_hinge_fixture},
        {"hungarian-oracle", 10.0, criterion_hungarian_oracle},
        {"diversity-metrics", 5.0, criterion_diversity_metrics},
        {"correlation-pipeline", 5.0, criterion_correlation_pipeline},
        {"moderation-fixtures", 1.0, criterion_moderation_fixtures},
        {"ordering-control", 5.0, criterion_ordering_control},
        {"split-property", 1.0, criterion_split_property},
        {"end-to-end-smoke", 30.0, criterion_end_to_end},
    };

    int failures = 0;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        const auto& criterion = criteria[i];
        auto start = std::chrono::steady_clock::now();
        std::string error;
        try {
            criterion.body();
        } catch (const std::exception& e) {
            error = e.what();
        }
        double seconds =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        if (error.empty() && seconds > criterion.time_limit_seconds)
            error = "runtime " + std::to_string(seconds) + "s exceeds " +
                    std::to_string(criterion.time_limit_seconds) + "s";
        std::ostringstream line;
        line << (error.empty() ? "[PASS] " : "[FAIL] ") << i + 1 << ". " << criterion.name
             << " (" << std::fixed << std::setprecision(3) << seconds << "s)";
        if (!error.empty()) line << ": " << error;
        std::cout << line.str() << "\n";
        if (!error.empty()) ++failures;
    }
    std::cout << (failures == 0 ? "all criteria passed"
                                : std::to_string(failures) + " criterion(s) failed")
              << "\n";
    return failures == 0 ? 0 : 1;
}
