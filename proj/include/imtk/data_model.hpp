#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "imtk/core.hpp"

#include <json.hpp>

namespace imtk {

// -- attitude -----------------------------------------------------------------

// Reader attitude towards the author, five-point Likert.
struct Attitude {
    int value = 3;  // 1..5

    bool in_range() const { return value >= 1 && value <= 5; }
};

inline const std::array<std::string, 5>& attitude_labels() {
    static const std::array<std::string, 5> labels = {
        "very negative", "negative", "neutral", "positive", "very positive"};
    return labels;
}

inline std::string attitude_label(int value) {
    if (value < 1 || value > 5)
        throw std::domain_error("attitude value out of range: " + std::to_string(value));
    return attitude_labels()[static_cast<std::size_t>(value - 1)];
}

inline int attitude_value(std::string_view label) {
    const auto& labels = attitude_labels();
    for (std::size_t i = 0; i < labels.size(); ++i)
        if (labels[i] == label) return static_cast<int>(i + 1);
    throw std::domain_error("unknown attitude label: " + std::string(label));
}

// -- Virtue Ethics taxonomy ----------------------------------------------------

enum class SphereOfAction {
    confidence_fear_uncertainty,
    pleasures_of_the_body,
    giving_taking_small_money,
    giving_taking_added_value,
    pride_honour_as_cause,
    ambition_honour_as_goal,
    anger,
    pleasure_and_pain_of_others,
    truth_honesty_about_oneself,
    amusing_conversation,
};

enum class Appropriateness {
    vice_of_deficiency,
    virtue_of_mean,
    vice_of_excess,
};

enum class Evaluation { good, bad };

namespace detail {

struct SoaRow {
    SphereOfAction id;
    std::string_view label;  // canonical, lowercased context name
    std::array<std::string_view, 3> traits;  // deficiency, mean, excess
};

inline const std::array<SoaRow, 10>& soa_table() {
    static const std::array<SoaRow, 10> table = {{
        {SphereOfAction::confidence_fear_uncertainty, "confidence, fear, uncertainty",
         {"Cowardice", "Courage", "Rashness"}},
        {SphereOfAction::pleasures_of_the_body, "pleasures of the body",
         {"Insensibility", "Temperance", "Profligacy"}},
        {SphereOfAction::giving_taking_small_money, "giving & taking: small money",
         {"Stinginess", "Liberality", "Prodigality"}},
        {SphereOfAction::giving_taking_added_value, "giving & taking: added value",
         {"Meanness", "Magnificence", "Vulgarity"}},
        {SphereOfAction::pride_honour_as_cause, "pride, honour as cause",
         {"Little-mindedness", "High-mindedness", "Vanity"}},
        {SphereOfAction::ambition_honour_as_goal, "ambition, honour as goal",
         {"Lack of ambition", "Proper ambition", "Over-ambition"}},
        {SphereOfAction::anger, "anger", {"Spiritlessness", "Gentleness", "Wrathfulness"}},
        {SphereOfAction::pleasure_and_pain_of_others, "pleasure and pain of others",
         {"Cross, contentious", "Agreeableness", "Flattery"}},
        {SphereOfAction::truth_honesty_about_oneself, "truth, honesty about oneself",
         {"Irony", "Truthfulness", "Boastfulness"}},
        {SphereOfAction::amusing_conversation, "amusing conversation",
         {"Boorishness", "Wittiness", "Buffoonery"}},
    }};
    return table;
}

}  // namespace detail

inline std::string soa_label(SphereOfAction soa) {
    for (const auto& row : detail::soa_table())
        if (row.id == soa) return std::string(row.label);
    throw std::domain_error("invalid sphere of action");
}

inline std::optional<SphereOfAction> soa_from_label(std::string_view label) {
    auto lowered = to_lower(trim(label));
    for (const auto& row : detail::soa_table())
        if (row.label == lowered) return row.id;
    return std::nullopt;
}

inline std::string appropriateness_label(Appropriateness vi) {
    switch (vi) {
        case Appropriateness::vice_of_deficiency: return "vice of deficiency";
        case Appropriateness::virtue_of_mean: return "virtue of mean";
        case Appropriateness::vice_of_excess: return "vice of excess";
    }
    throw std::domain_error("invalid appropriateness");
}

inline std::optional<Appropriateness> appropriateness_from_label(std::string_view label) {
    auto lowered = to_lower(trim(label));
    if (lowered == "vice of deficiency") return Appropriateness::vice_of_deficiency;
    if (lowered == "virtue of mean") return Appropriateness::virtue_of_mean;
    if (lowered == "vice of excess") return Appropriateness::vice_of_excess;
    return std::nullopt;
}

inline std::string evaluation_label(Evaluation e) {
    return e == Evaluation::good ? "good" : "bad";
}

inline std::optional<Evaluation> evaluation_from_label(std::string_view label) {
    auto lowered = to_lower(trim(label));
    if (lowered == "good") return Evaluation::good;
    if (lowered == "bad") return Evaluation::bad;
    return std::nullopt;
}

// Trait name for a (sphere, appropriateness) cell, e.g. (anger, excess) ->
// "Wrathfulness". Used for documentation and report rendering.
inline std::string taxonomy_lookup(SphereOfAction soa, Appropriateness vi) {
    for (const auto& row : detail::soa_table())
        if (row.id == soa) return std::string(row.traits[static_cast<std::size_t>(vi)]);
    throw std::domain_error("invalid sphere of action");
}

// -- annotation records --------------------------------------------------------

// One reader's inferred trait tuple for one entity. When pres is false the
// descriptive fields stay empty/absent.
struct MoralJudgment {
    std::string ent;
    bool pres = false;
    std::string desc;
    std::optional<Evaluation> eval;
    std::optional<SphereOfAction> soa;
    std::optional<Appropriateness> vi;

    bool operator==(const MoralJudgment&) const = default;
};

// A reader's social grounding of one sentence: attitude plus one judgment per
// unique entity, in order of appearance.
struct ReaderContext {
    Attitude attitude;
    std::vector<MoralJudgment> judgments;

    // Number of entities actually judged (pres = true).
    std::size_t judged_count() const {
        std::size_t n = 0;
        for (const auto& j : judgments)
            if (j.pres) ++n;
        return n;
    }

    bool operator==(const ReaderContext&) const = default;
};

struct ReaderRecord {
    ReaderContext context;
    std::string interpretation;

    bool operator==(const ReaderRecord&) const = default;
};

struct AnnotatedSentence {
    std::string id;
    std::string title;
    std::string sentence;
    std::vector<std::string> entities;
    std::vector<ReaderRecord> readers;

    bool operator==(const AnnotatedSentence&) const = default;
};

struct DatasetSplit {
    std::vector<AnnotatedSentence> train;
    std::vector<AnnotatedSentence> validation;
    std::vector<AnnotatedSentence> test;
    std::uint64_t seed = 0;
    std::vector<std::string> warnings;
};

// -- JSON (line-delimited) serialization ----------------------------------------

namespace detail {

inline void check_known_keys(const nlohmann::json& obj,
                             const std::set<std::string>& known,
                             bool strict, const std::string& where) {
    if (!strict) return;
    for (const auto& item : obj.items())
        if (!known.count(item.key()))
            throw std::invalid_argument("unknown key \"" + item.key() + "\" in " + where);
}

inline MoralJudgment judgment_from_json(const nlohmann::json& j, bool strict) {
    check_known_keys(j, {"entity", "present", "trait", "evaluation", "soa", "appropriateness"},
                     strict, "judgment");
    MoralJudgment m;
    m.ent = j.at("entity").get<std::string>();
    m.pres = j.at("present").get<bool>();
    if (j.contains("trait")) m.desc = j["trait"].get<std::string>();
    if (j.contains("evaluation") && !j["evaluation"].is_null()) {
        auto e = evaluation_from_label(j["evaluation"].get<std::string>());
        if (!e) throw std::invalid_argument("bad evaluation label: " + j["evaluation"].dump());
        m.eval = e;
    }
    if (j.contains("soa") && !j["soa"].is_null()) {
        auto s = soa_from_label(j["soa"].get<std::string>());
        if (!s) throw std::invalid_argument("bad soa label: " + j["soa"].dump());
        m.soa = s;
    }
    if (j.contains("appropriateness") && !j["appropriateness"].is_null()) {
        auto v = appropriateness_from_label(j["appropriateness"].get<std::string>());
        if (!v)
            throw std::invalid_argument("bad appropriateness label: " +
                                        j["appropriateness"].dump());
        m.vi = v;
    }
    return m;
}

inline nlohmann::json judgment_to_json(const MoralJudgment& m) {
    nlohmann::json j;
    j["entity"] = m.ent;
    j["present"] = m.pres;
    if (!m.desc.empty()) j["trait"] = m.desc;
    if (m.eval) j["evaluation"] = evaluation_label(*m.eval);
    if (m.soa) j["soa"] = soa_label(*m.soa);
    if (m.vi) j["appropriateness"] = appropriateness_label(*m.vi);
    return j;
}

}  // namespace detail

inline AnnotatedSentence record_from_json(const nlohmann::json& j, bool strict = false) {
    detail::check_known_keys(j, {"id", "title", "sentence", "entities", "readers"}, strict,
                             "record");
    AnnotatedSentence rec;
    rec.id = j.at("id").get<std::string>();
    rec.title = j.at("title").get<std::string>();
    rec.sentence = j.at("sentence").get<std::string>();
    for (const auto& e : j.at("entities")) rec.entities.push_back(e.get<std::string>());
    for (const auto& r : j.at("readers")) {
        detail::check_known_keys(r, {"attitude", "interpretation", "judgments"}, strict,
                                 "reader");
        ReaderRecord reader;
        reader.context.attitude.value = r.at("attitude").get<int>();
        reader.interpretation = r.at("interpretation").get<std::string>();
        if (r.contains("judgments"))
            for (const auto& m : r["judgments"])
                reader.context.judgments.push_back(detail::judgment_from_json(m, strict));
        rec.readers.push_back(std::move(reader));
    }
    std::set<std::string> ents(rec.entities.begin(), rec.entities.end());
    for (const auto& r : rec.readers)
        for (const auto& m : r.context.judgments)
            if (!ents.count(m.ent))
                throw std::invalid_argument("judgment entity \"" + m.ent +
                                            "\" is not in the entity list");
    return rec;
}

inline nlohmann::json record_to_json(const AnnotatedSentence& rec) {
    nlohmann::json j;
    j["id"] = rec.id;
    j["title"] = rec.title;
    j["sentence"] = rec.sentence;
    j["entities"] = rec.entities;
    j["readers"] = nlohmann::json::array();
    for (const auto& r : rec.readers) {
        nlohmann::json rj;
        rj["attitude"] = r.context.attitude.value;
        rj["interpretation"] = r.interpretation;
        rj["judgments"] = nlohmann::json::array();
        for (const auto& m : r.context.judgments)
            rj["judgments"].push_back(detail::judgment_to_json(m));
        j["readers"].push_back(std::move(rj));
    }
    return j;
}

// Parses a line-delimited dataset stream. Order is preserved; a malformed
// line or a duplicate id aborts with the offending line number.
inline std::vector<AnnotatedSentence> parse_dataset(std::istream& in, bool strict = false) {
    std::vector<AnnotatedSentence> records;
    std::set<std::string> seen_ids;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty()) continue;
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
        } catch (const nlohmann::json::exception& e) {
            throw ParseError(line_no, std::string("malformed record: ") + e.what());
        }
        AnnotatedSentence rec;
        try {
            rec = record_from_json(j, strict);
        } catch (const std::exception& e) {
            throw ParseError(line_no, e.what());
        }
        if (!seen_ids.insert(rec.id).second)
            throw ParseError(line_no, "duplicate id \"" + rec.id + "\"");
        records.push_back(std::move(rec));
    }
    return records;
}

inline void write_dataset(std::ostream& out, const std::vector<AnnotatedSentence>& records) {
    for (const auto& rec : records) out << record_to_json(rec).dump() << "\n";
}

struct ParseOutcome {
    std::vector<AnnotatedSentence> records;
    std::vector<std::string> errors;  // one entry per rejected line
};

// Collects every parseable record instead of aborting at the first bad line.
// Used by the validation command so one report covers the whole file.
inline ParseOutcome parse_dataset_lenient(std::istream& in, bool strict = false) {
    ParseOutcome outcome;
    std::set<std::string> seen_ids;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty()) continue;
        try {
            auto rec = record_from_json(nlohmann::json::parse(line), strict);
            if (!seen_ids.insert(rec.id).second)
                throw std::invalid_argument("duplicate id \"" + rec.id + "\"");
            outcome.records.push_back(std::move(rec));
        } catch (const std::exception& e) {
            outcome.errors.push_back("line " + std::to_string(line_no) + ": " + e.what());
        }
    }
    return outcome;
}

// -- validation -----------------------------------------------------------------

struct ValidationReport {
    std::vector<std::string> errors;
    std::vector<std::string> warnings;

    bool ok() const { return errors.empty(); }
};

// Checks every schema invariant of one record. Reader counts below
// min_readers are warnings only, so desk-scale fixtures stay usable.
inline ValidationReport validate_record(const AnnotatedSentence& rec,
                                        std::size_t min_readers = 5) {
    ValidationReport report;
    auto err = [&](const std::string& msg) { report.errors.push_back(rec.id + ": " + msg); };

    if (rec.id.empty()) report.errors.push_back("record with empty id");
    if (rec.title.empty()) err("empty title");
    if (rec.sentence.empty()) err("empty sentence");
    if (contains_reserved_token(rec.title)) err("title contains a reserved token");
    if (contains_reserved_token(rec.sentence)) err("sentence contains a reserved token");

    std::set<std::string> entity_set(rec.entities.begin(), rec.entities.end());
    if (entity_set.size() != rec.entities.size()) err("duplicate entity mentions");

    if (rec.readers.empty()) err("no readers");
    if (rec.readers.size() < min_readers)
        report.warnings.push_back(rec.id + ": only " + std::to_string(rec.readers.size()) +
                                  " readers (expected at least " +
                                  std::to_string(min_readers) + ")");

    for (std::size_t ri = 0; ri < rec.readers.size(); ++ri) {
        const auto& reader = rec.readers[ri];
        const std::string who = "reader " + std::to_string(ri);
        if (!reader.context.attitude.in_range())
            err(who + ": attitude out of range (" +
                std::to_string(reader.context.attitude.value) + ")");
        if (reader.interpretation.empty()) err(who + ": empty interpretation");
        if (contains_reserved_token(reader.interpretation))
            err(who + ": interpretation contains a reserved token");

        if (reader.context.judgments.size() != rec.entities.size())
            err(who + ": " + std::to_string(reader.context.judgments.size()) +
                " judgments for " + std::to_string(rec.entities.size()) + " entities");
        for (std::size_t qi = 0; qi < reader.context.judgments.size(); ++qi) {
            const auto& m = reader.context.judgments[qi];
            if (!entity_set.count(m.ent))
                err(who + ": judgment entity \"" + m.ent + "\" not in the entity list");
            else if (qi < rec.entities.size() && m.ent != rec.entities[qi])
                err(who + ": judgment " + std::to_string(qi) +
                    " out of entity appearance order");
            if (m.pres) {
                if (trim(m.desc).empty()) err(who + ": present judgment with empty trait");
                if (contains_reserved_token(m.desc))
                    err(who + ": trait contains a reserved token");
            } else {
                if (!m.desc.empty() || m.eval || m.soa || m.vi)
                    err(who + ": absent judgment for \"" + m.ent +
                        "\" carries descriptive fields");
            }
        }
    }
    return report;
}

inline ValidationReport validate_dataset(const std::vector<AnnotatedSentence>& records,
                                         std::size_t min_readers = 5) {
    ValidationReport report;
    for (const auto& rec : records) {
        auto r = validate_record(rec, min_readers);
        report.errors.insert(report.errors.end(), r.errors.begin(), r.errors.end());
        report.warnings.insert(report.warnings.end(), r.warnings.begin(), r.warnings.end());
    }
    return report;
}

// -- title-stratified split -------------------------------------------------------

struct SplitRatios {
    double train = 0.8;
    double validation = 0.1;
    double test = 0.1;
};

// Whole title-groups are assigned greedily, largest group first, to the split
// with the biggest remaining sentence deficit. Deterministic for a fixed seed.
inline DatasetSplit stratified_split(const std::vector<AnnotatedSentence>& data,
                                     SplitRatios ratios, std::uint64_t seed) {
    if (data.empty()) throw std::invalid_argument("stratified_split: empty dataset");
    double sum = ratios.train + ratios.validation + ratios.test;
    if (std::abs(sum - 1.0) > 1e-9)
        throw std::invalid_argument("stratified_split: ratios must sum to 1");

    std::map<std::string, std::vector<std::size_t>> by_title;
    std::vector<std::string> title_order;
    for (std::size_t i = 0; i < data.size(); ++i) {
        auto [it, inserted] = by_title.try_emplace(data[i].title);
        if (inserted) title_order.push_back(data[i].title);
        it->second.push_back(i);
    }

    DatasetSplit split;
    split.seed = seed;
    std::size_t wanted_splits = (ratios.train > 0) + (ratios.validation > 0) + (ratios.test > 0);
    if (title_order.size() < wanted_splits)
        split.warnings.push_back("only " + std::to_string(title_order.size()) +
                                 " distinct title(s) for " + std::to_string(wanted_splits) +
                                 " splits; some splits stay empty");

    // Shuffle first so equal-sized groups land in seed-dependent order, then
    // stable-sort by size descending.
    seeded_shuffle(title_order, seed);
    std::stable_sort(title_order.begin(), title_order.end(),
                     [&](const std::string& a, const std::string& b) {
                         return by_title[a].size() > by_title[b].size();
                     });

    const double total = static_cast<double>(data.size());
    std::array<double, 3> target = {ratios.train * total, ratios.validation * total,
                                    ratios.test * total};
    std::array<double, 3> assigned = {0.0, 0.0, 0.0};
    std::array<std::vector<AnnotatedSentence>*, 3> buckets = {&split.train, &split.validation,
                                                              &split.test};

    for (const auto& title : title_order) {
        const auto& members = by_title[title];
        std::size_t best = 0;
        double best_deficit = target[0] - assigned[0];
        for (std::size_t k = 1; k < 3; ++k) {
            double deficit = target[k] - assigned[k];
            if (deficit > best_deficit + 1e-12) {
                best = k;
                best_deficit = deficit;
            }
        }
        for (auto idx : members) buckets[best]->push_back(data[idx]);
        assigned[best] += static_cast<double>(members.size());
    }
    return split;
}

}  // namespace imtk
