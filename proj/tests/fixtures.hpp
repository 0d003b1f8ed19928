#pragma once

// Shared record builders for tests.

#include <string>
#include <vector>

#include "imtk/data_model.hpp"

namespace fixtures {

inline imtk::MoralJudgment absent_judgment(const std::string& ent) {
    imtk::MoralJudgment m;
    m.ent = ent;
    m.pres = false;
    return m;
}

inline imtk::MoralJudgment greedy_judgment(const std::string& ent = "she") {
    imtk::MoralJudgment m;
    m.ent = ent;
    m.pres = true;
    m.desc = "greedy";
    m.eval = imtk::Evaluation::bad;
    m.soa = imtk::SphereOfAction::giving_taking_small_money;
    m.vi = imtk::Appropriateness::vice_of_excess;
    return m;
}

inline imtk::ReaderContext context(int attitude,
                                   std::vector<imtk::MoralJudgment> judgments = {}) {
    imtk::ReaderContext ctx;
    ctx.attitude.value = attitude;
    ctx.judgments = std::move(judgments);
    return ctx;
}

inline imtk::AnnotatedSentence record(
    const std::string& id, const std::string& title, const std::string& sentence,
    std::vector<std::string> entities,
    std::vector<std::pair<imtk::ReaderContext, std::string>> readers) {
    imtk::AnnotatedSentence rec;
    rec.id = id;
    rec.title = title;
    rec.sentence = sentence;
    rec.entities = std::move(entities);
    for (auto& [ctx, interp] : readers) rec.readers.push_back({ctx, interp});
    return rec;
}

// Minimal valid record: one reader, one unjudged entity.
inline imtk::AnnotatedSentence minimal_record(const std::string& id = "s1",
                                              const std::string& title = "T",
                                              const std::string& sentence = "S") {
    return record(id, title, sentence, {"she"},
                  {{context(3, {absent_judgment("she")}), "an interpretation"}});
}

}  // namespace fixtures
