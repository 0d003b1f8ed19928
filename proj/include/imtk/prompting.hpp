#pragma once

#include <string>
#include <utility>
#include <vector>

#include "imtk/core.hpp"
#include "imtk/data_model.hpp"

namespace imtk {

// Rendered input template. Always carries exactly three "<sep>" separators:
// Title | Attitude | Moral Judgments | Sentence.
struct PromptString {
    std::string text;
    std::size_t reader_count = 0;
    GenerationMode mode = GenerationMode::one_to_one;
};

// Target side of a training pair. In one-to-many mode the J interpretations
// are joined by "<reader>" with no extra whitespace.
struct TargetString {
    std::string text;
    GenerationMode mode = GenerationMode::one_to_one;
};

namespace detail {

inline void reject_reserved(std::string_view text, const char* what) {
    if (contains_reserved_token(text))
        throw std::invalid_argument(std::string(what) + " contains a reserved token");
}

}  // namespace detail

// Renders one judged entity as a parenthesized clause:
//   "(ent = desc, which is a <eval> character trait and a <vi> related to <soa>.)"
// Absent variables elide their clause; dangling connectors left behind by an
// elision (", which is", " and") are trimmed so the sentence stays natural.
// A judgment with every descriptive field absent renders "= unspecified"
// instead of a bare entity name.
inline std::string render_judgment_phrase(const MoralJudgment& m) {
    if (!m.pres)
        throw std::domain_error("render_judgment_phrase: judgment has pres = false");
    detail::reject_reserved(m.ent, "entity");
    detail::reject_reserved(m.desc, "trait");

    const bool has_desc = !trim(m.desc).empty();
    const bool has_eval = m.eval.has_value();
    const bool has_vi = m.vi.has_value();
    const bool has_soa = m.soa.has_value();

    if (!has_desc && !has_eval && !has_vi && !has_soa)
        return "(" + m.ent + " = unspecified.)";

    std::vector<std::string> parts;
    parts.push_back(m.ent);
    if (has_desc) parts.push_back("= " + trim(m.desc) + ", which is");
    if (has_eval) parts.push_back("a " + evaluation_label(*m.eval) + " character trait and");
    if (has_vi) parts.push_back("a " + appropriateness_label(*m.vi));
    if (has_soa) parts.push_back("related to " + soa_label(*m.soa));

    std::string body = parts[0];
    for (std::size_t i = 1; i < parts.size(); ++i) body += " " + parts[i];
    if (body.size() >= 10 && body.substr(body.size() - 10) == ", which is")
        body.erase(body.size() - 10);
    if (body.size() >= 4 && body.substr(body.size() - 4) == " and")
        body.erase(body.size() - 4);
    return "(" + body + ".)";
}

// Renders the attitude and judgments subtemplates for J readers. Attitude
// labels each end with "."; per-reader judgment groups are joined by single
// spaces, a reader with no judged entity contributes "None", and when no
// reader judges anything the whole segment is "Moral Judgments: None".
inline std::pair<std::string, std::string> render_context(
    const std::vector<ReaderContext>& contexts) {
    if (contexts.empty()) throw std::domain_error("render_context: no reader contexts");

    std::string attitudes = "Attitude:";
    for (const auto& ctx : contexts)
        attitudes += " " + attitude_label(ctx.attitude.value) + ".";

    bool any_judged = false;
    for (const auto& ctx : contexts)
        if (ctx.judged_count() > 0) any_judged = true;

    std::string judgments = "Moral Judgments:";
    if (!any_judged) {
        judgments += " None";
    } else {
        for (const auto& ctx : contexts) {
            if (ctx.judged_count() == 0) {
                judgments += " None";
                continue;
            }
            std::string group;
            for (const auto& m : ctx.judgments)
                if (m.pres) group += render_judgment_phrase(m);
            judgments += " " + group;
        }
    }
    return {attitudes, judgments};
}

// Completes the fixed input template:
//   "Title: {ti} <sep> {attitudes} <sep> {judgments} <sep> Sentence: {s}"
// Readers are positionally aligned across the attitude and judgment segments.
inline PromptString build_prompt(const std::string& title, const std::string& sentence,
                                 const std::vector<ReaderContext>& contexts) {
    if (trim(title).empty()) throw std::invalid_argument("build_prompt: empty title");
    if (trim(sentence).empty()) throw std::invalid_argument("build_prompt: empty sentence");
    detail::reject_reserved(title, "title");
    detail::reject_reserved(sentence, "sentence");

    auto [attitudes, judgments] = render_context(contexts);
    PromptString prompt;
    prompt.reader_count = contexts.size();
    prompt.mode =
        contexts.size() == 1 ? GenerationMode::one_to_one : GenerationMode::one_to_many;
    prompt.text = "Title: " + title + " " + std::string(kSepToken) + " " + attitudes + " " +
                  std::string(kSepToken) + " " + judgments + " " + std::string(kSepToken) +
                  " Sentence: " + sentence;
    return prompt;
}

// One-to-one targets are the single interpretation verbatim; one-to-many
// targets concatenate all J interpretations with "<reader>".
inline TargetString build_target(const std::vector<std::string>& interpretations,
                                 GenerationMode mode) {
    if (interpretations.empty())
        throw std::domain_error("build_target: no interpretations");
    if (mode == GenerationMode::one_to_one && interpretations.size() != 1)
        throw std::domain_error("build_target: one_to_one needs exactly one interpretation");
    for (const auto& text : interpretations) detail::reject_reserved(text, "interpretation");

    TargetString target;
    target.mode = mode;
    if (mode == GenerationMode::one_to_one) {
        target.text = interpretations.front();
    } else {
        for (std::size_t i = 0; i < interpretations.size(); ++i) {
            if (i > 0) target.text += kReaderToken;
            target.text += interpretations[i];
        }
    }
    return target;
}

// Inverse of build_target for one-to-many strings.
inline std::vector<std::string> split_target(const std::string& text) {
    return split_on(text, kReaderToken);
}

}  // namespace imtk
