#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "imtk/core.hpp"
#include "imtk/data_model.hpp"

#include <boost/math/distributions/students_t.hpp>

namespace imtk {

// -- tokenization -----------------------------------------------------------------

// Metric-side tokenizer: lowercase, punctuation characters split into their
// own tokens, whitespace collapsed.
inline std::vector<std::string> tokenize(const std::string& text) {
    std::vector<std::string> tokens;
    std::string current;
    auto flush = [&] {
        if (!current.empty()) {
            tokens.push_back(current);
            current.clear();
        }
    };
    for (unsigned char c : text) {
        if (std::isspace(c)) {
            flush();
        } else if (std::ispunct(c)) {
            flush();
            tokens.emplace_back(1, static_cast<char>(c));
        } else {
            current += static_cast<char>(std::tolower(c));
        }
    }
    flush();
    return tokens;
}

// -- BLEU --------------------------------------------------------------------------

// Per-order precisions and scores on the 0..100 scale. BLEU-n is zero as
// soon as any p_1..p_n is zero; no smoothing is applied.
struct BleuScore {
    std::array<double, 4> precisions = {0.0, 0.0, 0.0, 0.0};
    std::array<double, 4> scores = {0.0, 0.0, 0.0, 0.0};
    double brevity_penalty = 1.0;
    bool empty_candidate = false;

    double bleu1() const { return scores[0]; }
    double bleu(std::size_t n) const { return scores.at(n - 1); }
};

namespace detail {

inline std::map<std::vector<std::string>, std::size_t> ngram_counts(
    const std::vector<std::string>& tokens, std::size_t n) {
    std::map<std::vector<std::string>, std::size_t> counts;
    if (tokens.size() < n) return counts;
    for (std::size_t i = 0; i + n <= tokens.size(); ++i)
        ++counts[std::vector<std::string>(tokens.begin() + static_cast<std::ptrdiff_t>(i),
                                          tokens.begin() + static_cast<std::ptrdiff_t>(i + n))];
    return counts;
}

struct BleuStats {
    std::array<std::size_t, 4> matched = {0, 0, 0, 0};
    std::array<std::size_t, 4> total = {0, 0, 0, 0};
    std::size_t candidate_length = 0;
    std::size_t reference_length = 0;  // closest reference length

    void add(const std::vector<std::string>& candidate,
             const std::vector<std::vector<std::string>>& references, std::size_t max_n) {
        candidate_length += candidate.size();
        std::size_t closest = 0;
        std::size_t best_diff = std::numeric_limits<std::size_t>::max();
        for (const auto& ref : references) {
            std::size_t diff = ref.size() > candidate.size() ? ref.size() - candidate.size()
                                                             : candidate.size() - ref.size();
            if (diff < best_diff || (diff == best_diff && ref.size() < closest)) {
                best_diff = diff;
                closest = ref.size();
            }
        }
        reference_length += closest;

        for (std::size_t n = 1; n <= max_n; ++n) {
            auto cand_counts = ngram_counts(candidate, n);
            std::map<std::vector<std::string>, std::size_t> clip;
            for (const auto& ref : references)
                for (const auto& [gram, count] : ngram_counts(ref, n)) {
                    auto& c = clip[gram];
                    c = std::max(c, count);
                }
            for (const auto& [gram, count] : cand_counts) {
                total[n - 1] += count;
                auto it = clip.find(gram);
                if (it != clip.end()) matched[n - 1] += std::min(count, it->second);
            }
        }
    }

    BleuScore score(std::size_t max_n) const {
        BleuScore result;
        if (candidate_length == 0) {
            result.empty_candidate = true;
            return result;
        }
        result.brevity_penalty =
            candidate_length < reference_length
                ? std::exp(1.0 - static_cast<double>(reference_length) /
                                     static_cast<double>(candidate_length))
                : 1.0;
        for (std::size_t n = 1; n <= max_n; ++n) {
            result.precisions[n - 1] =
                total[n - 1] == 0 ? 0.0
                                  : static_cast<double>(matched[n - 1]) /
                                        static_cast<double>(total[n - 1]);
            double log_sum = 0.0;
            bool zero = false;
            for (std::size_t k = 1; k <= n; ++k) {
                if (result.precisions[k - 1] <= 0.0) {
                    zero = true;
                    break;
                }
                log_sum += std::log(result.precisions[k - 1]);
            }
            result.scores[n - 1] =
                zero ? 0.0
                     : 100.0 * result.brevity_penalty *
                           std::exp(log_sum / static_cast<double>(n));
        }
        return result;
    }
};

}  // namespace detail

// Sentence BLEU of a candidate against one or more references.
inline BleuScore bleu(const std::string& candidate,
                      const std::vector<std::string>& references, std::size_t max_n = 4) {
    if (max_n < 1 || max_n > 4) throw std::invalid_argument("bleu: max_n must be 1..4");
    if (references.empty()) throw std::invalid_argument("bleu: no references");
    detail::BleuStats stats;
    std::vector<std::vector<std::string>> ref_tokens;
    for (const auto& r : references) ref_tokens.push_back(tokenize(r));
    stats.add(tokenize(candidate), ref_tokens, max_n);
    return stats.score(max_n);
}

// Corpus-level BLEU: n-gram and length statistics pooled before scoring.
class BleuAccumulator {
public:
    explicit BleuAccumulator(std::size_t max_n = 4) : max_n_(max_n) {}

    void add(const std::string& candidate, const std::vector<std::string>& references) {
        std::vector<std::vector<std::string>> ref_tokens;
        for (const auto& r : references) ref_tokens.push_back(tokenize(r));
        stats_.add(tokenize(candidate), ref_tokens, max_n_);
    }

    BleuScore score() const { return stats_.score(max_n_); }

private:
    std::size_t max_n_;
    detail::BleuStats stats_;
};

// -- interpretation diversity (di) and grounding distance (dg) ----------------------

// di(i_j, i_k) = 100 - BLEU-1 with i_j as candidate and i_k as the single
// reference; the argument order is part of the contract.
inline double di(const std::string& i_j, const std::string& i_k) {
    if (i_j.empty() || i_k.empty()) throw std::invalid_argument("di: empty interpretation");
    return 100.0 - bleu(i_j, {i_k}, 1).bleu1();
}

// Direction-free variant (mean of both argument orders); not the default.
inline double di_symmetric(const std::string& a, const std::string& b) {
    return 0.5 * (di(a, b) + di(b, a));
}

// Counts differing fields among {pres, desc, eval, soa, vi} for two
// judgments of the same entity. Traits compare case-insensitively after
// trimming; an absent field differs from a present one, two absent fields
// are equal.
inline int non_overlap(const MoralJudgment& m_j, const MoralJudgment& m_k) {
    if (m_j.ent != m_k.ent)
        throw std::domain_error("non_overlap: judgments refer to different entities");
    int diff = 0;
    if (m_j.pres != m_k.pres) ++diff;
    if (to_lower(trim(m_j.desc)) != to_lower(trim(m_k.desc))) ++diff;
    if (m_j.eval != m_k.eval) ++diff;
    if (m_j.soa != m_k.soa) ++diff;
    if (m_j.vi != m_k.vi) ++diff;
    return diff;
}

// Grounding distance dg = |a_j - a_k| + (1/Q) * sum_q non_overlap, in [0, 9].
struct GroundingDistance {
    double value = 0.0;
    double attitude_part = 0.0;   // [0, 4]
    double judgment_part = 0.0;   // [0, 5]
};

inline GroundingDistance dg(const ReaderContext& g_j, const ReaderContext& g_k) {
    if (g_j.judgments.size() != g_k.judgments.size())
        throw std::domain_error("dg: contexts cover different entity lists");
    for (std::size_t q = 0; q < g_j.judgments.size(); ++q)
        if (g_j.judgments[q].ent != g_k.judgments[q].ent)
            throw std::domain_error("dg: entity order differs between contexts");

    GroundingDistance out;
    out.attitude_part = std::abs(g_j.attitude.value - g_k.attitude.value);
    const std::size_t q_count = g_j.judgments.size();
    if (q_count > 0) {
        double sum = 0.0;
        for (std::size_t q = 0; q < q_count; ++q)
            sum += non_overlap(g_j.judgments[q], g_k.judgments[q]);
        out.judgment_part = sum / static_cast<double>(q_count);
    }
    out.value = out.attitude_part + out.judgment_part;
    return out;
}

// -- Kuhn-Munkres assignment ---------------------------------------------------------

// Cost of an unmatched row/column when the matrix is not square: the maximum
// of the 100 - BLEU-1 scale.
inline constexpr double kDummyMatchCost = 100.0;

struct MatchResult {
    std::vector<std::pair<std::size_t, std::size_t>> pairs;  // (generated, target)
    std::vector<std::size_t> unmatched_generated;
    std::vector<std::size_t> unmatched_targets;
    double total_cost = 0.0;  // over real pairs only
};

// Minimum-cost perfect assignment via shortest augmenting paths (O(n^3)).
// Rectangular inputs are padded with dummy entries at kDummyMatchCost; dummy
// pairs are reported as unmatched.
inline MatchResult hungarian_match(const std::vector<std::vector<double>>& cost) {
    MatchResult result;
    const std::size_t rows = cost.size();
    const std::size_t cols = rows == 0 ? 0 : cost[0].size();
    if (rows == 0 || cols == 0) return result;
    for (const auto& row : cost) {
        if (row.size() != cols)
            throw std::invalid_argument("hungarian_match: ragged cost matrix");
        for (double c : row)
            if (!std::isfinite(c))
                throw std::invalid_argument("hungarian_match: non-finite cost");
    }

    const std::size_t n = std::max(rows, cols);
    auto at = [&](std::size_t i, std::size_t j) {
        return i < rows && j < cols ? cost[i][j] : kDummyMatchCost;
    };

    const double inf = std::numeric_limits<double>::infinity();
    // 1-indexed potentials; row_of[j] = row assigned to column j.
    std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0);
    std::vector<std::size_t> row_of(n + 1, 0), way(n + 1, 0);
    for (std::size_t i = 1; i <= n; ++i) {
        row_of[0] = i;
        std::size_t j0 = 0;
        std::vector<double> minv(n + 1, inf);
        std::vector<bool> used(n + 1, false);
        do {
            used[j0] = true;
            std::size_t i0 = row_of[j0], j1 = 0;
            double delta = inf;
            for (std::size_t j = 1; j <= n; ++j) {
                if (used[j]) continue;
                double cur = at(i0 - 1, j - 1) - u[i0] - v[j];
                if (cur < minv[j]) {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if (minv[j] < delta) {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for (std::size_t j = 0; j <= n; ++j) {
                if (used[j]) {
                    u[row_of[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
        } while (row_of[j0] != 0);
        do {
            std::size_t j1 = way[j0];
            row_of[j0] = row_of[j1];
            j0 = j1;
        } while (j0 != 0);
    }

    std::vector<bool> generated_matched(rows, false), target_matched(cols, false);
    for (std::size_t j = 1; j <= n; ++j) {
        std::size_t i = row_of[j];
        if (i == 0) continue;
        std::size_t gi = i - 1, tj = j - 1;
        if (gi < rows && tj < cols) {
            result.pairs.emplace_back(gi, tj);
            result.total_cost += cost[gi][tj];
            generated_matched[gi] = true;
            target_matched[tj] = true;
        }
    }
    std::sort(result.pairs.begin(), result.pairs.end());
    for (std::size_t i = 0; i < rows; ++i)
        if (!generated_matched[i]) result.unmatched_generated.push_back(i);
    for (std::size_t j = 0; j < cols; ++j)
        if (!target_matched[j]) result.unmatched_targets.push_back(j);
    return result;
}

// Pairs generated with target interpretations, score(.) = 100 - BLEU-1.
inline MatchResult match_interpretations(const std::vector<std::string>& generated,
                                         const std::vector<std::string>& targets) {
    if (generated.empty() || targets.empty())
        throw std::invalid_argument("match_interpretations: empty input list");
    std::vector<std::vector<double>> cost(generated.size(),
                                          std::vector<double>(targets.size(), 0.0));
    for (std::size_t i = 0; i < generated.size(); ++i)
        for (std::size_t j = 0; j < targets.size(); ++j)
            cost[i][j] = 100.0 - bleu(generated[i], {targets[j]}, 1).bleu1();
    return hungarian_match(cost);
}

// -- ROUGE --------------------------------------------------------------------------

struct RougeScore {
    double rouge1 = 0.0;
    double rouge2 = 0.0;
    double rougeL = 0.0;
    double rougeLsum = 0.0;
};

namespace detail {

inline double f1(double matched, double cand_total, double ref_total) {
    if (cand_total <= 0.0 || ref_total <= 0.0) return 0.0;
    double p = matched / cand_total;
    double r = matched / ref_total;
    return p + r > 0.0 ? 2.0 * p * r / (p + r) : 0.0;
}

inline double ngram_f1(const std::vector<std::string>& cand,
                       const std::vector<std::string>& ref, std::size_t n) {
    auto cc = ngram_counts(cand, n);
    auto rc = ngram_counts(ref, n);
    double matched = 0.0, cand_total = 0.0, ref_total = 0.0;
    for (const auto& [gram, count] : cc) cand_total += count;
    for (const auto& [gram, count] : rc) ref_total += count;
    for (const auto& [gram, count] : cc) {
        auto it = rc.find(gram);
        if (it != rc.end()) matched += std::min(count, it->second);
    }
    return f1(matched, cand_total, ref_total);
}

inline std::size_t lcs_length(const std::vector<std::string>& a,
                              const std::vector<std::string>& b) {
    std::vector<std::size_t> prev(b.size() + 1, 0), curr(b.size() + 1, 0);
    for (std::size_t i = 1; i <= a.size(); ++i) {
        for (std::size_t j = 1; j <= b.size(); ++j)
            curr[j] = a[i - 1] == b[j - 1] ? prev[j - 1] + 1
                                           : std::max(prev[j], curr[j - 1]);
        std::swap(prev, curr);
    }
    return prev[b.size()];
}

// Token positions of b matched by some LCS with a (used by union-LCS).
inline std::vector<bool> lcs_mask(const std::vector<std::string>& a,
                                  const std::vector<std::string>& b) {
    std::vector<std::vector<std::size_t>> dp(a.size() + 1,
                                             std::vector<std::size_t>(b.size() + 1, 0));
    for (std::size_t i = 1; i <= a.size(); ++i)
        for (std::size_t j = 1; j <= b.size(); ++j)
            dp[i][j] = a[i - 1] == b[j - 1] ? dp[i - 1][j - 1] + 1
                                            : std::max(dp[i - 1][j], dp[i][j - 1]);
    std::vector<bool> mask(b.size(), false);
    std::size_t i = a.size(), j = b.size();
    while (i > 0 && j > 0) {
        if (a[i - 1] == b[j - 1]) {
            mask[j - 1] = true;
            --i;
            --j;
        } else if (dp[i - 1][j] >= dp[i][j - 1]) {
            --i;
        } else {
            --j;
        }
    }
    return mask;
}

inline std::vector<std::string> sentence_split(const std::string& text) {
    std::vector<std::string> sentences;
    std::string current;
    for (char c : text) {
        current += c;
        if (c == '.' || c == '!' || c == '?' || c == '\n') {
            if (!trim(current).empty()) sentences.push_back(trim(current));
            current.clear();
        }
    }
    if (!trim(current).empty()) sentences.push_back(trim(current));
    return sentences;
}

}  // namespace detail

// ROUGE-1/2 F1, LCS-based ROUGE-L, and ROUGE-Lsum (union-LCS over sentence
// splits).
inline RougeScore rouge(const std::string& candidate, const std::string& reference) {
    if (candidate.empty() || reference.empty())
        throw std::invalid_argument("rouge: empty text");
    auto cand = tokenize(candidate);
    auto ref = tokenize(reference);

    RougeScore out;
    out.rouge1 = detail::ngram_f1(cand, ref, 1);
    out.rouge2 = detail::ngram_f1(cand, ref, 2);
    out.rougeL = detail::f1(static_cast<double>(detail::lcs_length(cand, ref)),
                            static_cast<double>(cand.size()), static_cast<double>(ref.size()));

    // Union-LCS: for each reference sentence, union over candidate
    // sentences of the LCS-matched token positions.
    auto cand_sentences = detail::sentence_split(candidate);
    auto ref_sentences = detail::sentence_split(reference);
    double hits = 0.0;
    for (const auto& rs : ref_sentences) {
        auto ref_tokens = tokenize(rs);
        std::vector<bool> covered(ref_tokens.size(), false);
        for (const auto& cs : cand_sentences) {
            auto mask = detail::lcs_mask(tokenize(cs), ref_tokens);
            for (std::size_t i = 0; i < mask.size(); ++i)
                if (mask[i]) covered[i] = true;
        }
        for (bool b : covered)
            if (b) hits += 1.0;
    }
    out.rougeLsum =
        detail::f1(hits, static_cast<double>(cand.size()), static_cast<double>(ref.size()));
    return out;
}

// -- unigram perplexity ----------------------------------------------------------------

// Add-one smoothed unigram model estimated on the reference corpus; all
// unseen tokens share one reserved type. PP = exp(mean token NLL).
inline double unigram_perplexity(const std::vector<std::string>& texts,
                                 const std::vector<std::string>& reference_corpus) {
    if (reference_corpus.empty())
        throw std::invalid_argument("unigram_perplexity: empty reference corpus");
    std::map<std::string, double> counts;
    double total = 0.0;
    for (const auto& text : reference_corpus)
        for (const auto& tok : tokenize(text)) {
            counts[tok] += 1.0;
            total += 1.0;
        }
    if (total == 0.0)
        throw std::invalid_argument("unigram_perplexity: reference corpus has no tokens");

    const double denom = total + static_cast<double>(counts.size()) + 1.0;
    double nll_sum = 0.0;
    double n_tokens = 0.0;
    for (const auto& text : texts)
        for (const auto& tok : tokenize(text)) {
            auto it = counts.find(tok);
            double c = it == counts.end() ? 0.0 : it->second;
            nll_sum += -std::log((c + 1.0) / denom);
            n_tokens += 1.0;
        }
    if (n_tokens == 0.0)
        throw std::invalid_argument("unigram_perplexity: no tokens to score");
    return std::exp(nll_sum / n_tokens);
}

// -- Pearson correlation -----------------------------------------------------------------

struct PearsonReport {
    double r = 0.0;
    double p_value = 1.0;
    std::size_t n = 0;
};

inline PearsonReport pearson(const std::vector<double>& x, const std::vector<double>& y) {
    if (x.size() != y.size()) throw std::invalid_argument("pearson: length mismatch");
    const std::size_t n = x.size();
    if (n < 3) throw std::invalid_argument("pearson: need at least 3 observations");

    double mean_x = 0.0, mean_y = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        mean_x += x[i];
        mean_y += y[i];
    }
    mean_x /= static_cast<double>(n);
    mean_y /= static_cast<double>(n);

    double sxy = 0.0, sxx = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        double dx = x[i] - mean_x, dy = y[i] - mean_y;
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if (sxx <= 0.0 || syy <= 0.0)
        throw std::domain_error("pearson: zero variance, correlation undefined");

    PearsonReport report;
    report.n = n;
    report.r = sxy / std::sqrt(sxx * syy);

    double r2 = report.r * report.r;
    if (r2 >= 1.0) {
        report.p_value = 0.0;
    } else {
        double t = report.r * std::sqrt(static_cast<double>(n - 2) / (1.0 - r2));
        boost::math::students_t dist(static_cast<double>(n - 2));
        report.p_value = 2.0 * boost::math::cdf(dist, -std::abs(t));
    }
    return report;
}

// One reader pair of one sentence: its grounding contexts and the two
// interpretations whose diversity is being explained.
struct DiversityRecord {
    ReaderContext g_j;
    ReaderContext g_k;
    std::string i_j;
    std::string i_k;
};

// Pearson correlation between grounding distance dg and interpretation
// diversity di over all supplied reader pairs.
inline PearsonReport diversity_grounding_report(const std::vector<DiversityRecord>& records) {
    if (records.size() < 3)
        throw std::invalid_argument("diversity_grounding_report: need at least 3 pairs");
    std::vector<double> dgs, dis;
    dgs.reserve(records.size());
    dis.reserve(records.size());
    for (const auto& rec : records) {
        dgs.push_back(dg(rec.g_j, rec.g_k).value);
        dis.push_back(di(rec.i_j, rec.i_k));
    }
    return pearson(dgs, dis);
}

// -- trained-metric plugin hook -------------------------------------------------------------

enum class MetricStatus { ok, skipped, failed };

struct MetricOutcome {
    MetricStatus status = MetricStatus::skipped;
    double value = 0.0;
    std::string note;
};

using MetricFn = std::function<double(const std::string& candidate,
                                      const std::string& reference)>;

// Report-only scorer plugins (MoverScore-style backends live outside this
// library). A missing plugin downgrades to a skip notice; a throwing plugin
// is recorded and the run continues.
class MetricRegistry {
public:
    void register_metric(const std::string& name, MetricFn fn) {
        metrics_[name] = std::move(fn);
    }

    bool has(const std::string& name) const { return metrics_.count(name) > 0; }

    MetricOutcome run(const std::string& name, const std::string& candidate,
                      const std::string& reference) const {
        auto it = metrics_.find(name);
        if (it == metrics_.end())
            return {MetricStatus::skipped, 0.0, "metric \"" + name + "\" not registered"};
        try {
            return {MetricStatus::ok, it->second(candidate, reference), ""};
        } catch (const std::exception& e) {
            return {MetricStatus::failed, 0.0, e.what()};
        }
    }

    std::vector<std::string> names() const {
        std::vector<std::string> out;
        for (const auto& [name, fn] : metrics_) out.push_back(name);
        return out;
    }

private:
    std::map<std::string, MetricFn> metrics_;
};

inline MetricRegistry& metric_registry() {
    static MetricRegistry registry;
    return registry;
}

}  // namespace imtk
