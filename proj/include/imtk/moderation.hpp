#pragma once

#include <array>
#include <atomic>
#include <chrono>
#include <cmath>
#include <condition_variable>
#include <cstdint>
#include <fstream>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <ostream>
#include <set>
#include <string>
#include <thread>
#include <vector>

#include "imtk/core.hpp"

#include <json.hpp>

namespace imtk {

// Attribute scores in [0, 1] as returned by a Perspective-style service.
struct ToxicityScores {
    double toxicity = 0.0;
    double insult = 0.0;
    double identity_attack = 0.0;

    void validate() const {
        for (double v : {toxicity, insult, identity_attack})
            if (!(v >= 0.0 && v <= 1.0))
                throw std::domain_error("toxicity score out of [0, 1]");
    }

    double get(const std::string& attribute) const {
        if (attribute == "toxicity") return toxicity;
        if (attribute == "insult") return insult;
        if (attribute == "identity_attack") return identity_attack;
        throw std::domain_error("unknown attribute: " + attribute);
    }
};

inline const std::vector<std::string>& toxicity_attributes() {
    static const std::vector<std::string> attrs = {"toxicity", "insult", "identity_attack"};
    return attrs;
}

enum class ClusterSource { human, model };

inline std::string to_string(ClusterSource s) {
    return s == ClusterSource::human ? "human" : "model";
}

struct ScoredText {
    std::string text;
    ToxicityScores scores;
};

// A sentence together with its interpretation set; the unit of the flag
// analyses.
struct InterpretationCluster {
    std::string id;
    ScoredText sentence;
    std::vector<ScoredText> interpretations;
    ClusterSource source = ClusterSource::human;
};

// -- scorer clients ---------------------------------------------------------------

// Scoring failure. Transient failures are retried by ResilientScorer;
// permanent ones (or exhausted retries) surface to the caller.
class ScoringError : public std::runtime_error {
public:
    ScoringError(const std::string& what, bool transient, bool rate_limited = false)
        : std::runtime_error(what), transient_(transient), rate_limited_(rate_limited) {}

    bool transient() const { return transient_; }
    bool rate_limited() const { return rate_limited_; }

private:
    bool transient_;
    bool rate_limited_;
};

class ScorerClient {
public:
    virtual ~ScorerClient() = default;
    virtual std::string name() const = 0;
    virtual ToxicityScores score(const std::string& text) = 0;
};

// Precondition wrapper used by all call sites.
inline ToxicityScores score_text(ScorerClient& client, const std::string& text) {
    if (trim(text).empty())
        throw std::invalid_argument("score_text: empty text");
    auto scores = client.score(text);
    scores.validate();
    return scores;
}

// Cache keys use a normalized form so trivially re-spelled duplicates do not
// burn API quota: trimmed, lowercased, inner whitespace collapsed.
inline std::string normalize_for_cache(const std::string& text) {
    std::string out;
    bool pending_space = false;
    for (unsigned char c : to_lower(trim(text))) {
        if (std::isspace(c)) {
            pending_space = !out.empty();
        } else {
            if (pending_space) out += ' ';
            pending_space = false;
            out += static_cast<char>(c);
        }
    }
    return out;
}

inline std::uint64_t cache_key(const std::string& text) {
    return fnv1a_hash(normalize_for_cache(text));
}

// File-backed mock scorer: a JSON object mapping text to its three scores.
// Unknown texts produce a permanent scoring error.
class MockScorerClient : public ScorerClient {
public:
    MockScorerClient() = default;

    explicit MockScorerClient(const std::string& path) {
        std::ifstream in(path);
        if (!in) throw std::runtime_error("cannot read mock score file: " + path);
        load_json(nlohmann::json::parse(in));
    }

    explicit MockScorerClient(const nlohmann::json& table) { load_json(table); }

    void add(const std::string& text, ToxicityScores scores) {
        table_[cache_key(text)] = scores;
    }

    std::string name() const override { return "mock"; }

    ToxicityScores score(const std::string& text) override {
        auto it = table_.find(cache_key(text));
        if (it == table_.end())
            throw ScoringError("mock scorer has no entry for: " + text, /*transient=*/false);
        return it->second;
    }

private:
    void load_json(const nlohmann::json& table) {
        for (const auto& item : table.items()) {
            const auto& v = item.value();
            ToxicityScores s{v.at("toxicity").get<double>(), v.at("insult").get<double>(),
                             v.at("identity_attack").get<double>()};
            s.validate();
            table_[cache_key(item.key())] = s;
        }
    }

    std::map<std::uint64_t, ToxicityScores> table_;
};

struct RetryPolicy {
    std::size_t max_retries = 3;
    std::chrono::milliseconds initial_backoff{100};
    double backoff_multiplier = 2.0;
};

// Minimum-interval rate limiter (qps ceiling) shared by all threads using
// one client.
class RateLimiter {
public:
    explicit RateLimiter(double qps) {
        if (qps > 0.0)
            min_interval_ = std::chrono::duration_cast<std::chrono::microseconds>(
                std::chrono::duration<double>(1.0 / qps));
    }

    void acquire() {
        if (min_interval_.count() == 0) return;
        std::chrono::steady_clock::time_point wait_until;
        {
            std::lock_guard<std::mutex> lock(mutex_);
            auto now = std::chrono::steady_clock::now();
            auto earliest = last_ + min_interval_;
            wait_until = earliest > now ? earliest : now;
            last_ = wait_until;
        }
        std::this_thread::sleep_until(wait_until);
    }

private:
    std::mutex mutex_;
    std::chrono::steady_clock::time_point last_{};
    std::chrono::microseconds min_interval_{0};
};

// Decorates any scorer with retries (exponential backoff on transient
// failures), a request-rate ceiling, a bounded in-flight window, and the
// normalized-text score cache.
class ResilientScorer : public ScorerClient {
public:
    ResilientScorer(std::shared_ptr<ScorerClient> inner, RetryPolicy retry = {},
                    double qps = 0.0, std::size_t max_in_flight = 4)
        : inner_(std::move(inner)), retry_(retry), limiter_(qps),
          max_in_flight_(max_in_flight == 0 ? 1 : max_in_flight) {}

    std::string name() const override { return inner_->name(); }

    ToxicityScores score(const std::string& text) override {
        const auto key = cache_key(text);
        {
            std::lock_guard<std::mutex> lock(cache_mutex_);
            if (auto it = cache_.find(key); it != cache_.end()) {
                ++cache_hits_;
                return it->second;
            }
        }

        InFlightGuard guard(*this);
        auto backoff = retry_.initial_backoff;
        for (std::size_t attempt = 0;; ++attempt) {
            limiter_.acquire();
            try {
                auto scores = inner_->score(text);
                std::lock_guard<std::mutex> lock(cache_mutex_);
                cache_[key] = scores;
                return scores;
            } catch (const ScoringError& e) {
                if (!e.transient() || attempt >= retry_.max_retries) {
                    if (e.transient())
                        throw ScoringError("retries exhausted: " + std::string(e.what()),
                                           /*transient=*/false, e.rate_limited());
                    throw;
                }
                ++retries_performed_;
                std::this_thread::sleep_for(backoff);
                backoff = std::chrono::milliseconds(static_cast<long long>(
                    static_cast<double>(backoff.count()) * retry_.backoff_multiplier));
            }
        }
    }

    std::size_t retries_performed() const { return retries_performed_.load(); }
    std::size_t cache_hits() const { return cache_hits_.load(); }

private:
    struct InFlightGuard {
        explicit InFlightGuard(ResilientScorer& owner) : owner_(owner) {
            std::unique_lock<std::mutex> lock(owner_.slot_mutex_);
            owner_.slot_cv_.wait(lock,
                                 [&] { return owner_.in_flight_ < owner_.max_in_flight_; });
            ++owner_.in_flight_;
        }
        ~InFlightGuard() {
            {
                std::lock_guard<std::mutex> lock(owner_.slot_mutex_);
                --owner_.in_flight_;
            }
            owner_.slot_cv_.notify_one();
        }
        ResilientScorer& owner_;
    };

    std::shared_ptr<ScorerClient> inner_;
    RetryPolicy retry_;
    RateLimiter limiter_;
    std::size_t max_in_flight_;
    std::size_t in_flight_ = 0;
    std::mutex slot_mutex_;
    std::condition_variable slot_cv_;
    std::mutex cache_mutex_;
    std::map<std::uint64_t, ToxicityScores> cache_;
    std::atomic<std::size_t> retries_performed_{0};
    std::atomic<std::size_t> cache_hits_{0};
};

// -- flag analyses -----------------------------------------------------------------

struct AttributeFlags {
    bool toxicity = false;
    bool insult = false;
    bool identity_attack = false;

    bool get(const std::string& attribute) const {
        if (attribute == "toxicity") return toxicity;
        if (attribute == "insult") return insult;
        if (attribute == "identity_attack") return identity_attack;
        throw std::domain_error("unknown attribute: " + attribute);
    }

    void set(const std::string& attribute, bool value) {
        if (attribute == "toxicity") toxicity = value;
        else if (attribute == "insult") insult = value;
        else if (attribute == "identity_attack") identity_attack = value;
        else throw std::domain_error("unknown attribute: " + attribute);
    }
};

inline double max_interpretation_score(const InterpretationCluster& cluster,
                                       const std::string& attribute) {
    double best = -1.0;
    for (const auto& interp : cluster.interpretations)
        best = std::max(best, interp.scores.get(attribute));
    return best;
}

// Analysis 1: flag when an interpretation strictly exceeds the sentence
// score (the cluster maximum is attained by an interpretation, ties do not
// flag) by at least `margin`. margin = 0 is analysis 1A, margin = 0.20 is
// analysis 1B.
inline AttributeFlags analysis1(const InterpretationCluster& cluster, double margin = 0.0) {
    if (cluster.interpretations.empty())
        throw std::invalid_argument("analysis1: cluster has no interpretations");
    if (margin < 0.0) throw std::invalid_argument("analysis1: negative margin");
    AttributeFlags flags;
    for (const auto& attr : toxicity_attributes()) {
        double sentence = cluster.sentence.scores.get(attr);
        double best = max_interpretation_score(cluster, attr);
        flags.set(attr, best > sentence && best - sentence >= margin);
    }
    return flags;
}

// Analysis 2: harmless on the surface (sentence score strictly below `low`)
// while some interpretation scores strictly above `high`.
inline AttributeFlags analysis2(const InterpretationCluster& cluster, double low = 0.1,
                                double high = 0.5) {
    if (cluster.interpretations.empty())
        throw std::invalid_argument("analysis2: cluster has no interpretations");
    if (low >= high) throw ConfigError("analysis2: low bound must stay below high bound");
    AttributeFlags flags;
    for (const auto& attr : toxicity_attributes()) {
        double sentence = cluster.sentence.scores.get(attr);
        double best = max_interpretation_score(cluster, attr);
        flags.set(attr, sentence < low && best > high);
    }
    return flags;
}

struct FlagSet {
    AttributeFlags a1_any;
    AttributeFlags a1_margin;
    AttributeFlags a2;
};

inline FlagSet run_analyses(const InterpretationCluster& cluster, double margin = 0.20,
                            double low = 0.1, double high = 0.5) {
    return {analysis1(cluster, 0.0), analysis1(cluster, margin), analysis2(cluster, low, high)};
}

// Share of human-flagged sentences that the model also flagged, as a
// percentage. Undefined (nullopt) when no sentence was human-flagged.
inline std::optional<double> overlap_recall(const std::set<std::string>& model_flags,
                                            const std::set<std::string>& human_flags) {
    if (human_flags.empty()) return std::nullopt;
    std::size_t hits = 0;
    for (const auto& id : human_flags)
        if (model_flags.count(id)) ++hits;
    return 100.0 * static_cast<double>(hits) / static_cast<double>(human_flags.size());
}

// -- aggregate report ----------------------------------------------------------------

struct ClusterRow {
    std::string id;
    ClusterSource source = ClusterSource::human;
    std::string attribute;
    double sentence_score = 0.0;
    double max_interpretation_score = 0.0;
    bool a1_any = false;
    bool a1_margin = false;
    bool a2 = false;
};

struct AttributeSummary {
    std::string attribute;
    std::size_t clusters = 0;
    double percent_a1_any = 0.0;
    double percent_a1_margin = 0.0;
    double percent_a2 = 0.0;
};

struct ModerationReport {
    std::vector<ClusterRow> rows;             // one row per cluster x attribute
    std::vector<AttributeSummary> summaries;  // one per attribute
    std::size_t clusters_scored = 0;
    std::size_t scoring_failures = 0;
    double margin = 0.20;
    double low = 0.1;
    double high = 0.5;
};

// Flag percentages and per-cluster rows over scored clusters. Sorted score
// curves for plotting are derived from the rows (see write_score_curve).
inline ModerationReport moderation_report(const std::vector<InterpretationCluster>& clusters,
                                          double margin = 0.20, double low = 0.1,
                                          double high = 0.5) {
    ModerationReport report;
    report.margin = margin;
    report.low = low;
    report.high = high;
    report.clusters_scored = clusters.size();

    std::map<std::string, std::array<std::size_t, 3>> flag_counts;
    for (const auto& attr : toxicity_attributes()) flag_counts[attr] = {0, 0, 0};

    for (const auto& cluster : clusters) {
        auto flags = run_analyses(cluster, margin, low, high);
        for (const auto& attr : toxicity_attributes()) {
            ClusterRow row;
            row.id = cluster.id;
            row.source = cluster.source;
            row.attribute = attr;
            row.sentence_score = cluster.sentence.scores.get(attr);
            row.max_interpretation_score = max_interpretation_score(cluster, attr);
            row.a1_any = flags.a1_any.get(attr);
            row.a1_margin = flags.a1_margin.get(attr);
            row.a2 = flags.a2.get(attr);
            report.rows.push_back(row);
            auto& counts = flag_counts[attr];
            counts[0] += row.a1_any;
            counts[1] += row.a1_margin;
            counts[2] += row.a2;
        }
    }

    for (const auto& attr : toxicity_attributes()) {
        AttributeSummary summary;
        summary.attribute = attr;
        summary.clusters = clusters.size();
        if (!clusters.empty()) {
            double denom = static_cast<double>(clusters.size());
            summary.percent_a1_any = 100.0 * static_cast<double>(flag_counts[attr][0]) / denom;
            summary.percent_a1_margin =
                100.0 * static_cast<double>(flag_counts[attr][1]) / denom;
            summary.percent_a2 = 100.0 * static_cast<double>(flag_counts[attr][2]) / denom;
        }
        report.summaries.push_back(summary);
    }
    return report;
}

inline void write_report_rows(std::ostream& out, const ModerationReport& report) {
    out << "sentence_id\tsource\tattribute\tsentence_score\tmax_interpretation_score"
        << "\ta1_any\ta1_margin\ta2\n";
    for (const auto& row : report.rows)
        out << row.id << '\t' << to_string(row.source) << '\t' << row.attribute << '\t'
            << row.sentence_score << '\t' << row.max_interpretation_score << '\t'
            << row.a1_any << '\t' << row.a1_margin << '\t' << row.a2 << '\n';
}

inline void write_report_summary(std::ostream& out, const ModerationReport& report) {
    out << "attribute\tclusters\tpercent_a1_any\tpercent_a1_margin\tpercent_a2\n";
    for (const auto& s : report.summaries)
        out << s.attribute << '\t' << s.clusters << '\t' << s.percent_a1_any << '\t'
            << s.percent_a1_margin << '\t' << s.percent_a2 << '\n';
}

// Sentence-score vs cluster-maximum curve for one attribute, sorted by
// sentence score; matches the layout used for the score-curve figures.
inline void write_score_curve(std::ostream& out, const ModerationReport& report,
                              const std::string& attribute) {
    std::vector<std::pair<double, double>> points;
    for (const auto& row : report.rows)
        if (row.attribute == attribute)
            points.emplace_back(row.sentence_score, row.max_interpretation_score);
    std::sort(points.begin(), points.end());
    out << "rank\tsentence_score\tcluster_max_score\n";
    for (std::size_t i = 0; i < points.size(); ++i)
        out << i << '\t' << points[i].first << '\t' << points[i].second << '\n';
}

// -- cluster scoring -------------------------------------------------------------------

struct UnscoredCluster {
    std::string id;
    std::string sentence;
    std::vector<std::string> interpretations;
    ClusterSource source = ClusterSource::human;
};

struct ScoringOutcome {
    std::vector<InterpretationCluster> clusters;
    std::vector<std::string> failures;  // "<id>: <reason>", excluded from reports
};

// Scores every text of every cluster. A failing cluster is dropped from the
// result (excluded from percentage denominators) and recorded.
inline ScoringOutcome score_clusters(ScorerClient& client,
                                     const std::vector<UnscoredCluster>& clusters) {
    ScoringOutcome outcome;
    for (const auto& raw : clusters) {
        try {
            InterpretationCluster scored;
            scored.id = raw.id;
            scored.source = raw.source;
            scored.sentence = {raw.sentence, score_text(client, raw.sentence)};
            for (const auto& interp : raw.interpretations)
                scored.interpretations.push_back({interp, score_text(client, interp)});
            outcome.clusters.push_back(std::move(scored));
        } catch (const std::exception& e) {
            outcome.failures.push_back(raw.id + ": " + e.what());
        }
    }
    return outcome;
}

}  // namespace imtk
