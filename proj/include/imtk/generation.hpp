#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <memory>
#include <numeric>
#include <string>
#include <vector>

#include "imtk/core.hpp"
#include "imtk/data_model.hpp"
#include "imtk/prompting.hpp"
#include "imtk/similarity.hpp"

namespace imtk {

// Tokenizer used on the generation side: whitespace-delimited, with the
// reserved tokens split out as atomic items even when glued to a word
// ("A<reader>B" -> A, <reader>, B).
inline std::vector<std::string> generation_tokenize(const std::string& text) {
    std::vector<std::string> out;
    auto emit_plain = [&](std::string_view piece) {
        std::size_t pos = 0;
        while (pos < piece.size()) {
            auto sep = piece.find(kSepToken, pos);
            auto reader = piece.find(kReaderToken, pos);
            auto next = std::min(sep, reader);
            if (next == std::string_view::npos) {
                out.emplace_back(piece.substr(pos));
                return;
            }
            if (next > pos) out.emplace_back(piece.substr(pos, next - pos));
            bool is_sep = next == sep;
            out.emplace_back(is_sep ? kSepToken : kReaderToken);
            pos = next + (is_sep ? kSepToken.size() : kReaderToken.size());
        }
    };
    for (const auto& piece : split_whitespace(text)) emit_plain(piece);
    return out;
}

enum class DecodingMethod { diverse_beam, greedy };

// Decoding parameters. Defaults follow the standard diverse-beam setup
// (max length 150, 10 beams in 5 groups, diversity penalty 2.0, repetition
// penalty 1.2, early stopping).
struct DecodingParams {
    DecodingMethod method = DecodingMethod::diverse_beam;
    std::size_t max_length = 150;
    std::size_t beam_size = 10;
    std::size_t beam_groups = 5;
    double diversity_penalty = 2.0;
    double repetition_penalty = 1.2;
    bool early_stopping = true;
    std::uint64_t seed = 0;

    void validate() const {
        if (method == DecodingMethod::diverse_beam &&
            (beam_groups == 0 || beam_size % beam_groups != 0))
            throw std::invalid_argument(
                "DecodingParams: beam_size must be divisible by beam_groups");
        if (max_length == 0)
            throw std::invalid_argument("DecodingParams: max_length must be positive");
    }
};

inline DecodingMethod decoding_method_from_string(const std::string& s) {
    auto v = to_lower(trim(s));
    if (v == "diverse_beam" || v == "dbs") return DecodingMethod::diverse_beam;
    if (v == "greedy") return DecodingMethod::greedy;
    throw ConfigError("unknown decoding method: " + s);
}

struct BackendCapabilities {
    bool trainable = false;
    bool concurrent_decode = false;
};

// Conditional sequence generator contract. token_nll returns one
// non-negative value per target token; decode is deterministic for greedy
// mode and for fixed-seed beam mode.
class GeneratorBackend {
public:
    virtual ~GeneratorBackend() = default;

    virtual std::string name() const = 0;
    virtual BackendCapabilities capabilities() const = 0;

    virtual std::vector<double> token_nll(const std::string& input,
                                          const std::string& target) const = 0;
    virtual std::string decode(const std::string& input, const DecodingParams& params) const = 0;

    // One optimization step on (input, target). Backends without training
    // support must leave the default, which reports a capability error.
    virtual void train_step(const std::string& input, const std::string& target,
                            double learning_rate) {
        (void)input;
        (void)target;
        (void)learning_rate;
        throw CapabilityError("backend \"" + name() + "\" is not trainable");
    }

    virtual void save(const std::string& directory) const = 0;
    virtual void load(const std::string& directory) = 0;
};

// -- training objectives --------------------------------------------------------

// Per-reader language-modeling loss: mean token NLL over the single target
// (the per-sentence loss sums this across the J readers).
inline double loss_one2one(const GeneratorBackend& backend, const PromptString& prompt,
                           const TargetString& target) {
    if (prompt.mode != GenerationMode::one_to_one ||
        target.mode != GenerationMode::one_to_one)
        throw std::domain_error("loss_one2one: inputs are not one_to_one");
    if (trim(target.text).empty()) throw std::domain_error("loss_one2one: empty target");
    auto nll = backend.token_nll(prompt.text, target.text);
    if (nll.empty()) throw std::domain_error("loss_one2one: target has no tokens");
    double sum = 0.0;
    for (double v : nll) sum += v;
    return sum / static_cast<double>(nll.size());
}

// Sentence-level one-to-one loss: sum of the per-reader means.
inline double loss_one2one_sentence(
    const GeneratorBackend& backend,
    const std::vector<std::pair<PromptString, TargetString>>& reader_pairs) {
    double sum = 0.0;
    for (const auto& [prompt, target] : reader_pairs)
        sum += loss_one2one(backend, prompt, target);
    return sum;
}

// One-to-many loss: mean token NLL over the whole concatenated target,
// "<reader>" tokens included.
inline double loss_one2many(const GeneratorBackend& backend, const PromptString& prompt,
                            const TargetString& target) {
    if (target.mode != GenerationMode::one_to_many)
        throw std::domain_error("loss_one2many: target is not one_to_many");
    if (trim(target.text).empty()) throw std::domain_error("loss_one2many: empty target");
    auto nll = backend.token_nll(prompt.text, target.text);
    if (nll.empty()) throw std::domain_error("loss_one2many: target has no tokens");
    double sum = 0.0;
    for (double v : nll) sum += v;
    return sum / static_cast<double>(nll.size());
}

// Weighted combination alpha * Lm + (1 - alpha) * Lsim; alpha strictly
// inside (0, 1).
inline double combined_loss(double lm, double lsim, double alpha) {
    if (alpha <= 0.0 || alpha >= 1.0)
        throw std::domain_error("combined_loss: alpha must lie in (0, 1)");
    return alpha * lm + (1.0 - alpha) * lsim;
}

// -- training strategies ----------------------------------------------------------

enum class Strategy { One2One, One2M_Rand, One2M_Sim, One2M_Con };

inline std::string to_string(Strategy s) {
    switch (s) {
        case Strategy::One2One: return "one2one";
        case Strategy::One2M_Rand: return "one2m-rand";
        case Strategy::One2M_Sim: return "one2m-sim";
        case Strategy::One2M_Con: return "one2m-con";
    }
    throw std::domain_error("invalid strategy");
}

inline Strategy strategy_from_string(const std::string& s) {
    std::string v = to_lower(trim(s));
    std::replace(v.begin(), v.end(), '_', '-');
    if (v == "one2one") return Strategy::One2One;
    if (v == "one2m-rand") return Strategy::One2M_Rand;
    if (v == "one2m-sim") return Strategy::One2M_Sim;
    if (v == "one2m-con") return Strategy::One2M_Con;
    throw ConfigError("unknown strategy: " + s);
}

inline GenerationMode mode_of(Strategy s) {
    return s == Strategy::One2One ? GenerationMode::one_to_one
                                  : GenerationMode::one_to_many;
}

struct TrainingConfig {
    Strategy strategy = Strategy::One2One;
    double alpha = 0.5;     // weight of Lm in the combined objective
    double margin = 0.05;   // hinge margin in Lsim
    std::size_t patience = 5;
    DecodingMethod inner_decoding = DecodingMethod::greedy;
    std::uint64_t seed = 0;
    std::size_t max_epochs = 50;
    double min_delta = 1e-4;  // improvement below this counts as a plateau

    // Optimizer settings forwarded to gradient backends.
    double learning_rate = 1e-6;
    double weight_decay = 0.01;
    std::size_t batch_size = 2;
    double gradient_clip_norm = 0.1;

    // One2M_Rand keeps dataset order unless this seeded shuffle is enabled.
    bool shuffle_random_order = false;

    void validate() const {
        if (alpha <= 0.0 || alpha >= 1.0)
            throw ConfigError("TrainingConfig: alpha must lie in (0, 1)");
        if (patience < 1) throw ConfigError("TrainingConfig: patience must be >= 1");
        if (margin < 0.0) throw ConfigError("TrainingConfig: negative margin");
    }
};

// One prepared (prompt, target) pair; reader_order maps position in the pair
// back to the record's reader index.
struct TrainingExample {
    PromptString prompt;
    TargetString target;
    std::vector<std::size_t> reader_order;
    std::string sentence;  // kept for the similarity-constrained objective
};

// Builds the strategy's training pairs for one record.
//   One2One    -> J pairs, one per reader.
//   One2M_Rand -> one pair in dataset order ("random" = as appearing;
//                 optional seeded shuffle).
//   One2M_Sim / One2M_Con -> one pair with readers reordered by descending
//                 interpretation-to-sentence similarity; the context and the
//                 interpretation of a reader always move together.
inline std::vector<TrainingExample> prepare_training_example(
    const AnnotatedSentence& rec, Strategy strategy, const EmbeddingProvider* provider,
    std::uint64_t seed = 0, bool shuffle_random_order = false) {
    if (rec.readers.empty())
        throw std::invalid_argument("prepare_training_example: record has no readers");

    std::vector<TrainingExample> out;
    if (strategy == Strategy::One2One) {
        for (std::size_t j = 0; j < rec.readers.size(); ++j) {
            TrainingExample ex;
            ex.prompt = build_prompt(rec.title, rec.sentence, {rec.readers[j].context});
            ex.target =
                build_target({rec.readers[j].interpretation}, GenerationMode::one_to_one);
            ex.reader_order = {j};
            ex.sentence = rec.sentence;
            out.push_back(std::move(ex));
        }
        return out;
    }

    std::vector<std::size_t> order(rec.readers.size());
    std::iota(order.begin(), order.end(), 0);
    if (strategy == Strategy::One2M_Rand) {
        if (shuffle_random_order) seeded_shuffle(order, seed ^ fnv1a_hash(rec.id));
    } else {
        if (provider == nullptr)
            throw ConfigError("similarity-ordered strategies need an embedding provider");
        std::vector<std::string> interpretations;
        for (const auto& r : rec.readers) interpretations.push_back(r.interpretation);
        order = order_by_similarity(rec.sentence, interpretations, *provider);
    }

    std::vector<ReaderContext> contexts;
    std::vector<std::string> targets;
    for (auto idx : order) {
        contexts.push_back(rec.readers[idx].context);
        targets.push_back(rec.readers[idx].interpretation);
    }
    TrainingExample ex;
    ex.prompt = build_prompt(rec.title, rec.sentence, contexts);
    ex.target = build_target(targets, GenerationMode::one_to_many);
    ex.reader_order = order;
    ex.sentence = rec.sentence;
    out.push_back(std::move(ex));
    return out;
}

// -- trainer ---------------------------------------------------------------------

struct TrainingLogEntry {
    std::size_t epoch = 0;
    std::string split;  // "train" or "validation"
    double loss = 0.0;
    Strategy strategy = Strategy::One2One;
    double alpha = 0.0;
};

struct TrainingLog {
    std::vector<TrainingLogEntry> entries;
    std::size_t epochs_run = 0;
    bool stopped_early = false;
    double best_validation_loss = 0.0;

    std::vector<double> losses(const std::string& split) const {
        std::vector<double> out;
        for (const auto& e : entries)
            if (e.split == split) out.push_back(e.loss);
        return out;
    }
};

namespace detail {

// Loss of one prepared example under the configured objective. For One2M_Con
// the similarity term is computed on the interpretations decoded with the
// inner decoding method; the combined value drives logging and early
// stopping (gradient propagation through discrete decoding is left to the
// backend).
inline double example_loss(GeneratorBackend& backend, const TrainingExample& ex,
                           const TrainingConfig& config, const EmbeddingProvider* provider) {
    if (config.strategy == Strategy::One2One)
        return loss_one2one(backend, ex.prompt, ex.target);
    double lm = loss_one2many(backend, ex.prompt, ex.target);
    if (config.strategy != Strategy::One2M_Con) return lm;

    DecodingParams params;
    params.method = config.inner_decoding;
    params.seed = config.seed;
    std::string decoded = backend.decode(ex.prompt.text, params);
    std::vector<std::string> pieces;
    for (auto& piece : split_on(decoded, kReaderToken)) {
        auto trimmed = trim(piece);
        if (!trimmed.empty()) pieces.push_back(std::move(trimmed));
    }
    double lsim = pieces.size() > 1 && provider != nullptr
                      ? similarity_decrease_loss(ex.sentence, pieces, config.margin, *provider)
                      : 0.0;
    return combined_loss(lm, lsim, config.alpha);
}

inline double mean_loss(GeneratorBackend& backend,
                        const std::vector<AnnotatedSentence>& records,
                        const TrainingConfig& config, const EmbeddingProvider* provider) {
    double sum = 0.0;
    std::size_t count = 0;
    for (const auto& rec : records) {
        for (const auto& ex : prepare_training_example(rec, config.strategy, provider,
                                                       config.seed,
                                                       config.shuffle_random_order)) {
            sum += example_loss(backend, ex, config, provider);
            ++count;
        }
    }
    return count == 0 ? 0.0 : sum / static_cast<double>(count);
}

}  // namespace detail

// Optimizes the strategy's objective over the train split with early
// stopping on the validation loss (patience counted in evaluations).
inline TrainingLog train(const DatasetSplit& split, GeneratorBackend& backend,
                         const TrainingConfig& config,
                         const EmbeddingProvider* provider = nullptr) {
    config.validate();
    if (!backend.capabilities().trainable)
        throw CapabilityError("backend \"" + backend.name() + "\" is not trainable");
    if (split.train.empty()) throw std::invalid_argument("train: empty training split");
    if (config.strategy == Strategy::One2M_Con && provider == nullptr)
        throw ConfigError("One2M_Con needs an embedding provider");

    TrainingLog log;
    double best_val = std::numeric_limits<double>::infinity();
    std::size_t evals_since_improvement = 0;

    for (std::size_t epoch = 1; epoch <= config.max_epochs; ++epoch) {
        double train_sum = 0.0;
        std::size_t train_count = 0;
        for (const auto& rec : split.train) {
            for (const auto& ex : prepare_training_example(rec, config.strategy, provider,
                                                           config.seed,
                                                           config.shuffle_random_order)) {
                train_sum += detail::example_loss(backend, ex, config, provider);
                backend.train_step(ex.prompt.text, ex.target.text, config.learning_rate);
                ++train_count;
            }
        }
        double train_loss =
            train_count == 0 ? 0.0 : train_sum / static_cast<double>(train_count);
        log.entries.push_back({epoch, "train", train_loss, config.strategy, config.alpha});
        log.epochs_run = epoch;

        const auto& val_records = split.validation.empty() ? split.train : split.validation;
        double val_loss = detail::mean_loss(backend, val_records, config, provider);
        log.entries.push_back({epoch, "validation", val_loss, config.strategy, config.alpha});

        if (val_loss < best_val - config.min_delta) {
            best_val = val_loss;
            evals_since_improvement = 0;
        } else {
            ++evals_since_improvement;
            if (evals_since_improvement >= config.patience) {
                log.stopped_early = true;
                break;
            }
        }
    }
    log.best_validation_loss = best_val;
    return log;
}

// -- decoding ---------------------------------------------------------------------

struct GenerationOutput {
    std::vector<std::string> interpretations;
    std::size_t expected = 0;       // prompt.reader_count
    std::size_t dropped_empty = 0;  // empty segments removed after splitting
    bool count_mismatch = false;    // recorded, never an error
};

// Decodes once and splits the output on "<reader>". Surrounding whitespace is
// trimmed and empty segments dropped; a segment-count mismatch with the
// prompt's reader count is recorded as a statistic.
inline GenerationOutput generate_interpretations(const GeneratorBackend& backend,
                                                 const PromptString& prompt,
                                                 const DecodingParams& params) {
    params.validate();
    GenerationOutput out;
    out.expected = prompt.reader_count;
    std::string decoded = backend.decode(prompt.text, params);
    for (auto& segment : split_on(decoded, kReaderToken)) {
        auto trimmed = trim(segment);
        if (trimmed.empty()) {
            ++out.dropped_empty;
            continue;
        }
        out.interpretations.push_back(std::move(trimmed));
    }
    out.count_mismatch = out.interpretations.size() != out.expected;
    return out;
}

}  // namespace imtk
