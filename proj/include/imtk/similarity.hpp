#pragma once

#include <cmath>
#include <memory>
#include <numeric>
#include <string>
#include <vector>

#include "imtk/core.hpp"

namespace imtk {

// Sentence-embedding provider contract. Implementations must be deterministic
// for fixed state and must not return the zero vector for non-empty text.
// SimCSE-style encoders plug in behind this interface; the hashed
// bag-of-words provider below is the test/reference implementation.
class EmbeddingProvider {
public:
    virtual ~EmbeddingProvider() = default;
    virtual std::string name() const = 0;
    virtual std::size_t dimension() const = 0;
    virtual std::vector<double> embed(const std::string& text) const = 0;
    // Whether embed may be called from several threads at once.
    virtual bool concurrent_safe() const { return true; }
};

// Cosine similarity in [-1, 1].
struct SimilarityValue {
    double value = 0.0;
};

inline double cosine(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() != b.size())
        throw std::invalid_argument("cosine: dimension mismatch");
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        dot += a[i] * b[i];
        na += a[i] * a[i];
        nb += b[i] * b[i];
    }
    if (na <= 0.0 || nb <= 0.0)
        throw std::domain_error("cosine: zero-norm embedding");
    return dot / (std::sqrt(na) * std::sqrt(nb));
}

inline SimilarityValue similarity(const std::string& a, const std::string& b,
                                  const EmbeddingProvider& provider) {
    if (a.empty() || b.empty())
        throw std::invalid_argument("similarity: empty text");
    return {cosine(provider.embed(a), provider.embed(b))};
}

// Ranks interpretations by similarity to the sentence, most similar first.
// Stable: ties keep their original relative order.
inline std::vector<std::size_t> order_by_similarity(const std::string& sentence,
                                                    const std::vector<std::string>& texts,
                                                    const EmbeddingProvider& provider) {
    if (texts.empty())
        throw std::invalid_argument("order_by_similarity: no interpretations");
    std::vector<double> sims(texts.size());
    for (std::size_t i = 0; i < texts.size(); ++i)
        sims[i] = similarity(texts[i], sentence, provider).value;
    std::vector<std::size_t> order(texts.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t i, std::size_t j) { return sims[i] > sims[j]; });
    return order;
}

// Single contrastive term: max(0, sim_curr - sim_prev + margin). Zero only
// when the current interpretation dropped below the previous one by at least
// the margin.
inline double hinge_term(double sim_curr, double sim_prev, double margin) {
    if (margin < 0.0) throw std::invalid_argument("hinge_term: negative margin");
    return std::max(0.0, sim_curr - sim_prev + margin);
}

// Contrastive similarity-decrease loss over a decoded interpretation
// sequence: (1/J) * sum_{j=2..J} hinge_term(sim_j, sim_{j-1}, margin).
// The divisor is J even though the sum has J-1 terms. J = 1 gives 0.
inline double similarity_decrease_loss(const std::string& sentence,
                                       const std::vector<std::string>& decoded,
                                       double margin, const EmbeddingProvider& provider) {
    const std::size_t j_count = decoded.size();
    if (j_count <= 1) return 0.0;
    double sum = 0.0;
    double prev = similarity(decoded[0], sentence, provider).value;
    for (std::size_t j = 1; j < j_count; ++j) {
        double curr = similarity(decoded[j], sentence, provider).value;
        sum += hinge_term(curr, prev, margin);
        prev = curr;
    }
    return sum / static_cast<double>(j_count);
}

// Same loss when the consecutive similarities are already known.
inline double similarity_decrease_loss_from_sims(const std::vector<double>& sims,
                                                 double margin) {
    if (sims.size() <= 1) return 0.0;
    double sum = 0.0;
    for (std::size_t j = 1; j < sims.size(); ++j)
        sum += hinge_term(sims[j], sims[j - 1], margin);
    return sum / static_cast<double>(sims.size());
}

// Deterministic hashed bag-of-words provider: lowercased whitespace tokens
// hashed into a fixed number of buckets, L2-normalized counts. Keeps the
// pipeline testable without model weights.
class HashedBowProvider : public EmbeddingProvider {
public:
    explicit HashedBowProvider(std::size_t dimension = 512) : dimension_(dimension) {
        if (dimension_ == 0)
            throw std::invalid_argument("HashedBowProvider: zero dimension");
    }

    std::string name() const override { return "bow"; }
    std::size_t dimension() const override { return dimension_; }

    std::vector<double> embed(const std::string& text) const override {
        std::vector<double> vec(dimension_, 0.0);
        for (const auto& token : split_whitespace(to_lower(text)))
            vec[fnv1a_hash(token) % dimension_] += 1.0;
        double norm = 0.0;
        for (double v : vec) norm += v * v;
        if (norm > 0.0) {
            norm = std::sqrt(norm);
            for (double& v : vec) v /= norm;
        }
        return vec;
    }

private:
    std::size_t dimension_;
};

// Provider registry keyed by the config value `similarity.provider`.
using ProviderFactory = std::shared_ptr<EmbeddingProvider> (*)();

inline std::shared_ptr<EmbeddingProvider> make_provider(const std::string& name) {
    if (name == "bow") return std::make_shared<HashedBowProvider>();
    throw ConfigError("unknown similarity provider: " + name);
}

}  // namespace imtk
