#pragma once

#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <memory>
#include <set>
#include <string>
#include <vector>

#include "imtk/core.hpp"
#include "imtk/generation.hpp"

#include <json.hpp>

namespace imtk {

namespace detail {

inline void write_json_file(const std::filesystem::path& path, const nlohmann::json& j) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << j.dump(2) << "\n";
}

inline nlohmann::json read_json_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot read " + path.string());
    return nlohmann::json::parse(in);
}

}  // namespace detail

// Deterministic backend over explicit token probabilities. Not trainable;
// exists so loss values can be checked against hand arithmetic. Probability
// lookup order: exact (input, target) sequence entry, then per-token table,
// then uniform 1/|V|.
class TabularBackend : public GeneratorBackend {
public:
    explicit TabularBackend(std::size_t vocab_size = 8) : vocab_size_(vocab_size) {
        if (vocab_size_ < 2)
            throw std::invalid_argument("TabularBackend: vocabulary too small");
    }

    std::string name() const override { return "tabular"; }
    BackendCapabilities capabilities() const override { return {false, true}; }

    void set_sequence_probs(const std::string& input, const std::string& target,
                            std::vector<double> per_token_probs) {
        sequence_probs_[key(input, target)] = std::move(per_token_probs);
    }
    void set_token_prob(const std::string& token, double prob) {
        token_probs_[token] = prob;
    }
    void set_decode_output(const std::string& input, const std::string& output) {
        decode_table_[input] = output;
    }

    std::vector<double> token_nll(const std::string& input,
                                  const std::string& target) const override {
        auto tokens = generation_tokenize(target);
        std::vector<double> nll;
        nll.reserve(tokens.size());
        auto seq = sequence_probs_.find(key(input, target));
        for (std::size_t i = 0; i < tokens.size(); ++i) {
            double p;
            if (seq != sequence_probs_.end() && i < seq->second.size()) {
                p = seq->second[i];
            } else if (auto it = token_probs_.find(tokens[i]); it != token_probs_.end()) {
                p = it->second;
            } else {
                p = 1.0 / static_cast<double>(vocab_size_);
            }
            if (p <= 0.0 || p > 1.0)
                throw std::domain_error("TabularBackend: probability out of (0, 1]");
            nll.push_back(-std::log(p));
        }
        return nll;
    }

    // Argmax over the stored table; identical for greedy and beam modes.
    std::string decode(const std::string& input, const DecodingParams&) const override {
        auto it = decode_table_.find(input);
        return it == decode_table_.end() ? std::string() : it->second;
    }

    void save(const std::string& directory) const override {
        nlohmann::json j;
        j["vocab_size"] = vocab_size_;
        j["token_probs"] = token_probs_;
        j["decode_table"] = decode_table_;
        nlohmann::json seqs = nlohmann::json::array();
        for (const auto& [k, v] : sequence_probs_)
            seqs.push_back({{"key", k}, {"probs", v}});
        j["sequence_probs"] = std::move(seqs);
        detail::write_json_file(std::filesystem::path(directory) / "tabular.json", j);
    }

    void load(const std::string& directory) override {
        auto j = detail::read_json_file(std::filesystem::path(directory) / "tabular.json");
        vocab_size_ = j.at("vocab_size").get<std::size_t>();
        token_probs_ = j.at("token_probs").get<std::map<std::string, double>>();
        decode_table_ = j.at("decode_table").get<std::map<std::string, std::string>>();
        sequence_probs_.clear();
        for (const auto& e : j.at("sequence_probs"))
            sequence_probs_[e.at("key").get<std::string>()] =
                e.at("probs").get<std::vector<double>>();
    }

private:
    static std::string key(const std::string& input, const std::string& target) {
        return input + "\x1f" + target;
    }

    std::size_t vocab_size_;
    std::map<std::string, double> token_probs_;
    std::map<std::string, std::vector<double>> sequence_probs_;
    std::map<std::string, std::string> decode_table_;
};

// Oracle backend that replays a primed prompt -> target table and assigns
// the targets probability one. Used to exercise the evaluation pipeline
// end to end without a trained model.
class EchoBackend : public GeneratorBackend {
public:
    std::string name() const override { return "echo"; }
    BackendCapabilities capabilities() const override { return {false, true}; }

    void prime(const std::string& prompt, const std::string& target) {
        table_[prompt] = target;
    }

    std::vector<double> token_nll(const std::string&, const std::string& target) const override {
        return std::vector<double>(generation_tokenize(target).size(), 0.0);
    }

    std::string decode(const std::string& input, const DecodingParams&) const override {
        auto it = table_.find(input);
        return it == table_.end() ? std::string() : it->second;
    }

    void save(const std::string& directory) const override {
        detail::write_json_file(std::filesystem::path(directory) / "echo.json",
                                nlohmann::json(table_));
    }

    void load(const std::string& directory) override {
        table_ = detail::read_json_file(std::filesystem::path(directory) / "echo.json")
                     .get<std::map<std::string, std::string>>();
    }

private:
    std::map<std::string, std::string> table_;
};

// Small trainable backend: an add-one smoothed unigram model over target
// tokens plus a prompt -> last-seen-target memo for decoding. Loss decreases
// as counts accumulate, which is enough to drive the trainer, the early
// stopping logic, and the logging contract in tests.
class CountModelBackend : public GeneratorBackend {
public:
    std::string name() const override { return "count"; }
    BackendCapabilities capabilities() const override { return {true, false}; }

    std::vector<double> token_nll(const std::string&, const std::string& target) const override {
        auto tokens = generation_tokenize(target);
        std::vector<double> nll;
        nll.reserve(tokens.size());
        // Reserve one type of probability mass for unseen tokens.
        double denom = total_ + static_cast<double>(vocab_.size()) + 1.0;
        for (const auto& tok : tokens) {
            auto it = counts_.find(tok);
            double c = it == counts_.end() ? 0.0 : it->second;
            nll.push_back(-std::log((c + 1.0) / denom));
        }
        return nll;
    }

    void train_step(const std::string& input, const std::string& target, double) override {
        for (const auto& tok : generation_tokenize(target)) {
            counts_[tok] += 1.0;
            total_ += 1.0;
            vocab_.insert(tok);
        }
        memo_[input] = target;
    }

    std::string decode(const std::string& input, const DecodingParams&) const override {
        if (auto it = memo_.find(input); it != memo_.end()) return it->second;
        // Unseen prompt: fall back to the most frequent token.
        std::string best;
        double best_count = 0.0;
        for (const auto& [tok, c] : counts_)
            if (c > best_count) {
                best = tok;
                best_count = c;
            }
        return best;
    }

    void save(const std::string& directory) const override {
        nlohmann::json j;
        j["counts"] = counts_;
        j["total"] = total_;
        j["memo"] = memo_;
        detail::write_json_file(std::filesystem::path(directory) / "count.json", j);
    }

    void load(const std::string& directory) override {
        auto j = detail::read_json_file(std::filesystem::path(directory) / "count.json");
        counts_ = j.at("counts").get<std::map<std::string, double>>();
        total_ = j.at("total").get<double>();
        memo_ = j.at("memo").get<std::map<std::string, std::string>>();
        vocab_.clear();
        for (const auto& [tok, c] : counts_) vocab_.insert(tok);
    }

private:
    std::map<std::string, double> counts_;
    std::set<std::string> vocab_;
    std::map<std::string, std::string> memo_;
    double total_ = 0.0;
};

// Backend plugin registry keyed by the config value `backend`.
inline std::map<std::string, std::function<std::shared_ptr<GeneratorBackend>()>>&
backend_registry() {
    static std::map<std::string, std::function<std::shared_ptr<GeneratorBackend>()>> registry = {
        {"tabular", [] { return std::static_pointer_cast<GeneratorBackend>(
                             std::make_shared<TabularBackend>()); }},
        {"echo", [] { return std::static_pointer_cast<GeneratorBackend>(
                          std::make_shared<EchoBackend>()); }},
        {"count", [] { return std::static_pointer_cast<GeneratorBackend>(
                           std::make_shared<CountModelBackend>()); }},
    };
    return registry;
}

inline std::shared_ptr<GeneratorBackend> make_backend(const std::string& name) {
    auto& registry = backend_registry();
    auto it = registry.find(name);
    if (it == registry.end()) throw ConfigError("unknown backend: " + name);
    return it->second();
}

}  // namespace imtk
