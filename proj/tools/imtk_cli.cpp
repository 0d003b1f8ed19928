// Command-line front door for the interpretation-modeling toolkit.
//
// Subcommands: validate, split, prompts, train, generate, evaluate,
// diversity, moderate. A single flat-key config file drives every command;
// --set key=value flags override file values. Exit codes: 0 success,
// 1 validation/domain failure, 2 I/O, 3 capability, 4 external service.

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "imtk/imtk.hpp"
#include "imtk/scorer_http.hpp"

#include <CLI11.hpp>

namespace fs = std::filesystem;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitValidation = 1;
constexpr int kExitIo = 2;
constexpr int kExitCapability = 3;
constexpr int kExitExternal = 4;

struct CliOptions {
    std::string config_path;
    std::string out_dir;
    std::string dataset;
    std::string checkpoint;
    std::string clusters_file;
    std::vector<std::string> overrides;
    bool strict = false;
    std::int64_t seed = -1;
};

imtk::Config load_config(const CliOptions& opts) {
    imtk::Config config;
    if (!opts.config_path.empty()) {
        if (!fs::exists(opts.config_path))
            throw std::ios_base::failure("config file not found: " + opts.config_path);
        config = imtk::Config::from_file(opts.config_path);
    }
    for (const auto& assignment : opts.overrides) config.set_from_flag(assignment);
    if (!opts.dataset.empty()) config.set("dataset", opts.dataset);
    if (!opts.out_dir.empty()) config.set("out", opts.out_dir);
    if (!opts.checkpoint.empty()) config.set("checkpoint", opts.checkpoint);
    if (opts.seed >= 0) config.set("seed", std::to_string(opts.seed));
    if (opts.strict) config.set("dataset.strict", "true");
    return config;
}

fs::path ensure_out_dir(const imtk::Config& config) {
    fs::path out = config.get_string("out", "out");
    fs::create_directories(out);
    return out;
}

// Timestamps live only here so report files stay byte-identical across runs.
void write_run_log(const fs::path& out, const std::string& command,
                   const std::vector<std::string>& notes) {
    std::ofstream log(out / "run.log", std::ios::app);
    auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    log << std::put_time(std::gmtime(&now), "%FT%TZ") << " " << command << "\n";
    for (const auto& note : notes) log << "  " << note << "\n";
}

std::vector<imtk::AnnotatedSentence> load_dataset(const imtk::Config& config) {
    auto path = config.require_string("dataset");
    std::ifstream in(path);
    if (!in) throw std::ios_base::failure("cannot open dataset: " + path);
    return imtk::parse_dataset(in, config.get_bool("dataset.strict", false));
}

imtk::SplitRatios ratios_from(const imtk::Config& config) {
    imtk::SplitRatios ratios;
    ratios.train = config.get_double("split.train", 0.8);
    ratios.validation = config.get_double("split.validation", 0.1);
    ratios.test = config.get_double("split.test", 0.1);
    return ratios;
}

imtk::TrainingConfig training_config_from(const imtk::Config& config) {
    imtk::TrainingConfig tc;
    tc.strategy = imtk::strategy_from_string(config.get_string("strategy", "one2one"));
    tc.alpha = config.get_double("alpha", 0.5);
    tc.margin = config.get_double("margin", 0.05);
    tc.patience = static_cast<std::size_t>(config.get_int("train.patience", 5));
    tc.inner_decoding = imtk::decoding_method_from_string(
        config.get_string("train.inner_decoding", "greedy"));
    tc.seed = config.get_seed();
    tc.max_epochs = static_cast<std::size_t>(config.get_int("train.max_epochs", 50));
    tc.min_delta = config.get_double("train.min_delta", 1e-4);
    tc.learning_rate = config.get_double("train.learning_rate", 1e-6);
    tc.weight_decay = config.get_double("train.weight_decay", 0.01);
    tc.batch_size = static_cast<std::size_t>(config.get_int("train.batch_size", 2));
    tc.gradient_clip_norm = config.get_double("train.gradient_clip_norm", 0.1);
    tc.shuffle_random_order = config.get_bool("train.shuffle_random_order", false);
    return tc;
}

imtk::DecodingParams decoding_params_from(const imtk::Config& config) {
    imtk::DecodingParams params;
    params.method = imtk::decoding_method_from_string(
        config.get_string("decoding.method", "diverse_beam"));
    params.max_length = static_cast<std::size_t>(config.get_int("decoding.max_length", 150));
    params.beam_size = static_cast<std::size_t>(config.get_int("decoding.beam_size", 10));
    params.beam_groups = static_cast<std::size_t>(config.get_int("decoding.beam_groups", 5));
    params.diversity_penalty = config.get_double("decoding.diversity_penalty", 2.0);
    params.repetition_penalty = config.get_double("decoding.repetition_penalty", 1.2);
    params.early_stopping = config.get_bool("decoding.early_stopping", true);
    params.seed = config.get_seed();
    params.validate();
    return params;
}

// Resolves plugin names up front so a bad name fails before any work starts.
struct ResolvedPlugins {
    std::shared_ptr<imtk::GeneratorBackend> backend;
    std::shared_ptr<imtk::EmbeddingProvider> provider;
};

ResolvedPlugins resolve_plugins(const imtk::Config& config, bool need_backend,
                                bool need_provider) {
    ResolvedPlugins plugins;
    if (need_backend) plugins.backend = imtk::make_backend(config.require_string("backend"));
    if (need_provider)
        plugins.provider = imtk::make_provider(config.get_string("similarity.provider", "bow"));
    return plugins;
}

bool strategy_needs_provider(imtk::Strategy strategy) {
    return strategy == imtk::Strategy::One2M_Sim || strategy == imtk::Strategy::One2M_Con;
}

// Primes the oracle echo backend with the dataset's own targets; used to
// exercise the evaluation pipeline without a trained checkpoint.
void prime_echo(imtk::EchoBackend& echo, const std::vector<imtk::AnnotatedSentence>& records,
                imtk::Strategy strategy, const imtk::EmbeddingProvider* provider,
                std::uint64_t seed, bool shuffle) {
    for (const auto& rec : records)
        for (const auto& ex :
             imtk::prepare_training_example(rec, strategy, provider, seed, shuffle))
            echo.prime(ex.prompt.text, ex.target.text);
}

// -- validate -------------------------------------------------------------------

int run_validate(const imtk::Config& config) {
    auto path = config.require_string("dataset");
    std::ifstream in(path);
    if (!in) {
        std::cerr << "cannot open dataset: " << path << "\n";
        return kExitIo;
    }
    auto out = ensure_out_dir(config);
    auto outcome = imtk::parse_dataset_lenient(in, config.get_bool("dataset.strict", false));
    auto min_readers =
        static_cast<std::size_t>(config.get_int("validate.min_readers", 5));
    auto report = imtk::validate_dataset(outcome.records, min_readers);

    std::ofstream report_file(out / "validation_report.txt");
    report_file << "records parsed: " << outcome.records.size() << "\n";
    report_file << "parse errors: " << outcome.errors.size() << "\n";
    for (const auto& e : outcome.errors) report_file << "parse error: " << e << "\n";
    report_file << "validation errors: " << report.errors.size() << "\n";
    for (const auto& e : report.errors) report_file << "error: " << e << "\n";
    report_file << "warnings: " << report.warnings.size() << "\n";
    for (const auto& w : report.warnings) report_file << "warning: " << w << "\n";

    write_run_log(out, "validate", {path});
    std::cout << "validate: " << outcome.records.size() << " records, "
              << outcome.errors.size() << " parse errors, " << report.errors.size()
              << " validation errors, " << report.warnings.size() << " warnings\n";
    return outcome.errors.empty() && report.errors.empty() ? kExitOk : kExitValidation;
}

// -- split ----------------------------------------------------------------------

int run_split(const imtk::Config& config) {
    auto records = load_dataset(config);
    auto out = ensure_out_dir(config);
    auto split = imtk::stratified_split(records, ratios_from(config), config.get_seed());

    auto dump = [&](const std::string& name, const std::vector<imtk::AnnotatedSentence>& part) {
        std::ofstream file(out / (name + ".jsonl"));
        imtk::write_dataset(file, part);
    };
    dump("train", split.train);
    dump("validation", split.validation);
    dump("test", split.test);

    std::ofstream summary(out / "split_summary.tsv");
    summary << "split\tsentences\ttitles\n";
    auto titles_of = [](const std::vector<imtk::AnnotatedSentence>& part) {
        std::set<std::string> titles;
        for (const auto& rec : part) titles.insert(rec.title);
        return titles.size();
    };
    summary << "train\t" << split.train.size() << '\t' << titles_of(split.train) << "\n";
    summary << "validation\t" << split.validation.size() << '\t'
            << titles_of(split.validation) << "\n";
    summary << "test\t" << split.test.size() << '\t' << titles_of(split.test) << "\n";

    for (const auto& w : split.warnings) std::cout << "warning: " << w << "\n";
    write_run_log(out, "split", split.warnings);
    std::cout << "split: " << split.train.size() << "/" << split.validation.size() << "/"
              << split.test.size() << " sentences\n";
    return kExitOk;
}

// -- prompts ----------------------------------------------------------------------

int run_prompts(const imtk::Config& config) {
    auto strategy = imtk::strategy_from_string(config.get_string("strategy", "one2one"));
    auto plugins = resolve_plugins(config, false, strategy_needs_provider(strategy));
    auto records = load_dataset(config);
    auto out = ensure_out_dir(config);

    std::ofstream file(out / "prompts.jsonl");
    std::size_t count = 0;
    for (const auto& rec : records) {
        auto examples = imtk::prepare_training_example(
            rec, strategy, plugins.provider.get(), config.get_seed(),
            config.get_bool("train.shuffle_random_order", false));
        for (const auto& ex : examples) {
            nlohmann::json j;
            j["id"] = rec.id;
            j["reader_order"] = ex.reader_order;
            j["prompt"] = ex.prompt.text;
            j["target"] = ex.target.text;
            file << j.dump() << "\n";
            ++count;
        }
    }
    write_run_log(out, "prompts", {});
    std::cout << "prompts: wrote " << count << " pairs\n";
    return kExitOk;
}

// -- train ------------------------------------------------------------------------

int run_train(const imtk::Config& config) {
    auto tc = training_config_from(config);
    tc.validate();
    auto plugins = resolve_plugins(config, true, strategy_needs_provider(tc.strategy));
    auto records = load_dataset(config);
    auto split = imtk::stratified_split(records, ratios_from(config), config.get_seed());
    auto out = ensure_out_dir(config);

    auto log = imtk::train(split, *plugins.backend, tc, plugins.provider.get());

    auto checkpoint_dir = out / "checkpoint";
    fs::create_directories(checkpoint_dir);
    plugins.backend->save(checkpoint_dir.string());

    std::ofstream log_file(out / "training_log.jsonl");
    for (const auto& entry : log.entries) {
        nlohmann::json j;
        j["epoch"] = entry.epoch;
        j["split"] = entry.split;
        j["loss"] = entry.loss;
        j["strategy"] = imtk::to_string(entry.strategy);
        j["alpha"] = entry.alpha;
        log_file << j.dump() << "\n";
    }

    write_run_log(out, "train",
                  {"epochs=" + std::to_string(log.epochs_run),
                   log.stopped_early ? "stopped early" : "ran to max_epochs"});
    std::cout << "train: " << log.epochs_run << " epochs, best validation loss "
              << log.best_validation_loss << (log.stopped_early ? " (early stop)" : "")
              << "\n";
    return kExitOk;
}

// -- generate -----------------------------------------------------------------------

struct DecodedRecord {
    const imtk::AnnotatedSentence* record = nullptr;
    std::vector<std::string> generated;       // aligned with readers in one2one
    std::vector<std::string> targets;
    std::size_t dropped_empty = 0;
    bool count_mismatch = false;
};

std::shared_ptr<imtk::GeneratorBackend> backend_for_decoding(
    const imtk::Config& config, const std::vector<imtk::AnnotatedSentence>& records,
    imtk::Strategy strategy, const imtk::EmbeddingProvider* provider) {
    auto backend = imtk::make_backend(config.require_string("backend"));
    auto checkpoint = config.get_string("checkpoint", "");
    if (!checkpoint.empty()) {
        if (!fs::exists(checkpoint))
            throw std::ios_base::failure("checkpoint not found: " + checkpoint);
        backend->load(checkpoint);
        return backend;
    }
    if (auto* echo = dynamic_cast<imtk::EchoBackend*>(backend.get())) {
        prime_echo(*echo, records, strategy, provider, config.get_seed(),
                   config.get_bool("train.shuffle_random_order", false));
        return backend;
    }
    throw std::ios_base::failure("backend \"" + backend->name() +
                                 "\" needs a checkpoint (set `checkpoint`)");
}

std::vector<DecodedRecord> decode_records(const imtk::Config& config,
                                          const std::vector<imtk::AnnotatedSentence>& records,
                                          imtk::Strategy strategy,
                                          const imtk::EmbeddingProvider* provider,
                                          imtk::GeneratorBackend& backend) {
    auto params = decoding_params_from(config);
    std::vector<DecodedRecord> decoded;
    for (const auto& rec : records) {
        DecodedRecord out;
        out.record = &rec;
        if (strategy == imtk::Strategy::One2One) {
            for (const auto& reader : rec.readers) {
                auto prompt = imtk::build_prompt(rec.title, rec.sentence, {reader.context});
                auto result = imtk::generate_interpretations(backend, prompt, params);
                out.generated.push_back(result.interpretations.empty()
                                            ? std::string()
                                            : result.interpretations.front());
                out.targets.push_back(reader.interpretation);
            }
        } else {
            auto examples = imtk::prepare_training_example(
                rec, strategy, provider, config.get_seed(),
                config.get_bool("train.shuffle_random_order", false));
            const auto& ex = examples.front();
            auto result = imtk::generate_interpretations(backend, ex.prompt, params);
            out.generated = result.interpretations;
            out.dropped_empty = result.dropped_empty;
            out.count_mismatch = result.count_mismatch;
            for (auto idx : ex.reader_order)
                out.targets.push_back(rec.readers[idx].interpretation);
        }
        decoded.push_back(std::move(out));
    }
    return decoded;
}

const std::vector<imtk::AnnotatedSentence>* pick_split(const imtk::Config& config,
                                                       const imtk::DatasetSplit& split,
                                                       std::vector<imtk::AnnotatedSentence>& all) {
    auto which = imtk::to_lower(config.get_string("evaluate.split", "test"));
    if (which == "train") return &split.train;
    if (which == "validation") return &split.validation;
    if (which == "test") return &split.test;
    if (which == "all") return &all;
    throw imtk::ConfigError("evaluate.split must be train|validation|test|all");
}

int run_generate(const imtk::Config& config) {
    auto strategy = imtk::strategy_from_string(config.get_string("strategy", "one2one"));
    auto provider = strategy_needs_provider(strategy)
                        ? imtk::make_provider(config.get_string("similarity.provider", "bow"))
                        : nullptr;
    auto records = load_dataset(config);
    auto split = imtk::stratified_split(records, ratios_from(config), config.get_seed());
    const auto* part = pick_split(config, split, records);
    if (part->empty()) throw imtk::ConfigError("selected split is empty");

    auto backend = backend_for_decoding(config, *part, strategy, provider.get());
    auto decoded = decode_records(config, *part, strategy, provider.get(), *backend);

    auto out = ensure_out_dir(config);
    std::ofstream file(out / "generations.jsonl");
    for (const auto& d : decoded) {
        nlohmann::json j;
        j["id"] = d.record->id;
        j["interpretations"] = d.generated;
        j["expected"] = d.targets.size();
        j["dropped_empty"] = d.dropped_empty;
        j["count_mismatch"] = d.count_mismatch;
        file << j.dump() << "\n";
    }
    write_run_log(out, "generate", {});
    std::cout << "generate: decoded " << decoded.size() << " sentences\n";
    return kExitOk;
}

// -- evaluate -----------------------------------------------------------------------

struct SentenceEval {
    std::string id;
    std::size_t n_generated = 0;
    std::size_t n_targets = 0;
    std::size_t unmatched_generated = 0;
    std::size_t unmatched_targets = 0;
    double match_cost = 0.0;
    std::array<double, 4> bleu = {0, 0, 0, 0};
    imtk::RougeScore rouge;
    double perplexity = 0.0;
};

int run_evaluate(const imtk::Config& config) {
    auto strategy = imtk::strategy_from_string(config.get_string("strategy", "one2one"));
    auto provider = strategy_needs_provider(strategy)
                        ? imtk::make_provider(config.get_string("similarity.provider", "bow"))
                        : nullptr;
    auto records = load_dataset(config);
    auto split = imtk::stratified_split(records, ratios_from(config), config.get_seed());
    const auto* part = pick_split(config, split, records);
    if (part->empty()) throw imtk::ConfigError("selected split is empty");

    auto backend = backend_for_decoding(config, *part, strategy, provider.get());
    auto decoded = decode_records(config, *part, strategy, provider.get(), *backend);

    // Reference corpus for perplexity: the split's ground-truth interpretations.
    std::vector<std::string> reference_corpus;
    for (const auto& rec : *part)
        for (const auto& reader : rec.readers)
            reference_corpus.push_back(reader.interpretation);

    std::vector<SentenceEval> rows;
    imtk::BleuAccumulator corpus_bleu(4);
    double total_match_cost = 0.0;
    std::size_t total_unmatched_gen = 0, total_unmatched_tgt = 0;
    std::vector<std::string> all_generated;

    for (const auto& d : decoded) {
        SentenceEval row;
        row.id = d.record->id;
        row.n_targets = d.targets.size();

        std::vector<std::string> generated;
        for (const auto& g : d.generated)
            if (!imtk::trim(g).empty()) generated.push_back(g);
        row.n_generated = generated.size();

        double n_pairs = 0.0;
        auto add_pair = [&](const std::string& cand, const std::string& ref) {
            auto b = imtk::bleu(cand, {ref}, 4);
            for (std::size_t k = 0; k < 4; ++k) row.bleu[k] += b.scores[k];
            auto r = imtk::rouge(cand, ref);
            row.rouge.rouge1 += r.rouge1;
            row.rouge.rouge2 += r.rouge2;
            row.rouge.rougeL += r.rougeL;
            row.rouge.rougeLsum += r.rougeLsum;
            corpus_bleu.add(cand, {ref});
            n_pairs += 1.0;
        };

        if (strategy == imtk::Strategy::One2One) {
            // Each generated interpretation is evaluated against its own
            // reader's target; no assignment step.
            std::size_t paired = 0;
            for (std::size_t j = 0; j < d.generated.size(); ++j) {
                if (imtk::trim(d.generated[j]).empty()) continue;
                row.match_cost +=
                    100.0 - imtk::bleu(d.generated[j], {d.targets[j]}, 1).bleu1();
                add_pair(d.generated[j], d.targets[j]);
                ++paired;
            }
            row.unmatched_targets = d.targets.size() - paired;
        } else if (!generated.empty()) {
            auto match = imtk::match_interpretations(generated, d.targets);
            row.match_cost = match.total_cost;
            row.unmatched_generated = match.unmatched_generated.size();
            row.unmatched_targets = match.unmatched_targets.size();
            for (const auto& [g, t] : match.pairs) add_pair(generated[g], d.targets[t]);
        } else {
            row.unmatched_targets = d.targets.size();
        }
        if (n_pairs > 0.0) {
            for (auto& v : row.bleu) v /= n_pairs;
            row.rouge.rouge1 /= n_pairs;
            row.rouge.rouge2 /= n_pairs;
            row.rouge.rougeL /= n_pairs;
            row.rouge.rougeLsum /= n_pairs;
        }
        if (!generated.empty())
            row.perplexity = imtk::unigram_perplexity(generated, reference_corpus);
        for (const auto& g : generated) all_generated.push_back(g);

        total_match_cost += row.match_cost;
        total_unmatched_gen += row.unmatched_generated;
        total_unmatched_tgt += row.unmatched_targets;
        rows.push_back(std::move(row));
    }

    auto out = ensure_out_dir(config);
    {
        std::ofstream per_sentence(out / "eval_per_sentence.tsv");
        per_sentence << "id\tn_generated\tn_targets\tunmatched_generated\tunmatched_targets"
                     << "\tmatch_cost\tbleu1\tbleu2\tbleu3\tbleu4"
                     << "\trouge1\trouge2\trougeL\trougeLsum\tperplexity\n";
        for (const auto& r : rows)
            per_sentence << r.id << '\t' << r.n_generated << '\t' << r.n_targets << '\t'
                         << r.unmatched_generated << '\t' << r.unmatched_targets << '\t'
                         << r.match_cost << '\t' << r.bleu[0] << '\t' << r.bleu[1] << '\t'
                         << r.bleu[2] << '\t' << r.bleu[3] << '\t' << r.rouge.rouge1 << '\t'
                         << r.rouge.rouge2 << '\t' << r.rouge.rougeL << '\t'
                         << r.rouge.rougeLsum << '\t' << r.perplexity << '\n';
    }

    std::ofstream aggregate(out / "eval_aggregate.tsv");
    aggregate << "metric\tvalue\n";
    auto corpus = corpus_bleu.score();
    auto mean_of = [&](auto getter) {
        double sum = 0.0;
        for (const auto& r : rows) sum += getter(r);
        return rows.empty() ? 0.0 : sum / static_cast<double>(rows.size());
    };
    for (std::size_t k = 0; k < 4; ++k) {
        aggregate << "bleu" << k + 1 << "_corpus\t" << corpus.scores[k] << "\n";
        aggregate << "bleu" << k + 1 << "_mean_sentence\t"
                  << mean_of([k](const SentenceEval& r) { return r.bleu[k]; }) << "\n";
    }
    aggregate << "rouge1_mean\t" << mean_of([](const SentenceEval& r) { return r.rouge.rouge1; })
              << "\n";
    aggregate << "rouge2_mean\t" << mean_of([](const SentenceEval& r) { return r.rouge.rouge2; })
              << "\n";
    aggregate << "rougeL_mean\t" << mean_of([](const SentenceEval& r) { return r.rouge.rougeL; })
              << "\n";
    aggregate << "rougeLsum_mean\t"
              << mean_of([](const SentenceEval& r) { return r.rouge.rougeLsum; }) << "\n";
    if (!all_generated.empty())
        aggregate << "perplexity\t"
                  << imtk::unigram_perplexity(all_generated, reference_corpus) << "\n";
    aggregate << "match_cost_total\t" << total_match_cost << "\n";
    aggregate << "unmatched_generated_total\t" << total_unmatched_gen << "\n";
    aggregate << "unmatched_targets_total\t" << total_unmatched_tgt << "\n";

    // Plugin metrics are report-only; unregistered names get a skip notice.
    for (const auto& name : imtk::split_whitespace(config.get_string("evaluate.plugins", ""))) {
        if (!imtk::metric_registry().has(name)) {
            aggregate << "plugin_" << name << "\tskipped (not registered)\n";
            continue;
        }
        double sum = 0.0;
        std::size_t n = 0;
        bool failed = false;
        for (const auto& d : decoded)
            for (std::size_t j = 0; j < std::min(d.generated.size(), d.targets.size()); ++j) {
                auto outcome =
                    imtk::metric_registry().run(name, d.generated[j], d.targets[j]);
                if (outcome.status == imtk::MetricStatus::ok) {
                    sum += outcome.value;
                    ++n;
                } else if (outcome.status == imtk::MetricStatus::failed) {
                    failed = true;
                }
            }
        if (failed)
            aggregate << "plugin_" << name << "\tunavailable (plugin failure)\n";
        else if (n > 0)
            aggregate << "plugin_" << name << "\t" << sum / static_cast<double>(n) << "\n";
    }

    // Diversity-grounding correlation; defined for one-to-one runs only,
    // where generated interpretations stay aligned with their readers.
    if (strategy == imtk::Strategy::One2One) {
        std::vector<imtk::DiversityRecord> pairs;
        for (const auto& d : decoded)
            for (std::size_t j = 0; j < d.record->readers.size(); ++j)
                for (std::size_t k = j + 1; k < d.record->readers.size(); ++k) {
                    if (imtk::trim(d.generated[j]).empty() ||
                        imtk::trim(d.generated[k]).empty())
                        continue;
                    pairs.push_back({d.record->readers[j].context,
                                     d.record->readers[k].context, d.generated[j],
                                     d.generated[k]});
                }
        if (pairs.size() < 3) {
            aggregate << "pearson_r\tnot computed (fewer than 3 reader pairs)\n";
        } else {
            try {
                auto report = imtk::diversity_grounding_report(pairs);
                aggregate << "pearson_r\t" << report.r << "\n";
                aggregate << "pearson_p\t" << report.p_value << "\n";
                aggregate << "pearson_n\t" << report.n << "\n";
            } catch (const std::domain_error& e) {
                aggregate << "pearson_r\tundefined (" << e.what() << ")\n";
            }
        }
    } else {
        aggregate << "pearson_r\tnot computed (one_to_many runs have no "
                  << "reader-aligned generations)\n";
    }

    write_run_log(out, "evaluate", {});
    std::cout << "evaluate: " << rows.size() << " sentences, corpus BLEU-1 "
              << corpus.scores[0] << ", total match cost " << total_match_cost << "\n";
    return kExitOk;
}

// -- diversity ---------------------------------------------------------------------

int run_diversity(const imtk::Config& config) {
    auto records = load_dataset(config);
    auto out = ensure_out_dir(config);

    std::vector<imtk::DiversityRecord> pairs;
    std::ofstream pair_file(out / "diversity_pairs.tsv");
    pair_file << "id\treader_j\treader_k\tdg\tdi\n";
    for (const auto& rec : records)
        for (std::size_t j = 0; j < rec.readers.size(); ++j)
            for (std::size_t k = j + 1; k < rec.readers.size(); ++k) {
                imtk::DiversityRecord pair{rec.readers[j].context, rec.readers[k].context,
                                           rec.readers[j].interpretation,
                                           rec.readers[k].interpretation};
                auto d_g = imtk::dg(pair.g_j, pair.g_k);
                auto d_i = imtk::di(pair.i_j, pair.i_k);
                pair_file << rec.id << '\t' << j << '\t' << k << '\t' << d_g.value << '\t'
                          << d_i << '\n';
                pairs.push_back(std::move(pair));
            }

    std::ofstream report_file(out / "diversity_report.tsv");
    report_file << "metric\tvalue\n";
    report_file << "pairs\t" << pairs.size() << "\n";
    if (pairs.size() < 3) {
        report_file << "pearson_r\tnot computed (fewer than 3 pairs)\n";
        write_run_log(out, "diversity", {});
        std::cout << "diversity: only " << pairs.size() << " pairs, correlation skipped\n";
        return kExitValidation;
    }
    try {
        auto report = imtk::diversity_grounding_report(pairs);
        report_file << "pearson_r\t" << report.r << "\n";
        report_file << "pearson_p\t" << report.p_value << "\n";
        report_file << "pearson_n\t" << report.n << "\n";
        write_run_log(out, "diversity", {});
        std::cout << "diversity: r = " << report.r << " over " << report.n << " pairs\n";
        return kExitOk;
    } catch (const std::domain_error& e) {
        report_file << "pearson_r\tundefined (" << e.what() << ")\n";
        write_run_log(out, "diversity", {std::string("undefined: ") + e.what()});
        std::cout << "diversity: correlation undefined (" << e.what() << ")\n";
        return kExitValidation;
    }
}

// -- moderate ----------------------------------------------------------------------

std::vector<imtk::UnscoredCluster> load_clusters(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::ios_base::failure("cannot open clusters file: " + path);
    std::vector<imtk::UnscoredCluster> clusters;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (imtk::trim(line).empty()) continue;
        try {
            auto j = nlohmann::json::parse(line);
            imtk::UnscoredCluster cluster;
            cluster.id = j.at("id").get<std::string>();
            cluster.sentence = j.at("sentence").get<std::string>();
            for (const auto& interp : j.at("interpretations"))
                cluster.interpretations.push_back(interp.get<std::string>());
            auto source = imtk::to_lower(j.value("source", "human"));
            if (source != "human" && source != "model")
                throw std::invalid_argument("source must be human or model");
            cluster.source =
                source == "human" ? imtk::ClusterSource::human : imtk::ClusterSource::model;
            clusters.push_back(std::move(cluster));
        } catch (const std::exception& e) {
            throw imtk::ParseError(line_no, e.what());
        }
    }
    return clusters;
}

std::shared_ptr<imtk::ScorerClient> make_scorer(const imtk::Config& config) {
    std::shared_ptr<imtk::ScorerClient> inner;
    auto mock_path = config.get_string("moderation.mock_scores", "");
    if (!mock_path.empty()) {
        if (!fs::exists(mock_path))
            throw std::ios_base::failure("mock score file not found: " + mock_path);
        inner = std::make_shared<imtk::MockScorerClient>(mock_path);
    } else {
        auto endpoint = config.get_string("moderation.endpoint", "");
        if (endpoint.empty())
            throw imtk::ConfigError(
                "moderation needs moderation.mock_scores or moderation.endpoint");
        inner = std::make_shared<imtk::HttpScorerClient>(
            endpoint, config.get_string("moderation.api_key_env", ""));
    }
    imtk::RetryPolicy retry;
    retry.max_retries =
        static_cast<std::size_t>(config.get_int("moderation.max_retries", 3));
    retry.initial_backoff =
        std::chrono::milliseconds(config.get_int("moderation.backoff_ms", 100));
    return std::make_shared<imtk::ResilientScorer>(
        inner, retry, config.get_double("moderation.qps", 0.0),
        static_cast<std::size_t>(config.get_int("moderation.max_in_flight", 4)));
}

int run_moderate(const imtk::Config& config) {
    auto clusters_path = config.require_string("moderation.clusters");
    auto clusters = load_clusters(clusters_path);
    if (clusters.empty()) {
        std::cerr << "clusters file is empty: " << clusters_path << "\n";
        return kExitValidation;
    }
    auto scorer = make_scorer(config);
    auto out = ensure_out_dir(config);

    const double margin = config.get_double("moderation.margin", 0.20);
    const double low = config.get_double("moderation.low", 0.1);
    const double high = config.get_double("moderation.high", 0.5);

    auto outcome = imtk::score_clusters(*scorer, clusters);

    std::vector<imtk::InterpretationCluster> human, model;
    for (const auto& cluster : outcome.clusters)
        (cluster.source == imtk::ClusterSource::human ? human : model).push_back(cluster);

    std::ofstream rows_file(out / "moderation_rows.tsv");
    std::ofstream summary_file(out / "moderation_summary.tsv");
    summary_file << "source\tattribute\tclusters\tpercent_a1_any\tpercent_a1_margin"
                 << "\tpercent_a2\n";

    auto emit = [&](const std::string& label,
                    const std::vector<imtk::InterpretationCluster>& group,
                    bool header_written) {
        auto report = imtk::moderation_report(group, margin, low, high);
        if (!header_written) imtk::write_report_rows(rows_file, report);
        else
            for (const auto& row : report.rows)
                rows_file << row.id << '\t' << imtk::to_string(row.source) << '\t'
                          << row.attribute << '\t' << row.sentence_score << '\t'
                          << row.max_interpretation_score << '\t' << row.a1_any << '\t'
                          << row.a1_margin << '\t' << row.a2 << '\n';
        for (const auto& s : report.summaries)
            summary_file << label << '\t' << s.attribute << '\t' << s.clusters << '\t'
                         << s.percent_a1_any << '\t' << s.percent_a1_margin << '\t'
                         << s.percent_a2 << '\n';
        for (const auto& attr : imtk::toxicity_attributes()) {
            std::ofstream curve(out / ("curve_" + label + "_" + attr + ".tsv"));
            imtk::write_score_curve(curve, report, attr);
        }
        return report;
    };

    bool wrote_header = false;
    std::optional<imtk::ModerationReport> human_report, model_report;
    if (!human.empty()) {
        human_report = emit("human", human, wrote_header);
        wrote_header = true;
    }
    if (!model.empty()) model_report = emit("model", model, wrote_header);

    // Overlap recall: how many human-flagged sentences the model also
    // flagged, per attribute and analysis.
    if (human_report && model_report) {
        std::ofstream overlap_file(out / "moderation_overlap.tsv");
        overlap_file << "attribute\tanalysis\thuman_flags\tmodel_flags\toverlap_recall\n";
        auto flags_of = [](const imtk::ModerationReport& report, const std::string& attr,
                           auto getter) {
            std::set<std::string> ids;
            for (const auto& row : report.rows)
                if (row.attribute == attr && getter(row)) ids.insert(row.id);
            return ids;
        };
        for (const auto& attr : imtk::toxicity_attributes()) {
            struct Analysis {
                const char* name;
                bool (*get)(const imtk::ClusterRow&);
            };
            const Analysis analyses[] = {
                {"a1_any", [](const imtk::ClusterRow& r) { return r.a1_any; }},
                {"a1_margin", [](const imtk::ClusterRow& r) { return r.a1_margin; }},
                {"a2", [](const imtk::ClusterRow& r) { return r.a2; }},
            };
            for (const auto& analysis : analyses) {
                auto human_ids = flags_of(*human_report, attr, analysis.get);
                auto model_ids = flags_of(*model_report, attr, analysis.get);
                auto recall = imtk::overlap_recall(model_ids, human_ids);
                overlap_file << attr << '\t' << analysis.name << '\t' << human_ids.size()
                             << '\t' << model_ids.size() << '\t';
                if (recall)
                    overlap_file << *recall << '\n';
                else
                    overlap_file << "no human flags\n";
            }
        }
    }

    std::ofstream failures_file(out / "moderation_failures.txt");
    for (const auto& f : outcome.failures) failures_file << f << "\n";

    write_run_log(out, "moderate",
                  {"scored=" + std::to_string(outcome.clusters.size()),
                   "failures=" + std::to_string(outcome.failures.size())});
    std::cout << "moderate: scored " << outcome.clusters.size() << " clusters, "
              << outcome.failures.size() << " failures\n";
    return outcome.failures.empty() ? kExitOk : kExitExternal;
}

template <typename Fn>
int guarded(Fn&& fn) {
    try {
        return fn();
    } catch (const imtk::CapabilityError& e) {
        std::cerr << "capability error: " << e.what() << "\n";
        return kExitCapability;
    } catch (const imtk::ScoringError& e) {
        std::cerr << "scoring error: " << e.what() << "\n";
        return kExitExternal;
    } catch (const std::ios_base::failure& e) {
        std::cerr << "i/o error: " << e.what() << "\n";
        return kExitIo;
    } catch (const imtk::ParseError& e) {
        std::cerr << "parse error: " << e.what() << "\n";
        return kExitValidation;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitValidation;
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"interpretation modeling toolkit"};
    app.require_subcommand(1);

    CliOptions opts;
    app.add_option("--config", opts.config_path, "config file (flat key = value lines)");
    app.add_option("--out", opts.out_dir, "output directory (overrides config `out`)");
    app.add_option("--seed", opts.seed, "seed override");
    app.add_option("--set", opts.overrides, "config override, key=value (repeatable)");

    auto* validate = app.add_subcommand("validate", "check a dataset file");
    validate->add_option("--dataset", opts.dataset, "dataset path override");
    validate->add_flag("--strict", opts.strict, "reject unknown keys");

    auto* split = app.add_subcommand("split", "title-stratified dataset split");
    split->add_option("--dataset", opts.dataset, "dataset path override");

    auto* prompts = app.add_subcommand("prompts", "dump rendered prompts and targets");
    prompts->add_option("--dataset", opts.dataset, "dataset path override");

    auto* train = app.add_subcommand("train", "train a backend");
    train->add_option("--dataset", opts.dataset, "dataset path override");

    auto* generate = app.add_subcommand("generate", "decode interpretations");
    generate->add_option("--dataset", opts.dataset, "dataset path override");
    generate->add_option("--checkpoint", opts.checkpoint, "checkpoint directory");

    auto* evaluate = app.add_subcommand("evaluate", "decode and score against targets");
    evaluate->add_option("--dataset", opts.dataset, "dataset path override");
    evaluate->add_option("--checkpoint", opts.checkpoint, "checkpoint directory");

    auto* diversity = app.add_subcommand("diversity", "dg/di correlation over a dataset");
    diversity->add_option("--dataset", opts.dataset, "dataset path override");

    auto* moderate = app.add_subcommand("moderate", "toxicity flag analyses");
    moderate->add_option("--clusters", opts.clusters_file, "clusters file (jsonl)");

    CLI11_PARSE(app, argc, argv);

    return guarded([&]() -> int {
        auto config = load_config(opts);
        if (!opts.clusters_file.empty()) config.set("moderation.clusters", opts.clusters_file);
        if (validate->parsed()) return run_validate(config);
        if (split->parsed()) return run_split(config);
        if (prompts->parsed()) return run_prompts(config);
        if (train->parsed()) return run_train(config);
        if (generate->parsed()) return run_generate(config);
        if (evaluate->parsed()) return run_evaluate(config);
        if (diversity->parsed()) return run_diversity(config);
        if (moderate->parsed()) return run_moderate(config);
        return kExitOk;
    });
}
