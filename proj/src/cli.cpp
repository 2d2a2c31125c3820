#include "annoembed/cli.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>

#include "CLI11.hpp"
#include "annoembed/analysis.hpp"
#include "annoembed/checkpoint.hpp"
#include "annoembed/corpus.hpp"
#include "annoembed/metrics.hpp"
#include "annoembed/synthgen.hpp"
#include "annoembed/trainer.hpp"
#include "json.hpp"

namespace annoembed {

namespace fs = std::filesystem;
using ojson = nlohmann::ordered_json;

namespace {

const std::vector<std::string> kCommands = {"synth", "split", "train", "eval", "baselines", "ablate", "analyze", "report"};

void write_text(const fs::path& path, const std::string& text) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << text;
    if (!out) throw std::runtime_error("error writing " + path.string());
}

void write_json(const fs::path& path, const ojson& j) { write_text(path, j.dump(2) + "\n"); }

std::string num(double v) {
    if (std::isnan(v)) return "";
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

ojson maybe(double v) { return std::isnan(v) ? ojson(nullptr) : ojson(v); }

Dataset load_with_context(const fs::path& path) {
    try {
        return load_dataset(path);
    } catch (const DataError& e) {
        throw DataError(path.string() + ": " + e.what());
    }
}

// Square matrix as CSV with the registry names on both axes; undefined cells empty.
std::string matrix_csv(const std::vector<std::string>& names, const std::vector<double>& values) {
    std::ostringstream s;
    for (const auto& n : names) s << ',' << n;
    s << '\n';
    for (std::size_t i = 0; i < names.size(); ++i) {
        s << names[i];
        for (std::size_t j = 0; j < names.size(); ++j) s << ',' << num(values[i * names.size() + j]);
        s << '\n';
    }
    return s.str();
}

ojson matrix_json(std::size_t n, const std::vector<double>& values) {
    ojson rows = ojson::array();
    for (std::size_t i = 0; i < n; ++i) {
        ojson row = ojson::array();
        for (std::size_t j = 0; j < n; ++j) row.push_back(maybe(values[i * n + j]));
        rows.push_back(row);
    }
    return rows;
}

ojson mean_std_json(const std::vector<double>& values) {
    const MeanStd ms = mean_std(values);
    return ojson{{"values", values}, {"mean", ms.mean}, {"stddev", ms.stddev}};
}

std::string mean_sd_text(const std::vector<double>& values) {
    const MeanStd ms = mean_std(values);
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.2f (%.2f)", 100.0 * ms.mean, 100.0 * ms.stddev);
    return buf;
}

// `--config file.json` expands to flags placed ahead of the user's own, so
// explicit flags win. Accepts either a flat {flag: value} object or a command
// manifest {"command": ..., "options": {...}}.
std::vector<std::string> expand_config(const std::vector<std::string>& args) {
    std::optional<std::string> config_path;
    for (std::size_t i = 0; i < args.size(); ++i) {
        if (args[i] == "--config" && i + 1 < args.size()) config_path = args[i + 1];
        else if (args[i].rfind("--config=", 0) == 0) config_path = args[i].substr(9);
    }
    if (!config_path) return args;

    std::ifstream in(*config_path);
    if (!in) throw std::invalid_argument("cannot read config " + *config_path);
    nlohmann::json cfg;
    try {
        cfg = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        throw std::invalid_argument("config " + *config_path + ": " + e.what());
    }
    if (!cfg.is_object()) throw std::invalid_argument("config " + *config_path + " must be a JSON object");
    std::optional<std::string> command;
    if (cfg.contains("command")) command = cfg["command"].get<std::string>();
    const nlohmann::json options = cfg.contains("options") ? cfg["options"] : cfg;

    std::vector<std::string> rest = args;
    auto user_cmd = std::find_if(rest.begin(), rest.end(), [](const std::string& a) {
        return std::find(kCommands.begin(), kCommands.end(), a) != kCommands.end();
    });
    if (user_cmd != rest.end()) {
        command = *user_cmd;
        rest.erase(user_cmd);
    }
    std::vector<std::string> out;
    if (command) out.push_back(*command);
    for (const auto& [key, value] : options.items()) {
        if (key == "command" || key == "options" || key == "config") continue;
        const std::string flag = "--" + key;
        if (value.is_null()) continue;
        if (value.is_boolean()) {
            if (value.get<bool>()) out.push_back(flag);
        } else if (value.is_array()) {
            if (value.empty()) continue;
            out.push_back(flag);
            for (const auto& v : value) out.push_back(v.is_string() ? v.get<std::string>() : v.dump());
        } else {
            out.push_back(flag);
            out.push_back(value.is_string() ? value.get<std::string>() : value.dump());
        }
    }
    out.insert(out.end(), rest.begin(), rest.end());
    return out;
}

// Effective value of every option on `app` (given or defaulted).
void collect_options(const CLI::App& app, ojson& out) {
    for (const CLI::Option* opt : app.get_options()) {
        if (opt == app.get_help_ptr() || opt->get_lnames().empty()) continue;
        const std::string name = opt->get_lnames().front();
        if (name == "config") continue;
        if (opt->get_type_size() == 0) {
            out[name] = opt->count() > 0;
        } else if (opt->get_items_expected_max() > 1) {
            if (opt->count() > 0) out[name] = opt->as<std::vector<std::string>>();
        } else if (opt->count() > 0) {
            out[name] = opt->as<std::string>();
        } else if (!opt->get_default_str().empty()) {
            out[name] = opt->get_default_str();
        }
    }
}

struct Globals {
    std::uint64_t seed = 0;
    std::string out = "annoembed_out";
};

struct SplitFiles {
    std::string split_dir;
    std::string train, dev, test;

    void add_to(CLI::App* cmd, bool need_test) {
        cmd->add_option("--split", split_dir, "Directory written by `split`")->check(CLI::ExistingDirectory);
        cmd->add_option("--train", train, "Train JSONL")->check(CLI::ExistingFile);
        cmd->add_option("--dev", dev, "Dev JSONL")->check(CLI::ExistingFile);
        cmd->add_option("--test", test, need_test ? "Test JSONL" : "Test JSONL, evaluated after training")
            ->check(CLI::ExistingFile);
    }

    // Exactly one source: a split directory or explicit files.
    void resolve() {
        if (!split_dir.empty()) {
            if (!train.empty() || !test.empty() || !dev.empty())
                throw std::invalid_argument("give either --split or --train/--dev/--test, not both");
            const fs::path dir(split_dir);
            train = (dir / "train.jsonl").string();
            test = fs::exists(dir / "test.jsonl") ? (dir / "test.jsonl").string() : "";
            dev = fs::exists(dir / "dev.jsonl") ? (dir / "dev.jsonl").string() : "";
        }
    }
};

class Runner {
public:
    explicit Runner(const std::vector<std::string>& args) : args_(args) { build(); }

    int run() {
        try {
            std::vector<std::string> reversed = expand_config(args_);
            std::reverse(reversed.begin(), reversed.end());
            app_.parse(reversed);
        } catch (const CLI::ParseError& e) {
            return app_.exit(e);
        } catch (const std::exception& e) {
            std::cerr << "error: " << e.what() << "\n";
            return 2;
        }
        const fs::path out(globals_.out);
        try {
            if (!action_) throw std::logic_error("no command selected");
            fs::create_directories(out);
            fs::remove(out / "FAILED");
            ojson details = ojson::object();
            action_(details);
            ojson manifest;
            manifest["command"] = active_->get_name();
            ojson options = ojson::object();
            collect_options(app_, options);
            collect_options(*active_, options);
            manifest["options"] = options;
            for (auto& [k, v] : details.items()) manifest[k] = v;
            write_json(out / "manifest.json", manifest);
            return 0;
        } catch (const std::exception& e) {
            std::cerr << "error: " << e.what() << "\n";
            std::error_code ec;
            if (fs::is_directory(out, ec)) {
                std::ofstream marker(out / "FAILED", std::ios::binary);
                marker << e.what() << "\n";
            }
            return 1;
        }
    }

private:
    void build() {
        app_.option_defaults()->always_capture_default()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
        app_.fallthrough();
        app_.require_subcommand(1);
        app_.add_option("--seed", globals_.seed, "Master seed");
        app_.add_option("--out", globals_.out, "Output directory")->envname(kOutEnvVar);
        app_.add_option("--config", config_path_, "JSON options file or a command manifest to rerun");

        add_synth();
        add_split();
        add_train();
        add_eval();
        add_baselines();
        add_ablate();
        add_analyze();
        add_report();
    }

    CLI::App* command(const std::string& name, const std::string& help, std::function<void(ojson&)> action) {
        CLI::App* cmd = app_.add_subcommand(name, help);
        cmd->callback([this, cmd, action] {
            active_ = cmd;
            action_ = action;
        });
        return cmd;
    }

    fs::path out() const { return fs::path(globals_.out); }

    // ---------------------------------------------------------------------
    void add_synth() {
        auto* cmd = command("synth", "Generate a synthetic annotator population", [this](ojson& details) {
            synth_.seed = globals_.seed;
            synth_.demographics = !no_demographics_;
            const Population pop = generate_population(synth_);
            write_dataset(pop.dataset, out() / "corpus.jsonl");
            write_text(out() / "ground_truth.json", ground_truth_json(synth_, pop));
            details["annotations"] = pop.dataset.size();
            details["annotators"] = pop.dataset.annotator_count();
            std::cout << "wrote " << pop.dataset.size() << " annotations to " << (out() / "corpus.jsonl").string()
                      << "\n";
        });
        cmd->add_option("--annotators", synth_.n_annotators, "Number of annotators");
        cmd->add_option("--texts", synth_.n_texts, "Number of texts");
        cmd->add_option("--labels", synth_.n_labels, "Number of label classes");
        cmd->add_option("--vocab", synth_.vocab_size, "Vocabulary size");
        cmd->add_option("--groups", synth_.groups, "Annotator groups (0 = every annotator idiosyncratic)");
        cmd->add_option("--bias", synth_.bias_strength, "Bias strength in [0, 1]");
        cmd->add_option("--per-text", synth_.annotations_per_text, "Annotators per text");
        cmd->add_flag("--no-demographics", no_demographics_, "Omit demographic metadata");
    }

    // ---------------------------------------------------------------------
    void add_split() {
        auto* cmd = command("split", "Split a corpus into train/test (and dev)", [this](ojson& details) {
            const Dataset d = load_with_context(split_data_);
            const SplitKind kind = parse_split_kind(split_kind_);
            Split s = kind == SplitKind::Annotation
                          ? make_annotation_split(d, train_frac_, globals_.seed, dev_frac_)
                          : make_annotator_split(d, train_frac_, globals_.seed);
            if (kind == SplitKind::Annotator && dev_frac_ > 0)
                throw std::invalid_argument("--dev-frac applies to annotation splits only");
            write_dataset(s.train, out() / "train.jsonl");
            write_dataset(s.test, out() / "test.jsonl");
            if (s.dev) write_dataset(*s.dev, out() / "dev.jsonl");
            details["kind"] = to_string(kind);
            details["train_frac"] = train_frac_;
            details["dev_frac"] = dev_frac_;
            details["seed"] = globals_.seed;
            details["counts"] = ojson{{"train", s.train.size()},
                                      {"dev", s.dev ? s.dev->size() : 0},
                                      {"test", s.test.size()},
                                      {"train_annotators", s.train.annotator_count()},
                                      {"test_annotators", s.test.annotator_count()}};
            std::cout << to_string(kind) << " split: train " << s.train.size() << ", test " << s.test.size();
            if (s.dev) std::cout << ", dev " << s.dev->size();
            std::cout << "\n";
        });
        cmd->add_option("--data", split_data_, "Corpus JSONL")->required()->check(CLI::ExistingFile);
        cmd->add_option("--kind", split_kind_, "annotation or annotator")
            ->check(CLI::IsMember({"annotation", "annotator"}));
        cmd->add_option("--train-frac", train_frac_, "Train fraction")->check(CLI::Range(0.0, 1.0));
        cmd->add_option("--dev-frac", dev_frac_, "Share of each annotator's train part held out as dev")
            ->check(CLI::Range(0.0, 1.0));
    }

    // ---------------------------------------------------------------------
    void add_model_options(CLI::App* cmd) {
        cmd->add_option("--mode", mode_, "text_only, text_plus_annotation, text_plus_annotator, text_plus_both")
            ->check([](const std::string& s) {
                try {
                    parse_mode(s);
                    return std::string();
                } catch (const std::invalid_argument& e) {
                    return std::string(e.what());
                }
            });
        cmd->add_option("--epochs", train_cfg_.epochs, "Epochs");
        cmd->add_option("--batch", train_cfg_.batch_size, "Mini-batch size");
        cmd->add_option("--lr", train_cfg_.learning_rate, "Adam learning rate");
        cmd->add_option("--hidden", enc_cfg_.hidden, "Hidden size");
        cmd->add_option("--layers", enc_cfg_.layers, "Transformer blocks");
        cmd->add_option("--heads", enc_cfg_.heads, "Attention heads");
        cmd->add_option("--max-len", enc_cfg_.max_len, "Maximum sequence length including [CLS]/[SEP]");
        cmd->add_option("--ffn-mult", enc_cfg_.ffn_mult, "Feed-forward width multiplier");
        cmd->add_option("--dropout", enc_cfg_.dropout, "Dropout rate")->check(CLI::Range(0.0, 1.0));
        cmd->add_option("--eval-every", train_cfg_.eval_every, "Dev evaluation interval in epochs (0 = off)");
        cmd->add_flag("--select-on-dev", train_cfg_.select_on_dev, "Keep the best dev epoch");
        cmd->add_option("--runs", runs_, "Independent runs with seeds derived from --seed")
            ->check(CLI::PositiveNumber);
        cmd->add_flag("--drop-unseen", drop_unseen_, "Drop test annotations of annotators unseen in training");
    }

    // One run per derived seed; single runs use the master seed itself.
    std::uint64_t run_seed(std::size_t r) const { return runs_ == 1 ? globals_.seed : derive_seed(globals_.seed, r); }

    Dataset eval_set(const Dataset& test, const ModelCheckpoint& model) const {
        if (!drop_unseen_) return test;
        std::vector<AnnotatedExample> kept;
        for (const auto& ex : test.examples())
            if (model.annotator_row(ex.annotator_id)) kept.push_back(ex);
        return test.with_examples(std::move(kept));
    }

    void add_train() {
        auto* cmd = command("train", "Train one or more models", [this](ojson& details) {
            files_.resolve();
            if (files_.train.empty()) throw std::invalid_argument("train needs --split or --train");
            train_cfg_.mode = parse_mode(mode_);
            const Dataset train_set = load_with_context(files_.train);
            std::optional<Dataset> dev;
            if (!files_.dev.empty()) dev = load_with_context(files_.dev);
            std::optional<Dataset> test;
            if (!files_.test.empty()) test = load_with_context(files_.test);

            std::vector<double> em, f1;
            ojson seeds = ojson::array();
            for (std::size_t r = 0; r < runs_; ++r) {
                TrainConfig cfg = train_cfg_;
                cfg.seed = run_seed(r);
                seeds.push_back(cfg.seed);
                TrainResult result;
                try {
                    result = train(train_set, dev, enc_cfg_, cfg);
                } catch (const TrainingError& e) {
                    throw TrainingError(std::string(e.what()) + " [run " + std::to_string(r) + "]");
                }
                const fs::path run_dir = out() / ("run" + std::to_string(r));
                save_checkpoint(result.checkpoint, run_dir / "checkpoint");

                const ModelCheckpoint& model = result.checkpoint;
                const OverheadReport ov =
                    overhead_report(model.annotator_ids.size(), model.label_names.size(),
                                    model.encoder_config.hidden, model.mode(), model.base_parameter_count());
                ojson log;
                log["seed"] = cfg.seed;
                log["mode"] = to_string(cfg.mode);
                log["parameters"] = ojson{{"base", ov.base},
                                          {"added", ov.added},
                                          {"ratio", ov.ratio},
                                          {"exceeds_one_million", ov.exceeds_one_million},
                                          {"exceeds_one_percent", ov.exceeds_one_percent}};
                log["loss_trace"] = result.loss_trace;
                log["epoch_loss"] = result.epoch_loss;
                ojson dev_em = ojson::array();
                for (const auto& [epoch, value] : result.dev_em) dev_em.push_back({{"epoch", epoch}, {"em", value}});
                log["dev_em"] = dev_em;
                log["selected_epoch"] = result.selected_epoch ? ojson(*result.selected_epoch) : ojson(nullptr);
                write_json(run_dir / "train_log.json", log);

                std::cout << "run " << r << " seed " << cfg.seed << ": final epoch loss "
                          << (result.epoch_loss.empty() ? 0.0 : result.epoch_loss.back());
                if (test) {
                    const EvalReport report = evaluate(model, eval_set(*test, model));
                    write_json(run_dir / "eval.json", to_json(report));
                    write_text(run_dir / "eval.txt", to_table(report));
                    em.push_back(report.em_accuracy);
                    f1.push_back(report.macro_f1);
                    char buf[32];
                    std::snprintf(buf, sizeof buf, ", test EM %.2f", 100.0 * report.em_accuracy);
                    std::cout << buf;
                }
                std::cout << "\n";
            }
            details["run_seeds"] = seeds;
            if (test) {
                ojson summary;
                summary["mode"] = mode_;
                summary["runs"] = runs_;
                summary["run_seeds"] = seeds;
                summary["em_accuracy"] = mean_std_json(em);
                summary["macro_f1"] = mean_std_json(f1);
                write_json(out() / "summary.json", summary);
                std::cout << "EM " << mean_sd_text(em) << "  macro F1 " << mean_sd_text(f1) << "\n";
            }
        });
        files_.add_to(cmd, false);
        add_model_options(cmd);
    }

    // ---------------------------------------------------------------------
    void add_eval() {
        auto* cmd = command("eval", "Evaluate a checkpoint", [this](ojson& details) {
            const ModelCheckpoint model = load_checkpoint(checkpoint_);
            const Dataset data = eval_set(load_with_context(eval_data_), model);
            const EvalReport report = ablation_eval(model, data, parse_variant(variant_));
            write_json(out() / "eval.json", to_json(report));
            write_text(out() / "eval.txt", to_table(report));
            details["annotations"] = report.annotations;
            std::cout << to_table(report);
        });
        cmd->add_option("--checkpoint", checkpoint_, "Checkpoint directory")->required()->check(CLI::ExistingDirectory);
        cmd->add_option("--data", eval_data_, "Evaluation JSONL")->required()->check(CLI::ExistingFile);
        cmd->add_option("--variant", variant_, "combination, text_only or embedding_only")
            ->check(CLI::IsMember({"combination", "text_only", "embedding_only"}));
        cmd->add_flag("--drop-unseen", drop_unseen_, "Drop annotations of annotators unseen in training");
    }

    // ---------------------------------------------------------------------
    void add_baselines() {
        auto* cmd = command("baselines", "Random and majority baselines", [this](ojson&) {
            files_.resolve();
            if (files_.test.empty()) throw std::invalid_argument("baselines needs --split or --test");
            const Dataset test = load_with_context(files_.test);
            const Baselines b = files_.train.empty() ? baselines(test, globals_.seed)
                                                     : baselines(load_with_context(files_.train), test, globals_.seed);
            ojson j;
            j["annotations"] = test.size();
            j["random_em"] = b.random_em;
            j["random_stddev"] = b.random_stddev;
            j["random_resamples"] = kRandomBaselineResamples;
            j["majority_em"] = b.majority_em;
            j["majority_label"] = test.label_names()[b.majority_label];
            j["majority_from"] = files_.train.empty() ? "test" : "train";
            write_json(out() / "baselines.json", j);
            char buf[160];
            std::snprintf(buf, sizeof buf, "random    %.2f (%.2f)\nmajority  %.2f  [%s]\n", 100.0 * b.random_em,
                          100.0 * b.random_stddev, 100.0 * b.majority_em, test.label_names()[b.majority_label].c_str());
            std::cout << buf;
        });
        files_.add_to(cmd, true);
    }

    // ---------------------------------------------------------------------
    void add_ablate() {
        auto* cmd = command("ablate", "Combination vs text-only vs embedding-only inference", [this](ojson& details) {
            const ModelCheckpoint model = load_checkpoint(checkpoint_);
            const Dataset data = eval_set(load_with_context(eval_data_), model);
            std::vector<Variant> variants = {Variant::Combination, Variant::TextOnly};
            if (model.mode() != CombinationMode::TextOnly) variants.push_back(Variant::EmbeddingOnly);
            ojson reports = ojson::array();
            std::string table;
            for (Variant v : variants) {
                const EvalReport r = ablation_eval(model, data, v);
                reports.push_back(to_json(r));
                char line[128];
                std::snprintf(line, sizeof line, "%-16s EM %6.2f  macro F1 %6.2f\n", to_string(v).c_str(),
                              100.0 * r.em_accuracy, 100.0 * r.macro_f1);
                table += line;
            }
            write_json(out() / "ablation.json", reports);
            write_text(out() / "ablation.txt", table);
            details["variants"] = reports.size();
            std::cout << table;
        });
        cmd->add_option("--checkpoint", checkpoint_, "Checkpoint directory")->required()->check(CLI::ExistingDirectory);
        cmd->add_option("--data", eval_data_, "Evaluation JSONL")->required()->check(CLI::ExistingFile);
        cmd->add_flag("--drop-unseen", drop_unseen_, "Drop annotations of annotators unseen in training");
    }

    // ---------------------------------------------------------------------
    void add_analyze() {
        auto* cmd = command("analyze", "Agreement, label correlation, clustering, projection, demographics",
                            [this](ojson& details) { analyze(details); });
        cmd->add_option("--data", analyze_data_, "Corpus JSONL")->check(CLI::ExistingFile);
        cmd->add_option("--checkpoint", checkpoint_, "Checkpoint directory")->check(CLI::ExistingDirectory);
        cmd->add_option("--what", what_, "kappa, correlation, cluster, project, align (default: all available)")
            ->multi_option_policy(CLI::MultiOptionPolicy::TakeAll)
            ->check(CLI::IsMember({"kappa", "correlation", "cluster", "project", "align"}));
        cmd->add_option("--k", k_, "Clusters")->check(CLI::PositiveNumber);
        cmd->add_option("--min-overlap", min_overlap_, "Minimum co-annotations for a defined kappa")
            ->check(CLI::PositiveNumber);
        cmd->add_option("--min-examples", min_examples_, "Minimum annotations for the label correlation");
        cmd->add_option("--points", points_, "annotation or annotator embeddings")
            ->check(CLI::IsMember({"annotation", "annotator"}));
    }

    void analyze(ojson& details) {
        std::optional<Dataset> data;
        if (!analyze_data_.empty()) data = load_with_context(analyze_data_);
        std::optional<ModelCheckpoint> model;
        if (!checkpoint_.empty()) model = load_checkpoint(checkpoint_);

        std::vector<std::string> what = what_;
        if (what.empty()) {
            if (data) what.insert(what.end(), {"kappa", "correlation"});
            if (model) what.insert(what.end(), {"cluster", "project"});
            if (model && data) what.push_back("align");
        }
        if (what.empty()) throw std::invalid_argument("analyze needs --data and/or --checkpoint");
        auto wants = [&](const char* name) { return std::find(what.begin(), what.end(), name) != what.end(); };
        auto need_data = [&](const char* name) {
            if (!data) throw std::invalid_argument(std::string("--what ") + name + " needs --data");
        };
        auto need_model = [&](const char* name) {
            if (!model) throw std::invalid_argument(std::string("--what ") + name + " needs --checkpoint");
        };

        ojson bundle;
        if (wants("kappa")) {
            need_data("kappa");
            const KappaMatrix k = cohen_kappa_matrix(*data, min_overlap_);
            write_text(out() / "kappa.csv", matrix_csv(k.annotator_ids, k.values));
            std::vector<double> counts(k.co_counts.begin(), k.co_counts.end());
            write_text(out() / "kappa_overlap.csv", matrix_csv(k.annotator_ids, counts));
            bundle["kappa"] = ojson{{"annotators", k.annotator_ids},
                                    {"min_overlap", min_overlap_},
                                    {"values", matrix_json(k.size(), k.values)},
                                    {"co_counts", matrix_json(k.size(), counts)}};
        }
        if (wants("correlation")) {
            need_data("correlation");
            const LabelCorrelation c = label_pearson(*data, min_examples_);
            write_text(out() / "correlation.csv", matrix_csv(c.label_names, c.values));
            bundle["correlation"] = ojson{{"labels", c.label_names},
                                          {"min_examples", min_examples_},
                                          {"annotators_used", c.annotators_used},
                                          {"values", matrix_json(c.size(), c.values)}};
        }

        const bool cluster = wants("cluster") || wants("align");
        const bool project = wants("project");
        if (cluster || project) {
            need_model(cluster ? "cluster" : "project");
            std::string kind = points_;
            if (kind.empty()) kind = model->bank.label_table ? "annotation" : "annotator";
            const Array2 points =
                kind == "annotation" ? annotation_embedding_points(*model) : annotator_embedding_points(*model);
            const auto& ids = model->annotator_ids;
            ojson section;
            section["points"] = kind;

            if (cluster) {
                const ClusterResult r = kmeans(points, k_, globals_.seed);
                std::ostringstream csv;
                csv << "annotator_id,cluster\n";
                for (std::size_t a = 0; a < ids.size(); ++a) csv << ids[a] << ',' << r.assignments[a] << '\n';
                write_text(out() / "clusters.csv", csv.str());
                section["k"] = k_;
                section["seed"] = globals_.seed;
                section["assignments"] = r.assignments;
                section["sse"] = r.sse;
                section["sse_history"] = r.sse_history;
                section["iterations"] = r.iterations;
                bundle["cluster"] = section;

                if (wants("align")) align(bundle, r, ids, data);
            }
            if (project) {
                const Projection p = pca_project(points, 2);
                std::ostringstream csv;
                csv << "annotator_id,pc1,pc2\n";
                for (std::size_t a = 0; a < ids.size(); ++a)
                    csv << ids[a] << ',' << num(p.coordinates(a, 0)) << ',' << num(p.coordinates(a, 1)) << '\n';
                write_text(out() / "projection.csv", csv.str());
                bundle["projection"] = ojson{{"method", "pca"},
                                             {"note", "principal components stand in for t-SNE to keep coordinates "
                                                      "deterministic"},
                                             {"points", kind},
                                             {"variances", p.variances},
                                             {"rank_deficient", p.rank_deficient}};
            }
        }
        write_json(out() / "analysis.json", bundle);
        details["analyses"] = what;
        std::cout << "analysis written to " << out().string() << "\n";
    }

    void align(ojson& bundle, const ClusterResult& r, const std::vector<std::string>& ids,
               const std::optional<Dataset>& data) {
        const bool has_demographics =
            data && std::any_of(data->examples().begin(), data->examples().end(),
                                [](const AnnotatedExample& ex) { return !ex.demographics.empty(); });
        if (!has_demographics) {
            const std::string notice = "no demographic metadata available; alignment skipped";
            std::cerr << "notice: " << notice << "\n";
            bundle["alignment"] = ojson{{"skipped", notice}};
            return;
        }
        const DemographicAlignment da = demographic_alignment(r, ids, *data);
        std::ostringstream csv;
        csv << "dimension,cluster,value,multiplier,frequency,top\n";
        ojson dims = ojson::array();
        for (const auto& dim : da.dimensions) {
            ojson per_cluster = ojson::array();
            for (std::size_t c = 0; c < da.clusters; ++c) {
                ojson freq = ojson::object();
                for (std::size_t v = 0; v < dim.values.size(); ++v) {
                    const bool top = std::find(dim.top[c].begin(), dim.top[c].end(), dim.values[v]) != dim.top[c].end();
                    csv << dim.dimension << ',' << c << ',' << dim.values[v] << ',' << num(dim.multiplier[v]) << ','
                        << num(dim.frequency[c][v]) << ',' << (top ? 1 : 0) << '\n';
                    freq[dim.values[v]] = dim.frequency[c][v];
                }
                per_cluster.push_back(ojson{{"cluster", c}, {"frequency", freq}, {"top", dim.top[c]}});
            }
            dims.push_back(ojson{{"dimension", dim.dimension},
                                 {"annotators", dim.annotators},
                                 {"excluded", dim.excluded},
                                 {"values", dim.values},
                                 {"multiplier", dim.multiplier},
                                 {"clusters", per_cluster}});
        }
        write_text(out() / "alignment.csv", csv.str());
        bundle["alignment"] = dims;
    }

    // ---------------------------------------------------------------------
    void add_report() {
        auto* cmd = command("report", "Aggregate eval.json files into a summary table", [this](ojson& details) {
            std::vector<fs::path> reports;
            for (const auto& root : inputs_) {
                if (fs::is_regular_file(root)) {
                    reports.emplace_back(root);
                    continue;
                }
                for (const auto& entry : fs::recursive_directory_iterator(root))
                    if (entry.is_regular_file() && entry.path().filename() == "eval.json") reports.push_back(entry.path());
            }
            std::sort(reports.begin(), reports.end());
            if (reports.empty() && overhead_.empty()) throw std::invalid_argument("report: no eval.json found");

            struct Group {
                std::vector<double> em, f1;
                std::vector<std::string> sources;
            };
            std::map<std::pair<std::string, std::string>, Group> groups;
            for (const auto& path : reports) {
                std::ifstream in(path);
                const nlohmann::json j = nlohmann::json::parse(in);
                auto& g = groups[{j.at("mode").get<std::string>(), j.value("variant", std::string("combination"))}];
                g.em.push_back(j.at("em_accuracy").get<double>());
                g.f1.push_back(j.at("macro_f1").get<double>());
                g.sources.push_back(path.string());
            }
            ojson rows = ojson::array();
            std::ostringstream md;
            md << "| mode | variant | runs | EM | macro F1 |\n|---|---|---|---|---|\n";
            for (const auto& [key, g] : groups) {
                rows.push_back(ojson{{"mode", key.first},
                                     {"variant", key.second},
                                     {"runs", g.em.size()},
                                     {"em_accuracy", mean_std_json(g.em)},
                                     {"macro_f1", mean_std_json(g.f1)},
                                     {"sources", g.sources}});
                md << "| " << key.first << " | " << key.second << " | " << g.em.size() << " | " << mean_sd_text(g.em)
                   << " | " << mean_sd_text(g.f1) << " |\n";
            }
            ojson report;
            report["results"] = rows;
            if (!overhead_.empty()) {
                if (overhead_.size() != 3) throw std::invalid_argument("--overhead takes N M H");
                const OverheadReport ov = overhead_report(overhead_[0], overhead_[1], overhead_[2],
                                                          CombinationMode::TextPlusBoth, overhead_base_);
                report["parameter_overhead"] = ojson{{"annotators", overhead_[0]},
                                                     {"labels", overhead_[1]},
                                                     {"hidden", overhead_[2]},
                                                     {"mode", to_string(CombinationMode::TextPlusBoth)},
                                                     {"added", ov.added},
                                                     {"base", ov.base},
                                                     {"ratio", ov.ratio},
                                                     {"target", "fewer than 1,000,000 added parameters"},
                                                     {"exceeds_one_million", ov.exceeds_one_million},
                                                     {"exceeds_one_percent", ov.exceeds_one_percent}};
                md << "\nAdded parameters (N=" << overhead_[0] << ", M=" << overhead_[1] << ", H=" << overhead_[2]
                   << ", text_plus_both): " << ov.added;
                if (ov.exceeds_one_million) md << "  ** exceeds the 1,000,000 target **";
                md << "\n";
            }
            write_json(out() / "report.json", report);
            write_text(out() / "report.md", md.str());
            details["inputs"] = reports.size();
            std::cout << md.str();
        });
        cmd->add_option("--inputs", inputs_, "Run directories or eval.json files")
            ->multi_option_policy(CLI::MultiOptionPolicy::TakeAll)
            ->check(CLI::ExistingPath);
        cmd->add_option("--overhead", overhead_, "Parameter accounting for N annotators, M labels, hidden H")
            ->multi_option_policy(CLI::MultiOptionPolicy::TakeAll)
            ->expected(3);
        cmd->add_option("--overhead-base", overhead_base_, "Base model parameter count for the ratio");
    }

    std::vector<std::string> args_;
    CLI::App app_{"Multi-annotator text classification with annotator and annotation embeddings", "annoembed"};
    Globals globals_;
    std::string config_path_;
    CLI::App* active_ = nullptr;
    std::function<void(ojson&)> action_;

    PopulationConfig synth_;
    bool no_demographics_ = false;

    std::string split_data_;
    std::string split_kind_ = "annotation";
    double train_frac_ = 0.7;
    double dev_frac_ = 0.0;

    SplitFiles files_;
    std::string mode_ = "text_only";
    EncoderConfig enc_cfg_;
    TrainConfig train_cfg_;
    std::size_t runs_ = 1;
    bool drop_unseen_ = false;

    std::string checkpoint_;
    std::string eval_data_;
    std::string variant_ = "combination";

    std::string analyze_data_;
    std::vector<std::string> what_;
    std::size_t k_ = 5;
    std::size_t min_overlap_ = kDefaultMinOverlap;
    std::size_t min_examples_ = kDefaultMinExamples;
    std::string points_;

    std::vector<std::string> inputs_;
    std::vector<std::size_t> overhead_;
    std::size_t overhead_base_ = 0;
};

}  // namespace

int run_cli(const std::vector<std::string>& args) {
    Runner runner(args);
    return runner.run();
}

int run_cli(int argc, char** argv) {
    std::vector<std::string> args(argv + 1, argv + argc);
    return run_cli(args);
}

}  // namespace annoembed
