#include "annoembed/trainer.hpp"

#include <cmath>
#include <iomanip>
#include <numeric>
#include <sstream>

namespace annoembed {

namespace {

class Adam {
public:
    Adam(const ParameterStore& store, const TrainConfig& cfg) : cfg_(cfg) {
        for (const auto& p : store) {
            m_.emplace_back(p.value.size(), 0.0);
            v_.emplace_back(p.value.size(), 0.0);
        }
    }

    void step(ParameterStore& store) {
        ++t_;
        const double c1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
        const double c2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
        for (std::size_t i = 0; i < store.size(); ++i) {
            auto& p = store[i];
            for (std::size_t k = 0; k < p.value.data.size(); ++k) {
                const double g = p.grad.data[k];
                m_[i][k] = cfg_.beta1 * m_[i][k] + (1.0 - cfg_.beta1) * g;
                v_[i][k] = cfg_.beta2 * v_[i][k] + (1.0 - cfg_.beta2) * g * g;
                const double mhat = m_[i][k] / c1;
                const double vhat = v_[i][k] / c2;
                p.value.data[k] -= cfg_.learning_rate * mhat / (std::sqrt(vhat) + cfg_.adam_eps);
            }
        }
    }

private:
    TrainConfig cfg_;
    std::size_t t_ = 0;
    std::vector<std::vector<double>> m_;
    std::vector<std::vector<double>> v_;
};

std::string describe(const TrainConfig& c) {
    std::ostringstream s;
    s << "mode=" << to_string(c.mode) << " epochs=" << c.epochs << " batch=" << c.batch_size
      << " lr=" << c.learning_rate << " seed=" << c.seed;
    return s.str();
}

}  // namespace

TrainResult train(const Split& split, const EncoderConfig& encoder_config, const TrainConfig& config) {
    return train(split.train, split.dev, encoder_config, config);
}

TrainResult train(const Dataset& train_set, const std::optional<Dataset>& dev, const EncoderConfig& encoder_config,
                  const TrainConfig& config) {
    if (train_set.empty()) throw TrainingError("train split is empty (" + describe(config) + ")");
    TrainResult result{initialize_model(train_set, encoder_config, config), {}, {}, {}, {}};
    ModelCheckpoint& model = result.checkpoint;

    // Pre-tokenize and locate every annotation inside its annotator's K_i.
    const std::size_t n = train_set.size();
    std::vector<std::vector<std::size_t>> ids(n);
    std::vector<AnnotatorContext> contexts(n);
    std::vector<std::size_t> next_position(train_set.annotator_count(), 0);
    for (std::size_t i = 0; i < n; ++i) {
        ids[i] = tokenize(train_set.examples()[i].text, model.vocab, model.encoder_config.max_len);
        const std::size_t row = train_set.annotator_of(i);
        contexts[i] = train_context(model, row, next_position[row]++);
    }

    Adam adam(model.params, config);
    Rng order_rng(derive_seed(config.seed, kSeedDataOrder));
    Rng dropout_rng(derive_seed(config.seed, kSeedDropout));
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::optional<ParameterStore> best_params;
    double best_dev = -1.0;

    for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
        order_rng.shuffle(std::span(order));
        double epoch_sum = 0.0;
        std::size_t steps = 0;
        for (std::size_t start = 0; start < n; start += config.batch_size) {
            const std::size_t end = std::min(n, start + config.batch_size);
            const double inv_batch = 1.0 / static_cast<double>(end - start);
            model.params.zero_grad();
            double batch_loss = 0.0;
            for (std::size_t b = start; b < end; ++b) {
                const std::size_t i = order[b];
                Tape tape(true, &dropout_rng);
                const Var logits = forward_logits(tape, model.params, model, ids[i], contexts[i]);
                const Var loss = tape.softmax_cross_entropy(logits, train_set.examples()[i].label);
                batch_loss += tape.value(loss).data[0];
                tape.backward(tape.scale(loss, inv_batch));
            }
            batch_loss *= inv_batch;
            if (!std::isfinite(batch_loss)) {
                std::ostringstream msg;
                msg << "non-finite loss at epoch " << epoch << ", step " << result.loss_trace.size() + 1 << " ("
                    << describe(config) << ")";
                throw TrainingError(msg.str());
            }
            adam.step(model.params);
            result.loss_trace.push_back(batch_loss);
            epoch_sum += batch_loss;
            ++steps;
        }
        result.epoch_loss.push_back(epoch_sum / static_cast<double>(steps));

        const bool dev_due = dev && !dev->empty() &&
                             ((config.eval_every && epoch % config.eval_every == 0) || config.select_on_dev);
        if (dev_due) {
            const double em = evaluate(model, *dev).em_accuracy;
            result.dev_em.emplace_back(epoch, em);
            if (config.select_on_dev && em > best_dev) {
                best_dev = em;
                best_params = model.params;
                result.selected_epoch = epoch;
            }
        }
    }
    if (best_params) model.params = std::move(*best_params);
    model.params.zero_grad();
    return result;
}

std::vector<std::size_t> predict(const ModelCheckpoint& model, const Dataset& data, Variant variant) {
    if (data.label_names() != model.label_names)
        throw std::invalid_argument("dataset labels do not match the checkpoint's label registry");
    ParameterStore params = model.params;
    std::vector<std::size_t> out;
    out.reserve(data.size());
    for (const auto& ex : data.examples()) {
        Tape tape;
        const auto ids = tokenize(ex.text, model.vocab, model.encoder_config.max_len);
        const Var logits = forward_logits(tape, params, model, ids, eval_context(model, ex.annotator_id), variant);
        const auto& v = tape.value(logits).data;
        out.push_back(static_cast<std::size_t>(std::max_element(v.begin(), v.end()) - v.begin()));
    }
    return out;
}

EvalReport evaluate(const ModelCheckpoint& model, const Dataset& data, Variant variant) {
    const auto predicted = predict(model, data, variant);
    const std::size_t m = model.label_names.size();
    EvalReport r;
    r.mode = to_string(model.mode());
    r.variant = to_string(variant);
    r.annotations = data.size();
    r.label_names = model.label_names;
    r.confusion = ConfusionMatrix(m);
    r.predicted_histogram.assign(m, 0);
    std::vector<std::size_t> hits(data.annotator_count(), 0);
    std::vector<std::size_t> totals(data.annotator_count(), 0);
    for (std::size_t i = 0; i < data.size(); ++i) {
        const auto& ex = data.examples()[i];
        r.confusion.add(ex.label, predicted[i]);
        ++r.predicted_histogram[predicted[i]];
        const std::size_t a = data.annotator_of(i);
        ++totals[a];
        hits[a] += ex.label == predicted[i];
        if (!model.annotator_row(ex.annotator_id)) ++r.unseen_annotations;
    }
    r.em_accuracy = r.confusion.em_accuracy();
    r.macro_f1 = r.confusion.macro_f1();
    for (std::size_t c = 0; c < m; ++c) r.per_class_f1.push_back(r.confusion.f1(c));
    for (std::size_t a = 0; a < data.annotator_count(); ++a)
        r.per_annotator_em.emplace_back(data.annotator_ids()[a],
                                        static_cast<double>(hits[a]) / static_cast<double>(totals[a]));
    const MeanStd random = random_baseline(data, derive_seed(model.seed(), kSeedBaselines));
    r.baseline_random = random.mean;
    r.baseline_random_stddev = random.stddev;
    r.baseline_majority = majority_baseline(model.train_label_counts, data);
    return r;
}

EvalReport ablation_eval(const ModelCheckpoint& model, const Dataset& data, Variant variant) {
    if (variant == Variant::EmbeddingOnly && model.mode() == CombinationMode::TextOnly)
        throw std::invalid_argument("embedding_only ablation is incompatible with a text_only checkpoint");
    return evaluate(model, data, variant);
}

nlohmann::ordered_json to_json(const EvalReport& r) {
    nlohmann::ordered_json j;
    j["mode"] = r.mode;
    j["variant"] = r.variant;
    j["annotations"] = r.annotations;
    j["unseen_annotations"] = r.unseen_annotations;
    j["em_accuracy"] = r.em_accuracy;
    j["macro_f1"] = r.macro_f1;
    j["label_names"] = r.label_names;
    j["per_class_f1"] = r.per_class_f1;
    nlohmann::ordered_json per = nlohmann::ordered_json::object();
    for (const auto& [id, em] : r.per_annotator_em) per[id] = em;
    j["per_annotator_em"] = per;
    nlohmann::ordered_json cm = nlohmann::ordered_json::array();
    for (std::size_t g = 0; g < r.confusion.labels(); ++g) {
        std::vector<std::size_t> row;
        for (std::size_t p = 0; p < r.confusion.labels(); ++p) row.push_back(r.confusion.at(g, p));
        cm.push_back(row);
    }
    j["confusion"] = cm;
    j["predicted_histogram"] = r.predicted_histogram;
    j["baseline_random"] = r.baseline_random;
    j["baseline_random_stddev"] = r.baseline_random_stddev;
    j["baseline_majority"] = r.baseline_majority;
    return j;
}

std::string to_table(const EvalReport& r) {
    std::ostringstream s;
    s << std::fixed << std::setprecision(2);
    s << "mode " << r.mode << "  variant " << r.variant << "  annotations " << r.annotations;
    if (r.unseen_annotations) s << "  (unseen annotators: " << r.unseen_annotations << ")";
    s << "\n\n";
    s << "  EM accuracy    " << std::setw(7) << 100.0 * r.em_accuracy << "\n";
    s << "  macro F1       " << std::setw(7) << 100.0 * r.macro_f1 << "\n";
    s << "  random         " << std::setw(7) << 100.0 * r.baseline_random << "  (sd "
      << 100.0 * r.baseline_random_stddev << ")\n";
    s << "  majority       " << std::setw(7) << 100.0 * r.baseline_majority << "\n\n";
    s << "  per-class F1\n";
    for (std::size_t c = 0; c < r.per_class_f1.size(); ++c)
        s << "    " << std::left << std::setw(16) << r.label_names[c] << std::right << std::setw(7)
          << 100.0 * r.per_class_f1[c] << "\n";
    s << "\n  confusion (rows gold, columns predicted)\n";
    for (std::size_t g = 0; g < r.confusion.labels(); ++g) {
        s << "    ";
        for (std::size_t p = 0; p < r.confusion.labels(); ++p) s << std::setw(8) << r.confusion.at(g, p);
        s << "\n";
    }
    return s.str();
}

}  // namespace annoembed
