#pragma once

#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "annoembed/corpus.hpp"
#include "annoembed/metrics.hpp"
#include "annoembed/model.hpp"
#include "json.hpp"

namespace annoembed {

class TrainingError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct TrainResult {
    ModelCheckpoint checkpoint;
    // Mean cross-entropy of every optimizer step, in order.
    std::vector<double> loss_trace;
    // Mean step loss per epoch.
    std::vector<double> epoch_loss;
    // (epoch, dev EM) for each dev evaluation.
    std::vector<std::pair<std::size_t, double>> dev_em;
    std::optional<std::size_t> selected_epoch;
};

// Shuffled mini-batch Adam on per-annotation cross-entropy. Train-time
// annotation embeddings use the leave-one-out average, recomputed from the
// current label table at every step. Deterministic for a given seed.
// Throws TrainingError on an empty train split or a non-finite loss.
TrainResult train(const Dataset& train_set, const std::optional<Dataset>& dev, const EncoderConfig& encoder_config,
                  const TrainConfig& config);
TrainResult train(const Split& split, const EncoderConfig& encoder_config, const TrainConfig& config);

struct EvalReport {
    std::string mode;
    std::string variant = "combination";
    std::size_t annotations = 0;
    std::size_t unseen_annotations = 0;
    double em_accuracy = 0.0;
    double macro_f1 = 0.0;
    std::vector<double> per_class_f1;
    std::vector<std::pair<std::string, double>> per_annotator_em;
    ConfusionMatrix confusion;
    std::vector<std::size_t> predicted_histogram;
    double baseline_random = 0.0;
    double baseline_random_stddev = 0.0;
    double baseline_majority = 0.0;
    std::vector<std::string> label_names;
};

// Argmax prediction per annotation; every annotation is its own example.
// Majority baseline uses the train label distribution stored in the checkpoint.
EvalReport evaluate(const ModelCheckpoint& model, const Dataset& data, Variant variant = Variant::Combination);

// Predicted label per annotation, dataset order.
std::vector<std::size_t> predict(const ModelCheckpoint& model, const Dataset& data,
                                 Variant variant = Variant::Combination);

// embedding_only needs a model with embeddings; text_only and combination
// work on any checkpoint.
EvalReport ablation_eval(const ModelCheckpoint& model, const Dataset& data, Variant variant);

nlohmann::ordered_json to_json(const EvalReport& r);
std::string to_table(const EvalReport& r);

}  // namespace annoembed
