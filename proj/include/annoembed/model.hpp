#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "annoembed/corpus.hpp"
#include "annoembed/embedding.hpp"
#include "annoembed/encoder.hpp"

namespace annoembed {

struct TrainConfig {
    CombinationMode mode = CombinationMode::TextOnly;
    std::size_t epochs = 20;
    std::size_t batch_size = 32;
    double learning_rate = 2e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double adam_eps = 1e-8;
    std::uint64_t seed = 0;
    // Evaluate on dev every this many epochs (0 = never).
    std::size_t eval_every = 0;
    // Keep the parameters of the best dev epoch.
    bool select_on_dev = false;

    void validate() const;
};

// Everything needed to score annotations: encoder, embedding bank, vocabulary,
// registries and the train-split annotation index.
struct ModelCheckpoint {
    EncoderConfig encoder_config;
    TrainConfig train_config;
    Vocabulary vocab;
    std::vector<std::string> label_names;
    std::vector<std::string> annotator_ids;
    AnnotationIndex index;
    std::vector<std::size_t> train_label_counts;

    ParameterStore params;
    Encoder encoder;
    EmbeddingBank bank;

    CombinationMode mode() const { return train_config.mode; }
    std::uint64_t seed() const { return train_config.seed; }
    std::optional<std::size_t> annotator_row(std::string_view id) const;
    // Parameters outside the embedding bank.
    std::size_t base_parameter_count() const;
};

// Sub-seed counters under TrainConfig::seed.
enum SeedStream : std::uint64_t {
    kSeedEncoderInit = 0,
    kSeedBankInit = 1,
    kSeedDataOrder = 2,
    kSeedDropout = 3,
    kSeedBaselines = 4,
    kSeedUnseenAnnotators = 5,
};

// Builds the vocabulary and registries from `train` and initializes all
// parameters. The encoder and the bank draw from separate streams, so the
// encoder weights do not depend on the mode.
ModelCheckpoint initialize_model(const Dataset& train, EncoderConfig encoder_config, const TrainConfig& train_config);

enum class Variant { Combination, EmbeddingOnly, TextOnly };
std::string to_string(Variant v);
Variant parse_variant(std::string_view s);

// Per-annotation inputs of the embedding bank.
struct AnnotatorContext {
    // Registry row; empty for annotators unseen at train time.
    std::optional<std::size_t> row;
    // Untrained E_A row used for unseen annotators.
    Array2 fresh_row;
    // 1 x M mixing weights over E_L.
    Array2 annotation_weights;
};

// Training context: leave-one-out weights for K_i position `position`.
AnnotatorContext train_context(const ModelCheckpoint& model, std::size_t row, std::size_t position);
// Evaluation context: full train average, or the fallbacks for unseen annotators.
AnnotatorContext eval_context(const ModelCheckpoint& model, std::string_view annotator_id);

// Deterministic N(0, 0.02^2) row keyed on the checkpoint seed and annotator id.
Array2 fresh_annotator_row(std::uint64_t seed, std::string_view annotator_id, std::size_t hidden);

// token ids -> E_t -> combine -> encoder -> [CLS] -> logits (1 x M).
// `params` must be model.params or a copy of it.
Var forward_logits(Tape& tape, ParameterStore& params, const ModelCheckpoint& model,
                   const std::vector<std::size_t>& ids, const AnnotatorContext& ctx,
                   Variant variant = Variant::Combination);

}  // namespace annoembed
