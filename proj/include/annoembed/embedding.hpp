#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "annoembed/corpus.hpp"
#include "annoembed/tensor.hpp"

namespace annoembed {

enum class CombinationMode {
    TextOnly,            // B
    TextPlusAnnotation,  // B + E_n
    TextPlusAnnotator,   // B + E_a
    TextPlusBoth,        // B + E_n + E_a
};

std::string to_string(CombinationMode mode);
CombinationMode parse_mode(std::string_view s);
inline bool uses_annotator(CombinationMode m) {
    return m == CombinationMode::TextPlusAnnotator || m == CombinationMode::TextPlusBoth;
}
inline bool uses_annotation(CombinationMode m) {
    return m == CombinationMode::TextPlusAnnotation || m == CombinationMode::TextPlusBoth;
}

constexpr double kBankInitStddev = 0.02;

// Learnable annotator table E_A (N x H), label table E_L (M x H) and the gate
// matrices W_s, W_a, W_n (H x H). Members are indices into a ParameterStore;
// only the matrices a mode needs are created (W_s is shared by both gates).
struct EmbeddingBank {
    std::size_t hidden = 0;
    std::size_t annotators = 0;
    std::size_t labels = 0;
    std::optional<std::size_t> annotator_table;
    std::optional<std::size_t> label_table;
    std::optional<std::size_t> w_sentence;
    std::optional<std::size_t> w_annotator;
    std::optional<std::size_t> w_annotation;

    // Appends the parameters for `mode` to `store`, drawn N(0, 0.02^2) from rng
    // in the order E_A, E_L, W_s, W_a, W_n.
    static EmbeddingBank create(ParameterStore& store, std::size_t n_annotators, std::size_t n_labels,
                                std::size_t hidden, CombinationMode mode, Rng& rng);
    // Re-binds to parameters already present in `store` (checkpoint loading).
    static EmbeddingBank bind(const ParameterStore& store, std::size_t n_annotators, std::size_t n_labels,
                              std::size_t hidden);

    bool supports(CombinationMode mode) const;
};

// Train-split annotations per annotator (K_i), in train order.
class AnnotationIndex {
public:
    AnnotationIndex() = default;
    AnnotationIndex(std::size_t n_labels, std::vector<std::vector<std::size_t>> labels,
                    std::vector<std::vector<std::string>> example_ids);
    // Annotator rows follow train.annotator_ids().
    static AnnotationIndex from_dataset(const Dataset& train);

    std::size_t annotator_count() const { return labels_.size(); }
    std::size_t label_count() const { return n_labels_; }
    const std::vector<std::size_t>& labels(std::size_t annotator) const { return labels_[annotator]; }
    const std::vector<std::string>& example_ids(std::size_t annotator) const { return example_ids_[annotator]; }
    const std::vector<std::size_t>& label_counts(std::size_t annotator) const { return counts_[annotator]; }
    // Position of (annotator, example_id) inside K_i.
    std::optional<std::size_t> position(std::size_t annotator, std::string_view example_id) const;

private:
    std::size_t n_labels_ = 0;
    std::vector<std::vector<std::size_t>> labels_;
    std::vector<std::vector<std::string>> example_ids_;
    std::vector<std::vector<std::size_t>> counts_;
};

// Mixing weights over label rows, 1 x M. E_n = weights * E_L.
//   train, leave-one-out:  (count_i - onehot(l(k))) / (|K_i| - 1)
//   test:                  count_i / |K_i|
//   fallback:              1/M everywhere (|K_i| = 1 at train, unseen annotator at test)
Array2 annotation_weights_train(const AnnotationIndex& index, std::size_t annotator, std::size_t position);
Array2 annotation_weights_test(const AnnotationIndex& index, std::optional<std::size_t> annotator);
Array2 uniform_annotation_weights(std::size_t n_labels);

// Values only, for analysis and tests.
Array2 annotation_embedding_train(const ParameterStore& store, const EmbeddingBank& bank,
                                  const AnnotationIndex& index, std::size_t annotator, std::size_t position);
Array2 annotation_embedding_test(const ParameterStore& store, const EmbeddingBank& bank,
                                 const AnnotationIndex& index, std::optional<std::size_t> annotator);

// Column mean over all T rows of the token embeddings, [CLS] included.
Var sentence_embedding(Tape& tape, Var token_embeddings);

// alpha = (W_s E_s^T)^T (W_x E_x^T), 1x1.
Var gate_weight(Tape& tape, Var w_sentence, Var w_other, Var sentence, Var other);

struct CombineInputs {
    std::optional<Var> annotation;  // E_n, 1 x H
    std::optional<Var> annotator;   // E_a, 1 x H
    // Drop the text: row 0 = alpha_n E_n + alpha_a E_a, other rows zero. The
    // gates still read E_s from the text.
    bool embedding_only = false;
};

// Adds the gated embeddings to row 0 ([CLS]) of the token embeddings according
// to `mode`. TEXT_ONLY returns the input node itself.
Var combine(Tape& tape, ParameterStore& store, const EmbeddingBank& bank, CombinationMode mode,
            Var token_embeddings, const CombineInputs& inputs);

// Closed-form count of parameters the mode adds on top of the encoder:
//   both (N+M)H + 3H^2, annotator NH + 2H^2, annotation MH + 2H^2, text-only 0.
std::size_t parameter_overhead(std::size_t n_annotators, std::size_t n_labels, std::size_t hidden,
                               CombinationMode mode);

struct OverheadReport {
    std::size_t added = 0;
    std::size_t base = 0;
    double ratio = 0.0;
    // Target budget: fewer than 1,000,000 added parameters, under 1% of base.
    bool exceeds_one_million = false;
    bool exceeds_one_percent = false;
};

OverheadReport overhead_report(std::size_t n_annotators, std::size_t n_labels, std::size_t hidden,
                               CombinationMode mode, std::size_t base_parameters);

}  // namespace annoembed
