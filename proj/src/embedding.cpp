#include "annoembed/embedding.hpp"

#include <stdexcept>

namespace annoembed {

namespace {
constexpr const char* kAnnotatorTable = "bank.annotators";
constexpr const char* kLabelTable = "bank.labels";
constexpr const char* kWSentence = "bank.w_sentence";
constexpr const char* kWAnnotator = "bank.w_annotator";
constexpr const char* kWAnnotation = "bank.w_annotation";

std::optional<std::size_t> index_of(const ParameterStore& store, const char* name) {
    for (std::size_t i = 0; i < store.size(); ++i)
        if (store[i].name == name) return i;
    return std::nullopt;
}
}  // namespace

std::string to_string(CombinationMode mode) {
    switch (mode) {
        case CombinationMode::TextOnly: return "text_only";
        case CombinationMode::TextPlusAnnotation: return "text_plus_annotation";
        case CombinationMode::TextPlusAnnotator: return "text_plus_annotator";
        case CombinationMode::TextPlusBoth: return "text_plus_both";
    }
    return "?";
}

CombinationMode parse_mode(std::string_view s) {
    if (s == "text_only" || s == "B") return CombinationMode::TextOnly;
    if (s == "text_plus_annotation" || s == "B+En") return CombinationMode::TextPlusAnnotation;
    if (s == "text_plus_annotator" || s == "B+Ea") return CombinationMode::TextPlusAnnotator;
    if (s == "text_plus_both" || s == "B+En+Ea") return CombinationMode::TextPlusBoth;
    throw std::invalid_argument("unknown combination mode: " + std::string(s));
}

EmbeddingBank EmbeddingBank::create(ParameterStore& store, std::size_t n_annotators, std::size_t n_labels,
                                    std::size_t hidden, CombinationMode mode, Rng& rng) {
    EmbeddingBank bank;
    bank.hidden = hidden;
    bank.annotators = n_annotators;
    bank.labels = n_labels;
    if (mode == CombinationMode::TextOnly) return bank;
    if (uses_annotator(mode))
        bank.annotator_table =
            store.add(kAnnotatorTable, Array2::random_normal(n_annotators, hidden, kBankInitStddev, rng));
    if (uses_annotation(mode))
        bank.label_table = store.add(kLabelTable, Array2::random_normal(n_labels, hidden, kBankInitStddev, rng));
    bank.w_sentence = store.add(kWSentence, Array2::random_normal(hidden, hidden, kBankInitStddev, rng));
    if (uses_annotator(mode))
        bank.w_annotator = store.add(kWAnnotator, Array2::random_normal(hidden, hidden, kBankInitStddev, rng));
    if (uses_annotation(mode))
        bank.w_annotation = store.add(kWAnnotation, Array2::random_normal(hidden, hidden, kBankInitStddev, rng));
    return bank;
}

EmbeddingBank EmbeddingBank::bind(const ParameterStore& store, std::size_t n_annotators, std::size_t n_labels,
                                  std::size_t hidden) {
    EmbeddingBank bank;
    bank.hidden = hidden;
    bank.annotators = n_annotators;
    bank.labels = n_labels;
    bank.annotator_table = index_of(store, kAnnotatorTable);
    bank.label_table = index_of(store, kLabelTable);
    bank.w_sentence = index_of(store, kWSentence);
    bank.w_annotator = index_of(store, kWAnnotator);
    bank.w_annotation = index_of(store, kWAnnotation);
    if (bank.annotator_table && store[*bank.annotator_table].value.rows != n_annotators)
        throw std::invalid_argument("annotator table rows do not match the annotator registry");
    if (bank.label_table && store[*bank.label_table].value.rows != n_labels)
        throw std::invalid_argument("label table rows do not match the label registry");
    return bank;
}

bool EmbeddingBank::supports(CombinationMode mode) const {
    if (mode == CombinationMode::TextOnly) return true;
    if (!w_sentence) return false;
    if (uses_annotator(mode) && !(annotator_table && w_annotator)) return false;
    if (uses_annotation(mode) && !(label_table && w_annotation)) return false;
    return true;
}

// ---------------------------------------------------------------------------

AnnotationIndex::AnnotationIndex(std::size_t n_labels, std::vector<std::vector<std::size_t>> labels,
                                 std::vector<std::vector<std::string>> example_ids)
    : n_labels_(n_labels), labels_(std::move(labels)), example_ids_(std::move(example_ids)) {
    if (example_ids_.size() != labels_.size()) throw std::invalid_argument("annotation index: size mismatch");
    counts_.assign(labels_.size(), std::vector<std::size_t>(n_labels_, 0));
    for (std::size_t a = 0; a < labels_.size(); ++a) {
        if (example_ids_[a].size() != labels_[a].size()) throw std::invalid_argument("annotation index: size mismatch");
        for (std::size_t l : labels_[a]) {
            if (l >= n_labels_) throw std::invalid_argument("annotation index: label out of range");
            ++counts_[a][l];
        }
    }
}

AnnotationIndex AnnotationIndex::from_dataset(const Dataset& train) {
    std::vector<std::vector<std::size_t>> labels(train.annotator_count());
    std::vector<std::vector<std::string>> ids(train.annotator_count());
    for (std::size_t i = 0; i < train.size(); ++i) {
        const std::size_t a = train.annotator_of(i);
        labels[a].push_back(train.examples()[i].label);
        ids[a].push_back(train.examples()[i].example_id);
    }
    return AnnotationIndex(train.label_count(), std::move(labels), std::move(ids));
}

std::optional<std::size_t> AnnotationIndex::position(std::size_t annotator, std::string_view example_id) const {
    const auto& ids = example_ids_.at(annotator);
    for (std::size_t k = 0; k < ids.size(); ++k)
        if (ids[k] == example_id) return k;
    return std::nullopt;
}

Array2 uniform_annotation_weights(std::size_t n_labels) {
    return Array2(1, n_labels, 1.0 / static_cast<double>(n_labels));
}

Array2 annotation_weights_train(const AnnotationIndex& index, std::size_t annotator, std::size_t position) {
    const auto& labels = index.labels(annotator);
    if (position >= labels.size()) throw std::out_of_range("annotation index: position outside K_i");
    const std::size_t k = labels.size();
    if (k < 2) return uniform_annotation_weights(index.label_count());
    Array2 w(1, index.label_count());
    const auto& counts = index.label_counts(annotator);
    const double inv = 1.0 / static_cast<double>(k - 1);
    for (std::size_t m = 0; m < counts.size(); ++m) {
        const double c = static_cast<double>(counts[m]) - (labels[position] == m ? 1.0 : 0.0);
        w.data[m] = c * inv;
    }
    return w;
}

Array2 annotation_weights_test(const AnnotationIndex& index, std::optional<std::size_t> annotator) {
    if (!annotator || index.labels(*annotator).empty()) return uniform_annotation_weights(index.label_count());
    const auto& counts = index.label_counts(*annotator);
    const double inv = 1.0 / static_cast<double>(index.labels(*annotator).size());
    Array2 w(1, index.label_count());
    for (std::size_t m = 0; m < counts.size(); ++m) w.data[m] = static_cast<double>(counts[m]) * inv;
    return w;
}

Array2 annotation_embedding_train(const ParameterStore& store, const EmbeddingBank& bank,
                                  const AnnotationIndex& index, std::size_t annotator, std::size_t position) {
    if (!bank.label_table) throw std::logic_error("bank has no label table");
    return matmul(annotation_weights_train(index, annotator, position), store[*bank.label_table].value);
}

Array2 annotation_embedding_test(const ParameterStore& store, const EmbeddingBank& bank,
                                 const AnnotationIndex& index, std::optional<std::size_t> annotator) {
    if (!bank.label_table) throw std::logic_error("bank has no label table");
    return matmul(annotation_weights_test(index, annotator), store[*bank.label_table].value);
}

// ---------------------------------------------------------------------------

Var sentence_embedding(Tape& tape, Var token_embeddings) {
    if (tape.value(token_embeddings).rows == 0) throw std::invalid_argument("sentence_embedding: empty sequence");
    return tape.row_mean(token_embeddings);
}

Var gate_weight(Tape& tape, Var w_sentence, Var w_other, Var sentence, Var other) {
    const Var projected_sentence = tape.matmul(sentence, tape.transpose(w_sentence));
    const Var projected_other = tape.matmul(other, tape.transpose(w_other));
    return tape.matmul(projected_sentence, tape.transpose(projected_other));
}

Var combine(Tape& tape, ParameterStore& store, const EmbeddingBank& bank, CombinationMode mode,
            Var token_embeddings, const CombineInputs& inputs) {
    if (mode == CombinationMode::TextOnly) {
        if (inputs.embedding_only) throw std::invalid_argument("combine: embedding-only needs an embedding mode");
        return token_embeddings;
    }
    if (!bank.supports(mode)) throw std::invalid_argument("combine: bank lacks parameters for " + to_string(mode));
    if (uses_annotation(mode) && !inputs.annotation)
        throw std::invalid_argument("combine: " + to_string(mode) + " needs an annotation embedding");
    if (uses_annotator(mode) && !inputs.annotator)
        throw std::invalid_argument("combine: " + to_string(mode) + " needs an annotator embedding");

    const std::size_t rows = tape.value(token_embeddings).rows;
    const std::size_t cols = tape.value(token_embeddings).cols;
    const Var sentence = sentence_embedding(tape, token_embeddings);
    const Var w_s = tape.parameter(store[*bank.w_sentence]);

    std::optional<Var> added;
    auto accumulate = [&](Var term) { added = added ? tape.add(*added, term) : term; };
    if (uses_annotation(mode)) {
        const Var alpha = gate_weight(tape, w_s, tape.parameter(store[*bank.w_annotation]), sentence, *inputs.annotation);
        accumulate(tape.scalar_scale(alpha, *inputs.annotation));
    }
    if (uses_annotator(mode)) {
        const Var alpha = gate_weight(tape, w_s, tape.parameter(store[*bank.w_annotator]), sentence, *inputs.annotator);
        accumulate(tape.scalar_scale(alpha, *inputs.annotator));
    }

    const Var cls = inputs.embedding_only ? *added : tape.add(tape.slice_rows(token_embeddings, 0, 1), *added);
    if (rows == 1) return cls;
    const Var rest = inputs.embedding_only ? tape.constant(Array2(rows - 1, cols))
                                           : tape.slice_rows(token_embeddings, 1, rows);
    return tape.concat_rows(cls, rest);
}

std::size_t parameter_overhead(std::size_t n_annotators, std::size_t n_labels, std::size_t hidden,
                               CombinationMode mode) {
    const std::size_t square = hidden * hidden;
    switch (mode) {
        case CombinationMode::TextOnly: return 0;
        case CombinationMode::TextPlusAnnotation: return n_labels * hidden + 2 * square;
        case CombinationMode::TextPlusAnnotator: return n_annotators * hidden + 2 * square;
        case CombinationMode::TextPlusBoth: return (n_annotators + n_labels) * hidden + 3 * square;
    }
    return 0;
}

OverheadReport overhead_report(std::size_t n_annotators, std::size_t n_labels, std::size_t hidden,
                               CombinationMode mode, std::size_t base_parameters) {
    OverheadReport r;
    r.added = parameter_overhead(n_annotators, n_labels, hidden, mode);
    r.base = base_parameters;
    r.ratio = base_parameters ? static_cast<double>(r.added) / static_cast<double>(base_parameters) : 0.0;
    r.exceeds_one_million = r.added >= 1'000'000;
    r.exceeds_one_percent = r.ratio >= 0.01;
    return r;
}

}  // namespace annoembed
