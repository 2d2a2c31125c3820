#include "annoembed/model.hpp"

#include <stdexcept>

namespace annoembed {

void TrainConfig::validate() const {
    if (epochs == 0 || batch_size == 0) throw std::invalid_argument("train config: epochs and batch size must be positive");
    if (!(learning_rate > 0.0)) throw std::invalid_argument("train config: learning rate must be positive");
    if (!(beta1 > 0.0 && beta1 < 1.0 && beta2 > 0.0 && beta2 < 1.0))
        throw std::invalid_argument("train config: Adam betas must be in (0, 1)");
    if (!(adam_eps > 0.0)) throw std::invalid_argument("train config: Adam epsilon must be positive");
}

std::optional<std::size_t> ModelCheckpoint::annotator_row(std::string_view id) const {
    for (std::size_t i = 0; i < annotator_ids.size(); ++i)
        if (annotator_ids[i] == id) return i;
    return std::nullopt;
}

std::size_t ModelCheckpoint::base_parameter_count() const {
    std::size_t n = 0;
    for (const auto& p : params)
        if (!p.name.starts_with("bank.")) n += p.value.size();
    return n;
}

ModelCheckpoint initialize_model(const Dataset& train, EncoderConfig encoder_config, const TrainConfig& train_config) {
    if (train.empty()) throw std::invalid_argument("cannot initialize a model from an empty train split");
    train_config.validate();
    ModelCheckpoint m;
    std::vector<std::string> texts;
    texts.reserve(train.size());
    for (const auto& ex : train.examples()) texts.push_back(ex.text);
    m.vocab = Vocabulary::build(texts);
    encoder_config.vocab_size = m.vocab.size();
    m.encoder_config = encoder_config;
    m.train_config = train_config;
    m.label_names = train.label_names();
    m.annotator_ids = train.annotator_ids();
    m.index = AnnotationIndex::from_dataset(train);
    m.train_label_counts.assign(train.label_count(), 0);
    for (const auto& ex : train.examples()) ++m.train_label_counts[ex.label];

    Rng encoder_rng(derive_seed(train_config.seed, kSeedEncoderInit));
    m.encoder = Encoder::create(m.params, encoder_config, train.label_count(), encoder_rng);
    Rng bank_rng(derive_seed(train_config.seed, kSeedBankInit));
    m.bank = EmbeddingBank::create(m.params, train.annotator_count(), train.label_count(), encoder_config.hidden,
                                   train_config.mode, bank_rng);
    return m;
}

std::string to_string(Variant v) {
    switch (v) {
        case Variant::Combination: return "combination";
        case Variant::EmbeddingOnly: return "embedding_only";
        case Variant::TextOnly: return "text_only";
    }
    return "?";
}

Variant parse_variant(std::string_view s) {
    if (s == "combination") return Variant::Combination;
    if (s == "embedding_only") return Variant::EmbeddingOnly;
    if (s == "text_only") return Variant::TextOnly;
    throw std::invalid_argument("unknown ablation variant: " + std::string(s));
}

Array2 fresh_annotator_row(std::uint64_t seed, std::string_view annotator_id, std::size_t hidden) {
    Rng rng(derive_seed(derive_seed(seed, kSeedUnseenAnnotators), fnv1a(annotator_id)));
    return Array2::random_normal(1, hidden, kBankInitStddev, rng);
}

AnnotatorContext train_context(const ModelCheckpoint& model, std::size_t row, std::size_t position) {
    AnnotatorContext ctx;
    ctx.row = row;
    ctx.annotation_weights = annotation_weights_train(model.index, row, position);
    return ctx;
}

AnnotatorContext eval_context(const ModelCheckpoint& model, std::string_view annotator_id) {
    AnnotatorContext ctx;
    ctx.row = model.annotator_row(annotator_id);
    ctx.annotation_weights = annotation_weights_test(model.index, ctx.row);
    if (!ctx.row) ctx.fresh_row = fresh_annotator_row(model.seed(), annotator_id, model.encoder_config.hidden);
    return ctx;
}

Var forward_logits(Tape& tape, ParameterStore& params, const ModelCheckpoint& model,
                   const std::vector<std::size_t>& ids, const AnnotatorContext& ctx, Variant variant) {
    const Var tokens = embed_tokens(tape, params, model.encoder, ids);
    const CombinationMode mode = variant == Variant::TextOnly ? CombinationMode::TextOnly : model.mode();
    if (variant == Variant::EmbeddingOnly && mode == CombinationMode::TextOnly)
        throw std::invalid_argument("embedding-only ablation needs a model trained with embeddings");

    CombineInputs inputs;
    inputs.embedding_only = variant == Variant::EmbeddingOnly;
    if (uses_annotation(mode)) {
        inputs.annotation =
            tape.matmul(tape.constant(ctx.annotation_weights), tape.parameter(params[*model.bank.label_table]));
    }
    if (uses_annotator(mode)) {
        inputs.annotator = ctx.row ? tape.gather_rows(tape.parameter(params[*model.bank.annotator_table]), {*ctx.row})
                                   : tape.constant(ctx.fresh_row);
    }
    const Var combined = combine(tape, params, model.bank, mode, tokens, inputs);
    const Var encoded = encode(tape, params, model.encoder, combined);
    return classify(tape, params, model.encoder, tape.slice_rows(encoded, 0, 1));
}

}  // namespace annoembed
