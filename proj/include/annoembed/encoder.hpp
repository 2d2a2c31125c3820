#pragma once

#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "annoembed/tensor.hpp"
#include "json.hpp"

namespace annoembed {

class Vocabulary {
public:
    static constexpr std::size_t kPad = 0;
    static constexpr std::size_t kUnk = 1;
    static constexpr std::size_t kCls = 2;
    static constexpr std::size_t kSep = 3;

    Vocabulary();
    // Specials first, then every token of `texts` in first-appearance order.
    static Vocabulary build(const std::vector<std::string>& texts);

    std::size_t size() const { return tokens_.size(); }
    // kUnk for unknown tokens.
    std::size_t id(std::string_view token) const;
    const std::string& token(std::size_t id) const { return tokens_.at(id); }

    nlohmann::json to_json() const;
    static Vocabulary from_json(const nlohmann::json& j);

    bool operator==(const Vocabulary& o) const { return tokens_ == o.tokens_; }

private:
    void add(const std::string& token);

    std::vector<std::string> tokens_;
    std::unordered_map<std::string, std::size_t> ids_;
};

// Lowercases, then splits on Unicode whitespace; every punctuation code point
// becomes its own token.
std::vector<std::string> split_tokens(std::string_view text);

// [CLS] tokens... [SEP], truncated to max_len while keeping [CLS] first and
// [SEP] last. max_len must be at least 2.
std::vector<std::size_t> tokenize(std::string_view text, const Vocabulary& vocab, std::size_t max_len);

struct EncoderConfig {
    std::size_t hidden = 64;
    std::size_t layers = 2;
    std::size_t heads = 2;
    std::size_t max_len = 64;
    std::size_t ffn_mult = 4;
    double dropout = 0.1;
    std::size_t vocab_size = 0;

    // Throws std::invalid_argument.
    void validate() const;
};

constexpr double kEncoderInitStddev = 0.02;

// Parameter handles (indices into a ParameterStore) for the token embedding
// tables, the pre-norm transformer stack, and the classification head.
struct Encoder {
    struct Block {
        std::size_t ln1_gamma, ln1_beta;
        // No key bias.
        std::size_t w_query, b_query, w_key, w_value, b_value, w_out, b_out;
        std::size_t ln2_gamma, ln2_beta;
        std::size_t w_ffn_in, b_ffn_in, w_ffn_out, b_ffn_out;
    };

    EncoderConfig config;
    std::size_t n_labels = 0;
    std::size_t word = 0, position = 0, segment = 0;
    std::size_t emb_ln_gamma = 0, emb_ln_beta = 0;
    std::vector<Block> blocks;
    std::size_t final_ln_gamma = 0, final_ln_beta = 0;
    std::size_t head_weight = 0, head_bias = 0;

    // Registers all parameters in `store`: weights N(0, 0.02^2), biases 0,
    // layer-norm gain 1 and shift 0.
    static Encoder create(ParameterStore& store, const EncoderConfig& config, std::size_t n_labels, Rng& rng);
    static Encoder bind(const ParameterStore& store, const EncoderConfig& config, std::size_t n_labels);
};

// E_t[t] = word[id_t] + position[t] + segment[0].
Var embed_tokens(Tape& tape, ParameterStore& store, const Encoder& enc, const std::vector<std::size_t>& ids);

// Embedding layer norm + dropout on the combined embedding, then the block
// stack (final layer norm when at least one block exists).
Var encode(Tape& tape, ParameterStore& store, const Encoder& enc, Var combined);

// cls_repr (1 x H) -> logits (1 x M).
Var classify(Tape& tape, ParameterStore& store, const Encoder& enc, Var cls_repr);

}  // namespace annoembed
