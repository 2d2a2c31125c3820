#include "annoembed/encoder.hpp"

#include <cmath>
#include <stdexcept>

namespace annoembed {

namespace {

const char* const kSpecials[] = {"[PAD]", "[UNK]", "[CLS]", "[SEP]"};

// Decodes one UTF-8 code point starting at text[i]; invalid bytes decode as themselves.
char32_t decode(std::string_view text, std::size_t& i) {
    const auto b0 = static_cast<unsigned char>(text[i]);
    auto cont = [&](std::size_t k) { return i + k < text.size() && (static_cast<unsigned char>(text[i + k]) & 0xC0) == 0x80; };
    auto byte = [&](std::size_t k) { return static_cast<char32_t>(static_cast<unsigned char>(text[i + k]) & 0x3F); };
    if (b0 < 0x80) {
        i += 1;
        return b0;
    }
    if ((b0 & 0xE0) == 0xC0 && cont(1)) {
        char32_t cp = (static_cast<char32_t>(b0 & 0x1F) << 6) | byte(1);
        i += 2;
        return cp;
    }
    if ((b0 & 0xF0) == 0xE0 && cont(1) && cont(2)) {
        char32_t cp = (static_cast<char32_t>(b0 & 0x0F) << 12) | (byte(1) << 6) | byte(2);
        i += 3;
        return cp;
    }
    if ((b0 & 0xF8) == 0xF0 && cont(1) && cont(2) && cont(3)) {
        char32_t cp = (static_cast<char32_t>(b0 & 0x07) << 18) | (byte(1) << 12) | (byte(2) << 6) | byte(3);
        i += 4;
        return cp;
    }
    i += 1;
    return b0;
}

void encode_utf8(char32_t cp, std::string& out) {
    if (cp < 0x80) {
        out += static_cast<char>(cp);
    } else if (cp < 0x800) {
        out += static_cast<char>(0xC0 | (cp >> 6));
        out += static_cast<char>(0x80 | (cp & 0x3F));
    } else if (cp < 0x10000) {
        out += static_cast<char>(0xE0 | (cp >> 12));
        out += static_cast<char>(0x80 | ((cp >> 6) & 0x3F));
        out += static_cast<char>(0x80 | (cp & 0x3F));
    } else {
        out += static_cast<char>(0xF0 | (cp >> 18));
        out += static_cast<char>(0x80 | ((cp >> 12) & 0x3F));
        out += static_cast<char>(0x80 | ((cp >> 6) & 0x3F));
        out += static_cast<char>(0x80 | (cp & 0x3F));
    }
}

bool is_space(char32_t c) {
    return (c >= 0x09 && c <= 0x0D) || c == 0x20 || c == 0x85 || c == 0xA0 || c == 0x1680 ||
           (c >= 0x2000 && c <= 0x200A) || c == 0x2028 || c == 0x2029 || c == 0x202F || c == 0x205F ||
           c == 0x3000;
}

bool is_punct(char32_t c) {
    if (c < 0x80) return (c >= 0x21 && c <= 0x2F) || (c >= 0x3A && c <= 0x40) || (c >= 0x5B && c <= 0x60) ||
                         (c >= 0x7B && c <= 0x7E);
    return c == 0xA1 || c == 0xA7 || c == 0xAB || c == 0xB6 || c == 0xB7 || c == 0xBB || c == 0xBF ||
           (c >= 0x2010 && c <= 0x2027) || (c >= 0x2030 && c <= 0x205E) || (c >= 0x3001 && c <= 0x3003) ||
           (c >= 0x3008 && c <= 0x3011) || (c >= 0xFF01 && c <= 0xFF0F);
}

char32_t to_lower(char32_t c) {
    if (c >= 'A' && c <= 'Z') return c + 32;
    if (c >= 0xC0 && c <= 0xDE && c != 0xD7) return c + 32;
    if (c >= 0x391 && c <= 0x3A9 && c != 0x3A2) return c + 32;
    if (c >= 0x410 && c <= 0x42F) return c + 32;
    if (c >= 0x400 && c <= 0x40F) return c + 80;
    return c;
}

}  // namespace

Vocabulary::Vocabulary() {
    for (const char* s : kSpecials) add(s);
}

void Vocabulary::add(const std::string& token) {
    if (ids_.emplace(token, tokens_.size()).second) tokens_.push_back(token);
}

Vocabulary Vocabulary::build(const std::vector<std::string>& texts) {
    Vocabulary v;
    for (const auto& text : texts)
        for (auto& tok : split_tokens(text)) v.add(tok);
    return v;
}

std::size_t Vocabulary::id(std::string_view token) const {
    auto it = ids_.find(std::string(token));
    return it == ids_.end() ? kUnk : it->second;
}

nlohmann::json Vocabulary::to_json() const {
    nlohmann::json j = nlohmann::json::object();
    for (std::size_t i = 0; i < tokens_.size(); ++i) j[tokens_[i]] = i;
    return j;
}

Vocabulary Vocabulary::from_json(const nlohmann::json& j) {
    std::vector<std::string> tokens(j.size());
    std::vector<bool> filled(j.size(), false);
    for (auto it = j.begin(); it != j.end(); ++it) {
        const auto id = it.value().get<std::size_t>();
        if (id >= tokens.size() || filled[id]) throw std::invalid_argument("vocabulary ids are not dense");
        tokens[id] = it.key();
        filled[id] = true;
    }
    for (std::size_t i = 0; i < 4; ++i)
        if (tokens.size() <= i || tokens[i] != kSpecials[i])
            throw std::invalid_argument("vocabulary special ids are not in canonical positions");
    Vocabulary v;
    for (std::size_t i = 4; i < tokens.size(); ++i) v.add(tokens[i]);
    return v;
}

std::vector<std::string> split_tokens(std::string_view text) {
    std::vector<std::string> out;
    std::string current;
    auto flush = [&] {
        if (!current.empty()) out.push_back(std::move(current));
        current.clear();
    };
    for (std::size_t i = 0; i < text.size();) {
        const char32_t c = to_lower(decode(text, i));
        if (is_space(c)) {
            flush();
        } else if (is_punct(c)) {
            flush();
            std::string p;
            encode_utf8(c, p);
            out.push_back(std::move(p));
        } else {
            encode_utf8(c, current);
        }
    }
    flush();
    return out;
}

std::vector<std::size_t> tokenize(std::string_view text, const Vocabulary& vocab, std::size_t max_len) {
    if (max_len < 2) throw std::invalid_argument("tokenize: max_len must be at least 2");
    const auto pieces = split_tokens(text);
    const std::size_t body = std::min(pieces.size(), max_len - 2);
    std::vector<std::size_t> ids;
    ids.reserve(body + 2);
    ids.push_back(Vocabulary::kCls);
    for (std::size_t i = 0; i < body; ++i) ids.push_back(vocab.id(pieces[i]));
    ids.push_back(Vocabulary::kSep);
    return ids;
}

// ---------------------------------------------------------------------------

void EncoderConfig::validate() const {
    if (hidden == 0 || heads == 0 || hidden % heads != 0)
        throw std::invalid_argument("encoder: hidden size must be a positive multiple of the head count");
    if (max_len < 2) throw std::invalid_argument("encoder: max_len must be at least 2");
    if (ffn_mult == 0) throw std::invalid_argument("encoder: ffn_mult must be positive");
    if (!(dropout >= 0.0 && dropout < 1.0)) throw std::invalid_argument("encoder: dropout must be in [0, 1)");
    if (vocab_size < 4) throw std::invalid_argument("encoder: vocabulary must hold the special tokens");
}

Encoder Encoder::create(ParameterStore& store, const EncoderConfig& config, std::size_t n_labels, Rng& rng) {
    config.validate();
    const std::size_t h = config.hidden;
    const std::size_t f = h * config.ffn_mult;
    auto normal = [&](std::string name, std::size_t r, std::size_t c) {
        return store.add(std::move(name), Array2::random_normal(r, c, kEncoderInitStddev, rng));
    };
    auto zeros = [&](std::string name, std::size_t c) { return store.add(std::move(name), Array2(1, c)); };
    auto ones = [&](std::string name, std::size_t c) { return store.add(std::move(name), Array2(1, c, 1.0)); };

    Encoder e;
    e.config = config;
    e.n_labels = n_labels;
    e.word = normal("enc.word", config.vocab_size, h);
    e.position = normal("enc.position", config.max_len, h);
    e.segment = normal("enc.segment", 2, h);
    e.emb_ln_gamma = ones("enc.emb_ln.gamma", h);
    e.emb_ln_beta = zeros("enc.emb_ln.beta", h);
    for (std::size_t l = 0; l < config.layers; ++l) {
        const std::string p = "enc.layer" + std::to_string(l) + ".";
        Block b{};
        b.ln1_gamma = ones(p + "ln1.gamma", h);
        b.ln1_beta = zeros(p + "ln1.beta", h);
        b.w_query = normal(p + "attn.w_query", h, h);
        b.b_query = zeros(p + "attn.b_query", h);
        b.w_key = normal(p + "attn.w_key", h, h);
        b.w_value = normal(p + "attn.w_value", h, h);
        b.b_value = zeros(p + "attn.b_value", h);
        b.w_out = normal(p + "attn.w_out", h, h);
        b.b_out = zeros(p + "attn.b_out", h);
        b.ln2_gamma = ones(p + "ln2.gamma", h);
        b.ln2_beta = zeros(p + "ln2.beta", h);
        b.w_ffn_in = normal(p + "ffn.w_in", h, f);
        b.b_ffn_in = zeros(p + "ffn.b_in", f);
        b.w_ffn_out = normal(p + "ffn.w_out", f, h);
        b.b_ffn_out = zeros(p + "ffn.b_out", h);
        e.blocks.push_back(b);
    }
    if (config.layers > 0) {
        e.final_ln_gamma = ones("enc.final_ln.gamma", h);
        e.final_ln_beta = zeros("enc.final_ln.beta", h);
    }
    e.head_weight = normal("head.weight", h, n_labels);
    e.head_bias = zeros("head.bias", n_labels);
    return e;
}

Encoder Encoder::bind(const ParameterStore& store, const EncoderConfig& config, std::size_t n_labels) {
    config.validate();
    std::unordered_map<std::string, std::size_t> at;
    for (std::size_t i = 0; i < store.size(); ++i) at.emplace(store[i].name, i);
    auto get = [&](const std::string& name, std::size_t rows, std::size_t cols) {
        auto it = at.find(name);
        if (it == at.end()) throw std::invalid_argument("missing parameter " + name);
        const auto& v = store[it->second].value;
        if (v.rows != rows || v.cols != cols)
            throw std::invalid_argument("parameter " + name + " has the wrong shape");
        return it->second;
    };
    const std::size_t h = config.hidden;
    const std::size_t f = h * config.ffn_mult;
    Encoder e;
    e.config = config;
    e.n_labels = n_labels;
    e.word = get("enc.word", config.vocab_size, h);
    e.position = get("enc.position", config.max_len, h);
    e.segment = get("enc.segment", 2, h);
    e.emb_ln_gamma = get("enc.emb_ln.gamma", 1, h);
    e.emb_ln_beta = get("enc.emb_ln.beta", 1, h);
    for (std::size_t l = 0; l < config.layers; ++l) {
        const std::string p = "enc.layer" + std::to_string(l) + ".";
        Block b{};
        b.ln1_gamma = get(p + "ln1.gamma", 1, h);
        b.ln1_beta = get(p + "ln1.beta", 1, h);
        b.w_query = get(p + "attn.w_query", h, h);
        b.b_query = get(p + "attn.b_query", 1, h);
        b.w_key = get(p + "attn.w_key", h, h);
        b.w_value = get(p + "attn.w_value", h, h);
        b.b_value = get(p + "attn.b_value", 1, h);
        b.w_out = get(p + "attn.w_out", h, h);
        b.b_out = get(p + "attn.b_out", 1, h);
        b.ln2_gamma = get(p + "ln2.gamma", 1, h);
        b.ln2_beta = get(p + "ln2.beta", 1, h);
        b.w_ffn_in = get(p + "ffn.w_in", h, f);
        b.b_ffn_in = get(p + "ffn.b_in", 1, f);
        b.w_ffn_out = get(p + "ffn.w_out", f, h);
        b.b_ffn_out = get(p + "ffn.b_out", 1, h);
        e.blocks.push_back(b);
    }
    if (config.layers > 0) {
        e.final_ln_gamma = get("enc.final_ln.gamma", 1, h);
        e.final_ln_beta = get("enc.final_ln.beta", 1, h);
    }
    e.head_weight = get("head.weight", h, n_labels);
    e.head_bias = get("head.bias", 1, n_labels);
    return e;
}

Var embed_tokens(Tape& tape, ParameterStore& store, const Encoder& enc, const std::vector<std::size_t>& ids) {
    const std::size_t t = ids.size();
    if (t == 0 || t > enc.config.max_len)
        throw std::invalid_argument("embed_tokens: sequence length " + std::to_string(t) + " outside [1, " +
                                    std::to_string(enc.config.max_len) + "]");
    for (std::size_t id : ids)
        if (id >= enc.config.vocab_size) throw std::invalid_argument("embed_tokens: token id " + std::to_string(id) + " out of range");
    std::vector<std::size_t> positions(t);
    for (std::size_t i = 0; i < t; ++i) positions[i] = i;
    const Var word = tape.gather_rows(tape.parameter(store[enc.word]), ids);
    const Var pos = tape.gather_rows(tape.parameter(store[enc.position]), std::move(positions));
    const Var seg = tape.gather_rows(tape.parameter(store[enc.segment]), std::vector<std::size_t>(t, 0));
    return tape.add(tape.add(word, pos), seg);
}

namespace {

Var linear(Tape& tape, ParameterStore& store, Var x, std::size_t w, std::size_t b) {
    return tape.add_row(tape.matmul(x, tape.parameter(store[w])), tape.parameter(store[b]));
}

Var norm(Tape& tape, ParameterStore& store, Var x, std::size_t gamma, std::size_t beta) {
    return tape.layer_norm(x, tape.parameter(store[gamma]), tape.parameter(store[beta]));
}

Var self_attention(Tape& tape, ParameterStore& store, const Encoder::Block& b, Var x, std::size_t heads) {
    const std::size_t h = tape.value(x).cols;
    const std::size_t d = h / heads;
    const double scale = 1.0 / std::sqrt(static_cast<double>(d));
    const Var q = linear(tape, store, x, b.w_query, b.b_query);
    const Var k = tape.matmul(x, tape.parameter(store[b.w_key]));
    const Var v = linear(tape, store, x, b.w_value, b.b_value);
    std::vector<Var> contexts;
    contexts.reserve(heads);
    for (std::size_t head = 0; head < heads; ++head) {
        const std::size_t lo = head * d;
        const Var qh = tape.slice_cols(q, lo, lo + d);
        const Var kh = tape.slice_cols(k, lo, lo + d);
        const Var vh = tape.slice_cols(v, lo, lo + d);
        const Var scores = tape.scale(tape.matmul(qh, tape.transpose(kh)), scale);
        contexts.push_back(tape.matmul(tape.softmax_rows(scores), vh));
    }
    const Var ctx = heads == 1 ? contexts[0] : tape.concat_cols(contexts);
    return linear(tape, store, ctx, b.w_out, b.b_out);
}

}  // namespace

Var encode(Tape& tape, ParameterStore& store, const Encoder& enc, Var combined) {
    const auto& cfg = enc.config;
    if (tape.value(combined).cols != cfg.hidden || tape.value(combined).rows > cfg.max_len)
        throw std::invalid_argument("encode: input shape does not match the encoder config");
    Var x = tape.dropout(norm(tape, store, combined, enc.emb_ln_gamma, enc.emb_ln_beta), cfg.dropout);
    for (const auto& b : enc.blocks) {
        const Var attn = self_attention(tape, store, b, norm(tape, store, x, b.ln1_gamma, b.ln1_beta), cfg.heads);
        x = tape.add(x, tape.dropout(attn, cfg.dropout));
        const Var hidden = tape.gelu(linear(tape, store, norm(tape, store, x, b.ln2_gamma, b.ln2_beta), b.w_ffn_in, b.b_ffn_in));
        x = tape.add(x, tape.dropout(linear(tape, store, hidden, b.w_ffn_out, b.b_ffn_out), cfg.dropout));
    }
    if (!enc.blocks.empty()) x = norm(tape, store, x, enc.final_ln_gamma, enc.final_ln_beta);
    return x;
}

Var classify(Tape& tape, ParameterStore& store, const Encoder& enc, Var cls_repr) {
    return linear(tape, store, cls_repr, enc.head_weight, enc.head_bias);
}

}  // namespace annoembed
